//! Interval MDPs, the ordering-method adversary and robust value iteration.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::LabelSet;

/// Probabilities below this are floored out of the sparse rows.
pub const PROB_FLOOR: f64 = 1e-12;
const FEASIBILITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub target: usize,
    pub lower: f64,
    pub upper: f64,
}

/// Interval bounds of one `(state, action)` pair.
///
/// `tail` is the summed upper bound of targets whose upper bound fell below
/// [`PROB_FLOOR`] and were dropped from `entries`. Adversaries treat it as an
/// extra target with bounds `[0, tail]` whose value is the worst case for
/// their objective, which keeps the row sound without storing every target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionBoundRow {
    pub source: usize,
    pub action: usize,
    /// Sorted by target.
    pub entries: Vec<Bound>,
    pub tail: f64,
}

impl TransitionBoundRow {
    /// Deterministic transition with probability one.
    pub fn point(source: usize, action: usize, target: usize) -> Self {
        Self {
            source,
            action,
            entries: vec![Bound {
                target,
                lower: 1.0,
                upper: 1.0,
            }],
            tail: 0.0,
        }
    }

    pub fn lower_sum(&self) -> f64 {
        self.entries.iter().map(|b| b.lower).sum()
    }

    pub fn upper_sum(&self) -> f64 {
        self.entries.iter().map(|b| b.upper).sum::<f64>() + self.tail
    }

    fn find(&self, target: usize) -> Option<&Bound> {
        self.entries
            .binary_search_by_key(&target, |b| b.target)
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn lower(&self, target: usize) -> f64 {
        self.find(target).map_or(0.0, |b| b.lower)
    }

    pub fn upper(&self, target: usize) -> f64 {
        self.find(target).map_or(0.0, |b| b.upper)
    }

    /// Checks `0 ≤ P̌ ≤ P̂ ≤ 1` per target and `ΣP̌ ≤ 1 ≤ ΣP̂`.
    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Error::InfeasibleRow {
            source_state: self.source,
            action: self.action,
            message,
        };
        if self.entries.windows(2).any(|w| w[0].target >= w[1].target) {
            return Err(fail("targets not strictly increasing".into()));
        }
        for b in &self.entries {
            if !(0.0 <= b.lower && b.lower <= b.upper && b.upper <= 1.0) {
                return Err(fail(format!(
                    "target {}: bounds [{}, {}]",
                    b.target, b.lower, b.upper
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.tail) {
            return Err(fail(format!("tail mass {}", self.tail)));
        }
        let (lo, hi) = (self.lower_sum(), self.upper_sum());
        if lo > 1.0 + FEASIBILITY_SLACK || hi < 1.0 - FEASIBILITY_SLACK {
            return Err(fail(format!("sum of lower {lo}, sum of upper {hi}")));
        }
        Ok(())
    }

    /// Debug dump: `{"source", "action", "lower": {"j": p}, "upper": {...}}`.
    pub fn to_json(&self, action_names: &[String]) -> serde_json::Value {
        let lower: BTreeMap<String, f64> = self
            .entries
            .iter()
            .filter(|b| b.lower > 0.0)
            .map(|b| (b.target.to_string(), b.lower))
            .collect();
        let upper: BTreeMap<String, f64> = self
            .entries
            .iter()
            .map(|b| (b.target.to_string(), b.upper))
            .collect();
        serde_json::json!({
            "source": self.source,
            "action": action_names.get(self.action).cloned().unwrap_or_else(|| self.action.to_string()),
            "lower": lower,
            "upper": upper,
            "tail": self.tail,
        })
    }
}

/// States, actions, interval rows and labels. Row `(s, a)` lives at `s·m + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Imdp {
    num_states: usize,
    action_names: Vec<String>,
    rows: Vec<TransitionBoundRow>,
    labels: Vec<LabelSet>,
}

impl Imdp {
    pub fn new(
        num_states: usize,
        action_names: Vec<String>,
        rows: Vec<TransitionBoundRow>,
        labels: Vec<LabelSet>,
    ) -> Result<Self> {
        let m = action_names.len();
        if m == 0 {
            return Err(Error::Config("IMDP needs at least one action".into()));
        }
        if rows.len() != num_states * m {
            return Err(Error::Config(format!(
                "expected {} rows, got {}",
                num_states * m,
                rows.len()
            )));
        }
        if labels.len() != num_states {
            return Err(Error::Config("one label set per state required".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.source != i / m || row.action != i % m {
                return Err(Error::Config(format!("row {i} is out of place")));
            }
            if let Some(b) = row.entries.iter().find(|b| b.target >= num_states) {
                return Err(Error::Config(format!("row {i} targets unknown state {}", b.target)));
            }
            row.validate()?;
        }
        Ok(Self {
            num_states,
            action_names,
            rows,
            labels,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn row(&self, state: usize, action: usize) -> &TransitionBoundRow {
        &self.rows[state * self.num_actions() + action]
    }

    pub fn rows(&self) -> &[TransitionBoundRow] {
        &self.rows
    }

    pub fn label(&self, state: usize) -> &LabelSet {
        &self.labels[state]
    }

    pub fn labels(&self) -> &[LabelSet] {
        &self.labels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Minimize,
    Maximize,
}

/// Extreme expected value of `values` over feasible distributions of `row`.
pub fn adversary_extreme(row: &TransitionBoundRow, values: &[f64], mode: Mode) -> Result<f64> {
    row.validate()?;
    Ok(adversary_distribution(row, values, mode).0)
}

/// Extreme value together with the optimal distribution; weights follow
/// `row.entries`, with the tail weight last.
///
/// Ordering method: every target starts at its lower bound, then the free
/// mass goes to targets in order of value (best for the adversary first,
/// lower state index first on ties), each up to its upper bound.
pub fn adversary_distribution(
    row: &TransitionBoundRow,
    values: &[f64],
    mode: Mode,
) -> (f64, Vec<f64>) {
    let mut order: Vec<usize> = (0..row.entries.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&row.entries[i], &row.entries[j]);
        let by_value = values[a.target].total_cmp(&values[b.target]);
        let by_value = if mode == Mode::Maximize {
            by_value.reverse()
        } else {
            by_value
        };
        by_value.then(a.target.cmp(&b.target))
    });
    let mut weights: Vec<f64> = row.entries.iter().map(|b| b.lower).collect();
    weights.push(0.0);
    let mut remaining = (1.0 - row.lower_sum()).max(0.0);
    let tail_take = row.tail.min(remaining);
    weights[row.entries.len()] = tail_take;
    remaining -= tail_take;
    for i in order {
        if remaining <= 0.0 {
            break;
        }
        let b = &row.entries[i];
        let add = (b.upper - b.lower).min(remaining);
        weights[i] += add;
        remaining -= add;
    }
    let tail_value = if mode == Mode::Maximize { 1.0 } else { 0.0 };
    let value: f64 = row
        .entries
        .iter()
        .zip(&weights)
        .map(|(b, w)| w * values[b.target])
        .sum::<f64>()
        + weights[row.entries.len()] * tail_value;
    (value.clamp(0.0, 1.0), weights)
}

/// Same value as [`adversary_distribution`], reusing a cached entry order
/// sorted by ascending `(value, target)` and refreshed by insertion sort.
fn extreme_cached(row: &TransitionBoundRow, values: &[f64], mode: Mode, order: &mut Vec<u32>) -> f64 {
    if order.len() != row.entries.len() {
        *order = (0..row.entries.len() as u32).collect();
    }
    let key = |i: u32| {
        let b = &row.entries[i as usize];
        (values[b.target], b.target)
    };
    for i in 1..order.len() {
        let mut j = i;
        while j > 0 {
            let (va, ta) = key(order[j - 1]);
            let (vb, tb) = key(order[j]);
            if va.total_cmp(&vb).then(ta.cmp(&tb)).is_gt() {
                order.swap(j - 1, j);
                j -= 1;
            } else {
                break;
            }
        }
    }
    let mut value = 0.0;
    let mut lower_sum = 0.0;
    for b in &row.entries {
        value += b.lower * values[b.target];
        lower_sum += b.lower;
    }
    let mut remaining = (1.0 - lower_sum).max(0.0);
    let tail_take = row.tail.min(remaining);
    remaining -= tail_take;
    if mode == Mode::Maximize {
        value += tail_take;
    }
    let ordered: Box<dyn Iterator<Item = &u32>> = match mode {
        Mode::Minimize => Box::new(order.iter()),
        Mode::Maximize => Box::new(order.iter().rev()),
    };
    for &i in ordered {
        if remaining <= 0.0 {
            break;
        }
        let b = &row.entries[i as usize];
        let add = (b.upper - b.lower).min(remaining);
        value += add * values[b.target];
        remaining -= add;
    }
    value.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViOptions {
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for ViOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_sweeps: 5000,
        }
    }
}

/// Stationary strategy on (product) states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobustStrategy {
    pub choice: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViResult {
    pub strategy: RobustStrategy,
    /// Entries lie in `[0, 1]`.
    pub values: Vec<f64>,
    pub sweeps: usize,
    /// False when the sweep cap was hit first; values are then still valid
    /// lower approximations (the iteration is monotone from below).
    pub converged: bool,
    pub residual: f64,
}

fn check_sets(imdp: &Imdp, accepting: &[bool], sink: &[bool]) -> Result<()> {
    let n = imdp.num_states();
    if accepting.len() != n || sink.len() != n {
        return Err(Error::Config("accepting/sink masks must cover every state".into()));
    }
    if let Some(s) = (0..n).find(|&s| accepting[s] && sink[s]) {
        return Err(Error::Config(format!("state {s} is both accepting and sink")));
    }
    Ok(())
}

/// Improvement needed before a state switches away from its current action.
const SWITCH_MARGIN: f64 = 1e-14;

/// Maximin reachability: `V(s) = max_a min_γ Σ γ·V` iterated (Jacobi) from
/// the indicator of `accepting`; `sink` states stay at 0.
///
/// A state keeps its current action unless another one is strictly better
/// (lowest index among the best); this prevents the extracted strategy from
/// settling on value-preserving self-loops once values saturate.
pub fn robust_value_iteration(
    imdp: &Imdp,
    accepting: &[bool],
    sink: &[bool],
    options: ViOptions,
) -> Result<ViResult> {
    check_sets(imdp, accepting, sink)?;
    let n = imdp.num_states();
    let m = imdp.num_actions();
    let mut values: Vec<f64> = accepting.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
    let mut choice = vec![0usize; n];
    let mut orders: Vec<Vec<u32>> = vec![Vec::new(); n * m];
    let mut sweeps = 0;
    let mut residual = f64::INFINITY;
    while sweeps < options.max_sweeps {
        sweeps += 1;
        let prev = &values;
        let updates: Vec<(f64, usize)> = orders
            .par_chunks_mut(m)
            .enumerate()
            .map(|(s, orders)| {
                if accepting[s] {
                    return (1.0, choice[s]);
                }
                if sink[s] {
                    return (0.0, choice[s]);
                }
                let q: Vec<f64> = (0..m)
                    .map(|a| extreme_cached(imdp.row(s, a), prev, Mode::Minimize, &mut orders[a]))
                    .collect();
                let mut best = 0;
                for a in 1..m {
                    if q[a] > q[best] {
                        best = a;
                    }
                }
                let current = choice[s];
                let pick = if q[best] > q[current] + SWITCH_MARGIN {
                    best
                } else {
                    current
                };
                (q[pick].max(prev[s]), pick)
            })
            .collect();
        residual = updates
            .iter()
            .zip(&values)
            .map(|((v, _), old)| (v - old).abs())
            .fold(0.0, f64::max);
        for (s, (v, a)) in updates.into_iter().enumerate() {
            values[s] = v;
            choice[s] = a;
        }
        if residual < options.tolerance {
            break;
        }
    }
    Ok(ViResult {
        strategy: RobustStrategy { choice },
        values,
        sweeps,
        converged: residual < options.tolerance,
        residual,
    })
}

/// Value of a fixed strategy against the minimising or maximising adversary.
pub fn evaluate_strategy(
    imdp: &Imdp,
    strategy: &RobustStrategy,
    accepting: &[bool],
    sink: &[bool],
    mode: Mode,
    options: ViOptions,
) -> Result<ViResult> {
    check_sets(imdp, accepting, sink)?;
    let n = imdp.num_states();
    if strategy.choice.len() != n {
        return Err(Error::Config("strategy must cover every state".into()));
    }
    if let Some(&a) = strategy.choice.iter().find(|&&a| a >= imdp.num_actions()) {
        return Err(Error::Config(format!("strategy uses unknown action {a}")));
    }
    let mut values: Vec<f64> = accepting.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
    let mut orders: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut sweeps = 0;
    let mut residual = f64::INFINITY;
    while sweeps < options.max_sweeps {
        sweeps += 1;
        let prev = &values;
        let next: Vec<f64> = orders
            .par_iter_mut()
            .enumerate()
            .map(|(s, order)| {
                if accepting[s] {
                    1.0
                } else if sink[s] {
                    0.0
                } else {
                    extreme_cached(imdp.row(s, strategy.choice[s]), prev, mode, order).max(prev[s])
                }
            })
            .collect();
        residual = next
            .iter()
            .zip(&values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        values = next;
        if residual < options.tolerance {
            break;
        }
    }
    Ok(ViResult {
        strategy: strategy.clone(),
        values,
        sweeps,
        converged: residual < options.tolerance,
        residual,
    })
}

/// Upper satisfaction bound `p̂` of a fixed strategy.
pub fn evaluate_strategy_upper(
    imdp: &Imdp,
    strategy: &RobustStrategy,
    accepting: &[bool],
    sink: &[bool],
    options: ViOptions,
) -> Result<Vec<f64>> {
    evaluate_strategy(imdp, strategy, accepting, sink, Mode::Maximize, options).map(|r| r.values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_target_row() -> TransitionBoundRow {
        TransitionBoundRow {
            source: 0,
            action: 0,
            entries: vec![
                Bound {
                    target: 1,
                    lower: 0.3,
                    upper: 0.7,
                },
                Bound {
                    target: 2,
                    lower: 0.3,
                    upper: 0.7,
                },
            ],
            tail: 0.0,
        }
    }

    #[test]
    fn hand_solved_adversary() {
        let values = [0.0, 1.0, 0.0];
        let row = two_target_row();
        assert!((adversary_extreme(&row, &values, Mode::Minimize).unwrap() - 0.3).abs() < 1e-15);
        assert!((adversary_extreme(&row, &values, Mode::Maximize).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn infeasible_row_rejected() {
        let mut row = two_target_row();
        row.entries[0].upper = 0.4;
        row.entries[1].upper = 0.4;
        assert!(adversary_extreme(&row, &[0.0, 1.0, 0.0], Mode::Minimize).is_err());
    }

    #[test]
    fn tail_is_worst_case() {
        let row = TransitionBoundRow {
            source: 0,
            action: 0,
            entries: vec![Bound {
                target: 0,
                lower: 0.5,
                upper: 1.0,
            }],
            tail: 0.25,
        };
        let v = [0.5];
        let (lo, _) = adversary_distribution(&row, &v, Mode::Minimize);
        let (hi, _) = adversary_distribution(&row, &v, Mode::Maximize);
        assert!((lo - (0.75 * 0.5)).abs() < 1e-15);
        assert!((hi - (0.75 * 0.5 + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn cached_matches_sorted() {
        let row = two_target_row();
        let values = [0.0, 0.2, 0.9];
        for mode in [Mode::Minimize, Mode::Maximize] {
            let mut order = Vec::new();
            let a = extreme_cached(&row, &values, mode, &mut order);
            let b = adversary_distribution(&row, &values, mode).0;
            assert!((a - b).abs() < 1e-15);
        }
    }
}
