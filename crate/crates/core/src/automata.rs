//! Finite automata over label sets and the IMDP × DFA product.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::LabelSet;
use crate::imdp::{Imdp, TransitionBoundRow};

/// Reserved proposition carried by the out-of-domain state.
pub const UNSAFE: &str = "unsafe";

const MAX_PROPOSITIONS: usize = 16;

/// Deterministic automaton with a total transition table indexed by
/// `(state, subset of ap)`; subsets are bitmasks over `ap` positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dfa {
    states: Vec<String>,
    initial: usize,
    accepting: Vec<bool>,
    ap: Vec<String>,
    table: Vec<usize>,
    dead: Vec<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum EdgeFile {
    When {
        from: String,
        when: Vec<String>,
        to: String,
    },
    Default {
        from: String,
        default: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DfaFile {
    states: Vec<String>,
    initial: String,
    accepting: Vec<String>,
    ap: Vec<String>,
    transitions: Vec<EdgeFile>,
}

impl Dfa {
    /// Builds a DFA from a successor function over subsets of `ap`.
    pub fn from_fn(
        states: Vec<String>,
        initial: usize,
        accepting: Vec<bool>,
        ap: Vec<String>,
        successor: impl Fn(usize, &LabelSet) -> usize,
    ) -> Result<Self> {
        if ap.len() > MAX_PROPOSITIONS {
            return Err(Error::Automaton(format!(
                "at most {MAX_PROPOSITIONS} propositions supported"
            )));
        }
        let subsets = 1usize << ap.len();
        let mut table = Vec::with_capacity(states.len() * subsets);
        for d in 0..states.len() {
            for mask in 0..subsets {
                let next = successor(d, &subset_of(&ap, mask));
                if next >= states.len() {
                    return Err(Error::Automaton(format!("successor {next} out of range")));
                }
                table.push(next);
            }
        }
        Self::from_table(states, initial, accepting, ap, table)
    }

    fn from_table(
        states: Vec<String>,
        initial: usize,
        accepting: Vec<bool>,
        ap: Vec<String>,
        table: Vec<usize>,
    ) -> Result<Self> {
        if states.is_empty() || initial >= states.len() || accepting.len() != states.len() {
            return Err(Error::Automaton("inconsistent state set".into()));
        }
        for (i, s) in states.iter().enumerate() {
            if states[..i].contains(s) {
                return Err(Error::Automaton(format!("duplicate state {s:?}")));
            }
        }
        for (i, p) in ap.iter().enumerate() {
            if ap[..i].contains(p) {
                return Err(Error::Automaton(format!("duplicate proposition {p:?}")));
            }
        }
        let mut dfa = Self {
            states,
            initial,
            accepting,
            ap,
            table,
            dead: Vec::new(),
        };
        dfa.dead = dfa.compute_dead();
        Ok(dfa)
    }

    /// States from which no accepting state is reachable.
    fn compute_dead(&self) -> Vec<bool> {
        let n = self.states.len();
        let subsets = 1usize << self.ap.len();
        let mut alive = self.accepting.clone();
        let mut changed = true;
        while changed {
            changed = false;
            for d in 0..n {
                if !alive[d] && (0..subsets).any(|m| alive[self.table[d * subsets + m]]) {
                    alive[d] = true;
                    changed = true;
                }
            }
        }
        alive.into_iter().map(|a| !a).collect()
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn ap(&self) -> &[String] {
        &self.ap
    }

    pub fn is_accepting(&self, d: usize) -> bool {
        self.accepting[d]
    }

    pub fn is_dead(&self, d: usize) -> bool {
        self.dead[d]
    }

    /// Accepting or dead: the outcome of the run is decided.
    pub fn is_terminal(&self, d: usize) -> bool {
        self.accepting[d] || self.dead[d]
    }

    fn mask(&self, label: &LabelSet) -> Result<usize> {
        let mut mask = 0;
        for p in label {
            let i = self
                .ap
                .iter()
                .position(|a| a == p)
                .ok_or_else(|| Error::UnknownProposition(p.clone()))?;
            mask |= 1 << i;
        }
        Ok(mask)
    }

    pub fn step(&self, d: usize, label: &LabelSet) -> Result<usize> {
        Ok(self.table[(d << self.ap.len()) + self.mask(label)?])
    }

    /// Runs a label trace from the initial state (the first label is consumed).
    pub fn run<'a>(&self, trace: impl IntoIterator<Item = &'a LabelSet>) -> Result<usize> {
        trace.into_iter().try_fold(self.initial, |d, l| self.step(d, l))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: DfaFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            what: "automaton".into(),
            message: e.to_string(),
        })?;
        let index = |name: &str| {
            file.states
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| Error::Automaton(format!("unknown state {name:?}")))
        };
        let n = file.states.len();
        if file.ap.len() > MAX_PROPOSITIONS {
            return Err(Error::Automaton(format!(
                "at most {MAX_PROPOSITIONS} propositions supported"
            )));
        }
        let subsets = 1usize << file.ap.len();
        let mut table = vec![usize::MAX; n * subsets];
        let mut defaults = vec![None; n];
        for edge in &file.transitions {
            match edge {
                EdgeFile::When { from, when, to } => {
                    let (d, t) = (index(from)?, index(to)?);
                    let mut mask = 0;
                    for p in when {
                        let i = file
                            .ap
                            .iter()
                            .position(|a| a == p)
                            .ok_or_else(|| Error::UnknownProposition(p.clone()))?;
                        mask |= 1 << i;
                    }
                    let slot = &mut table[d * subsets + mask];
                    if *slot != usize::MAX && *slot != t {
                        return Err(Error::Automaton(format!(
                            "conflicting transitions from {from:?} on {when:?}"
                        )));
                    }
                    *slot = t;
                }
                EdgeFile::Default { from, default } => {
                    defaults[index(from)?] = Some(index(default)?);
                }
            }
        }
        for d in 0..n {
            for mask in 0..subsets {
                let slot = &mut table[d * subsets + mask];
                if *slot == usize::MAX {
                    *slot = defaults[d].ok_or_else(|| Error::PartialTransition {
                        state: file.states[d].clone(),
                        subset: subset_of(&file.ap, mask).into_iter().collect::<Vec<_>>().join(", "),
                    })?;
                }
            }
        }
        let mut accepting = vec![false; n];
        for a in &file.accepting {
            accepting[index(a)?] = true;
        }
        let initial = index(&file.initial)?;
        Self::from_table(file.states, initial, accepting, file.ap, table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Serialises with one default edge per state (its most frequent
    /// successor) plus explicit edges for the remaining subsets.
    pub fn to_json_string(&self) -> String {
        let subsets = 1usize << self.ap.len();
        let mut transitions = Vec::new();
        for d in 0..self.states.len() {
            let row = &self.table[d * subsets..(d + 1) * subsets];
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for &t in row {
                *counts.entry(t).or_default() += 1;
            }
            let default = counts
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(&t, _)| t)
                .unwrap_or(d);
            for (mask, &t) in row.iter().enumerate() {
                if t != default {
                    transitions.push(EdgeFile::When {
                        from: self.states[d].clone(),
                        when: subset_of(&self.ap, mask).into_iter().collect(),
                        to: self.states[t].clone(),
                    });
                }
            }
            transitions.push(EdgeFile::Default {
                from: self.states[d].clone(),
                default: self.states[default].clone(),
            });
        }
        let file = DfaFile {
            states: self.states.clone(),
            initial: self.states[self.initial].clone(),
            accepting: (0..self.states.len())
                .filter(|&d| self.accepting[d])
                .map(|d| self.states[d].clone())
                .collect(),
            ap: self.ap.clone(),
            transitions,
        };
        serde_json::to_string_pretty(&file).expect("automaton serialises")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    /// Automaton accepting every trace.
    pub fn accept_all(ap: Vec<String>) -> Result<Self> {
        Self::from_fn(vec!["ok".into()], 0, vec![true], ap, |_, _| 0)
    }
}

fn subset_of(ap: &[String], mask: usize) -> LabelSet {
    ap.iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, p)| p.clone())
        .collect()
}

fn role<'a>(labels: &'a BTreeMap<String, String>, key: &str) -> Result<&'a String> {
    labels
        .get(key)
        .ok_or_else(|| Error::Automaton(format!("template needs a label for {key:?}")))
}

/// Built-in automata.
///
/// * `reach_avoid` (roles `O`, `D`): never see `O`, eventually see `D`.
/// * `reach_two_avoid` (roles `O`, `D1`, `D2`): never see `O`, eventually
///   see both `D1` and `D2`, in either order.
///
/// `labels` maps each role to the proposition used in the grid. Leaving the
/// domain (the reserved `unsafe` proposition) is treated like `O`, and an
/// obstacle observation wins over a simultaneous goal.
pub fn template(name: &str, labels: &BTreeMap<String, String>) -> Result<Dfa> {
    match name {
        "reach_avoid" => {
            let o = role(labels, "O")?.clone();
            let g = role(labels, "D")?.clone();
            let ap = dedup_ap(vec![o.clone(), g.clone(), UNSAFE.into()]);
            Dfa::from_fn(
                vec!["trying".into(), "accepted".into(), "dead".into()],
                0,
                vec![false, true, false],
                ap,
                |d, l| match d {
                    0 if l.contains(&o) || l.contains(UNSAFE) => 2,
                    0 if l.contains(&g) => 1,
                    other => other,
                },
            )
        }
        "reach_two_avoid" => {
            let o = role(labels, "O")?.clone();
            let g1 = role(labels, "D1")?.clone();
            let g2 = role(labels, "D2")?.clone();
            let ap = dedup_ap(vec![o.clone(), g1.clone(), g2.clone(), UNSAFE.into()]);
            // 0: none seen, 1: D1 seen, 2: D2 seen, 3: accepted, 4: dead
            Dfa::from_fn(
                vec![
                    "none".into(),
                    "seen_d1".into(),
                    "seen_d2".into(),
                    "accepted".into(),
                    "dead".into(),
                ],
                0,
                vec![false, false, false, true, false],
                ap,
                |d, l| {
                    if d >= 3 {
                        return d;
                    }
                    if l.contains(&o) || l.contains(UNSAFE) {
                        return 4;
                    }
                    let one = d == 1 || l.contains(&g1);
                    let two = d == 2 || l.contains(&g2);
                    match (one, two) {
                        (true, true) => 3,
                        (true, false) => 1,
                        (false, true) => 2,
                        (false, false) => 0,
                    }
                },
            )
        }
        other => Err(Error::Automaton(format!("unknown template {other:?}"))),
    }
}

fn dedup_ap(ap: Vec<String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(ap.len());
    for p in ap {
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

/// Product state: base IMDP state and automaton state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProductState {
    pub region: usize,
    pub dfa: usize,
}

/// Reachable part of the IMDP × DFA product.
#[derive(Debug, Clone)]
pub struct ProductImdp {
    pub imdp: Imdp,
    pub states: Vec<ProductState>,
    pub accepting: Vec<bool>,
    pub sink: Vec<bool>,
    /// Per base state (excluding the unsafe state): index of
    /// `(q, δ(initial, L(q)))`.
    pub initial: Vec<usize>,
    index: Vec<u32>,
    dfa_states: usize,
}

impl ProductImdp {
    pub fn index_of(&self, state: ProductState) -> Option<usize> {
        self.index
            .get(state.region * self.dfa_states + state.dfa)
            .filter(|&&i| i != u32::MAX)
            .map(|&i| i as usize)
    }
}

/// Lifts every row of `imdp` to the product with `dfa`, exploring only
/// states reachable from the initial product states of the regions.
///
/// The automaton steps on the label of the successor. Transitions into
/// `unsafe_state` lead to the sink `(unsafe_state, d)`; accepting and dead
/// product states are absorbing.
pub fn build_product(imdp: &Imdp, dfa: &Dfa, unsafe_state: Option<usize>) -> Result<ProductImdp> {
    let nq = imdp.num_states();
    let nd = dfa.num_states();
    let m = imdp.num_actions();
    if nq.checked_mul(nd).is_none_or(|s| s >= u32::MAX as usize) {
        return Err(Error::Automaton("product too large".into()));
    }
    let is_unsafe = |q: usize| Some(q) == unsafe_state;
    let mut masks = vec![0usize; nq];
    for q in 0..nq {
        if !is_unsafe(q) {
            masks[q] = dfa.mask(imdp.label(q))?;
        }
    }
    let succ = |d: usize, q: usize| dfa.table[(d << dfa.ap.len()) + masks[q]];

    let mut index = vec![u32::MAX; nq * nd];
    let mut states: Vec<ProductState> = Vec::new();
    let mut queue = VecDeque::new();
    let mut visit = |s: ProductState, states: &mut Vec<ProductState>, queue: &mut VecDeque<usize>| {
        let slot = &mut index[s.region * nd + s.dfa];
        if *slot == u32::MAX {
            *slot = states.len() as u32;
            states.push(s);
            queue.push_back(states.len() - 1);
        }
        *slot as usize
    };
    let mut initial = Vec::new();
    for q in (0..nq).filter(|&q| !is_unsafe(q)) {
        let s = ProductState {
            region: q,
            dfa: succ(dfa.initial, q),
        };
        initial.push(visit(s, &mut states, &mut queue));
    }
    let terminal = |s: &ProductState| is_unsafe(s.region) || dfa.is_terminal(s.dfa);
    while let Some(i) = queue.pop_front() {
        let s = states[i];
        if terminal(&s) {
            continue;
        }
        for a in 0..m {
            for b in &imdp.row(s.region, a).entries {
                let d = if is_unsafe(b.target) { s.dfa } else { succ(s.dfa, b.target) };
                visit(
                    ProductState {
                        region: b.target,
                        dfa: d,
                    },
                    &mut states,
                    &mut queue,
                );
            }
        }
    }

    let accepting: Vec<bool> = states
        .iter()
        .map(|s| !is_unsafe(s.region) && dfa.is_accepting(s.dfa))
        .collect();
    let sink: Vec<bool> = states
        .iter()
        .zip(&accepting)
        .map(|(s, &acc)| !acc && (is_unsafe(s.region) || dfa.is_dead(s.dfa)))
        .collect();
    let rows: Vec<TransitionBoundRow> = states
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, s)| {
            let index = &index;
            (0..m).map(move |a| {
                if terminal(s) {
                    return TransitionBoundRow::point(i, a, i);
                }
                let base = imdp.row(s.region, a);
                let mut entries: Vec<_> = base
                    .entries
                    .iter()
                    .map(|b| {
                        let d = if is_unsafe(b.target) { s.dfa } else { succ(s.dfa, b.target) };
                        let mut b = *b;
                        b.target = index[b.target * nd + d] as usize;
                        b
                    })
                    .collect();
                entries.sort_by_key(|b| b.target);
                TransitionBoundRow {
                    source: i,
                    action: a,
                    entries,
                    tail: base.tail,
                }
            })
        })
        .collect();
    let labels: Vec<LabelSet> = states.iter().map(|s| imdp.label(s.region).clone()).collect();
    let product = Imdp::new(states.len(), imdp.action_names().to_vec(), rows, labels)?;
    Ok(ProductImdp {
        imdp: product,
        states,
        accepting,
        sink,
        initial,
        index,
        dfa_states: nd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    fn set(props: &[&str]) -> LabelSet {
        props.iter().map(|p| p.to_string()).collect()
    }

    #[test]
    fn reach_avoid_traces() {
        let dfa = template("reach_avoid", &labels(&[("O", "O"), ("D", "D")])).unwrap();
        assert_eq!(dfa.num_states(), 3);
        let d = dfa.run(&[set(&[]), set(&[]), set(&["D"])]).unwrap();
        assert!(dfa.is_accepting(d));
        let d = dfa.run(&[set(&[]), set(&["O"]), set(&["D"])]).unwrap();
        assert!(dfa.is_dead(d));
        let d = dfa.run(&[set(&["O", "D"])]).unwrap();
        assert!(dfa.is_dead(d));
    }

    #[test]
    fn reach_two_avoid_traces() {
        let dfa = template(
            "reach_two_avoid",
            &labels(&[("O", "O"), ("D1", "D1"), ("D2", "D2")]),
        )
        .unwrap();
        assert_eq!(dfa.num_states(), 5);
        let d = dfa.run(&[set(&["D1"]), set(&[]), set(&["D2"])]).unwrap();
        assert!(dfa.is_accepting(d));
        let d = dfa.run(&[set(&["D1"]), set(&["O"])]).unwrap();
        assert!(dfa.is_dead(d));
    }

    #[test]
    fn missing_role_is_an_error() {
        assert!(template("reach_avoid", &labels(&[("O", "O")])).is_err());
        assert!(template("nope", &labels(&[])).is_err());
    }

    #[test]
    fn partial_transition_names_state() {
        let text = r#"{"states":["a","b"],"initial":"a","accepting":["b"],"ap":["p"],
            "transitions":[{"from":"a","when":["p"],"to":"b"},{"from":"b","default":"b"}]}"#;
        match Dfa::from_json_str(text) {
            Err(Error::PartialTransition { state, .. }) => assert_eq!(state, "a"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_proposition_rejected() {
        let text = r#"{"states":["a"],"initial":"a","accepting":["a"],"ap":["p"],
            "transitions":[{"from":"a","when":["q"],"to":"a"},{"from":"a","default":"a"}]}"#;
        assert!(matches!(Dfa::from_json_str(text), Err(Error::UnknownProposition(_))));
    }

    #[test]
    fn json_round_trip() {
        let dfa = template("reach_avoid", &labels(&[("O", "obs"), ("D", "goal")])).unwrap();
        let back = Dfa::from_json_str(&dfa.to_json_string()).unwrap();
        assert_eq!(dfa, back);
    }
}
