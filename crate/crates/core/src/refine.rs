//! Uncertainty-driven refinement of the grid.

use serde::{Deserialize, Serialize};

use crate::abstraction::{Abstraction, SplitDelta};
use crate::error::{Error, Result};
use crate::geometry::HyperRect;
use crate::imdp::Imdp;
use crate::nn::NeuralDynamics;
use crate::relax::LinearBounds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeRule {
    /// Expansion of each cell edge under the bounding matrices; the split
    /// goes along the direction of the most expanded edge.
    #[default]
    Endpoints,
    /// Expansion of the cell diagonal for every vertex pair, returning the
    /// dimension in which the maximising pair agrees.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinementConfig {
    pub n_ref: usize,
    /// When set, overrides `n_ref` with `ceil(fraction · cells)` (at least 1).
    pub n_ref_fraction: Option<f64>,
    pub rounds: usize,
    /// Stop once the volume-weighted mean of `p̂ − p̌` drops below this.
    pub stop_width: f64,
    pub edge_rule: EdgeRule,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            n_ref: 10,
            n_ref_fraction: None,
            rounds: 0,
            stop_width: 0.0,
            edge_rule: EdgeRule::Endpoints,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_ref == 0 && self.n_ref_fraction.is_none() {
            return Err(Error::Config("n_ref must be at least 1".into()));
        }
        if let Some(f) = self.n_ref_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("n_ref_fraction {f} not in (0, 1]")));
            }
        }
        Ok(())
    }

    /// Cells to split per round for a grid of `cells` cells.
    pub fn count(&self, cells: usize) -> usize {
        match self.n_ref_fraction {
            Some(f) => ((f * cells as f64).ceil() as usize).max(1),
            None => self.n_ref,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub state: usize,
    pub score: f64,
}

/// `θ(q) = (p̂(q) − p̌(q)) · Σ_{q', a} (P̂(q', a, q) − P̌(q', a, q))` for every
/// `q < p_lower.len()`, sorted by descending score (lower id first on ties).
pub fn score_states(imdp: &Imdp, p_lower: &[f64], p_upper: &[f64]) -> Vec<ScoreEntry> {
    let n = p_lower.len().min(p_upper.len());
    let mut incoming = vec![0.0; n];
    for row in imdp.rows() {
        for b in &row.entries {
            if b.target < n {
                incoming[b.target] += b.upper - b.lower;
            }
        }
    }
    let mut scores: Vec<ScoreEntry> = (0..n)
        .map(|q| ScoreEntry {
            state: q,
            score: ((p_upper[q] - p_lower[q]).max(0.0) * incoming[q]).max(0.0),
        })
        .collect();
    scores.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.state.cmp(&b.state)));
    scores
}

/// Dimension along which to split `cell`, from the expansion of its edges
/// under every bounding matrix of every action.
pub fn split_dimension(cell: &HyperRect, bounds: &[&LinearBounds], rule: EdgeRule) -> Result<usize> {
    let n = cell.dim();
    if (0..n).all(|l| cell.width(l) <= 0.0) {
        return Err(Error::Refinement("cannot split a degenerate cell".into()));
    }
    let matrices = || bounds.iter().flat_map(|b| [&b.a_lo, &b.a_hi]);
    match rule {
        EdgeRule::Endpoints => {
            // an edge along l has direction e_l, so its expansion is the
            // norm of column l
            let mut best = (f64::NEG_INFINITY, 0);
            for l in (0..n).filter(|&l| cell.width(l) > 0.0) {
                let xi = matrices()
                    .map(|m| m.column(l).norm())
                    .fold(f64::NEG_INFINITY, f64::max);
                if xi > best.0 {
                    best = (xi, l);
                }
            }
            Ok(best.1)
        }
        EdgeRule::Literal => {
            let lo = nalgebra::DVector::from_column_slice(&cell.lo);
            let hi = nalgebra::DVector::from_column_slice(&cell.hi);
            let diag = (&lo - &hi).norm();
            let xi = matrices()
                .map(|m| (m * &lo - m * &hi).norm() / diag)
                .fold(f64::NEG_INFINITY, f64::max);
            let verts = cell.vertices();
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..verts.len() {
                for j in i + 1..verts.len() {
                    if verts[i] != verts[j] && best.is_none_or(|(b, _, _)| xi > b) {
                        best = Some((xi, i, j));
                    }
                }
            }
            let (_, i, j) = best.ok_or_else(|| Error::Refinement("cell has one vertex".into()))?;
            Ok((0..n)
                .find(|&l| verts[i][l] == verts[j][l])
                .or_else(|| (0..n).find(|&l| verts[i][l] != verts[j][l]))
                .unwrap_or(0))
        }
    }
}

/// Outcome of one refinement round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub scores: Vec<ScoreEntry>,
    pub delta: SplitDelta,
}

/// Splits the `config.count(cells)` highest-scoring cells with positive score
/// at the midpoint of their [`split_dimension`]; no-op when every score is 0.
///
/// `p_lower`/`p_upper` are per cell, taken at the initial automaton state.
pub fn refine_round(
    abstraction: &mut Abstraction,
    nd: &NeuralDynamics,
    imdp: &Imdp,
    p_lower: &[f64],
    p_upper: &[f64],
    config: &RefinementConfig,
) -> Result<RoundOutcome> {
    let cells = abstraction.grid().num_cells();
    let scores = score_states(imdp, &p_lower[..cells], &p_upper[..cells]);
    let k = config.count(cells);
    let mut picks = Vec::new();
    for entry in scores.iter().filter(|e| e.score > 0.0).take(k) {
        let q = entry.state;
        let bounds: Vec<&LinearBounds> = (0..abstraction.num_actions())
            .map(|a| abstraction.bounds(q, a))
            .collect();
        let dim = split_dimension(abstraction.grid().cell(q), &bounds, config.edge_rule)?;
        picks.push((q, dim));
    }
    let delta = if picks.is_empty() {
        SplitDelta {
            splits: Vec::new(),
            dirty: Vec::new(),
        }
    } else {
        abstraction.split(nd, &picks)?
    };
    Ok(RoundOutcome { scores, delta })
}
