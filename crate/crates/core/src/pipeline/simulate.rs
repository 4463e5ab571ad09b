use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::nn::{GaussianNoise, NeuralDynamics};

use super::strategy::{Controller, Observation};
use super::CertifiedResult;

/// Two-sided 99% normal quantile.
const Z_99: f64 = 2.575_829_303_548_900_4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Accepted,
    Rejected,
    Exited,
    Undecided,
}

/// One closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub outcome: Outcome,
    /// Visited states, starting with `x0`.
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
}

impl Trace {
    pub fn steps(&self) -> usize {
        self.actions.len()
    }
}

/// Simulates the closed loop from `x0` until the automaton decides, the
/// state leaves the domain, or `horizon` steps have been taken.
pub fn simulate_path<R: Rng + ?Sized>(
    nd: &NeuralDynamics,
    noise: &GaussianNoise,
    controller: &Controller,
    x0: &[f64],
    horizon: usize,
    rng: &mut R,
) -> Trace {
    let mut states = vec![x0.to_vec()];
    let mut actions = Vec::new();
    let mut obs = controller.start(x0);
    loop {
        let current = match obs {
            Observation::Running(s) => s,
            Observation::Accepted => break,
            Observation::Rejected => break,
            Observation::Exited => break,
        };
        if actions.len() >= horizon {
            break;
        }
        let a = controller.action(current);
        let x = nd.sample_step_with(a, states.last().expect("non-empty"), noise, rng);
        obs = controller.advance(current, &x);
        actions.push(a);
        states.push(x);
    }
    let outcome = match obs {
        Observation::Running(_) => Outcome::Undecided,
        Observation::Accepted => Outcome::Accepted,
        Observation::Rejected => Outcome::Rejected,
        Observation::Exited => Outcome::Exited,
    };
    Trace {
        outcome,
        states,
        actions,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub trials: usize,
    /// Successes within this horizon are tested against the upper bound.
    pub horizon: usize,
    /// Successes within this horizon are tested against the lower bound.
    pub long_horizon: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRegionReport {
    pub region: usize,
    pub p_lower: f64,
    pub p_upper: f64,
    pub trials: usize,
    pub successes: usize,
    pub successes_long: usize,
    pub frequency: f64,
    pub frequency_long: f64,
    pub ci: (f64, f64),
    pub ci_long: (f64, f64),
    /// The confidence intervals contradict `[p̌, p̂]`.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub regions: Vec<McRegionReport>,
    pub flagged: usize,
}

/// Wilson score interval at 99% confidence.
pub fn wilson(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z_99 * Z_99;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z_99 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent stream per `(seed, region, trial)`, so results do not depend
/// on how trials are scheduled across threads.
pub fn trial_seed(seed: u64, region: usize, trial: usize) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ region as u64) ^ trial as u64)
}

/// `count` distinct cells drawn from `0..cells`, ascending.
pub fn sample_start_regions(cells: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ 0x5eed));
    let mut picked = sample(&mut rng, cells, count.min(cells)).into_vec();
    picked.sort_unstable();
    picked
}

/// Uniform point of a cell, in original coordinates.
pub fn sample_in_cell<R: Rng + ?Sized>(controller: &Controller, region: usize, rng: &mut R) -> Vec<f64> {
    let cell = controller.grid.cell(region);
    let z: Vec<f64> = (0..cell.dim())
        .map(|l| cell.lo[l] + rng.random::<f64>() * (cell.hi[l] - cell.lo[l]))
        .collect();
    controller.transform.apply_inverse(&z)
}

/// Empirical satisfaction frequencies from uniformly drawn starts in each
/// listed region, compared against the certified bounds.
///
/// A region is flagged when the interval for runs decided within the long
/// horizon lies entirely below `p̌`, or the interval for the short horizon
/// lies entirely above `p̂`. Truncation only lowers frequencies, so both
/// tests err on the side of not flagging.
pub fn validate_monte_carlo(
    nd: &NeuralDynamics,
    noise: &GaussianNoise,
    controller: &Controller,
    result: &CertifiedResult,
    regions: &[usize],
    options: &McOptions,
) -> McReport {
    let reports: Vec<McRegionReport> = regions
        .iter()
        .map(|&q| {
            let steps: Vec<Option<usize>> = (0..options.trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(options.seed, q, t));
                    let x0 = sample_in_cell(controller, q, &mut rng);
                    let trace =
                        simulate_path(nd, noise, controller, &x0, options.long_horizon, &mut rng);
                    (trace.outcome == Outcome::Accepted).then(|| trace.steps())
                })
                .collect();
            let successes = steps.iter().flatten().filter(|&&s| s <= options.horizon).count();
            let successes_long = steps.iter().flatten().count();
            let n = options.trials.max(1) as f64;
            let ci = wilson(successes, options.trials);
            let ci_long = wilson(successes_long, options.trials);
            let r = &result.regions[q];
            McRegionReport {
                region: q,
                p_lower: r.p_lower,
                p_upper: r.p_upper,
                trials: options.trials,
                successes,
                successes_long,
                frequency: successes as f64 / n,
                frequency_long: successes_long as f64 / n,
                ci,
                ci_long,
                flagged: ci_long.1 < r.p_lower - 1e-9 || ci.0 > r.p_upper + 1e-9,
            }
        })
        .collect();
    let flagged = reports.iter().filter(|r| r.flagged).count();
    McReport {
        regions: reports,
        flagged,
    }
}
