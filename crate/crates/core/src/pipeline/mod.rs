//! End-to-end orchestration: abstraction, synthesis, refinement, validation.

mod config;
mod output;
mod simulate;
mod strategy;

pub use config::{DomainConfig, PipelineConfig, SpecConfig, ValidationConfig};
pub use output::{emit_outputs, regions_csv, summary_json, write_rows_jsonl, write_trace_csv};
pub use simulate::{
    sample_in_cell, sample_start_regions, simulate_path, trial_seed, validate_monte_carlo, wilson,
    McOptions, McRegionReport, McReport, Outcome, Trace,
};
pub use strategy::{map_strategy, Controller, Observation, SwitchingStrategy};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::abstraction::Abstraction;
use crate::automata::{build_product, Dfa, ProductImdp};
use crate::error::{Error, Result};
use crate::geometry::{build_grid, LabelSet, Transform};
use crate::imdp::{evaluate_strategy, robust_value_iteration, Imdp, Mode, RobustStrategy, ViOptions};
use crate::nn::{GaussianNoise, NeuralDynamics};
use crate::refine::refine_round;
use crate::transition::RowOptions;

/// Product-level synthesis outcome.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub base: Imdp,
    pub product: ProductImdp,
    pub strategy: RobustStrategy,
    /// Worst-case satisfaction under the strategy, per product state.
    pub lower: Vec<f64>,
    /// Best-case satisfaction under the strategy, per product state.
    pub upper: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

impl Synthesis {
    /// `(p̌, p̂)` of a region at its initial automaton state.
    pub fn region_bounds(&self, region: usize) -> (f64, f64) {
        let i = self.product.initial[region];
        (self.lower[i], self.upper[i].max(self.lower[i]))
    }
}

/// Maximin strategy on the product, with the satisfaction bounds it achieves.
///
/// `p̌` is the strategy's value against the minimising adversary, which is
/// never below the maximin iterate; `p̂` its value against the maximising one.
pub fn synthesize(abstraction: &Abstraction, dfa: &Dfa, options: ViOptions) -> Result<Synthesis> {
    let base = abstraction.imdp()?;
    let product = build_product(&base, dfa, Some(abstraction.grid().unsafe_id()))?;
    let vi = robust_value_iteration(&product.imdp, &product.accepting, &product.sink, options)?;
    let lower = evaluate_strategy(
        &product.imdp,
        &vi.strategy,
        &product.accepting,
        &product.sink,
        Mode::Minimize,
        options,
    )?;
    let upper = evaluate_strategy(
        &product.imdp,
        &vi.strategy,
        &product.accepting,
        &product.sink,
        Mode::Maximize,
        options,
    )?;
    Ok(Synthesis {
        base,
        product,
        strategy: vi.strategy,
        lower: lower.values,
        upper: upper.values,
        sweeps: vi.sweeps,
        converged: vi.converged && lower.converged && upper.converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Class {
    #[serde(rename = "yes")]
    Yes,
    #[serde(rename = "no")]
    No,
    #[serde(rename = "?")]
    Unknown,
}

impl Class {
    pub fn of(p_lower: f64, p_upper: f64, threshold: f64) -> Self {
        if p_lower >= threshold {
            Class::Yes
        } else if p_upper < threshold {
            Class::No
        } else {
            Class::Unknown
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Class::Yes => "yes",
            Class::No => "no",
            Class::Unknown => "?",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionResult {
    pub id: usize,
    /// Rectangular hull of the cell's preimage.
    pub lo_original: Vec<f64>,
    pub hi_original: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub label: LabelSet,
    pub p_lower: f64,
    pub p_upper: f64,
    pub action: String,
    pub class: Class,
    /// Cell volume in transformed coordinates.
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifiedResult {
    pub threshold: f64,
    pub regions: Vec<RegionResult>,
}

impl CertifiedResult {
    pub fn new(abstraction: &Abstraction, synthesis: &Synthesis, threshold: f64) -> Self {
        let grid = abstraction.grid();
        let t = abstraction.transform();
        let names = abstraction.action_names();
        let regions = (0..grid.num_cells())
            .map(|q| {
                let cell = grid.cell(q);
                let original = t.preimage_rect(cell);
                let (p_lower, p_upper) = synthesis.region_bounds(q);
                let i = synthesis.product.initial[q];
                RegionResult {
                    id: q,
                    lo_original: original.lo,
                    hi_original: original.hi,
                    lo: cell.lo.clone(),
                    hi: cell.hi.clone(),
                    label: grid.label(q).clone(),
                    p_lower,
                    p_upper,
                    action: names[synthesis.strategy.choice[i]].clone(),
                    class: Class::of(p_lower, p_upper, threshold),
                    volume: cell.volume(),
                }
            })
            .collect();
        Self { threshold, regions }
    }

    /// `(yes, no, unknown)` counts.
    pub fn counts(&self) -> (usize, usize, usize) {
        let count = |c| self.regions.iter().filter(|r| r.class == c).count();
        (count(Class::Yes), count(Class::No), count(Class::Unknown))
    }

    /// Volume-weighted mean of `p̂ − p̌`.
    pub fn mean_width(&self) -> f64 {
        let total: f64 = self.regions.iter().map(|r| r.volume).sum();
        self.regions
            .iter()
            .map(|r| r.volume * (r.p_upper - r.p_lower))
            .sum::<f64>()
            / total
    }

    pub fn max_width(&self) -> f64 {
        self.regions
            .iter()
            .map(|r| r.p_upper - r.p_lower)
            .fold(0.0, f64::max)
    }
}

/// One line of the refinement log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub split_states: Vec<usize>,
    pub dimensions: Vec<usize>,
    pub states: usize,
    pub dirty_rows: usize,
    pub mean_width: f64,
    pub max_width: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub abstraction_s: f64,
    pub synthesis_s: f64,
    pub refinement_s: f64,
    pub validation_s: f64,
}

/// Everything produced by a pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub config: PipelineConfig,
    pub nd: NeuralDynamics,
    pub dfa: Dfa,
    pub abstraction: Abstraction,
    pub synthesis: Synthesis,
    pub result: CertifiedResult,
    pub switching: SwitchingStrategy,
    /// Result before any refinement.
    pub initial_mean_width: f64,
    pub log: Vec<RoundLog>,
    pub times: StageTimes,
    pub validation: Option<McReport>,
}

impl PipelineRun {
    pub fn controller(&self) -> Controller {
        Controller {
            transform: self.abstraction.transform().clone(),
            grid: self.abstraction.grid().clone(),
            dfa: self.dfa.clone(),
            strategy: self.switching.clone(),
        }
    }

    pub fn noise(&self) -> Result<GaussianNoise> {
        GaussianNoise::new(&self.config.covariance_matrix()?)
    }
}

/// Whitening transform and initial abstraction for a configuration.
pub fn build_abstraction(nd: &NeuralDynamics, config: &PipelineConfig) -> Result<Abstraction> {
    config.validate(nd.dim())?;
    let cov = config.covariance_matrix()?;
    let transform = Transform::mahalanobis(&cov).map_err(|e| e.in_stage("geometry"))?;
    let domain = config.domain_rect()?;
    let grid = build_grid(&domain, &transform, &config.grid, &config.regions)
        .map_err(|e| e.in_stage("geometry"))?;
    let options = RowOptions {
        exact_upper: config.exact_upper,
        ..RowOptions::default()
    };
    Abstraction::build(nd, transform, grid, options).map_err(|e| e.in_stage("abstraction"))
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(f)
}

/// Loads the network named in the config and runs [`run_pipeline_with`].
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineRun> {
    let nd = NeuralDynamics::load(&config.network).map_err(|e| e.in_stage("nn"))?;
    run_pipeline_with(nd, config)
}

/// Abstraction, synthesis, refinement rounds and (if configured) Monte Carlo
/// validation, on a pool of `config.threads` workers.
pub fn run_pipeline_with(nd: NeuralDynamics, config: &PipelineConfig) -> Result<PipelineRun> {
    in_pool(config.threads, || run_stages(nd, config))
}

fn run_stages(nd: NeuralDynamics, config: &PipelineConfig) -> Result<PipelineRun> {
    let mut times = StageTimes::default();
    let dfa = config.spec.automaton().map_err(|e| e.in_stage("automata"))?;
    let vi = config.vi_options();

    let clock = Instant::now();
    let mut abstraction = build_abstraction(&nd, config)?;
    times.abstraction_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let mut synthesis = synthesize(&abstraction, &dfa, vi).map_err(|e| e.in_stage("synthesis"))?;
    times.synthesis_s = clock.elapsed().as_secs_f64();
    let mut result = CertifiedResult::new(&abstraction, &synthesis, config.threshold);
    let initial_mean_width = result.mean_width();

    let clock = Instant::now();
    let mut log = Vec::new();
    for round in 1..=config.refinement.rounds {
        if result.mean_width() < config.refinement.stop_width {
            break;
        }
        let round_clock = Instant::now();
        let cells = abstraction.grid().num_cells();
        let (lower, upper): (Vec<f64>, Vec<f64>) =
            (0..cells).map(|q| synthesis.region_bounds(q)).unzip();
        let outcome = refine_round(
            &mut abstraction,
            &nd,
            &synthesis.base,
            &lower,
            &upper,
            &config.refinement,
        )
        .map_err(|e| e.in_stage("refinement"))?;
        if outcome.delta.splits.is_empty() {
            break;
        }
        synthesis = synthesize(&abstraction, &dfa, vi).map_err(|e| e.in_stage("synthesis"))?;
        result = CertifiedResult::new(&abstraction, &synthesis, config.threshold);
        log.push(RoundLog {
            round,
            split_states: outcome.delta.splits.iter().map(|s| s.0).collect(),
            dimensions: outcome.delta.splits.iter().map(|s| s.2).collect(),
            states: abstraction.grid().num_cells(),
            dirty_rows: outcome.delta.dirty.len(),
            mean_width: result.mean_width(),
            max_width: result.max_width(),
            wall_time_s: round_clock.elapsed().as_secs_f64(),
        });
    }
    times.refinement_s = clock.elapsed().as_secs_f64();

    let switching = map_strategy(
        &synthesis.strategy,
        &synthesis.product,
        &dfa,
        abstraction.grid().unsafe_id(),
    );
    let mut run = PipelineRun {
        config: config.clone(),
        nd,
        dfa,
        abstraction,
        synthesis,
        result,
        switching,
        initial_mean_width,
        log,
        times,
        validation: None,
    };
    if config.validation.trials > 0 {
        let clock = Instant::now();
        run.validation = Some(validate(&run)?);
        run.times.validation_s = clock.elapsed().as_secs_f64();
    }
    Ok(run)
}

/// Monte Carlo check of the certified bounds with the config's settings.
pub fn validate(run: &PipelineRun) -> Result<McReport> {
    let v = &run.config.validation;
    let regions = sample_start_regions(run.result.regions.len(), v.regions, run.config.seed);
    let options = McOptions {
        trials: v.trials,
        horizon: v.horizon,
        long_horizon: v.long_horizon.max(v.horizon),
        seed: run.config.seed,
    };
    Ok(validate_monte_carlo(
        &run.nd,
        &run.noise()?,
        &run.controller(),
        &run.result,
        &regions,
        &options,
    ))
}
