use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nndm_synth::nn::NeuralDynamics;
use nndm_synth::pipeline::{
    build_abstraction, emit_outputs, run_pipeline, simulate_path, write_rows_jsonl,
    write_trace_csv, Outcome, PipelineConfig,
};
use nndm_synth::Result;

#[derive(Parser)]
#[command(version, about = "Abstraction-based controller synthesis for neural network dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig> {
        let mut config = PipelineConfig::load(&self.config)?;
        if self.threads.is_some() {
            config.threads = self.threads;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the interval abstraction and dump its rows.
    Abstract(Common),
    /// Abstraction and synthesis, without refinement.
    Synthesize(Common),
    /// Synthesis followed by refinement rounds.
    Refine {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Synthesise, then simulate the closed loop from a start point.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Start state, comma separated, in original coordinates.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        start: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        horizon: usize,
        /// Number of simulated paths; the first is written to trace.csv.
        #[arg(long, default_value_t = 1)]
        trials: usize,
    },
    /// Full pipeline including Monte Carlo validation when configured.
    Run(Common),
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| nndm_synth::Error::Io {
        path: dir.into(),
        source: e,
    })
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Abstract(common) => {
            let config = common.load()?;
            let nd = NeuralDynamics::load(&config.network)?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(config.threads.unwrap_or(0))
                .build()
                .map_err(|e| nndm_synth::Error::Config(e.to_string()))?;
            let abstraction = pool.install(|| build_abstraction(&nd, &config))?;
            create_dir(&common.out)?;
            write_rows_jsonl(&abstraction, common.out.join("rows.jsonl"))?;
            println!(
                "{} cells x {} actions, rows written to {}",
                abstraction.grid().num_cells(),
                abstraction.num_actions(),
                common.out.join("rows.jsonl").display()
            );
        }
        Command::Synthesize(common) => {
            let mut config = common.load()?;
            config.refinement.rounds = 0;
            config.validation.trials = 0;
            report(&run_pipeline(&config)?, &common.out)?;
        }
        Command::Refine { common, rounds } => {
            let mut config = common.load()?;
            if let Some(r) = rounds {
                config.refinement.rounds = r;
            }
            config.validation.trials = 0;
            report(&run_pipeline(&config)?, &common.out)?;
        }
        Command::Simulate {
            common,
            start,
            horizon,
            trials,
        } => {
            let mut config = common.load()?;
            config.validation.trials = 0;
            let run = run_pipeline(&config)?;
            let controller = run.controller();
            let noise = run.noise()?;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut accepted = 0;
            for k in 0..trials.max(1) {
                let trace = simulate_path(&run.nd, &noise, &controller, &start, horizon, &mut rng);
                if k == 0 {
                    create_dir(&common.out)?;
                    write_trace_csv(&trace, run.nd.actions(), common.out.join("trace.csv"))?;
                    println!("first path: {:?} after {} steps", trace.outcome, trace.steps());
                }
                accepted += usize::from(trace.outcome == Outcome::Accepted);
            }
            println!("satisfied {accepted}/{} paths", trials.max(1));
        }
        Command::Run(common) => {
            let config = common.load()?;
            let run = run_pipeline(&config)?;
            report(&run, &common.out)?;
            if let Some(v) = &run.validation {
                println!("validation: {} regions, {} flagged", v.regions.len(), v.flagged);
            }
        }
    }
    Ok(())
}

fn report(run: &nndm_synth::pipeline::PipelineRun, out: &Path) -> Result<()> {
    emit_outputs(run, out)?;
    let (yes, no, unknown) = run.result.counts();
    println!(
        "{} regions: {yes} yes, {no} no, {unknown} undecided; mean width {:.4}; outputs in {}",
        run.result.regions.len(),
        run.result.mean_width(),
        out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
