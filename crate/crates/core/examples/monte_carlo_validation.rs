//! Checks certified bounds against closed-loop simulation.
//!
//! cargo run --release --example monte_carlo_validation -- [trials]

use nndm_synth::fixtures::planar_reach_avoid;
use nndm_synth::pipeline::run_pipeline_with;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trials: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(2000);
    let (nd, mut config) = planar_reach_avoid(7);
    config.validation.trials = trials;
    config.validation.regions = 10;
    let run = run_pipeline_with(nd, &config)?;
    let report = run.validation.as_ref().expect("validation enabled");
    println!("region   [p_lo,   p_hi]    freq   99% CI");
    for r in &report.regions {
        println!(
            "{:>6}   [{:.3}, {:.3}]   {:.3}   [{:.3}, {:.3}]{}",
            r.region,
            r.p_lower,
            r.p_upper,
            r.frequency_long,
            r.ci_long.0,
            r.ci_long.1,
            if r.flagged { "  FLAGGED" } else { "" }
        );
    }
    println!("{} of {} regions flagged", report.flagged, report.regions.len());
    Ok(())
}
