//! Full pipeline on the planar benchmark: abstraction, synthesis, a few
//! refinement rounds, and the output files.
//!
//! cargo run --release --example planar_reach_avoid -- [out_dir] [rounds]

use nndm_synth::fixtures::planar_reach_avoid;
use nndm_synth::pipeline::{emit_outputs, run_pipeline_with};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "target/planar".into());
    let rounds: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);

    let (nd, mut config) = planar_reach_avoid(7);
    config.refinement.rounds = rounds;
    config.refinement.n_ref_fraction = Some(0.05);

    let run = run_pipeline_with(nd, &config)?;
    let (yes, no, unknown) = run.result.counts();
    println!(
        "cells {} | product states {} | sweeps {}",
        run.abstraction.grid().num_cells(),
        run.synthesis.product.imdp.num_states(),
        run.synthesis.sweeps
    );
    println!("yes {yes} / no {no} / ? {unknown}");
    println!(
        "mean width {:.4} -> {:.4} after {} rounds",
        run.initial_mean_width,
        run.result.mean_width(),
        run.log.len()
    );
    for r in run.result.regions.iter().take(8) {
        println!(
            "  region {:>3} [{:.3}, {:.3}] {}",
            r.id, r.p_lower, r.p_upper, r.action
        );
    }
    emit_outputs(&run, &out)?;
    println!("wrote {out}");
    Ok(())
}
