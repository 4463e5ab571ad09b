//! Three-dimensional overtaking benchmark with seven actions and 4×50 ReLU
//! networks: times abstraction and synthesis on a 1600-cell grid.
//!
//! cargo run --release --example car_scalability -- [refinement_rounds]

use std::time::Instant;

use nndm_synth::fixtures::car_overtake;
use nndm_synth::pipeline::run_pipeline_with;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rounds: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(0);
    let (nd, mut config) = car_overtake(3);
    config.refinement.rounds = rounds;
    config.refinement.n_ref_fraction = Some(0.02);

    let clock = Instant::now();
    let run = run_pipeline_with(nd, &config)?;
    let (yes, no, unknown) = run.result.counts();
    println!("cells            {}", run.abstraction.grid().num_cells());
    println!("product states   {}", run.synthesis.product.imdp.num_states());
    println!(
        "abstraction      {:.1}s\nsynthesis        {:.1}s\nrefinement       {:.1}s",
        run.times.abstraction_s, run.times.synthesis_s, run.times.refinement_s
    );
    println!("sweeps           {} (converged: {})", run.synthesis.sweeps, run.synthesis.converged);
    println!("classes          yes {yes} / no {no} / ? {unknown}");
    println!("mean width       {:.4}", run.result.mean_width());
    println!("total            {:.1}s", clock.elapsed().as_secs_f64());
    Ok(())
}
