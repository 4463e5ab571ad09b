//! Visit two goal regions in either order while avoiding an obstacle.
//!
//! cargo run --release --example two_goals -- [out_dir]

use nndm_synth::fixtures::planar_two_goals;
use nndm_synth::pipeline::{emit_outputs, run_pipeline_with};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/two_goals".into());
    let (nd, config) = planar_two_goals(7);
    let run = run_pipeline_with(nd, &config)?;
    println!("automaton states: {:?}", run.dfa.state_names());
    let (yes, no, unknown) = run.result.counts();
    println!(
        "{} regions, {} product states: yes {yes} / no {no} / ? {unknown}",
        run.result.regions.len(),
        run.synthesis.product.imdp.num_states()
    );
    emit_outputs(&run, &out)?;
    println!("wrote {out}");
    Ok(())
}
