//! Refinement rounds driven by hand, printing which cells get split.
//!
//! cargo run --release --example refinement -- [rounds]

use nndm_synth::fixtures::planar_reach_avoid;
use nndm_synth::pipeline::{build_abstraction, synthesize, CertifiedResult};
use nndm_synth::refine::{refine_round, RefinementConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rounds: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let (nd, config) = planar_reach_avoid(7);
    let dfa = config.spec.automaton()?;
    let refinement = RefinementConfig {
        n_ref_fraction: Some(0.05),
        ..RefinementConfig::default()
    };

    let mut abs = build_abstraction(&nd, &config)?;
    let mut syn = synthesize(&abs, &dfa, config.vi_options())?;
    let width = |abs: &_, syn: &_| CertifiedResult::new(abs, syn, config.threshold).mean_width();
    println!("round 0: {} cells, mean width {:.4}", abs.grid().num_cells(), width(&abs, &syn));

    for round in 1..=rounds {
        let cells = abs.grid().num_cells();
        let (lo, hi): (Vec<f64>, Vec<f64>) = (0..cells).map(|q| syn.region_bounds(q)).unzip();
        let outcome = refine_round(&mut abs, &nd, &syn.base, &lo, &hi, &refinement)?;
        if outcome.delta.splits.is_empty() {
            println!("nothing left to split");
            break;
        }
        syn = synthesize(&abs, &dfa, config.vi_options())?;
        let splits: Vec<String> = outcome
            .delta
            .splits
            .iter()
            .map(|(p, _, d)| format!("{p}/x{d}"))
            .collect();
        println!(
            "round {round}: split {} ({} rows recomputed), {} cells, mean width {:.4}",
            splits.join(" "),
            outcome.delta.dirty.len(),
            abs.grid().num_cells(),
            width(&abs, &syn)
        );
    }
    Ok(())
}
