//! A specification given as an automaton file: reach `D`, then return to
//! the home corner `H`, never touching `O`.
//!
//! cargo run --release --example custom_automaton

use nndm_synth::automata::Dfa;
use nndm_synth::fixtures::planar_reach_avoid;
use nndm_synth::geometry::RegionOfInterest;
use nndm_synth::pipeline::{run_pipeline_with, SpecConfig};

const PATROL: &str = r#"{
  "states": ["to_goal", "to_home", "done", "dead"],
  "initial": "to_goal",
  "accepting": ["done"],
  "ap": ["O", "D", "H", "unsafe"],
  "transitions": [
    {"from": "to_goal", "when": ["O"], "to": "dead"},
    {"from": "to_goal", "when": ["unsafe"], "to": "dead"},
    {"from": "to_goal", "when": ["D"], "to": "to_home"},
    {"from": "to_goal", "default": "to_goal"},
    {"from": "to_home", "when": ["O"], "to": "dead"},
    {"from": "to_home", "when": ["unsafe"], "to": "dead"},
    {"from": "to_home", "when": ["H"], "to": "done"},
    {"from": "to_home", "default": "to_home"},
    {"from": "done", "default": "done"},
    {"from": "dead", "default": "dead"}
  ]
}"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dfa = Dfa::from_json_str(PATROL)?;
    let dir = tempfile_dir()?;
    let path = dir.join("patrol.json");
    dfa.save(&path)?;

    let (nd, mut config) = planar_reach_avoid(7);
    config
        .regions
        .push(RegionOfInterest::new("H", vec![-2.0, -2.0], vec![-1.0, -1.0]));
    config.spec = SpecConfig::File { dfa: path };
    let run = run_pipeline_with(nd, &config)?;

    println!(
        "{} regions, {} product states",
        run.result.regions.len(),
        run.synthesis.product.imdp.num_states()
    );
    let (yes, no, unknown) = run.result.counts();
    println!("yes {yes} / no {no} / ? {unknown}");
    // the strategy switches on the automaton state
    let region = run.result.regions.iter().max_by(|a, b| a.p_lower.total_cmp(&b.p_lower)).unwrap();
    for (d, name) in run.dfa.state_names().iter().enumerate().take(2) {
        println!(
            "best region {}: in {name} play {}",
            region.id,
            run.abstraction.action_names()[run.switching.action(region.id, d)]
        );
    }
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join("nndm-custom-automaton");
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
