//! Writes a fixture network and a matching pipeline config to disk, ready
//! for the command-line tool.
//!
//! cargo run --example export_fixture -- <dir> [planar|car|two_goals]

use std::path::PathBuf;

use nndm_synth::fixtures::{car_overtake, planar_reach_avoid, planar_two_goals};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "target/fixture".into()));
    let which = args.next().unwrap_or_else(|| "planar".into());
    let (nd, mut config) = match which.as_str() {
        "planar" => planar_reach_avoid(7),
        "two_goals" => planar_two_goals(7),
        "car" => car_overtake(3),
        other => return Err(format!("unknown fixture {other}").into()),
    };
    std::fs::create_dir_all(&dir)?;
    config.network = "network.json".into();
    config.refinement.rounds = 3;
    config.refinement.n_ref_fraction = Some(0.05);
    config.validation.trials = 1000;
    nd.save(dir.join("network.json"))?;
    std::fs::write(dir.join("config.json"), config.to_json_string())?;
    println!("wrote {}/network.json and {}/config.json", dir.display(), dir.display());
    Ok(())
}
