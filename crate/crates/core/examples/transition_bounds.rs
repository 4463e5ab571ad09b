//! Interval transition probabilities out of one grid cell.
//!
//! cargo run --example transition_bounds -- [cell] [action]

use nndm_synth::fixtures::planar_reach_avoid;
use nndm_synth::pipeline::build_abstraction;
use nndm_synth::transition::{kernel_g, KernelTarget};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let cell: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(27);
    let action: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);

    let (nd, config) = planar_reach_avoid(7);
    let abs = build_abstraction(&nd, &config)?;
    let grid = abs.grid();
    let row = abs.row(cell, action);
    let image = abs.image(cell, action);
    println!(
        "cell {cell} {:?}..{:?}, action {}",
        grid.cell(cell).lo,
        grid.cell(cell).hi,
        abs.action_names()[action]
    );
    println!("post-image rect hull {:?}..{:?}", image.rect.lo, image.rect.hi);

    let mut entries = row.entries.clone();
    entries.sort_by(|a, b| b.upper.total_cmp(&a.upper));
    for b in entries.iter().take(10) {
        let name = if b.target == grid.unsafe_id() {
            "unsafe".to_string()
        } else {
            format!("cell {}", b.target)
        };
        println!("  -> {name:>9}: [{:.4}, {:.4}]", b.lower, b.upper);
    }
    println!(
        "{} stored targets, tail {:.1e}, lower sum {:.4}, upper sum {:.4}",
        row.entries.len(),
        row.tail,
        row.lower_sum(),
        row.upper_sum()
    );

    // the kernel directly: mass landing in the cell from its own centre
    let c = grid.cell(cell).center();
    println!("g(centre, own cell) = {:.4}", kernel_g(&c, &KernelTarget::from(grid.cell(cell))));
    Ok(())
}
