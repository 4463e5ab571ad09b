//! Robust value iteration on a hand-written interval MDP.
//!
//! cargo run --example robust_synthesis

use std::collections::BTreeSet;

use nndm_synth::imdp::{
    evaluate_strategy, robust_value_iteration, Bound, Imdp, Mode, TransitionBoundRow, ViOptions,
};

fn row(source: usize, action: usize, to: &[(usize, f64, f64)]) -> TransitionBoundRow {
    TransitionBoundRow {
        source,
        action,
        entries: to
            .iter()
            .map(|&(target, lower, upper)| Bound { target, lower, upper })
            .collect(),
        tail: 0.0,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // 0: start, 1: corridor, 2: goal, 3: trap
    // "fast" is a gamble, "safe" is slow but reliable
    let rows = vec![
        row(0, 0, &[(2, 0.4, 0.7), (3, 0.3, 0.6)]),
        row(0, 1, &[(0, 0.1, 0.3), (1, 0.7, 0.9)]),
        row(1, 0, &[(2, 0.5, 0.9), (3, 0.1, 0.5)]),
        row(1, 1, &[(1, 0.0, 0.2), (2, 0.75, 0.95), (3, 0.05, 0.1)]),
        row(2, 0, &[(2, 1.0, 1.0)]),
        row(2, 1, &[(2, 1.0, 1.0)]),
        row(3, 0, &[(3, 1.0, 1.0)]),
        row(3, 1, &[(3, 1.0, 1.0)]),
    ];
    let labels = vec![BTreeSet::new(); 4];
    let imdp = Imdp::new(4, vec!["fast".into(), "safe".into()], rows, labels)?;
    let accepting = [false, false, true, false];
    let sink = [false, false, false, true];

    let vi = robust_value_iteration(&imdp, &accepting, &sink, ViOptions::default())?;
    let best = evaluate_strategy(&imdp, &vi.strategy, &accepting, &sink, Mode::Maximize, ViOptions::default())?;
    println!("converged after {} sweeps", vi.sweeps);
    for s in 0..2 {
        println!(
            "state {s}: play {:<4}  satisfaction in [{:.4}, {:.4}]",
            imdp.action_names()[vi.strategy.choice[s]],
            vi.values[s],
            best.values[s]
        );
    }
    Ok(())
}
