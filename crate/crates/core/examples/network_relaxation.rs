//! Load a network file, evaluate it, take a noisy step and bound it with
//! linear relaxations over a box.
//!
//! cargo run --example network_relaxation -- [network.json]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nndm_synth::fixtures::random_dynamics;
use nndm_synth::geometry::{HyperRect, Transform};
use nndm_synth::nn::{Activation, NeuralDynamics};
use nndm_synth::relax::relax;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let nd = match std::env::args().nth(1) {
        Some(path) => NeuralDynamics::load(path)?,
        None => random_dynamics(2, 2, 3, 32, Activation::Tanh, 1),
    };
    let n = nd.dim();
    let action = nd.actions()[0].clone();
    let x = vec![0.3; n];
    println!("f_{action}({x:?}) = {:?}", nd.evaluate(&action, &x)?);

    let cov = DMatrix::from_diagonal_element(n, n, 0.05);
    println!("noisy step: {:?}", nd.sample_step(&action, &x, &cov, 42)?);

    // bounds live in whitened coordinates z = T x
    let t = Transform::mahalanobis(&cov)?;
    let region = t.image_rect(&HyperRect::new(vec![0.0; n], vec![0.5; n])?);
    let b = relax(&nd, &action, &t, &region)?;
    let (lo, hi) = b.output_interval();
    println!("output interval over the box: {lo:.3?} .. {hi:.3?}");

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worst_gap: f64 = 0.0;
    for _ in 0..10_000 {
        let z: Vec<f64> = (0..n).map(|l| rng.random_range(region.lo[l]..=region.hi[l])).collect();
        let y = t.apply(&nd.evaluate(&action, &t.apply_inverse(&z))?);
        let (l, u) = (b.lower_at(&z), b.upper_at(&z));
        for i in 0..n {
            assert!(l[i] <= y[i] + 1e-9 && y[i] <= u[i] + 1e-9);
            worst_gap = worst_gap.max(u[i] - l[i]);
        }
    }
    println!("10000 samples inside the bounds; widest gap {worst_gap:.4}");
    Ok(())
}
