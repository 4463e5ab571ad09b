//! Generated networks and ready-made configurations for tests, examples and
//! benchmarks. No trained weights are involved: every network is drawn from
//! a seeded generator.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::RegionOfInterest;
use crate::nn::{Activation, DenseLayer, NeuralDynamics};
use crate::pipeline::{DomainConfig, PipelineConfig, SpecConfig, ValidationConfig};
use crate::refine::RefinementConfig;

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    let normal = Normal::new(0.0, scale).expect("positive scale");
    DMatrix::from_fn(rows, cols, |_, _| normal.sample(rng))
}

fn gaussian_vector<R: Rng + ?Sized>(len: usize, scale: f64, rng: &mut R) -> DVector<f64> {
    let normal = Normal::new(0.0, scale).expect("positive scale");
    DVector::from_fn(len, |_, _| normal.sample(rng))
}

/// Fully random network `dim → width^layers → dim` with a linear output
/// layer; weights are scaled by `1/√fan_in`.
pub fn random_network<R: Rng + ?Sized>(
    dim: usize,
    layers: usize,
    width: usize,
    activation: Activation,
    rng: &mut R,
) -> Vec<DenseLayer> {
    let mut out = Vec::with_capacity(layers + 1);
    let mut fan_in = dim;
    for _ in 0..layers {
        let w = gaussian_matrix(width, fan_in, 1.0 / (fan_in as f64).sqrt(), rng);
        out.push(DenseLayer::new(w, gaussian_vector(width, 0.1, rng), activation));
        fan_in = width;
    }
    let w = gaussian_matrix(dim, fan_in, 1.0 / (fan_in as f64).sqrt(), rng);
    out.push(DenseLayer::new(w, gaussian_vector(dim, 0.1, rng), Activation::Linear));
    out
}

/// `actions` independent random networks of the same shape.
pub fn random_dynamics(
    dim: usize,
    actions: usize,
    layers: usize,
    width: usize,
    activation: Activation,
    seed: u64,
) -> NeuralDynamics {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = (1..=actions).map(|i| format!("a{i}")).collect();
    let nets = (0..actions)
        .map(|_| random_network(dim, layers, width, activation, &mut rng))
        .collect();
    NeuralDynamics::new(dim, names, nets).expect("generated shapes are consistent")
}

/// ReLU networks computing `x ↦ A·x + drift_a + ε·r_a(x)`.
///
/// The first `2n` neurons of every hidden layer carry `max(x, 0)` and
/// `max(−x, 0)` unchanged; the remaining `width − 2n` neurons are random and
/// feed the output through weights of size `perturbation`. This gives
/// networks of a prescribed shape whose dynamics are known in closed form up
/// to a small nonlinear term.
pub fn switching_relu(
    linear: &DMatrix<f64>,
    drifts: &[Vec<f64>],
    layers: usize,
    width: usize,
    perturbation: f64,
    seed: u64,
) -> NeuralDynamics {
    let n = linear.nrows();
    assert!(layers >= 1 && width >= 2 * n, "need room for the pass-through channels");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let free = width - 2 * n;
    let nets = drifts
        .iter()
        .map(|drift| {
            let mut net = Vec::with_capacity(layers + 1);
            for k in 0..layers {
                let fan_in = if k == 0 { n } else { width };
                let mut w = DMatrix::zeros(width, fan_in);
                let mut b = DVector::zeros(width);
                for l in 0..n {
                    if k == 0 {
                        w[(2 * l, l)] = 1.0;
                        w[(2 * l + 1, l)] = -1.0;
                    } else {
                        w[(2 * l, 2 * l)] = 1.0;
                        w[(2 * l + 1, 2 * l + 1)] = 1.0;
                    }
                }
                if free > 0 {
                    let r = gaussian_matrix(free, fan_in, 1.0 / (fan_in as f64).sqrt(), &mut rng);
                    w.view_mut((2 * n, 0), (free, fan_in)).copy_from(&r);
                    b.rows_mut(2 * n, free).copy_from(&gaussian_vector(free, 0.1, &mut rng));
                }
                net.push(DenseLayer::new(w, b, Activation::Relu));
            }
            let mut w = DMatrix::zeros(n, width);
            for l in 0..n {
                w.set_column(2 * l, &linear.column(l));
                w.set_column(2 * l + 1, &(-linear.column(l)));
            }
            if free > 0 {
                let r = gaussian_matrix(n, free, perturbation / (free as f64).sqrt(), &mut rng);
                w.view_mut((0, 2 * n), (n, free)).copy_from(&r);
            }
            net.push(DenseLayer::new(w, DVector::from_column_slice(drift), Activation::Linear));
            net
        })
        .collect();
    let names = (1..=drifts.len()).map(|i| format!("a{i}")).collect();
    NeuralDynamics::new(n, names, nets).expect("generated shapes are consistent")
}

/// Planar reach-avoid benchmark: 2 states, 4 actions (one push per compass
/// direction), 3 hidden ReLU layers of 20 neurons, noise `0.2·I`, domain
/// `[−2, 2]²`, obstacle `O = [−0.5, 0.5]²`, goal `D = [1, 2]²`, 8×8 grid.
pub fn planar_reach_avoid(seed: u64) -> (NeuralDynamics, PipelineConfig) {
    let linear = DMatrix::identity(2, 2);
    let d = 0.6;
    let drifts = [vec![d, 0.0], vec![-d, 0.0], vec![0.0, d], vec![0.0, -d]];
    let nd = switching_relu(&linear, &drifts, 3, 20, 0.05, seed);
    let config = PipelineConfig {
        network: "planar.json".into(),
        domain: DomainConfig {
            lo: vec![-2.0, -2.0],
            hi: vec![2.0, 2.0],
        },
        covariance: vec![vec![0.2, 0.0], vec![0.0, 0.2]],
        grid: vec![8, 8],
        regions: vec![
            RegionOfInterest::new("O", vec![-0.5, -0.5], vec![0.5, 0.5]),
            RegionOfInterest::new("D", vec![1.0, 1.0], vec![2.0, 2.0]),
        ],
        spec: SpecConfig::reach_avoid("O", "D"),
        refinement: RefinementConfig::default(),
        tolerance: 1e-6,
        max_sweeps: 5000,
        seed,
        threads: None,
        threshold: 0.95,
        exact_upper: false,
        validation: ValidationConfig::default(),
    };
    (nd, config)
}

/// Planar two-goal variant of [`planar_reach_avoid`]: visit `D1 = [1, 2]²`
/// and `D2 = [−2, −1]×[1, 2]` in any order while avoiding `O`.
pub fn planar_two_goals(seed: u64) -> (NeuralDynamics, PipelineConfig) {
    let (nd, mut config) = planar_reach_avoid(seed);
    config.regions = vec![
        RegionOfInterest::new("O", vec![-0.5, -0.5], vec![0.5, 0.5]),
        RegionOfInterest::new("D1", vec![1.0, 1.0], vec![2.0, 2.0]),
        RegionOfInterest::new("D2", vec![-2.0, 1.0], vec![-1.0, 2.0]),
    ];
    config.spec = SpecConfig::Template {
        template: "reach_two_avoid".into(),
        labels: BTreeMap::from([
            ("O".into(), "O".into()),
            ("D1".into(), "D1".into()),
            ("D2".into(), "D2".into()),
        ]),
    };
    (nd, config)
}

/// Overtaking car: states `(x, y, heading)` on `[0, 10]×[0, 2]×[−0.5, 0.5]`,
/// 7 steering actions, 4 hidden ReLU layers of 50 neurons, noise
/// `diag(0.1, 0.1, 0.01)`, obstacle `[4, 6]×[0, 1]`, goal `x ≥ 8`, and a
/// 20×8×10 grid (1600 cells).
pub fn car_overtake(seed: u64) -> (NeuralDynamics, PipelineConfig) {
    let linear = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.6, 0.0, 0.0, 0.5]);
    let drifts: Vec<Vec<f64>> = (0..7)
        .map(|k| {
            let heading = -0.3 + 0.1 * k as f64;
            vec![0.6, 0.0, 0.5 * heading]
        })
        .collect();
    let nd = switching_relu(&linear, &drifts, 4, 50, 0.02, seed);
    let config = PipelineConfig {
        network: "car.json".into(),
        domain: DomainConfig {
            lo: vec![0.0, 0.0, -0.5],
            hi: vec![10.0, 2.0, 0.5],
        },
        covariance: vec![
            vec![0.1, 0.0, 0.0],
            vec![0.0, 0.1, 0.0],
            vec![0.0, 0.0, 0.01],
        ],
        grid: vec![20, 8, 10],
        regions: vec![
            RegionOfInterest::new("O", vec![4.0, 0.0, -0.5], vec![6.0, 1.0, 0.5]),
            RegionOfInterest::new("D", vec![8.0, 0.0, -0.5], vec![10.0, 2.0, 0.5]),
        ],
        spec: SpecConfig::reach_avoid("O", "D"),
        refinement: RefinementConfig::default(),
        tolerance: 1e-6,
        max_sweeps: 5000,
        seed,
        threads: None,
        threshold: 0.95,
        exact_upper: false,
        validation: ValidationConfig::default(),
    };
    (nd, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn switching_relu_is_affine_plus_small_term() {
        let linear = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 0.8]);
        let nd = switching_relu(&linear, &[vec![0.5, -0.25]], 3, 20, 0.0, 1);
        let x = [0.7, -1.3];
        let y = nd.evaluate("a1", &x).unwrap();
        assert!((y[0] - (0.9 * 0.7 + 0.1 * -1.3 + 0.5)).abs() < 1e-12);
        assert!((y[1] - (0.8 * -1.3 - 0.25)).abs() < 1e-12);
    }

    #[test]
    fn random_shapes() {
        let nd = random_dynamics(3, 2, 5, 100, Activation::Tanh, 9);
        assert_eq!(nd.layers(0).len(), 6);
        assert_eq!(nd.layers(1)[2].weights.shape(), (100, 100));
    }

    #[test]
    fn fixtures_are_consistent() {
        let (nd, cfg) = planar_reach_avoid(0);
        cfg.validate(nd.dim()).unwrap();
        let (nd, cfg) = car_overtake(0);
        cfg.validate(nd.dim()).unwrap();
        assert_eq!(nd.num_actions(), 7);
    }
}
