mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nndm_synth::geometry::{post_image_hull, rect_hull, HyperRect, Polytope};
use nndm_synth::relax::LinearBounds;
use nndm_synth::transition::{
    axis_mass, kernel_g, max_over_hull, min_over_hull, rect_extreme_points, KernelTarget,
};

fn hull_instance(seed: u64) -> (Polytope, KernelTarget) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = common::random_box(&mut rng, 2, 2.0, 1.0);
    let a_lo = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.2..1.2));
    let a_hi = &a_lo + DMatrix::from_fn(2, 2, |_, _| rng.random_range(0.0..0.2));
    let b_lo = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
    let b_hi = &b_lo + DVector::from_fn(2, |_, _| rng.random_range(0.0..0.4));
    let bounds = LinearBounds {
        a_lo,
        b_lo,
        a_hi,
        b_hi,
        region: cell.clone(),
    };
    let p = post_image_hull(&bounds, &cell);
    let rect = rect_hull(&p);
    let c: Vec<f64> = (0..2)
        .map(|l| rng.random_range(rect.lo[l] - 1.5..rect.hi[l] + 1.5))
        .collect();
    let w: Vec<f64> = (0..2).map(|_| rng.random_range(0.3..2.5)).collect();
    let target = KernelTarget::new(
        c.iter().zip(&w).map(|(c, w)| c - 0.5 * w).collect(),
        c.iter().zip(&w).map(|(c, w)| c + 0.5 * w).collect(),
    );
    (p, target)
}

fn grid_extrema(p: &Polytope, t: &KernelTarget) -> (f64, f64) {
    common::dense_hull_points(&p.vertices, 80)
        .iter()
        .map(|z| common::gaussian_box_mass_fast(z, &t.lo, &t.hi))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| (lo.min(g), hi.max(g)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn kernel_matches_quadrature(
        z in prop::collection::vec(-5.0..5.0f64, 1..=3),
        lo in prop::collection::vec(-5.0..5.0f64, 3),
        w in prop::collection::vec(0.001..6.0f64, 3),
    ) {
        let n = z.len();
        let hi: Vec<f64> = (0..n).map(|l| lo[l] + w[l]).collect();
        let t = KernelTarget::new(lo[..n].to_vec(), hi.clone());
        let oracle = common::gaussian_box_mass(&z, &lo[..n], &hi);
        prop_assert!((kernel_g(&z, &t) - oracle).abs() < 1e-10);
    }

    #[test]
    fn kernel_is_a_probability(z in -50.0..50.0f64, lo in -50.0..50.0f64, w in 0.0..100.0f64) {
        let g = axis_mass(z, lo, lo + w);
        prop_assert!((0.0..=1.0).contains(&g));
    }

    #[test]
    fn extreme_points_bracket_rect(seed in any::<u64>()) {
        let (p, t) = hull_instance(seed);
        let rect = rect_hull(&p);
        let (z_min, z_max) = rect_extreme_points(&rect, &t);
        prop_assert!(rect.contains(&z_max));
        for l in 0..2 {
            prop_assert!(z_min[l] == rect.lo[l] || z_min[l] == rect.hi[l]);
        }
        for v in rect.vertices() {
            let g = kernel_g(&v, &t);
            prop_assert!(kernel_g(&z_min, &t) <= g + 1e-15);
            prop_assert!(kernel_g(&z_max, &t) >= g - 1e-15);
        }
    }
}

#[test]
fn kernel_tail_keeps_relative_precision() {
    // masses far below machine epsilon relative to one
    for (lo, hi) in [(-9.0, -8.0), (7.5, 12.0), (-30.0, -20.0)] {
        let exact = if hi < 0.0 {
            common::normal_cdf(hi) - common::normal_cdf(lo)
        } else {
            common::normal_cdf(-lo) - common::normal_cdf(-hi)
        };
        let g = axis_mass(0.0, lo, hi);
        assert!(exact > 0.0);
        assert!(((g - exact) / exact).abs() < 1e-9, "{lo}..{hi}: {g} vs {exact}");
    }
}

#[test]
fn hull_extrema_against_dense_grid() {
    for seed in 0..60 {
        let (p, t) = hull_instance(seed);
        let (grid_min, grid_max) = grid_extrema(&p, &t);
        let vmin = min_over_hull(&p, &t);
        assert!((vmin - grid_min).abs() < 1e-9, "seed {seed}: {vmin} vs {grid_min}");

        let m = max_over_hull(&p, &t, 1e-9);
        let rect = rect_hull(&p);
        let (_, z_max) = rect_extreme_points(&rect, &t);
        assert!(m.value >= grid_max - 1e-12, "seed {seed}: certificate below grid max");
        assert!(m.value <= kernel_g(&z_max, &t) + 1e-15);
        assert!(m.attained <= m.value + 1e-15, "seed {seed}: {m:?} rect {}", kernel_g(&z_max, &t));
        if m.converged {
            assert!(m.attained >= grid_max - 1e-7, "seed {seed}: ascent stopped early");
        }
    }
}

#[test]
fn min_over_interior_points_is_unchanged() {
    // adding interior points to the candidate set never changes the minimum
    let (p, t) = hull_instance(3);
    let mut more = p.vertices.clone();
    let n = more.len() as f64;
    let centroid: Vec<f64> = (0..2).map(|l| more.iter().map(|v| v[l]).sum::<f64>() / n).collect();
    more.push(centroid);
    let q = Polytope::new(more).unwrap();
    assert_eq!(min_over_hull(&p, &t), min_over_hull(&q, &t));
}

#[test]
fn point_target_far_away_has_zero_upper() {
    let rect = HyperRect::new(vec![0.0, 0.0], vec![0.1, 0.1]).unwrap();
    let t = KernelTarget::new(vec![60.0, 60.0], vec![61.0, 61.0]);
    let (_, z_max) = rect_extreme_points(&rect, &t);
    assert_eq!(kernel_g(&z_max, &t), 0.0);
}
