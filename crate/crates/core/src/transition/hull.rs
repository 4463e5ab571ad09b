//! Extrema of the kernel over the post-image hull.

use crate::geometry::{HyperRect, Polytope};

use super::kernel::{kernel_g, log_kernel_gradient, KernelTarget};

/// Minimum of `g` over `conv(vertices)`.
///
/// `g` is log-concave, so its minimum over a polytope sits at a vertex; the
/// candidate set contains every true vertex and otherwise only points of the
/// hull, so the minimum over candidates is exact.
pub fn min_over_hull(p: &Polytope, target: &KernelTarget) -> f64 {
    p.vertices
        .iter()
        .map(|v| kernel_g(v, target))
        .fold(f64::INFINITY, f64::min)
}

/// Outcome of the hull maximisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HullMax {
    /// Certified upper bound on `max g` over the hull.
    pub value: f64,
    /// Best value attained at a hull point, capped at `value` against rounding.
    pub attained: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit and the value is the rect-hull bound
    /// (or a looser certificate) rather than a converged one.
    pub converged: bool,
}

pub const HULL_MAX_ITERATIONS: usize = 200;

/// Upper bound on `max g` over `conv(vertices)`, within `tolerance` of the
/// true maximum when converged.
///
/// Projected gradient ascent on `log g(V·λ)` over barycentric weights `λ` on
/// the simplex; concavity gives the certificate
/// `max ≤ exp(f(λ) + max_i ∇f(λ)_i − ∇f(λ)·λ)`. The result is clamped to the
/// rect-hull bound from above and the best vertex value from below.
pub fn max_over_hull(p: &Polytope, target: &KernelTarget, tolerance: f64) -> HullMax {
    let verts = dedup(&p.vertices);
    let vertex_values: Vec<f64> = verts.iter().map(|v| kernel_g(v, target)).collect();
    let (best_idx, &best_vertex) = vertex_values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("non-empty polytope");

    let hull = HyperRect {
        lo: (0..p.dim()).map(|l| verts.iter().map(|v| v[l]).fold(f64::INFINITY, f64::min)).collect(),
        hi: (0..p.dim()).map(|l| verts.iter().map(|v| v[l]).fold(f64::NEG_INFINITY, f64::max)).collect(),
    };
    let (_, z_max) = super::rect_extreme_points(&hull, target);
    let rect_bound = kernel_g(&z_max, target).max(best_vertex);

    let fallback = |iterations, attained: f64| HullMax {
        value: rect_bound,
        attained: attained.min(rect_bound),
        iterations,
        converged: false,
    };
    if verts.len() == 1 {
        return HullMax {
            value: best_vertex,
            attained: best_vertex,
            iterations: 0,
            converged: true,
        };
    }
    if best_vertex <= 0.0 {
        return fallback(0, best_vertex);
    }

    let k = verts.len();
    let n = p.dim();
    let point = |lambda: &[f64]| -> Vec<f64> {
        let mut z = vec![0.0; n];
        for (w, v) in lambda.iter().zip(&verts) {
            if *w != 0.0 {
                for l in 0..n {
                    z[l] += w * v[l];
                }
            }
        }
        z
    };
    let objective = |lambda: &[f64]| -> f64 { kernel_g(&point(lambda), target).ln() };

    let mut lambda = vec![0.0; k];
    lambda[best_idx] = 1.0;
    let mut f = best_vertex.ln();
    let mut best_upper = f64::INFINITY;
    let spread: f64 = {
        let c = point(&vec![1.0 / k as f64; k]);
        verts
            .iter()
            .map(|v| v.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .sum::<f64>()
            .max(1e-12)
    };
    let mut step = 1.0 / spread;

    for it in 0..HULL_MAX_ITERATIONS {
        let z = point(&lambda);
        let Some(gz) = log_kernel_gradient(&z, target) else {
            return fallback(it, f.exp());
        };
        let grad: Vec<f64> = verts
            .iter()
            .map(|v| v.iter().zip(&gz).map(|(a, b)| a * b).sum())
            .collect();
        let along: f64 = grad.iter().zip(&lambda).map(|(g, w)| g * w).sum();
        let gap = grad.iter().fold(f64::NEG_INFINITY, |m, g| m.max(*g)) - along;
        best_upper = best_upper.min(f + gap.max(0.0));
        let upper_value = best_upper.exp();
        if upper_value - f.exp() <= tolerance {
            let value = upper_value.min(rect_bound).max(best_vertex);
            return HullMax {
                value,
                attained: f.exp().min(value),
                iterations: it,
                converged: true,
            };
        }
        // backtracking ascent step
        let mut accepted = false;
        while step > 1e-18 {
            let trial: Vec<f64> = lambda.iter().zip(&grad).map(|(w, g)| w + step * g).collect();
            let trial = project_simplex(&trial);
            let ft = objective(&trial);
            let moved: f64 = trial.iter().zip(&lambda).map(|(a, b)| (a - b).powi(2)).sum();
            let linear: f64 = trial
                .iter()
                .zip(&lambda)
                .zip(&grad)
                .map(|((a, b), g)| (a - b) * g)
                .sum();
            if ft.is_finite() && ft >= f + linear - moved / (2.0 * step) && ft >= f {
                lambda = trial;
                f = ft;
                accepted = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let value = best_upper.exp().min(rect_bound).max(best_vertex);
    HullMax {
        value,
        attained: f.exp().min(value),
        iterations: HULL_MAX_ITERATIONS,
        converged: false,
    }
}

fn dedup(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(points.len());
    for p in points {
        if !out.iter().any(|q| q == p) {
            out.push(p.clone());
        }
    }
    out
}

/// Euclidean projection onto the probability simplex.
pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, s) in sorted.iter().enumerate() {
        cumsum += s;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Points of the rect hull `[ž, ẑ]` at which `g` is smallest and largest.
///
/// Per dimension, `z_max` is the target centre clamped into `[ž, ẑ]` and
/// `z_min` is the endpoint farther from the centre (`ž` on ties).
pub fn rect_extreme_points(hull: &HyperRect, target: &KernelTarget) -> (Vec<f64>, Vec<f64>) {
    let n = hull.dim();
    let mut z_min = Vec::with_capacity(n);
    let mut z_max = Vec::with_capacity(n);
    for l in 0..n {
        let (lo, hi, c) = (hull.lo[l], hull.hi[l], target.center[l]);
        z_max.push(if c < lo {
            lo
        } else if c > hi {
            hi
        } else {
            c
        });
        z_min.push(if (lo - c).abs() >= (hi - c).abs() { lo } else { hi });
    }
    (z_min, z_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn target_1d(lo: f64, hi: f64) -> KernelTarget {
        KernelTarget::new(vec![lo], vec![hi])
    }

    #[test]
    fn simplex_projection() {
        let p = project_simplex(&[0.5, 0.5, 0.5]);
        assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        let p = project_simplex(&[2.0, 0.0]);
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn point_hull_max() {
        let p = Polytope::new(vec![vec![0.4]]).unwrap();
        let t = target_1d(-1.0, 1.0);
        let m = max_over_hull(&p, &t, 1e-9);
        assert_eq!(m.value, kernel_g(&[0.4], &t));
    }

    #[test]
    fn interval_max_at_centre() {
        let p = Polytope::new(vec![vec![-3.0], vec![3.0]]).unwrap();
        let m = max_over_hull(&p, &target_1d(-1.0, 1.0), 1e-9);
        assert!(m.converged);
        assert!((m.value - 0.682_689_492_137_085_9).abs() < 1e-8, "{m:?}");
        assert!(m.value >= 0.682_689_492_137_085_9 - 1e-15);
    }

    #[test]
    fn rect_extreme_branches() {
        let hull = HyperRect::new(vec![0.0], vec![2.0]).unwrap();
        let (zmin, zmax) = rect_extreme_points(&hull, &target_1d(2.5, 3.5));
        assert_eq!((zmin, zmax), (vec![0.0], vec![2.0]));
        let hull2 = HyperRect::new(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap();
        let (_, zmax) = rect_extreme_points(&hull2, &KernelTarget::new(vec![0.5, 0.5], vec![1.5, 1.5]));
        assert_eq!(zmax, vec![1.0, 1.0]);
    }
}
