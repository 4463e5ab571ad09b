//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls into the code under test for the quantity being
//! checked; library types are only used to carry inputs and outputs.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use nndm_synth::geometry::{HyperRect, RegionGrid, Transform};
use nndm_synth::imdp::{Bound, Imdp, TransitionBoundRow};
use nndm_synth::nn::{Activation, NeuralDynamics};
use nndm_synth::transition::SourceImage;

// ---------------------------------------------------------------- quadrature

fn std_normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)
        + adaptive(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
}

/// `∫_a^b f` by adaptive Simpson quadrature with absolute tolerance `eps`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    // seed with several panels so narrow peaks are not skipped
    let panels = 16;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let (x0, x1) = (a + k as f64 * h, a + (k + 1) as f64 * h);
            let (f0, fm, f1) = (f(x0), f(0.5 * (x0 + x1)), f(x1));
            let whole = simpson(x0, x1, f0, fm, f1);
            adaptive(&f, x0, x1, f0, fm, f1, whole, eps / panels as f64, 50)
        })
        .sum()
}

/// `P(z + ε ∈ [lo, hi])` for `ε ~ N(0, I)`, one quadrature per axis.
pub fn gaussian_box_mass(z: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    const CUT: f64 = 40.0;
    z.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&z, (&lo, &hi))| {
            let a = (lo - z).max(-CUT);
            let b = (hi - z).min(CUT);
            integrate(std_normal_pdf, a, b, 1e-14)
        })
        .product()
}

/// Same Gaussian mass, evaluated directly from the density (used for the
/// dense-grid oracles, where thousands of points are needed).
pub fn gaussian_box_mass_fast(z: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    z.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&z, (&lo, &hi))| normal_cdf(hi - z) - normal_cdf(lo - z))
        .product()
}

/// Standard normal CDF via the series/continued fraction of the incomplete
/// gamma function, independent of any erf implementation.
pub fn normal_cdf(t: f64) -> f64 {
    if t == f64::INFINITY {
        return 1.0;
    }
    if t == f64::NEG_INFINITY {
        return 0.0;
    }
    let x = 0.5 * t * t;
    // P(1/2, x) = erf(|t|/√2)
    let p = if x < 1.5 {
        let mut term = 1.0 / 0.5;
        let mut sum = term;
        let mut k = 0.5;
        for _ in 0..500 {
            k += 1.0;
            term *= x / k;
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        sum * (-x + 0.5 * x.ln() - ln_gamma_half()).exp()
    } else {
        // Lentz continued fraction for Q(1/2, x)
        let a = 0.5;
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let q = (-x + a * x.ln() - ln_gamma_half()).exp() * h;
        // return the tail directly for precision
        return if t < 0.0 { 0.5 * q } else { 1.0 - 0.5 * q };
    };
    if t < 0.0 {
        0.5 - 0.5 * p
    } else {
        0.5 + 0.5 * p
    }
}

fn ln_gamma_half() -> f64 {
    0.5 * std::f64::consts::PI.ln()
}

// ------------------------------------------------------------------ 2D hulls

/// Convex hull (counter-clockwise, no repeated points) by the monotone chain.
pub fn convex_hull_2d(points: &[Vec<f64>]) -> Vec<[f64; 2]> {
    let mut p: Vec<[f64; 2]> = points.iter().map(|v| [v[0], v[1]]).collect();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &q in &p {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], q) <= 0.0 {
            lower.pop();
        }
        lower.push(q);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &q in p.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], q) <= 0.0 {
            upper.pop();
        }
        upper.push(q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Point-in-convex-polygon test for a counter-clockwise hull.
pub fn in_convex_polygon(hull: &[[f64; 2]], q: [f64; 2]) -> bool {
    match hull.len() {
        0 => false,
        1 => hull[0] == q,
        2 => {
            let (a, b) = (hull[0], hull[1]);
            let cross = (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0]);
            let within = (q[0] - a[0]) * (q[0] - b[0]) <= 0.0 && (q[1] - a[1]) * (q[1] - b[1]) <= 0.0;
            cross.abs() < 1e-12 && within
        }
        n => (0..n).all(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % n]);
            (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0]) >= -1e-12
        }),
    }
}

/// About `side²` lattice points of the bounding box that lie in the hull,
/// plus the hull vertices themselves.
pub fn dense_hull_points(points: &[Vec<f64>], side: usize) -> Vec<[f64; 2]> {
    let hull = convex_hull_2d(points);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for v in &hull {
        for l in 0..2 {
            lo[l] = lo[l].min(v[l]);
            hi[l] = hi[l].max(v[l]);
        }
    }
    let mut out = hull.clone();
    for i in 0..side {
        for j in 0..side {
            let q = [
                lo[0] + (hi[0] - lo[0]) * i as f64 / (side - 1) as f64,
                lo[1] + (hi[1] - lo[1]) * j as f64 / (side - 1) as f64,
            ];
            if in_convex_polygon(&hull, q) {
                out.push(q);
            }
        }
    }
    out
}

// ----------------------------------------------------------- transition rows

/// Row of `(source, action)` computed target by target, without grouping:
/// extreme points of the rect hull with respect to each target, exact vertex
/// minimum for overlapping targets, and the same flooring rule.
pub fn naive_row(
    grid: &RegionGrid,
    image: &SourceImage,
    source: usize,
    action: usize,
) -> TransitionBoundRow {
    const FLOOR: f64 = 1e-12;
    let hull = &image.rect;
    let extremes = |target: &HyperRect| {
        let n = hull.dim();
        let (mut zmin, mut zmax) = (vec![0.0; n], vec![0.0; n]);
        for l in 0..n {
            let c = 0.5 * (target.lo[l] + target.hi[l]);
            zmax[l] = c.max(hull.lo[l]).min(hull.hi[l]);
            zmin[l] = if (hull.lo[l] - c).abs() >= (hull.hi[l] - c).abs() {
                hull.lo[l]
            } else {
                hull.hi[l]
            };
        }
        (zmin, zmax)
    };
    let g = |z: &[f64], t: &HyperRect| {
        nndm_synth::transition::kernel_g(z, &nndm_synth::transition::KernelTarget::from(t))
    };
    let mut entries = Vec::new();
    let mut dropped = 0usize;
    let mut push = |target: usize, lo: f64, hi: f64| {
        if hi < FLOOR {
            dropped += 1;
        } else {
            entries.push(Bound {
                target,
                lower: if lo < FLOOR { 0.0 } else { lo },
                upper: hi,
            });
        }
    };
    for (id, cell) in grid.cells().iter().enumerate() {
        let (zmin, zmax) = extremes(cell);
        let upper = g(&zmax, cell);
        let overlaps = (0..hull.dim()).all(|l| cell.lo[l] <= hull.hi[l] && hull.lo[l] <= cell.hi[l]);
        let lower = if overlaps {
            image
                .hull
                .vertices
                .iter()
                .map(|v| g(v, cell))
                .fold(f64::INFINITY, f64::min)
        } else {
            g(&zmin, cell)
        };
        push(id, lower.min(upper), upper);
    }
    let domain = grid.domain();
    let (zmin, zmax) = extremes(domain);
    let stay_hi = g(&zmax, domain);
    let stay_lo = g(&zmin, domain).min(stay_hi);
    push(grid.unsafe_id(), (1.0 - stay_hi).max(0.0), (1.0 - stay_lo).min(1.0));
    entries.sort_by_key(|b| b.target);
    TransitionBoundRow {
        source,
        action,
        entries,
        tail: dropped as f64 * FLOOR,
    }
}

// --------------------------------------------------------------------- IMDPs

/// Vertices of `{γ : l ≤ γ ≤ u, Σγ = 1}`: all coordinates but one sit at a
/// bound and the free one absorbs the rest.
pub fn interval_vertices(row: &TransitionBoundRow) -> Vec<Vec<(usize, f64)>> {
    assert_eq!(row.tail, 0.0, "oracle handles rows without a tail");
    let k = row.entries.len();
    assert!(k <= 12, "vertex enumeration is exponential");
    let mut out = Vec::new();
    for free in 0..k {
        for mask in 0..(1u32 << (k - 1)) {
            let mut gamma = vec![0.0; k];
            let mut bit = 0;
            let mut fixed = 0.0;
            for (i, b) in row.entries.iter().enumerate() {
                if i == free {
                    continue;
                }
                gamma[i] = if mask >> bit & 1 == 1 { b.upper } else { b.lower };
                fixed += gamma[i];
                bit += 1;
            }
            let rest = 1.0 - fixed;
            let b = &row.entries[free];
            if rest >= b.lower - 1e-12 && rest <= b.upper + 1e-12 {
                gamma[free] = rest.clamp(b.lower, b.upper);
                out.push(row.entries.iter().zip(&gamma).map(|(b, &p)| (b.target, p)).collect());
            }
        }
    }
    out
}

/// Min (or max) of `Σ γ·v` over the interval polytope, by enumerating its
/// vertices; the optimum of a linear program is attained at one.
pub fn lp_extreme(row: &TransitionBoundRow, values: &[f64], minimize: bool) -> f64 {
    let evals = interval_vertices(row)
        .into_iter()
        .map(|g| g.iter().map(|&(t, p)| p * values[t]).sum::<f64>());
    if minimize {
        evals.fold(f64::INFINITY, f64::min)
    } else {
        evals.fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Maximin reachability by value iteration with LP inner problems, iterated
/// to a residual of `1e-14`.
pub fn maximin_reachability(imdp: &Imdp, accepting: &[bool], sink: &[bool]) -> Vec<f64> {
    let n = imdp.num_states();
    let m = imdp.num_actions();
    let mut v: Vec<f64> = accepting.iter().map(|&a| f64::from(u8::from(a))).collect();
    for _ in 0..1_000_000 {
        let next: Vec<f64> = (0..n)
            .map(|s| {
                if accepting[s] {
                    1.0
                } else if sink[s] {
                    0.0
                } else {
                    (0..m)
                        .map(|a| lp_extreme(imdp.row(s, a), &v, true))
                        .fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .collect();
        let res = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if res < 1e-14 {
            break;
        }
    }
    v
}

/// Value of a fixed strategy against the minimising (or maximising)
/// adversary, with LP inner problems.
pub fn strategy_value(
    imdp: &Imdp,
    choice: &[usize],
    accepting: &[bool],
    sink: &[bool],
    minimize: bool,
) -> Vec<f64> {
    let n = imdp.num_states();
    let mut v: Vec<f64> = accepting.iter().map(|&a| f64::from(u8::from(a))).collect();
    for _ in 0..1_000_000 {
        let next: Vec<f64> = (0..n)
            .map(|s| {
                if accepting[s] {
                    1.0
                } else if sink[s] {
                    0.0
                } else {
                    lp_extreme(imdp.row(s, choice[s]), &v, minimize)
                }
            })
            .collect();
        let res = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if res < 1e-14 {
            break;
        }
    }
    v
}

/// Maximin by enumerating every memoryless deterministic strategy and
/// keeping, per state, the best worst-case value.
pub fn maximin_by_strategy_enumeration(imdp: &Imdp, accepting: &[bool], sink: &[bool]) -> Vec<f64> {
    let n = imdp.num_states();
    let m = imdp.num_actions();
    let total = m.pow(n as u32);
    let mut best = vec![f64::NEG_INFINITY; n];
    for code in 0..total {
        let mut c = code;
        let choice: Vec<usize> = (0..n)
            .map(|_| {
                let a = c % m;
                c /= m;
                a
            })
            .collect();
        let v = strategy_value(imdp, &choice, accepting, sink, true);
        for s in 0..n {
            best[s] = best[s].max(v[s]);
        }
    }
    best
}

/// Standard (point-probability) maximal reachability.
pub fn mdp_max_reachability(imdp: &Imdp, accepting: &[bool], sink: &[bool]) -> Vec<f64> {
    let n = imdp.num_states();
    let m = imdp.num_actions();
    let mut v: Vec<f64> = accepting.iter().map(|&a| f64::from(u8::from(a))).collect();
    for _ in 0..1_000_000 {
        let next: Vec<f64> = (0..n)
            .map(|s| {
                if accepting[s] {
                    1.0
                } else if sink[s] {
                    0.0
                } else {
                    (0..m)
                        .map(|a| imdp.row(s, a).entries.iter().map(|b| b.lower * v[b.target]).sum::<f64>())
                        .fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .collect();
        let res = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if res < 1e-15 {
            break;
        }
    }
    v
}

/// Random feasible row over at most `max_targets` of `n` states.
pub fn random_row<R: Rng>(
    rng: &mut R,
    source: usize,
    action: usize,
    n: usize,
    max_targets: usize,
    degenerate: bool,
) -> TransitionBoundRow {
    let k = rng.random_range(1..=max_targets.min(n));
    let mut targets: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        targets.swap(i, j);
    }
    targets.truncate(k);
    targets.sort_unstable();
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let entries = targets
        .iter()
        .zip(&raw)
        .map(|(&t, &r)| {
            let p = r / total;
            let (lower, upper) = if degenerate {
                (p, p)
            } else {
                let lo = (p - rng.random_range(0.0..0.3)).max(0.0);
                let hi = (p + rng.random_range(0.0..0.3)).min(1.0);
                (lo, hi)
            };
            Bound { target: t, lower, upper }
        })
        .collect();
    TransitionBoundRow {
        source,
        action,
        entries,
        tail: 0.0,
    }
}

/// Random IMDP with `n` states and `m` actions, plus accepting and sink masks.
pub fn random_imdp<R: Rng>(
    rng: &mut R,
    n: usize,
    m: usize,
    max_targets: usize,
    degenerate: bool,
) -> (Imdp, Vec<bool>, Vec<bool>) {
    let rows = (0..n * m)
        .map(|i| random_row(rng, i / m, i % m, n, max_targets, degenerate))
        .collect();
    let labels = vec![Default::default(); n];
    let imdp = Imdp::new(n, (0..m).map(|a| format!("a{a}")).collect(), rows, labels).unwrap();
    let mut accepting = vec![false; n];
    let mut sink = vec![false; n];
    accepting[0] = true;
    if n > 2 {
        sink[n - 1] = true;
    }
    for s in 1..n.saturating_sub(1) {
        match rng.random_range(0..10) {
            0 => accepting[s] = true,
            1 => sink[s] = true,
            _ => {}
        }
    }
    (imdp, accepting, sink)
}

// ------------------------------------------------------------------ networks

/// Forward pass: affine map, then the activation written out per neuron.
pub fn forward(nd: &NeuralDynamics, action: usize, x: &[f64]) -> Vec<f64> {
    let mut h = DVector::from_column_slice(x);
    for layer in nd.layers(action) {
        let y = &layer.weights * &h + &layer.bias;
        h = y.map(|y| match layer.activation {
            Activation::Relu => y.max(0.0),
            Activation::Tanh => y.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-y).exp()),
            Activation::Linear => y,
        });
    }
    h.as_slice().to_vec()
}

/// `T·f_a(T⁻¹·z)`.
pub fn whitened_step(nd: &NeuralDynamics, action: usize, t: &Transform, z: &[f64]) -> Vec<f64> {
    let x = t.inverse() * DVector::from_column_slice(z);
    let y = forward(nd, action, x.as_slice());
    (t.matrix() * DVector::from_vec(y)).as_slice().to_vec()
}

/// Uniform sample from a box.
pub fn sample_box<R: Rng>(rng: &mut R, rect: &HyperRect) -> Vec<f64> {
    rect.lo
        .iter()
        .zip(&rect.hi)
        .map(|(&a, &b)| if b > a { rng.random_range(a..=b) } else { a })
        .collect()
}

/// Random box of the given dimension inside `[-span, span]^n`.
pub fn random_box<R: Rng>(rng: &mut R, n: usize, span: f64, max_width: f64) -> HyperRect {
    let lo: Vec<f64> = (0..n).map(|_| rng.random_range(-span..span)).collect();
    let hi = lo.iter().map(|&a| a + rng.random_range(1e-3..max_width)).collect();
    HyperRect::new(lo, hi).unwrap()
}

// ------------------------------------------------------------ edge expansion

/// Dimension of the cell edge stretched most by any of `matrices`, found by
/// enumerating every edge (vertex pairs differing in exactly one coordinate).
pub fn most_expanded_edge(cell: &HyperRect, matrices: &[&DMatrix<f64>]) -> usize {
    let verts = cell.vertices();
    let n = cell.dim();
    let mut per_dim = vec![f64::NEG_INFINITY; n];
    for i in 0..verts.len() {
        for j in i + 1..verts.len() {
            let diff: Vec<usize> = (0..n).filter(|&l| verts[i][l] != verts[j][l]).collect();
            if diff.len() != 1 {
                continue;
            }
            let d = DVector::from_iterator(n, (0..n).map(|l| verts[j][l] - verts[i][l]));
            for m in matrices {
                per_dim[diff[0]] = per_dim[diff[0]].max((*m * &d).norm() / d.norm());
            }
        }
    }
    let best = per_dim.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    per_dim.iter().position(|&x| x >= best * (1.0 - 1e-12)).unwrap()
}
