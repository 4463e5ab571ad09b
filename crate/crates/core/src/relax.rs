//! Affine lower/upper bounding functions of `z ↦ T·f_a(T⁻¹·z)` over a box,
//! computed by backward linear bound propagation through the network.
//!
//! Every nonlinear neuron with pre-activation interval `[l, u]` is replaced by
//! two lines `α_L·y + β_L ≤ σ(y) ≤ α_U·y + β_U`. Pre-activation intervals of
//! each layer are obtained by back-substituting that layer through all
//! previously relaxed layers down to the input box. The whitening map and its
//! inverse enter as exact linear layers, so the result lives in transformed
//! coordinates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{HyperRect, Transform};
use crate::nn::{Activation, NeuralDynamics};

/// `A_lo·z + b_lo ≤ T·f(T⁻¹z) ≤ A_hi·z + b_hi` for all `z` in `region`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBounds {
    pub a_lo: DMatrix<f64>,
    pub b_lo: DVector<f64>,
    pub a_hi: DMatrix<f64>,
    pub b_hi: DVector<f64>,
    pub region: HyperRect,
}

impl LinearBounds {
    pub fn lower_at(&self, z: &[f64]) -> Vec<f64> {
        affine(&self.a_lo, &self.b_lo, z)
    }

    pub fn upper_at(&self, z: &[f64]) -> Vec<f64> {
        affine(&self.a_hi, &self.b_hi, z)
    }

    /// Concrete per-coordinate output interval over `region`.
    pub fn output_interval(&self) -> (Vec<f64>, Vec<f64>) {
        let (lo, _) = concretize(&self.a_lo, &self.b_lo, &self.region);
        let (_, hi) = concretize(&self.a_hi, &self.b_hi, &self.region);
        (lo.as_slice().to_vec(), hi.as_slice().to_vec())
    }
}

fn affine(a: &DMatrix<f64>, b: &DVector<f64>, z: &[f64]) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| b[i] + (0..a.ncols()).map(|j| a[(i, j)] * z[j]).sum::<f64>())
        .collect()
}

/// Per-neuron relaxation lines.
#[derive(Debug, Clone)]
struct NeuronRelaxation {
    lo_slope: DVector<f64>,
    lo_icpt: DVector<f64>,
    hi_slope: DVector<f64>,
    hi_icpt: DVector<f64>,
}

/// One line `slope·y + icpt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub slope: f64,
    pub icpt: f64,
}

impl Line {
    fn tangent(act: Activation, d: f64) -> Self {
        let slope = act.derivative(d);
        Line {
            slope,
            icpt: act.apply(d) - slope * d,
        }
    }

    fn chord(act: Activation, l: f64, u: f64) -> Self {
        let (fl, fu) = (act.apply(l), act.apply(u));
        let slope = (fu - fl) / (u - l);
        Line {
            slope,
            icpt: fl - slope * l,
        }
    }

    pub fn at(&self, y: f64) -> f64 {
        self.slope * y + self.icpt
    }
}

const DEGENERATE_WIDTH: f64 = 1e-12;
const TANGENT_SEARCH_TOL: f64 = 1e-9;

/// Lower and upper relaxation lines of `act` on `[l, u]`.
///
/// ReLU: chord above; below, slope 1 if `|u| ≥ |l|` else 0. Sigmoid/tanh
/// (convex left of 0, concave right of 0): chord on the side where it is
/// sound, tangent at the midpoint on the other; when `[l, u]` straddles the
/// inflection point and the chord is unsound, the tangent through the far
/// endpoint is found by bisection.
pub fn relax_activation(act: Activation, l: f64, u: f64) -> (Line, Line) {
    let identity = Line { slope: 1.0, icpt: 0.0 };
    let zero = Line { slope: 0.0, icpt: 0.0 };
    match act {
        Activation::Linear => (identity, identity),
        Activation::Relu => {
            if l >= 0.0 {
                (identity, identity)
            } else if u <= 0.0 {
                (zero, zero)
            } else {
                let upper = Line::chord(act, l, u);
                let lower = if u >= -l { identity } else { zero };
                (lower, upper)
            }
        }
        Activation::Sigmoid | Activation::Tanh => s_shaped(act, l, u),
    }
}

fn s_shaped(act: Activation, l: f64, u: f64) -> (Line, Line) {
    let m = 0.5 * (l + u);
    if u - l < DEGENERATE_WIDTH {
        // Curvature error over a sub-1e-12 interval is below 1e-24.
        let t = Line::tangent(act, m);
        let slack = 1e-15 + 1e-15 * act.apply(m).abs();
        return (
            Line {
                slope: t.slope,
                icpt: t.icpt - slack,
            },
            Line {
                slope: t.slope,
                icpt: t.icpt + slack,
            },
        );
    }
    if u <= 0.0 {
        return (Line::tangent(act, m), Line::chord(act, l, u));
    }
    if l >= 0.0 {
        return (Line::chord(act, l, u), Line::tangent(act, m));
    }
    let chord = Line::chord(act, l, u);
    let upper = if chord.slope <= act.derivative(u) {
        chord
    } else {
        // tangent at d in [0, u] passing through (l, σ(l)); keep the side
        // where the tangent is above σ(l).
        let gap = |d: f64| Line::tangent(act, d).at(l) - act.apply(l);
        let d = bisect(0.0, u, |d| gap(d) >= 0.0, true);
        Line::tangent(act, d)
    };
    let lower = if chord.slope <= act.derivative(l) {
        chord
    } else {
        let gap = |d: f64| act.apply(u) - Line::tangent(act, d).at(u);
        let d = bisect(l, 0.0, |d| gap(d) >= 0.0, false);
        Line::tangent(act, d)
    };
    (lower, upper)
}

/// Finds the boundary of a monotone predicate on `[a, b]`; returns the end
/// where it holds. `holds_high` says the predicate holds towards `b`.
fn bisect(mut a: f64, mut b: f64, pred: impl Fn(f64) -> bool, holds_high: bool) -> f64 {
    while b - a > TANGENT_SEARCH_TOL {
        let mid = 0.5 * (a + b);
        if pred(mid) == holds_high {
            b = mid;
        } else {
            a = mid;
        }
    }
    let candidate = if holds_high { b } else { a };
    if pred(candidate) {
        candidate
    } else if holds_high {
        // endpoint of the search interval always satisfies the predicate
        b
    } else {
        a
    }
}

fn concretize(a: &DMatrix<f64>, c: &DVector<f64>, region: &HyperRect) -> (DVector<f64>, DVector<f64>) {
    let rows = a.nrows();
    let mut lo = c.clone();
    let mut hi = c.clone();
    for i in 0..rows {
        let (mut sl, mut su) = (0.0, 0.0);
        for j in 0..a.ncols() {
            let w = a[(i, j)];
            if w >= 0.0 {
                sl += w * region.lo[j];
                su += w * region.hi[j];
            } else {
                sl += w * region.hi[j];
                su += w * region.lo[j];
            }
        }
        lo[i] += sl;
        hi[i] += su;
    }
    (lo, hi)
}

struct AffineLayer {
    weights: DMatrix<f64>,
    bias: DVector<f64>,
    activation: Activation,
}

/// Back-substitutes the linear form `coef·h_k + c` (with `h_k` the output of
/// layer `k`) down to the input, choosing per coefficient the relaxation
/// side that keeps the bound valid (`upper == true` for an upper bound).
fn back_substitute(
    layers: &[AffineLayer],
    relaxations: &[NeuronRelaxation],
    k: usize,
    mut coef: DMatrix<f64>,
    mut c: DVector<f64>,
    upper: bool,
) -> (DMatrix<f64>, DVector<f64>) {
    for j in (0..=k).rev() {
        let layer = &layers[j];
        if layer.activation != Activation::Linear {
            let relax = &relaxations[j];
            for m in 0..coef.ncols() {
                let (hs, hc, ls, lc) = (
                    relax.hi_slope[m],
                    relax.hi_icpt[m],
                    relax.lo_slope[m],
                    relax.lo_icpt[m],
                );
                for (i, w) in coef.column_mut(m).iter_mut().enumerate() {
                    if *w == 0.0 {
                        continue;
                    }
                    let (slope, icpt) = if (*w >= 0.0) == upper { (hs, hc) } else { (ls, lc) };
                    c[i] += *w * icpt;
                    *w *= slope;
                }
            }
        }
        c += &coef * &layer.bias;
        coef = &coef * &layer.weights;
    }
    (coef, c)
}

/// Linear bounds on the whitened dynamics `z ↦ T·f_a(T⁻¹z)` over `region`
/// (given in transformed coordinates).
pub fn relax(
    nd: &NeuralDynamics,
    action: &str,
    transform: &Transform,
    region: &HyperRect,
) -> Result<LinearBounds> {
    let a = nd.action_index(action)?;
    relax_index(nd, a, transform, region)
}

pub fn relax_index(
    nd: &NeuralDynamics,
    action: usize,
    transform: &Transform,
    region: &HyperRect,
) -> Result<LinearBounds> {
    let n = nd.dim();
    if region.dim() != n || transform.dim() != n {
        return Err(Error::InvalidRegion(format!(
            "region/transform dimension does not match state dimension {n}"
        )));
    }
    if region.lo.iter().zip(&region.hi).any(|(a, b)| !(a <= b)) {
        return Err(Error::InvalidRegion("empty region".into()));
    }
    let det = transform.matrix().determinant();
    if !det.is_finite() || det.abs() < 1e-300 {
        return Err(Error::SingularTransform);
    }

    let net = nd.layers(action);
    let mut layers: Vec<AffineLayer> = Vec::with_capacity(net.len() + 1);
    for (i, l) in net.iter().enumerate() {
        let weights = if i == 0 {
            &l.weights * transform.inverse()
        } else {
            l.weights.clone()
        };
        layers.push(AffineLayer {
            weights,
            bias: l.bias.clone(),
            activation: l.activation,
        });
    }
    layers.push(AffineLayer {
        weights: transform.matrix().clone(),
        bias: DVector::zeros(n),
        activation: Activation::Linear,
    });

    let mut relaxations: Vec<NeuronRelaxation> = Vec::with_capacity(layers.len());
    let last = layers.len() - 1;
    for k in 0..layers.len() {
        let layer = &layers[k];
        let (coef_hi, c_hi, coef_lo, c_lo) = if k == 0 {
            (
                layer.weights.clone(),
                layer.bias.clone(),
                layer.weights.clone(),
                layer.bias.clone(),
            )
        } else {
            let seed = &layer.weights;
            let (ah, ch) = back_substitute(&layers, &relaxations, k - 1, seed.clone(), layer.bias.clone(), true);
            let (al, cl) = back_substitute(&layers, &relaxations, k - 1, seed.clone(), layer.bias.clone(), false);
            (ah, ch, al, cl)
        };
        if k == last {
            return Ok(LinearBounds {
                a_lo: coef_lo,
                b_lo: c_lo,
                a_hi: coef_hi,
                b_hi: c_hi,
                region: region.clone(),
            });
        }
        let width = layer.weights.nrows();
        let mut relaxation = NeuronRelaxation {
            lo_slope: DVector::from_element(width, 1.0),
            lo_icpt: DVector::zeros(width),
            hi_slope: DVector::from_element(width, 1.0),
            hi_icpt: DVector::zeros(width),
        };
        if layer.activation != Activation::Linear {
            let (_, pre_hi) = concretize(&coef_hi, &c_hi, region);
            let (pre_lo, _) = concretize(&coef_lo, &c_lo, region);
            for m in 0..width {
                let (l, u) = (pre_lo[m], pre_hi[m].max(pre_lo[m]));
                let (lower, upper) = relax_activation(layer.activation, l, u);
                relaxation.lo_slope[m] = lower.slope;
                relaxation.lo_icpt[m] = lower.icpt;
                relaxation.hi_slope[m] = upper.slope;
                relaxation.hi_icpt[m] = upper.icpt;
            }
        }
        relaxations.push(relaxation);
    }
    unreachable!("the appended output layer always returns")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::DenseLayer;

    fn scalar_relu() -> NeuralDynamics {
        NeuralDynamics::new(
            1,
            vec!["a".into()],
            vec![vec![DenseLayer::new(
                DMatrix::identity(1, 1),
                DVector::zeros(1),
                Activation::Relu,
            )]],
        )
        .unwrap()
    }

    fn bounds_on(lo: f64, hi: f64) -> LinearBounds {
        let r = HyperRect::new(vec![lo], vec![hi]).unwrap();
        relax(&scalar_relu(), "a", &Transform::identity(1), &r).unwrap()
    }

    #[test]
    fn stable_active_relu_is_exact() {
        let b = bounds_on(1.0, 2.0);
        assert_eq!((b.a_lo[(0, 0)], b.a_hi[(0, 0)]), (1.0, 1.0));
        assert_eq!((b.b_lo[0], b.b_hi[0]), (0.0, 0.0));
    }

    #[test]
    fn stable_inactive_relu_is_zero() {
        let b = bounds_on(-2.0, -1.0);
        assert_eq!((b.a_lo[(0, 0)], b.a_hi[(0, 0)]), (0.0, 0.0));
        assert_eq!((b.b_lo[0], b.b_hi[0]), (0.0, 0.0));
    }

    #[test]
    fn unstable_relu_uses_chord() {
        let b = bounds_on(-1.0, 1.0);
        assert!((b.a_hi[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((b.b_hi[0] - 0.5).abs() < 1e-15);
        assert!((b.upper_at(&[1.0])[0] - 1.0).abs() < 1e-15);
        assert!(b.upper_at(&[-1.0])[0].abs() < 1e-15);
    }

    #[test]
    fn s_shaped_relaxations_are_sound() {
        for act in [Activation::Tanh, Activation::Sigmoid] {
            for &(l, u) in &[(-3.0, -0.5), (0.2, 4.0), (-2.0, 0.5), (-0.3, 5.0), (-6.0, 6.0), (-1e-3, 1e-3)] {
                let (lower, upper) = relax_activation(act, l, u);
                for k in 0..=1000 {
                    let y = l + (u - l) * k as f64 / 1000.0;
                    let f = act.apply(y);
                    assert!(lower.at(y) <= f + 1e-12, "{act} lower at {y} on [{l},{u}]");
                    assert!(upper.at(y) >= f - 1e-12, "{act} upper at {y} on [{l},{u}]");
                }
            }
        }
    }

    #[test]
    fn rejects_empty_region() {
        let r = HyperRect {
            lo: vec![1.0],
            hi: vec![0.0],
        };
        assert!(relax(&scalar_relu(), "a", &Transform::identity(1), &r).is_err());
    }
}
