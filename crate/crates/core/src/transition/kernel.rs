use serde::{Deserialize, Serialize};

use crate::geometry::HyperRect;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Target box of the transition kernel, in transformed coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTarget {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub center: Vec<f64>,
}

impl KernelTarget {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        let center = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        Self { lo, hi, center }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

impl From<&HyperRect> for KernelTarget {
    fn from(r: &HyperRect) -> Self {
        KernelTarget::new(r.lo.clone(), r.hi.clone())
    }
}

/// Mass of `N(z, 1)` on `[lo, hi]`, i.e. `½·(erf((z−lo)/√2) − erf((z−hi)/√2))`.
///
/// When both arguments share a sign the difference is taken between
/// complementary error functions so tail masses keep full relative precision.
#[inline]
pub fn axis_mass(z: f64, lo: f64, hi: f64) -> f64 {
    let a = (z - lo) * FRAC_1_SQRT_2;
    let b = (z - hi) * FRAC_1_SQRT_2;
    let d = if b >= 0.0 {
        libm::erfc(b) - libm::erfc(a)
    } else if a <= 0.0 {
        libm::erfc(-a) - libm::erfc(-b)
    } else {
        libm::erf(a) - libm::erf(b)
    };
    (0.5 * d).clamp(0.0, 1.0)
}

/// Probability that a standard normal vector with mean `z` lands in `target`.
#[inline]
pub fn kernel_g(z: &[f64], target: &KernelTarget) -> f64 {
    let mut p = 1.0;
    for l in 0..target.lo.len() {
        p *= axis_mass(z[l], target.lo[l], target.hi[l]);
    }
    p
}

/// Gradient of `log g` with respect to `z`; `None` where the mass underflows.
pub(crate) fn log_kernel_gradient(z: &[f64], target: &KernelTarget) -> Option<Vec<f64>> {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    let mut grad = Vec::with_capacity(z.len());
    for l in 0..z.len() {
        let mass = axis_mass(z[l], target.lo[l], target.hi[l]);
        if mass < 1e-300 {
            return None;
        }
        let pdf = |t: f64| if t.is_finite() { INV_SQRT_2PI * (-0.5 * t * t).exp() } else { 0.0 };
        grad.push((pdf(z[l] - target.lo[l]) - pdf(z[l] - target.hi[l])) / mass);
    }
    Some(grad)
}
