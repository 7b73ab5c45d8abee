//! Standard normal helpers shared by the probit model and the truncated
//! Gaussian densities of the importance-sampling baseline.

use libm::erfc;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn norm_pdf(t: f64) -> f64 {
    (-0.5 * t * t - LN_SQRT_2PI).exp()
}

pub fn norm_cdf(t: f64) -> f64 {
    0.5 * erfc(-t / std::f64::consts::SQRT_2)
}

/// Inverse Mills ratio `N(t) / Phi(t)`.
///
/// Uses the asymptotic expansion deep in the left tail, where `Phi` underflows.
pub fn inverse_mills(t: f64) -> f64 {
    if t < -30.0 {
        let t2 = t * t;
        -t - 1.0 / t + 2.0 / (t2 * t)
    } else {
        norm_pdf(t) / norm_cdf(t)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
