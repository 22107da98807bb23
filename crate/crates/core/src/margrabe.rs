//! Conditional Margrabe price as a function of the total integrated variance,
//! its first two derivatives in the annualized variance, and the deltas.

use crate::model::ContractParams;
use crate::numeric::{norm_cdf, norm_pdf};

/// Below this annualized variance the derivative formulas are singular.
pub const DERIVATIVE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, thiserror::Error)]
pub enum MargrabeError {
    #[error("total variance must be nonnegative, got {0}")]
    NegativeVariance(f64),
    #[error("expansion point {0} too close to the v = 0 singularity")]
    SingularExpansionPoint(f64),
    #[error("derivative order {0} not supported (1 or 2)")]
    UnsupportedOrder(usize),
    #[error("asset index {0} not in {{1, 2}}")]
    BadAsset(usize),
}

/// Discount factors applied to the two legs.
///
/// The default follows the model's pricing formula with e^{-(r - q_j) T}
/// factors; `Classical` switches to the textbook e^{-q_j T} convention for
/// sensitivity analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiscountConvention {
    #[default]
    ForwardRate,
    Classical,
}

/// Shorthand quantities M1, M2, M3 of the pricing formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MargrabeShorthand {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

impl MargrabeShorthand {
    pub fn new(cp: &ContractParams) -> Self {
        Self::with_convention(cp, DiscountConvention::ForwardRate)
    }

    pub fn with_convention(cp: &ContractParams, conv: DiscountConvention) -> Self {
        let t = cp.maturity;
        let ratio = (cp.c * cp.s0[0] / (cp.m * cp.s0[1])).ln();
        match conv {
            DiscountConvention::ForwardRate => Self {
                m1: cp.c * (-(cp.r - cp.q[0]) * t).exp() * cp.s0[0],
                m2: cp.m * (-(cp.r - cp.q[1]) * t).exp() * cp.s0[1],
                m3: ratio + (cp.q[0] - cp.q[1]) * t,
            },
            DiscountConvention::Classical => Self {
                m1: cp.c * (-cp.q[0] * t).exp() * cp.s0[0],
                m2: cp.m * (-cp.q[1] * t).exp() * cp.s0[1],
                m3: ratio + (cp.q[1] - cp.q[0]) * t,
            },
        }
    }

    fn d12(&self, v: f64) -> (f64, f64) {
        let sv = v.sqrt();
        let d1 = (self.m3 + 0.5 * v) / sv;
        (d1, d1 - sv)
    }
}

/// Conditional Margrabe price at total integrated variance `v` (the v = 0
/// and v = infinity ends are handled by their analytic limits).
pub fn margrabe_price(cp: &ContractParams, v: f64) -> Result<f64, MargrabeError> {
    margrabe_price_with(cp, v, DiscountConvention::ForwardRate)
}

pub fn margrabe_price_with(
    cp: &ContractParams,
    v: f64,
    conv: DiscountConvention,
) -> Result<f64, MargrabeError> {
    if !(v >= 0.0) {
        return Err(MargrabeError::NegativeVariance(v));
    }
    let sh = MargrabeShorthand::with_convention(cp, conv);
    if v == 0.0 {
        return Ok((sh.m1 - sh.m2).max(0.0));
    }
    let (d1, d2) = sh.d12(v);
    Ok(sh.m1 * norm_cdf(d1) - sh.m2 * norm_cdf(d2))
}

/// k-th derivative (k = 1, 2) of the conditional price with respect to the
/// annualized variance v = v+_T / T.
pub fn d_margrabe(cp: &ContractParams, v: f64, k: usize) -> Result<f64, MargrabeError> {
    if !(k == 1 || k == 2) {
        return Err(MargrabeError::UnsupportedOrder(k));
    }
    if !(v > DERIVATIVE_FLOOR) {
        return Err(MargrabeError::SingularExpansionPoint(v));
    }
    let sh = MargrabeShorthand::new(cp);
    let t = cp.maturity;
    let st = t.sqrt();
    let d1 = sh.m3 / (st * v.sqrt()) + 0.5 * st * v.sqrt();
    let d2 = d1 - st * v.sqrt();
    let d1p = -0.5 * sh.m3 / st * v.powf(-1.5) + 0.25 * st / v.sqrt();
    let d2p = d1p - 0.5 * st / v.sqrt();
    let f1 = norm_pdf(d1);
    let f2 = norm_pdf(d2);
    if k == 1 {
        return Ok(sh.m1 * f1 * d1p - sh.m2 * f2 * d2p);
    }
    let d1pp = 0.75 * sh.m3 / st * v.powf(-2.5) - 0.125 * st * v.powf(-1.5);
    let d2pp = d1pp + 0.25 * st * v.powf(-1.5);
    Ok(sh.m1 * f1 * (d1pp - d1 * d1p * d1p) - sh.m2 * f2 * (d2pp - d2 * d2p * d2p))
}

/// Delta with respect to the spot of asset `j` (1 or 2), at total integrated
/// variance `v`.
pub fn delta(cp: &ContractParams, v: f64, j: usize) -> Result<f64, MargrabeError> {
    if !(v > 0.0) {
        return Err(MargrabeError::SingularExpansionPoint(v));
    }
    let sh = MargrabeShorthand::new(cp);
    let (d1, d2) = sh.d12(v);
    let t = cp.maturity;
    match j {
        1 => Ok(cp.c * (-(cp.r - cp.q[0]) * t).exp() * norm_cdf(d1)),
        2 => Ok(-cp.m * (-(cp.r - cp.q[1]) * t).exp() * norm_cdf(d2)),
        _ => Err(MargrabeError::BadAsset(j)),
    }
}
