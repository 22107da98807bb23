//! Characteristic exponents of the Inverse Gaussian subordinators, the
//! closed-form characteristic function of the integrated covariance process,
//! and the derivatives of the integral term needed by constrained moments.
//!
//! All complex square roots, logarithms and powers use the principal branch.
//! The closed form of the integral term has a removable singularity at zero
//! which is handled by an explicit threshold.

use num_complex::Complex64;

use crate::model::{ComplexMatrixArg, ModelParams};
use crate::numeric::{binomial, quad_gk, QuadError};

/// Arguments below this magnitude are treated as zero in the closed forms.
pub const BRANCH_THRESHOLD: f64 = 1e-12;

/// Highest supported derivative order of the integral term.
pub const MAX_DERIVATIVE_ORDER: usize = 8;

#[derive(Debug, Clone, thiserror::Error)]
pub enum CharFnError {
    #[error("derivative order {n} outside supported range 1..={max}")]
    DerivativeOrder { n: usize, max: usize },
    #[error("derivative quadrature failed: {0}")]
    Quadrature(#[from] QuadError),
}

/// One OU factor driven by an IG subordinator, over a fixed horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IgParams {
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
    pub t: f64,
}

impl IgParams {
    pub fn new(a: f64, b: f64, lambda: f64, t: f64) -> Self {
        debug_assert!(a > 0.0 && b > 0.0 && lambda > 0.0 && t > 0.0);
        Self { a, b, lambda, t }
    }
}

/// Characteristic exponent of an IG subordinator: -a (sqrt(-2iz + b^2) - b).
pub fn ig_exponent(a: f64, b: f64, z: Complex64) -> Complex64 {
    -a * ((-2.0 * Complex64::i() * z + b * b).sqrt() - b)
}

/// The integral term I(lambda t, ttheta) of the integrated-factor
/// characteristic exponent,
///
/// I = int_0^{lambda t} Psi(ttheta (1 - e^{-lambda t + s}) / lambda) ds.
///
/// Evaluated in closed form for Im(ttheta) >= 0, where the principal-branch
/// antiderivative agrees with the defining integral; for Im(ttheta) < 0 the
/// principal-branch closed form can land on the wrong log branch, so the
/// defining integral is evaluated by adaptive quadrature there.
pub fn integral_i(p: &IgParams, ttheta: Complex64) -> Complex64 {
    if ttheta.norm() < BRANCH_THRESHOLD {
        return Complex64::ZERO;
    }
    if ttheta.im >= 0.0 {
        integral_i_closed(p, ttheta)
    } else {
        integral_i_quad(p, ttheta)
    }
}

fn integral_i_closed(p: &IgParams, tt: Complex64) -> Complex64 {
    let lam = p.lambda;
    let b = p.b;
    let i = Complex64::i();
    let sqil = (i * lam).sqrt();
    let t1 = (-2.0 * tt - i * lam * b * b).sqrt();
    let t2 = (2.0 * tt * (1.0 - (-lam * p.t).exp()) + i * lam * b * b).sqrt();
    let g = ((-lam * p.t).exp() * (t1 + i * sqil * b).powi(2) / (t1 + i * t2).powi(2)).ln();
    -(2.0 * p.a / sqil) * (-t2 + sqil * b + 0.5 * i * t1 * g) + lam * p.a * b * p.t
}

fn integral_i_quad(p: &IgParams, tt: Complex64) -> Complex64 {
    let lam = p.lambda;
    let lt = lam * p.t;
    let f = |s: f64| ig_exponent(p.a, p.b, tt * (1.0 - (s - lt).exp()) / lam);
    let scale = (p.a * p.b * lt).abs().max(1.0);
    quad_gk(&f, 0.0, lt, 1e-11 * scale).unwrap_or_else(|_| integral_i_closed(p, tt))
}

/// n-th derivative of I with respect to ttheta, at a real argument.
///
/// At zero the closed forms apply; elsewhere the substituted integral
///
///   (-1)^{n+1} prod_{k=2}^{n}(2k-3) a / sqrt(i lambda)
///     * int_0^{1-e^{-lambda t}} v^n / ((v-1)(2 ttheta v + i lambda b^2)^{(2n-1)/2}) dv
///
/// is evaluated by adaptive Gauss-Kronrod quadrature.
pub fn d_integral_i(p: &IgParams, n: usize, ttheta: f64) -> Result<Complex64, CharFnError> {
    if n == 0 || n > MAX_DERIVATIVE_ORDER {
        return Err(CharFnError::DerivativeOrder { n, max: MAX_DERIVATIVE_ORDER });
    }
    if ttheta.abs() < BRANCH_THRESHOLD {
        return Ok(d_integral_i_zero(p, n));
    }
    let i = Complex64::i();
    let lam = p.lambda;
    let upper = 1.0 - (-lam * p.t).exp();
    let double_fact: f64 = (2..=n).map(|k| (2 * k - 3) as f64).product();
    let sign = if n % 2 == 0 { -1.0 } else { 1.0 };
    let pref = sign * double_fact * p.a / (i * lam).sqrt();
    let expo = (2 * n as i32 - 1) as f64 / 2.0;
    let ilb2 = i * lam * p.b * p.b;
    let f = |v: f64| {
        let base = 2.0 * ttheta * v + ilb2;
        Complex64::new(v.powi(n as i32) / (v - 1.0), 0.0) / base.powf(expo)
    };
    let val = quad_gk(&f, 0.0, upper, 1e-12)?;
    Ok(pref * val)
}

/// Closed forms of the derivatives at ttheta = 0.
fn d_integral_i_zero(p: &IgParams, n: usize) -> Complex64 {
    let lt = p.lambda * p.t;
    if n == 1 {
        let m1 = p.a / (p.lambda * p.b) * (lt - (1.0 - (-lt).exp()));
        return Complex64::new(0.0, m1);
    }
    let double_fact: f64 = (2..=n).map(|k| (2 * k - 3) as f64).product();
    let mut s = lt;
    for k in 1..=n {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        s += binomial(n, k) * sign * (1.0 - (-(k as f64) * lt).exp()) / k as f64;
    }
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let il_pow = (Complex64::i() * p.lambda).powu(n as u32);
    sign * double_fact * p.a / (il_pow * p.b.powi(2 * n as i32 - 1)) * s
}

/// Characteristic function evaluation of the integrated covariance matrix,
/// split into the idiosyncratic (K1) and common (K2) exponent terms.
#[derive(Debug, Clone, Copy)]
pub struct CfEvaluation {
    pub value: Complex64,
    pub k1: Complex64,
    pub k2: Complex64,
}

/// Characteristic function of the integrated covariance process at a 2x2
/// complex matrix argument.
pub fn cf_integrated_cov(mp: &ModelParams, t: f64, theta: &ComplexMatrixArg) -> CfEvaluation {
    let i = Complex64::i();
    let a = mp.loading();
    let diag = [theta.t11, theta.t22];
    let mut k1 = Complex64::ZERO;
    let mut k2 = Complex64::ZERO;
    for l in 0..2 {
        let pf = IgParams::new(mp.a_f[l], mp.b_f[l], mp.lambda_f[l], t);
        let decay_f = (1.0 - (-mp.lambda_f[l] * t).exp()) / mp.lambda_f[l];
        k1 += i * diag[l] * decay_f * mp.f0[l] + integral_i(&pf, diag[l]);

        let pv = IgParams::new(mp.a_v[l], mp.b_v[l], mp.lambda_v[l], t);
        let tr = theta.trace_with_column(&a, l);
        let decay_v = (1.0 - (-mp.lambda_v[l] * t).exp()) / mp.lambda_v[l];
        k2 += i * tr * decay_v * mp.v0[l] + integral_i(&pv, tr);
    }
    CfEvaluation { value: (k1 + k2).exp(), k1, k2 }
}

/// Characteristic function of v+ = tr(M Sigma+): the matrix CF at u*M.
pub fn cf_vplus(mp: &ModelParams, t: f64, u: Complex64) -> Complex64 {
    cf_integrated_cov(mp, t, &ComplexMatrixArg::scaled_m(u)).value
}

/// Joint characteristic function of the log returns Y_T.
///
/// phi_Y(u) = exp(i u (r - q) T) phi_Sigma+(-theta(u)/2) with
/// theta(u) = [[u1(1 - i u1), -i u1 u2], [-i u1 u2, u2(1 - i u2)]].
pub fn cf_logprices(
    mp: &ModelParams,
    r: f64,
    q: [f64; 2],
    t: f64,
    u: (Complex64, Complex64),
) -> Complex64 {
    let i = Complex64::i();
    let (u1, u2) = u;
    let off = -0.5 * (-i * u1 * u2);
    let arg = ComplexMatrixArg {
        t11: -0.5 * u1 * (1.0 - i * u1),
        t22: -0.5 * u2 * (1.0 - i * u2),
        t12: off,
        t21: off,
    };
    let drift = (i * (u1 * (r - q[0]) + u2 * (r - q[1])) * t).exp();
    drift * cf_integrated_cov(mp, t, &arg).value
}
