//! Moments of the integrated covariance process, windowed (constrained)
//! moments of the total variance v+, and FFT inversion of its density.
//!
//! Two independent routes produce the windowed moments: the convolution of
//! the characteristic function with the Fourier transform of the window
//! indicator, and direct integration against the FFT-inverted density. They
//! are cross-checked in the test suite.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::charfn::{cf_vplus, d_integral_i, CharFnError, IgParams};
use crate::model::ModelParams;
use crate::numeric::binomial;

/// Relative imaginary residue allowed in a windowed moment before the
/// computation is declared failed.
const IMAG_RESIDUE_REL: f64 = 1e-6;

/// |g| threshold at which the convolution integrals are truncated.
const TAIL_CUTOFF: f64 = 1e-10;

/// Absolute tolerance on the estimated truncated tail mass.
const TAIL_TOLERANCE: f64 = 1e-5;

/// Sample points per oscillation period of the window transform.
const SAMPLES_PER_PERIOD: f64 = 128.0;

#[derive(Debug, Clone, thiserror::Error)]
pub enum MomentError {
    #[error("constrained-moment path requires zero initial subordinator values")]
    InitialValuesNotSupported,
    #[error("invalid interval [{0}, {1})")]
    InvalidInterval(f64, f64),
    #[error("moment order {0} above supported maximum {1}")]
    OrderTooHigh(usize, usize),
    #[error("imaginary residue {im:.3e} too large for real moment {re:.3e}")]
    ImaginaryResidue { re: f64, im: f64 },
    #[error("grid size {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("density mass {0:.4} outside [0.9, 1.01]; truncation interval too small")]
    MassOutOfRange(f64),
    #[error("density value {0:.3e} below the -1e-6 noise floor")]
    DensityTooNegative(f64),
    #[error("characteristic function has not decayed below {cutoff:.1e} by |u| = {reached}")]
    UnboundedTail { cutoff: f64, reached: f64 },
    #[error("truncated tail estimate {est:.3e} exceeds tolerance {tol:.3e}")]
    TailEstimate { est: f64, tol: f64 },
    #[error(transparent)]
    CharFn(#[from] CharFnError),
}

/// First and second moments of the integrated covariance entries and of v+.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSet {
    pub m11: f64,
    pub m22: f64,
    pub m12: f64,
    pub m11sq: f64,
    pub m22sq: f64,
    pub m12sq: f64,
    pub m1122: f64,
    pub m1112: f64,
    pub m2212: f64,
    /// E v+_T
    pub vstar: f64,
    /// E (v+_T - vstar)^2
    pub vplus_central2: f64,
}

/// Mean and variance of one integrated OU factor over [0, t], from the first
/// two derivatives of the integral term at zero.
fn factor_mean_var(p: &IgParams, x0: f64) -> (f64, f64) {
    let decay = (1.0 - (-p.lambda * p.t).exp()) / p.lambda;
    let d1 = d_integral_i(p, 1, 0.0).expect("order 1 supported");
    let d2 = d_integral_i(p, 2, 0.0).expect("order 2 supported");
    // D1 I(0) = i * m1, D2 I(0) = -var
    (decay * x0 + d1.im, -d2.re)
}

/// First/second/cross moments of the integrated covariance entries.
pub fn unconstrained_moments(mp: &ModelParams, t: f64) -> MomentSet {
    let a = mp.loading();
    let mut mean_f = [0.0; 2];
    let mut var_f = [0.0; 2];
    let mut mean_v = [0.0; 2];
    let mut var_v = [0.0; 2];
    for l in 0..2 {
        let (m, v) = factor_mean_var(&IgParams::new(mp.a_f[l], mp.b_f[l], mp.lambda_f[l], t), mp.f0[l]);
        mean_f[l] = m;
        var_f[l] = v;
        let (m, v) = factor_mean_var(&IgParams::new(mp.a_v[l], mp.b_v[l], mp.lambda_v[l], t), mp.v0[l]);
        mean_v[l] = m;
        var_v[l] = v;
    }
    let col = |k: usize, l: usize| a[k][l];
    let m11 = mean_f[0] + (0..2).map(|l| col(0, l).powi(2) * mean_v[l]).sum::<f64>();
    let m22 = mean_f[1] + (0..2).map(|l| col(1, l).powi(2) * mean_v[l]).sum::<f64>();
    let m12 = (0..2).map(|l| col(0, l) * col(1, l) * mean_v[l]).sum::<f64>();
    let var11 = var_f[0] + (0..2).map(|l| col(0, l).powi(4) * var_v[l]).sum::<f64>();
    let var22 = var_f[1] + (0..2).map(|l| col(1, l).powi(4) * var_v[l]).sum::<f64>();
    let var12 = (0..2).map(|l| (col(0, l) * col(1, l)).powi(2) * var_v[l]).sum::<f64>();
    let cov1122 = var12;
    let cov1112 = (0..2).map(|l| col(0, l).powi(3) * col(1, l) * var_v[l]).sum::<f64>();
    let cov2212 = (0..2).map(|l| col(0, l) * col(1, l).powi(3) * var_v[l]).sum::<f64>();
    let vstar = m11 + m22 - 2.0 * m12;
    let central2 = var11 + var22 + 4.0 * var12 + 2.0 * cov1122 - 4.0 * cov1112 - 4.0 * cov2212;
    MomentSet {
        m11,
        m22,
        m12,
        m11sq: var11 + m11 * m11,
        m22sq: var22 + m22 * m22,
        m12sq: var12 + m12 * m12,
        m1122: cov1122 + m11 * m22,
        m1112: cov1112 + m11 * m12,
        m2212: cov2212 + m22 * m12,
        vstar,
        vplus_central2: central2,
    }
}

// ---------------------------------------------------------------------------
// FFT density inversion
// ---------------------------------------------------------------------------

/// Density of v+ on a uniform grid over [a, b), recovered from the
/// characteristic function by the trapezoid rule and a forward FFT.
#[derive(Debug, Clone)]
pub struct DensityGrid {
    pub x: Vec<f64>,
    pub pdf: Vec<f64>,
    pub eta: f64,
    pub delta: f64,
}

impl DensityGrid {
    /// Trapezoid mass over the grid.
    pub fn mass(&self) -> f64 {
        trapezoid(&self.pdf, self.eta)
    }

    /// Trapezoid first moment over the grid.
    pub fn mean(&self) -> f64 {
        let weighted: Vec<f64> = self.x.iter().zip(&self.pdf).map(|(x, f)| x * f).collect();
        trapezoid(&weighted, self.eta)
    }

    /// Cumulative distribution at the grid points (trapezoid).
    pub fn cdf(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.x.len());
        let mut acc = 0.0;
        out.push(0.0);
        for i in 1..self.x.len() {
            acc += 0.5 * (self.pdf[i - 1] + self.pdf[i]) * self.eta;
            out.push(acc);
        }
        out
    }

    /// Two-column delimited text (x, pdf) for external plotting.
    pub fn write_tsv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x\tpdf")?;
        for (x, f) in self.x.iter().zip(&self.pdf) {
            writeln!(w, "{x:.10e}\t{f:.10e}")?;
        }
        Ok(())
    }
}

fn trapezoid(y: &[f64], h: f64) -> f64 {
    if y.len() < 2 {
        return 0.0;
    }
    let inner: f64 = y[1..y.len() - 1].iter().sum();
    h * (inner + 0.5 * (y[0] + y[y.len() - 1]))
}

/// Invert the characteristic function of v+ into a density grid on [a, b).
///
/// h_k = w_k delta e^{-i a delta k} phi(delta k) with half end weights;
/// pdf_j = Re(FFT(h))_j / pi, tiny negative values clamped to zero.
pub fn pdf_fft(
    mp: &ModelParams,
    t: f64,
    interval: (f64, f64),
    n: usize,
) -> Result<DensityGrid, MomentError> {
    let (a, b) = interval;
    if !(a < b) {
        return Err(MomentError::InvalidInterval(a, b));
    }
    if n < 2 || !n.is_power_of_two() {
        return Err(MomentError::NotPowerOfTwo(n));
    }
    let eta = (b - a) / n as f64;
    let delta = 2.0 * std::f64::consts::PI / (b - a);
    let mut buf: Vec<Complex64> = (0..n)
        .into_par_iter()
        .map(|k| {
            let u = delta * k as f64;
            let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
            let phase = Complex64::new(0.0, -a * u).exp();
            w * delta * phase * cf_vplus(mp, t, Complex64::new(u, 0.0))
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mut pdf = Vec::with_capacity(n);
    for v in &buf {
        let f = v.re / std::f64::consts::PI;
        if f < -1e-6 {
            return Err(MomentError::DensityTooNegative(f));
        }
        pdf.push(f.max(0.0));
    }
    let x: Vec<f64> = (0..n).map(|j| a + eta * j as f64).collect();
    let grid = DensityGrid { x, pdf, eta, delta };
    let mass = grid.mass();
    if !(0.9..=1.01).contains(&mass) {
        return Err(MomentError::MassOutOfRange(mass));
    }
    Ok(grid)
}

// ---------------------------------------------------------------------------
// Constrained characteristic function and windowed moments (Prop 3.3 route)
// ---------------------------------------------------------------------------

/// Fourier transform of the window indicator, up to the -i factor pulled
/// outside: f(y, a, b) = (e^{iby} - e^{iay}) / y, with f(0) = i (b - a).
fn window_transform(y: f64, a: f64, b: f64) -> Complex64 {
    if y.abs() < 1e-10 {
        Complex64::new(0.0, b - a)
    } else {
        (Complex64::new(0.0, b * y).exp() - Complex64::new(0.0, a * y).exp()) / y
    }
}

fn require_zero_initial(mp: &ModelParams) -> Result<(), MomentError> {
    if mp.f0 != [0.0; 2] || mp.v0 != [0.0; 2] {
        return Err(MomentError::InitialValuesNotSupported);
    }
    Ok(())
}

/// log of the scalar CF of v+: kappa(x) = K1(Mx) + K2(Mx), zero initial values.
fn kappa(mp: &ModelParams, t: f64, x: f64) -> Complex64 {
    let (w1, w2) = mp.trace_weights();
    let mut acc = Complex64::ZERO;
    for l in 0..2 {
        acc += crate::charfn::integral_i(
            &IgParams::new(mp.a_f[l], mp.b_f[l], mp.lambda_f[l], t),
            Complex64::new(x, 0.0),
        );
    }
    for (l, w) in [(0usize, w1), (1usize, w2)] {
        acc += crate::charfn::integral_i(
            &IgParams::new(mp.a_v[l], mp.b_v[l], mp.lambda_v[l], t),
            Complex64::new(w * x, 0.0),
        );
    }
    acc
}

/// n-th derivative of kappa in x; the V terms carry the chain-rule weight
/// theta_l^n.
fn d_kappa(mp: &ModelParams, t: f64, x: f64, n: usize) -> Result<Complex64, MomentError> {
    let (w1, w2) = mp.trace_weights();
    let mut acc = Complex64::ZERO;
    for l in 0..2 {
        acc += d_integral_i(&IgParams::new(mp.a_f[l], mp.b_f[l], mp.lambda_f[l], t), n, x)?;
    }
    for (l, w) in [(0usize, w1), (1usize, w2)] {
        if w.abs() < 1e-15 {
            continue;
        }
        acc += w.powi(n as i32)
            * d_integral_i(&IgParams::new(mp.a_v[l], mp.b_v[l], mp.lambda_v[l], t), n, w * x)?;
    }
    Ok(acc)
}

/// Find the truncation radius where |g| falls below the cutoff.
fn truncation_radius(mp: &ModelParams, t: f64) -> Result<f64, MomentError> {
    let mut u = 50.0;
    while kappa(mp, t, u).re.exp() > TAIL_CUTOFF {
        u += 50.0;
        if u > 4000.0 {
            return Err(MomentError::UnboundedTail { cutoff: TAIL_CUTOFF, reached: u });
        }
    }
    Ok(u)
}

/// Estimated modulus of the integral of |g| beyond the truncation radius,
/// from a local exponential fit of the decay.
fn tail_integral_estimate(mp: &ModelParams, t: f64, u: f64) -> f64 {
    let ge = kappa(mp, t, u).re.exp();
    let gh = kappa(mp, t, 0.75 * u).re.exp();
    let rate = ((gh / ge).ln() / (0.25 * u)).max(1e-3);
    ge / rate
}

/// Shared node table for the convolution route: g and its derivatives
/// g^{(k)} at x = -y over a symmetric uniform grid.
struct ConvolutionTable {
    ys: Vec<f64>,
    dy: f64,
    /// gk[k][i] = g^{(k)}(-ys[i]), k = 0..=kmax
    gk: Vec<Vec<Complex64>>,
    tail_est: f64,
}

fn build_table(
    mp: &ModelParams,
    t: f64,
    kmax: usize,
    freq: f64,
) -> Result<ConvolutionTable, MomentError> {
    let u = truncation_radius(mp, t)?;
    let dy = (2.0 * std::f64::consts::PI / (freq.max(1.0) * SAMPLES_PER_PERIOD)).min(0.02);
    let half = (u / dy).ceil() as i64;
    let ys: Vec<f64> = (-half..=half).map(|i| i as f64 * dy).collect();
    let rows: Result<Vec<(Complex64, Vec<Complex64>)>, MomentError> = ys
        .par_iter()
        .map(|&y| {
            let x = -y;
            let g = kappa(mp, t, x).exp();
            let mut dk = Vec::with_capacity(kmax);
            for n in 1..=kmax {
                dk.push(d_kappa(mp, t, x, n)?);
            }
            Ok((g, dk))
        })
        .collect();
    let rows = rows?;
    // Leibniz recurrence g^{(k)} = sum_j C(k-1, j) kappa^{(j+1)} g^{(k-1-j)}
    let m = ys.len();
    let mut gk = vec![vec![Complex64::ZERO; m]; kmax + 1];
    for (i, (g, dk)) in rows.iter().enumerate() {
        gk[0][i] = *g;
        for k in 1..=kmax {
            let mut acc = Complex64::ZERO;
            for j in 0..k {
                acc += binomial(k - 1, j) * dk[j] * gk[k - 1 - j][i];
            }
            gk[k][i] = acc;
        }
    }
    let tail_est = tail_integral_estimate(mp, t, u);
    Ok(ConvolutionTable { ys, dy, gk, tail_est })
}

impl ConvolutionTable {
    /// m(k, a, b) = i^{-k} (-i / 2 pi) int f(y, a, b) g^{(k)}(-y) dy
    fn raw_moment(&self, k: usize, a: f64, b: f64) -> Result<f64, MomentError> {
        let vals: Vec<f64> = {
            let gk = &self.gk[k];
            let re_im: Vec<Complex64> = self
                .ys
                .iter()
                .zip(gk)
                .map(|(&y, &g)| window_transform(y, a, b) * g)
                .collect();
            vec![
                trapezoid(&re_im.iter().map(|z| z.re).collect::<Vec<_>>(), self.dy),
                trapezoid(&re_im.iter().map(|z| z.im).collect::<Vec<_>>(), self.dy),
            ]
        };
        let integral = Complex64::new(vals[0], vals[1]);
        let i_pow = match k % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, -1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, 1.0),
        };
        let m = i_pow * Complex64::new(0.0, -1.0 / (2.0 * std::f64::consts::PI)) * integral;
        let tail = self.tail_est * (b - a).abs() / std::f64::consts::PI;
        if tail > TAIL_TOLERANCE {
            return Err(MomentError::TailEstimate { est: tail, tol: TAIL_TOLERANCE });
        }
        if m.im.abs() > IMAG_RESIDUE_REL * m.re.abs() && m.im.abs() > 1e-12 {
            return Err(MomentError::ImaginaryResidue { re: m.re, im: m.im });
        }
        Ok(m.re)
    }
}

/// Constrained characteristic function phi(u, a, b) of v+ by the convolution
/// formula; requires zero initial subordinator values.
pub fn constrained_cf(
    mp: &ModelParams,
    t: f64,
    u: f64,
    interval: (f64, f64),
) -> Result<Complex64, MomentError> {
    let (a, b) = interval;
    if a > b {
        return Err(MomentError::InvalidInterval(a, b));
    }
    if a == b {
        return Ok(Complex64::ZERO);
    }
    require_zero_initial(mp)?;
    let radius = truncation_radius(mp, t)?;
    let freq = a.abs().max(b.abs()).max(1.0);
    let dy = (2.0 * std::f64::consts::PI / (freq * SAMPLES_PER_PERIOD)).min(0.02);
    // y ranges over u +- radius so that the g argument covers its support
    let lo = u - radius;
    let hi = u + radius;
    let n = ((hi - lo) / dy).ceil() as usize + 1;
    let vals: Vec<Complex64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let y = lo + i as f64 * dy;
            window_transform(y, a, b) * kappa(mp, t, u - y).exp()
        })
        .collect();
    let re = trapezoid(&vals.iter().map(|z| z.re).collect::<Vec<_>>(), dy);
    let im = trapezoid(&vals.iter().map(|z| z.im).collect::<Vec<_>>(), dy);
    let tail = tail_integral_estimate(mp, t, radius) * (b - a).abs() / std::f64::consts::PI;
    if tail > TAIL_TOLERANCE {
        return Err(MomentError::TailEstimate { est: tail, tol: TAIL_TOLERANCE });
    }
    Ok(Complex64::new(0.0, -1.0 / (2.0 * std::f64::consts::PI)) * Complex64::new(re, im))
}

/// Windowed raw moments m(k, a, b) = E[v^k 1_{[a,b)}(v)] for k = 0..=kmax via
/// the convolution route.
pub fn constrained_raw_moments(
    mp: &ModelParams,
    t: f64,
    interval: (f64, f64),
    kmax: usize,
) -> Result<Vec<f64>, MomentError> {
    let (a, b) = interval;
    if !(a < b) {
        return Err(MomentError::InvalidInterval(a, b));
    }
    if kmax > 6 {
        return Err(MomentError::OrderTooHigh(kmax, 6));
    }
    require_zero_initial(mp)?;
    let table = build_table(mp, t, kmax, a.abs().max(b.abs()))?;
    (0..=kmax).map(|k| table.raw_moment(k, a, b)).collect()
}

/// Centered moments from raw ones over one window: the binomial shift
/// m~(k) = sum_i C(k, i) (-v_j)^{k-i} m(i).
pub fn centered_from_raw(knot: f64, raw: &[f64]) -> Vec<f64> {
    (0..raw.len())
        .map(|k| {
            (0..=k)
                .map(|i| binomial(k, i) * (-knot).powi((k - i) as i32) * raw[i])
                .sum()
        })
        .collect()
}

/// Inverse binomial shift: recover raw moments from centered ones.
pub fn raw_from_centered(knot: f64, centered: &[f64]) -> Vec<f64> {
    (0..centered.len())
        .map(|k| {
            (0..=k)
                .map(|i| binomial(k, i) * knot.powi((k - i) as i32) * centered[i])
                .sum()
        })
        .collect()
}

/// Windowed moments of v+ over a knot grid: raw moments over the whole
/// interval plus centered moments per knot window.
#[derive(Debug, Clone)]
pub struct ConstrainedMoments {
    pub interval: (f64, f64),
    pub knots: Vec<f64>,
    /// m(k, a, b) over the whole interval, k = 0..=kmax
    pub raw: Vec<f64>,
    /// m~(l, v_j, v_{j+1}) for l = 0..=kmax, one row per knot window
    pub centered_per_knot: Vec<Vec<f64>>,
}

fn check_knots(knots: &[f64]) -> Result<(), MomentError> {
    if knots.len() < 2 || knots.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MomentError::InvalidInterval(
            knots.first().copied().unwrap_or(f64::NAN),
            knots.last().copied().unwrap_or(f64::NAN),
        ));
    }
    Ok(())
}

impl ConstrainedMoments {
    /// Convolution route (Prop 3.3): one shared node table serves every
    /// window and every order.
    pub fn by_convolution(
        mp: &ModelParams,
        t: f64,
        knots: &[f64],
        kmax: usize,
    ) -> Result<Self, MomentError> {
        check_knots(knots)?;
        if kmax > 6 {
            return Err(MomentError::OrderTooHigh(kmax, 6));
        }
        require_zero_initial(mp)?;
        let (a, b) = (knots[0], *knots.last().unwrap());
        let table = build_table(mp, t, kmax, a.abs().max(b.abs()))?;
        let raw: Vec<f64> = (0..=kmax)
            .map(|k| table.raw_moment(k, a, b))
            .collect::<Result<_, _>>()?;
        let centered_per_knot = knots
            .windows(2)
            .map(|w| {
                let raw_w: Vec<f64> = (0..=kmax)
                    .map(|k| table.raw_moment(k, w[0], w[1]))
                    .collect::<Result<_, _>>()?;
                Ok(centered_from_raw(w[0], &raw_w))
            })
            .collect::<Result<_, MomentError>>()?;
        Ok(Self { interval: (a, b), knots: knots.to_vec(), raw, centered_per_knot })
    }

    /// Density route: trapezoid integration of (x - v_j)^l against the grid
    /// pdf, with linear interpolation at window edges.
    pub fn from_density(grid: &DensityGrid, knots: &[f64], kmax: usize) -> Result<Self, MomentError> {
        check_knots(knots)?;
        let (a, b) = (knots[0], *knots.last().unwrap());
        let centered_per_knot: Vec<Vec<f64>> = knots
            .windows(2)
            .map(|w| {
                (0..=kmax)
                    .map(|l| window_integral(grid, w[0], w[1], |x| (x - w[0]).powi(l as i32)))
                    .collect()
            })
            .collect();
        let raw = (0..=kmax)
            .map(|k| window_integral(grid, a, b, |x| x.powi(k as i32)))
            .collect();
        Ok(Self { interval: (a, b), knots: knots.to_vec(), raw, centered_per_knot })
    }
}

/// Trapezoid integral of w(x) * pdf(x) over [lo, hi] on the density grid;
/// the density past the last grid point is taken as zero.
fn window_integral<W: Fn(f64) -> f64>(grid: &DensityGrid, lo: f64, hi: f64, w: W) -> f64 {
    let pdf_at = |x: f64| -> f64 {
        let pos = (x - grid.x[0]) / grid.eta;
        let i = pos.floor() as isize;
        if i < 0 {
            return 0.0;
        }
        let i = i as usize;
        if i + 1 >= grid.pdf.len() {
            if i + 1 == grid.pdf.len() {
                // last cell: taper to zero at the right edge
                let frac = pos - i as f64;
                return grid.pdf[i] * (1.0 - frac);
            }
            return 0.0;
        }
        let frac = pos - i as f64;
        grid.pdf[i] * (1.0 - frac) + grid.pdf[i + 1] * frac
    };
    // integration nodes: window edges plus interior grid points
    let mut nodes = vec![lo];
    let first = ((lo - grid.x[0]) / grid.eta).ceil() as isize;
    let mut i = first.max(0) as usize;
    while i < grid.x.len() && grid.x[i] < hi {
        if grid.x[i] > lo {
            nodes.push(grid.x[i]);
        }
        i += 1;
    }
    nodes.push(hi);
    let mut acc = 0.0;
    for pair in nodes.windows(2) {
        let (x0, x1) = (pair[0], pair[1]);
        acc += 0.5 * (w(x0) * pdf_at(x0) + w(x1) * pdf_at(x1)) * (x1 - x0);
    }
    acc
}
