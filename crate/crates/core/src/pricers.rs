//! The approximate unconditional pricers: Taylor expansions of order 1-2,
//! the cubic-spline contraction against windowed moments, and quadrature
//! against the FFT-inverted density.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::margrabe::{d_margrabe, margrabe_price, MargrabeError, DERIVATIVE_FLOOR};
use crate::model::{ContractParams, ModelParams};
use crate::moments::{pdf_fft, unconstrained_moments, ConstrainedMoments, DensityGrid, MomentError};
use crate::spline::{EndCondition, SplineCoefficients, SplineError};

#[derive(Debug, Clone, thiserror::Error)]
pub enum PricerError {
    #[error("taylor order {0} not supported (1 or 2)")]
    TaylorOrder(usize),
    #[error("need at least 4 spline knots, got {0}")]
    TooFewKnots(usize),
    #[error("spline knots must be nonnegative and strictly increasing")]
    BadKnots,
    #[error(transparent)]
    Margrabe(#[from] MargrabeError),
    #[error(transparent)]
    Moments(#[from] MomentError),
    #[error(transparent)]
    Spline(#[from] SplineError),
}

/// Pricing method tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Taylor1,
    Taylor2,
    Spline,
    Fft,
    Mc,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Taylor1, Method::Taylor2, Method::Spline, Method::Fft, Method::Mc];

    pub fn tag(&self) -> &'static str {
        match self {
            Method::Taylor1 => "taylor1",
            Method::Taylor2 => "taylor2",
            Method::Spline => "spline",
            Method::Fft => "fft",
            Method::Mc => "mc",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "taylor1" => Ok(Method::Taylor1),
            "taylor2" => Ok(Method::Taylor2),
            "spline" | "spl" => Ok(Method::Spline),
            "fft" => Ok(Method::Fft),
            "mc" => Ok(Method::Mc),
            other => Err(format!("unknown method '{other}' (expected taylor1|taylor2|spline|fft|mc)")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Result of one pricing call: method, price, optional 95% confidence
/// interval (Monte Carlo only), wall-clock time and the numeric settings used.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriceReport {
    pub method: Method,
    pub price: f64,
    pub ci: Option<(f64, f64)>,
    pub runtime_seconds: f64,
    pub config_echo: BTreeMap<String, f64>,
}

/// Taylor price of order 1 or 2 around the annualized expansion point
/// (the mean of v+/T unless overridden).
pub fn price_taylor(
    mp: &ModelParams,
    cp: &ContractParams,
    order: usize,
    vstar_override: Option<f64>,
) -> Result<PriceReport, PricerError> {
    if !(order == 1 || order == 2) {
        return Err(PricerError::TaylorOrder(order));
    }
    let start = Instant::now();
    let t = cp.maturity;
    let ms = unconstrained_moments(mp, t);
    let mean_ann = ms.vstar / t;
    let var_ann = ms.vplus_central2 / (t * t);
    let v0 = vstar_override.unwrap_or(mean_ann);
    let mut price = margrabe_price(cp, v0 * t)?;
    let d1 = d_margrabe(cp, v0, 1)?;
    price += d1 * (mean_ann - v0);
    if order == 2 {
        let central2 = var_ann + (mean_ann - v0) * (mean_ann - v0);
        price += 0.5 * d_margrabe(cp, v0, 2)? * central2;
    }
    let mut echo = BTreeMap::new();
    echo.insert("order".into(), order as f64);
    echo.insert("vstar".into(), v0);
    Ok(PriceReport {
        method: if order == 1 { Method::Taylor1 } else { Method::Taylor2 },
        price,
        ci: None,
        runtime_seconds: start.elapsed().as_secs_f64(),
        config_echo: echo,
    })
}

/// Cubic spline of the conditional price over the knot grid.
///
/// Both ends are clamped with the analytic first derivative; a left knot at
/// v = 0 sits on the derivative singularity and falls back to the natural
/// condition there.
pub fn build_spline(cp: &ContractParams, knots: &[f64]) -> Result<SplineCoefficients, PricerError> {
    if knots.len() < 4 {
        return Err(PricerError::TooFewKnots(knots.len()));
    }
    if knots[0] < 0.0 || knots.windows(2).any(|w| w[0] >= w[1]) {
        return Err(PricerError::BadKnots);
    }
    let t = cp.maturity;
    let values: Vec<f64> = knots
        .iter()
        .map(|&v| margrabe_price(cp, v))
        .collect::<Result<_, _>>()?;
    // derivative in total variance = (1/T) * derivative in annualized variance
    let left = if knots[0] <= DERIVATIVE_FLOOR * t {
        EndCondition::Natural
    } else {
        EndCondition::Clamped(d_margrabe(cp, knots[0] / t, 1)? / t)
    };
    let right = EndCondition::Clamped(d_margrabe(cp, knots[knots.len() - 1] / t, 1)? / t);
    Ok(SplineCoefficients::build(knots, &values, left, right)?)
}

/// Uniform knot grid with `nknots` subintervals over [a, b].
pub fn uniform_knots(interval: (f64, f64), nknots: usize) -> Vec<f64> {
    let (a, b) = interval;
    (0..=nknots)
        .map(|j| a + (b - a) * j as f64 / nknots as f64)
        .collect()
}

/// Contract spline coefficients against windowed moments centered at the
/// left knot of each window.
pub fn contract_spline(spline: &SplineCoefficients, cm: &ConstrainedMoments) -> f64 {
    spline
        .alpha
        .iter()
        .zip(&cm.centered_per_knot)
        .map(|(coef, cent)| (0..4).map(|l| coef[l] * cent[l]).sum::<f64>())
        .sum()
}

/// Spline price: E[C_spl(v+)] via windowed moments from the inverted density.
pub fn price_spline(
    mp: &ModelParams,
    cp: &ContractParams,
    interval: (f64, f64),
    nknots: usize,
) -> Result<PriceReport, PricerError> {
    if nknots < 4 {
        return Err(PricerError::TooFewKnots(nknots));
    }
    let start = Instant::now();
    let n = pdf_points_for(nknots);
    let grid = pdf_fft(mp, cp.maturity, interval, n)?;
    let knots = uniform_knots(interval, nknots);
    let spline = build_spline(cp, &knots)?;
    let cm = ConstrainedMoments::from_density(&grid, &knots, 3)?;
    let price = contract_spline(&spline, &cm);
    let mut echo = BTreeMap::new();
    echo.insert("interval_a".into(), interval.0);
    echo.insert("interval_b".into(), interval.1);
    echo.insert("knots".into(), nknots as f64);
    echo.insert("pdf_n".into(), n as f64);
    Ok(PriceReport {
        method: Method::Spline,
        price,
        ci: None,
        runtime_seconds: start.elapsed().as_secs_f64(),
        config_echo: echo,
    })
}

/// Same contraction but with moments from the convolution route; slower,
/// used for cross-validation.
pub fn price_spline_convolution(
    mp: &ModelParams,
    cp: &ContractParams,
    interval: (f64, f64),
    nknots: usize,
) -> Result<PriceReport, PricerError> {
    if nknots < 4 {
        return Err(PricerError::TooFewKnots(nknots));
    }
    let start = Instant::now();
    let knots = uniform_knots(interval, nknots);
    let spline = build_spline(cp, &knots)?;
    let cm = ConstrainedMoments::by_convolution(mp, cp.maturity, &knots, 3)?;
    let price = contract_spline(&spline, &cm);
    let mut echo = BTreeMap::new();
    echo.insert("interval_a".into(), interval.0);
    echo.insert("interval_b".into(), interval.1);
    echo.insert("knots".into(), nknots as f64);
    Ok(PriceReport {
        method: Method::Spline,
        price,
        ci: None,
        runtime_seconds: start.elapsed().as_secs_f64(),
        config_echo: echo,
    })
}

fn pdf_points_for(nknots: usize) -> usize {
    // keep knot windows aligned with the density grid
    (64 * nknots).next_power_of_two().max(4096)
}

/// FFT price: trapezoid quadrature of the conditional price against the
/// inverted density.
pub fn price_fft(
    mp: &ModelParams,
    cp: &ContractParams,
    interval: (f64, f64),
    n: usize,
) -> Result<PriceReport, PricerError> {
    let start = Instant::now();
    let grid = pdf_fft(mp, cp.maturity, interval, n)?;
    let price = expected_price_on_grid(cp, &grid)?;
    let mut echo = BTreeMap::new();
    echo.insert("interval_a".into(), interval.0);
    echo.insert("interval_b".into(), interval.1);
    echo.insert("n".into(), n as f64);
    Ok(PriceReport {
        method: Method::Fft,
        price,
        ci: None,
        runtime_seconds: start.elapsed().as_secs_f64(),
        config_echo: echo,
    })
}

/// Trapezoid quadrature of margrabe_price against an arbitrary density grid.
pub fn expected_price_on_grid(cp: &ContractParams, grid: &DensityGrid) -> Result<f64, PricerError> {
    let weighted: Vec<f64> = grid
        .x
        .iter()
        .zip(&grid.pdf)
        .map(|(&x, &f)| Ok(margrabe_price(cp, x)? * f))
        .collect::<Result<_, PricerError>>()?;
    let inner: f64 = weighted[1..weighted.len() - 1].iter().sum();
    Ok(grid.eta * (inner + 0.5 * (weighted[0] + weighted[weighted.len() - 1])))
}
