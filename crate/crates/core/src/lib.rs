//! Pricing of European exchange options under an Ornstein-Uhlenbeck
//! stochastic covariance model driven by Inverse Gaussian subordinators.
//!
//! The covariance matrix is a rotation mixture of idiosyncratic and common
//! OU factors. Conditionally on the integrated covariance, the option has a
//! closed-form (Margrabe-type) price; the unconditional price is recovered
//! along four routes:
//!
//! * Taylor expansion of the conditional price around an expansion point
//!   (orders 1 and 2),
//! * a cubic-spline expansion contracted against windowed moments of the
//!   total variance,
//! * quadrature against the FFT-inverted density of the total variance,
//! * partial Monte Carlo over the covariance factors alone.

pub mod bench;
pub mod charfn;
pub mod margrabe;
pub mod mc;
pub mod model;
pub mod moments;
pub mod numeric;
pub mod pricers;
pub mod spline;

pub use charfn::{cf_integrated_cov, cf_logprices, cf_vplus, d_integral_i, ig_exponent, integral_i, CfEvaluation, IgParams};
pub use margrabe::{d_margrabe, delta, margrabe_price, DiscountConvention, MargrabeShorthand};
pub use mc::{price_mc, sample_ig_increment, sample_vplus, simulate_integrated_factors, McResult, PathKind, SimConfig};
pub use model::{loading_matrix, trace_weights, ComplexMatrixArg, ContractParams, IntegratedCovariance, ModelParams};
pub use moments::{constrained_cf, constrained_raw_moments, pdf_fft, unconstrained_moments, ConstrainedMoments, DensityGrid, MomentSet};
pub use pricers::{build_spline, price_fft, price_spline, price_taylor, Method, PriceReport};
