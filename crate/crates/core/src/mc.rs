//! Partial Monte Carlo: simulate the integrated OU covariance factors driven
//! by Inverse Gaussian subordinators and average the conditional closed-form
//! price. Only the covariance process is simulated, never the asset paths.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::margrabe::{margrabe_price, MargrabeError};
use crate::model::{ContractParams, IntegratedCovariance, ModelParams};
use crate::numeric::pairwise_sum;

#[derive(Debug, Clone, thiserror::Error)]
pub enum McError {
    #[error("simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Margrabe(#[from] MargrabeError),
}

/// Monte Carlo discretization settings.
///
/// `step` is the subordinator-time step of the time-changed grid; when unset
/// each factor uses lambda * T / 1000.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimConfig {
    pub npaths: usize,
    pub step: Option<f64>,
    pub seed: u64,
    pub emit_paths: Option<usize>,
}

impl SimConfig {
    pub fn new(npaths: usize, seed: u64) -> Result<Self, McError> {
        if npaths < 100 {
            return Err(McError::Config(format!(
                "need at least 100 paths for a meaningful confidence interval, got {npaths}"
            )));
        }
        Ok(Self { npaths, step: None, seed, emit_paths: None })
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = Some(step);
        self
    }

    pub fn with_emit_paths(mut self, count: usize) -> Self {
        self.emit_paths = Some(count);
        self
    }

    fn validate_against(&self, mp: &ModelParams, t: f64) -> Result<(), McError> {
        if let Some(step) = self.step {
            let min_lt = mp
                .lambda_f
                .iter()
                .chain(mp.lambda_v.iter())
                .fold(f64::INFINITY, |a, &l| a.min(l * t));
            if !(step > 0.0) || step >= min_lt {
                return Err(McError::Config(format!(
                    "step {step} must lie in (0, min(lambda) * T = {min_lt})"
                )));
            }
        }
        Ok(())
    }
}

/// Monte Carlo estimate with its 95% confidence interval.
#[derive(Debug, Clone)]
pub struct McResult {
    pub price: f64,
    pub stderr: f64,
    pub ci95: (f64, f64),
    pub npaths: usize,
    pub sample_vplus: Option<Vec<f64>>,
}

/// One Inverse Gaussian increment of the subordinator over operational time
/// `a_dt / a`, i.e. an IG(mean a_dt / b, shape a_dt^2) variate.
///
/// Michael-Schucany-Haas: a chi-square root candidate and a uniform
/// acceptance branch. The candidate is computed in the rationalized form
/// x = mu (s - w) / (s + w), which is exact and keeps x in (0, mu].
pub fn sample_ig_increment<R: Rng + ?Sized>(a_dt: f64, b: f64, rng: &mut R) -> f64 {
    if a_dt <= 0.0 {
        return 0.0;
    }
    let mu = a_dt / b;
    let shape = a_dt * a_dt;
    let nu: f64 = rng.sample(StandardNormal);
    let w = mu * nu * nu;
    let s = (w * (w + 4.0 * shape)).sqrt();
    let x = if s + w == 0.0 { mu } else { mu * (s - w) / (s + w) };
    let u: f64 = rng.random();
    if u <= mu / (mu + x) {
        x
    } else {
        mu * mu / x
    }
}

/// Precomputed discretization of one integrated factor: the deterministic
/// decay of the initial level plus weights for the subordinator increments
/// on the time-changed grid [0, lambda T].
struct FactorScheme {
    a_dt: f64,
    b: f64,
    deterministic: f64,
    weights: Vec<f64>,
}

impl FactorScheme {
    fn new(a: f64, b: f64, lambda: f64, x0: f64, t: f64, step: Option<f64>) -> Self {
        let horizon = lambda * t;
        let delta = step.unwrap_or(1e-3 * horizon);
        let n = (horizon / delta).floor() as usize;
        let weights = (1..=n)
            .map(|k| (1.0 - (-horizon + k as f64 * delta).exp()) / lambda)
            .collect();
        Self {
            a_dt: a * delta,
            b,
            deterministic: (1.0 - (-horizon).exp()) / lambda * x0,
            weights,
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut acc = self.deterministic;
        for &w in &self.weights {
            acc += w * sample_ig_increment(self.a_dt, self.b, rng);
        }
        acc
    }
}

fn schemes(mp: &ModelParams, t: f64, step: Option<f64>) -> [FactorScheme; 4] {
    [
        FactorScheme::new(mp.a_f[0], mp.b_f[0], mp.lambda_f[0], mp.f0[0], t, step),
        FactorScheme::new(mp.a_f[1], mp.b_f[1], mp.lambda_f[1], mp.f0[1], t, step),
        FactorScheme::new(mp.a_v[0], mp.b_v[0], mp.lambda_v[0], mp.v0[0], t, step),
        FactorScheme::new(mp.a_v[1], mp.b_v[1], mp.lambda_v[1], mp.v0[1], t, step),
    ]
}

fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One draw of the four integrated factors (F+, V+) at horizon t.
pub fn simulate_integrated_factors<R: Rng + ?Sized>(
    mp: &ModelParams,
    t: f64,
    step: Option<f64>,
    rng: &mut R,
) -> ([f64; 2], [f64; 2]) {
    let sch = schemes(mp, t, step);
    (
        [sch[0].draw(rng), sch[1].draw(rng)],
        [sch[2].draw(rng), sch[3].draw(rng)],
    )
}

fn assemble_vplus(mp: &ModelParams, f: [f64; 2], v: [f64; 2]) -> f64 {
    let a = mp.loading();
    let s11 = f[0] + a[0][0] * a[0][0] * v[0] + a[0][1] * a[0][1] * v[1];
    let s22 = f[1] + a[1][0] * a[1][0] * v[0] + a[1][1] * a[1][1] * v[1];
    let s12 = a[0][0] * a[1][0] * v[0] + a[0][1] * a[1][1] * v[1];
    IntegratedCovariance::new(s11, s22, s12)
        .vplus()
        .expect("simulated covariance has nonnegative total variance")
}

/// Partial Monte Carlo price: average of the conditional closed-form price
/// over simulated integrated covariances.
///
/// Paths use counter-based RNG streams keyed by (seed, path index) and are
/// reduced with pairwise summation, so the result does not depend on the
/// number of worker threads.
pub fn price_mc(mp: &ModelParams, cp: &ContractParams, cfg: &SimConfig) -> Result<McResult, McError> {
    if cfg.npaths < 100 {
        return Err(McError::Config("need at least 100 paths".into()));
    }
    cfg.validate_against(mp, cp.maturity)?;
    let sch = schemes(mp, cp.maturity, cfg.step);
    let vplus: Vec<f64> = (0..cfg.npaths)
        .into_par_iter()
        .map(|path| {
            let mut rng = path_rng(cfg.seed, path as u64);
            let f = [sch[0].draw(&mut rng), sch[1].draw(&mut rng)];
            let v = [sch[2].draw(&mut rng), sch[3].draw(&mut rng)];
            assemble_vplus(mp, f, v)
        })
        .collect();
    let prices: Vec<f64> = vplus
        .par_iter()
        .map(|&v| margrabe_price(cp, v))
        .collect::<Result<_, _>>()?;
    let n = cfg.npaths as f64;
    let mean = pairwise_sum(&prices) / n;
    let sq: Vec<f64> = prices.iter().map(|p| (p - mean) * (p - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    let stderr = (var / n).sqrt();
    Ok(McResult {
        price: mean,
        stderr,
        ci95: (mean - 1.96 * stderr, mean + 1.96 * stderr),
        npaths: cfg.npaths,
        sample_vplus: cfg.emit_paths.map(|_| vplus),
    })
}

/// Draws of v+ alone, for density comparisons and figure data.
pub fn sample_vplus(mp: &ModelParams, t: f64, cfg: &SimConfig) -> Vec<f64> {
    let sch = schemes(mp, t, cfg.step);
    (0..cfg.npaths)
        .into_par_iter()
        .map(|path| {
            let mut rng = path_rng(cfg.seed, path as u64);
            let f = [sch[0].draw(&mut rng), sch[1].draw(&mut rng)];
            let v = [sch[2].draw(&mut rng), sch[3].draw(&mut rng)];
            assemble_vplus(mp, f, v)
        })
        .collect()
}

/// Which trajectory family to export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    Subordinator,
    Ou,
    Correlation,
}

/// Time-indexed sample trajectories; missing values are NaN.
#[derive(Debug, Clone)]
pub struct TrajectoryTable {
    pub time: Vec<f64>,
    pub paths: Vec<Vec<f64>>,
}

impl TrajectoryTable {
    pub fn write_tsv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t")?;
        for i in 0..self.paths.len() {
            write!(w, "\tpath{}", i + 1)?;
        }
        writeln!(w)?;
        for (j, t) in self.time.iter().enumerate() {
            write!(w, "{t:.6}")?;
            for p in &self.paths {
                write!(w, "\t{:.10e}", p[j])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

const EXPORT_STEPS: usize = 1000;

/// Export sample trajectories of the subordinator, the OU level, or the
/// instantaneous correlation process on a uniform calendar grid over [0, t].
pub fn export_paths(
    mp: &ModelParams,
    t: f64,
    cfg: &SimConfig,
    kind: PathKind,
) -> Result<TrajectoryTable, McError> {
    let count = cfg
        .emit_paths
        .ok_or_else(|| McError::Config("emit_paths not set".into()))?;
    let dt = t / EXPORT_STEPS as f64;
    let time: Vec<f64> = (0..=EXPORT_STEPS).map(|j| j as f64 * dt).collect();
    let salt = match kind {
        PathKind::Subordinator => 1u64 << 32,
        PathKind::Ou => 2u64 << 32,
        PathKind::Correlation => 3u64 << 32,
    };
    let paths = (0..count)
        .map(|p| {
            let mut rng = path_rng(cfg.seed, salt + p as u64);
            match kind {
                PathKind::Subordinator => {
                    // raw IG subordinator with the first idiosyncratic factor's (a, b)
                    let a_dt = mp.a_f[0] * dt;
                    let mut z = 0.0;
                    let mut out = vec![0.0];
                    for _ in 0..EXPORT_STEPS {
                        z += sample_ig_increment(a_dt, mp.b_f[0], &mut rng);
                        out.push(z);
                    }
                    out
                }
                PathKind::Ou => {
                    // exact OU recursion with the increment placed at the
                    // end of each interval
                    let lam = mp.lambda_f[0];
                    let a_dt = mp.a_f[0] * lam * dt;
                    let decay = (-lam * dt).exp();
                    let mut f = mp.f0[0];
                    let mut out = vec![f];
                    for _ in 0..EXPORT_STEPS {
                        f = decay * f + sample_ig_increment(a_dt, mp.b_f[0], &mut rng);
                        out.push(f);
                    }
                    out
                }
                PathKind::Correlation => {
                    let a = mp.loading();
                    let mut lv = [mp.f0[0], mp.f0[1], mp.v0[0], mp.v0[1]];
                    let fams = [
                        (mp.a_f[0], mp.b_f[0], mp.lambda_f[0]),
                        (mp.a_f[1], mp.b_f[1], mp.lambda_f[1]),
                        (mp.a_v[0], mp.b_v[0], mp.lambda_v[0]),
                        (mp.a_v[1], mp.b_v[1], mp.lambda_v[1]),
                    ];
                    let rho = |lv: &[f64; 4]| -> f64 {
                        let (f, v) = ([lv[0], lv[1]], [lv[2], lv[3]]);
                        let s11 = f[0] + a[0][0] * a[0][0] * v[0] + a[0][1] * a[0][1] * v[1];
                        let s22 = f[1] + a[1][0] * a[1][0] * v[0] + a[1][1] * a[1][1] * v[1];
                        let s12 = a[0][0] * a[1][0] * v[0] + a[0][1] * a[1][1] * v[1];
                        if s11 <= 0.0 || s22 <= 0.0 {
                            f64::NAN
                        } else {
                            s12 / (s11 * s22).sqrt()
                        }
                    };
                    let mut out = vec![rho(&lv)];
                    for _ in 0..EXPORT_STEPS {
                        for (i, (af, bf, lam)) in fams.iter().enumerate() {
                            lv[i] = (-lam * dt).exp() * lv[i]
                                + sample_ig_increment(af * lam * dt, *bf, &mut rng);
                        }
                        out.push(rho(&lv));
                    }
                    out
                }
            }
        })
        .collect();
    Ok(TrajectoryTable { time, paths })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn ig_increment_moments() {
        // E Z = a/b and Var Z = a/b^3 from the characteristic exponent
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 1_000_000usize;
        let (a_dt, b) = (1.0, 5.0);
        let draws: Vec<f64> = (0..n).map(|_| sample_ig_increment(a_dt, b, &mut rng)).collect();
        let mean = pairwise_sum(&draws) / n as f64;
        let sq: Vec<f64> = draws.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&sq) / (n as f64 - 1.0);
        let se_mean = (var / n as f64).sqrt();
        assert!((mean - 0.2).abs() < 3.0 * se_mean, "mean {mean}");
        // variance of the variance estimate ~ 2 var^2 / n for light tails;
        // IG at these parameters is mildly skewed, allow a generous band
        assert!((var - 0.008).abs() < 0.0005, "var {var}");
        assert!(draws.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn ig_increment_vanishes_with_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let max = (0..10_000)
            .map(|_| sample_ig_increment(1e-8, 5.0, &mut rng))
            .fold(0.0f64, f64::max);
        assert!(max < 1e-4, "max increment {max}");
        assert_eq!(sample_ig_increment(0.0, 5.0, &mut rng), 0.0);
    }

    #[test]
    fn deterministic_part_without_noise() {
        // a -> 0 kills the increments: only the decayed initial level remains
        let mut mp = ModelParams::benchmark(0.0);
        mp.a_f = [1e-300; 2];
        mp.a_v = [1e-300; 2];
        mp.f0 = [1.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (f, v) = simulate_integrated_factors(&mp, 1.0, None, &mut rng);
        assert!((f[0] - (1.0 - (-1.0f64).exp())).abs() < 1e-12, "{}", f[0]);
        assert_eq!(f[1], 0.0);
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], 0.0);
    }

    #[test]
    fn integrated_factor_mean_matches_formula() {
        // E F+ = (a/(lambda b)) (lambda T - 1 + e^{-lambda T}), benchmark: 0.073576
        let mp = ModelParams::benchmark(PI / 6.0);
        let n = 100_000usize;
        let sums: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|p| {
                let mut rng = path_rng(7, p as u64);
                let sch = FactorScheme::new(1.0, 5.0, 1.0, 0.0, 1.0, None);
                sch.draw(&mut rng)
            })
            .collect();
        let mean = pairwise_sum(&sums) / n as f64;
        let sq: Vec<f64> = sums.iter().map(|x| (x - mean) * (x - mean)).collect();
        let se = (pairwise_sum(&sq) / (n as f64 - 1.0) / n as f64).sqrt();
        assert!((mean - 0.073575888234).abs() < 3.0 * se, "mean {mean} se {se}");
        let _ = mp;
    }

    #[test]
    fn lambda_scaling_of_factor_mean() {
        // lambda = 2: E F+ = (a/(lambda b)) (lambda T - 1 + e^{-lambda T})
        let n = 60_000usize;
        let expect = (1.0 / 10.0) * (2.0 - 1.0 + (-2.0f64).exp());
        let sums: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|p| {
                let mut rng = path_rng(11, p as u64);
                FactorScheme::new(1.0, 5.0, 2.0, 0.0, 1.0, None).draw(&mut rng)
            })
            .collect();
        let mean = pairwise_sum(&sums) / n as f64;
        let sq: Vec<f64> = sums.iter().map(|x| (x - mean) * (x - mean)).collect();
        let se = (pairwise_sum(&sq) / (n as f64 - 1.0) / n as f64).sqrt();
        assert!((mean - expect).abs() < 3.0 * se, "mean {mean} expect {expect}");
    }

    #[test]
    fn degenerate_price_equals_zero_variance_margrabe() {
        let mut mp = ModelParams::benchmark(PI / 6.0);
        mp.a_f = [1e-300; 2];
        mp.a_v = [1e-300; 2];
        let cp = ContractParams::benchmark();
        let cfg = SimConfig::new(10_000, 5).unwrap();
        let res = price_mc(&mp, &cp, &cfg).unwrap();
        let limit = margrabe_price(&cp, 0.0).unwrap();
        assert_eq!(res.price, limit);
        assert_eq!(res.stderr, 0.0);
        assert!((limit - 3.84316).abs() < 1e-5);
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let mp = ModelParams::benchmark(PI / 6.0);
        let cp = ContractParams::benchmark();
        let mut cfg = SimConfig::new(2_000, 42).unwrap();
        cfg.step = Some(0.01);
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let r1 = pool1.install(|| price_mc(&mp, &cp, &cfg)).unwrap();
        let r4 = pool4.install(|| price_mc(&mp, &cp, &cfg)).unwrap();
        assert_eq!(r1.price.to_bits(), r4.price.to_bits());
        assert_eq!(r1.stderr.to_bits(), r4.stderr.to_bits());
    }

    #[test]
    fn ci_width_shrinks_like_sqrt_n() {
        let mp = ModelParams::benchmark(PI / 6.0);
        let cp = ContractParams::benchmark();
        let mut small = SimConfig::new(10_000, 9).unwrap();
        small.step = Some(0.02);
        let mut large = SimConfig::new(40_000, 9).unwrap();
        large.step = Some(0.02);
        let rs = price_mc(&mp, &cp, &small).unwrap();
        let rl = price_mc(&mp, &cp, &large).unwrap();
        let ratio = rs.stderr / rl.stderr;
        assert!((ratio - 2.0).abs() < 0.3, "ratio {ratio}");
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(50, 1).is_err());
        let mp = ModelParams::benchmark(0.0);
        let cp = ContractParams::benchmark();
        let cfg = SimConfig { npaths: 1000, step: Some(2.0), seed: 1, emit_paths: None };
        assert!(price_mc(&mp, &cp, &cfg).is_err());
    }

    #[test]
    fn ci_brackets_price() {
        let mp = ModelParams::benchmark(PI / 6.0);
        let cp = ContractParams::benchmark();
        let mut cfg = SimConfig::new(5_000, 33).unwrap();
        cfg.step = Some(0.01);
        let r = price_mc(&mp, &cp, &cfg).unwrap();
        assert!(r.ci95.0 < r.price && r.price < r.ci95.1);
        assert!((r.ci95.1 - r.price - 1.96 * r.stderr).abs() < 1e-12);
        assert!(r.price > 0.0);
        assert!(r.sample_vplus.is_none());
    }

    #[test]
    fn identity_loading_has_zero_correlation() {
        let mp = ModelParams::benchmark(0.0);
        let cfg = SimConfig::new(100, 4).unwrap().with_emit_paths(3);
        let table = export_paths(&mp, 1.0, &cfg, PathKind::Correlation).unwrap();
        for p in &table.paths {
            for &x in p {
                assert!(x.is_nan() || x.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn correlation_paths_bounded_and_jumpy() {
        let mp = ModelParams::benchmark(PI / 6.0);
        let cfg = SimConfig::new(100, 8).unwrap().with_emit_paths(5);
        let table = export_paths(&mp, 1.0, &cfg, PathKind::Correlation).unwrap();
        assert_eq!(table.time.len(), EXPORT_STEPS + 1);
        for p in &table.paths {
            let mut jumps = 0;
            for w in p.windows(2) {
                if !w[0].is_nan() && !w[1].is_nan() {
                    assert!(w[0].abs() <= 1.0 + 1e-12);
                    if w[1] > w[0] + 1e-12 {
                        jumps += 1;
                    }
                }
            }
            assert!(jumps > 0, "correlation path shows no upward jumps");
        }
    }

    #[test]
    fn subordinator_paths_nondecreasing() {
        let mp = ModelParams::benchmark(PI / 6.0);
        let cfg = SimConfig::new(100, 12).unwrap().with_emit_paths(3);
        let table = export_paths(&mp, 1.0, &cfg, PathKind::Subordinator).unwrap();
        for p in &table.paths {
            for w in p.windows(2) {
                assert!(w[1] >= w[0]);
            }
        }
        assert!(export_paths(&mp, 1.0, &SimConfig::new(100, 1).unwrap(), PathKind::Ou).is_err());
    }

    #[test]
    fn step_refinement_within_statistical_error() {
        let mp = ModelParams::benchmark(PI / 6.0);
        let cp = ContractParams::benchmark();
        let mut base = SimConfig::new(40_000, 21).unwrap();
        base.step = Some(2e-3);
        let mut fine = SimConfig::new(40_000, 21).unwrap();
        fine.step = Some(1e-3);
        let rb = price_mc(&mp, &cp, &base).unwrap();
        let rf = price_mc(&mp, &cp, &fine).unwrap();
        assert!(
            (rb.price - rf.price).abs() < rb.stderr.max(rf.stderr),
            "halving the step moved the price by more than one standard error: {} vs {}",
            rb.price,
            rf.price
        );
    }
}
