//! Shared numerical kernels: Gauss-Kronrod quadrature, normal distribution
//! helpers and deterministic summation.

use num_complex::Complex64;

/// Nodes of the 15-point Kronrod rule on [0, 1] side (symmetric pairs).
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.000000000000000,
];

const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];

/// Weights of the embedded 7-point Gauss rule (nodes XGK[1], XGK[3], XGK[5], XGK[7]).
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

#[derive(Debug, Clone, thiserror::Error)]
pub enum QuadError {
    #[error("quadrature failed to converge: estimated error {err:.3e} exceeds tolerance {tol:.3e}")]
    NoConvergence { err: f64, tol: f64 },
}

fn gk15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let fs = f(c - x) + f(c + x);
        kron += WGK[j] * fs;
        if j % 2 == 1 {
            gauss += WG[j / 2] * fs;
        }
    }
    kron *= h;
    gauss *= h;
    (kron, (kron - gauss).norm())
}

/// Adaptive Gauss-Kronrod integration of a complex-valued function over [a, b]
/// to absolute tolerance `tol`.
pub fn quad_gk<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64, tol: f64) -> Result<Complex64, QuadError> {
    // worklist of (a, b, estimate, error)
    let (est, err) = gk15(f, a, b);
    let mut segments = vec![(a, b, est, err)];
    let mut total_err: f64 = err;
    let max_segments = 4096;
    while total_err > tol {
        // split the segment with the largest error
        let (idx, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (sa, sb, _, serr) = segments.swap_remove(idx);
        if segments.len() + 2 > max_segments || (sb - sa) < f64::EPSILON * (b - a).abs() {
            return Err(QuadError::NoConvergence { err: total_err, tol });
        }
        let mid = 0.5 * (sa + sb);
        let left = gk15(f, sa, mid);
        let right = gk15(f, mid, sb);
        total_err = total_err - serr + left.1 + right.1;
        segments.push((sa, mid, left.0, left.1));
        segments.push((mid, sb, right.0, right.1));
    }
    Ok(segments.iter().map(|s| s.2).sum())
}

/// Standard normal CDF via the complementary error function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Pairwise (cascade) summation; result is independent of how the slice was
/// produced, which keeps parallel accumulations reproducible.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Binomial coefficient as f64 (small n only).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Normalize an angle to (-pi, pi].
pub fn normalize_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = theta.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r - two_pi
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn quad_polynomial_exact() {
        // K15 integrates low-degree polynomials exactly
        let f = |x: f64| Complex64::new(x * x * x - 2.0 * x + 1.0, 0.0);
        let v = quad_gk(&f, 0.0, 2.0, 1e-12).unwrap();
        assert!((v.re - 2.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn quad_oscillatory() {
        let f = |x: f64| Complex64::new(0.0, 10.0 * x).exp();
        let v = quad_gk(&f, 0.0, 3.0, 1e-12).unwrap();
        let exact = (Complex64::new(0.0, 30.0).exp() - 1.0) / Complex64::new(0.0, 10.0);
        assert!((v - exact).norm() < 1e-11);
    }

    #[test]
    fn quad_reports_nonconvergence() {
        // 1/sqrt(|x|) singularity at an interior point converges too slowly
        // for a tight tolerance within the segment budget
        let f = |x: f64| Complex64::new(1.0 / x.abs().sqrt().max(1e-300), 0.0);
        assert!(quad_gk(&f, -1.0, 1.0, 1e-14).is_err());
    }

    #[test]
    fn norm_cdf_reference_values() {
        // high-precision reference values
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((norm_cdf(1.0) - 0.8413447460685429).abs() < 1e-15);
        assert!((norm_cdf(-2.0) - 0.022750131948179195).abs() < 1e-15);
        assert!((norm_cdf(4.0) - 0.9999683287581669).abs() < 1e-15);
    }

    #[test]
    fn pairwise_matches_naive() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-9);
    }

    #[test]
    fn binomial_small() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(6, 0), 1.0);
        assert_eq!(binomial(5, 5), 1.0);
        assert_eq!(binomial(3, 7), 0.0);
    }

    #[test]
    fn angle_normalization() {
        use std::f64::consts::PI;
        assert!((normalize_angle(PI) - PI).abs() < 1e-15);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-15);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(PI / 6.0 + 2.0 * PI) - PI / 6.0).abs() < 1e-12);
    }
}
