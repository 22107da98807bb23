//! Domain types shared by every pricing route: model and contract parameters,
//! the integrated covariance matrix and the loading-matrix algebra.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::numeric::normalize_angle;

#[derive(Debug, Clone, thiserror::Error)]
pub enum ModelError {
    #[error("{field}: {message}")]
    InvalidParameter { field: &'static str, message: String },
    #[error("integrated covariance is corrupted: v+ = {0} < 0")]
    NegativeTotalVariance(f64),
}

fn require_positive(field: &'static str, values: &[f64]) -> Result<(), ModelError> {
    for &v in values {
        if !(v > 0.0) || !v.is_finite() {
            return Err(ModelError::InvalidParameter {
                field,
                message: format!("must be strictly positive and finite, got {v}"),
            });
        }
    }
    Ok(())
}

fn require_nonnegative(field: &'static str, values: &[f64]) -> Result<(), ModelError> {
    for &v in values {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(ModelError::InvalidParameter {
                field,
                message: format!("must be nonnegative and finite, got {v}"),
            });
        }
    }
    Ok(())
}

/// Parameters of the two-factor OU covariance model with Inverse Gaussian
/// subordinators: idiosyncratic factors `F`, common factors `V`, and the
/// rotation angle of the orthonormal loading matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// IG scale parameters of the idiosyncratic factors.
    pub a_f: [f64; 2],
    /// IG tail parameters of the idiosyncratic factors.
    pub b_f: [f64; 2],
    /// Mean-reversion rates of the idiosyncratic factors.
    pub lambda_f: [f64; 2],
    /// IG scale parameters of the common factors.
    pub a_v: [f64; 2],
    /// IG tail parameters of the common factors.
    pub b_v: [f64; 2],
    /// Mean-reversion rates of the common factors.
    pub lambda_v: [f64; 2],
    /// Initial levels of the idiosyncratic factors.
    pub f0: [f64; 2],
    /// Initial levels of the common factors.
    pub v0: [f64; 2],
    /// Rotation angle of the loading matrix, normalized to (-pi, pi].
    pub theta: f64,
}

impl ModelParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a_f: [f64; 2],
        b_f: [f64; 2],
        lambda_f: [f64; 2],
        a_v: [f64; 2],
        b_v: [f64; 2],
        lambda_v: [f64; 2],
        f0: [f64; 2],
        v0: [f64; 2],
        theta: f64,
    ) -> Result<Self, ModelError> {
        require_positive("aF", &a_f)?;
        require_positive("bF", &b_f)?;
        require_positive("lambdaF", &lambda_f)?;
        require_positive("aV", &a_v)?;
        require_positive("bV", &b_v)?;
        require_positive("lambdaV", &lambda_v)?;
        require_nonnegative("F0", &f0)?;
        require_nonnegative("V0", &v0)?;
        if !theta.is_finite() {
            return Err(ModelError::InvalidParameter {
                field: "theta",
                message: "must be finite".into(),
            });
        }
        Ok(Self {
            a_f,
            b_f,
            lambda_f,
            a_v,
            b_v,
            lambda_v,
            f0,
            v0,
            theta: normalize_angle(theta),
        })
    }

    /// Validate an already-populated parameter set (used after deserialization).
    pub fn validated(self) -> Result<Self, ModelError> {
        Self::new(
            self.a_f,
            self.b_f,
            self.lambda_f,
            self.a_v,
            self.b_v,
            self.lambda_v,
            self.f0,
            self.v0,
            self.theta,
        )
    }

    /// Benchmark model: a = (1,1), b = (5,5), lambda = (1,1) for both factor
    /// families, zero initial levels.
    pub fn benchmark(theta: f64) -> Self {
        Self::new(
            [1.0; 2],
            [5.0; 2],
            [1.0; 2],
            [1.0; 2],
            [5.0; 2],
            [1.0; 2],
            [0.0; 2],
            [0.0; 2],
            theta,
        )
        .expect("benchmark parameters are valid")
    }

    /// The orthonormal loading matrix A(theta).
    pub fn loading(&self) -> [[f64; 2]; 2] {
        loading_matrix(self.theta)
    }

    /// The trace weights (theta_1, theta_2) of this model's loading matrix.
    pub fn trace_weights(&self) -> (f64, f64) {
        trace_weights(&self.loading())
    }
}

/// The rotation loading matrix [[cos, -sin], [sin, cos]].
///
/// Angles outside (-pi, pi] are normalized modulo 2*pi; the matrix is periodic.
pub fn loading_matrix(theta: f64) -> [[f64; 2]; 2] {
    let t = normalize_angle(theta);
    let (s, c) = t.sin_cos();
    [[c, -s], [s, c]]
}

/// Trace weights theta_l = tr(A M C_l A') = (a_{1l} - a_{2l})^2 for the two
/// columns of an orthonormal loading matrix.
pub fn trace_weights(a: &[[f64; 2]; 2]) -> (f64, f64) {
    let t1 = (a[0][0] - a[1][0]).powi(2);
    let t2 = (a[0][1] - a[1][1]).powi(2);
    (t1, t2)
}

/// Exchange contract: spots, exchange quantities, dividend yields, rate and
/// maturity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractParams {
    pub s0: [f64; 2],
    pub c: f64,
    pub m: f64,
    pub q: [f64; 2],
    pub r: f64,
    pub maturity: f64,
}

impl ContractParams {
    pub fn new(
        s0: [f64; 2],
        c: f64,
        m: f64,
        q: [f64; 2],
        r: f64,
        maturity: f64,
    ) -> Result<Self, ModelError> {
        require_positive("s0", &s0)?;
        require_positive("c", &[c])?;
        require_positive("m", &[m])?;
        require_positive("T", &[maturity])?;
        for (field, v) in [("q", q[0]), ("q", q[1]), ("r", r)] {
            if !v.is_finite() {
                return Err(ModelError::InvalidParameter {
                    field,
                    message: "must be finite".into(),
                });
            }
        }
        Ok(Self { s0, c, m, q, r, maturity })
    }

    pub fn validated(self) -> Result<Self, ModelError> {
        Self::new(self.s0, self.c, self.m, self.q, self.r, self.maturity)
    }

    /// Benchmark contract: S0 = (100, 96), c = m = 1, q = 0, r = 0.04, T = 1.
    pub fn benchmark() -> Self {
        Self::new([100.0, 96.0], 1.0, 1.0, [0.0, 0.0], 0.04, 1.0)
            .expect("benchmark contract is valid")
    }
}

/// The three distinct entries of the symmetric integrated covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratedCovariance {
    pub s11: f64,
    pub s22: f64,
    pub s12: f64,
}

impl IntegratedCovariance {
    pub fn new(s11: f64, s22: f64, s12: f64) -> Self {
        Self { s11, s22, s12 }
    }

    /// Total variance of the log price ratio: s11 + s22 - 2*s12.
    ///
    /// Values in [-1e-12, 0) are treated as floating point noise and clamped
    /// to zero; anything more negative signals a corrupted covariance.
    pub fn vplus(&self) -> Result<f64, ModelError> {
        let v = self.s11 + self.s22 - 2.0 * self.s12;
        if v < -1e-12 {
            Err(ModelError::NegativeTotalVariance(v))
        } else {
            Ok(v.max(0.0))
        }
    }

    /// Reconstruct the full symmetric 2x2 matrix.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[self.s11, self.s12], [self.s12, self.s22]]
    }
}

/// A 2x2 complex matrix argument of the integrated-covariance characteristic
/// function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexMatrixArg {
    pub t11: Complex64,
    pub t22: Complex64,
    pub t12: Complex64,
    pub t21: Complex64,
}

impl ComplexMatrixArg {
    pub fn zero() -> Self {
        Self {
            t11: Complex64::ZERO,
            t22: Complex64::ZERO,
            t12: Complex64::ZERO,
            t21: Complex64::ZERO,
        }
    }

    /// u * M where M = [[1, -1], [-1, 1]] reduces the matrix CF to the scalar
    /// CF of v+.
    pub fn scaled_m(u: Complex64) -> Self {
        Self { t11: u, t22: u, t12: -u, t21: -u }
    }

    /// tr(theta * A C_l A') = a_l' theta a_l for column l of the loading matrix.
    pub fn trace_with_column(&self, a: &[[f64; 2]; 2], l: usize) -> Complex64 {
        let a1 = a[0][l];
        let a2 = a[1][l];
        self.t11 * (a1 * a1) + self.t22 * (a2 * a2) + (self.t12 + self.t21) * (a1 * a2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn loading_matrix_reference_angles() {
        let id = loading_matrix(0.0);
        assert_eq!(id, [[1.0, -0.0], [0.0, 1.0]]);
        let quarter = loading_matrix(PI / 2.0);
        assert!((quarter[0][0]).abs() < 1e-15);
        assert!((quarter[0][1] + 1.0).abs() < 1e-15);
        assert!((quarter[1][0] - 1.0).abs() < 1e-15);
        let pi6 = loading_matrix(PI / 6.0);
        assert!((pi6[0][0] - 0.8660).abs() < 5e-5);
        assert!((pi6[0][1] + 0.5).abs() < 1e-12);
        assert!((pi6[1][0] - 0.5).abs() < 1e-12);
        assert!((pi6[1][1] - 0.8660).abs() < 5e-5);
    }

    #[test]
    fn loading_matrix_orthonormal_1000_angles() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let theta = rng.random_range(-30.0..30.0);
            let a = loading_matrix(theta);
            // A * A' == I
            for i in 0..2 {
                for j in 0..2 {
                    let dot = a[i][0] * a[j][0] + a[i][1] * a[j][1];
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn trace_weights_reference() {
        assert_eq!(trace_weights(&loading_matrix(0.0)), (1.0, 1.0));
        let (t1, t2) = trace_weights(&loading_matrix(PI / 4.0));
        assert!(t1.abs() < 1e-15);
        assert!((t2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn vplus_reference_values() {
        assert_eq!(IntegratedCovariance::new(1.0, 1.0, 1.0).vplus().unwrap(), 0.0);
        assert_eq!(IntegratedCovariance::new(0.15, 0.15, 0.0).vplus().unwrap(), 0.30);
        assert!((IntegratedCovariance::new(0.2, 0.1, 0.05).vplus().unwrap() - 0.20).abs() < 1e-15);
    }

    #[test]
    fn vplus_clamps_noise_rejects_corruption() {
        let noisy = IntegratedCovariance::new(1.0, 1.0, 1.0 + 4e-13);
        assert_eq!(noisy.vplus().unwrap(), 0.0);
        let bad = IntegratedCovariance::new(1.0, 1.0, 1.1);
        assert!(bad.vplus().is_err());
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(
            [1.0, 1.0],
            [-5.0, 5.0],
            [1.0; 2],
            [1.0; 2],
            [5.0; 2],
            [1.0; 2],
            [0.0; 2],
            [0.0; 2],
            0.5
        )
        .is_err());
        assert!(ContractParams::new([100.0, 96.0], 1.0, 1.0, [0.0; 2], 0.04, 0.0).is_err());
        assert!(ContractParams::new([100.0, -96.0], 1.0, 1.0, [0.0; 2], 0.04, 1.0).is_err());
    }

    #[test]
    fn angle_is_normalized() {
        let mp = ModelParams::benchmark(PI / 2.0 + 2.0 * PI);
        assert!((mp.theta - PI / 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn trace_weights_sum_to_two(theta in -10.0f64..10.0) {
            let (t1, t2) = trace_weights(&loading_matrix(theta));
            prop_assert!((t1 + t2 - 2.0).abs() < 1e-12);
        }

        #[test]
        fn vplus_symmetric_in_assets(s11 in 0.0f64..5.0, s22 in 0.0f64..5.0, s12 in -1.0f64..1.0) {
            let a = IntegratedCovariance::new(s11, s22, s12).vplus();
            let b = IntegratedCovariance::new(s22, s11, s12).vplus();
            match (a, b) {
                (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-12),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "asymmetric outcome"),
            }
        }

        #[test]
        fn theta_plus_pi_same_weights(theta in -3.0f64..3.0) {
            let w1 = trace_weights(&loading_matrix(theta));
            let w2 = trace_weights(&loading_matrix(theta + PI));
            prop_assert!((w1.0 - w2.0).abs() < 1e-9 && (w1.1 - w2.1).abs() < 1e-9);
        }
    }
}
