//! Cubic spline interpolation with selectable end conditions, stored as
//! per-interval coefficients in the shifted monomial basis (powers of
//! v - v_j) so they contract directly against windowed moments centered at
//! the left knot.

#[derive(Debug, Clone, thiserror::Error)]
pub enum SplineError {
    #[error("need at least {0} strictly increasing knots")]
    TooFewKnots(usize),
    #[error("knots must be strictly increasing")]
    KnotsNotIncreasing,
    #[error("knot/value length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Boundary condition at one end of the spline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EndCondition {
    /// Zero second derivative.
    Natural,
    /// Prescribed first derivative.
    Clamped(f64),
}

/// Piecewise cubic s(v) = sum_l alpha[j][l] (v - v_j)^l on [v_j, v_{j+1}).
#[derive(Debug, Clone)]
pub struct SplineCoefficients {
    pub knots: Vec<f64>,
    pub alpha: Vec<[f64; 4]>,
}

impl SplineCoefficients {
    /// Interpolating cubic spline through (knots, values).
    pub fn build(
        knots: &[f64],
        values: &[f64],
        left: EndCondition,
        right: EndCondition,
    ) -> Result<Self, SplineError> {
        let n = knots.len();
        if n < 3 {
            return Err(SplineError::TooFewKnots(3));
        }
        if values.len() != n {
            return Err(SplineError::LengthMismatch(n, values.len()));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SplineError::KnotsNotIncreasing);
        }
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        // tridiagonal system for the second derivatives at the knots
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        match left {
            EndCondition::Natural => {
                diag[0] = 1.0;
            }
            EndCondition::Clamped(d0) => {
                diag[0] = 2.0 * h[0];
                sup[0] = h[0];
                rhs[0] = 6.0 * ((values[1] - values[0]) / h[0] - d0);
            }
        }
        for j in 1..n - 1 {
            sub[j] = h[j - 1];
            diag[j] = 2.0 * (h[j - 1] + h[j]);
            sup[j] = h[j];
            rhs[j] = 6.0
                * ((values[j + 1] - values[j]) / h[j] - (values[j] - values[j - 1]) / h[j - 1]);
        }
        match right {
            EndCondition::Natural => {
                diag[n - 1] = 1.0;
            }
            EndCondition::Clamped(dn) => {
                sub[n - 1] = h[n - 2];
                diag[n - 1] = 2.0 * h[n - 2];
                rhs[n - 1] = 6.0 * (dn - (values[n - 1] - values[n - 2]) / h[n - 2]);
            }
        }
        // Thomas algorithm
        let mut m = vec![0.0; n];
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        cp[0] = sup[0] / diag[0];
        dp[0] = rhs[0] / diag[0];
        for j in 1..n {
            let denom = diag[j] - sub[j] * cp[j - 1];
            cp[j] = sup[j] / denom;
            dp[j] = (rhs[j] - sub[j] * dp[j - 1]) / denom;
        }
        m[n - 1] = dp[n - 1];
        for j in (0..n - 1).rev() {
            m[j] = dp[j] - cp[j] * m[j + 1];
        }
        let alpha = (0..n - 1)
            .map(|j| {
                let a = values[j];
                let b = (values[j + 1] - values[j]) / h[j] - h[j] * (2.0 * m[j] + m[j + 1]) / 6.0;
                let c = 0.5 * m[j];
                let d = (m[j + 1] - m[j]) / (6.0 * h[j]);
                [a, b, c, d]
            })
            .collect();
        Ok(Self { knots: knots.to_vec(), alpha })
    }

    fn segment(&self, v: f64) -> usize {
        match self.knots.binary_search_by(|k| k.total_cmp(&v)) {
            Ok(i) => i.min(self.alpha.len() - 1),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.alpha.len() - 1),
        }
    }

    pub fn eval(&self, v: f64) -> f64 {
        let j = self.segment(v);
        let dx = v - self.knots[j];
        let a = &self.alpha[j];
        ((a[3] * dx + a[2]) * dx + a[1]) * dx + a[0]
    }

    pub fn eval_derivative(&self, v: f64, order: usize) -> f64 {
        let j = self.segment(v);
        let dx = v - self.knots[j];
        let a = &self.alpha[j];
        match order {
            0 => self.eval(v),
            1 => (3.0 * a[3] * dx + 2.0 * a[2]) * dx + a[1],
            2 => 6.0 * a[3] * dx + 2.0 * a[2],
            _ => 0.0,
        }
    }
}
