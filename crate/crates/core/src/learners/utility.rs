use super::LearnerError;

/// Quadratic utility `u(R) = alpha R - beta R^2 / 2`.
///
/// `target()` is the return the utility is maximized at, `alpha / beta`
/// (infinite when `beta = 0`, the risk-neutral case). `risk_weight()` is the
/// coefficient `beta / (2 alpha)` of `E[R^2]` when the objective is written
/// as `-E[R] + w E[R^2]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UtilitySpec {
    alpha: f64,
    beta: f64,
}

impl UtilitySpec {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, LearnerError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(LearnerError::Config(format!("utility alpha must be positive and finite, got {alpha}")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(LearnerError::Config(format!("utility beta must be non-negative and finite, got {beta}")));
        }
        Ok(Self { alpha, beta })
    }

    /// `alpha = 1`, `beta = 1 / target`; an infinite target gives `beta = 0`.
    pub fn from_target(target: f64) -> Result<Self, LearnerError> {
        if !(target > 0.0) {
            return Err(LearnerError::Config(format!("target return must be positive, got {target}")));
        }
        Self::new(1.0, if target.is_infinite() { 0.0 } else { 1.0 / target })
    }

    pub fn risk_neutral() -> Self {
        Self { alpha: 1.0, beta: 0.0 }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn is_risk_neutral(&self) -> bool {
        self.beta == 0.0
    }

    pub fn target(&self) -> f64 {
        if self.beta == 0.0 {
            f64::INFINITY
        } else {
            self.alpha / self.beta
        }
    }

    pub fn risk_weight(&self) -> f64 {
        self.beta / (2.0 * self.alpha)
    }

    pub fn utility(&self, r: f64) -> f64 {
        self.alpha * r - 0.5 * self.beta * r * r
    }

    /// `E[u(R)]` from the first two moments.
    pub fn expected(&self, mean: f64, second_moment: f64) -> f64 {
        self.alpha * mean - 0.5 * self.beta * second_moment
    }

    /// `E[u(R)]` written as a distance of the mean from the target, a
    /// constant and a variance penalty. Requires `beta > 0`.
    pub fn mean_variance_form(&self, mean: f64, variance: f64) -> f64 {
        let gap = mean - self.target();
        -0.5 * self.beta * gap * gap + self.alpha * self.alpha / (2.0 * self.beta) - 0.5 * self.beta * variance
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_and_risk_weight() {
        let u = UtilitySpec::new(2.0, 0.5).unwrap();
        assert_eq!(u.target(), 4.0);
        assert_eq!(u.risk_weight(), 0.125);
        assert_eq!(u.target() * u.risk_weight(), 0.5);
        let n = UtilitySpec::from_target(f64::INFINITY).unwrap();
        assert_eq!((n.alpha(), n.beta()), (1.0, 0.0));
        assert!(n.is_risk_neutral() && n.target().is_infinite());
    }

    #[test]
    fn utility_peaks_at_target() {
        let u = UtilitySpec::new(1.0, 0.25).unwrap();
        assert_eq!(u.utility(4.0), 2.0);
        assert_eq!(u.utility(4.0), u.alpha() * u.alpha() / (2.0 * u.beta()));
        assert!(u.utility(3.9) < 2.0 && u.utility(4.1) < 2.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(UtilitySpec::new(0.0, 1.0).is_err());
        assert!(UtilitySpec::new(1.0, -1.0).is_err());
        assert!(UtilitySpec::new(f64::NAN, 1.0).is_err());
        assert!(UtilitySpec::from_target(-2.0).is_err());
    }
}
