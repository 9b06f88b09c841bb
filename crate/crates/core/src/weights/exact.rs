use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Conjugate normal model: `theta ~ N(prior_mean, prior_var)` and
/// `theta_hat | theta ~ N(theta, obs_var)`.
///
/// Under this model the estimate-similarity weight has a closed form, which
/// serves as the reference for the bootstrap estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianModel {
    pub prior_mean: f64,
    pub prior_var: f64,
    pub obs_var: f64,
}

impl GaussianModel {
    pub fn new(prior_mean: f64, prior_var: f64, obs_var: f64) -> Result<Self> {
        let m = GaussianModel { prior_mean, prior_var, obs_var };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if !(self.prior_var > 0.0) || !(self.obs_var > 0.0) || !self.prior_mean.is_finite() {
            return Err(Error::InvalidInput(format!(
                "gaussian model needs finite mean and positive variances, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Closed form of
    /// `int p(a|t) p(c|t) pi(t) dt / (p(a) p(c))`
    /// where `p(.)` is the marginal `N(prior_mean, prior_var + obs_var)`.
    pub fn w2(&self, theta_hat_k: f64, theta_hat_0: f64) -> f64 {
        let (p, s) = (self.prior_var, self.obs_var);
        let a = theta_hat_k - self.prior_mean;
        let c = theta_hat_0 - self.prior_mean;
        let marginal = p + s;
        let det = s * (2.0 * p + s);
        let joint_quad = (marginal * (a * a + c * c) - 2.0 * p * a * c) / det;
        let marginal_quad = (a * a + c * c) / marginal;
        let log_ratio = 0.5 * (marginal * marginal / det).ln() - 0.5 * joint_quad + 0.5 * marginal_quad;
        log_ratio.exp()
    }

    pub fn posterior_mean(&self, theta_hat: f64) -> f64 {
        let shrink = self.prior_var / (self.prior_var + self.obs_var);
        self.prior_mean + shrink * (theta_hat - self.prior_mean)
    }

    pub fn posterior_var(&self) -> f64 {
        self.prior_var * self.obs_var / (self.prior_var + self.obs_var)
    }

    pub fn marginal_var(&self) -> f64 {
        self.prior_var + self.obs_var
    }

    /// Mean and variance of `theta_hat_k | theta_hat_0` when both share the
    /// same `theta`.
    pub fn predictive(&self, theta_hat_0: f64) -> (f64, f64) {
        (self.posterior_mean(theta_hat_0), self.posterior_var() + self.obs_var)
    }
}

/// Free-function form of [`GaussianModel::w2`].
pub fn w2_exact_gaussian(theta_hat_k: f64, theta_hat_0: f64, model: &GaussianModel) -> Result<f64> {
    model.validate()?;
    Ok(model.w2(theta_hat_k, theta_hat_0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::normal_pdf;
    use proptest::prelude::*;

    /// Riemann sum over a 4001-point grid spanning the prior +-12 sd.
    fn quadrature(a: f64, c: f64, m: &GaussianModel) -> f64 {
        let sd = m.prior_var.sqrt();
        let (lo, hi) = (m.prior_mean - 12.0 * sd, m.prior_mean + 12.0 * sd);
        let n = 4001;
        let h = (hi - lo) / (n - 1) as f64;
        let num: f64 = (0..n)
            .map(|i| {
                let t = lo + i as f64 * h;
                normal_pdf(a, t, m.obs_var) * normal_pdf(c, t, m.obs_var) * normal_pdf(t, m.prior_mean, m.prior_var) * h
            })
            .sum();
        let den = normal_pdf(a, m.prior_mean, m.marginal_var()) * normal_pdf(c, m.prior_mean, m.marginal_var());
        num / den
    }

    #[test]
    fn uninformative_estimates_give_unit_weight() {
        let m = GaussianModel::new(0.0, 1.0, 1e12).unwrap();
        assert!((m.w2(0.7, -1.3) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn at_prior_mean_exceeds_one() {
        let m = GaussianModel::new(0.5, 1.0, 1.0).unwrap();
        let w = m.w2(0.5, 0.5);
        assert!(w > 1.0);
        assert!((w - quadrature(0.5, 0.5, &m)).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_model() {
        assert!(GaussianModel::new(0.0, 0.0, 1.0).is_err());
        assert!(GaussianModel::new(0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn concentrates_as_noise_vanishes() {
        let ratio = |s: f64| {
            let m = GaussianModel::new(0.0, 1.0, s).unwrap();
            m.w2(0.3 + 0.5, 0.3) / m.w2(0.3, 0.3)
        };
        assert!(ratio(1e-2) < 0.01);
        assert!(ratio(1e-4) < 1e-40);
        assert!(ratio(1e-4) < ratio(1e-2));
    }

    proptest! {
        #[test]
        fn matches_quadrature(a in -3.0f64..3.0, c in -3.0f64..3.0, mean in -1.0f64..1.0, pv in 0.3f64..3.0, ov in 0.2f64..3.0) {
            let m = GaussianModel::new(mean, pv, ov).unwrap();
            let exact = m.w2(a, c);
            let quad = quadrature(a, c, &m);
            prop_assert!((exact - quad).abs() < 1e-8 * exact.max(1.0), "{exact} vs {quad}");
        }

        #[test]
        fn symmetric(a in -3.0f64..3.0, c in -3.0f64..3.0) {
            let m = GaussianModel::new(0.2, 1.5, 0.7).unwrap();
            prop_assert!((m.w2(a, c) - m.w2(c, a)).abs() < 1e-12 * m.w2(a, c).max(1.0));
        }
    }
}
