//! Univariate smoothing kernels and bandwidths.
//!
//! Every kernel here is non-negative, integrable and satisfies
//! `u * K(u) -> 0` as `|u| -> inf`. Multivariate inputs are reduced to a
//! scalar distance before they reach a kernel.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Relative weight below which a kernel contribution is dropped.
pub const RELATIVE_WEIGHT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Gaussian,
    Epanechnikov,
    Boxcar,
}

impl Kernel {
    /// Evaluates `K(u)`.
    pub fn eval(self, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(Error::InvalidInput(format!("kernel argument {u} is not finite")));
        }
        Ok(self.eval_unchecked(u))
    }

    /// `K(distance / b)`.
    pub fn weight(self, distance: f64, b: &Bandwidth) -> Result<f64> {
        if !(distance >= 0.0) {
            return Err(Error::InvalidInput(format!("distance {distance} must be non-negative")));
        }
        b.validate()?;
        if distance.is_infinite() {
            return Ok(0.0);
        }
        Ok(self.eval_unchecked(distance / b.value()))
    }

    #[inline]
    pub(crate) fn eval_unchecked(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => FRAC_1_SQRT_2PI * (-0.5 * u * u).exp(),
            Kernel::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            Kernel::Boxcar => {
                if u.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
        }
    }

    /// Largest `|u|` at which `K(u) >= RELATIVE_WEIGHT_FLOOR * K(0)`.
    pub fn effective_support(self) -> f64 {
        match self {
            // exp(-u^2 / 2) = 1e-12
            Kernel::Gaussian => (2.0 * -RELATIVE_WEIGHT_FLOOR.ln()).sqrt(),
            Kernel::Epanechnikov => 1.0 - 1e-12,
            Kernel::Boxcar => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Gaussian => "gaussian",
            Kernel::Epanechnikov => "epanechnikov",
            Kernel::Boxcar => "boxcar",
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Kernel::Gaussian),
            "epanechnikov" => Ok(Kernel::Epanechnikov),
            "boxcar" => Ok(Kernel::Boxcar),
            other => Err(Error::Config(format!(
                "unknown kernel '{other}' (expected gaussian, epanechnikov or boxcar)"
            ))),
        }
    }
}

/// Smoothing bandwidth, optionally with per-axis scale factors.
///
/// Distances fed to the kernel are computed on coordinates divided by the
/// scale factors, then divided by `value`. `value` may be `+inf`, which
/// turns every kernel into a constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    value: f64,
    scales: Option<Vec<f64>>,
}

impl Bandwidth {
    pub fn new(value: f64) -> Result<Self> {
        let b = Bandwidth { value, scales: None };
        b.validate()?;
        Ok(b)
    }

    pub fn with_scales(value: f64, scales: Vec<f64>) -> Result<Self> {
        let b = Bandwidth { value, scales: Some(scales) };
        b.validate()?;
        Ok(b)
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn scales(&self) -> Option<&[f64]> {
        self.scales.as_deref()
    }

    /// Same axis scaling, different overall value.
    pub fn rescaled(&self, value: f64) -> Result<Self> {
        let b = Bandwidth { value, scales: self.scales.clone() };
        b.validate()?;
        Ok(b)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.value > 0.0) {
            return Err(Error::InvalidBandwidth(self.value));
        }
        if let Some(scales) = &self.scales {
            if let Some(&bad) = scales.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
                return Err(Error::InvalidBandwidth(bad));
            }
        }
        Ok(())
    }

    /// Euclidean distance between `a` and `b` after dividing each axis by its
    /// scale factor.
    pub fn scaled_distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::InvalidInput(format!(
                "dimension mismatch: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        match &self.scales {
            None => crate::distances::euclidean(a, b),
            Some(s) => {
                if s.len() != a.len() {
                    return Err(Error::InvalidInput(format!(
                        "bandwidth has {} scale factors for {}-dimensional input",
                        s.len(),
                        a.len()
                    )));
                }
                Ok(a.iter()
                    .zip(b)
                    .zip(s)
                    .map(|((x, y), s)| ((x - y) / s).powi(2))
                    .sum::<f64>()
                    .sqrt())
            }
        }
    }
}

/// Silverman's rule of thumb `1.06 * sd * n^(-1/5)`.
pub fn silverman(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    1.06 * crate::stats::sample_sd(values) * n.powf(-0.2)
}

/// Rule-of-thumb bandwidth for `d`-dimensional points: per-axis standard
/// deviations as scales and `1.06 * n^(-1/(d+4))` as the value.
pub fn rule_of_thumb_multivariate(points: &[&[f64]]) -> Result<Bandwidth> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InvalidInput("rule-of-thumb bandwidth needs at least two points".into()));
    }
    let d = points[0].len();
    let scales = (0..d)
        .map(|axis| {
            let column: Vec<f64> = points.iter().map(|p| p[axis]).collect();
            let sd = crate::stats::sample_sd(&column);
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    Bandwidth::with_scales(1.06 * (n as f64).powf(-1.0 / (d as f64 + 4.0)), scales)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [Kernel; 3] = [Kernel::Gaussian, Kernel::Epanechnikov, Kernel::Boxcar];

    #[test]
    fn named_values() {
        assert!((Kernel::Gaussian.eval(0.0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert_eq!(Kernel::Epanechnikov.eval(0.0).unwrap(), 0.75);
        assert_eq!(Kernel::Boxcar.eval(1.5).unwrap(), 0.0);
        assert_eq!(Kernel::Boxcar.eval(1.0).unwrap(), 0.5);
    }

    #[test]
    fn weight_examples() {
        let one = Bandwidth::new(1.0).unwrap();
        let two = Bandwidth::new(2.0).unwrap();
        assert!((Kernel::Gaussian.weight(0.0, &one).unwrap() - 0.398_942_280).abs() < 1e-9);
        assert_eq!(Kernel::Boxcar.weight(2.0, &one).unwrap(), 0.0);
        // phi(0.5) from exp/sqrt directly
        let oracle = (-0.125f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let got = Kernel::Gaussian.weight(1.0, &two).unwrap();
        assert!((got - oracle).abs() < 1e-15);
        assert!((got - 0.352_065_326_764_299_5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(Kernel::Gaussian.eval(f64::NAN), Err(Error::InvalidInput(_))));
        assert!(matches!(Kernel::Gaussian.eval(f64::INFINITY), Err(Error::InvalidInput(_))));
        assert!(matches!(Bandwidth::new(0.0), Err(Error::InvalidBandwidth(_))));
        assert!(matches!(Bandwidth::new(-1.0), Err(Error::InvalidBandwidth(_))));
        assert!(Bandwidth::with_scales(1.0, vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn infinite_bandwidth_is_constant() {
        let inf = Bandwidth::new(f64::INFINITY).unwrap();
        for d in [0.0, 1.0, 1e6] {
            assert_eq!(Kernel::Gaussian.weight(d, &inf).unwrap(), Kernel::Gaussian.eval(0.0).unwrap());
        }
    }

    #[test]
    fn tails_vanish() {
        for k in ALL {
            for u in [10.0, 100.0] {
                assert!(u * k.eval(u).unwrap() < 1e-6, "{k} at {u}");
            }
        }
    }

    #[test]
    fn integrates_to_one_on_grid() {
        for k in ALL {
            let h = 1e-4;
            let total: f64 = (-200_000..=200_000).map(|i| k.eval(i as f64 * h).unwrap() * h).sum();
            assert!((total - 1.0).abs() < 1e-3, "{k}: {total}");
        }
    }

    #[test]
    fn effective_support_matches_floor() {
        let k = Kernel::Gaussian;
        let s = k.effective_support();
        let ratio = k.eval(s).unwrap() / k.eval(0.0).unwrap();
        assert!((ratio - RELATIVE_WEIGHT_FLOOR).abs() < 1e-20);
    }

    #[test]
    fn parses_names() {
        assert_eq!("Gaussian".parse::<Kernel>().unwrap(), Kernel::Gaussian);
        assert_eq!("boxcar".parse::<Kernel>().unwrap(), Kernel::Boxcar);
        assert!("triweight".parse::<Kernel>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn symmetric_nonnegative(u in -50.0f64..50.0) {
                for k in ALL {
                    let a = k.eval(u).unwrap();
                    prop_assert!(a >= 0.0);
                    prop_assert_eq!(a, k.eval(-u).unwrap());
                }
            }

            #[test]
            fn monotone_decay(u in 0.0f64..20.0, du in 0.0f64..5.0) {
                for k in ALL {
                    prop_assert!(k.eval(u + du).unwrap() <= k.eval(u).unwrap());
                }
            }

            #[test]
            fn weight_is_eval_of_ratio(d in 0.0f64..30.0, b in 1e-3f64..10.0) {
                let bw = Bandwidth::new(b).unwrap();
                for k in ALL {
                    prop_assert_eq!(k.weight(d, &bw).unwrap(), k.eval(d / b).unwrap());
                }
            }
        }
    }
}
