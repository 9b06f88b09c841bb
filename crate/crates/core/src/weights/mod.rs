//! Similarity weights `w(k; 0) = w1(z_k, z_0) * w2(theta_hat_k, theta_hat_0)`.
//!
//! `w1` is a kernel in covariate distance. `w2` compares how likely the two
//! estimates are to come from the same parameter value; it is available in
//! closed form for the conjugate normal model ([`exact`]) and otherwise
//! estimated from bootstrap re-estimates ([`bootstrap`]).

pub mod bootstrap;
pub mod exact;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Bandwidth, Kernel, RELATIVE_WEIGHT_FLOOR};
use crate::population::Population;

pub use bootstrap::{
    conditional_density_estimate, w2_bootstrap, w2_bootstrap_row, Ar1Cls, BootstrapPairs, Resampler, SampleMean, W2Bandwidths,
    W2Config, W2Form,
};
pub use exact::{w2_exact_gaussian, GaussianModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "z")]
    ZOnly,
    #[serde(rename = "theta")]
    ThetaOnly,
    #[serde(rename = "combined")]
    Combined,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::ZOnly => "z",
            Scheme::ThetaOnly => "theta",
            Scheme::Combined => "combined",
        }
    }

    pub fn uses_z(self) -> bool {
        matches!(self, Scheme::ZOnly | Scheme::Combined)
    }

    pub fn uses_theta(self) -> bool {
        matches!(self, Scheme::ThetaOnly | Scheme::Combined)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "z" | "z_only" => Ok(Scheme::ZOnly),
            "theta" | "theta_only" => Ok(Scheme::ThetaOnly),
            "combined" => Ok(Scheme::Combined),
            other => Err(Error::Config(format!("unknown scheme '{other}' (expected z, theta or combined)"))),
        }
    }
}

/// Which bandwidths produced a weight vector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BandwidthRecord {
    pub kernel: Option<Kernel>,
    pub b1: Option<f64>,
    pub w2: Option<W2Bandwidths>,
    pub exact_w2: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub target_id: String,
    pub target: usize,
    pub weights: Vec<f64>,
    pub scheme: Scheme,
    pub bandwidths: BandwidthRecord,
}

impl WeightVector {
    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `K(|z_k - z_0| / b)`.
pub fn w1(z_k: &[f64], z_0: &[f64], kernel: Kernel, b: &Bandwidth) -> Result<f64> {
    kernel.weight(b.scaled_distance(z_k, z_0)?, b)
}

/// Source of the estimate-similarity component.
#[derive(Debug, Clone)]
pub enum W2Source<'a> {
    Exact(GaussianModel),
    Bootstrap { pairs: &'a BootstrapPairs, config: W2Config },
}

impl W2Source<'_> {
    fn record(&self) -> (Option<W2Bandwidths>, bool) {
        match self {
            W2Source::Exact(_) => (None, true),
            W2Source::Bootstrap { config, .. } => (Some(config.bandwidths.clone()), false),
        }
    }
}

/// Everything needed to build weights for a population.
#[derive(Debug, Clone)]
pub struct WeightSpec<'a> {
    pub scheme: Scheme,
    pub kernel: Kernel,
    pub b1: Option<Bandwidth>,
    pub w2: Option<W2Source<'a>>,
    pub include_self: bool,
}

impl<'a> WeightSpec<'a> {
    pub fn z_only(kernel: Kernel, b1: Bandwidth) -> Self {
        WeightSpec { scheme: Scheme::ZOnly, kernel, b1: Some(b1), w2: None, include_self: true }
    }

    pub fn theta_only(w2: W2Source<'a>) -> Self {
        WeightSpec { scheme: Scheme::ThetaOnly, kernel: Kernel::Gaussian, b1: None, w2: Some(w2), include_self: true }
    }

    pub fn combined(kernel: Kernel, b1: Bandwidth, w2: W2Source<'a>) -> Self {
        WeightSpec { scheme: Scheme::Combined, kernel, b1: Some(b1), w2: Some(w2), include_self: true }
    }

    fn b1(&self) -> Result<&Bandwidth> {
        self.b1
            .as_ref()
            .ok_or_else(|| Error::Config(format!("scheme {} needs a covariate bandwidth", self.scheme)))
    }

    fn w2(&self) -> Result<&W2Source<'a>> {
        self.w2
            .as_ref()
            .ok_or_else(|| Error::Config(format!("scheme {} needs an estimate-similarity source", self.scheme)))
    }

    fn record(&self) -> BandwidthRecord {
        let (w2, exact_w2) = match (&self.w2, self.scheme.uses_theta()) {
            (Some(src), true) => src.record(),
            _ => (None, false),
        };
        BandwidthRecord {
            kernel: self.scheme.uses_z().then_some(self.kernel),
            b1: if self.scheme.uses_z() { self.b1.as_ref().map(Bandwidth::value) } else { None },
            w2,
            exact_w2,
        }
    }
}

/// Dense weights, one row per target, one column per individual.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    targets: Vec<usize>,
    n: usize,
    data: Vec<f64>,
}

impl WeightMatrix {
    pub fn from_rows(targets: Vec<usize>, n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != targets.len() * n {
            return Err(Error::InvalidInput(format!(
                "{} weights for {} targets over {n} individuals",
                data.len(),
                targets.len()
            )));
        }
        Ok(WeightMatrix { targets, n, data })
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// Number of individuals (columns).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n..(r + 1) * self.n]
    }

    fn rows_mut(&mut self) -> impl IndexedParallelIterator<Item = (usize, &mut [f64])> {
        let targets = &self.targets;
        self.data.par_chunks_mut(self.n).enumerate().map(move |(r, row)| (targets[r], row))
    }

    /// Elementwise product with another matrix over the same targets.
    pub fn hadamard(mut self, other: &WeightMatrix) -> Result<Self> {
        if self.targets != other.targets || self.n != other.n {
            return Err(Error::InvalidInput("weight matrices cover different targets".into()));
        }
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a *= b);
        Ok(self)
    }

    /// Zeroes entries below `RELATIVE_WEIGHT_FLOOR` times their row maximum.
    pub fn truncate(mut self) -> Self {
        self.rows_mut().for_each(|(_, row)| truncate_row(row));
        self
    }

    fn drop_self(mut self) -> Self {
        self.rows_mut().for_each(|(t, row)| row[t] = 0.0);
        self
    }

    fn check_rows(&self, pop: &Population) -> Result<()> {
        for (r, &t) in self.targets.iter().enumerate() {
            let row = self.row(r);
            if let Some(bad) = row.iter().find(|w| !w.is_finite() || **w < 0.0) {
                return Err(Error::InvalidInput(format!(
                    "weight {bad} for target {} is not a finite non-negative number",
                    pop.record(t).id
                )));
            }
            if row.iter().sum::<f64>() <= 0.0 {
                return Err(Error::EmptyNeighborhood { target: pop.record(t).id.clone() });
            }
        }
        Ok(())
    }
}

fn truncate_row(row: &mut [f64]) {
    let max = row.iter().copied().fold(0.0, f64::max);
    let floor = RELATIVE_WEIGHT_FLOOR * max;
    for w in row.iter_mut() {
        if *w < floor {
            *w = 0.0;
        }
    }
}

/// Raw covariate kernel weights for the given targets.
pub fn w1_matrix(pop: &Population, targets: &[usize], kernel: Kernel, b: &Bandwidth) -> Result<WeightMatrix> {
    b.validate()?;
    let zs = pop.zs()?;
    if let Some(d) = pop.z_dim() {
        if let Some(s) = b.scales() {
            if s.len() != d {
                return Err(Error::InvalidInput(format!("bandwidth has {} scale factors for {d}-dimensional z", s.len())));
            }
        }
    }
    let n = pop.len();
    let mut data = vec![0.0; targets.len() * n];
    data.par_chunks_mut(n).zip(targets.par_iter()).for_each(|(row, &t)| {
        for (k, w) in row.iter_mut().enumerate() {
            let d = b.scaled_distance(zs[k], zs[t]).unwrap_or(f64::INFINITY);
            *w = if d.is_finite() { kernel.eval_unchecked(d / b.value()) } else { 0.0 };
        }
    });
    WeightMatrix::from_rows(targets.to_vec(), n, data)
}

/// Raw estimate-similarity weights for the given targets.
pub fn w2_matrix(pop: &Population, targets: &[usize], source: &W2Source<'_>) -> Result<WeightMatrix> {
    let n = pop.len();
    let data = match source {
        W2Source::Exact(model) => {
            let thetas = pop.theta_hats()?;
            let mut data = vec![0.0; targets.len() * n];
            data.par_chunks_mut(n).zip(targets.par_iter()).for_each(|(row, &t)| {
                for (k, w) in row.iter_mut().enumerate() {
                    *w = model.w2(thetas[k], thetas[t]);
                }
            });
            data
        }
        W2Source::Bootstrap { pairs, config } => bootstrap::w2_bootstrap_matrix(pop, pairs, config, targets)?,
    };
    WeightMatrix::from_rows(targets.to_vec(), n, data)
}

/// Raw (untruncated) weights for `targets` under `spec`, self-weight kept.
pub fn raw_weight_matrix(pop: &Population, targets: &[usize], spec: &WeightSpec<'_>) -> Result<WeightMatrix> {
    if let Some(&bad) = targets.iter().find(|&&t| t >= pop.len()) {
        return Err(Error::InvalidInput(format!("target index {bad} outside population of {}", pop.len())));
    }
    match spec.scheme {
        Scheme::ZOnly => w1_matrix(pop, targets, spec.kernel, spec.b1()?),
        Scheme::ThetaOnly => w2_matrix(pop, targets, spec.w2()?),
        Scheme::Combined => {
            let a = w1_matrix(pop, targets, spec.kernel, spec.b1()?)?;
            a.hadamard(&w2_matrix(pop, targets, spec.w2()?)?)
        }
    }
}

/// Final weights for several targets: truncated, self-weight dropped when
/// requested, every row checked to have positive mass.
pub fn weight_matrix(pop: &Population, targets: &[usize], spec: &WeightSpec<'_>) -> Result<WeightMatrix> {
    let mut m = raw_weight_matrix(pop, targets, spec)?.truncate();
    if !spec.include_self {
        m = m.drop_self();
    }
    m.check_rows(pop)?;
    Ok(m)
}

/// Weight vector for one target.
pub fn build_weights(pop: &Population, target: usize, spec: &WeightSpec<'_>) -> Result<WeightVector> {
    let m = weight_matrix(pop, &[target], spec)?;
    Ok(WeightVector {
        target_id: pop.record(target).id.clone(),
        target,
        weights: m.row(0).to_vec(),
        scheme: spec.scheme,
        bandwidths: spec.record(),
    })
}

/// Like [`build_weights`] but also returns the separate `w1` and `w2`
/// columns (each `1.0` when its component is unused).
pub fn build_weight_components(
    pop: &Population,
    target: usize,
    spec: &WeightSpec<'_>,
) -> Result<(WeightVector, Vec<f64>, Vec<f64>)> {
    let n = pop.len();
    let c1 = if spec.scheme.uses_z() {
        w1_matrix(pop, &[target], spec.kernel, spec.b1()?)?.row(0).to_vec()
    } else {
        vec![1.0; n]
    };
    let c2 = if spec.scheme.uses_theta() {
        w2_matrix(pop, &[target], spec.w2()?)?.row(0).to_vec()
    } else {
        vec![1.0; n]
    };
    Ok((build_weights(pop, target, spec)?, c1, c2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::IndividualRecord;

    fn pop_z(zs: &[f64]) -> Population {
        Population::new(
            zs.iter()
                .enumerate()
                .map(|(i, z)| IndividualRecord::new(format!("i{i}")).with_theta_hat(i as f64).with_z(vec![*z]))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn w1_examples() {
        let one = Bandwidth::new(1.0).unwrap();
        assert!((w1(&[1.0, 2.0], &[1.0, 2.0], Kernel::Gaussian, &one).unwrap() - 0.398_942_280_4).abs() < 1e-10);
        assert_eq!(w1(&[5.0], &[0.0], Kernel::Boxcar, &one).unwrap(), 0.0);
        let oracle = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert!((w1(&[0.0, 1.0], &[0.0, 0.0], Kernel::Gaussian, &one).unwrap() - oracle).abs() < 1e-15);
        assert!((oracle - 0.241_970_724_519_143).abs() < 1e-12);
        assert!(w1(&[0.0], &[0.0, 1.0], Kernel::Gaussian, &one).is_err());
    }

    #[test]
    fn equal_z_gives_uniform_weights() {
        let pop = pop_z(&[0.3, 0.3, 0.3]);
        let w = build_weights(&pop, 1, &WeightSpec::z_only(Kernel::Gaussian, Bandwidth::new(0.5).unwrap())).unwrap();
        assert!(w.weights.iter().all(|v| (v - w.weights[0]).abs() < 1e-15));
        assert_eq!(w.target_id, "i1");
        assert_eq!(w.bandwidths.b1, Some(0.5));
    }

    #[test]
    fn boxcar_hard_cutoff() {
        let pop = pop_z(&[0.0, 0.5, 2.0]);
        let w = build_weights(&pop, 0, &WeightSpec::z_only(Kernel::Boxcar, Bandwidth::new(1.0).unwrap())).unwrap();
        assert_eq!(w.weights, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn combined_is_product_of_parts() {
        let records = (0..40)
            .map(|i| {
                let z = (i as f64 * 0.37).sin();
                IndividualRecord::new(format!("r{i}")).with_theta_hat(z * 1.5 + (i as f64 * 1.3).cos()).with_z(vec![z])
            })
            .collect();
        let pop = Population::new(records).unwrap();
        let model = GaussianModel::new(0.0, 1.0, 0.5).unwrap();
        let b = Bandwidth::new(0.4).unwrap();
        let zw = build_weights(&pop, 7, &WeightSpec::z_only(Kernel::Gaussian, b.clone())).unwrap();
        let tw = build_weights(&pop, 7, &WeightSpec::theta_only(W2Source::Exact(model))).unwrap();
        let cw = build_weights(&pop, 7, &WeightSpec::combined(Kernel::Gaussian, b, W2Source::Exact(model))).unwrap();
        for k in 0..pop.len() {
            let want = zw.weights[k] * tw.weights[k];
            assert!((cw.weights[k] - want).abs() <= 1e-14 * want.max(1e-300));
        }
        assert!(cw.bandwidths.exact_w2);
    }

    #[test]
    fn missing_fields_are_scheme_mismatch() {
        let pop = Population::new(vec![IndividualRecord::new("a").with_theta_hat(1.0)]).unwrap();
        let r = build_weights(&pop, 0, &WeightSpec::z_only(Kernel::Gaussian, Bandwidth::new(1.0).unwrap()));
        assert!(matches!(r, Err(Error::SchemeMismatch(_))));
    }

    #[test]
    fn all_zero_weights_is_empty_neighborhood() {
        let pop = pop_z(&[0.0, 5.0, 9.0]);
        let mut spec = WeightSpec::z_only(Kernel::Boxcar, Bandwidth::new(1.0).unwrap());
        spec.include_self = false;
        assert!(matches!(build_weights(&pop, 0, &spec), Err(Error::EmptyNeighborhood { .. })));
    }

    #[test]
    fn far_tail_is_truncated() {
        let pop = pop_z(&[0.0, 0.1, 50.0]);
        let w = build_weights(&pop, 0, &WeightSpec::z_only(Kernel::Gaussian, Bandwidth::new(1.0).unwrap())).unwrap();
        assert_eq!(w.weights[2], 0.0);
        assert!(w.weights[1] > 0.0);
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in [Scheme::ZOnly, Scheme::ThetaOnly, Scheme::Combined] {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!(matches!("zz".parse::<Scheme>(), Err(Error::Config(_))));
    }
}
