//! Bootstrap re-estimates and the kernel estimator of the
//! estimate-similarity weight.
//!
//! Each individual contributes `B` pairs of re-estimates computed from two
//! independent resamples of its own data. Kernel density estimates over the
//! pairs stand in for the unknown joint law of two estimates sharing one
//! parameter value. Every kernel term is divided by its bandwidth so each
//! component is a proper density estimate.

use ndarray::{Array2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{rule_of_thumb_multivariate, silverman, Bandwidth, Kernel};
use crate::population::Population;
use crate::rng::{stream, StreamTag};

/// Individuals with fewer raw observations than this cannot be bootstrapped.
pub const MIN_BOOTSTRAP_LEN: usize = 3;

/// Individual-level estimator that can be recomputed on resampled data.
pub trait Resampler: Sync {
    fn estimate(&self, x: &[f64]) -> f64;

    fn resampled_estimate<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> f64;
}

/// Sample mean; resamples observations with replacement.
#[derive(Debug, Clone, Copy, Default)]
pub struct SampleMean;

impl Resampler for SampleMean {
    fn estimate(&self, x: &[f64]) -> f64 {
        crate::stats::mean(x)
    }

    fn resampled_estimate<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> f64 {
        let n = x.len();
        (0..n).map(|_| x[rng.gen_range(0..n)]).sum::<f64>() / n as f64
    }
}

/// Conditional least-squares AR(1) coefficient, clamped to
/// `[-bound, bound]`; resamples `(x[t-1], x[t])` transition pairs.
#[derive(Debug, Clone, Copy)]
pub struct Ar1Cls {
    pub bound: f64,
}

impl Default for Ar1Cls {
    fn default() -> Self {
        Ar1Cls { bound: 0.999 }
    }
}

impl Ar1Cls {
    fn from_sums(&self, cross: f64, lagged_sq: f64) -> f64 {
        if lagged_sq <= 0.0 {
            return 0.0;
        }
        (cross / lagged_sq).clamp(-self.bound, self.bound)
    }
}

impl Resampler for Ar1Cls {
    fn estimate(&self, x: &[f64]) -> f64 {
        let (cross, sq) = x
            .windows(2)
            .fold((0.0, 0.0), |(c, s), w| (c + w[0] * w[1], s + w[0] * w[0]));
        self.from_sums(cross, sq)
    }

    fn resampled_estimate<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> f64 {
        let pairs = x.len() - 1;
        let (mut cross, mut sq) = (0.0, 0.0);
        for _ in 0..pairs {
            let t = rng.gen_range(1..x.len());
            cross += x[t - 1] * x[t];
            sq += x[t - 1] * x[t - 1];
        }
        self.from_sums(cross, sq)
    }
}

/// Per-individual bootstrap re-estimate pairs, aligned with population order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapPairs {
    replicates: Vec<Vec<[f64; 2]>>,
}

impl BootstrapPairs {
    pub fn from_pairs(replicates: Vec<Vec<[f64; 2]>>) -> Result<Self> {
        let b = replicates.first().map_or(0, Vec::len);
        if b == 0 {
            return Err(Error::InvalidInput("bootstrap pairs must be non-empty".into()));
        }
        for (i, r) in replicates.iter().enumerate() {
            if r.len() != b {
                return Err(Error::InvalidInput(format!(
                    "individual {i} has {} bootstrap pairs, expected {b}",
                    r.len()
                )));
            }
            if r.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("individual {i} has a non-finite re-estimate")));
            }
        }
        Ok(BootstrapPairs { replicates })
    }

    /// Draws `per_individual` pairs for every record from its own resampled
    /// data, using the stream keyed by `(seed, replication, individual)`.
    pub fn generate<E: Resampler>(
        pop: &Population,
        estimator: &E,
        per_individual: usize,
        seed: u64,
        replication: u64,
    ) -> Result<Self> {
        if per_individual == 0 {
            return Err(Error::Config("bootstrap needs at least one pair per individual".into()));
        }
        if let Some(r) = pop.records().iter().find(|r| r.x.len() < MIN_BOOTSTRAP_LEN) {
            return Err(Error::SchemeMismatch(format!(
                "record {} has {} observations; bootstrap needs at least {MIN_BOOTSTRAP_LEN}",
                r.id,
                r.x.len()
            )));
        }
        let replicates = pop
            .records()
            .par_iter()
            .enumerate()
            .map(|(i, r)| {
                let mut rng = stream(seed, replication, i as u64, StreamTag::Bootstrap);
                (0..per_individual)
                    .map(|_| {
                        let a = estimator.resampled_estimate(&r.x, &mut rng);
                        let b = estimator.resampled_estimate(&r.x, &mut rng);
                        [a, b]
                    })
                    .collect()
            })
            .collect();
        BootstrapPairs::from_pairs(replicates)
    }

    pub fn len(&self) -> usize {
        self.replicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replicates.is_empty()
    }

    pub fn per_individual(&self) -> usize {
        self.replicates[0].len()
    }

    pub fn of(&self, i: usize) -> &[[f64; 2]] {
        &self.replicates[i]
    }

    fn column(&self, which: usize) -> Vec<f64> {
        self.replicates.iter().flatten().map(|p| p[which]).collect()
    }
}

/// Whether the weight conditions on the exogenous covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum W2Form {
    /// Reduced weight using estimates only.
    Marginal,
    /// Full weight conditioning the densities on `z`.
    Conditional,
}

/// Bandwidths of the kernel estimator.
///
/// `estimate` smooths the original estimates in the density denominators;
/// `first` and `second` smooth the two bootstrap coordinates; `z` smooths the
/// covariates in the conditional form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct W2Bandwidths {
    pub z: Option<Bandwidth>,
    pub estimate: f64,
    pub first: f64,
    pub second: f64,
}

impl W2Bandwidths {
    /// Silverman's rule per coordinate; the covariate bandwidth uses the
    /// `n^(-1/(d+4))` rate with per-axis standard deviations as scales.
    pub fn rule_of_thumb(pop: &Population, pairs: &BootstrapPairs, form: W2Form) -> Result<Self> {
        let thetas = pop.theta_hats()?;
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(Error::InvalidInput(format!(
                    "rule-of-thumb bandwidth for {what} is {v}; the values have no spread"
                )))
            }
        };
        let z = match form {
            W2Form::Marginal => None,
            W2Form::Conditional => Some(rule_of_thumb_multivariate(&pop.zs()?)?),
        };
        Ok(W2Bandwidths {
            z,
            estimate: positive(silverman(&thetas), "estimates")?,
            first: positive(silverman(&pairs.column(0)), "first re-estimates")?,
            second: positive(silverman(&pairs.column(1)), "second re-estimates")?,
        })
    }

    /// Multiplies every bandwidth by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::InvalidBandwidth(factor));
        }
        Ok(W2Bandwidths {
            z: self.z.as_ref().map(|b| b.rescaled(b.value() * factor)).transpose()?,
            estimate: self.estimate * factor,
            first: self.first * factor,
            second: self.second * factor,
        })
    }

    fn validate(&self, form: W2Form) -> Result<()> {
        for v in [self.estimate, self.first, self.second] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidBandwidth(v));
            }
        }
        match (&self.z, form) {
            (Some(b), _) => b.validate(),
            (None, W2Form::Conditional) => Err(Error::SchemeMismatch(
                "conditional weight requires a covariate bandwidth".into(),
            )),
            (None, W2Form::Marginal) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct W2Config {
    pub form: W2Form,
    pub z_kernel: Kernel,
    pub theta_kernel: Kernel,
    pub bandwidths: W2Bandwidths,
}

impl W2Config {
    pub fn rule_of_thumb(pop: &Population, pairs: &BootstrapPairs, form: W2Form) -> Result<Self> {
        Ok(W2Config {
            form,
            z_kernel: Kernel::Gaussian,
            theta_kernel: Kernel::Gaussian,
            bandwidths: W2Bandwidths::rule_of_thumb(pop, pairs, form)?,
        })
    }
}

#[inline]
fn scaled_kernel(kernel: Kernel, diff: f64, b: f64) -> f64 {
    kernel.eval_unchecked(diff / b) / b
}

/// Kernel estimate of the density of the estimate at `query_theta`,
/// conditioned on `query_z` when given:
/// `sum_j K1(|z - z_j| / b1) K2(|theta - theta_j| / b2) / b2 / sum_j K1(..)`.
/// Without `query_z` it is the plain 1-D kernel density estimate.
pub fn conditional_density_estimate(
    pop: &Population,
    query_theta: f64,
    query_z: Option<&[f64]>,
    z_kernel: Kernel,
    theta_kernel: Kernel,
    b_z: Option<&Bandwidth>,
    b_theta: f64,
) -> Result<f64> {
    if !(b_theta > 0.0) {
        return Err(Error::InvalidBandwidth(b_theta));
    }
    let thetas = pop.theta_hats()?;
    let coupling = match query_z {
        Some(z) => {
            let b = b_z.ok_or_else(|| Error::Config("conditioning on z needs a covariate bandwidth".into()))?;
            b.validate()?;
            pop.zs()?
                .iter()
                .map(|zj| Ok(z_kernel.eval_unchecked(b.scaled_distance(z, zj)? / b.value())))
                .collect::<Result<Vec<f64>>>()?
        }
        None => vec![1.0; thetas.len()],
    };
    density_with_coupling(&thetas, &coupling, query_theta, theta_kernel, b_theta)
        .ok_or_else(|| Error::EmptyNeighborhood { target: format!("query at theta={query_theta}") })
}

fn density_with_coupling(thetas: &[f64], coupling: &[f64], at: f64, kernel: Kernel, b: f64) -> Option<f64> {
    let total: f64 = coupling.iter().sum();
    if total < 1e-12 {
        return None;
    }
    let num: f64 = thetas
        .iter()
        .zip(coupling)
        .map(|(t, c)| c * scaled_kernel(kernel, at - t, b))
        .sum();
    Some(num / total)
}

struct W2Inputs<'a> {
    thetas: Vec<f64>,
    zs: Option<Vec<&'a [f64]>>,
}

impl<'a> W2Inputs<'a> {
    fn gather(pop: &'a Population, pairs: &BootstrapPairs, cfg: &W2Config) -> Result<Self> {
        if pairs.len() != pop.len() {
            return Err(Error::InvalidInput(format!(
                "{} bootstrap pair sets for {} individuals",
                pairs.len(),
                pop.len()
            )));
        }
        cfg.bandwidths.validate(cfg.form)?;
        let zs = match cfg.form {
            W2Form::Marginal => None,
            W2Form::Conditional => Some(pop.zs()?),
        };
        Ok(W2Inputs { thetas: pop.theta_hats()?, zs })
    }

    /// `K_z(z_t, z_j)` for every `j`, or all ones in the marginal form.
    fn coupling(&self, t: usize, cfg: &W2Config) -> Vec<f64> {
        match (&self.zs, &cfg.bandwidths.z) {
            (Some(zs), Some(b)) => zs
                .iter()
                .map(|zj| {
                    let d = b.scaled_distance(zs[t], zj).unwrap_or(f64::INFINITY);
                    cfg.z_kernel.eval_unchecked(d / b.value())
                })
                .collect(),
            _ => vec![1.0; self.thetas.len()],
        }
    }

    /// Density of each individual's own estimate (conditioned on its own `z`
    /// in the conditional form).
    fn own_densities(&self, pop: &Population, cfg: &W2Config) -> Result<Vec<f64>> {
        (0..self.thetas.len())
            .into_par_iter()
            .map(|k| {
                let coupling = self.coupling(k, cfg);
                density_with_coupling(&self.thetas, &coupling, self.thetas[k], cfg.theta_kernel, cfg.bandwidths.estimate)
                    .filter(|d| *d > 0.0)
                    .ok_or_else(|| Error::EmptyNeighborhood { target: pop.record(k).id.clone() })
            })
            .collect()
    }
}

/// Kernel estimate of the weight of individual `k` for `target`.
pub fn w2_bootstrap(pop: &Population, pairs: &BootstrapPairs, k: usize, target: usize, cfg: &W2Config) -> Result<f64> {
    let inputs = W2Inputs::gather(pop, pairs, cfg)?;
    let row = w2_row(pop, pairs, cfg, &inputs, target, None)?;
    Ok(row[k])
}

/// Weights of every individual for one target, computed term by term.
pub fn w2_bootstrap_row(pop: &Population, pairs: &BootstrapPairs, target: usize, cfg: &W2Config) -> Result<Vec<f64>> {
    let inputs = W2Inputs::gather(pop, pairs, cfg)?;
    w2_row(pop, pairs, cfg, &inputs, target, None)
}

fn w2_row(
    pop: &Population,
    pairs: &BootstrapPairs,
    cfg: &W2Config,
    inputs: &W2Inputs<'_>,
    target: usize,
    densities: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let n = inputs.thetas.len();
    let owned;
    let dens = match densities {
        Some(d) => d,
        None => {
            owned = inputs.own_densities(pop, cfg)?;
            &owned
        }
    };
    let coupling = inputs.coupling(target, cfg);
    let total: f64 = coupling.iter().sum();
    if total < 1e-12 {
        return Err(Error::EmptyNeighborhood { target: pop.record(target).id.clone() });
    }
    let bw = &cfg.bandwidths;
    let reps = pairs.per_individual() as f64;
    let theta_t = inputs.thetas[target];
    let row = (0..n)
        .map(|k| {
            let theta_k = inputs.thetas[k];
            let integral: f64 = (0..n)
                .map(|j| {
                    let inner: f64 = pairs
                        .of(j)
                        .iter()
                        .map(|p| match cfg.form {
                            W2Form::Conditional => {
                                scaled_kernel(cfg.theta_kernel, theta_t - p[0], bw.first)
                                    * scaled_kernel(cfg.theta_kernel, theta_k - p[1], bw.second)
                            }
                            W2Form::Marginal => {
                                scaled_kernel(cfg.theta_kernel, p[0] - theta_k, bw.first)
                                    * scaled_kernel(cfg.theta_kernel, p[1] - theta_t, bw.second)
                            }
                        })
                        .sum();
                    coupling[j] * inner
                })
                .sum::<f64>()
                / (reps * total);
            integral / (dens[k] * dens[target])
        })
        .collect();
    Ok(row)
}

/// Weights for several targets at once; row `r` holds the weights of every
/// individual for `targets[r]`.
///
/// The pair integral is a product of a target-dependent and an
/// individual-dependent kernel factor summed over bootstrap pairs, so all
/// rows come out of one matrix product.
pub(crate) fn w2_bootstrap_matrix(
    pop: &Population,
    pairs: &BootstrapPairs,
    cfg: &W2Config,
    targets: &[usize],
) -> Result<Vec<f64>> {
    let inputs = W2Inputs::gather(pop, pairs, cfg)?;
    let dens = inputs.own_densities(pop, cfg)?;
    let n = inputs.thetas.len();
    let reps = pairs.per_individual();
    let m = n * reps;
    let bw = &cfg.bandwidths;
    let kern = cfg.theta_kernel;

    // individual factor: column (j, r) of row k
    let mut g = Array2::<f64>::zeros((n, m));
    g.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(k, mut row)| {
            let theta_k = inputs.thetas[k];
            for j in 0..n {
                for (r, p) in pairs.of(j).iter().enumerate() {
                    row[j * reps + r] = match cfg.form {
                        W2Form::Conditional => scaled_kernel(kern, theta_k - p[1], bw.second),
                        W2Form::Marginal => scaled_kernel(kern, p[0] - theta_k, bw.first),
                    };
                }
            }
        });

    // target factor
    let mut a = Array2::<f64>::zeros((targets.len(), m));
    let totals: Vec<f64> = a
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .map(|(row_idx, mut row)| {
            let t = targets[row_idx];
            let coupling = inputs.coupling(t, cfg);
            let total: f64 = coupling.iter().sum();
            let theta_t = inputs.thetas[t];
            for j in 0..n {
                for (r, p) in pairs.of(j).iter().enumerate() {
                    let v = match cfg.form {
                        W2Form::Conditional => scaled_kernel(kern, theta_t - p[0], bw.first),
                        W2Form::Marginal => scaled_kernel(kern, p[1] - theta_t, bw.second),
                    };
                    row[j * reps + r] = coupling[j] * v / (reps as f64 * total);
                }
            }
            total
        })
        .collect();
    if let Some(pos) = totals.iter().position(|t| *t < 1e-12) {
        return Err(Error::EmptyNeighborhood { target: pop.record(targets[pos]).id.clone() });
    }

    // Fixed-size row blocks keep results independent of the thread count.
    const BLOCK: usize = 64;
    let gt = g.t();
    let blocks: Vec<Array2<f64>> = a
        .axis_chunks_iter(Axis(0), BLOCK)
        .into_par_iter()
        .map(|chunk| chunk.dot(&gt))
        .collect();

    let mut out = Vec::with_capacity(targets.len() * n);
    let mut row_idx = 0;
    for block in blocks {
        for row in block.axis_iter(Axis(0)) {
            let t = targets[row_idx];
            out.extend(row.iter().zip(&dens).map(|(v, dk)| v / (dk * dens[t])));
            row_idx += 1;
        }
    }
    Ok(out)
}
