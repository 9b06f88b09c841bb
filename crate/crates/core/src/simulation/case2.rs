//! Short AR(1) series without covariates.
//!
//! Coefficients follow `(theta + 1) / 2 ~ Beta(4, 4)`; each series starts
//! from its stationary law. Weights come from the estimate-only kernel
//! estimator on bootstrap re-estimates of transition pairs. Two pooled
//! estimators are compared with the individual least-squares fit and with
//! the posterior mean under the true prior.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{validate_positive, Cell, ErrorSums, SimulationReport};
use crate::aggregation::{minimize_with_weights, weighted_mean, ObjectiveSpec};
use crate::error::{Error, Result};
use crate::population::{IndividualRecord, Population};
use crate::rng::{stream, StreamTag};
use crate::weights::{w2_matrix, Ar1Cls, BootstrapPairs, Resampler, W2Config, W2Form, W2Source};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Ar1Prior {
    /// `(theta + 1) / 2 ~ Beta(a, b)`.
    Beta { a: f64, b: f64 },
    PointMass { value: f64 },
}

impl Ar1Prior {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match *self {
            Ar1Prior::Beta { a, b } => {
                let d = Beta::new(a, b).map_err(|e| Error::Config(format!("beta prior: {e}")))?;
                Ok(2.0 * d.sample(rng) - 1.0)
            }
            Ar1Prior::PointMass { value } => Ok(value),
        }
    }

    fn log_density(&self, theta: f64) -> f64 {
        match *self {
            Ar1Prior::Beta { a, b } => (a - 1.0) * (1.0 + theta).ln() + (b - 1.0) * (1.0 - theta).ln(),
            Ar1Prior::PointMass { .. } => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimCase2Config {
    pub k: usize,
    /// Total observations per series, initial value included.
    pub length: usize,
    pub sigma: f64,
    pub replications: usize,
    /// Bootstrap re-estimate pairs per series.
    pub bootstrap_pairs: usize,
    pub bound: f64,
    pub oracle_grid: usize,
    pub prior: Ar1Prior,
    pub seed: u64,
}

impl Default for SimCase2Config {
    fn default() -> Self {
        SimCase2Config {
            k: 200,
            length: 10,
            sigma: 3.0,
            replications: 100,
            bootstrap_pairs: 1,
            bound: 0.999,
            oracle_grid: 2001,
            prior: Ar1Prior::Beta { a: 4.0, b: 4.0 },
            seed: 0,
        }
    }
}

impl SimCase2Config {
    pub fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(Error::Config("series length must be at least 2".into()));
        }
        if self.k < 2 || self.replications == 0 || self.bootstrap_pairs == 0 || self.oracle_grid < 3 {
            return Err(Error::Config("k >= 2, replications, bootstrap_pairs and oracle_grid >= 3 required".into()));
        }
        validate_positive("sigma", self.sigma)?;
        if !(self.bound > 0.0 && self.bound < 1.0) {
            return Err(Error::Config(format!("bound {} must lie in (0, 1)", self.bound)));
        }
        match self.prior {
            Ar1Prior::Beta { a, b } if a > 0.0 && b > 0.0 => Ok(()),
            Ar1Prior::PointMass { value } if value.abs() < 1.0 => Ok(()),
            _ => Err(Error::Config("prior parameters out of range".into())),
        }
    }
}

/// Stationary AR(1) series of `length` observations.
pub fn simulate_ar1<R: Rng + ?Sized>(theta: f64, sigma: f64, length: usize, rng: &mut R) -> Vec<f64> {
    let mut x = Vec::with_capacity(length);
    let sd0 = sigma / (1.0 - theta * theta).sqrt();
    let e: f64 = rng.sample(StandardNormal);
    x.push(sd0 * e);
    for t in 1..length {
        let e: f64 = rng.sample(StandardNormal);
        x.push(theta * x[t - 1] + sigma * e);
    }
    x
}

/// Exact log-likelihood of a stationary AR(1) series.
pub fn ar1_log_likelihood(x: &[f64], theta: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let v0 = s2 / (1.0 - theta * theta);
    let mut ll = -0.5 * v0.ln() - x[0] * x[0] / (2.0 * v0);
    for w in x.windows(2) {
        ll -= (w[1] - theta * w[0]).powi(2) / (2.0 * s2) + 0.5 * s2.ln();
    }
    ll
}

/// Posterior mean of the coefficient on an evenly spaced grid over
/// `[-bound, bound]`.
pub fn posterior_mean(x: &[f64], sigma: f64, prior: &Ar1Prior, bound: f64, points: usize) -> f64 {
    if let Ar1Prior::PointMass { value } = prior {
        return *value;
    }
    let step = 2.0 * bound / (points - 1) as f64;
    let logs: Vec<(f64, f64)> = (0..points)
        .map(|i| {
            let t = -bound + i as f64 * step;
            (t, ar1_log_likelihood(x, t, sigma) + prior.log_density(t))
        })
        .collect();
    let max = logs.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (t, l) in logs {
        let w = (l - max).exp();
        num += t * w;
        den += w;
    }
    num / den
}

const METHODS: [&str; 4] = ["individual", "igroup1", "igroup2", "oracle"];

fn run_replication(cfg: &SimCase2Config, r: u64) -> Result<[ErrorSums; 4]> {
    let est = Ar1Cls { bound: cfg.bound };
    let mut thetas = Vec::with_capacity(cfg.k);
    let mut records = Vec::with_capacity(cfg.k);
    for i in 0..cfg.k {
        let mut rng = stream(cfg.seed, r, i as u64, StreamTag::Data);
        let theta = cfg.prior.sample(&mut rng)?;
        let x = simulate_ar1(theta, cfg.sigma, cfg.length, &mut rng);
        thetas.push(theta);
        records.push(IndividualRecord::new(format!("s{i}")).with_theta_hat(est.estimate(&x)).with_x(x));
    }
    let pop = Population::new(records)?;
    let hats = pop.theta_hats()?;
    let pairs = BootstrapPairs::generate(&pop, &est, cfg.bootstrap_pairs, cfg.seed, r)?;
    let config = W2Config::rule_of_thumb(&pop, &pairs, W2Form::Marginal)?;
    let targets: Vec<usize> = (0..pop.len()).collect();
    let w = w2_matrix(&pop, &targets, &W2Source::Bootstrap { pairs: &pairs, config })?.truncate();
    let obj = ObjectiveSpec::ar1_conditional_nll(-cfg.bound, cfg.bound)?;

    let rows: Vec<[f64; 4]> = targets
        .par_iter()
        .map(|&t| {
            let id = &pop.record(t).id;
            let row = w.row(t);
            let ig2 = weighted_mean(&hats, row).ok_or_else(|| Error::EmptyNeighborhood { target: id.clone() })?;
            let ig1 = minimize_with_weights(&obj, &pop, row, id)?.value;
            let oracle = posterior_mean(&pop.record(t).x, cfg.sigma, &cfg.prior, cfg.bound, cfg.oracle_grid);
            Ok([hats[t], ig1, ig2, oracle])
        })
        .collect::<Result<_>>()?;
    let mut out = [ErrorSums::default(); 4];
    for (row, theta) in rows.iter().zip(&thetas) {
        for m in 0..4 {
            out[m].push(row[m] - theta);
        }
    }
    Ok(out)
}

pub fn run_case2(cfg: &SimCase2Config) -> Result<SimulationReport> {
    cfg.validate()?;
    let per_rep: Vec<[ErrorSums; 4]> =
        (0..cfg.replications).into_par_iter().map(|r| run_replication(cfg, r as u64)).collect::<Result<_>>()?;
    let mut cells = vec![Cell::default(); 4];
    for rep in &per_rep {
        for m in 0..4 {
            cells[m].push_replication(rep[m]);
        }
    }
    let mut report = SimulationReport {
        case: "case2".into(),
        seed: cfg.seed,
        methods: Vec::new(),
        curves: Vec::new(),
        replications: Vec::new(),
        notes: Vec::new(),
    };
    let baseline = cells[0].per_rep.clone();
    let setting = format!("k={} length={} sigma={}", cfg.k, cfg.length, cfg.sigma);
    for (m, name) in METHODS.iter().enumerate() {
        report.push_cell(&setting, name, &cells[m], (m > 0).then_some(baseline.as_slice()));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_mass_oracle_is_exact() {
        let mut rng = stream(1, 0, 0, StreamTag::Data);
        let x = simulate_ar1(0.4, 3.0, 10, &mut rng);
        assert!((posterior_mean(&x, 3.0, &Ar1Prior::PointMass { value: 0.4 }, 0.999, 2001) - 0.4).abs() < 1e-4);
    }

    #[test]
    fn sharp_prior_concentrates_posterior() {
        // A Beta(a, a) prior with huge a is nearly a point mass at 0.
        let mut rng = stream(2, 0, 0, StreamTag::Data);
        let x = simulate_ar1(0.0, 1.0, 10, &mut rng);
        let pm = posterior_mean(&x, 1.0, &Ar1Prior::Beta { a: 1e6, b: 1e6 }, 0.999, 2001);
        assert!(pm.abs() < 1e-3);
    }

    #[test]
    fn likelihood_matches_gaussian_density() {
        let x = [0.5, -0.2, 0.7];
        let (t, s) = (0.3, 1.5);
        let v0 = s * s / (1.0 - t * t);
        let direct = crate::stats::normal_pdf(x[0], 0.0, v0).ln()
            + crate::stats::normal_pdf(x[1], t * x[0], s * s).ln()
            + crate::stats::normal_pdf(x[2], t * x[1], s * s).ln();
        // ar1_log_likelihood drops the 2 pi constants
        let consts = 1.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((ar1_log_likelihood(&x, t, s) - consts - direct).abs() < 1e-12);
    }

    #[test]
    fn small_run() {
        let cfg = SimCase2Config { k: 40, replications: 2, seed: 5, ..Default::default() };
        let r = run_case2(&cfg).unwrap();
        assert_eq!(r.methods.len(), 4);
        assert_eq!(r, run_case2(&cfg).unwrap());
    }
}
