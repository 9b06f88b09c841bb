//! Noisy exogenous covariate study.
//!
//! `eta ~ N(0.2, 1)`, `theta = (eta + 1)^2`, `theta_hat ~ N(theta, tau^2)`,
//! `z ~ N(eta, sigma^2)`. A target individual with `eta = 0` (so
//! `theta = 1`) is placed at index 0. The kernel smoother in `z` is
//! evaluated on a bandwidth grid and at the bandwidth picked by global
//! leave-one-out CV, next to the individual estimate and the population mean.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{validate_grid, validate_positive, Cell, CurveRow, ErrorSums, RiskDecomposition, SimulationReport};
use crate::bandwidth::{argmin_smallest, kernel_smooth_1d};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::rng::{stream, StreamTag};

pub const ETA_MEAN: f64 = 0.2;
pub const TARGET_ETA: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimCase1Config {
    /// Population size, not counting the target.
    pub k: usize,
    pub sigmas: Vec<f64>,
    pub tau: f64,
    pub replications: usize,
    pub grid: Vec<f64>,
    pub kernel: Kernel,
    pub seed: u64,
}

impl Default for SimCase1Config {
    fn default() -> Self {
        SimCase1Config {
            k: 1000,
            sigmas: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            tau: 1.0,
            replications: 1000,
            grid: crate::stats::log_grid(0.01, 2.0, 20),
            kernel: Kernel::Gaussian,
            seed: 0,
        }
    }
}

impl SimCase1Config {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config("case1 needs k >= 2".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be positive".into()));
        }
        if self.sigmas.is_empty() || self.sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::Config("sigmas must be non-empty and non-negative".into()));
        }
        validate_positive("tau", self.tau)?;
        validate_grid(&self.grid)
    }
}

/// One simulated population shared by every noise level of a replication.
#[derive(Debug, Clone)]
pub struct Case1Draw {
    pub eta: Vec<f64>,
    pub theta: Vec<f64>,
    pub theta_hat: Vec<f64>,
    /// Standard normal noise scaled by sigma to form `z`.
    pub xi: Vec<f64>,
}

impl Case1Draw {
    pub fn generate(k: usize, tau: f64, seed: u64, replication: u64) -> Self {
        let n = k + 1;
        let mut d = Case1Draw {
            eta: Vec::with_capacity(n),
            theta: Vec::with_capacity(n),
            theta_hat: Vec::with_capacity(n),
            xi: Vec::with_capacity(n),
        };
        for i in 0..n {
            let mut rng = stream(seed, replication, i as u64, StreamTag::Data);
            let g: f64 = rng.sample(StandardNormal);
            let eta = if i == 0 { TARGET_ETA } else { ETA_MEAN + g };
            let theta = (eta + 1.0).powi(2);
            let eps: f64 = rng.sample(StandardNormal);
            d.eta.push(eta);
            d.theta.push(theta);
            d.theta_hat.push(theta + tau * eps);
            d.xi.push(rng.sample(StandardNormal));
        }
        d
    }

    pub fn z(&self, sigma: f64) -> Vec<f64> {
        self.eta.iter().zip(&self.xi).map(|(e, x)| e + sigma * x).collect()
    }
}

/// `E[theta | z]` under the generating model.
pub fn target_estimator(z: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let v = s2 / (1.0 + s2);
    let m = (ETA_MEAN * s2 + z) / (1.0 + s2);
    (m + 1.0).powi(2) + v
}

#[derive(Debug, Clone, Default)]
struct SigmaResult {
    /// Per grid point: (target error sums, population error sums, cv error).
    curve: Vec<(ErrorSums, ErrorSums, f64)>,
    target: [ErrorSums; 4],
    population: [ErrorSums; 4],
    risk: Option<RiskDecomposition>,
    selected: f64,
}

const METHODS: [&str; 4] = ["individual", "igroup_cv", "population_mean", "oracle"];

fn run_sigma(cfg: &SimCase1Config, d: &Case1Draw, sigma: f64) -> Result<SigmaResult> {
    let z = d.z(sigma);
    let n = z.len();
    let mut out = SigmaResult::default();
    let mut cv = Vec::with_capacity(cfg.grid.len());
    let mut fulls = Vec::with_capacity(cfg.grid.len());
    for &b in &cfg.grid {
        let s = kernel_smooth_1d(&z, &d.theta_hat, cfg.kernel, b)?;
        let cv_err = if s.loo.iter().any(|v| v.is_nan()) {
            f64::INFINITY
        } else {
            s.loo.iter().zip(&d.theta_hat).map(|(l, t)| (l - t).powi(2)).sum::<f64>() / n as f64
        };
        let tgt = ErrorSums::from_errors([s.full[0] - d.theta[0]]);
        let pop = ErrorSums::from_errors((1..n).map(|k| s.full[k] - d.theta[k]));
        out.curve.push((tgt, pop, cv_err));
        cv.push(cv_err);
        fulls.push(s.full);
    }
    let idx = argmin_smallest(&cv).ok_or_else(|| Error::EmptyNeighborhood { target: "case1 population".into() })?;
    out.selected = cfg.grid[idx];
    let igroup = &fulls[idx];
    let grand = crate::stats::mean(&d.theta_hat[1..]);
    let oracle: Vec<f64> = z.iter().map(|zk| target_estimator(*zk, sigma)).collect();
    let estimates: [&dyn Fn(usize) -> f64; 4] =
        [&|k| d.theta_hat[k], &|k| igroup[k], &|_| grand, &|k| oracle[k]];
    for (m, est) in estimates.iter().enumerate() {
        out.target[m] = ErrorSums::from_errors([est(0) - d.theta[0]]);
        out.population[m] = ErrorSums::from_errors((1..n).map(|k| est(k) - d.theta[k]));
    }
    out.risk = Some(super::risk_decomposition(&d.theta[1..], &igroup[1..], &oracle[1..])?);
    Ok(out)
}

pub fn sigma_label(sigma: f64) -> String {
    format!("sigma={sigma}")
}

pub fn run_case1(cfg: &SimCase1Config) -> Result<SimulationReport> {
    cfg.validate()?;
    let per_rep: Vec<Vec<SigmaResult>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let d = Case1Draw::generate(cfg.k, cfg.tau, cfg.seed, r as u64);
            cfg.sigmas.iter().map(|&s| run_sigma(cfg, &d, s)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut report = SimulationReport {
        case: "case1".into(),
        seed: cfg.seed,
        methods: Vec::new(),
        curves: Vec::new(),
        replications: Vec::new(),
        notes: Vec::new(),
    };
    for (si, &sigma) in cfg.sigmas.iter().enumerate() {
        let label = sigma_label(sigma);
        let mut pop_cells = vec![Cell::default(); METHODS.len()];
        let mut tgt_cells = vec![Cell::default(); METHODS.len()];
        let mut curve = vec![(ErrorSums::default(), ErrorSums::default(), 0.0); cfg.grid.len()];
        let mut selected = Vec::with_capacity(cfg.replications);
        for rep in &per_rep {
            let res = &rep[si];
            for m in 0..METHODS.len() {
                pop_cells[m].push_replication(res.population[m]);
                tgt_cells[m].push_replication(res.target[m]);
            }
            if let Some(r) = &res.risk {
                pop_cells[1].push_risk(r);
            }
            for (acc, (t, p, cv)) in curve.iter_mut().zip(&res.curve) {
                acc.0.merge(t);
                acc.1.merge(p);
                acc.2 += cv / cfg.replications as f64;
            }
            selected.push(res.selected);
        }
        let baseline = pop_cells[0].per_rep.clone();
        let tgt_baseline = tgt_cells[0].per_rep.clone();
        for (m, name) in METHODS.iter().enumerate() {
            report.push_cell(&label, name, &pop_cells[m], (m > 0).then_some(baseline.as_slice()));
            report.push_cell(&label, &format!("target_{name}"), &tgt_cells[m], (m > 0).then_some(tgt_baseline.as_slice()));
        }
        for (b, (t, p, cv)) in cfg.grid.iter().zip(&curve) {
            for (scope, s) in [("target", t), ("population", p)] {
                report.curves.push(CurveRow {
                    setting: label.clone(),
                    scope: scope.into(),
                    bandwidth: *b,
                    bias: s.bias(),
                    variance: s.variance(),
                    mse: s.mse(),
                    cv_error: (scope == "population").then_some(*cv),
                });
            }
        }
        let (mean_b, _) = crate::stats::mean_and_se(&selected);
        report.notes.push(format!("{label}: mean CV-selected bandwidth {}", super::fmt_float(mean_b)));
    }
    Ok(report)
}
