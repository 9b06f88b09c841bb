//! Covariates and estimates together.
//!
//! `eta ~ N(0, 1)`, `theta = sin(pi eta)`, `z ~ N(eta, sigma^2)` and `n`
//! observations `x ~ N(theta, sigma_x^2)` per individual with the sample
//! mean as estimate. Four pooled estimators are compared: no pooling,
//! pooling on `z` only, on estimates only, and on both.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{validate_positive, Cell, ErrorSums, SimulationReport};
use crate::aggregation::weighted_mean;
use crate::bandwidth::{argmin_smallest, default_grid, kernel_smooth_1d, select_bandwidth_fixed_w2, CvConfig, Omega0};
use crate::error::{Error, Result};
use crate::kernels::{silverman, Bandwidth, Kernel};
use crate::population::{IndividualRecord, Population};
use crate::rng::{stream, StreamTag};
use crate::weights::{w1_matrix, w2_matrix, BootstrapPairs, SampleMean, Scheme, W2Config, W2Form, W2Source};

/// One reference configuration: sample size, `tau^2 = sigma_x^2 / n`, `z`
/// noise, and the reported MSEs in the order
/// `[none, theta only, z only, z and theta]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub row: usize,
    pub n: usize,
    pub tau2: f64,
    pub sigma: f64,
    pub mse: [f64; 4],
}

pub const REFERENCE_ROWS: [ReferenceRow; 12] = [
    ReferenceRow { row: 1, n: 5, tau2: 0.20, sigma: 0.10, mse: [0.200, 0.163, 0.044, 0.154] },
    ReferenceRow { row: 2, n: 5, tau2: 0.20, sigma: 0.15, mse: [0.200, 0.163, 0.090, 0.163] },
    ReferenceRow { row: 3, n: 5, tau2: 0.20, sigma: 0.20, mse: [0.200, 0.163, 0.137, 0.170] },
    ReferenceRow { row: 4, n: 5, tau2: 0.20, sigma: 0.30, mse: [0.200, 0.163, 0.200, 0.179] },
    ReferenceRow { row: 5, n: 10, tau2: 0.10, sigma: 0.10, mse: [0.100, 0.089, 0.048, 0.059] },
    ReferenceRow { row: 6, n: 10, tau2: 0.10, sigma: 0.15, mse: [0.100, 0.089, 0.089, 0.070] },
    ReferenceRow { row: 7, n: 10, tau2: 0.10, sigma: 0.20, mse: [0.100, 0.089, 0.099, 0.077] },
    ReferenceRow { row: 8, n: 10, tau2: 0.10, sigma: 0.30, mse: [0.100, 0.089, 0.100, 0.084] },
    ReferenceRow { row: 9, n: 20, tau2: 0.05, sigma: 0.10, mse: [0.050, 0.046, 0.044, 0.040] },
    ReferenceRow { row: 10, n: 20, tau2: 0.05, sigma: 0.15, mse: [0.050, 0.046, 0.050, 0.044] },
    ReferenceRow { row: 11, n: 20, tau2: 0.05, sigma: 0.20, mse: [0.050, 0.046, 0.050, 0.045] },
    ReferenceRow { row: 12, n: 20, tau2: 0.05, sigma: 0.30, mse: [0.050, 0.046, 0.050, 0.047] },
];

pub const METHODS: [&str; 4] = ["igroup_none", "igroup_theta", "igroup_z", "igroup_z_theta"];

impl ReferenceRow {
    pub fn get(row: usize) -> Result<ReferenceRow> {
        REFERENCE_ROWS
            .iter()
            .find(|r| r.row == row)
            .copied()
            .ok_or_else(|| Error::Config(format!("reference row {row} does not exist (1-12)")))
    }

    /// Index into [`METHODS`] of the smallest reference MSE.
    pub fn winner(&self) -> usize {
        (0..4).fold(0, |best, m| if self.mse[m] < self.mse[best] { m } else { best })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimCase3Config {
    /// Reference configuration to run; overrides `n`, `sigma_x` and `sigma`.
    pub row: Option<usize>,
    pub k: usize,
    pub n: usize,
    pub sigma_x: f64,
    pub sigma: f64,
    pub replications: usize,
    pub bootstrap_pairs: usize,
    pub grid_points: usize,
    pub kernel: Kernel,
    pub seed: u64,
}

impl Default for SimCase3Config {
    fn default() -> Self {
        SimCase3Config {
            row: Some(1),
            k: 1024,
            n: 5,
            sigma_x: 1.0,
            sigma: 0.1,
            replications: 200,
            bootstrap_pairs: 1,
            grid_points: crate::bandwidth::DEFAULT_GRID_POINTS,
            kernel: Kernel::Gaussian,
            seed: 0,
        }
    }
}

impl SimCase3Config {
    pub fn for_row(row: usize) -> Result<Self> {
        let mut c = SimCase3Config { row: Some(row), ..Default::default() };
        c.apply_row()?;
        Ok(c)
    }

    /// Copies the reference configuration of `row` into the fields it governs.
    pub fn apply_row(&mut self) -> Result<()> {
        if let Some(r) = self.row {
            let t = ReferenceRow::get(r)?;
            self.n = t.n;
            self.sigma = t.sigma;
            self.sigma_x = (t.tau2 * t.n as f64).sqrt();
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < crate::weights::bootstrap::MIN_BOOTSTRAP_LEN {
            return Err(Error::Config(format!("n = {} is too small to bootstrap", self.n)));
        }
        if self.k < 3 || self.replications == 0 || self.bootstrap_pairs == 0 || self.grid_points == 0 {
            return Err(Error::Config("k >= 3 and positive replications, bootstrap_pairs, grid_points required".into()));
        }
        validate_positive("sigma_x", self.sigma_x)?;
        validate_positive("sigma", self.sigma)
    }

    pub fn tau2(&self) -> f64 {
        self.sigma_x * self.sigma_x / self.n as f64
    }
}

/// `E[theta | z, theta_hat]` by quadrature over `eta`.
pub fn target_estimator(z: f64, theta_hat: f64, sigma: f64, tau2: f64) -> f64 {
    const POINTS: usize = 3201;
    let (lo, hi) = (-8.0, 8.0);
    let h = (hi - lo) / (POINTS - 1) as f64;
    let mut logs = Vec::with_capacity(POINTS);
    let mut max = f64::NEG_INFINITY;
    for i in 0..POINTS {
        let eta = lo + i as f64 * h;
        let th = (PI * eta).sin();
        let l = -0.5 * eta * eta - (z - eta).powi(2) / (2.0 * sigma * sigma) - (theta_hat - th).powi(2) / (2.0 * tau2);
        max = max.max(l);
        logs.push((th, l));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (th, l) in logs {
        let w = (l - max).exp();
        num += w * th;
        den += w;
    }
    num / den
}

struct Replication {
    errors: [ErrorSums; 4],
    risk: super::RiskDecomposition,
    b_z: f64,
    b_combined: f64,
}

fn run_replication(cfg: &SimCase3Config, r: u64) -> Result<Replication> {
    let mut theta = Vec::with_capacity(cfg.k);
    let mut records = Vec::with_capacity(cfg.k);
    for i in 0..cfg.k {
        let mut rng = stream(cfg.seed, r, i as u64, StreamTag::Data);
        let eta: f64 = rng.sample(StandardNormal);
        let th = (PI * eta).sin();
        let xi: f64 = rng.sample(StandardNormal);
        let x: Vec<f64> = (0..cfg.n)
            .map(|_| {
                let e: f64 = rng.sample(StandardNormal);
                th + cfg.sigma_x * e
            })
            .collect();
        theta.push(th);
        records.push(
            IndividualRecord::new(format!("i{i}"))
                .with_theta_hat(crate::stats::mean(&x))
                .with_z(vec![eta + cfg.sigma * xi])
                .with_x(x),
        );
    }
    let pop = Population::new(records)?;
    let hats = pop.theta_hats()?;
    let z: Vec<f64> = pop.zs()?.iter().map(|v| v[0]).collect();
    let all: Vec<usize> = (0..pop.len()).collect();
    let grid = default_grid(silverman(&z), cfg.grid_points)?;

    // z only: global leave-one-out CV
    let smooths = grid.iter().map(|&b| kernel_smooth_1d(&z, &hats, cfg.kernel, b)).collect::<Result<Vec<_>>>()?;
    let cv: Vec<f64> = smooths
        .iter()
        .map(|s| {
            if s.loo.iter().any(|v| v.is_nan()) {
                f64::INFINITY
            } else {
                s.loo.iter().zip(&hats).map(|(l, t)| (l - t).powi(2)).sum::<f64>() / hats.len() as f64
            }
        })
        .collect();
    let zi = argmin_smallest(&cv).ok_or_else(|| Error::EmptyNeighborhood { target: "case3 population".into() })?;
    let ig_z = smooths[zi].full.clone();

    // estimates only
    let pairs = BootstrapPairs::generate(&pop, &SampleMean, cfg.bootstrap_pairs, cfg.seed, r)?;
    let marginal = W2Config::rule_of_thumb(&pop, &pairs, W2Form::Marginal)?;
    let wt = w2_matrix(&pop, &all, &W2Source::Bootstrap { pairs: &pairs, config: marginal })?.truncate();
    let ig_theta = pooled_means(&pop, &hats, &wt)?;

    // both: conditional w2 at rule-of-thumb bandwidths, b1 by CV
    let conditional = W2Config::rule_of_thumb(&pop, &pairs, W2Form::Conditional)?;
    let source = W2Source::Bootstrap { pairs: &pairs, config: conditional };
    let w2 = w2_matrix(&pop, &all, &source)?;
    let cv_cfg = CvConfig {
        grid,
        omega0: Omega0::All,
        scheme: Scheme::Combined,
        kernel: cfg.kernel,
        z_scales: None,
        w2: Some(source.clone()),
    };
    let rep = select_bandwidth_fixed_w2(&pop, &cv_cfg, &w2)?;
    let wc = w1_matrix(&pop, &all, cfg.kernel, &Bandwidth::new(rep.selected)?)?.hadamard(&w2)?.truncate();
    let ig_both = pooled_means(&pop, &hats, &wc)?;

    let tau2 = cfg.tau2();
    let oracle: Vec<f64> = (0..pop.len()).map(|k| target_estimator(z[k], hats[k], cfg.sigma, tau2)).collect();
    let estimates = [&hats, &ig_theta, &ig_z, &ig_both];
    let mut errors = [ErrorSums::default(); 4];
    for (m, est) in estimates.iter().enumerate() {
        errors[m] = ErrorSums::from_errors(est.iter().zip(&theta).map(|(e, t)| e - t));
    }
    Ok(Replication {
        errors,
        risk: super::risk_decomposition(&theta, &ig_both, &oracle)?,
        b_z: cv_cfg.grid[zi],
        b_combined: rep.selected,
    })
}

fn pooled_means(pop: &Population, hats: &[f64], w: &crate::weights::WeightMatrix) -> Result<Vec<f64>> {
    (0..pop.len())
        .map(|t| weighted_mean(hats, w.row(t)).ok_or_else(|| Error::EmptyNeighborhood { target: pop.record(t).id.clone() }))
        .collect()
}

pub fn run_case3(cfg: &SimCase3Config) -> Result<SimulationReport> {
    let mut cfg = cfg.clone();
    cfg.apply_row()?;
    cfg.validate()?;
    let reps: Vec<Replication> =
        (0..cfg.replications).into_par_iter().map(|r| run_replication(&cfg, r as u64)).collect::<Result<_>>()?;
    let mut cells = vec![Cell::default(); 4];
    let (mut bz, mut bc) = (Vec::new(), Vec::new());
    for rep in &reps {
        for m in 0..4 {
            cells[m].push_replication(rep.errors[m]);
        }
        cells[3].push_risk(&rep.risk);
        bz.push(rep.b_z);
        bc.push(rep.b_combined);
    }
    let setting = match cfg.row {
        Some(r) => format!("row={r}"),
        None => format!("n={} sigma_x={} sigma={}", cfg.n, cfg.sigma_x, cfg.sigma),
    };
    let mut report = SimulationReport {
        case: "case3".into(),
        seed: cfg.seed,
        methods: Vec::new(),
        curves: Vec::new(),
        replications: Vec::new(),
        notes: Vec::new(),
    };
    let baseline = cells[0].per_rep.clone();
    for (m, name) in METHODS.iter().enumerate() {
        report.push_cell(&setting, name, &cells[m], (m > 0).then_some(baseline.as_slice()));
    }
    report.notes.push(format!(
        "{setting}: mean selected b1 for z only {}, for z and theta {}",
        super::fmt_float(crate::stats::mean(&bz)),
        super::fmt_float(crate::stats::mean(&bc))
    ));
    if let Some(r) = cfg.row {
        let t = ReferenceRow::get(r)?;
        report.notes.push(format!(
            "{setting}: reference MSEs none {} theta {} z {} z_theta {}",
            t.mse[0], t.mse[1], t.mse[2], t.mse[3]
        ));
    }
    Ok(report)
}
