//! Seeded Monte-Carlo studies.
//!
//! Each study draws every random number from a stream keyed by
//! `(seed, replication, individual, tag)`, runs replications in parallel,
//! and reduces their results in replication order, so reports do not
//! depend on the worker count.

pub mod case1;
pub mod case2;
pub mod case3;
pub mod conjugate;

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use case1::{run_case1, SimCase1Config};
pub use case2::{run_case2, SimCase2Config};
pub use case3::{run_case3, SimCase3Config, REFERENCE_ROWS};

/// Running sums of errors `estimate - truth`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorSums {
    pub n: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl ErrorSums {
    pub fn push(&mut self, err: f64) {
        self.n += 1;
        self.sum += err;
        self.sum_sq += err * err;
    }

    pub fn merge(&mut self, other: &ErrorSums) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn from_errors(errors: impl IntoIterator<Item = f64>) -> Self {
        let mut s = ErrorSums::default();
        errors.into_iter().for_each(|e| s.push(e));
        s
    }

    pub fn bias(&self) -> f64 {
        self.sum / self.n as f64
    }

    pub fn mse(&self) -> f64 {
        self.sum_sq / self.n as f64
    }

    /// Divisor-`n` variance, so `mse = bias^2 + variance`.
    pub fn variance(&self) -> f64 {
        self.mse() - self.bias().powi(2)
    }
}

/// One method in one setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub setting: String,
    pub method: String,
    pub replications: usize,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
    /// Standard error of the mean of per-replication MSEs.
    pub mse_se: f64,
    /// Mean of `baseline MSE - method MSE` per replication, its standard
    /// error, and how many replications improved.
    pub improvement: Option<Improvement>,
    pub risk: Option<RiskDecomposition>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub mean: f64,
    pub se: f64,
    pub positive: usize,
}

impl Improvement {
    pub fn from_pairs(baseline: &[f64], method: &[f64]) -> Self {
        let diffs: Vec<f64> = baseline.iter().zip(method).map(|(b, m)| b - m).collect();
        let (mean, se) = crate::stats::mean_and_se(&diffs);
        Improvement { mean, se, positive: diffs.iter().filter(|d| **d > 0.0).count() }
    }
}

/// Split of total squared error around the target estimator `Theta0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskDecomposition {
    /// `mean (estimate - Theta0)^2`
    pub r_np: f64,
    /// `mean (Theta0 - theta)^2`
    pub r_target: f64,
    pub total: f64,
}

impl RiskDecomposition {
    pub fn sum(&self) -> f64 {
        self.r_np + self.r_target
    }
}

pub fn risk_decomposition(theta: &[f64], estimate: &[f64], target: &[f64]) -> Result<RiskDecomposition> {
    if theta.len() != estimate.len() || theta.len() != target.len() || theta.is_empty() {
        return Err(Error::InvalidInput("risk decomposition needs equal, non-empty inputs".into()));
    }
    let n = theta.len() as f64;
    let mut r = RiskDecomposition { r_np: 0.0, r_target: 0.0, total: 0.0 };
    for ((t, e), g) in theta.iter().zip(estimate).zip(target) {
        r.r_np += (e - g).powi(2);
        r.r_target += (g - t).powi(2);
        r.total += (e - t).powi(2);
    }
    r.r_np /= n;
    r.r_target /= n;
    r.total /= n;
    Ok(r)
}

/// Per-replication MSEs collected for one method and setting.
#[derive(Debug, Clone, Default)]
pub(crate) struct Cell {
    pub sums: ErrorSums,
    pub per_rep: Vec<f64>,
    pub risk: Option<(f64, f64, f64, usize)>,
}

impl Cell {
    pub fn push_replication(&mut self, sums: ErrorSums) {
        self.per_rep.push(sums.mse());
        self.sums.merge(&sums);
    }

    pub fn push_risk(&mut self, r: &RiskDecomposition) {
        let acc = self.risk.get_or_insert((0.0, 0.0, 0.0, 0));
        acc.0 += r.r_np;
        acc.1 += r.r_target;
        acc.2 += r.total;
        acc.3 += 1;
    }

    pub fn row(&self, setting: &str, method: &str, baseline: Option<&[f64]>) -> MethodRow {
        let (_, se) = crate::stats::mean_and_se(&self.per_rep);
        MethodRow {
            setting: setting.to_string(),
            method: method.to_string(),
            replications: self.per_rep.len(),
            bias: self.sums.bias(),
            variance: self.sums.variance(),
            mse: self.sums.mse(),
            mse_se: if se.is_nan() { 0.0 } else { se },
            improvement: baseline.map(|b| Improvement::from_pairs(b, &self.per_rep)),
            risk: self.risk.map(|(a, b, c, n)| RiskDecomposition {
                r_np: a / n as f64,
                r_target: b / n as f64,
                total: c / n as f64,
            }),
        }
    }
}

/// Bias, variance and MSE of one smoother at one bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub setting: String,
    pub scope: String,
    pub bandwidth: f64,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
    pub cv_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub case: String,
    pub seed: u64,
    pub methods: Vec<MethodRow>,
    pub curves: Vec<CurveRow>,
    /// Per-replication MSE: (setting, method, replication, mse).
    pub replications: Vec<(String, String, usize, f64)>,
    pub notes: Vec<String>,
}

impl SimulationReport {
    pub fn method(&self, setting: &str, method: &str) -> Option<&MethodRow> {
        self.methods.iter().find(|m| m.setting == setting && m.method == method)
    }

    pub(crate) fn push_cell(&mut self, setting: &str, method: &str, cell: &Cell, baseline: Option<&[f64]>) {
        self.methods.push(cell.row(setting, method, baseline));
        for (r, v) in cell.per_rep.iter().enumerate() {
            self.replications.push((setting.to_string(), method.to_string(), r, *v));
        }
    }

    /// Writes `report.csv`, `curves.csv` and `replications.csv` into `dir`;
    /// returns the written paths.
    pub fn write_csv(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let f = fmt_float;
        let opt = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();

        let report = dir.join("report.csv");
        let mut w = csv::Writer::from_path(&report)?;
        w.write_record([
            "case", "setting", "method", "replications", "bias", "variance", "mse", "mse_se", "improvement_mean",
            "improvement_se", "improvement_positive", "r_np", "r_target", "r_sum", "r_total",
        ])?;
        for m in &self.methods {
            let imp = m.improvement;
            let risk = m.risk;
            w.write_record([
                self.case.clone(),
                m.setting.clone(),
                m.method.clone(),
                m.replications.to_string(),
                f(m.bias),
                f(m.variance),
                f(m.mse),
                f(m.mse_se),
                opt(imp.map(|i| i.mean)),
                opt(imp.map(|i| i.se)),
                imp.map(|i| i.positive.to_string()).unwrap_or_default(),
                opt(risk.map(|r| r.r_np)),
                opt(risk.map(|r| r.r_target)),
                opt(risk.map(|r| r.sum())),
                opt(risk.map(|r| r.total)),
            ])?;
        }
        w.flush()?;

        let curves = dir.join("curves.csv");
        let mut w = csv::Writer::from_path(&curves)?;
        w.write_record(["setting", "scope", "bandwidth", "bias", "variance", "mse", "cv_error"])?;
        for c in &self.curves {
            w.write_record([
                c.setting.clone(),
                c.scope.clone(),
                f(c.bandwidth),
                f(c.bias),
                f(c.variance),
                f(c.mse),
                opt(c.cv_error),
            ])?;
        }
        w.flush()?;

        let reps = dir.join("replications.csv");
        let mut w = csv::Writer::from_path(&reps)?;
        w.write_record(["setting", "method", "replication", "mse"])?;
        for (s, m, r, v) in &self.replications {
            w.write_record([s.clone(), m.clone(), r.to_string(), f(*v)])?;
        }
        w.flush()?;

        if !self.notes.is_empty() {
            let mut file = std::fs::File::create(dir.join("notes.txt"))?;
            for n in &self.notes {
                writeln!(file, "{n}")?;
            }
            return Ok(vec![report, curves, reps, dir.join("notes.txt")]);
        }
        Ok(vec![report, curves, reps])
    }
}

/// Nine significant digits in scientific notation; locale independent.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.8e}")
    }
}

pub(crate) fn validate_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

pub(crate) fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|b| !(*b > 0.0)) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("bandwidth grid must be non-empty, positive and strictly increasing".into()));
    }
    Ok(())
}
