//! Leave-one-out cross-validation over a bandwidth grid.
//!
//! The CV error averages `(loo_k - theta_hat_k)^2` over a validation set
//! `omega0`, which is either the whole population or a covariate ball around
//! a center individual. Leave-one-out predictions always use every
//! individual, not only those in `omega0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{minimize_with_weights, ObjectiveSpec, MIN_WEIGHT_SUM};
use crate::error::{Error, Result};
use crate::kernels::{rule_of_thumb_multivariate, silverman, Bandwidth, Kernel, RELATIVE_WEIGHT_FLOOR};
use crate::population::Population;
use crate::weights::{raw_weight_matrix, Scheme, W2Source, WeightMatrix, WeightSpec};

pub const DEFAULT_GRID_POINTS: usize = 20;
pub const OMEGA0_MIN_SIZE: usize = 30;
const EPSILON_GROWTH: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Omega0 {
    All,
    /// Individuals within covariate distance `epsilon` of `center`; with no
    /// epsilon the radius grows until the set holds at least 30 members.
    Local { center: usize, epsilon: Option<f64> },
}

/// What a grid value means for each scheme: the covariate bandwidth `b1`
/// for `z` and `combined`, a multiplier on the estimator bandwidths for
/// `theta`.
#[derive(Debug, Clone)]
pub struct CvConfig<'a> {
    pub grid: Vec<f64>,
    pub omega0: Omega0,
    pub scheme: Scheme,
    pub kernel: Kernel,
    /// Axis scales for `b1`; `None` means isotropic.
    pub z_scales: Option<Vec<f64>>,
    pub w2: Option<W2Source<'a>>,
}

impl<'a> CvConfig<'a> {
    pub fn z_only(grid: Vec<f64>, omega0: Omega0) -> Self {
        CvConfig { grid, omega0, scheme: Scheme::ZOnly, kernel: Kernel::Gaussian, z_scales: None, w2: None }
    }

    fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("bandwidth grid is empty".into()));
        }
        if let Some(b) = self.grid.iter().find(|b| !(**b > 0.0)) {
            return Err(Error::InvalidBandwidth(*b));
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("bandwidth grid must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Weight specification at grid value `b`.
    pub fn spec_at(&self, b: f64) -> Result<WeightSpec<'a>> {
        let b1 = || match &self.z_scales {
            Some(s) => Bandwidth::with_scales(b, s.clone()),
            None => Bandwidth::new(b),
        };
        let w2 = || {
            self.w2.clone().ok_or_else(|| Error::Config(format!("scheme {} needs an estimate-similarity source", self.scheme)))
        };
        Ok(match self.scheme {
            Scheme::ZOnly => WeightSpec::z_only(self.kernel, b1()?),
            Scheme::Combined => WeightSpec::combined(self.kernel, b1()?, w2()?),
            Scheme::ThetaOnly => match w2()? {
                W2Source::Bootstrap { pairs, config } => {
                    let mut config = config;
                    config.bandwidths = config.bandwidths.scaled(b)?;
                    WeightSpec::theta_only(W2Source::Bootstrap { pairs, config })
                }
                W2Source::Exact(_) => {
                    return Err(Error::Config("the exact weight has no bandwidth to cross-validate".into()))
                }
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub grid: Vec<f64>,
    pub errors: Vec<f64>,
    pub selected: f64,
    pub selected_index: usize,
    pub omega0_size: usize,
}

/// `n` log-spaced points on `[0.05 b_rot, 5 b_rot]`.
pub fn default_grid(b_rot: f64, n: usize) -> Result<Vec<f64>> {
    if !(b_rot > 0.0) || !b_rot.is_finite() {
        return Err(Error::InvalidBandwidth(b_rot));
    }
    Ok(crate::stats::log_grid(0.05 * b_rot, 5.0 * b_rot, n))
}

/// Rule-of-thumb covariate bandwidth: Silverman's rule in one dimension,
/// the `n^(-1/(d+4))` rate on standardized axes otherwise.
pub fn z_rule_of_thumb(pop: &Population) -> Result<Bandwidth> {
    let zs = pop.zs()?;
    if pop.z_dim() == Some(1) {
        let v: Vec<f64> = zs.iter().map(|z| z[0]).collect();
        Bandwidth::new(silverman(&v))
    } else {
        rule_of_thumb_multivariate(&zs)
    }
}

/// Indices in the validation set.
pub fn resolve_omega0(pop: &Population, omega0: &Omega0, scales: Option<&[f64]>) -> Result<Vec<usize>> {
    match omega0 {
        Omega0::All => Ok((0..pop.len()).collect()),
        Omega0::Local { center, epsilon } => {
            if *center >= pop.len() {
                return Err(Error::InvalidInput(format!("omega0 center {center} outside population")));
            }
            let zs = pop.zs()?;
            let metric = match scales {
                Some(s) => Bandwidth::with_scales(1.0, s.to_vec())?,
                None => Bandwidth::new(1.0)?,
            };
            let dist: Vec<f64> = zs.iter().map(|z| metric.scaled_distance(z, zs[*center])).collect::<Result<_>>()?;
            let within = |eps: f64| -> Vec<usize> { (0..pop.len()).filter(|&k| dist[k] <= eps).collect() };
            match epsilon {
                Some(eps) => {
                    let set = within(*eps);
                    if set.is_empty() {
                        return Err(Error::Config(format!("omega0 is empty at epsilon {eps}")));
                    }
                    Ok(set)
                }
                None => {
                    let floor = OMEGA0_MIN_SIZE.min(pop.len());
                    let mut eps = z_rule_of_thumb(pop).map(|b| b.value()).unwrap_or(1.0).max(1e-12);
                    loop {
                        let set = within(eps);
                        if set.len() >= floor {
                            return Ok(set);
                        }
                        eps *= EPSILON_GROWTH;
                    }
                }
            }
        }
    }
}

/// `sum_{l != k} theta_l w_l / sum_{l != k} w_l`.
pub fn loo_estimate(thetas: &[f64], weights: &[f64], k: usize) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (l, (t, w)) in thetas.iter().zip(weights).enumerate() {
        if l != k && *w > 0.0 {
            num += t * w;
            den += w;
        }
    }
    (den > MIN_WEIGHT_SUM).then(|| num / den)
}

/// Leave-one-out estimate for `pop.record(k)` from its weight vector.
pub fn loo_estimate_for(pop: &Population, weights: &[f64], k: usize) -> Result<f64> {
    let thetas = pop.theta_hats()?;
    loo_estimate(&thetas, weights, k).ok_or_else(|| Error::EmptyNeighborhood { target: pop.record(k).id.clone() })
}

/// Full and leave-one-out kernel smoothers for scalar covariates.
///
/// Matches the dense weight path (self-weight included, relative
/// truncation against the self weight) but only visits pairs inside the
/// kernel's effective support, each unordered pair once.
#[derive(Debug, Clone, PartialEq)]
pub struct Smooth1d {
    pub full: Vec<f64>,
    /// `NaN` where every other individual has zero weight.
    pub loo: Vec<f64>,
}

pub fn kernel_smooth_1d(z: &[f64], thetas: &[f64], kernel: Kernel, b: f64) -> Result<Smooth1d> {
    if z.len() != thetas.len() {
        return Err(Error::InvalidInput("covariates and estimates differ in length".into()));
    }
    if !(b > 0.0) {
        return Err(Error::InvalidBandwidth(b));
    }
    let n = z.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| z[a].total_cmp(&z[c]));
    let zs: Vec<f64> = order.iter().map(|&i| z[i]).collect();
    let ts: Vec<f64> = order.iter().map(|&i| thetas[i]).collect();
    let k0 = kernel.eval_unchecked(0.0);
    let floor = RELATIVE_WEIGHT_FLOOR * k0;
    let reach = kernel.effective_support() * (1.0 + 1e-9) * b;
    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = zs[j] - zs[i];
            if d > reach {
                break;
            }
            let w = kernel.eval_unchecked(d / b);
            if w >= floor && w > 0.0 {
                num[i] += w * ts[j];
                den[i] += w;
                num[j] += w * ts[i];
                den[j] += w;
            }
        }
    }
    let mut full = vec![0.0; n];
    let mut loo = vec![f64::NAN; n];
    for s in 0..n {
        let i = order[s];
        full[i] = (num[s] + k0 * ts[s]) / (den[s] + k0);
        if den[s] > MIN_WEIGHT_SUM {
            loo[i] = num[s] / den[s];
        }
    }
    Ok(Smooth1d { full, loo })
}

fn fast_path_ok(pop: &Population, cfg: &CvConfig<'_>) -> bool {
    cfg.scheme == Scheme::ZOnly && pop.z_dim() == Some(1) && pop.all_have_z()
}

fn scalar_z(pop: &Population, cfg: &CvConfig<'_>) -> Result<Vec<f64>> {
    let scale = cfg.z_scales.as_ref().map_or(1.0, |s| s[0]);
    Ok(pop.zs()?.iter().map(|z| z[0] / scale).collect())
}

fn cv_from_loo(pop: &Population, thetas: &[f64], omega: &[usize], loo: impl Fn(usize) -> Option<f64>) -> Result<f64> {
    let mut total = 0.0;
    for &k in omega {
        let l = loo(k).ok_or_else(|| Error::EmptyNeighborhood { target: pop.record(k).id.clone() })?;
        total += (l - thetas[k]).powi(2);
    }
    Ok(total / omega.len() as f64)
}

/// CV error at one grid value.
pub fn cv_error(pop: &Population, b: f64, cfg: &CvConfig<'_>) -> Result<f64> {
    let omega = resolve_omega0(pop, &cfg.omega0, cfg.z_scales.as_deref())?;
    cv_error_on(pop, b, cfg, &omega)
}

fn cv_error_on(pop: &Population, b: f64, cfg: &CvConfig<'_>, omega: &[usize]) -> Result<f64> {
    let thetas = pop.theta_hats()?;
    if fast_path_ok(pop, cfg) {
        let s = kernel_smooth_1d(&scalar_z(pop, cfg)?, &thetas, cfg.kernel, b)?;
        return cv_from_loo(pop, &thetas, omega, |k| Some(s.loo[k]).filter(|v| !v.is_nan()));
    }
    let m = raw_weight_matrix(pop, omega, &cfg.spec_at(b)?)?.truncate();
    cv_from_loo(pop, &thetas, omega, |k| {
        let r = omega.iter().position(|&t| t == k).expect("omega row");
        loo_estimate(&thetas, m.row(r), k)
    })
}

/// Picks the smallest CV error; ties and equal minima go to the smaller
/// bandwidth. Infinite entries mark grid points with an empty neighborhood.
pub fn argmin_smallest(errors: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in errors.iter().enumerate() {
        if e.is_finite() && best.map_or(true, |b| *e < errors[b]) {
            best = Some(i);
        }
    }
    best
}

fn report(grid: &[f64], errors: Vec<f64>, omega0_size: usize) -> Result<CvReport> {
    let idx = argmin_smallest(&errors)
        .ok_or_else(|| Error::EmptyNeighborhood { target: "every bandwidth in the grid".into() })?;
    Ok(CvReport { grid: grid.to_vec(), selected: grid[idx], selected_index: idx, errors, omega0_size })
}

fn empty_to_inf(r: Result<f64>) -> Result<f64> {
    match r {
        Err(Error::EmptyNeighborhood { .. }) => Ok(f64::INFINITY),
        other => other,
    }
}

pub fn select_bandwidth(pop: &Population, cfg: &CvConfig<'_>) -> Result<CvReport> {
    cfg.validate()?;
    let omega = resolve_omega0(pop, &cfg.omega0, cfg.z_scales.as_deref())?;
    let errors = cfg
        .grid
        .par_iter()
        .map(|&b| empty_to_inf(cv_error_on(pop, b, cfg, &omega)))
        .collect::<Result<Vec<f64>>>()?;
    report(&cfg.grid, errors, omega.len())
}

/// Combined-scheme CV when the estimate-similarity matrix is fixed and only
/// `b1` varies: the `w2` rows for `omega` are computed once.
pub fn select_bandwidth_fixed_w2(pop: &Population, cfg: &CvConfig<'_>, w2: &WeightMatrix) -> Result<CvReport> {
    cfg.validate()?;
    if cfg.scheme != Scheme::Combined {
        return Err(Error::Config("a fixed estimate-similarity matrix only applies to the combined scheme".into()));
    }
    let omega = resolve_omega0(pop, &cfg.omega0, cfg.z_scales.as_deref())?;
    if w2.targets() != omega.as_slice() {
        return Err(Error::InvalidInput("w2 rows do not match the validation set".into()));
    }
    let thetas = pop.theta_hats()?;
    let errors = cfg
        .grid
        .iter()
        .map(|&b| {
            let spec = cfg.spec_at(b)?;
            let m = crate::weights::w1_matrix(pop, &omega, spec.kernel, spec.b1.as_ref().expect("combined b1"))?
                .hadamard(w2)?
                .truncate();
            empty_to_inf(cv_from_loo(pop, &thetas, &omega, |k| {
                let r = omega.iter().position(|&t| t == k).expect("omega row");
                loo_estimate(&thetas, m.row(r), k)
            }))
        })
        .collect::<Result<Vec<f64>>>()?;
    report(&cfg.grid, errors, omega.len())
}

/// CV for objective aggregation: the leave-one-out prediction minimizes the
/// weighted objective with the held-out individual removed.
pub fn select_bandwidth_objective(pop: &Population, cfg: &CvConfig<'_>, obj: &ObjectiveSpec<'_>) -> Result<CvReport> {
    cfg.validate()?;
    let omega = resolve_omega0(pop, &cfg.omega0, cfg.z_scales.as_deref())?;
    let thetas = pop.theta_hats()?;
    let errors = cfg
        .grid
        .iter()
        .map(|&b| {
            let m = raw_weight_matrix(pop, &omega, &cfg.spec_at(b)?)?.truncate();
            let per = omega
                .par_iter()
                .enumerate()
                .map(|(r, &k)| {
                    let mut w = m.row(r).to_vec();
                    w[k] = 0.0;
                    let est = minimize_with_weights(obj, pop, &w, &pop.record(k).id)?;
                    Ok((est.value - thetas[k]).powi(2))
                })
                .collect::<Result<Vec<f64>>>();
            empty_to_inf(per.map(|v| v.iter().sum::<f64>() / v.len() as f64))
        })
        .collect::<Result<Vec<f64>>>()?;
    report(&cfg.grid, errors, omega.len())
}
