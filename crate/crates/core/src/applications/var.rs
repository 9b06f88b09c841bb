//! Value-at-risk backtesting with factor-characterized groups.
//!
//! Each stock is described on each day by its three-factor loadings fitted
//! over the trailing window. The igroup VaR of a stock pools the trailing
//! windows of all stocks, weighting stock `l` by a kernel in the distance
//! between its loadings and the target's, and reads off the weighted
//! alpha-quantile.

use nalgebra::{Matrix4, Vector4};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Kernel, RELATIVE_WEIGHT_FLOOR};
use crate::rng::{stream, StreamTag};

/// Daily returns of `K` stocks with the three factor series and the
/// risk-free rate, all aligned on the same `T` dates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    /// `T x K`, fractional returns.
    pub returns: Array2<f64>,
    /// `T x 3`: market excess, size, value.
    pub factors: Array2<f64>,
    pub risk_free: Vec<f64>,
    pub dates: Vec<String>,
    pub tickers: Vec<String>,
    /// Input rows discarded during ingestion.
    pub dropped_rows: usize,
    /// Dates discarded because some stock or factor was missing.
    pub dropped_dates: usize,
}

impl ReturnPanel {
    pub fn new(
        returns: Array2<f64>,
        factors: Array2<f64>,
        risk_free: Vec<f64>,
        dates: Vec<String>,
        tickers: Vec<String>,
    ) -> Result<Self> {
        let (t, k) = returns.dim();
        if factors.dim() != (t, 3) || risk_free.len() != t || dates.len() != t || tickers.len() != k {
            return Err(Error::InvalidInput(format!(
                "panel shapes disagree: returns {t}x{k}, factors {:?}, {} risk-free, {} dates, {} tickers",
                factors.dim(),
                risk_free.len(),
                dates.len(),
                tickers.len()
            )));
        }
        if returns.iter().chain(factors.iter()).chain(&risk_free).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("panel contains non-finite values".into()));
        }
        Ok(ReturnPanel { returns, factors, risk_free, dates, tickers, dropped_rows: 0, dropped_dates: 0 })
    }

    pub fn days(&self) -> usize {
        self.returns.nrows()
    }

    pub fn stocks(&self) -> usize {
        self.returns.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Loadings {
    pub intercept: f64,
    pub beta: [f64; 3],
}

/// Least-squares fit of `r - rf` on the three factors over days
/// `t - window .. t`.
pub fn fit_factor_loadings(panel: &ReturnPanel, t: usize, k: usize, window: usize) -> Result<Loadings> {
    if window == 0 || t < window || t > panel.days() || k >= panel.stocks() {
        return Err(Error::InvalidInput(format!(
            "loadings need window <= t <= T and a valid stock (t={t}, window={window}, stock={k})"
        )));
    }
    let mut xtx = Matrix4::<f64>::zeros();
    let mut xty = Vector4::<f64>::zeros();
    for d in t - window..t {
        let row = Vector4::new(1.0, panel.factors[[d, 0]], panel.factors[[d, 1]], panel.factors[[d, 2]]);
        let y = panel.returns[[d, k]] - panel.risk_free[d];
        xtx += row * row.transpose();
        xty += row * y;
    }
    let singular = || {
        Error::Regression(format!(
            "singular factor design over days {}..{} for {}",
            t - window,
            t,
            panel.tickers[k]
        ))
    };
    // Relative pivot check on the normal equations; a constant factor
    // column makes one pivot collapse to rounding noise.
    let scale = (0..4).map(|i| xtx[(i, i)]).fold(0.0, f64::max);
    let chol = xtx.cholesky().ok_or_else(singular)?;
    let l = chol.l();
    if (0..4).any(|i| l[(i, i)] * l[(i, i)] <= 1e-12 * scale) {
        return Err(singular());
    }
    let c = chol.solve(&xty);
    Ok(Loadings { intercept: c[0], beta: [c[1], c[2], c[3]] })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarMethod {
    Individual,
    Market,
    Igroup,
}

impl std::str::FromStr for VarMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "individual" => Ok(VarMethod::Individual),
            "market" => Ok(VarMethod::Market),
            "igroup" => Ok(VarMethod::Igroup),
            other => Err(Error::Config(format!("unknown VaR method '{other}' (individual, market, igroup)"))),
        }
    }
}

impl VarMethod {
    pub fn name(self) -> &'static str {
        match self {
            VarMethod::Individual => "individual",
            VarMethod::Market => "market",
            VarMethod::Igroup => "igroup",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VarConfig {
    pub alpha: f64,
    pub window: usize,
    /// Bandwidths on the loading distance; `inf` is allowed and reproduces
    /// the market method.
    pub grid: Vec<f64>,
    pub kernel: Kernel,
}

impl Default for VarConfig {
    fn default() -> Self {
        VarConfig { alpha: 0.01, window: 100, grid: crate::stats::log_grid(0.01, 10.0, 16), kernel: Kernel::Gaussian }
    }
}

impl VarConfig {
    pub fn validate(&self, panel: &ReturnPanel) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} must lie in (0, 1)", self.alpha)));
        }
        if self.window < 5 || self.window >= panel.days() {
            return Err(Error::Config(format!(
                "window {} needs 5 <= window < T = {}",
                self.window,
                panel.days()
            )));
        }
        if self.grid.iter().any(|b| !(*b > 0.0)) {
            return Err(Error::Config("bandwidths must be positive".into()));
        }
        Ok(())
    }
}

/// Backtest of one method at one bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct VarBacktest {
    pub method: VarMethod,
    pub bandwidth: Option<f64>,
    pub rmse: f64,
    /// Per-stock exceedance frequency over the evaluation days.
    pub exceedance: Vec<f64>,
    /// `E x K` VaR surface; row `i` is day `window + i`.
    pub var: Array2<f64>,
}

/// One evaluation day: the pooled window sorted once, and every stock's
/// loadings.
struct Day {
    sorted: Vec<f64>,
    owner: Vec<u32>,
    loadings: Vec<[f64; 3]>,
}

fn prepare_day(panel: &ReturnPanel, t: usize, window: usize, need_loadings: bool) -> Result<Day> {
    let k = panel.stocks();
    let mut pool: Vec<(f64, u32)> = Vec::with_capacity(k * window);
    for d in t - window..t {
        for s in 0..k {
            pool.push((panel.returns[[d, s]], s as u32));
        }
    }
    pool.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let loadings = if need_loadings {
        (0..k).map(|s| fit_factor_loadings(panel, t, s, window).map(|l| l.beta)).collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    Ok(Day { sorted: pool.iter().map(|p| p.0).collect(), owner: pool.iter().map(|p| p.1).collect(), loadings })
}

/// Left-continuous weighted alpha-quantile of a pooled sample where every
/// value carries the weight of the stock it came from. Matches
/// [`crate::aggregation::weighted_quantile`] on the expanded sample.
fn pooled_quantile(sorted: &[f64], owner: &[u32], stock_weights: &[f64], per_stock: usize, alpha: f64) -> Option<f64> {
    let total: f64 = stock_weights.iter().sum::<f64>() * per_stock as f64;
    if !(total > crate::aggregation::MIN_WEIGHT_SUM) {
        return None;
    }
    let threshold = alpha * total - 1e-12 * total;
    let mut cum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        while i < sorted.len() && sorted[i] == v {
            cum += stock_weights[owner[i] as usize];
            i += 1;
        }
        if cum >= threshold && cum > 0.0 {
            return Some(v);
        }
    }
    sorted.last().copied()
}

/// Kernel weight of every stock relative to the target, scaled so the
/// target's own weight is one.
fn loading_weights(loadings: &[[f64; 3]], target: usize, kernel: Kernel, b: f64) -> Vec<f64> {
    let k0 = kernel.eval_unchecked(0.0);
    let z0 = loadings[target];
    let mut w: Vec<f64> = loadings
        .iter()
        .map(|z| {
            let d = ((z[0] - z0[0]).powi(2) + (z[1] - z0[1]).powi(2) + (z[2] - z0[2]).powi(2)).sqrt();
            kernel.eval_unchecked(d / b) / k0
        })
        .collect();
    for v in w.iter_mut() {
        if *v < RELATIVE_WEIGHT_FLOOR {
            *v = 0.0;
        }
    }
    w
}

fn rmse(exceedance: &[f64], alpha: f64) -> f64 {
    (exceedance.iter().map(|f| (f - alpha).powi(2)).sum::<f64>() / exceedance.len() as f64).sqrt()
}

/// Backtests individual and market VaR and igroup VaR at every bandwidth
/// of the grid, sharing the sorted pools and loadings across methods.
pub fn var_backtest_all(panel: &ReturnPanel, cfg: &VarConfig, methods: &[VarMethod]) -> Result<Vec<VarBacktest>> {
    cfg.validate(panel)?;
    let (t_all, k) = (panel.days(), panel.stocks());
    let s = cfg.window;
    let eval = t_all - s;
    let want = |m| methods.contains(&m);
    let igroup = want(VarMethod::Igroup);
    let columns = usize::from(want(VarMethod::Individual)) + usize::from(want(VarMethod::Market))
        + if igroup { cfg.grid.len() } else { 0 };

    // Per day: VaR for each (column, stock).
    let days: Vec<Vec<f64>> = (s..t_all)
        .into_par_iter()
        .map(|t| {
            let day = prepare_day(panel, t, s, igroup)?;
            let mut out = Vec::with_capacity(columns * k);
            if want(VarMethod::Individual) {
                for stock in 0..k {
                    let mut own: Vec<f64> = (t - s..t).map(|d| panel.returns[[d, stock]]).collect();
                    own.sort_by(f64::total_cmp);
                    let q = crate::aggregation::weighted_quantile_sorted(&own, &vec![1.0; s], cfg.alpha)
                        .expect("unit weights carry mass");
                    out.push(q);
                }
            }
            if want(VarMethod::Market) {
                let q = pooled_quantile(&day.sorted, &day.owner, &vec![1.0; k], s, cfg.alpha)
                    .expect("unit weights carry mass");
                out.extend(std::iter::repeat(q).take(k));
            }
            if igroup {
                for &b in &cfg.grid {
                    for stock in 0..k {
                        let w = loading_weights(&day.loadings, stock, cfg.kernel, b);
                        let q = pooled_quantile(&day.sorted, &day.owner, &w, s, cfg.alpha).ok_or_else(|| {
                            Error::EmptyNeighborhood { target: format!("{} on {}", panel.tickers[stock], panel.dates[t]) }
                        })?;
                        out.push(q);
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut labels: Vec<(VarMethod, Option<f64>)> = Vec::with_capacity(columns);
    if want(VarMethod::Individual) {
        labels.push((VarMethod::Individual, None));
    }
    if want(VarMethod::Market) {
        labels.push((VarMethod::Market, None));
    }
    if igroup {
        labels.extend(cfg.grid.iter().map(|b| (VarMethod::Igroup, Some(*b))));
    }
    Ok(labels
        .into_iter()
        .enumerate()
        .map(|(c, (method, bandwidth))| {
            let var = Array2::from_shape_fn((eval, k), |(i, stock)| days[i][c * k + stock]);
            let exceedance: Vec<f64> = (0..k)
                .map(|stock| {
                    let hits = (0..eval).filter(|&i| panel.returns[[s + i, stock]] <= var[[i, stock]]).count();
                    hits as f64 / eval as f64
                })
                .collect();
            VarBacktest { method, bandwidth, rmse: rmse(&exceedance, cfg.alpha), exceedance, var }
        })
        .collect())
}

/// Backtest of a single method; for igroup, one result per bandwidth.
pub fn var_backtest(panel: &ReturnPanel, cfg: &VarConfig, method: VarMethod) -> Result<Vec<VarBacktest>> {
    var_backtest_all(panel, cfg, &[method])
}

/// Index of the smallest igroup RMSE and whether it lies strictly inside
/// the grid with both ends higher.
pub fn best_bandwidth(results: &[VarBacktest]) -> Option<(usize, bool)> {
    let rmses: Vec<f64> = results.iter().filter(|r| r.method == VarMethod::Igroup).map(|r| r.rmse).collect();
    let best = crate::bandwidth::argmin_smallest(&rmses)?;
    let interior = best > 0 && best + 1 < rmses.len() && rmses[0] > rmses[best] && rmses[rmses.len() - 1] > rmses[best];
    Some((best, interior))
}

/// Synthetic factor-model panel with stocks in two regimes that differ in
/// loadings and idiosyncratic volatility. Optionally each stock's
/// idiosyncratic volatility follows its own two-state Markov chain, so
/// return distributions drift over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticPanelConfig {
    pub stocks: usize,
    pub window: usize,
    pub eval_days: usize,
    pub factor_sd: f64,
    pub risk_free: f64,
    /// Loadings and idiosyncratic standard deviation of the two regimes.
    pub regimes: [([f64; 3], f64); 2],
    /// Standard deviation of per-stock loading perturbations.
    pub loading_jitter: f64,
    /// Daily probability that a stock's idiosyncratic volatility switches
    /// between its calm and turbulent state.
    pub switch_prob: f64,
    /// Idiosyncratic volatility multiplier in the turbulent state.
    pub turbulent_multiplier: f64,
    pub seed: u64,
}

impl Default for SyntheticPanelConfig {
    fn default() -> Self {
        SyntheticPanelConfig {
            stocks: 100,
            window: 100,
            eval_days: 250,
            factor_sd: 0.01,
            risk_free: 1e-4,
            regimes: [([0.6, 0.2, 0.0], 0.01), ([1.6, -0.3, 0.5], 0.03)],
            loading_jitter: 0.05,
            switch_prob: 0.0,
            turbulent_multiplier: 2.5,
            seed: 0,
        }
    }
}

pub fn synthetic_panel(cfg: &SyntheticPanelConfig) -> Result<ReturnPanel> {
    if cfg.stocks < 2 || cfg.window < 5 || cfg.eval_days == 0 || !(0.0..=1.0).contains(&cfg.switch_prob) {
        return Err(Error::Config("synthetic panel needs >= 2 stocks, window >= 5 and evaluation days".into()));
    }
    let t = cfg.window + cfg.eval_days;
    let mut frng = stream(cfg.seed, 0, u64::MAX, StreamTag::Data);
    let factors = Array2::from_shape_simple_fn((t, 3), || cfg.factor_sd * frng.sample::<f64, _>(StandardNormal));
    let mut returns = Array2::zeros((t, cfg.stocks));
    for s in 0..cfg.stocks {
        let mut rng = stream(cfg.seed, 0, s as u64, StreamTag::Data);
        let (base, vol) = cfg.regimes[s % 2];
        let beta: Vec<f64> = base.iter().map(|b| b + cfg.loading_jitter * rng.sample::<f64, _>(StandardNormal)).collect();
        let mut turbulent = cfg.switch_prob > 0.0 && rng.gen_bool(0.5);
        for d in 0..t {
            if rng.gen::<f64>() < cfg.switch_prob {
                turbulent = !turbulent;
            }
            let scale = if turbulent { cfg.turbulent_multiplier * vol } else { vol };
            let e: f64 = rng.sample(StandardNormal);
            let f = (0..3).map(|j| beta[j] * factors[[d, j]]).sum::<f64>();
            returns[[d, s]] = cfg.risk_free + f + scale * e;
        }
    }
    ReturnPanel::new(
        returns,
        factors,
        vec![cfg.risk_free; t],
        (0..t).map(|d| format!("d{d:04}")).collect(),
        (0..cfg.stocks).map(|s| format!("S{s:03}")).collect(),
    )
}
