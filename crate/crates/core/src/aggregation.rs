//! Pooled estimates: weighted averages of individual estimates, weighted
//! sums of convex objectives minimized by golden-section search, and the
//! weighted empirical quantile.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::{IndividualRecord, Population};
use crate::weights::WeightVector;

/// Smallest total weight treated as a non-empty neighborhood.
pub const MIN_WEIGHT_SUM: f64 = 1e-12;

pub const GOLDEN_TOLERANCE: f64 = 1e-8;
pub const GOLDEN_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMethod {
    EstimatorAvg,
    ObjectiveMin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateEstimate {
    pub target_id: String,
    pub value: f64,
    pub method: AggregationMethod,
    pub weight_sum: f64,
    pub iterations: usize,
}

/// `sum v_k w_k / sum w_k`; `None` when the weights carry no mass.
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (v, w) in values.iter().zip(weights) {
        if *w > 0.0 {
            num += v * w;
            den += w;
        }
    }
    (den > MIN_WEIGHT_SUM).then(|| num / den)
}

pub fn aggregate_estimators(thetas: &[f64], w: &WeightVector) -> Result<AggregateEstimate> {
    if thetas.len() != w.weights.len() {
        return Err(Error::InvalidInput(format!(
            "{} estimates for {} weights",
            thetas.len(),
            w.weights.len()
        )));
    }
    let value = weighted_mean(thetas, &w.weights).ok_or_else(|| Error::EmptyNeighborhood { target: w.target_id.clone() })?;
    Ok(AggregateEstimate {
        target_id: w.target_id.clone(),
        value,
        method: AggregationMethod::EstimatorAvg,
        weight_sum: w.sum(),
        iterations: 0,
    })
}

type LossFn<'a> = dyn Fn(f64, &IndividualRecord) -> f64 + Sync + 'a;

/// Per-individual loss `M_k(theta)` on a closed parameter interval.
///
/// The caller asserts convexity in `theta`; golden-section search relies
/// on it.
pub struct ObjectiveSpec<'a> {
    eval: Box<LossFn<'a>>,
    pub lo: f64,
    pub hi: f64,
    pub convex: bool,
}

impl<'a> ObjectiveSpec<'a> {
    pub fn new(eval: impl Fn(f64, &IndividualRecord) -> f64 + Sync + 'a, lo: f64, hi: f64, convex: bool) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!("objective domain [{lo}, {hi}] is not a finite interval")));
        }
        Ok(ObjectiveSpec { eval: Box::new(eval), lo, hi, convex })
    }

    pub fn eval(&self, theta: f64, record: &IndividualRecord) -> f64 {
        (self.eval)(theta, record)
    }

    /// `(theta - theta_hat)^2`.
    pub fn squared_error(lo: f64, hi: f64) -> Result<Self> {
        Self::new(|t, r: &IndividualRecord| r.theta_hat.map_or(f64::NAN, |h| (t - h) * (t - h)), lo, hi, true)
    }

    /// Negative normal log-likelihood of the raw observations in the mean,
    /// up to terms free of `theta`.
    pub fn gaussian_mean_nll(lo: f64, hi: f64) -> Result<Self> {
        Self::new(|t, r: &IndividualRecord| r.x.iter().map(|x| 0.5 * (x - t) * (x - t)).sum(), lo, hi, true)
    }

    /// Conditional negative log-likelihood of an AR(1) series in its
    /// coefficient, up to terms free of the coefficient.
    pub fn ar1_conditional_nll(lo: f64, hi: f64) -> Result<Self> {
        Self::new(
            |t, r: &IndividualRecord| r.x.windows(2).map(|w| 0.5 * (w[1] - t * w[0]).powi(2)).sum(),
            lo,
            hi,
            true,
        )
    }

    /// Check loss of every raw observation.
    pub fn check_loss(alpha: f64, lo: f64, hi: f64) -> Result<Self> {
        validate_alpha(alpha)?;
        Self::new(move |t, r: &IndividualRecord| r.x.iter().map(|x| check_loss(*x, t, alpha)).sum(), lo, hi, true)
    }
}

/// Tilted absolute loss `|r - theta| (alpha 1{r > theta} + (1 - alpha) 1{r <= theta})`.
pub fn check_loss(r: f64, theta: f64, alpha: f64) -> f64 {
    if r > theta {
        alpha * (r - theta)
    } else {
        (1.0 - alpha) * (theta - r)
    }
}

/// Minimizes a unimodal function on `[lo, hi]`; returns the minimizer and
/// the iteration count. Stops when the bracket is narrower than `tol`.
pub fn golden_section<F>(mut f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Result<(f64, usize)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut iter = 0;
    while (b - a) > tol && iter < max_iter {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
        iter += 1;
    }
    // The endpoints were never evaluated; a convex objective may sit there.
    let mid = 0.5 * (a + b);
    let mut best = (mid, f(mid)?);
    for x in [lo, hi] {
        if (x - mid).abs() <= tol {
            let fx = f(x)?;
            if fx < best.1 {
                best = (x, fx);
            }
        }
    }
    Ok((best.0, iter))
}

/// Weighted objective `sum_k w_k M_k(theta)` over positively weighted
/// records, failing on the first non-finite contribution.
fn weighted_objective(obj: &ObjectiveSpec<'_>, records: &[(&IndividualRecord, f64)], theta: f64) -> Result<f64> {
    let mut total = 0.0;
    for (r, w) in records {
        let v = obj.eval(theta, r);
        if !v.is_finite() {
            return Err(Error::ObjectiveEvaluation { theta, record: r.id.clone() });
        }
        total += w * v;
    }
    Ok(total)
}

/// Argmin over `[obj.lo, obj.hi]` of `sum_k w_k M_k(theta)`.
pub fn minimize_weighted_objective(obj: &ObjectiveSpec<'_>, pop: &Population, w: &WeightVector) -> Result<AggregateEstimate> {
    minimize_with_weights(obj, pop, &w.weights, &w.target_id)
}

/// Same as [`minimize_weighted_objective`] with a bare weight slice.
pub fn minimize_with_weights(obj: &ObjectiveSpec<'_>, pop: &Population, weights: &[f64], target_id: &str) -> Result<AggregateEstimate> {
    if !obj.convex {
        return Err(Error::Config("golden-section aggregation requires a convex objective".into()));
    }
    if weights.len() != pop.len() {
        return Err(Error::InvalidInput(format!("{} weights for {} records", weights.len(), pop.len())));
    }
    let records: Vec<(&IndividualRecord, f64)> = pop
        .records()
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(r, w)| (r, *w))
        .collect();
    let weight_sum: f64 = records.iter().map(|(_, w)| w).sum();
    if weight_sum <= MIN_WEIGHT_SUM {
        return Err(Error::EmptyNeighborhood { target: target_id.to_string() });
    }
    let (value, iterations) = golden_section(
        |t| weighted_objective(obj, &records, t),
        obj.lo,
        obj.hi,
        GOLDEN_TOLERANCE,
        GOLDEN_MAX_ITER,
    )?;
    Ok(AggregateEstimate {
        target_id: target_id.to_string(),
        value,
        method: AggregationMethod::ObjectiveMin,
        weight_sum,
        iterations,
    })
}

/// Search interval for location parameters: the range of positively
/// weighted estimates widened by three interquartile ranges on each side.
pub fn location_bracket(thetas: &[f64], weights: &[f64]) -> Result<(f64, f64)> {
    let kept: Vec<f64> = thetas.iter().zip(weights).filter(|(_, w)| **w > 0.0).map(|(t, _)| *t).collect();
    if kept.is_empty() {
        return Err(Error::InvalidInput("no positively weighted estimates".into()));
    }
    let lo = kept.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = kept.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut pad = 3.0 * crate::stats::iqr(&kept);
    if !(pad > 0.0) {
        pad = 1.0f64.max(lo.abs().max(hi.abs()) * 1e-3);
    }
    Ok((lo - pad, hi + pad))
}

fn validate_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("quantile level {alpha} outside (0, 1)")))
    }
}

/// Left-continuous weighted quantile: the smallest value whose cumulative
/// weight reaches `alpha` times the total. Equal values pool their weights.
pub fn weighted_quantile(values: &[f64], weights: &[f64], alpha: f64) -> Result<f64> {
    validate_alpha(alpha)?;
    if values.is_empty() {
        return Err(Error::InvalidInput("weighted quantile of an empty sample".into()));
    }
    if values.len() != weights.len() {
        return Err(Error::InvalidInput(format!("{} values for {} weights", values.len(), weights.len())));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite sample value {bad}")));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let w: Vec<f64> = order.iter().map(|&i| weights[i]).collect();
    weighted_quantile_sorted(&sorted, &w, alpha)
        .ok_or_else(|| Error::EmptyNeighborhood { target: "weighted quantile".into() })
}

/// [`weighted_quantile`] on values already sorted ascending, weights in the
/// same order. `None` when the weights carry no mass.
pub fn weighted_quantile_sorted(sorted: &[f64], weights: &[f64], alpha: f64) -> Option<f64> {
    let total: f64 = weights.iter().sum();
    if !(total > MIN_WEIGHT_SUM) {
        return None;
    }
    // Slack absorbs rounding in alpha * total, e.g. 0.1 * 30 = 3.0000000000000004.
    let threshold = alpha * total - 1e-12 * total;
    let mut cum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        while i < sorted.len() && sorted[i] == v {
            cum += weights[i];
            i += 1;
        }
        if cum >= threshold && cum > 0.0 {
            return Some(v);
        }
    }
    sorted.last().copied()
}
