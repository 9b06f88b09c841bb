//! Trajectory-neighborhood anomaly scoring.
//!
//! Each voyage is grouped with its nearest voyages by normalized DTW
//! distance between trajectories, excluding itself. Its sailing time is
//! scored against the group mean and standard deviation with the two-sided
//! normal rule.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distances::{dtw_matrix, DistanceMatrix, Trajectory};
use crate::error::{Error, Result};
use crate::kernels::{Bandwidth, Kernel};
use crate::rng::{stream, StreamTag};

/// Group standard deviations below this are treated as degenerate.
pub const MIN_GROUP_SD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Voyage {
    pub id: String,
    pub trajectory: Trajectory,
    /// Hours.
    pub sailing_time: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VoyageSet {
    pub voyages: Vec<Voyage>,
    /// Input rows discarded during ingestion.
    pub dropped_rows: usize,
}

impl VoyageSet {
    pub fn new(voyages: Vec<Voyage>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for v in &voyages {
            if !(v.sailing_time > 0.0 && v.sailing_time.is_finite()) {
                return Err(Error::InvalidInput(format!("voyage {} has sailing time {}", v.id, v.sailing_time)));
            }
            if !seen.insert(v.id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate voyage id {}", v.id)));
            }
        }
        Ok(VoyageSet { voyages, dropped_rows: 0 })
    }

    pub fn len(&self) -> usize {
        self.voyages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voyages.is_empty()
    }
}

/// How group members are weighted when forming the group mean and spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NeighborWeighting {
    #[default]
    Equal,
    /// Kernel in the DTW distance to the target.
    Kernel { kernel: Kernel, bandwidth: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnomalyConfig {
    pub k_neighbors: usize,
    pub threshold: f64,
    /// Trajectories longer than this are uniformly subsampled first.
    pub max_points: usize,
    pub weighting: NeighborWeighting,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        AnomalyConfig { k_neighbors: 40, threshold: 0.95, max_points: 500, weighting: NeighborWeighting::Equal }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoyageScore {
    pub id: String,
    pub sailing_time: f64,
    /// Neighbor ids, nearest first.
    pub group: Vec<String>,
    pub mu_c: f64,
    pub sigma_c: f64,
    pub risk: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub threshold: f64,
    pub scores: Vec<VoyageScore>,
}

impl AnomalyReport {
    pub fn flagged_ids(&self) -> Vec<&str> {
        self.scores.iter().filter(|s| s.flagged).map(|s| s.id.as_str()).collect()
    }
}

/// `1 - 2 P(Z > |x - mu| / sigma)`.
pub fn risk_score(x: f64, mu: f64, sigma: f64) -> f64 {
    crate::stats::normal_two_sided((x - mu).abs() / sigma)
}

/// The `k` nearest voyages to `i`, ordered by (distance, id).
fn neighbors<'a>(set: &'a VoyageSet, dist: &DistanceMatrix, i: usize, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..set.len()).filter(|&j| j != i).collect();
    let key = |j: usize| (dist.get(i, j), set.voyages[j].id.as_str());
    order.sort_by(|&a, &b| {
        let (da, ia) = key(a);
        let (db, ib) = key(b);
        da.total_cmp(&db).then_with(|| ia.cmp(ib))
    });
    order.truncate(k);
    order
}

fn group_moments(times: &[f64], weights: Option<&[f64]>) -> (f64, f64) {
    match weights {
        None => (crate::stats::mean(times), crate::stats::sample_sd(times)),
        Some(w) => {
            let sw: f64 = w.iter().sum();
            let sw2: f64 = w.iter().map(|v| v * v).sum();
            let mu = times.iter().zip(w).map(|(t, v)| t * v).sum::<f64>() / sw;
            let ss = times.iter().zip(w).map(|(t, v)| v * (t - mu).powi(2)).sum::<f64>();
            // reliability-weight correction; equals divisor n - 1 for equal weights
            (mu, (ss / (sw - sw2 / sw)).sqrt())
        }
    }
}

pub fn anomaly_scores(set: &VoyageSet, cfg: &AnomalyConfig) -> Result<AnomalyReport> {
    if cfg.k_neighbors < 2 {
        return Err(Error::Config("k_neighbors must be at least 2".into()));
    }
    if !(cfg.threshold > 0.0 && cfg.threshold < 1.0) {
        return Err(Error::Config(format!("threshold {} must lie in (0, 1)", cfg.threshold)));
    }
    if set.len() < cfg.k_neighbors + 1 {
        return Err(Error::InsufficientVoyages { have: set.len(), need: cfg.k_neighbors + 1 });
    }
    let kernel_bw = match &cfg.weighting {
        NeighborWeighting::Equal => None,
        NeighborWeighting::Kernel { kernel, bandwidth } => Some((*kernel, Bandwidth::new(*bandwidth)?)),
    };
    let trajectories: Vec<Trajectory> = set.voyages.iter().map(|v| v.trajectory.subsampled(cfg.max_points)).collect();
    let dist = dtw_matrix(&trajectories)?;
    let scores = (0..set.len())
        .into_par_iter()
        .map(|i| {
            let v = &set.voyages[i];
            let group = neighbors(set, &dist, i, cfg.k_neighbors);
            let times: Vec<f64> = group.iter().map(|&j| set.voyages[j].sailing_time).collect();
            let weights = match &kernel_bw {
                None => None,
                Some((k, b)) => Some(group.iter().map(|&j| k.weight(dist.get(i, j), b)).collect::<Result<Vec<f64>>>()?),
            };
            let (mu_c, sigma_c) = group_moments(&times, weights.as_deref());
            if !(sigma_c >= MIN_GROUP_SD) {
                return Err(Error::DegenerateGroup { voyage: v.id.clone(), sigma: sigma_c });
            }
            let risk = risk_score(v.sailing_time, mu_c, sigma_c);
            Ok(VoyageScore {
                id: v.id.clone(),
                sailing_time: v.sailing_time,
                group: group.iter().map(|&j| set.voyages[j].id.clone()).collect(),
                mu_c,
                sigma_c,
                risk,
                flagged: risk > cfg.threshold,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AnomalyReport { threshold: cfg.threshold, scores })
}

/// Synthetic port: voyages follow one of several route templates with
/// positional jitter; sailing times are normal per route. A number of
/// voyages get their time pushed `sigma_multiple` standard deviations out,
/// and some of those also carry an anchoring loop near the destination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticPortConfig {
    pub voyages: usize,
    pub routes: usize,
    pub anomalies: usize,
    pub sigma_multiple: f64,
    /// Per-route mean sailing times cycle through this list.
    pub route_hours: Vec<f64>,
    pub time_sd: f64,
    /// Positional noise, km.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for SyntheticPortConfig {
    fn default() -> Self {
        SyntheticPortConfig {
            voyages: 500,
            routes: 3,
            anomalies: 10,
            sigma_multiple: 4.0,
            route_hours: vec![20.0, 32.0, 45.0],
            time_sd: 2.0,
            jitter: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPort {
    pub set: VoyageSet,
    /// Ids of the planted anomalies.
    pub planted: Vec<String>,
}

fn route_template(r: usize, routes: usize) -> Vec<[f64; 2]> {
    // Routes leave the port (origin) at different bearings and bend midway.
    let angle = 2.0 * std::f64::consts::PI * r as f64 / routes as f64;
    let (c, s) = (angle.cos(), angle.sin());
    let length = 40.0 + 15.0 * r as f64;
    let steps = 40;
    (0..=steps)
        .map(|i| {
            let u = i as f64 / steps as f64;
            let along = length * u;
            let bend = 8.0 * (std::f64::consts::PI * u).sin();
            [along * c - bend * s, along * s + bend * c]
        })
        .collect()
}

pub fn synthetic_port(cfg: &SyntheticPortConfig) -> Result<SyntheticPort> {
    if cfg.routes == 0 || cfg.route_hours.is_empty() || cfg.anomalies > cfg.voyages || cfg.voyages == 0 {
        return Err(Error::Config("synthetic port needs routes, route hours and anomalies <= voyages".into()));
    }
    crate::simulation::validate_positive("time_sd", cfg.time_sd)?;
    let templates: Vec<Vec<[f64; 2]>> = (0..cfg.routes).map(|r| route_template(r, cfg.routes)).collect();
    // Planted voyages are spread evenly through the index range.
    let planted_idx: Vec<usize> = (0..cfg.anomalies).map(|a| a * cfg.voyages / cfg.anomalies.max(1)).collect();
    let mut voyages = Vec::with_capacity(cfg.voyages);
    let mut planted = Vec::new();
    for v in 0..cfg.voyages {
        let mut rng = stream(cfg.seed, 0, v as u64, StreamTag::Anomaly);
        let route = v % cfg.routes;
        let mu = cfg.route_hours[route % cfg.route_hours.len()];
        let mut points: Vec<[f64; 2]> = templates[route]
            .iter()
            .map(|p| {
                let dx: f64 = rng.sample(StandardNormal);
                let dy: f64 = rng.sample(StandardNormal);
                [p[0] + cfg.jitter * dx, p[1] + cfg.jitter * dy]
            })
            .collect();
        let noise: f64 = rng.sample(StandardNormal);
        let id = format!("V{v:04}");
        let mut time = mu + cfg.time_sd * noise;
        if let Some(a) = planted_idx.iter().position(|&p| p == v) {
            time = mu + cfg.sigma_multiple * cfg.time_sd;
            if a % 2 == 1 {
                // anchoring loop just short of the destination
                let end = *points.last().expect("templates are non-empty");
                for i in 0..8 {
                    let t = 2.0 * std::f64::consts::PI * i as f64 / 8.0;
                    points.push([end[0] + 1.5 * t.cos(), end[1] + 1.5 * t.sin()]);
                }
                points.push(end);
            }
            planted.push(id.clone());
        }
        voyages.push(Voyage { id, trajectory: Trajectory::new(points)?, sailing_time: time.max(0.1) });
    }
    Ok(SyntheticPort { set: VoyageSet::new(voyages)?, planted })
}
