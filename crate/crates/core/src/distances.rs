//! Distances between exogenous observations: Euclidean for vectors and
//! path-length normalized dynamic time warping for planar trajectories.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Time-ordered sequence of planar points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    points: Vec<[f64; 2]>,
}

impl Trajectory {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("trajectory must contain at least one point".into()));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("trajectory coordinates must be finite".into()));
        }
        Ok(Trajectory { points })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Uniformly subsamples to at most `max_points`, always keeping both
    /// endpoints.
    pub fn subsampled(&self, max_points: usize) -> Trajectory {
        let n = self.points.len();
        if max_points == 0 || n <= max_points {
            return self.clone();
        }
        if max_points == 1 {
            return Trajectory { points: vec![self.points[0]] };
        }
        let points = (0..max_points)
            .map(|i| {
                let idx = (i as f64 * (n - 1) as f64 / (max_points - 1) as f64).round() as usize;
                self.points[idx]
            })
            .collect();
        Trajectory { points }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Trajectory {
        Trajectory {
            points: self.points.iter().map(|p| [p[0] + dx, p[1] + dy]).collect(),
        }
    }
}

#[inline]
fn point_distance(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Normalized DTW without a band constraint.
pub fn dtw_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    dtw_distance_windowed(a, b, None)
}

/// Normalized DTW: the minimum cumulative alignment cost divided by the
/// number of aligned pairs on the optimal warping path.
///
/// Among equal-cost predecessors the diagonal step wins, then the step that
/// advances only `b`, then the step that advances only `a`. `window` is a
/// Sakoe-Chiba band half-width; it is widened to `|len(a) - len(b)|` when
/// needed so a path always exists.
pub fn dtw_distance_windowed(a: &Trajectory, b: &Trajectory, window: Option<usize>) -> Result<f64> {
    let (pa, pb) = (a.points(), b.points());
    let (n, m) = (pa.len(), pb.len());
    if n == 0 || m == 0 {
        return Err(Error::InvalidInput("dtw requires non-empty trajectories".into()));
    }
    let band = window.map(|w| w.max(n.abs_diff(m)));

    // Two rolling rows of (cumulative cost, path length).
    let mut prev_cost = vec![f64::INFINITY; m];
    let mut prev_len = vec![0u32; m];
    let mut cur_cost = vec![f64::INFINITY; m];
    let mut cur_len = vec![0u32; m];

    for i in 0..n {
        let (lo, hi) = match band {
            Some(w) => (i.saturating_sub(w), (i + w).min(m - 1)),
            None => (0, m - 1),
        };
        cur_cost.iter_mut().for_each(|c| *c = f64::INFINITY);
        for j in lo..=hi {
            let local = point_distance(&pa[i], &pb[j]);
            if i == 0 && j == 0 {
                cur_cost[0] = local;
                cur_len[0] = 1;
                continue;
            }
            let diag = if i > 0 && j > 0 { prev_cost[j - 1] } else { f64::INFINITY };
            let insert = if j > 0 { cur_cost[j - 1] } else { f64::INFINITY };
            let delete = if i > 0 { prev_cost[j] } else { f64::INFINITY };
            let (best, len) = if diag <= insert && diag <= delete {
                (diag, prev_len[j - 1])
            } else if insert <= delete {
                (insert, cur_len[j - 1])
            } else {
                (delete, prev_len[j])
            };
            cur_cost[j] = best + local;
            cur_len[j] = len + 1;
        }
        std::mem::swap(&mut prev_cost, &mut cur_cost);
        std::mem::swap(&mut prev_len, &mut cur_len);
    }
    Ok(prev_cost[m - 1] / prev_len[m - 1] as f64)
}

/// Symmetric matrix of pairwise distances with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }
}

pub fn dtw_matrix(trajectories: &[Trajectory]) -> Result<DistanceMatrix> {
    dtw_matrix_windowed(trajectories, None)
}

pub fn dtw_matrix_windowed(trajectories: &[Trajectory], window: Option<usize>) -> Result<DistanceMatrix> {
    let n = trajectories.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| dtw_distance_windowed(&trajectories[i], &trajectories[j], window))
        .collect::<Result<Vec<f64>>>()?;
    let mut entries = vec![0.0; n * n];
    for (&(i, j), d) in pairs.iter().zip(values) {
        entries[i * n + j] = d;
        entries[j * n + i] = d;
    }
    Ok(DistanceMatrix { n, entries })
}
