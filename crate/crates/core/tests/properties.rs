//! Invariants over randomly generated populations and samples.

use igroup::aggregation::{aggregate_estimators, weighted_mean, weighted_quantile};
use igroup::distances::{dtw_distance, euclidean, Trajectory};
use igroup::weights::{build_weights, w2_exact_gaussian, GaussianModel, WeightSpec};
use igroup::{Bandwidth, IndividualRecord, Kernel, Population};
use proptest::prelude::*;

fn kernel() -> impl Strategy<Value = Kernel> {
    prop_oneof![Just(Kernel::Gaussian), Just(Kernel::Epanechnikov), Just(Kernel::Boxcar)]
}

fn population(zs: &[(f64, f64)], thetas: &[f64]) -> Population {
    let recs = zs
        .iter()
        .zip(thetas)
        .enumerate()
        .map(|(i, ((a, b), t))| IndividualRecord::new(format!("i{i}")).with_z(vec![*a, *b]).with_theta_hat(*t))
        .collect();
    Population::new(recs).unwrap()
}

proptest! {
    #[test]
    fn covariate_weights_peak_at_the_target(
        zs in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 2..30),
        b in 0.05f64..5.0,
        k in kernel(),
        t in 0usize..30,
    ) {
        let thetas: Vec<f64> = (0..zs.len()).map(|i| i as f64).collect();
        let pop = population(&zs, &thetas);
        let target = t % zs.len();
        let w = build_weights(&pop, target, &WeightSpec::z_only(k, Bandwidth::new(b).unwrap())).unwrap();
        prop_assert_eq!(w.len(), zs.len());
        prop_assert!(w.weights.iter().all(|v| *v >= 0.0 && v.is_finite()));
        let own = w.weights[target];
        prop_assert!(w.weights.iter().all(|v| *v <= own));
        // the pooled estimate is a convex combination of the estimates
        let est = aggregate_estimators(&thetas, &w).unwrap();
        prop_assert!(est.value >= -1e-9 && est.value <= (zs.len() - 1) as f64 + 1e-9);
    }

    #[test]
    fn weights_shrink_with_distance_for_monotone_kernels(d1 in 0.0f64..4.0, extra in 0.0f64..4.0, b in 0.1f64..3.0, k in kernel()) {
        let bw = Bandwidth::new(b).unwrap();
        prop_assert!(k.weight(d1 + extra, &bw).unwrap() <= k.weight(d1, &bw).unwrap());
    }

    #[test]
    fn exact_estimate_weights_are_positive_and_symmetric(a in -5.0f64..5.0, c in -5.0f64..5.0, s in 0.1f64..3.0) {
        let m = GaussianModel::new(0.0, 1.0, s).unwrap();
        let w = w2_exact_gaussian(a, c, &m).unwrap();
        prop_assert!(w > 0.0 && w.is_finite());
        // joint density over the product of marginals
        let swapped = w2_exact_gaussian(c, a, &m).unwrap();
        prop_assert!((w - swapped).abs() <= 1e-12 * w);
    }

    #[test]
    fn weighted_mean_is_bounded(v in prop::collection::vec((-1e3f64..1e3, 0.0f64..10.0), 1..50)) {
        let values: Vec<f64> = v.iter().map(|p| p.0).collect();
        let weights: Vec<f64> = v.iter().map(|p| p.1).collect();
        if let Some(m) = weighted_mean(&values, &weights) {
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m >= lo - 1e-9 && m <= hi + 1e-9);
        } else {
            prop_assert!(weights.iter().sum::<f64>() < 1e-9);
        }
    }

    #[test]
    fn quantile_is_monotone_in_level(
        v in prop::collection::vec((-50.0f64..50.0, 0.01f64..5.0), 1..60),
        a1 in 0.001f64..0.999,
        a2 in 0.001f64..0.999,
    ) {
        let values: Vec<f64> = v.iter().map(|p| p.0).collect();
        let weights: Vec<f64> = v.iter().map(|p| p.1).collect();
        let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let ql = weighted_quantile(&values, &weights, lo).unwrap();
        let qh = weighted_quantile(&values, &weights, hi).unwrap();
        prop_assert!(ql <= qh);
        prop_assert!(values.contains(&ql));
    }

    #[test]
    fn dtw_never_exceeds_the_diagonal_alignment(
        pts in prop::collection::vec(((-10.0f64..10.0, -10.0f64..10.0), (-10.0f64..10.0, -10.0f64..10.0)), 1..25),
    ) {
        let a: Vec<[f64; 2]> = pts.iter().map(|p| [p.0 .0, p.0 .1]).collect();
        let b: Vec<[f64; 2]> = pts.iter().map(|p| [p.1 .0, p.1 .1]).collect();
        let diag = a.iter().zip(&b).map(|(x, y)| euclidean(x, y).unwrap()).sum::<f64>() / a.len() as f64;
        let (ta, tb) = (Trajectory::new(a).unwrap(), Trajectory::new(b).unwrap());
        let d = dtw_distance(&ta, &tb).unwrap();
        prop_assert!(d >= 0.0 && d <= diag + 1e-9);
        prop_assert!((d - dtw_distance(&tb, &ta).unwrap()).abs() < 1e-9);
        prop_assert_eq!(dtw_distance(&ta, &ta).unwrap(), 0.0);
    }
}
