//! Monte-Carlo checks of the kernel weight estimators against closed forms
//! and of cross-validated bandwidths against known optimal regimes.

use igroup::bandwidth::{default_grid, select_bandwidth, z_rule_of_thumb, CvConfig, Omega0};
use igroup::rng::{stream, StreamTag};
use igroup::weights::{w2_bootstrap_row, BootstrapPairs, GaussianModel, SampleMean, W2Config, W2Form};
use igroup::{IndividualRecord, Population};
use rand::Rng;
use rand_distr::StandardNormal;

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

#[test]
fn bootstrap_estimate_similarity_tracks_closed_form() {
    // theta ~ N(0, 1), n = 20 observations with sd 2, so the sample mean has
    // variance 0.2.
    let (k, n, sx) = (5000, 20, 2.0);
    let model = GaussianModel::new(0.0, 1.0, sx * sx / n as f64).unwrap();
    let records: Vec<IndividualRecord> = (0..k)
        .map(|i| {
            let mut rng = stream(11, 0, i as u64, StreamTag::Data);
            let theta = normal(&mut rng);
            let x: Vec<f64> = (0..n).map(|_| theta + sx * normal(&mut rng)).collect();
            let m = x.iter().sum::<f64>() / n as f64;
            IndividualRecord::new(format!("i{i}")).with_theta_hat(m).with_x(x)
        })
        .collect();
    let pop = Population::new(records).unwrap();
    let hats = pop.theta_hats().unwrap();
    let pairs = BootstrapPairs::generate(&pop, &SampleMean, 1, 11, 0).unwrap();
    let cfg = W2Config::rule_of_thumb(&pop, &pairs, W2Form::Marginal).unwrap();

    // Targets near the center of the population, neighbors within one
    // predictive standard deviation.
    let targets: Vec<usize> = (0..k).filter(|&i| hats[i].abs() < 0.5).take(5).collect();
    assert_eq!(targets.len(), 5);
    let mut worst: f64 = 0.0;
    for &t in &targets {
        let (pm, pv) = model.predictive(hats[t]);
        let w = w2_bootstrap_row(&pop, &pairs, t, &cfg).unwrap();
        for k in (0..k).filter(|&k| (hats[k] - pm).abs() < pv.sqrt()).take(60) {
            let exact = model.w2(hats[k], hats[t]);
            worst = worst.max((w[k] - exact).abs() / exact);
        }
    }
    println!("largest relative error {worst:.3}");
    assert!(worst < 0.25, "largest relative error {worst}");
}

fn cv_population(seed: u64, theta: impl Fn(f64) -> f64, z_of: impl Fn(usize, &mut rand_chacha::ChaCha8Rng) -> f64) -> Population {
    let records = (0..200)
        .map(|i| {
            let mut rng = stream(seed, 0, i as u64, StreamTag::Data);
            let z = z_of(i, &mut rng);
            let e = normal(&mut rng);
            IndividualRecord::new(format!("i{i}")).with_z(vec![z]).with_theta_hat(theta(z) + e)
        })
        .collect();
    Population::new(records).unwrap()
}

/// Under homogeneity the expected CV error decreases all the way up the
/// grid, but near the top adjacent grid values differ by O(1/K) in
/// expectation while the sampling noise of that difference is also
/// O(1/K). The largest value is therefore the typical choice, picked in
/// roughly two thirds of seeds at any K, not a near-certain one.
#[test]
fn homogeneous_population_prefers_largest_bandwidth() {
    let mut hits = 0;
    for seed in 0..100 {
        let pop = cv_population(seed, |_| 2.0, |_, rng| normal(rng));
        let grid = default_grid(z_rule_of_thumb(&pop).unwrap().value(), 20).unwrap();
        let r = select_bandwidth(&pop, &CvConfig::z_only(grid, Omega0::All)).unwrap();
        hits += usize::from(r.selected_index + 1 == r.grid.len());
    }
    println!("largest bandwidth chosen in {hits}/100");
    assert!(hits > 50);
}

#[test]
fn separated_clusters_keep_bandwidth_below_separation() {
    let separation = 10.0;
    let mut hits = 0;
    for seed in 0..100 {
        let pop = cv_population(
            seed,
            |z| if z < separation / 2.0 { 0.0 } else { 5.0 },
            |i, rng| (i % 2) as f64 * separation + 0.5 * normal(rng),
        );
        let grid = igroup::stats::log_grid(0.05, 50.0, 25);
        let r = select_bandwidth(&pop, &CvConfig::z_only(grid, Omega0::All)).unwrap();
        hits += usize::from(r.selected < separation);
    }
    println!("bandwidth below separation in {hits}/100");
    assert!(hits >= 80);
}
