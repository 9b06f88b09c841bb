//! Pooling objectives instead of estimates: a weighted check loss gives a
//! pooled quantile, and the weighted quantile of raw observations gives the
//! same answer.
//!
//! `cargo run --example objective_aggregation`

use igroup::aggregation::{minimize_with_weights, weighted_quantile, ObjectiveSpec};
use igroup::rng::{stream, StreamTag};
use igroup::{IndividualRecord, Population};
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> igroup::Result<()> {
    let alpha = 0.05;
    let mut rng = stream(3, 0, 0, StreamTag::Data);
    let records: Vec<IndividualRecord> = (0..30)
        .map(|i| {
            let scale = 1.0 + i as f64 / 30.0;
            let x = (0..50).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            IndividualRecord::new(format!("s{i}")).with_x(x)
        })
        .collect();
    let pop = Population::new(records)?;
    // nearby individuals (similar scale) get more weight
    let weights: Vec<f64> = (0..pop.len()).map(|i| (-(i as f64 / 10.0).powi(2)).exp()).collect();

    let obj = ObjectiveSpec::check_loss(alpha, -20.0, 20.0)?;
    let pooled = minimize_with_weights(&obj, &pop, &weights, "s0")?;

    let (mut values, mut per_obs) = (Vec::new(), Vec::new());
    for (r, w) in pop.records().iter().zip(&weights) {
        values.extend(&r.x);
        per_obs.extend(std::iter::repeat(*w).take(r.x.len()));
    }
    let q = weighted_quantile(&values, &per_obs, alpha)?;
    println!("pooled check-loss minimizer {:.5} after {} iterations", pooled.value, pooled.iterations);
    println!("weighted empirical quantile {q:.5}");
    Ok(())
}
