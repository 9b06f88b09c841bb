//! Similarity weights for one target under the three weighting schemes.
//!
//! `cargo run --example kernel_weights`

use igroup::bandwidth::z_rule_of_thumb;
use igroup::rng::{stream, StreamTag};
use igroup::weights::{build_weights, BootstrapPairs, SampleMean, W2Config, W2Form, W2Source, WeightSpec};
use igroup::{IndividualRecord, Kernel, Population};
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> igroup::Result<()> {
    // theta depends smoothly on z; each individual has 8 noisy observations
    let mut rng = stream(1, 0, 0, StreamTag::Data);
    let records = (0..200)
        .map(|i| {
            let z: f64 = rng.gen_range(-2.0..2.0);
            let theta = z.sin() * 2.0;
            let x: Vec<f64> = (0..8).map(|_| theta + rng.sample::<f64, _>(StandardNormal)).collect();
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            IndividualRecord::new(format!("ind{i}")).with_z(vec![z]).with_theta_hat(mean).with_x(x)
        })
        .collect();
    let pop = Population::new(records)?;
    let pairs = BootstrapPairs::generate(&pop, &SampleMean, 1, 1, 0)?;
    let w2 = W2Source::Bootstrap { pairs: &pairs, config: W2Config::rule_of_thumb(&pop, &pairs, W2Form::Marginal)? };
    let b1 = z_rule_of_thumb(&pop)?;
    println!("rule-of-thumb covariate bandwidth {:.4}", b1.value());

    let target = 0;
    let thetas = pop.theta_hats()?;
    for (name, spec) in [
        ("z", WeightSpec::z_only(Kernel::Gaussian, b1.clone())),
        ("theta", WeightSpec::theta_only(w2.clone())),
        ("combined", WeightSpec::combined(Kernel::Gaussian, b1.clone(), w2.clone())),
    ] {
        let w = build_weights(&pop, target, &spec)?;
        let total = w.sum();
        let ess = total * total / w.weights.iter().map(|v| v * v).sum::<f64>();
        let pooled = igroup::aggregation::aggregate_estimators(&thetas, &w)?;
        println!("{name:>9}: effective group size {ess:7.1}, pooled estimate {:.4} (own {:.4})", pooled.value, thetas[target]);
    }
    Ok(())
}
