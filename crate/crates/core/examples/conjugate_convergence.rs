//! With exact estimate-similarity weights in a normal-normal model the
//! pooled estimate approaches the posterior mean as the population grows.
//!
//! `cargo run --release --example conjugate_convergence`

use igroup::simulation::conjugate::{convergence_rms, normalization_mean};
use igroup::weights::GaussianModel;

fn main() -> igroup::Result<()> {
    let model = GaussianModel::new(0.0, 1.0, 1.0)?;
    let target = 1.0;
    println!("posterior mean for estimate {target}: {:.4}", model.posterior_mean(target));
    let mut prev: Option<f64> = None;
    for k in [250, 1000, 4000, 16000] {
        let rms = convergence_rms(&model, k, target, 100, 5)?;
        let ratio = prev.map(|p| format!("  shrink x{:.2}", p / rms)).unwrap_or_default();
        println!("K {k:>6}: rms distance {rms:.5}{ratio}");
        prev = Some(rms);
    }
    println!("mean weight at K = 10000: {:.4}", normalization_mean(&model, 10_000, 5, 0));
    Ok(())
}
