//! Leave-one-out bandwidth selection over a grid, globally and around one
//! individual.
//!
//! `cargo run --example bandwidth_cv`

use igroup::bandwidth::{default_grid, select_bandwidth, z_rule_of_thumb, CvConfig, Omega0, DEFAULT_GRID_POINTS};
use igroup::rng::{stream, StreamTag};
use igroup::{IndividualRecord, Population};
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> igroup::Result<()> {
    let mut rng = stream(2, 0, 0, StreamTag::Data);
    let records = (0..400)
        .map(|i| {
            let z: f64 = rng.gen_range(0.0..4.0);
            let theta = if z < 2.0 { z } else { 4.0 - z };
            IndividualRecord::new(format!("k{i}")).with_z(vec![z]).with_theta_hat(theta + 0.5 * rng.sample::<f64, _>(StandardNormal))
        })
        .collect();
    let pop = Population::new(records)?;
    let grid = default_grid(z_rule_of_thumb(&pop)?.value(), DEFAULT_GRID_POINTS)?;

    let global = select_bandwidth(&pop, &CvConfig::z_only(grid.clone(), Omega0::All))?;
    println!("global: selected b = {:.4} over {} individuals", global.selected, global.omega0_size);
    for (b, e) in global.grid.iter().zip(&global.errors) {
        println!("  b {b:8.4}  cv {e:.5}{}", if *b == global.selected { "  <" } else { "" });
    }

    let local = select_bandwidth(&pop, &CvConfig::z_only(grid, Omega0::Local { center: 0, epsilon: None }))?;
    println!("local around {}: selected b = {:.4} over {} individuals", pop.record(0).id, local.selected, local.omega0_size);
    Ok(())
}
