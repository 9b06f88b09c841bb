//! Reduced-size runs of the three simulation studies.
//!
//! `cargo run --release --example simulation_studies`

use igroup::simulation::{run_case1, run_case2, run_case3, SimCase1Config, SimCase2Config, SimCase3Config, SimulationReport};

fn print(report: &SimulationReport) {
    println!("{} (seed {})", report.case, report.seed);
    for m in report.methods.iter().filter(|m| !m.method.starts_with("target_")) {
        println!("  {:<28} {:<16} mse {:.4} (se {:.4}) bias {:+.4}", m.setting, m.method, m.mse, m.mse_se, m.bias);
    }
    for n in &report.notes {
        println!("  note: {n}");
    }
}

fn main() -> igroup::Result<()> {
    print(&run_case1(&SimCase1Config { sigmas: vec![0.0, 0.2, 0.6], replications: 20, ..Default::default() })?);
    print(&run_case2(&SimCase2Config { replications: 10, ..Default::default() })?);
    print(&run_case3(&SimCase3Config { replications: 3, ..SimCase3Config::for_row(1)? })?);
    Ok(())
}
