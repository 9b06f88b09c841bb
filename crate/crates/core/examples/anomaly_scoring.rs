//! Sailing-time anomaly scores on the synthetic port: each voyage is
//! compared with its nearest neighbours by trajectory shape.
//!
//! `cargo run --release --example anomaly_scoring`

use igroup::applications::anomaly::{anomaly_scores, synthetic_port, AnomalyConfig, SyntheticPortConfig};

fn main() -> igroup::Result<()> {
    let port = synthetic_port(&SyntheticPortConfig { seed: 4, ..Default::default() })?;
    let report = anomaly_scores(&port.set, &AnomalyConfig::default())?;
    let flagged = report.flagged_ids();
    let hits = port.planted.iter().filter(|p| flagged.contains(&p.as_str())).count();
    println!("{} voyages, {} flagged, {hits}/{} planted anomalies found", port.set.len(), flagged.len(), port.planted.len());
    let mut top: Vec<_> = report.scores.iter().collect();
    top.sort_by(|a, b| b.risk.total_cmp(&a.risk));
    for s in top.iter().take(12) {
        let planted = if port.planted.contains(&s.id) { "planted" } else { "" };
        println!("  {:<8} time {:6.2}h  group mean {:6.2}  sd {:5.2}  risk {:.4} {planted}", s.id, s.sailing_time, s.mu_c, s.sigma_c, s.risk);
    }
    Ok(())
}
