//! Value-at-risk backtest on the synthetic two-regime panel: per-stock,
//! market-wide and kernel-pooled quantiles across a bandwidth grid.
//!
//! `cargo run --release --example var_backtest`

use igroup::applications::var::{best_bandwidth, synthetic_panel, var_backtest_all, SyntheticPanelConfig, VarConfig, VarMethod};

fn main() -> igroup::Result<()> {
    let panel = synthetic_panel(&SyntheticPanelConfig { seed: 1, ..Default::default() })?;
    let cfg = VarConfig::default();
    let results = var_backtest_all(&panel, &cfg, &[VarMethod::Individual, VarMethod::Market, VarMethod::Igroup])?;
    for r in &results {
        let mean_exc = r.exceedance.iter().sum::<f64>() / r.exceedance.len() as f64;
        let b = r.bandwidth.map(|b| format!("{b:.4}")).unwrap_or_else(|| "-".into());
        println!("{:<10} b {b:>8}  rmse {:.5}  mean exceedance {mean_exc:.4}", r.method.name(), r.rmse);
    }
    if let Some((i, interior)) = best_bandwidth(&results) {
        println!("best pooled bandwidth index {i} (interior minimum: {interior})");
    }
    Ok(())
}
