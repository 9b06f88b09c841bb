//! End-to-end pipelines: weighted-quantile value at risk and trajectory
//! anomaly scoring, with their CSV loaders and synthetic data.

pub mod anomaly;
pub mod ingest;
pub mod var;

pub use anomaly::{anomaly_scores, synthetic_port, AnomalyConfig, AnomalyReport, SyntheticPortConfig, Voyage, VoyageSet};
pub use ingest::{ingest_population_csv, ingest_returns_csv, ingest_voyages_csv};
pub use var::{fit_factor_loadings, synthetic_panel, var_backtest, var_backtest_all, ReturnPanel, SyntheticPanelConfig, VarConfig, VarMethod};
