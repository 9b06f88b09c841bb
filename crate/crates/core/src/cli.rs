//! Command-line front end.
//!
//! Every subcommand writes its outputs into `--out`, then a
//! `manifest.json` naming them. Errors print one line on stderr,
//! `error kind=<kind> message="<text>"`, and map to exit code 1 for
//! configuration, schema and input problems or 2 for numerical failures.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::applications::anomaly::{anomaly_scores, synthetic_port, AnomalyConfig, SyntheticPortConfig, VoyageSet};
use crate::applications::ingest::{ingest_population_csv, ingest_returns_csv, ingest_voyages_csv};
use crate::applications::var::{best_bandwidth, synthetic_panel, var_backtest_all, ReturnPanel, SyntheticPanelConfig, VarConfig, VarMethod};
use crate::bandwidth::{default_grid, select_bandwidth, z_rule_of_thumb, CvConfig, Omega0, DEFAULT_GRID_POINTS};
use crate::error::{Error, Result};
use crate::kernels::{Bandwidth, Kernel};
use crate::population::Population;
use crate::simulation::{fmt_float, run_case1, run_case2, run_case3, SimCase1Config, SimCase2Config, SimCase3Config};
use crate::weights::{build_weight_components, BootstrapPairs, SampleMean, Scheme, W2Config, W2Form, W2Source, WeightSpec};

/// Build identifier: crate version and `git describe` of the source tree.
pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("IGROUP_GIT_DESCRIBE"), ")");

#[derive(Debug, Parser)]
#[command(name = "igroup", version = VERSION, about = "Individualized group learning: pooled estimation, bandwidth selection, simulations and pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a Monte-Carlo study.
    Simulate(SimulateArgs),
    /// Backtest value at risk on a returns panel.
    Var(VarArgs),
    /// Score voyages for sailing-time anomalies.
    Anomaly(AnomalyArgs),
    /// Select a bandwidth by leave-one-out cross-validation.
    Bandwidth(BandwidthArgs),
    /// Write the weight vector of one target.
    WeightsDump(WeightsDumpArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Case {
    Case1,
    Case2,
    Case3,
}

#[derive(Debug, Args)]
struct Common {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; 0 picks the number of cores. Never changes outputs.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(value_enum)]
    case: Case,
    /// TOML file with fields of the study configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    /// Reference configuration row (case3 only).
    #[arg(long)]
    row: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq)]
enum VarMethodArg {
    Individual,
    Market,
    Igroup,
    All,
}

#[derive(Debug, Args)]
struct VarArgs {
    /// Long-format returns CSV: date, ticker, return.
    #[arg(long, requires = "factors", conflicts_with = "synthetic")]
    returns: Option<PathBuf>,
    /// Factors CSV: date, mkt_rf, smb, hml, rf.
    #[arg(long)]
    factors: Option<PathBuf>,
    /// Use the built-in two-regime synthetic panel instead of CSV input.
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "all")]
    method: VarMethodArg,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, default_value_t = 100)]
    window: usize,
    /// Comma-separated bandwidths on the loading distance.
    #[arg(long, value_delimiter = ',')]
    bandwidth_grid: Option<Vec<f64>>,
    #[arg(long, default_value = "gaussian")]
    kernel: Kernel,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct AnomalyArgs {
    /// Voyages CSV: voyage_id, seq, lat, lon[, sailing_time_hours].
    #[arg(long, conflicts_with = "synthetic")]
    voyages: Option<PathBuf>,
    /// Sidecar CSV: voyage_id, hours.
    #[arg(long)]
    durations: Option<PathBuf>,
    /// Use the built-in synthetic port with planted anomalies.
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 40)]
    k: usize,
    #[arg(long, default_value_t = 0.95)]
    threshold: f64,
    #[arg(long, default_value_t = 500)]
    max_points: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CvScope {
    Global,
    Local,
}

#[derive(Debug, Args)]
struct PopulationArgs {
    /// Population CSV: id, theta_hat, z or z1..zd, x (values separated by
    /// spaces or semicolons).
    #[arg(long)]
    population: PathBuf,
    #[arg(long, default_value = "z")]
    scheme: Scheme,
    #[arg(long, default_value = "gaussian")]
    kernel: Kernel,
    /// Condition the estimate-similarity weight on z.
    #[arg(long)]
    conditional: bool,
    /// Bootstrap re-estimate pairs per individual.
    #[arg(long, default_value_t = 1)]
    bootstrap_pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct BandwidthArgs {
    #[command(flatten)]
    pop: PopulationArgs,
    #[arg(long, value_enum, default_value = "global")]
    cv_scope: CvScope,
    /// Center of the local scope.
    #[arg(long)]
    target: Option<String>,
    /// Radius of the local scope; grows from the rule of thumb when absent.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    bandwidth_grid: Option<Vec<f64>>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct WeightsDumpArgs {
    #[command(flatten)]
    pop: PopulationArgs,
    #[arg(long)]
    target: String,
    /// Covariate bandwidth; rule of thumb when absent.
    #[arg(long)]
    b1: Option<f64>,
    /// Multiplier on the rule-of-thumb estimator bandwidths.
    #[arg(long, default_value_t = 1.0)]
    w2_scale: f64,
    #[command(flatten)]
    common: Common,
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{}", e.render());
            let text = e.to_string();
            let message = text
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with("For more information"))
                .collect::<Vec<_>>()
                .join(" ");
            eprintln!("error kind=usage message={:?}", message.trim_start_matches("error: "));
            return 1;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error kind={} message={:?}", e.kind(), e.to_string());
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let threads = match &cli.command {
        Command::Simulate(a) => a.common.threads,
        Command::Var(a) => a.common.threads,
        Command::Anomaly(a) => a.common.threads,
        Command::Bandwidth(a) => a.common.threads,
        Command::WeightsDump(a) => a.common.threads,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let (name, out, config, seed, outputs) = pool.install(|| match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Var(a) => var(a),
        Command::Anomaly(a) => anomaly(a),
        Command::Bandwidth(a) => bandwidth(a),
        Command::WeightsDump(a) => weights_dump(a),
    })?;
    write_manifest(&out, name, config, seed, start.elapsed().as_secs_f64(), &outputs)
}

type RunOutput = (&'static str, PathBuf, serde_json::Value, Option<u64>, Vec<PathBuf>);

fn write_manifest(
    out: &Path,
    subcommand: &str,
    config: serde_json::Value,
    seed: Option<u64>,
    seconds: f64,
    outputs: &[PathBuf],
) -> Result<()> {
    let files: Vec<String> = outputs
        .iter()
        .map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    let manifest = json!({
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "version": VERSION,
        "wall_clock_seconds": seconds,
        "outputs": files,
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<PathBuf> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(format!("json: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(path.to_path_buf())
}

fn to_json(value: &impl Serialize) -> Result<serde_json::Value> {
    serde_json::to_value(value).map_err(|e| Error::InvalidInput(format!("json: {e}")))
}

fn load_toml<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", p.display(), e.message())))
        }
    }
}

fn simulate(a: SimulateArgs) -> Result<RunOutput> {
    let out = a.common.out;
    std::fs::create_dir_all(&out)?;
    if a.row.is_some() && !matches!(a.case, Case::Case3) {
        return Err(Error::Config("--row applies to case3 only".into()));
    }
    let (report, config, seed) = match a.case {
        Case::Case1 => {
            let mut c: SimCase1Config = load_toml(a.config.as_deref())?;
            c.seed = a.seed.unwrap_or(c.seed);
            c.replications = a.replications.unwrap_or(c.replications);
            (run_case1(&c)?, to_json(&c)?, c.seed)
        }
        Case::Case2 => {
            let mut c: SimCase2Config = load_toml(a.config.as_deref())?;
            c.seed = a.seed.unwrap_or(c.seed);
            c.replications = a.replications.unwrap_or(c.replications);
            (run_case2(&c)?, to_json(&c)?, c.seed)
        }
        Case::Case3 => {
            let mut c: SimCase3Config = load_toml(a.config.as_deref())?;
            c.seed = a.seed.unwrap_or(c.seed);
            c.replications = a.replications.unwrap_or(c.replications);
            if a.row.is_some() {
                c.row = a.row;
            }
            c.apply_row()?;
            (run_case3(&c)?, to_json(&c)?, c.seed)
        }
    };
    let mut outputs = report.write_csv(&out)?;
    let meta = json!({ "case": a.case, "config": config, "seed": seed, "version": VERSION });
    outputs.push(write_json(&out.join("meta.json"), &meta)?);
    Ok(("simulate", out, config, Some(seed), outputs))
}

fn var(a: VarArgs) -> Result<RunOutput> {
    let out = a.common.out;
    let (panel, source): (ReturnPanel, serde_json::Value) = match (&a.returns, &a.factors, a.synthetic) {
        (Some(r), Some(f), false) => (ingest_returns_csv(r, f)?, json!({ "returns": r, "factors": f })),
        (None, _, true) => {
            let cfg = SyntheticPanelConfig { window: a.window, seed: a.seed, ..Default::default() };
            (synthetic_panel(&cfg)?, json!({ "synthetic": cfg }))
        }
        _ => return Err(Error::Config("give --returns with --factors, or --synthetic".into())),
    };
    let mut cfg = VarConfig { alpha: a.alpha, window: a.window, kernel: a.kernel, ..Default::default() };
    if let Some(g) = a.bandwidth_grid {
        cfg.grid = g;
    }
    let methods: Vec<VarMethod> = match a.method {
        VarMethodArg::Individual => vec![VarMethod::Individual],
        VarMethodArg::Market => vec![VarMethod::Market],
        VarMethodArg::Igroup => vec![VarMethod::Igroup],
        VarMethodArg::All => vec![VarMethod::Individual, VarMethod::Market, VarMethod::Igroup],
    };
    let results = var_backtest_all(&panel, &cfg, &methods)?;
    std::fs::create_dir_all(&out)?;
    let bw = |b: Option<f64>| b.map(fmt_float).unwrap_or_default();

    let rmse_path = out.join("var_rmse.csv");
    let mut w = csv::Writer::from_path(&rmse_path)?;
    w.write_record(["method", "bandwidth", "rmse", "mean_exceedance"])?;
    for r in &results {
        let mean = crate::stats::mean(&r.exceedance);
        w.write_record([r.method.name().to_string(), bw(r.bandwidth), fmt_float(r.rmse), fmt_float(mean)])?;
    }
    w.flush()?;

    let exc_path = out.join("exceedance.csv");
    let mut w = csv::Writer::from_path(&exc_path)?;
    w.write_record(["method", "bandwidth", "ticker", "frequency"])?;
    for r in &results {
        for (t, f) in panel.tickers.iter().zip(&r.exceedance) {
            w.write_record([r.method.name().to_string(), bw(r.bandwidth), t.clone(), fmt_float(*f)])?;
        }
    }
    w.flush()?;

    // The surface is written for the individual and market methods and for
    // igroup at its best bandwidth.
    let best = best_bandwidth(&results);
    let igroup_offset = results.iter().position(|r| r.method == VarMethod::Igroup);
    let surface_path = out.join("var_surface.csv");
    let mut w = csv::Writer::from_path(&surface_path)?;
    w.write_record(["method", "bandwidth", "date", "ticker", "var"])?;
    for (i, r) in results.iter().enumerate() {
        let keep = match (r.method, igroup_offset, best) {
            (VarMethod::Igroup, Some(o), Some((b, _))) => i == o + b,
            (VarMethod::Igroup, _, _) => false,
            _ => true,
        };
        if !keep {
            continue;
        }
        for (day, row) in r.var.outer_iter().enumerate() {
            for (t, v) in panel.tickers.iter().zip(row) {
                w.write_record([
                    r.method.name().to_string(),
                    bw(r.bandwidth),
                    panel.dates[cfg.window + day].clone(),
                    t.clone(),
                    fmt_float(*v),
                ])?;
            }
        }
    }
    w.flush()?;

    let summary = json!({
        "days": panel.days(),
        "stocks": panel.stocks(),
        "dropped_rows": panel.dropped_rows,
        "dropped_dates": panel.dropped_dates,
        "best_igroup_bandwidth": best.and_then(|(b, _)| cfg.grid.get(b).copied()),
        "interior_minimum": best.map(|(_, i)| i),
    });
    let summary_path = write_json(&out.join("summary.json"), &summary)?;
    let config = json!({ "input": source, "var": cfg, "method": format!("{:?}", a.method).to_lowercase() });
    Ok(("var", out, config, Some(a.seed), vec![rmse_path, exc_path, surface_path, summary_path]))
}

fn anomaly(a: AnomalyArgs) -> Result<RunOutput> {
    let out = a.common.out;
    let (set, planted, source): (VoyageSet, Vec<String>, serde_json::Value) = match (&a.voyages, a.synthetic) {
        (Some(v), false) => (ingest_voyages_csv(v, a.durations.as_deref())?, Vec::new(), json!({ "voyages": v, "durations": a.durations })),
        (None, true) => {
            let cfg = SyntheticPortConfig { seed: a.seed, ..Default::default() };
            let port = synthetic_port(&cfg)?;
            (port.set, port.planted, json!({ "synthetic": cfg }))
        }
        _ => return Err(Error::Config("give --voyages or --synthetic".into())),
    };
    let cfg = AnomalyConfig { k_neighbors: a.k, threshold: a.threshold, max_points: a.max_points, ..Default::default() };
    let report = anomaly_scores(&set, &cfg)?;
    std::fs::create_dir_all(&out)?;
    let path = out.join("scores.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["voyage_id", "sailing_time", "mu_c", "sigma_c", "risk", "flagged", "planted", "group"])?;
    for s in &report.scores {
        w.write_record([
            s.id.clone(),
            fmt_float(s.sailing_time),
            fmt_float(s.mu_c),
            fmt_float(s.sigma_c),
            fmt_float(s.risk),
            s.flagged.to_string(),
            planted.contains(&s.id).to_string(),
            s.group.join(";"),
        ])?;
    }
    w.flush()?;
    let flagged = report.flagged_ids();
    let summary = json!({
        "voyages": set.len(),
        "dropped_rows": set.dropped_rows,
        "flagged": flagged.len(),
        "planted": planted.len(),
        "planted_flagged": planted.iter().filter(|p| flagged.contains(&p.as_str())).count(),
    });
    let summary_path = write_json(&out.join("summary.json"), &summary)?;
    let config = json!({ "input": source, "anomaly": cfg });
    Ok(("anomaly", out, config, Some(a.seed), vec![path, summary_path]))
}

/// Population plus what the scheme needs: bootstrap pairs for `theta` and
/// `combined`.
struct Prepared {
    pop: Population,
    pairs: Option<BootstrapPairs>,
    dropped: usize,
}

fn prepare(a: &PopulationArgs) -> Result<Prepared> {
    let (pop, dropped) = ingest_population_csv(&a.population)?;
    if a.scheme.uses_z() && !pop.all_have_z() {
        return Err(Error::SchemeMismatch(format!("scheme {} needs z for every individual", a.scheme)));
    }
    let pairs = if a.scheme.uses_theta() {
        if pop.theta_hats().is_err() {
            return Err(Error::SchemeMismatch(format!("scheme {} needs theta_hat for every individual", a.scheme)));
        }
        Some(BootstrapPairs::generate(&pop, &SampleMean, a.bootstrap_pairs, a.seed, 0)?)
    } else {
        None
    };
    Ok(Prepared { pop, pairs, dropped })
}

fn w2_source<'a>(a: &PopulationArgs, p: &'a Prepared, scale: f64) -> Result<Option<W2Source<'a>>> {
    let Some(pairs) = &p.pairs else { return Ok(None) };
    let form = if a.conditional { W2Form::Conditional } else { W2Form::Marginal };
    let mut config = W2Config::rule_of_thumb(&p.pop, pairs, form)?;
    config.z_kernel = a.kernel;
    config.theta_kernel = a.kernel;
    if scale != 1.0 {
        config.bandwidths = config.bandwidths.scaled(scale)?;
    }
    Ok(Some(W2Source::Bootstrap { pairs, config }))
}

fn bandwidth(a: BandwidthArgs) -> Result<RunOutput> {
    let out = a.common.out;
    let p = prepare(&a.pop)?;
    let omega0 = match a.cv_scope {
        CvScope::Global => Omega0::All,
        CvScope::Local => {
            let t = a.target.as_deref().ok_or_else(|| Error::Config("--cv-scope local needs --target".into()))?;
            Omega0::Local { center: p.pop.index_of(t)?, epsilon: a.epsilon }
        }
    };
    let grid = match a.bandwidth_grid.clone() {
        Some(g) => g,
        None if a.pop.scheme.uses_z() => default_grid(z_rule_of_thumb(&p.pop)?.value(), DEFAULT_GRID_POINTS)?,
        None => default_grid(1.0, DEFAULT_GRID_POINTS)?,
    };
    let cfg = CvConfig {
        grid,
        omega0,
        scheme: a.pop.scheme,
        kernel: a.pop.kernel,
        z_scales: None,
        w2: w2_source(&a.pop, &p, 1.0)?,
    };
    let report = select_bandwidth(&p.pop, &cfg)?;
    std::fs::create_dir_all(&out)?;
    let path = out.join("cv.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["bandwidth", "cv_error", "selected"])?;
    for (i, (b, e)) in report.grid.iter().zip(&report.errors).enumerate() {
        w.write_record([fmt_float(*b), fmt_float(*e), (i == report.selected_index).to_string()])?;
    }
    w.flush()?;
    let sel = json!({
        "scheme": a.pop.scheme.name(),
        "grid_meaning": if a.pop.scheme == Scheme::ThetaOnly { "multiplier on estimator bandwidths" } else { "covariate bandwidth" },
        "selected": report.selected,
        "selected_index": report.selected_index,
        "omega0_size": report.omega0_size,
        "dropped_rows": p.dropped,
    });
    let sel_path = write_json(&out.join("selection.json"), &sel)?;
    let config = json!({
        "population": a.pop.population,
        "scheme": a.pop.scheme.name(),
        "kernel": a.pop.kernel,
        "conditional": a.pop.conditional,
        "bootstrap_pairs": a.pop.bootstrap_pairs,
        "cv_scope": format!("{:?}", a.cv_scope).to_lowercase(),
        "target": a.target,
        "epsilon": a.epsilon,
        "grid": report.grid,
    });
    Ok(("bandwidth", out, config, Some(a.pop.seed), vec![path, sel_path]))
}

fn weights_dump(a: WeightsDumpArgs) -> Result<RunOutput> {
    let out = a.common.out;
    let p = prepare(&a.pop)?;
    let target = p.pop.index_of(&a.target)?;
    let b1 = if a.pop.scheme.uses_z() {
        Some(match a.b1 {
            Some(b) => Bandwidth::new(b)?,
            None => z_rule_of_thumb(&p.pop)?,
        })
    } else {
        None
    };
    let spec = WeightSpec {
        scheme: a.pop.scheme,
        kernel: a.pop.kernel,
        b1: b1.clone(),
        w2: w2_source(&a.pop, &p, a.w2_scale)?,
        include_self: true,
    };
    let (wv, c1, c2) = build_weight_components(&p.pop, target, &spec)?;
    let mut order: Vec<usize> = (0..p.pop.len()).collect();
    let product: Vec<f64> = c1.iter().zip(&c2).map(|(x, y)| x * y).collect();
    order.sort_by(|&i, &j| product[j].total_cmp(&product[i]).then_with(|| p.pop.record(i).id.cmp(&p.pop.record(j).id)));
    std::fs::create_dir_all(&out)?;
    let path = out.join("weights.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["id", "w1", "w2", "product", "normalized"])?;
    let total: f64 = wv.sum();
    for i in order {
        w.write_record([
            p.pop.record(i).id.clone(),
            fmt_float(c1[i]),
            fmt_float(c2[i]),
            fmt_float(product[i]),
            fmt_float(if total > 0.0 { wv.weights[i] / total } else { 0.0 }),
        ])?;
    }
    w.flush()?;
    let config = json!({
        "population": a.pop.population,
        "target": a.target,
        "scheme": a.pop.scheme.name(),
        "kernel": a.pop.kernel,
        "conditional": a.pop.conditional,
        "bootstrap_pairs": a.pop.bootstrap_pairs,
        "b1": b1.map(|b| b.value()),
        "w2_scale": a.w2_scale,
        "bandwidths": wv.bandwidths,
    });
    Ok(("weights-dump", out, config, Some(a.pop.seed), vec![path]))
}
