//! CSV ingestion for the pipelines.
//!
//! Rows whose cells do not parse are dropped and counted rather than
//! aborting the load; missing columns and empty files are schema errors.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use ndarray::Array2;

use super::anomaly::{Voyage, VoyageSet};
use super::var::ReturnPanel;
use crate::distances::Trajectory;
use crate::error::{Error, Result};
use crate::population::{IndividualRecord, Population};

/// Mean earth radius, km.
const EARTH_RADIUS_KM: f64 = 6371.0;

struct Table {
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Table> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_path(path)?;
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
        let rows = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
        if rows.is_empty() {
            return Err(Error::Schema(format!("{}: no data rows", path.display())));
        }
        Ok(Table { headers, rows })
    }

    fn columns(&self, path: &Path, names: &[&str]) -> Result<Vec<usize>> {
        let missing: Vec<&str> = names.iter().copied().filter(|n| !self.headers.iter().any(|h| h == n)).collect();
        if !missing.is_empty() {
            return Err(Error::Schema(format!(
                "{}: missing column(s) {}; expected {}",
                path.display(),
                missing.join(", "),
                names.join(", ")
            )));
        }
        Ok(names.iter().map(|n| self.headers.iter().position(|h| h == n).expect("checked above")).collect())
    }

    fn optional(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

fn text(row: &csv::StringRecord, i: usize) -> Option<&str> {
    row.get(i).filter(|s| !s.is_empty())
}

fn number(row: &csv::StringRecord, i: usize) -> Option<f64> {
    text(row, i)?.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Loads a long-format returns file (`date, ticker, return`) and a factors
/// file (`date, mkt_rf, smb, hml, rf`) into an aligned panel. Dates keep the
/// factor file's order; a date is dropped unless the factors and every
/// ticker's return are present.
pub fn ingest_returns_csv(returns: &Path, factors: &Path) -> Result<ReturnPanel> {
    let rt = Table::read(returns)?;
    let rc = rt.columns(returns, &["date", "ticker", "return"])?;
    let ft = Table::read(factors)?;
    let fc = ft.columns(factors, &["date", "mkt_rf", "smb", "hml", "rf"])?;

    let mut dropped = 0;
    let mut factor_rows: Vec<(String, [f64; 4])> = Vec::new();
    let mut seen_dates = HashMap::new();
    for row in &ft.rows {
        let parsed = (|| Some((text(row, fc[0])?.to_string(), [number(row, fc[1])?, number(row, fc[2])?, number(row, fc[3])?, number(row, fc[4])?])))();
        match parsed {
            Some((d, v)) if !seen_dates.contains_key(&d) => {
                seen_dates.insert(d.clone(), factor_rows.len());
                factor_rows.push((d, v));
            }
            _ => dropped += 1,
        }
    }

    let mut tickers: Vec<String> = Vec::new();
    let mut ticker_index: HashMap<String, usize> = HashMap::new();
    let mut cells: HashMap<(usize, usize), f64> = HashMap::new();
    for row in &rt.rows {
        let parsed = (|| Some((text(row, rc[0])?, text(row, rc[1])?, number(row, rc[2])?)))();
        let Some((date, ticker, r)) = parsed else {
            dropped += 1;
            continue;
        };
        let Some(&d) = seen_dates.get(date) else {
            dropped += 1;
            continue;
        };
        let k = *ticker_index.entry(ticker.to_string()).or_insert_with(|| {
            tickers.push(ticker.to_string());
            tickers.len() - 1
        });
        if cells.insert((d, k), r).is_some() {
            dropped += 1;
        }
    }
    if tickers.is_empty() {
        return Err(Error::Schema(format!("{}: no usable return rows", returns.display())));
    }

    let keep: Vec<usize> = (0..factor_rows.len()).filter(|&d| (0..tickers.len()).all(|k| cells.contains_key(&(d, k)))).collect();
    if keep.is_empty() {
        return Err(Error::Schema("no date has complete returns and factors".into()));
    }
    let t = keep.len();
    let k = tickers.len();
    let returns_m = Array2::from_shape_fn((t, k), |(i, s)| cells[&(keep[i], s)]);
    let factors_m = Array2::from_shape_fn((t, 3), |(i, j)| factor_rows[keep[i]].1[j]);
    let rf = keep.iter().map(|&d| factor_rows[d].1[3]).collect();
    let dates = keep.iter().map(|&d| factor_rows[d].0.clone()).collect();
    let mut panel = ReturnPanel::new(returns_m, factors_m, rf, dates, tickers)?;
    panel.dropped_rows = dropped;
    panel.dropped_dates = factor_rows.len() - t;
    Ok(panel)
}

/// Local equirectangular projection about `(lat0, lon0)`, in km.
pub fn project(lat: f64, lon: f64, lat0: f64, lon0: f64) -> [f64; 2] {
    let k = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
    [k * (lon - lon0) * lat0.to_radians().cos(), k * (lat - lat0)]
}

/// Loads `voyage_id, seq, lat, lon[, sailing_time_hours]`. Sailing times
/// come from the optional column or, when given, from a
/// `voyage_id, hours` sidecar which takes precedence.
pub fn ingest_voyages_csv(path: &Path, durations: Option<&Path>) -> Result<VoyageSet> {
    let t = Table::read(path)?;
    let c = t.columns(path, &["voyage_id", "seq", "lat", "lon"])?;
    let time_col = t.optional("sailing_time_hours");
    if time_col.is_none() && durations.is_none() {
        return Err(Error::Schema(format!(
            "{}: missing column sailing_time_hours and no durations file",
            path.display()
        )));
    }

    let mut dropped = 0;
    let mut points: BTreeMap<String, Vec<(f64, f64, f64)>> = BTreeMap::new();
    let mut times: HashMap<String, f64> = HashMap::new();
    for row in &t.rows {
        let parsed = (|| {
            let lat = number(row, c[2])?;
            let lon = number(row, c[3])?;
            ((-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon))
                .then_some((text(row, c[0])?, number(row, c[1])?, lat, lon))
        })();
        let Some((id, seq, lat, lon)) = parsed else {
            dropped += 1;
            continue;
        };
        if let Some(tc) = time_col {
            match number(row, tc) {
                Some(h) => {
                    times.entry(id.to_string()).or_insert(h);
                }
                None if durations.is_none() => {
                    dropped += 1;
                    continue;
                }
                None => {}
            }
        }
        points.entry(id.to_string()).or_default().push((seq, lat, lon));
    }
    if let Some(dp) = durations {
        let dt = Table::read(dp)?;
        let dc = dt.columns(dp, &["voyage_id", "hours"])?;
        for row in &dt.rows {
            match (text(row, dc[0]), number(row, dc[1])) {
                (Some(id), Some(h)) => {
                    times.insert(id.to_string(), h);
                }
                _ => dropped += 1,
            }
        }
    }
    if points.is_empty() {
        return Err(Error::Schema(format!("{}: no usable trajectory rows", path.display())));
    }

    let n: f64 = points.values().map(|v| v.len() as f64).sum();
    let lat0 = points.values().flatten().map(|p| p.1).sum::<f64>() / n;
    let lon0 = points.values().flatten().map(|p| p.2).sum::<f64>() / n;
    let mut voyages = Vec::with_capacity(points.len());
    for (id, mut pts) in points {
        let Some(&hours) = times.get(&id) else {
            return Err(Error::Schema(format!("voyage {id} has no sailing time")));
        };
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let trajectory = Trajectory::new(pts.iter().map(|p| project(p.1, p.2, lat0, lon0)).collect())?;
        voyages.push(Voyage { id, trajectory, sailing_time: hours });
    }
    let mut set = VoyageSet::new(voyages)?;
    set.dropped_rows = dropped;
    Ok(set)
}

/// Loads a population: `id`, optional `theta_hat`, covariate columns named
/// `z` or `z1, z2, ...`, and an optional `x` column of values separated by
/// spaces or semicolons. Returns the population and the dropped row count.
pub fn ingest_population_csv(path: &Path) -> Result<(Population, usize)> {
    let t = Table::read(path)?;
    let id = t.columns(path, &["id"])?[0];
    let theta = t.optional("theta_hat");
    let x_col = t.optional("x");
    let mut z_cols: Vec<(usize, usize)> = t
        .headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| match h.strip_prefix('z')? {
            "" => Some((0, i)),
            rest => rest.parse::<usize>().ok().map(|n| (n, i)),
        })
        .collect();
    z_cols.sort();
    if theta.is_none() && x_col.is_none() && z_cols.is_empty() {
        return Err(Error::Schema(format!("{}: need at least one of theta_hat, x, z columns", path.display())));
    }
    let mut dropped = 0;
    let mut records = Vec::with_capacity(t.rows.len());
    for row in &t.rows {
        let parsed = (|| {
            let mut r = IndividualRecord::new(text(row, id)?);
            if let Some(c) = theta {
                if let Some(s) = text(row, c) {
                    r = r.with_theta_hat(s.parse::<f64>().ok().filter(|v| v.is_finite())?);
                }
            }
            if !z_cols.is_empty() {
                r = r.with_z(z_cols.iter().map(|&(_, c)| number(row, c)).collect::<Option<Vec<f64>>>()?);
            }
            if let Some(c) = x_col {
                if let Some(s) = text(row, c) {
                    let x = s
                        .split(|ch: char| ch == ';' || ch.is_whitespace())
                        .filter(|p| !p.is_empty())
                        .map(|p| p.parse::<f64>().ok().filter(|v| v.is_finite()))
                        .collect::<Option<Vec<f64>>>()?;
                    r = r.with_x(x);
                }
            }
            Some(r)
        })();
        match parsed {
            Some(r) => records.push(r),
            None => dropped += 1,
        }
    }
    if records.is_empty() {
        return Err(Error::Schema(format!("{}: no usable rows", path.display())));
    }
    Ok((Population::new(records)?, dropped))
}
