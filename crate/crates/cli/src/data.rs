//! Input loading and output writing.

use std::fs;
use std::path::{Path, PathBuf};

use sppc_core::config::ConfigFile;
use sppc_core::estimation::AccountingSeries;

use crate::error::{CliError, CliResult};

/// Merges the sections of several TOML files; each section may appear once.
pub fn load_config(files: &[PathBuf]) -> CliResult<ConfigFile> {
    let mut merged = ConfigFile::default();
    let mut origin: [Option<&Path>; 4] = [None; 4];
    for path in files {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg = ConfigFile::parse(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let mut take = |slot: usize, name: &str, present: bool| -> CliResult<()> {
            if present {
                if let Some(first) = origin[slot] {
                    return Err(CliError::Input(format!(
                        "section [{name}] appears in both {} and {}",
                        first.display(),
                        path.display()
                    )));
                }
                origin[slot] = Some(path);
            }
            Ok(())
        };
        take(0, "model", cfg.model.is_some())?;
        take(1, "contract", cfg.contract.is_some())?;
        take(2, "scenario", cfg.scenario.is_some())?;
        take(3, "calibration", cfg.calibration.is_some())?;
        merged.model = merged.model.or(cfg.model);
        merged.contract = merged.contract.or(cfg.contract);
        merged.scenario = merged.scenario.or(cfg.scenario);
        merged.calibration = merged.calibration.or(cfg.calibration);
    }
    Ok(merged)
}

fn read_table(path: &Path, key_columns: usize) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let bad = |msg: String| CliError::Input(format!("{}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers: Vec<String> = reader.headers().map_err(|e| bad(e.to_string()))?.iter().map(String::from).collect();
    if headers.len() <= key_columns {
        return Err(bad(format!("expected at least {} columns", key_columns + 1)));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let line = i + 2;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field
                    .parse::<f64>()
                    .map_err(|_| bad(format!("line {line}, column {:?}: {field:?} is not a number", headers[j])))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((headers, rows))
}

/// Period-sum data with header `start,end,<variable>...`; periods must be contiguous.
pub fn load_series(path: &Path) -> CliResult<AccountingSeries> {
    let (headers, rows) = read_table(path, 2)?;
    let bad = |msg: String| CliError::Input(format!("{}: {msg}", path.display()));
    if headers[0] != "start" || headers[1] != "end" {
        return Err(bad("the first two columns must be `start` and `end`".into()));
    }
    if rows.is_empty() {
        return Err(bad("no periods".into()));
    }
    let mut boundaries = vec![rows[0][0]];
    for (i, r) in rows.iter().enumerate() {
        if r[0] != *boundaries.last().unwrap() {
            return Err(bad(format!(
                "line {}: period starts at {} but the previous one ended at {}",
                i + 2,
                r[0],
                boundaries.last().unwrap()
            )));
        }
        boundaries.push(r[1]);
    }
    let names = headers[2..].to_vec();
    let values = (2..headers.len()).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    Ok(AccountingSeries::new(boundaries, names, values)?)
}

/// Named price columns.
pub type PriceColumns = Vec<(String, Vec<f64>)>;

/// Price data with header `time,<stock>...` at a fixed sampling interval.
pub fn load_prices(path: &Path) -> CliResult<(f64, PriceColumns)> {
    let (headers, rows) = read_table(path, 1)?;
    let bad = |msg: String| CliError::Input(format!("{}: {msg}", path.display()));
    if headers[0] != "time" {
        return Err(bad("the first column must be `time`".into()));
    }
    if rows.len() < 3 {
        return Err(bad("need at least 3 prices".into()));
    }
    let dt = rows[1][0] - rows[0][0];
    if !(dt > 0.0) || rows.windows(2).any(|w| ((w[1][0] - w[0][0]) - dt).abs() > 1e-9 * dt.max(1.0)) {
        return Err(bad("prices must be sampled at a fixed increasing interval".into()));
    }
    let cols = (1..headers.len()).map(|j| (headers[j].clone(), rows.iter().map(|r| r[j]).collect())).collect();
    Ok((dt, cols))
}

pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Output { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
    }
}
