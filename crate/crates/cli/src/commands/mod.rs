pub mod analyze;
pub mod sample;
pub mod simulate;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use smbbayes_core::performance::PerformanceRecord;
use smbbayes_core::sampler::{RhatSnapshot, SampleRow, SampleStore};

use crate::CliError;

pub fn write_text(path: &Path, write: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> Result<(), CliError> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    write(&mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::numerical(format!("serializing {}: {e}", path.display())))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Run descriptor persisted next to the chains; everything needed to
/// reload and post-process the store.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub chains: usize,
    pub budget: usize,
    pub burn_in: usize,
    pub rhat_threshold: f64,
    pub check_interval: usize,
    pub adapt_interval: usize,
    pub delayed_rejection: bool,
    pub penalty_factor: f64,
    pub purity_threshold_extract: f64,
    pub purity_threshold_raffinate: f64,
    pub component_names: Vec<String>,
    pub parameter_names: Vec<String>,
    pub converged: bool,
    pub stopped_at: usize,
    pub acceptance_first: Vec<usize>,
    pub acceptance_second: Vec<usize>,
}

pub fn metadata_path(dir: &Path) -> PathBuf {
    dir.join("run_metadata.json")
}

pub fn chain_path(dir: &Path, chain: usize) -> PathBuf {
    dir.join(format!("chain_{chain}.csv"))
}

pub fn records_path(dir: &Path, chain: usize) -> PathBuf {
    dir.join(format!("records_{chain}.csv"))
}

pub fn load_metadata(dir: &Path) -> Result<RunMetadata, CliError> {
    let path = metadata_path(dir);
    let text = std::fs::read_to_string(&path).map_err(|e| {
        CliError::invalid(format!("missing sample store: cannot read {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::invalid(format!("corrupt run metadata: {e}")))
}

fn parse_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::invalid(format!("missing sample store: cannot read {}: {e}", path.display()))
    })?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::invalid(format!("{}: empty file", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
        let row = row.map_err(|e| {
            CliError::invalid(format!("{}:{}: {e}", path.display(), lineno + 2))
        })?;
        if row.len() != header.len() {
            return Err(CliError::invalid(format!(
                "{}:{}: expected {} columns",
                path.display(),
                lineno + 2,
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Reloads the store written by `sample` (or the single-point store
/// written by `simulate`).
pub fn load_store(dir: &Path, meta: &RunMetadata) -> Result<SampleStore<f64>, CliError> {
    let n_params = meta.parameter_names.len();
    let m = meta.component_names.len();
    let mut chains = Vec::with_capacity(meta.chains);
    let mut records = Vec::with_capacity(meta.chains);
    for c in 0..meta.chains {
        let (header, rows) = parse_csv(&chain_path(dir, c))?;
        if header.len() != n_params + 6 {
            return Err(CliError::invalid(format!(
                "chain_{c}.csv: expected {} columns, found {}",
                n_params + 6,
                header.len()
            )));
        }
        let mut chain_rows = Vec::with_capacity(rows.len());
        for row in rows {
            chain_rows.push(SampleRow {
                iteration: row[0] as usize,
                theta: row[1..1 + n_params].to_vec(),
                log_posterior: row[1 + n_params],
                objective: [row[3 + n_params], row[4 + n_params], row[2 + n_params]],
                accepted_stage: row[5 + n_params] as u8,
            });
        }
        let (_, rec_rows) = parse_csv(&records_path(dir, c))?;
        if rec_rows.len() != chain_rows.len() {
            return Err(CliError::invalid(format!(
                "records_{c}.csv: {} rows for {} samples",
                rec_rows.len(),
                chain_rows.len()
            )));
        }
        let mut recs = Vec::with_capacity(rec_rows.len());
        for row in rec_rows {
            recs.push(parse_record_row(&row, m));
        }
        chains.push(chain_rows);
        records.push(recs);
    }
    Ok(SampleStore {
        n_params,
        burn_in: meta.burn_in,
        chains,
        records,
    })
}

fn parse_record_row(row: &[f64], m: usize) -> Option<PerformanceRecord<f64>> {
    // layout: iteration, then 8 blocks of m values, then f, g, h
    if row[1..].iter().all(|v| v.is_nan()) {
        return None;
    }
    let block = |k: usize| row[1 + k * m..1 + (k + 1) * m].to_vec();
    Some(PerformanceRecord {
        average_extract: block(0),
        average_raffinate: block(1),
        purity_extract: block(2),
        purity_raffinate: block(3),
        yield_extract: block(4),
        yield_raffinate: block(5),
        productivity_extract: block(6),
        productivity_raffinate: block(7),
        objective: row[1 + 8 * m],
        penalty: row[2 + 8 * m],
        total: row[3 + 8 * m],
    })
}

/// Writes chains, records and metadata; shared by `sample` and the
/// single-point store of `simulate`.
pub fn persist_store(
    dir: &Path,
    store: &SampleStore<f64>,
    meta: &RunMetadata,
) -> Result<(), CliError> {
    for c in 0..store.n_chains() {
        write_text(&chain_path(dir, c), |out| {
            let names: Vec<&str> = meta.parameter_names.iter().map(String::as_str).collect();
            store.write_chain_csv(out, c, &names).map_err(CliError::from)
        })?;
        write_text(&records_path(dir, c), |out| {
            let rows: Vec<(usize, Option<&PerformanceRecord<f64>>)> = store.chains[c]
                .iter()
                .map(|r| r.iteration)
                .zip(store.records[c].iter().map(|r| r.as_ref()))
                .collect();
            smbbayes_core::performance::write_records_csv(out, &rows, &meta.component_names)
                .map_err(CliError::from)
        })?;
    }
    write_json(&metadata_path(dir), meta)
}

/// Serializable view of the scale-reduction history.
#[derive(Debug, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
    pub mean_ess: f64,
    pub threshold: f64,
    pub converged: bool,
    pub credible_mass: f64,
    pub credible_intervals: Vec<CredibleRow>,
    pub rhat_history: Vec<RhatSnapshot<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CredibleRow {
    pub parameter: String,
    pub lower: f64,
    pub upper: f64,
}
