//! CSV and JSON writers for posterior artefacts.

use std::fs;
use std::path::Path;

use serde::Serialize;

use etas_core::EtasParams;
use etas_inference::PosteriorResult;

use crate::CliError;

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes rows of a header plus records.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// `posterior.json`, `marginal_<name>.csv` and `trace.csv` in `dir`.
pub fn write_posterior(dir: &Path, res: &PosteriorResult) -> Result<(), CliError> {
    ensure_dir(dir)?;
    let json = res.to_json().map_err(|e| CliError::io(dir.join("posterior.json"), e))?;
    write_text(&dir.join("posterior.json"), &json)?;
    for m in &res.marginals {
        write_csv(
            &dir.join(format!("marginal_{}.csv", m.name)),
            &["x", "density"],
            m.grid.iter().zip(&m.density).map(|(x, d)| vec![x.to_string(), d.to_string()]),
        )?;
    }
    let mut header = vec!["iteration", "step_fraction", "objective", "newton_steps", "scaled_change"];
    header.extend(EtasParams::NAMES);
    write_csv(
        &dir.join("trace.csv"),
        &header,
        res.history.iter().map(|r| {
            let mut row = vec![
                r.iteration.to_string(),
                r.step_fraction.to_string(),
                r.objective.to_string(),
                r.newton_steps.to_string(),
                r.scaled_change.to_string(),
            ];
            row.extend(r.lin_point_etas.to_array().iter().map(f64::to_string));
            row
        }),
    )
}
