//! Generic CSV import with explicit column mapping.
//!
//! Columns are selected by header name or by 0-based index. Lines starting
//! with `#` are skipped.

use std::path::Path;

use crate::error::{CliError, CliResult};
use crate::units::{parse_unit, Dim};

#[derive(Debug)]
pub struct Imported {
    pub columns: Vec<Vec<f64>>,
    pub sha256: String,
}

fn resolve(headers: &csv::StringRecord, spec: &str, path: &Path) -> CliResult<usize> {
    if let Some(i) = headers.iter().position(|h| h.trim() == spec) {
        return Ok(i);
    }
    match spec.parse::<usize>() {
        Ok(i) if i < headers.len() => Ok(i),
        _ => Err(CliError::Input(format!(
            "{}: no column '{spec}'; available: {}",
            path.display(),
            headers.iter().map(|h| format!("'{}'", h.trim())).collect::<Vec<_>>().join(", ")
        ))),
    }
}

/// Read the selected columns as numbers. `None` entries of `specs` yield
/// empty columns.
pub fn read_columns(path: &Path, specs: &[Option<&str>]) -> CliResult<Imported> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let headers = reader
        .headers()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        .clone();
    let idx: Vec<Option<usize>> = specs
        .iter()
        .map(|s| s.map(|s| resolve(&headers, s, path)).transpose())
        .collect::<CliResult<_>>()?;
    let mut columns = vec![Vec::new(); specs.len()];
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        for (c, i) in idx.iter().enumerate() {
            let Some(i) = *i else { continue };
            let field = record.get(i).unwrap_or("");
            let v: f64 = field.parse().map_err(|_| {
                CliError::Input(format!(
                    "{} line {line}: column '{}': cannot read '{field}' as a number",
                    path.display(),
                    headers.get(i).unwrap_or("?").trim()
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::Input(format!(
                    "{} line {line}: column '{}' is not finite",
                    path.display(),
                    headers.get(i).unwrap_or("?").trim()
                )));
            }
            columns[c].push(v);
        }
    }
    Ok(Imported {
        columns,
        sha256: crate::output::sha256_hex(&bytes),
    })
}

/// SI factor of a column unit given on the command line.
pub fn column_factor(unit: &str, expected: Dim, flag: &str) -> CliResult<f64> {
    let (factor, dim) = parse_unit(unit).map_err(|e| CliError::Usage(format!("{flag}: {e}")))?;
    if dim != expected {
        return Err(CliError::Usage(format!(
            "{flag}: '{unit}' is not convertible to {}",
            expected.si_unit()
        )));
    }
    Ok(factor)
}
