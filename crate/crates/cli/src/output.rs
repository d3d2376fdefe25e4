//! CSV tables and JSON sidecars, written atomically.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    pub fn parse(s: &str) -> CliResult<Format> {
        Format::from_str(s, true)
            .map_err(|_| CliError::Config(format!("output.format must be csv, json or both, got '{s}'")))
    }

    fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

/// Named columns of numbers; headers carry their SI unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Shortest round-trip decimal form, LF line endings.
    pub fn to_bytes(&self) -> CliResult<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let err = |e: csv::Error| CliError::Other(format!("csv: {e}"));
        w.write_record(&self.header).map_err(err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(err)?;
        }
        w.into_inner().map_err(|e| CliError::Other(format!("csv: {e}")))
    }
}

/// Write via a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct Output {
    pub dir: PathBuf,
    pub format: Format,
}

impl Output {
    /// Writes `<stem><suffix>.csv` for each table (if CSV is enabled) and a
    /// `<stem>.json` sidecar (if JSON is enabled) holding `meta` plus the
    /// digest of every table. Returns the paths written.
    pub fn write(&self, stem: &str, tables: &[(&str, &Table)], mut meta: Map<String, Value>) -> CliResult<Vec<PathBuf>> {
        let mut written = Vec::new();
        let mut files = Map::new();
        for (suffix, table) in tables {
            let name = format!("{stem}{suffix}.csv");
            let bytes = table.to_bytes()?;
            files.insert(
                name.clone(),
                json!({
                    "sha256": sha256_hex(&bytes),
                    "columns": table.header,
                    "rows": table.rows.len(),
                }),
            );
            if self.format.csv() {
                let path = self.dir.join(&name);
                write_atomic(&path, &bytes)?;
                written.push(path);
            }
        }
        if self.format.json() {
            meta.insert("tables".into(), Value::Object(files));
            let mut text = serde_json::to_string_pretty(&Value::Object(meta))
                .map_err(|e| CliError::Other(format!("json: {e}")))?;
            text.push('\n');
            let path = self.dir.join(format!("{stem}.json"));
            write_atomic(&path, text.as_bytes())?;
            written.push(path);
        }
        Ok(written)
    }
}
