//! CSV files with a commented provenance header.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{CliError, CliResult};

/// Provenance written as `# key: value` lines above the column header.
#[derive(Debug, Clone, Default)]
pub struct Header {
    pub lines: Vec<(String, String)>,
}

impl Header {
    pub fn new(verb: &str, config_hash: &str, seeds: &[u64]) -> Self {
        let seeds = seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        Self {
            lines: vec![
                ("verb".into(), verb.into()),
                ("config_sha256".into(), config_hash.into()),
                ("seeds".into(), format!("[{seeds}]")),
            ],
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.lines.push((key.into(), value.to_string()));
        self
    }
}

/// Writes `rows` under `columns`, preceded by the header.
pub fn write_csv(path: &Path, header: &Header, columns: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let file = File::create(path).map_err(|source| CliError::File { path: path.display().to_string(), source })?;
    let mut out = BufWriter::new(file);
    let io = |source| CliError::File { path: path.display().to_string(), source };
    for (k, v) in &header.lines {
        writeln!(out, "# {k}: {v}").map_err(io)?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(columns)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

/// Shortest round-trip representation.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}
