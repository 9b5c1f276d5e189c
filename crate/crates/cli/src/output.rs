//! Self-describing tabular output files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use qsync::C64;
use serde::Serialize;

use crate::config::{Format, RunConfig};

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v}"),
            Cell::Int(v) => format!("{v}"),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

/// Appends the real and imaginary parts of `z`.
pub fn push_c(row: &mut Vec<Cell>, z: C64) {
    row.push(Cell::Num(z.re));
    row.push(Cell::Num(z.im));
}

#[derive(Debug, Serialize)]
struct JsonTable<'a> {
    tool: String,
    command: &'a str,
    notes: &'a [String],
    config: &'a RunConfig,
    columns: &'a [String],
    rows: &'a [Vec<Cell>],
}

/// Writes tables into the output directory, each headed by the tool
/// version, the command and the resolved configuration.
pub struct Emitter<'a> {
    dir: PathBuf,
    format: Format,
    command: &'a str,
    config: &'a RunConfig,
    pub written: Vec<PathBuf>,
}

impl<'a> Emitter<'a> {
    pub fn new(config: &'a RunConfig, command: &'a str) -> Result<Self> {
        let dir = config.output.directory.clone();
        fs::create_dir_all(&dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self { dir, format: config.output.format, command, config, written: Vec::new() })
    }

    pub fn table(&mut self, name: &str, columns: &[&str], rows: &[Vec<Cell>], notes: &[String]) -> Result<()> {
        let ext = match self.format {
            Format::Csv => "csv",
            Format::Json => "json",
        };
        let path = self.dir.join(format!("{name}.{ext}"));
        let file = fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut w = BufWriter::new(file);
        let columns: Vec<String> = columns.iter().map(|s| s.to_string()).collect();
        match self.format {
            Format::Csv => {
                writeln!(w, "# {} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))?;
                writeln!(w, "# command: {}", self.command)?;
                writeln!(w, "# config: {}", serde_json::to_string(self.config)?)?;
                for n in notes {
                    writeln!(w, "# {n}")?;
                }
                writeln!(w, "{}", columns.join(","))?;
                for r in rows {
                    let line: Vec<String> = r.iter().map(Cell::csv).collect();
                    writeln!(w, "{}", line.join(","))?;
                }
            }
            Format::Json => {
                let t = JsonTable {
                    tool: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
                    command: self.command,
                    notes,
                    config: self.config,
                    columns: &columns,
                    rows,
                };
                serde_json::to_writer_pretty(&mut w, &t)?;
                writeln!(w)?;
            }
        }
        w.flush()?;
        self.written.push(path);
        Ok(())
    }
}
