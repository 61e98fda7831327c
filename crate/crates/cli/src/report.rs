use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use collabmech::alpha::AlphaSolution;
use collabmech::ProblemParams;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn to_csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            // 17 significant digits
            Cell::Float(v) if v.is_finite() => format!("{v:.16e}"),
            Cell::Float(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Text(String::new()), Cell::Float)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<ProblemParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solution: Option<AlphaSolution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    pub passed: bool,
    pub summary: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Exit code used when `passed` is false.
    #[serde(skip)]
    pub failure_code: u8,
}

impl Report {
    pub fn new(command: &str, columns: &[&str], failure_code: u8) -> Self {
        Self {
            command: command.to_string(),
            params: None,
            solution: None,
            seed: None,
            replications: None,
            passed: true,
            summary: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            failure_code,
        }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    /// Records an assertion; the report fails if any assertion fails.
    pub fn assert(&mut self, ok: bool, what: impl Into<String>) {
        self.passed &= ok;
        self.summary.push(format!("{}: {}", if ok { "PASS" } else { "FAIL" }, what.into()));
    }

    pub fn note(&mut self, what: impl Into<String>) {
        self.summary.push(what.into());
    }

    pub fn exit_code(&self) -> u8 {
        if self.passed {
            0
        } else {
            self.failure_code
        }
    }

    /// CSV goes to the output with the summary on stderr; JSON carries both.
    pub fn emit(&self, format: Format, out: Option<&Path>) -> io::Result<()> {
        let mut sink: Box<dyn Write> = match out {
            Some(path) => Box::new(File::create(path)?),
            None => Box::new(io::stdout().lock()),
        };
        match format {
            Format::Json => {
                serde_json::to_writer_pretty(&mut sink, self)?;
                writeln!(sink)?;
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(&mut sink);
                w.write_record(&self.columns)?;
                for r in &self.rows {
                    w.write_record(r.iter().map(Cell::to_csv))?;
                }
                w.flush()?;
                drop(w);
                let mut err = io::stderr().lock();
                if let Some(p) = &self.params {
                    writeln!(
                        err,
                        "params: sigma={} cost={} agents={} dim={} n*={}",
                        p.sigma(),
                        p.cost(),
                        p.agents(),
                        p.dim(),
                        p.n_star()
                    )?;
                }
                if let Some(s) = &self.solution {
                    writeln!(err, "alpha={} residual={:e}", s.alpha, s.residual)?;
                }
                for line in &self.summary {
                    writeln!(err, "{line}")?;
                }
            }
        }
        sink.flush()
    }
}
