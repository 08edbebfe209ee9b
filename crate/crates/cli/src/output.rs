//! CSV and aligned-table emitters. Every report starts with `#` comment
//! lines (the only place a timestamp may appear) followed by a mandatory
//! header row, so bodies are byte-identical across reruns.

use std::io::{self, Write};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Table,
}

pub struct Report {
    comments: Vec<String>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Report {
    /// Starts a report whose first comment line carries the command name
    /// and the current time.
    pub fn new(command: &str, header: &[&str]) -> Self {
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            comments: vec![format!("whff {command} unix_time={now}")],
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn comment(&mut self, line: impl Into<String>) -> &mut Self {
        self.comments.push(line.into());
        self
    }

    pub fn row(&mut self, cells: Vec<String>) -> &mut Self {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
        self
    }

    pub fn write(&self, w: &mut impl Write, format: Format) -> io::Result<()> {
        for c in &self.comments {
            writeln!(w, "# {c}")?;
        }
        match format {
            Format::Csv => {
                writeln!(w, "{}", self.header.join(","))?;
                for r in &self.rows {
                    writeln!(w, "{}", r.join(","))?;
                }
            }
            Format::Table => {
                let widths: Vec<usize> = (0..self.header.len())
                    .map(|i| {
                        self.rows
                            .iter()
                            .map(|r| r[i].len())
                            .chain([self.header[i].len()])
                            .max()
                            .unwrap_or(0)
                    })
                    .collect();
                let line = |cells: &[String]| {
                    cells
                        .iter()
                        .zip(&widths)
                        .map(|(c, w)| format!("{c:>w$}"))
                        .collect::<Vec<_>>()
                        .join("  ")
                };
                writeln!(w, "{}", line(&self.header))?;
                for r in &self.rows {
                    writeln!(w, "{}", line(r))?;
                }
            }
        }
        Ok(())
    }

    /// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
    pub fn print(&self, format: Format) -> io::Result<()> {
        let stdout = io::stdout();
        let mut lock = stdout.lock();
        match self.write(&mut lock, format).and_then(|_| lock.flush()) {
            Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
            other => other,
        }
    }

    pub fn save(&self, path: &std::path::Path) -> io::Result<()> {
        let mut f = io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut f, Format::Csv)?;
        f.flush()
    }
}

/// Shortest round-trip representation, stable across platforms; very small
/// or very large magnitudes use exponent notation.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if a != 0.0 && !(1e-4..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// Fixed decimals for human-scale quantities.
pub fn fixed(v: f64, decimals: usize) -> String {
    format!("{v:.decimals$}")
}
