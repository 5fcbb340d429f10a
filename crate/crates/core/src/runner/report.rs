use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::config::{Command, ExperimentConfig};
use super::{EXIT_CHECK_FAILED, EXIT_PASS};
use crate::error::Result;

/// One measured value against its tolerance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// `"<="` or `">="`: how `value` must compare to the bound.
    pub relation: &'static str,
    pub pass: bool,
}

impl Check {
    /// `value <= tolerance`.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
            relation: "<=",
            pass: value <= tolerance,
        }
    }

    /// `value >= -tolerance`.
    pub fn at_least_minus(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance: -tolerance,
            relation: ">=",
            pass: value >= -tolerance,
        }
    }

    /// `value < -tolerance`: a check that demands a violation.
    pub fn below_minus(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance: -tolerance,
            relation: "<",
            pass: value < -tolerance,
        }
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Check {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            tolerance: 1.0,
            relation: ">=",
            pass: ok,
        }
    }
}

/// Fixed-header table printed with 12 significant digits.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    header: Vec<&'static str>,
    rows: Vec<String>,
}

impl CsvTable {
    pub fn new(header: &[&'static str]) -> Self {
        CsvTable {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn header(&self) -> &[&'static str] {
        &self.header
    }

    pub fn push(&mut self, cells: &[Cell]) {
        assert_eq!(cells.len(), self.header.len(), "row width differs from header");
        let mut row = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                row.push(',');
            }
            match c {
                Cell::Num(x) => write!(row, "{x:.11e}").unwrap(),
                Cell::Int(n) => write!(row, "{n}").unwrap(),
                Cell::Text(s) => row.push_str(s),
                Cell::Bool(b) => row.push_str(if *b { "true" } else { "false" }),
            }
        }
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(r);
            out.push('\n');
        }
        out
    }
}

pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
}

/// What a command hands back to the runner.
pub(crate) struct Outcome {
    pub checks: Vec<Check>,
    pub diagnostics: BTreeMap<String, f64>,
    pub details: serde_json::Value,
    pub table: CsvTable,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub command: Command,
    pub version: &'static str,
    /// Configuration with every default filled in.
    pub config: ExperimentConfig,
    pub checks: Vec<Check>,
    /// Reported quantities that carry no verdict.
    pub diagnostics: BTreeMap<String, f64>,
    /// Full certificates of the underlying operations.
    pub details: serde_json::Value,
    pub wall_time_s: f64,
    pub exit_status: i32,
    pub pass: bool,
}

impl RunReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub table: CsvTable,
}

impl RunOutput {
    pub(crate) fn assemble(config: ExperimentConfig, o: Outcome, wall_time_s: f64) -> Self {
        let pass = o.checks.iter().all(|c| c.pass);
        RunOutput {
            report: RunReport {
                command: config.command,
                version: env!("CARGO_PKG_VERSION"),
                config,
                checks: o.checks,
                diagnostics: o.diagnostics,
                details: o.details,
                wall_time_s,
                exit_status: if pass { EXIT_PASS } else { EXIT_CHECK_FAILED },
                pass,
            },
            table: o.table,
        }
    }

    pub fn csv(&self) -> String {
        self.table.render()
    }

    pub fn write_files(&self) -> Result<()> {
        let out = &self.report.config.output;
        if let Some(p) = &out.report {
            std::fs::write(p, self.report.to_json()?)?;
        }
        if let Some(p) = &out.csv {
            std::fs::write(p, self.csv())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_uses_twelve_significant_digits() {
        let mut t = CsvTable::new(&["x", "n"]);
        t.push(&[Cell::Num(std::f64::consts::PI), Cell::Int(3)]);
        assert_eq!(t.render(), "x,n\n3.14159265359e0,3\n");
    }

    #[test]
    fn check_relations() {
        assert!(Check::at_most("a", 1e-9, 1e-8).pass);
        assert!(!Check::at_least_minus("b", -1e-7, 1e-8).pass);
        assert!(Check::below_minus("c", -1e-3, 1e-8).pass);
        assert!(!Check::below_minus("c", 0.0, 1e-8).pass);
    }
}
