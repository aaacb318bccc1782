use std::fmt::Write as _;

use clap::ValueEnum;
use qbound::{Matrix, QuadraticSystem, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Kv,
    Csv,
}

/// Ordered key/value results for one command.
#[derive(Debug, Default)]
pub struct Report {
    pub command: String,
    pub inputs: Vec<(String, String)>,
    pub results: Vec<(String, String)>,
    pub warnings: Vec<String>,
    /// Free-form lines shown only in human output.
    pub notes: Vec<String>,
    /// A PASS/FAIL style check came out negative.
    pub negative: bool,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            ..Default::default()
        }
    }

    pub fn input(&mut self, key: &str, value: impl ToString) {
        self.inputs.push((key.to_string(), value.to_string()));
    }

    pub fn put(&mut self, key: &str, value: impl ToString) {
        self.results.push((key.to_string(), value.to_string()));
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.notes.push(line.into());
    }

    pub fn warn(&mut self, line: impl Into<String>) {
        self.warnings.push(line.into());
    }

    pub fn digest(&mut self, sys: &QuadraticSystem) {
        self.input("n", sys.dim());
        self.input("c_norm", num(sys.c().norm()));
        self.input("l_norm", num(sys.l().norm()));
        self.input("q_max_abs", num(sys.q_scale()));
        self.input("energy_residual", num(sys.energy_residual().value));
        self.input("validation", "ok");
    }

    pub fn render(&self, format: Format) -> String {
        let mut out = String::new();
        match format {
            Format::Human => {
                let _ = writeln!(out, "== {} ==", self.command);
                if !self.inputs.is_empty() {
                    let parts: Vec<String> = self.inputs.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    let _ = writeln!(out, "input: {}", parts.join(" "));
                }
                let width = self.results.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
                for (k, v) in &self.results {
                    let _ = writeln!(out, "{k:width$} : {v}");
                }
                for n in &self.notes {
                    let _ = writeln!(out, "{n}");
                }
                for w in &self.warnings {
                    let _ = writeln!(out, "warning: {w}");
                }
            }
            Format::Kv => {
                let _ = writeln!(out, "command={}", self.command);
                for (k, v) in self.inputs.iter() {
                    let _ = writeln!(out, "input.{k}={v}");
                }
                for (k, v) in &self.results {
                    let _ = writeln!(out, "{k}={v}");
                }
                for (i, w) in self.warnings.iter().enumerate() {
                    let _ = writeln!(out, "warning.{i}={w}");
                }
            }
            Format::Csv => {
                let _ = writeln!(out, "key,value");
                let _ = writeln!(out, "command,{}", csv_field(&self.command));
                for (k, v) in self.inputs.iter() {
                    let _ = writeln!(out, "input.{k},{}", csv_field(v));
                }
                for (k, v) in &self.results {
                    let _ = writeln!(out, "{k},{}", csv_field(v));
                }
                for (i, w) in self.warnings.iter().enumerate() {
                    let _ = writeln!(out, "warning.{i},{}", csv_field(w));
                }
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Shortest round-trip representation.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn vec_str(v: &Vector) -> String {
    let parts: Vec<String> = v.iter().map(|x| num(*x)).collect();
    format!("[{}]", parts.join(" "))
}

pub fn slice_str(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| num(*x)).collect();
    format!("[{}]", parts.join(" "))
}

pub fn mat_str(m: &Matrix) -> String {
    let rows: Vec<String> = m
        .row_iter()
        .map(|r| r.iter().map(|x| num(*x)).collect::<Vec<_>>().join(" "))
        .collect();
    format!("[{}]", rows.join("; "))
}

pub fn pass(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}
