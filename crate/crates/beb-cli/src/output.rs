//! Reproducibility header and CSV/JSON emission.
//!
//! Numbers are written in Rust's shortest round-trip form and JSON objects
//! have sorted keys, so identical inputs give identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub command: String,
    pub model: String,
    pub model_sha256: String,
    pub rtol: f64,
    pub atol: f64,
    pub seed: u64,
    /// Command-specific settings, in display order.
    pub extra: Vec<(String, String)>,
}

impl Header {
    pub fn csv_lines(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# beb {} {}", env!("CARGO_PKG_VERSION"), self.command);
        let _ = writeln!(s, "# model = {}", self.model);
        let _ = writeln!(s, "# model_sha256 = {}", self.model_sha256);
        let _ = writeln!(s, "# rtol = {}", num(self.rtol));
        let _ = writeln!(s, "# atol = {}", num(self.atol));
        let _ = writeln!(s, "# seed = {}", self.seed);
        for (k, v) in &self.extra {
            let _ = writeln!(s, "# {k} = {v}");
        }
        s
    }

    pub fn to_json(&self) -> Value {
        let mut extra = serde_json::Map::new();
        for (k, v) in &self.extra {
            extra.insert(k.clone(), Value::String(v.clone()));
        }
        json!({
            "tool": "beb",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "model": self.model,
            "model_sha256": self.model_sha256,
            "rtol": self.rtol,
            "atol": self.atol,
            "seed": self.seed,
            "settings": extra,
        })
    }
}

/// A CSV table with a fixed column list.
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &Header, columns: &[&str]) -> Self {
        let mut text = header.csv_lines();
        text.push_str(&columns.join(","));
        text.push('\n');
        Csv {
            text,
            columns: columns.len(),
        }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        debug_assert_eq!(cells.len(), self.columns);
        let line: Vec<String> = cells.iter().map(Cell::render).collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn comment(&mut self, line: &str) {
        let _ = writeln!(self.text, "# {line}");
    }

    pub fn finish(self) -> String {
        self.text
    }
}

pub enum Cell {
    Num(f64),
    Opt(Option<f64>),
    Int(u64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => num(*x),
            Cell::Opt(Some(x)) => num(*x),
            Cell::Opt(None) => String::new(),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// Shortest round-trip form, in exponent notation for very small or large magnitudes.
pub fn num(x: f64) -> String {
    if !x.is_finite() {
        return String::new();
    }
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// `{"header": .., "result": ..}` as pretty JSON with a trailing newline.
pub fn json_document(header: &Header, result: Value) -> String {
    let mut s = serde_json::to_string_pretty(&json!({"header": header.to_json(), "result": result}))
        .expect("JSON values always serialise");
    s.push('\n');
    s
}

/// Writes to `out`, or standard output when absent.
pub fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            use std::io::Write;
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes()).context("writing standard output")?;
            so.flush().context("writing standard output")
        }
    }
}
