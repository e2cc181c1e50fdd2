//! CSV and JSON writers with provenance.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub const TOOL: &str = "seqdetect";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `%.12g`-style formatting: 12 significant digits, trailing zeros dropped,
/// scientific notation outside `[1e-4, 1e12)`.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn config_hash(config: &ExperimentConfig) -> String {
    hex::encode(Sha256::digest(config.to_json().as_bytes()))
}

/// A CSV cell.
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Bool(bool),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => fmt_g(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self, command: &str, config: &ExperimentConfig) -> String {
        let mut out = String::new();
        out.push_str(&format!("# tool: {TOOL} {VERSION}\n"));
        out.push_str(&format!("# command: {command}\n"));
        out.push_str(&format!("# config: {}\n", config.to_json()));
        out.push_str(&format!("# config_sha256: {}\n", config_hash(config)));
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a ExperimentConfig,
    config_hash: String,
    result: &'a T,
}

pub fn to_json<T: Serialize>(command: &str, config: &ExperimentConfig, result: &T) -> String {
    let env = Envelope {
        tool: TOOL,
        version: VERSION,
        command,
        config,
        config_hash: config_hash(config),
        result,
    };
    let mut s = serde_json::to_string_pretty(&env).expect("result serializes");
    s.push('\n');
    s
}

/// Recovers the echoed config from the provenance header of a CSV file.
pub fn config_from_csv(text: &str) -> Option<&str> {
    text.lines().find_map(|l| l.strip_prefix("# config: "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_format_matches_printf() {
        // Expected strings are what C's printf("%.12g") prints.
        let cases = [
            (0.5, "0.5"),
            (1.0, "1"),
            (-0.3472978603872037, "-0.347297860387"),
            (0.1 + 0.2, "0.3"),
            (123456789012.0, "123456789012"),
            (1234567890123.0, "1.23456789012e+12"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (9.9999999999999e-5, "0.0001"),
            (999999999999.9, "1e+12"),
            (6.02214076e23, "6.02214076e+23"),
            (1e-300, "1e-300"),
            (0.0, "0"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_g(x), want, "{x}");
        }
    }

    #[test]
    fn csv_carries_provenance() {
        let config = ExperimentConfig::default();
        let mut t = Table::new(["a", "b"]);
        t.push(vec![Cell::Num(0.25), Cell::Int(3)]);
        let csv = t.to_csv("risk", &config);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], format!("# tool: seqdetect {VERSION}"));
        assert_eq!(lines[1], "# command: risk");
        assert!(lines[3].starts_with("# config_sha256: "));
        assert_eq!(lines[3].len(), "# config_sha256: ".len() + 64);
        assert_eq!(&lines[4..], ["a,b", "0.25,3"]);
        let echoed = ExperimentConfig::from_json(config_from_csv(&csv).unwrap()).unwrap();
        assert_eq!(echoed, config);
    }
}
