//! CSV tables, pass/fail checks and the on-disk layout of experiment results.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;

/// Formats with 12 significant digits, plain decimal where practical.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let exp: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    if !(-5..12).contains(&exp) {
        return sci;
    }
    let decimals = (11 - exp).max(0) as usize;
    let mut s = format!("{x:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Missing,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => fmt_num(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => "NA".into(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Missing, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Text(if x { "true" } else { "false" }.into())
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.into())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub comments: Vec<String>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new(), comments: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn comment(&mut self, line: impl Into<String>) {
        self.comments.push(line.into());
    }

    /// `#` comment lines, header, rows; LF line endings.
    pub fn to_csv(&self, extra_comments: &[String]) -> String {
        let mut out = String::new();
        for c in extra_comments.iter().chain(&self.comments) {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

/// A pass/fail threshold on one headline number.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: String,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, threshold: impl Into<String>, passed: bool) -> Self {
        Self { name: name.into(), value, threshold: threshold.into(), passed }
    }

    /// `|value − target| ≤ tol`.
    pub fn near(name: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        let passed = (value - target).abs() <= tol;
        Self::new(name, value, format!("|x - {}| <= {}", fmt_num(target), fmt_num(tol)), passed)
    }

    pub fn at_least(name: impl Into<String>, value: f64, min: f64) -> Self {
        Self::new(name, value, format!("x >= {}", fmt_num(min)), value >= min)
    }

    pub fn at_most(name: impl Into<String>, value: f64, max: f64) -> Self {
        Self::new(name, value, format!("x <= {}", fmt_num(max)), value <= max)
    }

    pub fn describe(&self) -> String {
        format!("{}: {} ({}) {}", self.name, fmt_num(self.value), self.threshold, if self.passed { "pass" } else { "FAIL" })
    }
}

/// Everything one scenario produces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentResult {
    pub scenario: String,
    pub tables: Vec<Table>,
    pub plots: Vec<(String, String)>,
    pub summary: Vec<(String, Cell)>,
    pub checks: Vec<Check>,
}

impl ExperimentResult {
    pub fn new(scenario: impl Into<String>) -> Self {
        Self { scenario: scenario.into(), ..Default::default() }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn summary_value(&self, key: &str) -> Option<&Cell> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn note(&mut self, key: impl Into<String>, value: impl Into<Cell>) {
        self.summary.push((key.into(), value.into()));
    }

    pub fn summary_table(&self) -> Table {
        let mut t = Table::new("summary", &["key", "value"]);
        for (k, v) in &self.summary {
            t.push(vec![k.as_str().into(), v.clone()]);
        }
        t
    }

    pub fn checks_table(&self) -> Table {
        let mut t = Table::new("checks", &["check", "value", "threshold", "passed"]);
        for c in &self.checks {
            t.push(vec![c.name.as_str().into(), c.value.into(), c.threshold.as_str().into(), c.passed.into()]);
        }
        t
    }

    fn threshold_comments(&self) -> Vec<String> {
        let mut lines = vec![format!("scenario = {}", self.scenario)];
        lines.extend(self.checks.iter().map(|c| format!("threshold {}: {}", c.name, c.threshold)));
        lines
    }

    /// Writes `<outdir>/<scenario>/<name>.csv|.svg`, returning the paths.
    pub fn write(&self, outdir: &Path) -> Result<Vec<PathBuf>> {
        let dir = outdir.join(&self.scenario);
        fs::create_dir_all(&dir)?;
        let header = self.threshold_comments();
        let mut paths = Vec::new();
        let extra = [self.summary_table(), self.checks_table()];
        for table in self.tables.iter().chain(&extra) {
            let p = dir.join(format!("{}.csv", table.name));
            fs::write(&p, table.to_csv(&header))?;
            paths.push(p);
        }
        for (name, svg) in &self.plots {
            let p = dir.join(format!("{name}.svg"));
            fs::write(&p, svg)?;
            paths.push(p);
        }
        Ok(paths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(7.272727272727273), "7.27272727273");
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(1e-7), "1.00000000000e-7");
        assert_eq!(fmt_num(-2.5e13), "-2.50000000000e13");
        assert_eq!(fmt_num(123456.0), "123456");
        assert_eq!(fmt_num(f64::NAN), "nan");
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new("x", &["a", "b"]);
        t.comment("note");
        t.push(vec![1.5.into(), Cell::Missing]);
        assert_eq!(t.to_csv(&["threshold c: x >= 1".into()]), "# threshold c: x >= 1\n# note\na,b\n1.5,NA\n");
    }

    #[test]
    fn write_layout() {
        let dir = std::env::temp_dir().join(format!("bcbounds-output-{}", std::process::id()));
        let mut r = ExperimentResult::new("demo");
        r.tables.push(Table::new("values", &["v"]));
        r.checks.push(Check::at_least("c", 2.0, 1.0));
        r.plots.push(("p".into(), "<svg/>".into()));
        let paths = r.write(&dir).unwrap();
        assert_eq!(paths.len(), 4);
        let text = fs::read_to_string(dir.join("demo/checks.csv")).unwrap();
        assert!(text.contains("c,2,x >= 1,true"));
        fs::remove_dir_all(&dir).unwrap();
    }
}
