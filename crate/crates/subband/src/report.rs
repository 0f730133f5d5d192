//! Plain-text output formats: numbers, run manifests, optimization traces,
//! result files and accuracy tables.
//!
//! All numbers are printed with six significant digits in `%g` style, so
//! files are stable under reruns and easy to diff.
//!
//! Trace (`trace.log`), one record per scored point:
//!
//! ```text
//! seq=1 scenario=enhance-then-mix nsr=0 gains=1,1,1,1,1,1 accuracy=92.5
//! ```
//!
//! `seq` is the logical timestamp (evaluation order). Result (`result.txt`)
//! and manifests are `key = value` lines.

use std::fmt::Write as _;
use std::path::Path;

use subband_core::optimizer::{EvaluationRecord, OptimizationResult};
use subband_core::GainVector;

pub const TOOL_VERSION: &str = concat!("subband ", env!("CARGO_PKG_VERSION"));

/// `%g` with six significant digits.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    // Rounding may carry into the next decade (e.g. 999999.7).
    let rounded: f64 = format!("{:.5e}", x).parse().unwrap_or(x);
    let exp = if rounded.abs() >= 10f64.powi(exp + 1) { exp + 1 } else { exp };
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        trim_zeros(&s)
    } else {
        let s = format!("{:.5e}", x);
        let (mantissa, e) = s.split_once('e').unwrap_or((&s, "0"));
        let e: i32 = e.parse().unwrap_or(0);
        format!("{}e{}{:02}", trim_zeros(mantissa), if e < 0 { '-' } else { '+' }, e.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

pub fn fmt_gains(g: &GainVector, sep: &str) -> String {
    g.as_slice().iter().map(|&v| fmt_num(v)).collect::<Vec<_>>().join(sep)
}

/// Everything needed to reproduce a run, as ordered `key = value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    entries: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            entries: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.entries.push((format!("param.{key}"), value.to_string()));
        self
    }

    pub fn digest(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.entries.push((format!("digest.{key}"), value.to_string()));
        self
    }

    /// Arbitrary top-level entry, e.g. `argv`.
    pub fn set(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut s = String::from("# subband run manifest\n");
        let _ = writeln!(s, "tool = {TOOL_VERSION}");
        let _ = writeln!(s, "command = {}", self.command);
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.render())
    }

    pub fn parse(text: &str) -> Option<Self> {
        let mut command = None;
        let mut entries = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once(" = ")?;
            match k {
                "tool" => {}
                "command" => command = Some(v.to_string()),
                _ => entries.push((k.to_string(), v.to_string())),
            }
        }
        Some(Self {
            command: command?,
            entries,
        })
    }
}

pub fn trace_line(r: &EvaluationRecord) -> String {
    format!(
        "seq={} scenario={} nsr={} gains={} accuracy={}",
        r.seq,
        r.scenario,
        fmt_num(r.nsr),
        fmt_gains(&r.gains, ","),
        fmt_num(r.accuracy)
    )
}

pub fn render_trace(records: &[EvaluationRecord]) -> String {
    records.iter().map(|r| trace_line(r) + "\n").collect()
}

pub fn render_result(r: &OptimizationResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario = {}", r.scenario);
    let _ = writeln!(s, "best_gains = {}", fmt_gains(&r.best_gains, " "));
    let _ = writeln!(s, "effective_gains = {}", fmt_gains(&r.effective_gains, " "));
    let _ = writeln!(s, "mean_accuracy = {}", fmt_num(r.mean_accuracy));
    let _ = writeln!(s, "baseline_mean_accuracy = {}", fmt_num(r.baseline_mean_accuracy));
    let _ = writeln!(s, "evaluations = {}", r.evaluations);
    let _ = writeln!(s, "sweeps_run = {}", r.sweeps_run);
    for p in &r.per_nsr_trace {
        let _ = writeln!(
            s,
            "nsr[{}] = baseline {} enhanced {}",
            fmt_num(p.nsr),
            fmt_num(p.baseline),
            fmt_num(p.enhanced)
        );
    }
    s
}

/// A small table rendered both as aligned text and as tab-separated values.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn aligned(&self) -> String {
        let cols = self.header.len();
        let mut width = vec![0; cols];
        for row in std::iter::once(&self.header).chain(&self.rows) {
            for (i, cell) in row.iter().enumerate().take(cols) {
                width[i] = width[i].max(cell.chars().count());
            }
        }
        let mut s = String::new();
        for row in std::iter::once(&self.header).chain(&self.rows) {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    if i == 0 {
                        format!("{:<w$}", c, w = width[i])
                    } else {
                        format!("{:>w$}", c, w = width[i])
                    }
                })
                .collect();
            s.push_str(line.join("  ").trim_end());
            s.push('\n');
        }
        s
    }

    pub fn tsv(&self) -> String {
        std::iter::once(&self.header)
            .chain(&self.rows)
            .map(|r| r.join("\t") + "\n")
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use subband_core::Scenario;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(0.3), "0.3");
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(100.0), "100");
        assert_eq!(fmt_num(66.666666666), "66.6667");
        assert_eq!(fmt_num(-1.23456789), "-1.23457");
        assert_eq!(fmt_num(123456789.0), "1.23457e+08");
        assert_eq!(fmt_num(0.000012345678), "1.23457e-05");
        assert_eq!(fmt_num(0.00012345678), "0.000123457");
        assert_eq!(fmt_num(999999.7), "1e+06");
        assert_eq!(fmt_num(1e-10), "1e-10");
    }

    #[test]
    fn manifest_round_trip() {
        let mut m = RunManifest::new("enhance");
        m.param("gains", "1 1 1 1 1 1").param("level", 5).digest("input", "ab12");
        let text = m.render();
        assert!(text.contains("command = enhance\n"));
        assert!(text.contains("param.level = 5\n"));
        let back = RunManifest::parse(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.get("digest.input"), Some("ab12"));
    }

    #[test]
    fn trace_format() {
        let r = EvaluationRecord {
            seq: 3,
            scenario: Scenario::MixThenEnhance,
            gains: GainVector::new(vec![1.0, 0.5, 2.1, 3.1, 0.3, 0.5]).unwrap(),
            nsr: 1.5,
            accuracy: 87.5,
        };
        assert_eq!(
            trace_line(&r),
            "seq=3 scenario=mix-then-enhance nsr=1.5 gains=1,0.5,2.1,3.1,0.3,0.5 accuracy=87.5"
        );
    }

    #[test]
    fn table_layout() {
        let mut t = Table::new(&["speech", "babble"]);
        t.push(vec!["female".into(), "50 -> 75".into()]);
        assert_eq!(t.aligned(), "speech    babble\nfemale  50 -> 75\n");
        assert_eq!(t.tsv(), "speech\tbabble\nfemale\t50 -> 75\n");
    }
}
