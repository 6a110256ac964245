//! Scenario reports and their canonical serializations.
//!
//! JSON output is canonical: object keys are sorted, floats carry at most 12
//! significant digits, and integers stay integers. Parsing a report and
//! emitting it again reproduces the same bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, ErrorClass};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Violation,
    Error,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Violation => "violation",
            Status::Error => "error",
        }
    }
}

/// Process exit codes.
pub mod exit {
    pub const PASS: i32 = 0;
    /// Physics-level violation or a failed check.
    pub const VIOLATION: i32 = 2;
    pub const VALIDATION: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

/// A reported number: counts are kept apart from measured values so they
/// serialize without a fractional part.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Metric {
    Count(u64),
    Value(f64),
}

impl Metric {
    pub fn as_f64(self) -> f64 {
        match self {
            Metric::Count(n) => n as f64,
            Metric::Value(x) => x,
        }
    }
}

impl From<f64> for Metric {
    fn from(x: f64) -> Self {
        Metric::Value(x)
    }
}

impl From<usize> for Metric {
    fn from(n: usize) -> Self {
        Metric::Count(n as u64)
    }
}

impl From<u64> for Metric {
    fn from(n: u64) -> Self {
        Metric::Count(n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario_id: String,
    pub status: Status,
    pub metrics: BTreeMap<String, Metric>,
    pub narratives: Vec<String>,
    #[serde(skip)]
    exit_code: i32,
}

impl Report {
    pub fn new(scenario_id: impl Into<String>) -> Self {
        Report {
            scenario_id: scenario_id.into(),
            status: Status::Pass,
            metrics: BTreeMap::new(),
            narratives: Vec::new(),
            exit_code: exit::PASS,
        }
    }

    /// Report for a scenario that could not be evaluated.
    pub fn from_error(scenario_id: impl Into<String>, err: &Error) -> Self {
        let mut r = Report::new(scenario_id);
        match err.class() {
            ErrorClass::Physics => r.set_status(Status::Violation),
            ErrorClass::Validation => {
                r.status = Status::Error;
                r.exit_code = exit::VALIDATION;
            }
            ErrorClass::Numeric => {
                r.status = Status::Error;
                r.exit_code = exit::NUMERIC;
            }
        }
        r.narrate(err.to_string());
        r
    }

    /// Report for an unreadable or schema-invalid scenario file.
    pub fn invalid(scenario_id: impl Into<String>, problems: &[String]) -> Self {
        let mut r = Report::new(scenario_id);
        r.status = Status::Error;
        r.exit_code = exit::VALIDATION;
        r.narratives.extend(problems.iter().cloned());
        r
    }

    pub fn exit_code(&self) -> i32 {
        self.exit_code
    }

    pub fn set_status(&mut self, status: Status) {
        self.status = status;
        self.exit_code = match status {
            Status::Pass => exit::PASS,
            Status::Fail | Status::Violation => exit::VIOLATION,
            Status::Error => exit::VALIDATION,
        };
    }

    /// Lowers a passing report to `fail`; leaves worse statuses alone.
    pub fn fail_unless(&mut self, ok: bool, why: impl FnOnce() -> String) {
        if !ok {
            if self.status == Status::Pass {
                self.set_status(Status::Fail);
            }
            self.narrate(why());
        }
    }

    pub fn metric(&mut self, name: impl Into<String>, value: impl Into<Metric>) {
        self.metrics.insert(name.into(), value.into());
    }

    pub fn narrate(&mut self, line: impl Into<String>) {
        self.narratives.push(line.into());
    }

    /// Non-finite values cannot be written as JSON; they turn the report
    /// into a numeric error.
    pub(crate) fn check_finite(&mut self) {
        let bad: Vec<String> = self
            .metrics
            .iter()
            .filter(|(_, m)| !m.as_f64().is_finite())
            .map(|(k, _)| k.clone())
            .collect();
        if !bad.is_empty() {
            for k in &bad {
                self.metrics.remove(k);
            }
            self.status = Status::Error;
            self.exit_code = exit::NUMERIC;
            self.narrate(format!("non-finite metrics: {}", bad.join(", ")));
        }
    }

    pub fn to_json(&self) -> String {
        canonical_json(&serde_json::to_value(self).expect("reports serialize"))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario  {}", self.scenario_id);
        let _ = writeln!(out, "status    {}", self.status.as_str());
        if !self.metrics.is_empty() {
            let width = self
                .metrics
                .keys()
                .map(|k| k.chars().count())
                .max()
                .unwrap_or(0);
            out.push_str("metrics\n");
            for (k, m) in &self.metrics {
                let v = match m {
                    Metric::Count(n) => n.to_string(),
                    Metric::Value(x) => format_float(*x),
                };
                let pad = width - k.chars().count();
                let _ = writeln!(out, "  {k}{}  {v}", " ".repeat(pad));
            }
        }
        if !self.narratives.is_empty() {
            out.push_str("notes\n");
            for n in &self.narratives {
                let _ = writeln!(out, "  {n}");
            }
        }
        out
    }
}

/// Float text with 12 significant digits, in the style of C's `%.12g` but
/// always recognizably a float (`1.0`, not `1`).
pub fn format_float(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x.is_infinite() {
            if x > 0.0 {
                "inf".into()
            } else {
                "-inf".into()
            }
        } else {
            "0.0".into()
        };
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        let trimmed = if fixed.contains('.') {
            fixed.trim_end_matches('0')
        } else {
            &fixed
        };
        if trimmed.ends_with('.') {
            format!("{trimmed}0")
        } else if trimmed.contains('.') {
            trimmed.to_string()
        } else {
            format!("{trimmed}.0")
        }
    } else {
        let m = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{m}e{exp}")
    }
}

/// Pretty-printed JSON with sorted keys and [`format_float`] numbers.
pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v, 0);
    out.push('\n');
    out
}

fn write_value(out: &mut String, v: &Value, depth: usize) {
    let indent = |out: &mut String, d: usize| {
        for _ in 0..d {
            out.push_str("  ");
        }
    };
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_u64() {
                let _ = write!(out, "{i}");
            } else if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else {
                out.push_str(&format_float(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("strings serialize")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                indent(out, depth + 1);
                write_value(out, item, depth + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            indent(out, depth);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                indent(out, depth + 1);
                out.push_str(&serde_json::to_string(k).expect("strings serialize"));
                out.push_str(": ");
                write_value(out, &map[*k], depth + 1);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            indent(out, depth);
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting() {
        assert_eq!(format_float(0.5), "0.5");
        assert_eq!(format_float(1.0), "1.0");
        assert_eq!(format_float(-0.0), "0.0");
        assert_eq!(format_float(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_float(1e-10), "1e-10");
        assert_eq!(format_float(2.5e-16), "2.5e-16");
        assert_eq!(format_float(123456.0), "123456.0");
        assert_eq!(format_float(1e12), "1e12");
        assert_eq!(format_float(0.0001), "0.0001");
        assert_eq!(format_float(-3.25e-7), "-3.25e-7");
    }

    #[test]
    fn json_round_trips() {
        let mut r = Report::new("demo");
        r.metric("half", 0.5);
        r.metric("third", 1.0 / 3.0);
        r.metric("tiny", 1.234567890123456e-13);
        r.metric("count", 7usize);
        r.narrate("a \"quoted\" note");
        let first = r.to_json();
        let parsed: Value = serde_json::from_str(&first).unwrap();
        assert_eq!(canonical_json(&parsed), first);
        let back: Report = serde_json::from_str(&first).unwrap();
        assert_eq!(back.to_json(), first);
        assert!(first.contains("\"count\": 7,"));
    }

    #[test]
    fn errors_map_to_exit_codes() {
        let v = Report::from_error("x", &Error::Validation("bad".into()));
        assert_eq!((v.status, v.exit_code()), (Status::Error, exit::VALIDATION));
        let c = Report::from_error(
            "x",
            &Error::Capacity {
                what: "dim",
                requested: 10,
                limit: 5,
            },
        );
        assert_eq!(c.exit_code(), exit::NUMERIC);
        let p = Report::from_error(
            "x",
            &Error::Inconsistent {
                max_off_diagonal: 0.1,
            },
        );
        assert_eq!(
            (p.status, p.exit_code()),
            (Status::Violation, exit::VIOLATION)
        );
    }

    #[test]
    fn non_finite_metrics_become_numeric_errors() {
        let mut r = Report::new("x");
        r.metric("bad", f64::NAN);
        r.check_finite();
        assert_eq!(r.exit_code(), exit::NUMERIC);
        assert!(r.metrics.is_empty());
    }

    #[test]
    fn text_is_aligned() {
        let mut r = Report::new("demo");
        r.metric("a", 1.0);
        r.metric("longer", 2usize);
        let text = r.to_text();
        assert!(text.contains("  a       1.0\n"));
        assert!(text.contains("  longer  2\n"));
    }
}
