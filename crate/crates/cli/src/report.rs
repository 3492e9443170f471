//! Named checks, the summary table and the JSON report.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    /// Passes when value ≤ threshold.
    pub fn at_most(name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Check {
        Check { name: name.into(), passed: value <= threshold, value, threshold, detail: detail.into() }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Check {
        Check { name: name.into(), passed: value >= threshold, value, threshold, detail: detail.into() }
    }

    pub fn holds(name: &str, ok: bool, detail: impl Into<String>) -> Check {
        Check { name: name.into(), passed: ok, value: f64::from(u8::from(ok)), threshold: 1.0, detail: detail.into() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema: u32,
    pub command: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_seconds: Option<f64>,
}

impl Report {
    pub fn new(command: &str, checks: Vec<Check>) -> Report {
        Report { schema: 1, command: command.into(), passed: checks.iter().all(|c| c.passed), checks, runtime_seconds: None }
    }

    pub fn failing(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}

/// JSON cannot hold ±∞ or NaN; they are written as strings by a pre-pass.
pub fn to_json(report: &Report) -> String {
    let mut v = serde_json::to_value(report).expect("report serializes");
    if let Some(checks) = v.get_mut("checks").and_then(|c| c.as_array_mut()) {
        for (c, src) in checks.iter_mut().zip(&report.checks) {
            for (key, x) in [("value", src.value), ("threshold", src.threshold)] {
                if !x.is_finite() {
                    c[key] = serde_json::Value::String(x.to_string());
                }
            }
        }
    }
    serde_json::to_string_pretty(&v).expect("json") + "\n"
}

pub fn print_table(checks: &[Check]) {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(4).max(5);
    println!("{:<width$}  {:>12}  {:>12}  result", "check", "value", "threshold");
    for c in checks {
        println!(
            "{:<width$}  {:>12.4e}  {:>12.4e}  {}{}",
            c.name,
            c.value,
            c.threshold,
            if c.passed { "pass" } else { "FAIL" },
            if c.detail.is_empty() { String::new() } else { format!("  ({})", c.detail) }
        );
    }
}
