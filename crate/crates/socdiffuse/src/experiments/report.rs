//! Run reports: named checks with measured values and thresholds.

use std::time::Duration;

use serde::{Deserialize, Serialize};

/// One verified invariant. `measured` and `threshold` are always recorded so
/// a failing report explains itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    /// Comparison applied, e.g. `"<"` or `"|x - 1| <"`.
    pub comparison: String,
    pub passed: bool,
}

impl CheckResult {
    /// `measured < threshold`
    pub fn less_than(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold,
            comparison: "<".into(),
            passed: measured < threshold,
        }
    }

    /// `|measured - target| <= tolerance`; measured is stored as the deviation.
    pub fn within(name: impl Into<String>, measured: f64, target: f64, tolerance: f64) -> Self {
        let deviation = (measured - target).abs();
        Self {
            name: name.into(),
            measured: deviation,
            threshold: tolerance,
            comparison: format!("|x - {target}| <="),
            passed: deviation <= tolerance,
        }
    }

    /// Boolean predicate recorded as 1/0 against a threshold of 1.
    pub fn holds(name: impl Into<String>, passed: bool) -> Self {
        Self {
            name: name.into(),
            measured: if passed { 1.0 } else { 0.0 },
            threshold: 1.0,
            comparison: "==".into(),
            passed,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{}: {} (measured {:.6e} {} {:.6e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.comparison,
            self.threshold
        )
    }
}

/// Per-seed terminal costs of a sampling run, with the uncontrolled baseline
/// when one was computed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedCost {
    pub seed: u64,
    pub terminal_cost: f64,
    pub baseline_cost: Option<f64>,
}

/// Everything a run produced. The wall clock is reported on the console but
/// excluded from the serialized artifact so reruns stay byte-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: String,
    pub config_echo: String,
    pub checks: Vec<CheckResult>,
    pub seed_costs: Vec<SeedCost>,
    pub artifacts: Vec<String>,
    #[serde(skip)]
    pub wall_clock: Duration,
}

impl RunReport {
    pub fn new(experiment: impl Into<String>, config_echo: String) -> Self {
        Self {
            experiment: experiment.into(),
            config_echo,
            checks: Vec::new(),
            seed_costs: Vec::new(),
            artifacts: Vec::new(),
            wall_clock: Duration::ZERO,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail") + "\n"
    }

    /// Console summary: one line per check plus totals.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for check in &self.checks {
            out.push_str(&check.line());
            out.push('\n');
        }
        let passed = self.checks.iter().filter(|c| c.passed).count();
        out.push_str(&format!(
            "{}: {passed}/{} checks passed in {:.2}s\n",
            self.experiment,
            self.checks.len(),
            self.wall_clock.as_secs_f64()
        ));
        out
    }
}
