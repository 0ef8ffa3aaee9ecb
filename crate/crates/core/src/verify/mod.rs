//! Self-checks shipped with the library: finite-difference gradient checks,
//! brute-force oracles, and exact round trips.
//!
//! Every check is deterministic (fixed seeds) and reports a measured value next to
//! its threshold, so a failure says by how much it failed.

mod gradcheck;
mod oracle;
mod roundtrip;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{invalid, Error, Result};

pub use gradcheck::{
    end_to_end_checks, end_to_end_checks_seeded, primitive_checks, relative_error, GRADCHECK_STEP, GRADCHECK_TOLERANCE,
};
pub use oracle::{conv_oracle_check, degeneracy_check, metric_checks, reference_dgridconv, schedule_checks};
pub use roundtrip::{
    artifact_round_trips, handcrafted_layout_check, replica_mean_check, reprojection_check, sgt_round_trip_check,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Gradcheck,
    Oracle,
    Roundtrip,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradcheck" => Ok(Suite::Gradcheck),
            "oracle" => Ok(Suite::Oracle),
            "roundtrip" => Ok(Suite::Roundtrip),
            "all" => Ok(Suite::All),
            other => Err(invalid!(
                "unknown suite {other:?}; expected gradcheck, oracle, roundtrip or all"
            )),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Gradcheck => "gradcheck",
            Suite::Oracle => "oracle",
            Suite::Roundtrip => "roundtrip",
            Suite::All => "all",
        })
    }
}

/// Outcome of one named check: `value` is compared against `threshold` (`value <= threshold` passes).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckResult {
    pub fn measured(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= threshold,
            value,
            threshold,
            detail: String::new(),
        }
    }

    /// A yes/no check; `value` is 0 on success and 1 on failure.
    pub fn boolean(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: ok,
            value: if ok { 0.0 } else { 1.0 },
            threshold: 0.0,
            detail: detail.into(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "{verdict} {:<48} {:.3e} (limit {:.1e})",
            self.name, self.value, self.threshold
        )?;
        if !self.detail.is_empty() {
            write!(f, "  {}", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SuiteReport {
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&CheckResult> {
        self.checks.iter().find(|c| !c.passed)
    }
}

/// Runs every check of `suite`. Errors from the library itself become failed checks.
pub fn run_suite(suite: Suite) -> SuiteReport {
    let mut checks = Vec::new();
    let mut add = |name: &str, r: Result<Vec<CheckResult>>| match r {
        Ok(v) => checks.extend(v),
        Err(e) => checks.push(CheckResult::boolean(name, false, e.to_string())),
    };
    if matches!(suite, Suite::Gradcheck | Suite::All) {
        add("gradcheck.primitives", primitive_checks());
        add("gradcheck.end_to_end", end_to_end_checks());
    }
    if matches!(suite, Suite::Oracle | Suite::All) {
        add("oracle.conv", conv_oracle_check(200, 11).map(|c| vec![c]));
        add("oracle.degeneracy", degeneracy_check(100, 12).map(|c| vec![c]));
        add("oracle.metrics", metric_checks());
        add("oracle.schedule", Ok(schedule_checks()));
    }
    if matches!(suite, Suite::Roundtrip | Suite::All) {
        add("roundtrip.sgt", sgt_round_trip_check(1000, 13).map(|c| vec![c]));
        add("roundtrip.replica_mean", replica_mean_check().map(|c| vec![c]));
        add("roundtrip.handcrafted", handcrafted_layout_check().map(|c| vec![c]));
        add("roundtrip.artifacts", artifact_round_trips());
    }
    SuiteReport { checks }
}
