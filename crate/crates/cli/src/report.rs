//! Run reports: one JSON document per command, exit code derived from its contents.

use rsgame_core::ergodic::GateReport;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Unreadable or malformed input, or an invalid parameter.
    Input,
    /// Lyapunov or small-cost gate failed.
    Gate,
    /// A solver did not converge or missed its own accuracy target.
    NoConvergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    InputError,
    GateFailure,
    NoConvergence,
    VerificationFailure,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::InputError => 1,
            Status::GateFailure => 2,
            Status::NoConvergence => 3,
            Status::VerificationFailure => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunError {
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    /// `value <= tolerance`.
    #[serde(rename = "<=")]
    AtMost,
    /// `value >= tolerance`.
    #[serde(rename = ">=")]
    AtLeast,
    /// `|value| <= tolerance`, `value` a z-score.
    #[serde(rename = "|z|<=")]
    WithinSigmas,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    Skipped,
}

/// One numeric check with the tolerance it was held to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: Option<f64>,
    pub relation: Relation,
    pub tolerance: f64,
    pub outcome: Outcome,
    /// Failed required checks set exit code 4; other checks are diagnostics.
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    pub fn new(name: &str, value: f64, relation: Relation, tolerance: f64, required: bool) -> Self {
        let ok = match relation {
            Relation::AtMost => value <= tolerance,
            Relation::AtLeast => value >= tolerance,
            Relation::WithinSigmas => value.abs() <= tolerance,
        };
        Self {
            name: name.into(),
            value: Some(value),
            relation,
            tolerance,
            outcome: if ok { Outcome::Pass } else { Outcome::Fail },
            required,
            detail: None,
        }
    }

    pub fn failed(name: &str, relation: Relation, tolerance: f64, required: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            value: None,
            relation,
            tolerance,
            outcome: Outcome::Fail,
            required,
            detail: Some(detail),
        }
    }

    pub fn skipped(name: &str, relation: Relation, tolerance: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            value: None,
            relation,
            tolerance,
            outcome: Outcome::Skipped,
            required: false,
            detail: Some(detail),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.outcome != Outcome::Fail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandEcho {
    pub name: String,
    /// Every option after defaults were applied.
    pub options: Value,
    /// Argument vector that reruns the command with the same options.
    pub argv: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub tool_version: String,
    pub command: CommandEcho,
    pub model_sha256: Option<String>,
    pub seed: Option<u64>,
    pub status: Status,
    pub exit_code: i32,
    pub error: Option<RunError>,
    pub gates: Option<GateReport>,
    pub results: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
    /// Wall-clock seconds per phase; the only field that varies between identical runs.
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn new(command: CommandEcho) -> Self {
        Self {
            schema: REPORT_SCHEMA,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command,
            model_sha256: None,
            seed: None,
            status: Status::Ok,
            exit_code: 0,
            error: None,
            gates: None,
            results: BTreeMap::new(),
            checks: Vec::new(),
            timings: BTreeMap::new(),
        }
    }

    pub fn put(&mut self, key: &str, value: impl Serialize) {
        self.results
            .insert(key.into(), serde_json::to_value(value).expect("serializable"));
    }

    pub fn check(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn fail(&mut self, kind: ErrorKind, message: impl ToString) {
        self.error = Some(RunError {
            kind,
            message: message.to_string(),
        });
    }

    /// Recomputes `status` and `exit_code` from `error` and `checks`.
    pub fn finalize(&mut self) {
        self.status = status_of(self.error.as_ref(), &self.checks);
        self.exit_code = self.status.exit_code();
    }

    /// The report without wall-clock timings, for reproducibility comparisons.
    pub fn numeric_view(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("serializable");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("timings");
        }
        v
    }
}

pub fn status_of(error: Option<&RunError>, checks: &[Check]) -> Status {
    match error.map(|e| e.kind) {
        Some(ErrorKind::Input) => Status::InputError,
        Some(ErrorKind::Gate) => Status::GateFailure,
        Some(ErrorKind::NoConvergence) => Status::NoConvergence,
        None if checks.iter().any(|c| c.required && !c.passed()) => Status::VerificationFailure,
        None => Status::Ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn echo() -> CommandEcho {
        CommandEcho {
            name: "t".into(),
            options: Value::Null,
            argv: vec![],
        }
    }

    #[test]
    fn exit_code_follows_contents() {
        let mut r = RunReport::new(echo());
        r.check(Check::new("diag", 2.0, Relation::AtMost, 1.0, false));
        r.finalize();
        assert_eq!(r.exit_code, 0);
        r.check(Check::new("req", 2.0, Relation::AtMost, 1.0, true));
        r.finalize();
        assert_eq!(r.exit_code, 4);
        r.fail(ErrorKind::Gate, "gate");
        r.finalize();
        assert_eq!(r.exit_code, 2);
    }

    #[test]
    fn relations() {
        assert!(Check::new("a", -1.0, Relation::AtLeast, -1.0, true).passed());
        assert!(!Check::new("a", -3.5, Relation::WithinSigmas, 3.0, true).passed());
        assert!(!Check::new("a", f64::NAN, Relation::AtMost, 3.0, true).passed());
    }
}
