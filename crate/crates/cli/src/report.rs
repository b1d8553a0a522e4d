//! Run reports and exit codes.

use std::fmt::Display;

use lurye_core::construct::ConstructError;
use lurye_core::io::IoError;
use lurye_core::{InterpError, LtiError, PlantFile};
use serde::Serialize;
use serde_json::Value;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID_INPUT: i32 = 2;
pub const EXIT_NO_FEASIBLE_PAIR: i32 = 3;
pub const EXIT_PHASE_FAILED: i32 = 4;
pub const EXIT_NO_INTERSECTION: i32 = 5;
pub const EXIT_VERIFY_FAILED: i32 = 6;

/// One JSON document per invocation.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub toolkit: &'static str,
    pub version: &'static str,
    pub timestamp: String,
    pub command: &'static str,
    pub plant: Option<PlantFile>,
    pub params: Value,
    pub status: &'static str,
    pub exit_code: i32,
    pub results: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunReport {
    pub fn new(command: &'static str, params: Value) -> Self {
        RunReport {
            toolkit: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            timestamp: chrono::Utc::now().to_rfc3339(),
            command,
            plant: None,
            params,
            status: "ok",
            exit_code: EXIT_OK,
            results: Value::Null,
            error: None,
        }
    }

    pub fn fail(&mut self, failure: Failure) {
        self.status = "error";
        self.exit_code = failure.code;
        self.error = Some(failure.message);
        if let Some(results) = failure.results {
            self.results = results;
        }
    }
}

/// A failed command: exit code, message, and any partial results.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
    pub results: Option<Value>,
}

impl Failure {
    pub fn new(code: i32, message: impl Display) -> Self {
        Failure {
            code,
            message: message.to_string(),
            results: None,
        }
    }

    pub fn input(message: impl Display) -> Self {
        Failure::new(EXIT_INVALID_INPUT, message)
    }

    pub fn with_results(mut self, results: Value) -> Self {
        self.results = Some(results);
        self
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::input(e)
    }
}

impl From<LtiError> for Failure {
    fn from(e: LtiError) -> Self {
        Failure::input(e)
    }
}

impl From<ConstructError> for Failure {
    fn from(e: ConstructError) -> Self {
        let code = match &e {
            ConstructError::PhaseConditionFailed { .. } => EXIT_PHASE_FAILED,
            ConstructError::Interp(InterpError::NoIntersection { .. }) => EXIT_NO_INTERSECTION,
            ConstructError::Interp(InterpError::InvalidSlope(_))
            | ConstructError::Lti(_)
            | ConstructError::Phase(_) => {
                EXIT_INVALID_INPUT
            }
            _ => EXIT_VERIFY_FAILED,
        };
        let results = match &e {
            ConstructError::PhaseConditionFailed { check } => Some(serde_json::json!({ "phase": check })),
            ConstructError::SelfVerifyFailed { verdict, .. } => Some(serde_json::json!({ "verdict": verdict })),
            _ => None,
        };
        Failure {
            code,
            message: e.to_string(),
            results,
        }
    }
}

pub fn to_value<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("report values serialize")
}
