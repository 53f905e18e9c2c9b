//! Report documents.

use serde::Serialize;

use crate::config::ExperimentConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Violated,
    Infeasible,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Violated => 1,
            Status::Infeasible => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Artifact {
    pub name: &'static str,
    pub version: &'static str,
}

impl Default for Artifact {
    fn default() -> Self {
        Self { name: "polymorph", version: env!("CARGO_PKG_VERSION") }
    }
}

/// One asserted identity with its worst residual.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub residual: String,
    pub tolerance: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Series {
    pub name: String,
    #[serde(skip)]
    pub csv: String,
    /// Location relative to the output directory.
    pub path: String,
}

impl Series {
    pub fn new(name: &str, csv: String) -> Self {
        Self { name: name.into(), path: format!("series/{name}.csv"), csv }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportDocument {
    pub artifact: Artifact,
    pub config: ExperimentConfig,
    pub status: Status,
    pub checks: Vec<Check>,
    pub results: serde_json::Value,
    pub series: Vec<Series>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

impl ReportDocument {
    pub fn failing_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
