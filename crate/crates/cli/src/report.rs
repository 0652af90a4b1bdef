use briot::classifier::GrowthReport;
use briot::field::ConditionReport;
use briot::solution::Diagnostics;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub problem: String,
    pub spec_summary: String,
    pub lambda00: Option<[f64; 2]>,
    pub conditions: Option<ConditionReport>,
    pub tasks: Vec<TaskReport>,
    pub elapsed_ms: u128,
}

#[derive(Debug, Default, Serialize)]
pub struct TaskReport {
    pub id: String,
    pub kind: String,
    pub status: String,
    pub exit_code: i32,
    pub files: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_sup: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovered_psi: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi_round_trip_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit_error_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub elapsed_ms: u128,
}
