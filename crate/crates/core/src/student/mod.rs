//! Student models on top of frozen code vectors: next-attempt knowledge
//! tracing (plain and code-vector-augmented DKT) and final-grade
//! regression, with their evaluation metrics.

pub mod dkt;
pub mod grade;
pub mod metrics;

pub use dkt::{dkt_train, encode_dkt_step, DktConfig, DktModel, DktTrace};
pub use grade::{assemble_grade_features, grade_train, GradeConfig, GradeModel};
pub use metrics::{auc, regression_metrics, rmse};

use thiserror::Error;

use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum StudentError {
    #[error("trace for {student} has fewer than 2 events")]
    TraceTooShort { student: String },
    #[error("students appear in more than one split: {0:?}")]
    SplitViolation(Vec<String>),
    #[error("both outcome classes are required to compute AUC")]
    SingleClassSet,
    #[error("truth values have zero variance; R² is undefined (report RMSE only)")]
    ZeroVarianceTruth,
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Student-disjointness guard for split handling.
pub fn check_student_disjoint(a: &[String], b: &[String]) -> Result<(), StudentError> {
    let set: std::collections::BTreeSet<&String> = a.iter().collect();
    let dupes: Vec<String> = b.iter().filter(|s| set.contains(s)).cloned().collect();
    if dupes.is_empty() {
        Ok(())
    } else {
        Err(StudentError::SplitViolation(dupes))
    }
}
