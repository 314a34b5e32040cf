//! Labeled desk-scale data: generated programs, injected logical errors
//! with span/category ground truth, and simulated student histories.

pub mod build;
pub mod interp;
pub mod mutate;
pub mod students;
pub mod templates;

pub use build::{build_corpus, default_k_probs, CorpusConfig, CorpusError};
pub use interp::{run_method, Outcome, RuntimeError, Value};
pub use mutate::{mutate, operators_in, MutateError, MutationOperator, OPERATOR_CATALOG};
pub use students::{simulate_students, GradeRecord, StudentSimConfig, StudentTrace, TraceEvent};
pub use templates::{instantiate, template_for_problem, Template, TemplateInstance, TEMPLATES};

use serde::{Deserialize, Serialize};

use crate::localize::ErrorLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Where a generated program came from; not part of the corpus file
/// schema, everything needed to regenerate it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Provenance {
    pub template: String,
    pub instance_seed: u64,
    pub operators: Vec<String>,
    pub mutation_seed: Option<u64>,
}

/// One corpus entry. `label` 1 means correct; incorrect programs carry
/// their injected error spans, which always land on AST node boundaries
/// of `source`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledProgram {
    pub id: String,
    pub problem_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub student_id: Option<String>,
    pub source: String,
    pub label: u8,
    pub errors: Vec<ErrorLabel>,
    pub split: Split,
    #[serde(skip, default)]
    pub provenance: Provenance,
}

impl LabeledProgram {
    /// label=0 exactly when error labels are present.
    pub fn check_label_invariant(&self) -> bool {
        (self.label == 0) == !self.errors.is_empty()
    }
}

/// One JSON object per line, in input order.
pub fn to_jsonl(programs: &[LabeledProgram]) -> String {
    let mut out = String::new();
    for p in programs {
        out.push_str(&serde_json::to_string(p).expect("corpus serialization cannot fail"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl(text: &str) -> Result<Vec<LabeledProgram>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
