//! Enrollment, closed-set identification and evaluation reports.

mod protocol;
mod registry;
mod report;
mod store;

pub use protocol::{enroll_manifest, load_test_items, load_utterance, EnrolledModel};
pub use registry::{
    decide, EnrollConfig, EnrollSummary, Identification, ModelBundle, SpeakerRegistry, SpeakerScore,
};
pub use report::{evaluate, ConditionResult, EvaluationReport, GenderResult, ModelKind, ModelResult, TestItem};
pub use store::{bundle_file_name, load_registry, save_registry};
