//! Environment repair for Python snippets.
//!
//! Given a snippet that fails for want of the right interpreter and third-party packages, infer
//! what it needs, pin versions against the package index, build and run each candidate in a
//! container, classify the failure, edit the candidate, and repeat until it runs.

pub mod bench;
pub mod candidate;
pub mod cli;
pub mod dockerfile;
pub mod interpreter;
pub mod llm;
pub mod registry;
pub mod repair;
pub mod source;
pub mod triage;
pub mod validator;
pub mod version;

pub use candidate::{CandidateBuilder, EnvironmentCandidate, ModuleRequirement};
pub use dockerfile::{emit, BuildRecipe};
pub use interpreter::InterpreterVersion;
pub use llm::{Gateway, GenerationConfig};
pub use registry::Retriever;
pub use repair::{AttemptHistory, LoopConfig, RepairResult, RepairStatus, Repairer};
pub use source::{NameMapping, SourceFile};
pub use triage::{classify, ErrorClass, TriageReport};
pub use validator::{BuildOutcome, SimulatedValidator, ValidatorBackend, World};
