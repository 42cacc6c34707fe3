//! Column-to-attribute schema matching with prompt compression.
//!
//! A run partitions the columns of an input table by object type, maps each
//! column to a target attribute through a shortlist of options and exemplars
//! (narrowed by entity label and by similarity), and nominates record keys.
//! The matcher is either a deterministic similarity scorer or a remote
//! completion endpoint.

pub mod detect;
pub mod eval;
pub mod exec;
pub mod filters;
pub mod ingest;
pub mod matcher;
pub mod ner;
pub mod pipeline;
pub mod prompt;
pub mod schema;
pub mod session;
pub mod similarity;

pub use filters::{ColumnQuery, CompressedChoices, ExampleDatabase, FilterConfig, OptionDatabase};
pub use matcher::{BackendConfig, BackendError, MatcherBackend};
pub use ner::{EntityLabel, Labeler};
pub use pipeline::{Pipeline, PipelineConfig, PipelineError};
pub use schema::{DataType, MappingResult, ObjectType, Provenance, SourceColumn, TargetAttribute};
pub use session::{FinalDocument, MappingSession, SessionStore};
pub use similarity::{SimilarityMeasure, WordVectorTable};
