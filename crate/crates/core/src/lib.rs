//! Core of a narrative-reasoning engine built around an activity-centered
//! story model: sentences in a constrained pidgin language execute against a
//! working set (the focus), demoted components form an episodic memory, and
//! shadows of remembered episodes drive analogical prediction, surprise and
//! inference.
//!
//! Module map:
//! - [`knowledge`]: concepts, overlaps, overlays and the lexicon
//! - [`parser`]: the pidgin tokenizer and AST
//! - [`engine`]: instances, verb instances, scenes, focus dynamics
//! - [`identity`]: somatic / fictional / view identity links
//! - [`shadows`]: episodic memory, shadow dynamics, headless shadows
//! - [`snapshot`]: name-based JSON persistence of the long-term state
//! - [`config`], [`ids`], [`trace`]: parameters, id newtypes, run traces

pub mod config;
pub mod engine;
pub mod identity;
pub mod ids;
pub mod knowledge;
pub mod parser;
pub mod shadows;
pub mod snapshot;
pub mod trace;

pub use config::{ConfigError, Params};
pub use engine::{Agent, EffectReport, EngineError, Instance, ObjectRef, Scene, SubjectRef, Vi, ViKind};
pub use identity::{IdentityGraph, IdentityKind, IdentityLink, Provenance};
pub use ids::{ComponentId, InstanceId, SceneId, ViId};
pub use knowledge::{Concept, ConceptId, ConceptKind, KnowledgeBase, KnowledgeError, OverlapAmount, Overlay};
pub use parser::{parse_story, pretty_print, ParseError, SentenceAst, SentenceKind};
pub use shadows::{HeadlessShadow, MemInstance, MemVi, MemoryStore, ShadowError, ShadowState};
pub use snapshot::{load_json, save_json, Snapshot, SnapshotError};
pub use trace::TraceRecord;
