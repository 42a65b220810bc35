//! Verifier for SELinux CIL configurations annotated with information-flow
//! requirements.
//!
//! The crate parses the type-enforcement fragment of CIL together with
//! `;IFL;` annotation islands, rewrites the configuration into a normal form
//! (inheritance expanded, macro calls resolved, names fully qualified,
//! requirement refinements folded in via meets), builds the graph semantics
//! and the derived information flow diagram, and decides every requirement,
//! reporting satisfied/violated per label.
//!
//! The main entry points are [`parser::parse_config`],
//! [`normalize::normalize`], [`graph::build_graph`] / [`graph::build_ifd`],
//! [`verify::check`] and [`nusmv::emit`]; the `ifcil` binary wires them
//! together behind a command line.

pub mod name;
pub mod model;
pub mod parser;
pub mod resolve;
pub mod ifl;
pub mod refine;
pub mod normalize;
pub mod flow;
pub mod graph;
pub mod kts;
pub mod verify;
pub mod oracle;
pub mod ltl;
pub mod nusmv;
pub mod cli;

pub use model::{LocatedRule, Rule, RuleSet};
pub use name::QualifiedName;
