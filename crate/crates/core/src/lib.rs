//! Core engine for rewriting function-bearing mapping rules into
//! function-free ones.
//!
//! A data integration system is a set of logical sources plus mapping rules
//! (optionally calling declared transformation functions) that together
//! describe a knowledge graph. This crate parses such rule sets, rewrites
//! them so that every function is materialized exactly once over the
//! deduplicated projection of its input attributes, and provides a reference
//! materializer able to evaluate both the original and the rewritten system,
//! proving that both produce the identical triple set.
//!
//! The crate is `no_std` (with `alloc`); everything here is pure
//! computation over in-memory text and tables. File, database, and
//! command-line plumbing live in the companion `fnpush` crate.

#![no_std]

extern crate alloc;

pub mod iri;
pub mod materialize;
pub mod model;
pub mod parse;
pub mod registry;
pub mod relation;
pub mod rewrite;
pub mod serialize;
pub mod testbed;

pub use iri::Iri;
pub use materialize::{materialize, TripleSet};
pub use model::{validate_document, Diagnostic, MappingDocument};
pub use parse::{parse_mapping_document, ParseError};
pub use registry::FunctionRegistry;
pub use relation::{Relation, SourceSet};
pub use rewrite::{rewrite_system, RewriteMode, RewriteOutcome, RewriteReport};
pub use serialize::serialize_mapping_document;
