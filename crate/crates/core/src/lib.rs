//! A deductive-database engine for Datalog with stratified negation.
//!
//! - [`parser`] and [`syntax`]: the program text format and its AST.
//! - [`stratify`]: dependency graph, SCCs and stage order.
//! - [`eval`]: semi-naive bottom-up evaluation of the staged semantics.
//! - [`magic`]: query-directed Magic Sets rewriting that never merges
//!   components of the dependency graph, plus the full-free unrolling pass.
//! - [`dl`]: compilation of DLP knowledge bases and conjunctive queries.

pub mod dl;
pub mod error;
pub mod eval;
pub mod magic;
pub mod parser;
pub mod stratify;
pub mod syntax;

pub use error::{Error, KbError, ParseError, Result};
pub use eval::{answer_query, evaluate, evaluate_model, EvalOptions, Model};
pub use magic::{full_free, magic_sets, SipsStrategy};
pub use parser::{parse_atom, parse_program};
pub use syntax::{Atom, Interpretation, Literal, Program, Rule, Substitution, Term};
