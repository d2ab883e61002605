use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A 1-based source position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Position {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("{position}: {kind}")]
pub struct ParseError {
    pub position: Position,
    pub kind: ParseErrorKind,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("predicate `{predicate}` used with arity {found}, previously {expected}")]
    ArityMismatch {
        predicate: String,
        expected: usize,
        found: usize,
    },
    #[error("unsafe rule `{rule}`: variable(s) {} not bound by a positive body literal", .variables.join(", "))]
    UnsafeRule {
        rule: String,
        variables: Vec<String>,
    },
    #[error("name `{0}` uses the reserved prefix `m#`")]
    ReservedName(String),
    #[error("disequality is only allowed in constraint rules (head `inconsistent`)")]
    DisequalityOutsideConstraint,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("program is not stratified: `{from}` depends negatively on `{to}` inside a recursive component")]
    NotStratified { from: String, to: String },
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("predicate `{predicate}` has arity {expected}, query uses {found}")]
    ArityMismatch {
        predicate: String,
        expected: usize,
        found: usize,
    },
    #[error("adornment `{adornment}` does not fit atom `{atom}`")]
    AdornmentLength { atom: String, adornment: String },
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error("knowledge base is inconsistent")]
    Inconsistent,
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    /// True for conditions caused by the input rather than by this library.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Internal(_))
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum KbError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: `{name}` is used both as a {first} and as a {second}")]
    NameClass {
        line: usize,
        name: String,
        first: &'static str,
        second: &'static str,
    },
    #[error("names `{first}` and `{second}` both translate to predicate `{predicate}`")]
    NameCollision {
        first: String,
        second: String,
        predicate: String,
    },
    #[error("`{0}` is reserved and cannot name a concept or role")]
    ReservedName(String),
    #[error(
        "existential restrictions on the right-hand side are not expressible in plain Datalog \
         (outside the DLP profile); use a Horn-SHIQ rewriter for: {}",
        .0.join("; ")
    )]
    ExistentialHeadUnsupported(Vec<String>),
    #[error("unsafe query: answer variable(s) {} do not occur in the body", .0.join(", "))]
    UnsafeQuery(Vec<String>),
    #[error("no query given")]
    MissingQuery,
}
