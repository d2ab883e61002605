//! Text format for programs.
//!
//! ```text
//! % comment
//! dep(X,Y) :- require(X,Z), dep(Z,Y).
//! par(X,Y) :- job(X), job(Y), not dep(X,Y), not dep(Y,X).
//! job(a).
//! m#dep#ff.
//! ```
//!
//! Predicates and constants start with a lowercase letter (constants may
//! also start with a digit), variables with an uppercase letter. Predicate
//! names may contain `#` and `*`. Names beginning with `m#` are reserved for
//! the rewriter unless [`ParseOptions::allow_reserved`] is set.

use std::collections::BTreeMap;

use crate::error::{ParseError, ParseErrorKind, Position};
use crate::syntax::{Atom, Literal, Program, Rule, Term, INCONSISTENT, MAGIC_PREFIX};

#[derive(Clone, Copy, Debug, Default)]
pub struct ParseOptions {
    /// Accept `m#...` predicate names (used when reading rewritten programs).
    pub allow_reserved: bool,
}

pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    parse_program_with(text, ParseOptions::default())
}

pub fn parse_program_with(text: &str, options: ParseOptions) -> Result<Program, ParseError> {
    let mut p = Parser::new(text, options);
    let mut rules = Vec::new();
    let mut arities: BTreeMap<String, usize> = BTreeMap::new();
    loop {
        p.skip_trivia();
        if p.at_end() {
            break;
        }
        let start = p.position();
        let rule = p.rule()?;
        check_rule(&rule, start, &mut arities)?;
        rules.push(rule);
    }
    Ok(Program::new(rules))
}

/// Parses a single atom such as `par(a,Y)`; a trailing `.` is optional.
pub fn parse_atom(text: &str) -> Result<Atom, ParseError> {
    parse_atom_with(text, ParseOptions::default())
}

pub fn parse_atom_with(text: &str, options: ParseOptions) -> Result<Atom, ParseError> {
    let mut p = Parser::new(text, options);
    p.skip_trivia();
    let atom = p.atom()?;
    p.skip_trivia();
    if p.peek() == Some('.') {
        p.bump();
        p.skip_trivia();
    }
    if !p.at_end() {
        return Err(p.syntax("unexpected input after atom"));
    }
    Ok(atom)
}

fn check_rule(
    rule: &Rule,
    at: Position,
    arities: &mut BTreeMap<String, usize>,
) -> Result<(), ParseError> {
    let err = |kind| ParseError { position: at, kind };
    for a in std::iter::once(&rule.head).chain(rule.body.iter().filter_map(Literal::atom)) {
        match arities.get(&a.predicate) {
            Some(&k) if k != a.arity() => {
                return Err(err(ParseErrorKind::ArityMismatch {
                    predicate: a.predicate.clone(),
                    expected: k,
                    found: a.arity(),
                }))
            }
            Some(_) => {}
            None => {
                arities.insert(a.predicate.clone(), a.arity());
            }
        }
    }
    let has_neq = rule.body.iter().any(|l| matches!(l, Literal::NotEqual(..)));
    if has_neq && !(rule.head.predicate == INCONSISTENT && rule.head.args.is_empty()) {
        return Err(err(ParseErrorKind::DisequalityOutsideConstraint));
    }
    let unbound = rule.unsafe_variables();
    if !unbound.is_empty() {
        return Err(err(ParseErrorKind::UnsafeRule {
            rule: rule.to_string(),
            variables: unbound.into_iter().map(str::to_owned).collect(),
        }));
    }
    Ok(())
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '#' || c == '*'
}

struct Parser<'a> {
    src: &'a str,
    offset: usize,
    line: usize,
    column: usize,
    options: ParseOptions,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, options: ParseOptions) -> Self {
        Parser {
            src,
            offset: 0,
            line: 1,
            column: 1,
            options,
        }
    }

    fn position(&self) -> Position {
        Position {
            line: self.line,
            column: self.column,
        }
    }

    fn syntax(&self, msg: impl Into<String>) -> ParseError {
        ParseError {
            position: self.position(),
            kind: ParseErrorKind::Syntax(msg.into()),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.offset..]
    }

    fn at_end(&self) -> bool {
        self.offset >= self.src.len()
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.offset += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '%' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_trivia();
        if self.rest().starts_with(token) {
            for _ in token.chars() {
                self.bump();
            }
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), ParseError> {
        if self.eat(token) {
            Ok(())
        } else {
            let found = self
                .peek()
                .map_or_else(|| "end of input".to_owned(), |c| format!("`{c}`"));
            Err(self.syntax(format!("expected `{token}`, found {found}")))
        }
    }

    fn name(&mut self) -> Result<(Position, &'a str), ParseError> {
        self.skip_trivia();
        let at = self.position();
        let start = self.offset;
        while self.peek().is_some_and(is_name_char) {
            self.bump();
        }
        if start == self.offset {
            let found = self
                .peek()
                .map_or_else(|| "end of input".to_owned(), |c| format!("`{c}`"));
            return Err(self.syntax(format!("expected a name, found {found}")));
        }
        Ok((at, &self.src[start..self.offset]))
    }

    fn rule(&mut self) -> Result<Rule, ParseError> {
        let head = self.atom()?;
        let mut body = Vec::new();
        if self.eat(":-") {
            loop {
                body.push(self.literal()?);
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect(".")?;
        Ok(Rule::new(head, body))
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        self.skip_trivia();
        let rest = self.rest();
        if rest.starts_with("not") && rest[3..].starts_with(char::is_whitespace) {
            for _ in 0..3 {
                self.bump();
            }
            return Ok(Literal::Negative(self.atom()?));
        }
        // `t1 != t2` or an atom: both start with a name.
        let save = (self.offset, self.line, self.column);
        let (at, first) = self.name()?;
        if self.eat("!=") {
            let left = self.term_from(at, first)?;
            let right = self.term()?;
            return Ok(Literal::NotEqual(left, right));
        }
        (self.offset, self.line, self.column) = save;
        Ok(Literal::Positive(self.atom()?))
    }

    fn atom(&mut self) -> Result<Atom, ParseError> {
        let (at, name) = self.name()?;
        let first = name.chars().next().unwrap_or(' ');
        if !first.is_ascii_lowercase() {
            return Err(ParseError {
                position: at,
                kind: ParseErrorKind::Syntax(format!(
                    "predicate `{name}` must start with a lowercase letter"
                )),
            });
        }
        if name.starts_with(MAGIC_PREFIX) && !self.options.allow_reserved {
            return Err(ParseError {
                position: at,
                kind: ParseErrorKind::ReservedName(name.to_owned()),
            });
        }
        let mut args = Vec::new();
        if self.eat("(") && !self.eat(")") {
            loop {
                args.push(self.term()?);
                if !self.eat(",") {
                    break;
                }
            }
            self.expect(")")?;
        }
        Ok(Atom::new(name, args))
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        let (at, name) = self.name()?;
        self.term_from(at, name)
    }

    fn term_from(&self, at: Position, name: &str) -> Result<Term, ParseError> {
        let first = name.chars().next().unwrap_or(' ');
        let bad = |msg: String| ParseError {
            position: at,
            kind: ParseErrorKind::Syntax(msg),
        };
        if name.contains(['#', '*']) {
            return Err(bad(format!(
                "`{name}`: `#` and `*` are only allowed in predicate names"
            )));
        }
        if first.is_ascii_uppercase() {
            Ok(Term::Var(name.to_owned()))
        } else if first.is_ascii_lowercase() || first.is_ascii_digit() {
            Ok(Term::Const(name.to_owned()))
        } else {
            Err(bad(format!(
                "`{name}` is neither a variable nor a constant"
            )))
        }
    }
}
