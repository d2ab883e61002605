//! Line-based KB syntax.
//!
//! ```text
//! % TBox
//! Parent subClassOf Person
//! Person and Male subClassOf Man
//! Parent subClassOf all hasChild . Person
//! exists hasChild . Person subClassOf Parent
//! domain hasChild subClassOf Person
//! Man subClassOf not Woman
//! Person subClassOf maxcard 1 hasMother . Woman
//! hasSon subPropertyOf hasChild
//! inverse hasParent subPropertyOf hasChild
//! transitive hasAncestor
//! hasParent o hasBrother subPropertyOf hasUncle
//! disjointProperty hasParent hasChild
//! % ABox
//! Person(ann)
//! hasChild(ann,bob)
//! % query
//! query(X) :- hasChild(X,Y), Man(Y).
//! ```

use super::{AboxAssertion, ConjunctiveQuery, KnowledgeBase, NameKind, NameMap, TBoxAxiom, TOP};
use crate::error::KbError;
use crate::syntax::{Atom, Term};

const KEYWORDS: &[&str] = &[
    "subClassOf",
    "subPropertyOf",
    "and",
    "all",
    "exists",
    "inverse",
    "domain",
    "range",
    "not",
    "maxcard",
    "transitive",
    "disjointProperty",
    "o",
    TOP,
];

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Word(String),
    Punct(&'static str),
}

fn tokenize(line: &str, n: usize) -> Result<Vec<Tok>, KbError> {
    let mut out = Vec::new();
    let mut chars = line.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c.is_ascii_alphanumeric() || c == '_' {
            let mut end = i;
            while let Some(&(j, c)) = chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    end = j + c.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            out.push(Tok::Word(line[i..end].to_owned()));
        } else {
            chars.next();
            let p = match c {
                '.' => ".",
                ',' => ",",
                '(' => "(",
                ')' => ")",
                ':' if chars.next_if(|&(_, c)| c == '-').is_some() => ":-",
                other => return Err(syntax(n, format!("unexpected character `{other}`"))),
            };
            out.push(Tok::Punct(p));
        }
    }
    Ok(out)
}

fn syntax(line: usize, message: impl Into<String>) -> KbError {
    KbError::Syntax {
        line,
        message: message.into(),
    }
}

enum Line {
    Axiom(TBoxAxiom),
    Assertion(AboxAssertion),
    Query(ConjunctiveQuery),
}

/// Parses a KB file. The optional query line is returned separately.
pub fn parse_kb(text: &str) -> Result<(KnowledgeBase, Option<ConjunctiveQuery>), KbError> {
    let mut kb = KnowledgeBase::default();
    let mut query = None;
    let mut names = NameMap::default();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let content = raw.split('%').next().unwrap_or("");
        let toks = tokenize(content, n)?;
        if toks.is_empty() {
            continue;
        }
        match parse_line(&toks, n)? {
            Line::Axiom(ax) => {
                names.declare_axiom(&ax, n)?;
                kb.tbox.push(ax);
            }
            Line::Assertion(a) => {
                names.declare_assertion(&a, n)?;
                kb.abox.push(a);
            }
            Line::Query(q) => {
                if query.is_some() {
                    return Err(syntax(n, "more than one query"));
                }
                check_query_names(&q, &mut names, n)?;
                query = Some(q);
            }
        }
    }
    Ok((kb, query))
}

/// Parses a standalone query, `query(X) :- R(X,Y), A(Y).`
pub fn parse_query(text: &str) -> Result<ConjunctiveQuery, KbError> {
    let toks = tokenize(text.trim(), 1)?;
    match parse_line(&toks, 1)? {
        Line::Query(q) => Ok(q),
        _ => Err(syntax(1, "expected `query(...) :- ...`")),
    }
}

fn check_query_names(q: &ConjunctiveQuery, names: &mut NameMap, n: usize) -> Result<(), KbError> {
    for a in &q.body {
        let kind = if a.arity() == 1 {
            NameKind::Concept
        } else {
            NameKind::Role
        };
        names.declare(&a.predicate, kind, n)?;
    }
    Ok(())
}

fn parse_line(toks: &[Tok], n: usize) -> Result<Line, KbError> {
    if toks.contains(&Tok::Punct(":-")) {
        return parse_query_tokens(toks, n).map(Line::Query);
    }
    if toks.get(1) == Some(&Tok::Punct("(")) {
        return parse_assertion(toks, n).map(Line::Assertion);
    }
    let toks = match toks.last() {
        Some(Tok::Punct(".")) => &toks[..toks.len() - 1],
        _ => toks,
    };
    parse_axiom(toks, n).map(Line::Axiom)
}

/// Words and dots of an axiom, e.g. `["exists", "R", ".", "B", ...]`.
fn words(toks: &[Tok], n: usize) -> Result<Vec<&str>, KbError> {
    toks.iter()
        .map(|t| match t {
            Tok::Word(w) => Ok(w.as_str()),
            Tok::Punct(".") => Ok("."),
            Tok::Punct(p) => Err(syntax(n, format!("unexpected `{p}`"))),
        })
        .collect()
}

fn name(w: &str, n: usize) -> Result<String, KbError> {
    if KEYWORDS.contains(&w) || w == "." {
        return Err(syntax(n, format!("expected a name, found `{w}`")));
    }
    if !w.starts_with(|c: char| c.is_ascii_alphabetic()) {
        return Err(syntax(n, format!("name `{w}` must start with a letter")));
    }
    Ok(w.to_owned())
}

fn parse_axiom(toks: &[Tok], n: usize) -> Result<TBoxAxiom, KbError> {
    use TBoxAxiom::*;
    let w = words(toks, n)?;
    if let Some(pos) = w.iter().position(|t| *t == "subPropertyOf") {
        let (lhs, rhs) = (&w[..pos], &w[pos + 1..]);
        let [r] = rhs else {
            return Err(syntax(n, "expected a single role after `subPropertyOf`"));
        };
        let r = name(r, n)?;
        return match lhs {
            [s] => Ok(RoleSub(name(s, n)?, r)),
            ["inverse", s] => Ok(InvRoleSub(name(s, n)?, r)),
            [s, "o", p] => Ok(RoleChain(name(s, n)?, name(p, n)?, r)),
            _ => Err(syntax(n, "unsupported role inclusion")),
        };
    }
    if let Some(pos) = w.iter().position(|t| *t == "subClassOf") {
        let (lhs, rhs) = (&w[..pos], &w[pos + 1..]);
        let rhs = parse_rhs(rhs, n)?;
        return match (lhs, rhs) {
            ([b], Rhs::Name(a)) => Ok(Sub(name(b, n)?, a)),
            ([b], Rhs::All(r, a)) => Ok(ValueRestr(name(b, n)?, r, a)),
            ([b], Rhs::Exists(r, a)) => Ok(ExistHead(name(b, n)?, r, a)),
            ([b], Rhs::Not(a)) => Ok(Disjoint(name(b, n)?, a)),
            ([b], Rhs::MaxCard(r, a)) => Ok(MaxCard(name(b, n)?, r, a)),
            ([b1, "and", b2], Rhs::Name(a)) => Ok(ConjSub(name(b1, n)?, name(b2, n)?, a)),
            (["exists", r, ".", "top"], Rhs::Name(a)) | (["domain", r], Rhs::Name(a)) => {
                Ok(DomainSub(name(r, n)?, a))
            }
            (["range", r], Rhs::Name(a)) => Ok(RangeSub(name(r, n)?, a)),
            (["exists", "inverse", r, ".", b], Rhs::Name(a)) => {
                Ok(ValueRestr(name(b, n)?, name(r, n)?, a))
            }
            (["exists", r, ".", b], Rhs::Name(a)) => Ok(ExistsSub(name(r, n)?, name(b, n)?, a)),
            _ => Err(syntax(n, "concept inclusion is not in normal form")),
        };
    }
    match w.as_slice() {
        ["transitive", r] => Ok(Transitive(name(r, n)?)),
        ["disjointProperty", s, r] => Ok(RoleDisjoint(name(s, n)?, name(r, n)?)),
        _ => Err(syntax(n, "unrecognized axiom")),
    }
}

enum Rhs {
    Name(String),
    All(String, String),
    Exists(String, String),
    Not(String),
    MaxCard(String, String),
}

fn parse_rhs(w: &[&str], n: usize) -> Result<Rhs, KbError> {
    match w {
        [a] => Ok(Rhs::Name(name(a, n)?)),
        ["all", r, ".", a] => Ok(Rhs::All(name(r, n)?, name(a, n)?)),
        ["exists", r, ".", "top"] => Ok(Rhs::Exists(name(r, n)?, TOP.to_owned())),
        ["exists", r, ".", a] => Ok(Rhs::Exists(name(r, n)?, name(a, n)?)),
        ["not", a] => Ok(Rhs::Not(name(a, n)?)),
        ["maxcard", "1", r, ".", a] | ["maxcard", "1", r, a] => {
            Ok(Rhs::MaxCard(name(r, n)?, name(a, n)?))
        }
        ["maxcard", k, ..] => Err(syntax(
            n,
            format!("only `maxcard 1` is supported, found `maxcard {k}`"),
        )),
        _ => Err(syntax(n, "unsupported right-hand side")),
    }
}

/// `Name(arg, ...)` starting at `toks[*i]`.
fn parse_atom(toks: &[Tok], i: &mut usize, n: usize) -> Result<Atom, KbError> {
    let pred = match toks.get(*i) {
        Some(Tok::Word(w)) => name(w, n)?,
        _ => return Err(syntax(n, "expected a concept or role name")),
    };
    *i += 1;
    if toks.get(*i) != Some(&Tok::Punct("(")) {
        return Err(syntax(n, format!("expected `(` after `{pred}`")));
    }
    *i += 1;
    let mut args = Vec::new();
    loop {
        match toks.get(*i) {
            Some(Tok::Word(w)) => {
                let t = if w.starts_with(|c: char| c.is_ascii_uppercase()) {
                    Term::var(w.as_str())
                } else if w.starts_with(|c: char| c.is_ascii_lowercase() || c.is_ascii_digit()) {
                    Term::constant(w.as_str())
                } else {
                    return Err(syntax(n, format!("invalid argument `{w}`")));
                };
                args.push(t);
                *i += 1;
            }
            _ => return Err(syntax(n, "expected an argument")),
        }
        match toks.get(*i) {
            Some(Tok::Punct(",")) => *i += 1,
            Some(Tok::Punct(")")) => {
                *i += 1;
                break;
            }
            _ => return Err(syntax(n, "expected `,` or `)`")),
        }
    }
    if args.len() > 2 {
        return Err(syntax(
            n,
            format!(
                "`{pred}` has {} arguments; concepts take 1, roles 2",
                args.len()
            ),
        ));
    }
    Ok(Atom::new(pred, args))
}

fn parse_assertion(toks: &[Tok], n: usize) -> Result<AboxAssertion, KbError> {
    let mut i = 0;
    let atom = parse_atom(toks, &mut i, n)?;
    match &toks[i..] {
        [] | [Tok::Punct(".")] => {}
        _ => return Err(syntax(n, "unexpected tokens after assertion")),
    }
    let mut individuals = Vec::new();
    for t in &atom.args {
        match t {
            Term::Const(c) => individuals.push(c.clone()),
            Term::Var(v) => {
                return Err(syntax(
                    n,
                    format!("`{v}` is not an individual (individuals start with a lowercase letter or digit)"),
                ))
            }
        }
    }
    match individuals.as_slice() {
        [a] => Ok(AboxAssertion::Concept(atom.predicate, a.clone())),
        [a, b] => Ok(AboxAssertion::Role(atom.predicate, a.clone(), b.clone())),
        _ => unreachable!("arity checked by parse_atom"),
    }
}

fn parse_query_tokens(toks: &[Tok], n: usize) -> Result<ConjunctiveQuery, KbError> {
    let mut i = 0;
    if toks.first() != Some(&Tok::Word("query".into())) {
        return Err(syntax(
            n,
            "a rule line must be the query, `query(...) :- ...`",
        ));
    }
    i += 1;
    let mut answer_vars = Vec::new();
    match toks.get(i) {
        Some(Tok::Punct("(")) => {
            i += 1;
            if toks.get(i) == Some(&Tok::Punct(")")) {
                i += 1;
            } else {
                loop {
                    match toks.get(i) {
                        Some(Tok::Word(w)) if w.starts_with(|c: char| c.is_ascii_uppercase()) => {
                            answer_vars.push(w.clone());
                        }
                        _ => return Err(syntax(n, "query head arguments must be variables")),
                    }
                    i += 1;
                    match toks.get(i) {
                        Some(Tok::Punct(",")) => i += 1,
                        Some(Tok::Punct(")")) => {
                            i += 1;
                            break;
                        }
                        _ => return Err(syntax(n, "expected `,` or `)`")),
                    }
                }
            }
        }
        Some(Tok::Punct(":-")) => {}
        _ => return Err(syntax(n, "expected `(` or `:-` after `query`")),
    }
    if toks.get(i) != Some(&Tok::Punct(":-")) {
        return Err(syntax(n, "expected `:-`"));
    }
    i += 1;
    let mut body = Vec::new();
    loop {
        body.push(parse_atom(toks, &mut i, n)?);
        match toks.get(i) {
            Some(Tok::Punct(",")) => i += 1,
            Some(Tok::Punct(".")) if i + 1 == toks.len() => break,
            None => break,
            _ => return Err(syntax(n, "expected `,` or `.`")),
        }
    }
    Ok(ConjunctiveQuery { answer_vars, body })
}
