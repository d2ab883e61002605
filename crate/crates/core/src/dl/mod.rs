//! Normal-form DL knowledge bases compiled to Datalog.
//!
//! Every axiom whose first-order reading is a Horn clause without
//! existentials becomes one rule; axioms with `⊥` on the right become
//! constraints with head `inconsistent`. A conjunctive query becomes a rule
//! for the reserved predicate `goal`, and certain answers are read off the
//! least model of ABox facts plus translated rules.
//!
//! Concept and role names are mapped to predicates by lowercasing their first
//! character (`Person` becomes `person`, `hasChild` stays `hasChild`).

mod parse;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub use parse::{parse_kb, parse_query};

use crate::error::{Error, KbError, Result};
use crate::eval::{evaluate_model, EvalOptions, EvalStats};
use crate::magic::{full_free, magic_sets, SipsStrategy};
use crate::syntax::{Atom, Literal, Program, Rule, Term, INCONSISTENT};

pub const GOAL: &str = "goal";

/// Placeholder filler for `∃R.⊤`.
pub const TOP: &str = "top";

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TBoxAxiom {
    /// `B ⊑ A`
    Sub(String, String),
    /// `B1 ⊓ B2 ⊑ A`
    ConjSub(String, String, String),
    /// `B ⊑ ∀R.A`, equivalently `∃R⁻.B ⊑ A`: (B, R, A)
    ValueRestr(String, String, String),
    /// `∃R.B ⊑ A`: (R, B, A)
    ExistsSub(String, String, String),
    /// `dom(R) ⊑ A`, equivalently `∃R.⊤ ⊑ A`
    DomainSub(String, String),
    /// `ran(R) ⊑ A`
    RangeSub(String, String),
    /// `B ⊑ ∃R.A`: (B, R, A). Parsed but not translatable.
    ExistHead(String, String, String),
    /// `B ⊑ ¬A`
    Disjoint(String, String),
    /// `B ⊑ ≤1 R.A`: (B, R, A)
    MaxCard(String, String, String),
    /// `S ⊑ R`
    RoleSub(String, String),
    /// `S⁻ ⊑ R`
    InvRoleSub(String, String),
    /// `R⁺ ⊑ R`
    Transitive(String),
    /// `S ∘ P ⊑ R`: (S, P, R)
    RoleChain(String, String, String),
    /// `S ⊓ R ⊑ ⊥`
    RoleDisjoint(String, String),
}

impl TBoxAxiom {
    /// Concept names used by the axiom.
    pub fn concepts(&self) -> Vec<&str> {
        use TBoxAxiom::*;
        let names: Vec<&String> = match self {
            Sub(b, a) | Disjoint(b, a) => vec![b, a],
            ConjSub(b1, b2, a) => vec![b1, b2, a],
            ValueRestr(b, _, a) | ExistsSub(_, b, a) | MaxCard(b, _, a) => vec![b, a],
            ExistHead(b, _, a) => vec![b, a],
            DomainSub(_, a) | RangeSub(_, a) => vec![a],
            RoleSub(..) | InvRoleSub(..) | Transitive(_) | RoleChain(..) | RoleDisjoint(..) => {
                vec![]
            }
        };
        names
            .into_iter()
            .map(String::as_str)
            .filter(|n| *n != TOP)
            .collect()
    }

    /// Role names used by the axiom.
    pub fn roles(&self) -> Vec<&str> {
        use TBoxAxiom::*;
        match self {
            Sub(..) | ConjSub(..) | Disjoint(..) => vec![],
            ValueRestr(_, r, _) | ExistHead(_, r, _) | MaxCard(_, r, _) => vec![r],
            ExistsSub(r, _, _) | DomainSub(r, _) | RangeSub(r, _) | Transitive(r) => vec![r],
            RoleSub(s, r) | InvRoleSub(s, r) | RoleDisjoint(s, r) => vec![s, r],
            RoleChain(s, p, r) => vec![s, p, r],
        }
    }
}

impl fmt::Display for TBoxAxiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use TBoxAxiom::*;
        match self {
            Sub(b, a) => write!(f, "{b} subClassOf {a}"),
            ConjSub(b1, b2, a) => write!(f, "{b1} and {b2} subClassOf {a}"),
            ValueRestr(b, r, a) => write!(f, "{b} subClassOf all {r} . {a}"),
            ExistsSub(r, b, a) => write!(f, "exists {r} . {b} subClassOf {a}"),
            DomainSub(r, a) => write!(f, "domain {r} subClassOf {a}"),
            RangeSub(r, a) => write!(f, "range {r} subClassOf {a}"),
            ExistHead(b, r, a) => write!(f, "{b} subClassOf exists {r} . {a}"),
            Disjoint(b, a) => write!(f, "{b} subClassOf not {a}"),
            MaxCard(b, r, a) => write!(f, "{b} subClassOf maxcard 1 {r} . {a}"),
            RoleSub(s, r) => write!(f, "{s} subPropertyOf {r}"),
            InvRoleSub(s, r) => write!(f, "inverse {s} subPropertyOf {r}"),
            Transitive(r) => write!(f, "transitive {r}"),
            RoleChain(s, p, r) => write!(f, "{s} o {p} subPropertyOf {r}"),
            RoleDisjoint(s, r) => write!(f, "disjointProperty {s} {r}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AboxAssertion {
    Concept(String, String),
    Role(String, String, String),
}

impl AboxAssertion {
    pub fn name(&self) -> &str {
        match self {
            AboxAssertion::Concept(a, _) | AboxAssertion::Role(a, _, _) => a,
        }
    }

    pub fn to_fact(&self) -> Rule {
        match self {
            AboxAssertion::Concept(a, x) => Rule::fact(Atom::ground(predicate_name(a), &[x])),
            AboxAssertion::Role(r, x, y) => Rule::fact(Atom::ground(predicate_name(r), &[x, y])),
        }
    }
}

impl fmt::Display for AboxAssertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AboxAssertion::Concept(a, x) => write!(f, "{a}({x})"),
            AboxAssertion::Role(r, x, y) => write!(f, "{r}({x},{y})"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    pub tbox: Vec<TBoxAxiom>,
    pub abox: Vec<AboxAssertion>,
}

/// `q(x̄) ← ∃ȳ φ(x̄, ȳ)`. Body atoms use concept and role names as
/// predicates; uppercase arguments are variables, others individuals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConjunctiveQuery {
    pub answer_vars: Vec<String>,
    pub body: Vec<Atom>,
}

impl fmt::Display for ConjunctiveQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "query({}) :- ", self.answer_vars.join(","))?;
        for (i, a) in self.body.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(".")
    }
}

/// Predicate name for a concept or role name.
pub fn predicate_name(name: &str) -> String {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NameKind {
    Concept,
    Role,
}

impl NameKind {
    fn label(self) -> &'static str {
        match self {
            NameKind::Concept => "concept",
            NameKind::Role => "role",
        }
    }
}

/// Concept and role names of a KB with their predicates.
#[derive(Clone, Debug, Default)]
pub struct NameMap {
    kinds: BTreeMap<String, NameKind>,
    originals: BTreeMap<String, String>,
}

impl NameMap {
    /// Registers `name`; `line` is reported on conflicts.
    pub fn declare(&mut self, name: &str, kind: NameKind, line: usize) -> Result<(), KbError> {
        if let Some(&seen) = self.kinds.get(name) {
            if seen != kind {
                return Err(KbError::NameClass {
                    line,
                    name: name.to_owned(),
                    first: seen.label(),
                    second: kind.label(),
                });
            }
            return Ok(());
        }
        let pred = predicate_name(name);
        if pred == GOAL || pred == INCONSISTENT {
            return Err(KbError::ReservedName(name.to_owned()));
        }
        if let Some(other) = self.originals.get(&pred) {
            return Err(KbError::NameCollision {
                first: other.clone(),
                second: name.to_owned(),
                predicate: pred,
            });
        }
        self.kinds.insert(name.to_owned(), kind);
        self.originals.insert(pred, name.to_owned());
        Ok(())
    }

    /// Collects the names of `kb`, numbering axioms then assertions from 1.
    pub fn of(kb: &KnowledgeBase) -> Result<NameMap, KbError> {
        let mut map = NameMap::default();
        for (i, ax) in kb.tbox.iter().enumerate() {
            map.declare_axiom(ax, i + 1)?;
        }
        for (i, a) in kb.abox.iter().enumerate() {
            map.declare_assertion(a, kb.tbox.len() + i + 1)?;
        }
        Ok(map)
    }

    pub(crate) fn declare_axiom(&mut self, ax: &TBoxAxiom, line: usize) -> Result<(), KbError> {
        for c in ax.concepts() {
            self.declare(c, NameKind::Concept, line)?;
        }
        for r in ax.roles() {
            self.declare(r, NameKind::Role, line)?;
        }
        Ok(())
    }

    pub(crate) fn declare_assertion(
        &mut self,
        a: &AboxAssertion,
        line: usize,
    ) -> Result<(), KbError> {
        let kind = match a {
            AboxAssertion::Concept(..) => NameKind::Concept,
            AboxAssertion::Role(..) => NameKind::Role,
        };
        self.declare(a.name(), kind, line)
    }

    pub fn kind(&self, name: &str) -> Option<NameKind> {
        self.kinds.get(name).copied()
    }

    /// The concept or role name a predicate came from.
    pub fn original<'a>(&'a self, predicate: &'a str) -> &'a str {
        self.originals
            .get(predicate)
            .map_or(predicate, String::as_str)
    }

    /// Renders a ground atom with its original concept or role name.
    pub fn display_atom(&self, atom: &Atom) -> String {
        Atom::new(self.original(&atom.predicate), atom.args.clone()).to_string()
    }
}

fn var(name: &str) -> Term {
    Term::var(name)
}

fn unary(name: &str, x: &str) -> Literal {
    Literal::Positive(Atom::new(predicate_name(name), vec![var(x)]))
}

fn binary(name: &str, x: &str, y: &str) -> Literal {
    Literal::Positive(Atom::new(predicate_name(name), vec![var(x), var(y)]))
}

fn head(l: Literal) -> Atom {
    match l {
        Literal::Positive(a) => a,
        _ => unreachable!(),
    }
}

fn constraint(body: Vec<Literal>) -> Rule {
    Rule::new(Atom::new(INCONSISTENT, Vec::new()), body)
}

/// The rule expressing one axiom.
pub fn translate_axiom(ax: &TBoxAxiom) -> Result<Rule> {
    use TBoxAxiom::*;
    let rule = match ax {
        Sub(b, a) => Rule::new(head(unary(a, "X")), vec![unary(b, "X")]),
        ConjSub(b1, b2, a) => Rule::new(head(unary(a, "X")), vec![unary(b1, "X"), unary(b2, "X")]),
        ValueRestr(b, r, a) => Rule::new(
            head(unary(a, "Y")),
            vec![unary(b, "X"), binary(r, "X", "Y")],
        ),
        ExistsSub(r, b, a) => Rule::new(
            head(unary(a, "X")),
            vec![binary(r, "X", "Y"), unary(b, "Y")],
        ),
        DomainSub(r, a) => Rule::new(head(unary(a, "X")), vec![binary(r, "X", "Y")]),
        RangeSub(r, a) => Rule::new(head(unary(a, "Y")), vec![binary(r, "X", "Y")]),
        ExistHead(..) => {
            return Err(KbError::ExistentialHeadUnsupported(vec![ax.to_string()]).into());
        }
        Disjoint(b, a) => constraint(vec![unary(b, "X"), unary(a, "X")]),
        MaxCard(b, r, a) => constraint(vec![
            unary(b, "X"),
            binary(r, "X", "Y1"),
            binary(r, "X", "Y2"),
            unary(a, "Y1"),
            unary(a, "Y2"),
            Literal::NotEqual(var("Y1"), var("Y2")),
        ]),
        RoleSub(s, r) => Rule::new(head(binary(r, "X", "Y")), vec![binary(s, "X", "Y")]),
        InvRoleSub(s, r) => Rule::new(head(binary(r, "Y", "X")), vec![binary(s, "X", "Y")]),
        Transitive(r) => Rule::new(
            head(binary(r, "X", "Z")),
            vec![binary(r, "X", "Y"), binary(r, "Y", "Z")],
        ),
        RoleChain(s, p, r) => Rule::new(
            head(binary(r, "X", "Z")),
            vec![binary(s, "X", "Y"), binary(p, "Y", "Z")],
        ),
        RoleDisjoint(s, r) => constraint(vec![binary(s, "X", "Y"), binary(r, "X", "Y")]),
    };
    Ok(rule)
}

/// Rules for all axioms in order. Every existential-head axiom is reported.
pub fn translate_tbox(tbox: &[TBoxAxiom]) -> Result<Program> {
    let rejected: Vec<String> = tbox
        .iter()
        .filter(|ax| matches!(ax, TBoxAxiom::ExistHead(..)))
        .map(ToString::to_string)
        .collect();
    if !rejected.is_empty() {
        return Err(KbError::ExistentialHeadUnsupported(rejected).into());
    }
    tbox.iter()
        .map(translate_axiom)
        .collect::<Result<Vec<_>>>()
        .map(Program::new)
}

/// `goal(x̄) :- φ.`
pub fn translate_query(q: &ConjunctiveQuery) -> Result<Rule> {
    let body: Vec<Literal> = q
        .body
        .iter()
        .map(|a| Literal::Positive(Atom::new(predicate_name(&a.predicate), a.args.clone())))
        .collect();
    let bound: BTreeSet<&str> = q.body.iter().flat_map(Atom::variables).collect();
    let missing: Vec<String> = q
        .answer_vars
        .iter()
        .filter(|v| !bound.contains(v.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(KbError::UnsafeQuery(missing).into());
    }
    let head = Atom::new(GOAL, q.answer_vars.iter().map(|v| var(v)).collect());
    Ok(Rule::new(head, body))
}

/// ABox facts followed by the translated TBox.
pub fn translate_kb(kb: &KnowledgeBase) -> Result<Program> {
    NameMap::of(kb)?;
    let mut program: Program = kb.abox.iter().map(AboxAssertion::to_fact).collect();
    program.extend(translate_tbox(&kb.tbox)?);
    Ok(program)
}

#[derive(Clone, Copy, Debug)]
pub struct AnswerOptions {
    pub use_magic: bool,
    pub full_free: bool,
    pub sips: SipsStrategy,
    /// Refuse to answer when `inconsistent` is derivable.
    pub check_consistency: bool,
    pub eval: EvalOptions,
}

impl Default for AnswerOptions {
    fn default() -> Self {
        AnswerOptions {
            use_magic: true,
            full_free: true,
            sips: SipsStrategy::LeftToRight,
            check_consistency: false,
            eval: EvalOptions::default(),
        }
    }
}

/// Answers and the program that produced them.
#[derive(Clone, Debug)]
pub struct QueryRun {
    pub answers: BTreeSet<Vec<String>>,
    /// The evaluated program: constraints stripped, rewritten if requested.
    pub program: Program,
    pub stats: EvalStats,
}

/// The program answering `q` over `kb` without evaluating it, and the goal
/// atom to read answers from.
pub fn query_program(
    kb: &KnowledgeBase,
    q: &ConjunctiveQuery,
    options: &AnswerOptions,
) -> Result<(Program, Atom)> {
    let mut program: Program = translate_kb(kb)?
        .rules
        .into_iter()
        .filter(|r| !r.is_constraint())
        .collect();
    let goal_rule = translate_query(q)?;
    let goal = goal_rule.head.clone();
    program.rules.push(goal_rule);
    if options.use_magic {
        program = magic_sets(&goal, &program, options.sips)?;
        if options.full_free {
            program = full_free(&program);
        }
    }
    Ok((program, goal))
}

pub fn certain_answers_with(
    kb: &KnowledgeBase,
    q: &ConjunctiveQuery,
    options: &AnswerOptions,
) -> Result<QueryRun> {
    if options.check_consistency && !check_consistency(kb)? {
        return Err(Error::Inconsistent);
    }
    let (program, goal) = query_program(kb, q, options)?;
    let model = evaluate_model(&program, options.eval)?;
    let answers = model
        .answers(&goal)
        .into_iter()
        .map(|s| {
            q.answer_vars
                .iter()
                .map(|v| s.get(v).expect("answer variable bound").to_owned())
                .collect()
        })
        .collect();
    Ok(QueryRun {
        answers,
        program,
        stats: model.stats().clone(),
    })
}

/// Certain answers as tuples ordered like `q.answer_vars`. A Boolean query
/// answers `{()}` when entailed and `{}` otherwise.
pub fn certain_answers(
    kb: &KnowledgeBase,
    q: &ConjunctiveQuery,
    use_magic: bool,
) -> Result<BTreeSet<Vec<String>>> {
    let options = AnswerOptions {
        use_magic,
        ..AnswerOptions::default()
    };
    Ok(certain_answers_with(kb, q, &options)?.answers)
}

/// False iff some constraint fires in the least model.
pub fn check_consistency(kb: &KnowledgeBase) -> Result<bool> {
    let program = translate_kb(kb)?;
    let model = evaluate_model(&program, EvalOptions::default())?;
    Ok(!model.contains(&Atom::new(INCONSISTENT, Vec::new())))
}
