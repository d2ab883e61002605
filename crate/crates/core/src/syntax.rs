//! Abstract syntax for Datalog programs with stratified negation.
//!
//! Constants and variables live in disjoint namespaces; the parser enforces
//! the lexical convention (variables start with an uppercase letter) but the
//! types here carry the distinction explicitly so rewritten programs never
//! depend on spelling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Reserved prefix for predicates introduced by the Magic Sets rewriter.
pub const MAGIC_PREFIX: &str = "m#";

/// Zero-arity head used for constraint rules (`⊥`-headed axioms).
pub const INCONSISTENT: &str = "inconsistent";

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Const(String),
    Var(String),
}

impl Term {
    pub fn constant(name: impl Into<String>) -> Self {
        Term::Const(name.into())
    }

    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn is_const(&self) -> bool {
        matches!(self, Term::Const(_))
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Term::Const(c) | Term::Var(c) => c,
        }
    }

    pub fn apply(&self, s: &Substitution) -> Term {
        match self {
            Term::Var(v) => match s.get(v) {
                Some(c) => Term::Const(c.to_owned()),
                None => self.clone(),
            },
            Term::Const(_) => self.clone(),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `p(t1, ..., tk)`; zero-arity atoms have no arguments and render without
/// parentheses.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Atom {
            predicate: predicate.into(),
            args,
        }
    }

    /// Builds an atom whose arguments are all constants.
    pub fn ground<S: AsRef<str>>(predicate: impl Into<String>, args: &[S]) -> Self {
        Atom::new(
            predicate,
            args.iter().map(|a| Term::constant(a.as_ref())).collect(),
        )
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_const)
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(Term::as_var)
    }

    pub fn apply(&self, s: &Substitution) -> Atom {
        Atom {
            predicate: self.predicate.clone(),
            args: self.args.iter().map(|t| t.apply(s)).collect(),
        }
    }

    /// Matches this (possibly non-ground) atom against a ground atom,
    /// extending `s`. Returns `None` on a clash.
    pub fn match_ground(&self, fact: &Atom, s: &Substitution) -> Option<Substitution> {
        if self.predicate != fact.predicate || self.args.len() != fact.args.len() {
            return None;
        }
        let mut out = s.clone();
        for (pattern, value) in self.args.iter().zip(&fact.args) {
            let value = match value {
                Term::Const(c) => c,
                Term::Var(_) => return None,
            };
            match pattern {
                Term::Const(c) if c == value => {}
                Term::Const(_) => return None,
                Term::Var(v) => match out.get(v) {
                    Some(bound) if bound == value => {}
                    Some(_) => return None,
                    None => out.bind(v.clone(), value.clone()),
                },
            }
        }
        Some(out)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.predicate)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (i, t) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{t}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// A body element. `NotEqual` is the built-in disequality, admitted only in
/// constraint bodies by the parser.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Literal {
    Positive(Atom),
    Negative(Atom),
    NotEqual(Term, Term),
}

impl Literal {
    pub fn atom(&self) -> Option<&Atom> {
        match self {
            Literal::Positive(a) | Literal::Negative(a) => Some(a),
            Literal::NotEqual(..) => None,
        }
    }

    pub fn is_positive(&self) -> bool {
        matches!(self, Literal::Positive(_))
    }

    pub fn is_negative(&self) -> bool {
        matches!(self, Literal::Negative(_))
    }

    pub fn variables(&self) -> Vec<&str> {
        match self {
            Literal::Positive(a) | Literal::Negative(a) => a.variables().collect(),
            Literal::NotEqual(l, r) => [l, r].into_iter().filter_map(Term::as_var).collect(),
        }
    }

    pub fn apply(&self, s: &Substitution) -> Literal {
        match self {
            Literal::Positive(a) => Literal::Positive(a.apply(s)),
            Literal::Negative(a) => Literal::Negative(a.apply(s)),
            Literal::NotEqual(l, r) => Literal::NotEqual(l.apply(s), r.apply(s)),
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Positive(a) => write!(f, "{a}"),
            Literal::Negative(a) => write!(f, "not {a}"),
            Literal::NotEqual(l, r) => write!(f, "{l} != {r}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rule {
    pub head: Atom,
    pub body: Vec<Literal>,
}

/// Head, positive body, negative body, and every atom of a rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleParts {
    pub head: Atom,
    pub positive: BTreeSet<Atom>,
    pub negative: BTreeSet<Atom>,
    pub all_atoms: BTreeSet<Atom>,
}

impl Rule {
    pub fn new(head: Atom, body: Vec<Literal>) -> Self {
        Rule { head, body }
    }

    pub fn fact(head: Atom) -> Self {
        Rule {
            head,
            body: Vec::new(),
        }
    }

    pub fn is_fact(&self) -> bool {
        self.body.is_empty()
    }

    pub fn is_constraint(&self) -> bool {
        self.head.predicate == INCONSISTENT && self.head.args.is_empty()
    }

    pub fn positive_atoms(&self) -> impl Iterator<Item = &Atom> {
        self.body.iter().filter_map(|l| match l {
            Literal::Positive(a) => Some(a),
            _ => None,
        })
    }

    pub fn negative_atoms(&self) -> impl Iterator<Item = &Atom> {
        self.body.iter().filter_map(|l| match l {
            Literal::Negative(a) => Some(a),
            _ => None,
        })
    }

    /// Every variable of the rule, in order of first occurrence.
    pub fn variables(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        let all = self
            .head
            .variables()
            .chain(self.body.iter().flat_map(|l| l.variables()));
        for v in all {
            if !seen.contains(&v) {
                seen.push(v);
            }
        }
        seen
    }

    /// Every variable occurs in some positive body literal.
    pub fn is_safe(&self) -> bool {
        self.unsafe_variables().is_empty()
    }

    pub fn unsafe_variables(&self) -> Vec<&str> {
        let positive: BTreeSet<&str> = self.positive_atoms().flat_map(Atom::variables).collect();
        self.variables()
            .into_iter()
            .filter(|v| !positive.contains(v))
            .collect()
    }

    pub fn parts(&self) -> RuleParts {
        let positive: BTreeSet<Atom> = self.positive_atoms().cloned().collect();
        let negative: BTreeSet<Atom> = self.negative_atoms().cloned().collect();
        let mut all_atoms: BTreeSet<Atom> = positive.union(&negative).cloned().collect();
        all_atoms.insert(self.head.clone());
        RuleParts {
            head: self.head.clone(),
            positive,
            negative,
            all_atoms,
        }
    }

    pub fn apply(&self, s: &Substitution) -> Rule {
        Rule {
            head: self.head.apply(s),
            body: self.body.iter().map(|l| l.apply(s)).collect(),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.head)?;
        if !self.body.is_empty() {
            f.write_str(" :- ")?;
            for (i, l) in self.body.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{l}")?;
            }
        }
        f.write_str(".")
    }
}

/// Free function form of [`Rule::is_safe`].
pub fn is_safe(r: &Rule) -> bool {
    r.is_safe()
}

/// Free function form of [`Rule::parts`].
pub fn rule_parts(r: &Rule) -> RuleParts {
    r.parts()
}

/// Anything a substitution can be applied to.
pub trait Substitute {
    fn substitute(&self, s: &Substitution) -> Self;
}

impl Substitute for Term {
    fn substitute(&self, s: &Substitution) -> Self {
        self.apply(s)
    }
}

impl Substitute for Atom {
    fn substitute(&self, s: &Substitution) -> Self {
        self.apply(s)
    }
}

impl Substitute for Literal {
    fn substitute(&self, s: &Substitution) -> Self {
        self.apply(s)
    }
}

impl Substitute for Rule {
    fn substitute(&self, s: &Substitution) -> Self {
        self.apply(s)
    }
}

impl Substitute for Program {
    fn substitute(&self, s: &Substitution) -> Self {
        Program::new(self.rules.iter().map(|r| r.apply(s)).collect())
    }
}

pub fn apply_substitution<E: Substitute>(e: &E, s: &Substitution) -> E {
    e.substitute(s)
}

/// An ordered list of rules. Facts are rules with an empty body.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Program {
    pub rules: Vec<Rule>,
}

impl Program {
    pub fn new(rules: Vec<Rule>) -> Self {
        Program { rules }
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Rule> {
        self.rules.iter()
    }

    pub fn extend(&mut self, other: Program) {
        self.rules.extend(other.rules);
    }

    /// All atoms in heads and bodies, in order of occurrence.
    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.rules
            .iter()
            .flat_map(|r| std::iter::once(&r.head).chain(r.body.iter().filter_map(Literal::atom)))
    }

    /// Predicate symbols with their arity. The first occurrence wins; see
    /// [`Program::check_arities`] for consistency.
    pub fn predicates(&self) -> BTreeMap<&str, usize> {
        let mut out = BTreeMap::new();
        for a in self.atoms() {
            out.entry(a.predicate.as_str()).or_insert(a.arity());
        }
        out
    }

    pub fn has_predicate(&self, p: &str) -> bool {
        self.atoms().any(|a| a.predicate == p)
    }

    /// Returns the first atom whose arity disagrees with an earlier use of the
    /// same predicate.
    pub fn check_arities(&self) -> Result<(), (String, usize, usize)> {
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        for a in self.atoms() {
            match seen.get(a.predicate.as_str()) {
                Some(&k) if k != a.arity() => {
                    return Err((a.predicate.clone(), k, a.arity()));
                }
                Some(_) => {}
                None => {
                    seen.insert(&a.predicate, a.arity());
                }
            }
        }
        Ok(())
    }

    /// Predicates with at least one non-fact rule.
    pub fn intentional_predicates(&self) -> BTreeSet<&str> {
        self.rules
            .iter()
            .filter(|r| !r.is_fact())
            .map(|r| r.head.predicate.as_str())
            .collect()
    }

    pub fn is_intentional(&self, p: &str) -> bool {
        self.rules
            .iter()
            .any(|r| !r.is_fact() && r.head.predicate == p)
    }
}

impl FromIterator<Rule> for Program {
    fn from_iter<T: IntoIterator<Item = Rule>>(iter: T) -> Self {
        Program::new(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a Program {
    type Item = &'a Rule;
    type IntoIter = std::slice::Iter<'a, Rule>;

    fn into_iter(self) -> Self::IntoIter {
        self.rules.iter()
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

/// A finite map from variables to constants.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Substitution(BTreeMap<String, String>);

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, var: &str) -> Option<&str> {
        self.0.get(var).map(String::as_str)
    }

    pub fn bind(&mut self, var: impl Into<String>, value: impl Into<String>) {
        self.0.insert(var.into(), value.into());
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for Substitution {
    fn from_iter<T: IntoIterator<Item = (K, V)>>(iter: T) -> Self {
        Substitution(
            iter.into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        )
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("true");
        }
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

/// A set of ground atoms.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Interpretation {
    atoms: BTreeSet<Atom>,
}

impl Interpretation {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics if `atom` has a variable.
    pub fn insert(&mut self, atom: Atom) -> bool {
        assert!(
            atom.is_ground(),
            "interpretations hold ground atoms only: {atom}"
        );
        self.atoms.insert(atom)
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        self.atoms.contains(atom)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Atom> {
        self.atoms.iter()
    }

    pub fn with_predicate<'a>(&'a self, p: &'a str) -> impl Iterator<Item = &'a Atom> + 'a {
        self.atoms.iter().filter(move |a| a.predicate == p)
    }

    pub fn is_subset(&self, other: &Interpretation) -> bool {
        self.atoms.is_subset(&other.atoms)
    }

    pub fn extend(&mut self, other: impl IntoIterator<Item = Atom>) {
        for a in other {
            self.insert(a);
        }
    }

    pub fn into_set(self) -> BTreeSet<Atom> {
        self.atoms
    }

    pub fn as_set(&self) -> &BTreeSet<Atom> {
        &self.atoms
    }
}

impl FromIterator<Atom> for Interpretation {
    fn from_iter<T: IntoIterator<Item = Atom>>(iter: T) -> Self {
        let mut out = Interpretation::new();
        out.extend(iter);
        out
    }
}

impl IntoIterator for Interpretation {
    type Item = Atom;
    type IntoIter = std::collections::btree_set::IntoIter<Atom>;

    fn into_iter(self) -> Self::IntoIter {
        self.atoms.into_iter()
    }
}

/// Renders one fact per line, sorted by their text.
impl fmt::Display for Interpretation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut lines: Vec<String> = self.atoms.iter().map(|a| format!("{a}.")).collect();
        lines.sort();
        for l in lines {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}
