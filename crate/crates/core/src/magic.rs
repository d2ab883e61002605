//! Query-directed Magic Sets rewriting.
//!
//! The rewriter processes adorned predicates breadth-first from the query's
//! seed. For every rule defining a processed predicate it emits a copy of the
//! rule guarded by the head's magic atom and, for every intentional body
//! literal, a magic rule propagating the bindings available to that literal.
//!
//! Literals offered to a magic rule by the SIPS are filtered through a guard
//! graph: the dependency graph of the input plus one representative node
//! `m#p` per predicate. A literal is kept only if the arc it induces leaves
//! the SCCs over original predicates unchanged, so the rewriting never merges
//! components of the input and stratification carries over.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::stratify::{
    build_dependency_graph, stratify, strongly_connected_components, tarjan, DependencyGraph,
};
use crate::syntax::{Atom, Literal, Program, Rule, Term, MAGIC_PREFIX};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Binding {
    Bound,
    Free,
}

/// A string over `{b, f}`, one letter per argument.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Adornment(Vec<Binding>);

impl Adornment {
    pub fn new(bindings: Vec<Binding>) -> Self {
        Adornment(bindings)
    }

    pub fn free(len: usize) -> Self {
        Adornment(vec![Binding::Free; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_bound(&self, i: usize) -> bool {
        self.0[i] == Binding::Bound
    }

    pub fn bound_count(&self) -> usize {
        self.0.iter().filter(|b| **b == Binding::Bound).count()
    }

    pub fn is_full_free(&self) -> bool {
        self.0.iter().all(|b| *b == Binding::Free)
    }

    pub fn bindings(&self) -> &[Binding] {
        &self.0
    }
}

impl fmt::Display for Adornment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            f.write_str(match b {
                Binding::Bound => "b",
                Binding::Free => "f",
            })?;
        }
        Ok(())
    }
}

impl FromStr for Adornment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                'b' => Ok(Binding::Bound),
                'f' => Ok(Binding::Free),
                other => Err(format!("invalid adornment letter `{other}`")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Adornment)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AdornedPredicate {
    pub predicate: String,
    pub adornment: Adornment,
}

impl AdornedPredicate {
    pub fn magic_name(&self) -> String {
        magic_name(&self.predicate, &self.adornment)
    }

    /// Arity of the magic predicate: the number of bound positions.
    pub fn magic_arity(&self) -> usize {
        self.adornment.bound_count()
    }
}

impl fmt::Display for AdornedPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}^{}", self.predicate, self.adornment)
    }
}

pub fn magic_name(predicate: &str, adornment: &Adornment) -> String {
    format!("{MAGIC_PREFIX}{predicate}#{adornment}")
}

/// Splits `m#p#s` into `p` and `s`. Predicate names may themselves contain
/// `#`, so the adornment is whatever follows the last one.
pub fn parse_magic_name(name: &str) -> Option<(&str, Adornment)> {
    let rest = name.strip_prefix(MAGIC_PREFIX)?;
    let (pred, adornment) = rest.rsplit_once('#')?;
    if pred.is_empty() {
        return None;
    }
    Some((pred, adornment.parse().ok()?))
}

/// `p^s(t)`: the magic atom keeping the arguments at bound positions.
pub fn magic_atom_of(atom: &Atom, adornment: &Adornment) -> Result<Atom> {
    if atom.arity() != adornment.len() {
        return Err(Error::AdornmentLength {
            atom: atom.to_string(),
            adornment: adornment.to_string(),
        });
    }
    let args = atom
        .args
        .iter()
        .enumerate()
        .filter(|(i, _)| adornment.is_bound(*i))
        .map(|(_, t)| t.clone())
        .collect();
    Ok(Atom::new(magic_name(&atom.predicate, adornment), args))
}

/// Adornment with `b` exactly at the query's constants, and the magic seed
/// fact over those constants. Repeated variables stay free.
pub fn seed_adornment(query: &Atom) -> (Adornment, Rule) {
    let adornment = Adornment(
        query
            .args
            .iter()
            .map(|t| {
                if t.is_const() {
                    Binding::Bound
                } else {
                    Binding::Free
                }
            })
            .collect(),
    );
    let seed = magic_atom_of(query, &adornment).expect("adornment built from the atom");
    (adornment, Rule::fact(seed))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SipsStrategy {
    /// Body literals are processed in source order and every positive literal
    /// passes on the bindings it creates.
    #[default]
    LeftToRight,
    /// Only the head passes bindings; body literals do not feed each other.
    Parallel,
}

impl FromStr for SipsStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ltr" | "left-to-right" => Ok(SipsStrategy::LeftToRight),
            "parallel" => Ok(SipsStrategy::Parallel),
            other => Err(format!(
                "unknown SIPS strategy `{other}` (expected ltr or parallel)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SipsNode {
    Head,
    Body(usize),
}

/// A sideways information passing strategy for one rule and head adornment:
/// a strict partial order over the head and body literals, and the variables
/// each literal makes bound.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sips {
    pub rule: Rule,
    precedes: BTreeSet<(SipsNode, SipsNode)>,
    bnd: BTreeMap<SipsNode, BTreeSet<String>>,
}

impl Sips {
    pub fn precedes(&self, a: SipsNode, b: SipsNode) -> bool {
        self.precedes.contains(&(a, b))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (SipsNode, SipsNode)> + '_ {
        self.precedes.iter().copied()
    }

    pub fn bnd(&self, node: SipsNode) -> &BTreeSet<String> {
        static EMPTY: BTreeSet<String> = BTreeSet::new();
        self.bnd.get(&node).unwrap_or(&EMPTY)
    }

    /// Body literals preceding body literal `i`, in source order.
    pub fn body_predecessors(&self, i: usize) -> Vec<usize> {
        self.precedes
            .iter()
            .filter_map(|&(a, b)| match (a, b) {
                (SipsNode::Body(j), SipsNode::Body(k)) if k == i => Some(j),
                _ => None,
            })
            .collect()
    }
}

/// Builds the SIPS of `rule` for head adornment `adornment`.
///
/// Left-to-right: a positive literal precedes a later literal when it is the
/// first to bind one of that literal's variables, closed transitively.
/// Literals that only re-test already bound variables pass nothing on.
pub fn build_sips(rule: &Rule, adornment: &Adornment, strategy: SipsStrategy) -> Sips {
    assert_eq!(
        rule.head.arity(),
        adornment.len(),
        "adornment length must match the head arity"
    );
    let head_bound: BTreeSet<String> = rule
        .head
        .args
        .iter()
        .enumerate()
        .filter(|(i, _)| adornment.is_bound(*i))
        .filter_map(|(_, t)| t.as_var().map(str::to_owned))
        .collect();

    let mut bnd = BTreeMap::new();
    bnd.insert(SipsNode::Head, head_bound.clone());
    let mut precedes = BTreeSet::new();
    for (i, l) in rule.body.iter().enumerate() {
        precedes.insert((SipsNode::Head, SipsNode::Body(i)));
        let vars = match l {
            Literal::Positive(a) => a.variables().map(str::to_owned).collect(),
            _ => BTreeSet::new(),
        };
        bnd.insert(SipsNode::Body(i), vars);
    }

    if strategy == SipsStrategy::LeftToRight {
        let mut known = head_bound;
        let mut before: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); rule.body.len()];
        let mut fresh: Vec<BTreeSet<&str>> = Vec::with_capacity(rule.body.len());
        for (j, l) in rule.body.iter().enumerate() {
            let vars: BTreeSet<&str> = l.variables().into_iter().collect();
            for (i, created) in fresh.iter().enumerate() {
                if !rule.body[i].is_positive() || created.is_disjoint(&vars) {
                    continue;
                }
                let inherited = before[i].clone();
                before[j].insert(i);
                before[j].extend(inherited);
            }
            let mut created = BTreeSet::new();
            if l.is_positive() {
                for v in &vars {
                    if known.insert((*v).to_owned()) {
                        created.insert(*v);
                    }
                }
            }
            fresh.push(created);
        }
        for (j, preds) in before.iter().enumerate() {
            for &i in preds {
                precedes.insert((SipsNode::Body(i), SipsNode::Body(j)));
            }
        }
    }

    Sips {
        rule: rule.clone(),
        precedes,
        bnd,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GuardNode {
    Pred(String),
    /// The representative `m#p` standing for every `m#p#s`.
    Magic(String),
}

impl fmt::Display for GuardNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GuardNode::Pred(p) => f.write_str(p),
            GuardNode::Magic(p) => write!(f, "{MAGIC_PREFIX}{p}"),
        }
    }
}

/// Working graph used to monitor SCCs during rewriting.
#[derive(Clone, Debug)]
pub struct GuardGraph {
    nodes: Vec<GuardNode>,
    index: BTreeMap<GuardNode, usize>,
    adj: Vec<BTreeSet<usize>>,
}

impl GuardGraph {
    /// The dependency graph plus an arc `p -> m#p` for every predicate.
    pub fn new(graph: &DependencyGraph) -> Self {
        let mut g = GuardGraph {
            nodes: Vec::new(),
            index: BTreeMap::new(),
            adj: Vec::new(),
        };
        for p in graph.nodes() {
            g.add_predicate(p);
        }
        for (a, b, _) in graph.arcs() {
            g.add_arc(
                &GuardNode::Pred(a.to_owned()),
                &GuardNode::Pred(b.to_owned()),
            );
        }
        g
    }

    pub fn add_predicate(&mut self, p: &str) {
        let pred = GuardNode::Pred(p.to_owned());
        if self.index.contains_key(&pred) {
            return;
        }
        let magic = GuardNode::Magic(p.to_owned());
        self.node(&pred);
        self.node(&magic);
        self.add_arc(&pred, &magic);
    }

    fn node(&mut self, n: &GuardNode) -> usize {
        if let Some(&i) = self.index.get(n) {
            return i;
        }
        let i = self.nodes.len();
        self.nodes.push(n.clone());
        self.index.insert(n.clone(), i);
        self.adj.push(BTreeSet::new());
        i
    }

    pub fn add_arc(&mut self, from: &GuardNode, to: &GuardNode) {
        let (a, b) = (self.node(from), self.node(to));
        self.adj[a].insert(b);
    }

    pub fn has_arc(&self, from: &GuardNode, to: &GuardNode) -> bool {
        match (self.index.get(from), self.index.get(to)) {
            (Some(&a), Some(&b)) => self.adj[a].contains(&b),
            _ => false,
        }
    }

    pub fn arcs(&self) -> impl Iterator<Item = (&GuardNode, &GuardNode)> {
        self.adj
            .iter()
            .enumerate()
            .flat_map(move |(a, out)| out.iter().map(move |&b| (&self.nodes[a], &self.nodes[b])))
    }

    /// SCCs of the graph with `extra` added, intersected with the original
    /// predicates; empty intersections are dropped.
    pub fn original_sccs_with(
        &self,
        extra: Option<(&GuardNode, &GuardNode)>,
    ) -> Vec<BTreeSet<String>> {
        let mut adj: Vec<Vec<usize>> = self
            .adj
            .iter()
            .map(|s| s.iter().copied().collect())
            .collect();
        let mut names = self.nodes.clone();
        if let Some((from, to)) = extra {
            let id = |n: &GuardNode, names: &mut Vec<GuardNode>, adj: &mut Vec<Vec<usize>>| {
                self.index.get(n).copied().unwrap_or_else(|| {
                    names.push(n.clone());
                    adj.push(Vec::new());
                    names.len() - 1
                })
            };
            let a = id(from, &mut names, &mut adj);
            let b = id(to, &mut names, &mut adj);
            adj[a].push(b);
        }
        let mut out: Vec<BTreeSet<String>> = tarjan(&adj)
            .into_iter()
            .map(|comp| {
                comp.into_iter()
                    .filter_map(|i| match &names[i] {
                        GuardNode::Pred(p) => Some(p.clone()),
                        GuardNode::Magic(_) => None,
                    })
                    .collect::<BTreeSet<String>>()
            })
            .filter(|c| !c.is_empty())
            .collect();
        out.sort();
        out
    }
}

/// True iff adding `arc` keeps the SCCs restricted to original predicates
/// equal to `original_sccs` (sorted, as returned by
/// [`strongly_connected_components`]).
pub fn guard_allows(
    graph: &GuardGraph,
    arc: (&GuardNode, &GuardNode),
    original_sccs: &[BTreeSet<String>],
) -> bool {
    graph.original_sccs_with(Some(arc)) == original_sccs
}

/// Output of the rewriter before deduplication.
#[derive(Clone, Debug)]
pub struct Rewriting {
    /// Seed, modified rules and magic rules in order of production.
    pub rules: Vec<Rule>,
    /// Facts over extensional predicates, passed through unchanged.
    pub database: Vec<Rule>,
    /// Adorned predicates in processing order.
    pub processed: Vec<AdornedPredicate>,
    pub guard: GuardGraph,
    /// Literals the guard removed from magic rule bodies: (rule, literal).
    pub discarded: Vec<(Rule, Literal)>,
}

impl Rewriting {
    /// Rules followed by the database, duplicates kept.
    pub fn raw_program(&self) -> Program {
        self.rules.iter().chain(&self.database).cloned().collect()
    }

    /// Rules followed by the database, first occurrence of each rule kept.
    pub fn program(&self) -> Program {
        dedup(self.raw_program())
    }
}

/// Removes repeated rules, keeping first occurrences in place.
pub fn dedup(program: Program) -> Program {
    let mut seen = HashSet::new();
    program
        .rules
        .into_iter()
        .filter(|r| seen.insert(r.clone()))
        .collect()
}

/// Magic Sets rewriting of `program` for `query`, deduplicated. Facts over
/// extensional predicates are appended unchanged.
pub fn magic_sets(query: &Atom, program: &Program, strategy: SipsStrategy) -> Result<Program> {
    Ok(rewrite(query, program, strategy)?.program())
}

/// Magic Sets rewriting with every intermediate artifact exposed.
pub fn rewrite(query: &Atom, program: &Program, strategy: SipsStrategy) -> Result<Rewriting> {
    crate::eval::check_query(program, query).or_else(|e| match e {
        Error::UnknownPredicate(_) => Ok(()),
        other => Err(other),
    })?;
    stratify(program)?;

    let graph = build_dependency_graph(program);
    let original_sccs = strongly_connected_components(&graph);
    let intentional: BTreeSet<&str> = program.intentional_predicates();
    let database: Vec<Rule> = program
        .iter()
        .filter(|r| r.is_fact() && !intentional.contains(r.head.predicate.as_str()))
        .cloned()
        .collect();
    let mut defining: BTreeMap<&str, Vec<&Rule>> = BTreeMap::new();
    for r in program.iter() {
        if intentional.contains(r.head.predicate.as_str()) {
            defining.entry(&r.head.predicate).or_default().push(r);
        }
    }

    let (seed_adornment, seed) = seed_adornment(query);
    let mut guard = GuardGraph::new(&graph);
    guard.add_predicate(&query.predicate);
    let mut out = Rewriting {
        rules: vec![seed],
        database,
        processed: Vec::new(),
        guard: guard.clone(),
        discarded: Vec::new(),
    };
    if !intentional.contains(query.predicate.as_str()) {
        out.guard = guard;
        return Ok(out);
    }

    // Every magic-to-magic arc the loop can add is known up front: one per
    // intentional body predicate of each rule reachable from the query.
    // Installing them before any literal is vetted means no later arc can
    // close a cycle through a literal that was accepted earlier.
    for r in reachable_rules(&query.predicate, &defining) {
        for a in r.body.iter().filter_map(Literal::atom) {
            if intentional.contains(a.predicate.as_str()) {
                guard.add_arc(
                    &GuardNode::Magic(a.predicate.clone()),
                    &GuardNode::Magic(r.head.predicate.clone()),
                );
            }
        }
    }

    let start = AdornedPredicate {
        predicate: query.predicate.clone(),
        adornment: seed_adornment,
    };
    let mut produced: HashSet<AdornedPredicate> = HashSet::from([start.clone()]);
    let mut queue = VecDeque::from([start]);

    while let Some(current) = queue.pop_front() {
        let head_magic = GuardNode::Magic(current.predicate.clone());
        for &r in defining
            .get(current.predicate.as_str())
            .into_iter()
            .flatten()
        {
            let restrict = magic_atom_of(&r.head, &current.adornment)?;
            let mut body = Vec::with_capacity(r.body.len() + 1);
            body.push(Literal::Positive(restrict.clone()));
            body.extend(r.body.iter().cloned());
            out.rules.push(Rule::new(r.head.clone(), body));

            let sips = build_sips(r, &current.adornment, SipsStrategy::clone(&strategy));
            for (i, lit) in r.body.iter().enumerate() {
                let Some(atom) = lit.atom() else { continue };
                if !intentional.contains(atom.predicate.as_str()) {
                    continue;
                }
                let body_magic = GuardNode::Magic(atom.predicate.clone());
                guard.add_arc(&body_magic, &head_magic);

                let mut kept = Vec::new();
                for j in sips.body_predecessors(i) {
                    let Some(prev) = r.body[j].atom() else {
                        continue;
                    };
                    let target = GuardNode::Pred(prev.predicate.clone());
                    let ok = guard.has_arc(&body_magic, &target)
                        || guard_allows(&guard, (&body_magic, &target), &original_sccs);
                    if ok {
                        guard.add_arc(&body_magic, &target);
                        kept.push(j);
                    } else {
                        out.discarded.push((r.clone(), r.body[j].clone()));
                    }
                }

                let mut passed: BTreeSet<&str> = sips
                    .bnd(SipsNode::Head)
                    .iter()
                    .map(String::as_str)
                    .collect();
                for &j in &kept {
                    passed.extend(sips.bnd(SipsNode::Body(j)).iter().map(String::as_str));
                }
                let adornment = Adornment(
                    atom.args
                        .iter()
                        .map(|t| match t {
                            Term::Const(_) => Binding::Bound,
                            Term::Var(v) if passed.contains(v.as_str()) => Binding::Bound,
                            Term::Var(_) => Binding::Free,
                        })
                        .collect(),
                );

                let mut magic_body = Vec::with_capacity(kept.len() + 1);
                magic_body.push(Literal::Positive(restrict.clone()));
                magic_body.extend(kept.iter().map(|&j| r.body[j].clone()));
                out.rules
                    .push(Rule::new(magic_atom_of(atom, &adornment)?, magic_body));

                let next = AdornedPredicate {
                    predicate: atom.predicate.clone(),
                    adornment,
                };
                if produced.insert(next.clone()) {
                    queue.push_back(next);
                }
            }
        }
        out.processed.push(current);
    }
    out.guard = guard;
    Ok(out)
}

fn reachable_rules<'a>(from: &str, defining: &BTreeMap<&str, Vec<&'a Rule>>) -> Vec<&'a Rule> {
    let mut seen = BTreeSet::from([from.to_owned()]);
    let mut stack = vec![from.to_owned()];
    let mut out = Vec::new();
    while let Some(p) = stack.pop() {
        for &r in defining.get(p.as_str()).into_iter().flatten() {
            out.push(r);
            for a in r.body.iter().filter_map(Literal::atom) {
                if seen.insert(a.predicate.clone()) {
                    stack.push(a.predicate.clone());
                }
            }
        }
    }
    out
}

/// Collapses every adorned variant of a predicate onto its full-free variant
/// when the program has one, keeping duplicates produced by the rewrite.
pub fn full_free_raw(program: &Program) -> Program {
    // First pass: predicates with a full-free magic variant.
    let mut flagged: BTreeMap<String, usize> = BTreeMap::new();
    for a in program.atoms() {
        if let Some((p, s)) = parse_magic_name(&a.predicate) {
            if s.is_full_free() {
                flagged.insert(p.to_owned(), s.len());
            }
        }
    }
    let demoted = |a: &Atom| -> Option<(String, usize)> {
        let (p, s) = parse_magic_name(&a.predicate)?;
        if s.is_full_free() {
            return None;
        }
        flagged.get(p).map(|&k| (p.to_owned(), k))
    };

    // Second pass: drop rules reading a non-full-free variant, retarget heads.
    let mut out = Vec::with_capacity(program.len());
    for r in program.iter() {
        if r.body
            .iter()
            .filter_map(Literal::atom)
            .any(|a| demoted(a).is_some())
        {
            continue;
        }
        match demoted(&r.head) {
            Some((p, k)) => {
                let head = Atom::new(magic_name(&p, &Adornment::free(k)), Vec::new());
                out.push(Rule::new(head, r.body.clone()));
            }
            None => out.push(r.clone()),
        }
    }
    Program::new(out)
}

/// [`full_free_raw`] followed by deduplication.
pub fn full_free(program: &Program) -> Program {
    dedup(full_free_raw(program))
}
