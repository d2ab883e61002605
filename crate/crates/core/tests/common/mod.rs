//! Reference implementations used to check the engine. They work directly on
//! the AST and share no code with the library beyond it.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use datalog_magic::dl::{AboxAssertion, ConjunctiveQuery, KnowledgeBase, TBoxAxiom};
use datalog_magic::{Atom, Literal, Program, Rule, Term};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const P_JOB: &str = "
    dep(X,Y) :- require(X,Y).
    dep(X,Y) :- require(X,Z), dep(Z,Y).
    par(X,Y) :- job(X), job(Y), not dep(X,Y), not dep(Y,X).
";

pub const D_JOB: &str = "
    job(a). job(b).          require(a,b).
    job(c). job(d). job(e).  require(c,d). require(d,e).
";

pub fn job_program() -> Program {
    datalog_magic::parse_program(&format!("{D_JOB}\n{P_JOB}")).unwrap()
}

type Env = BTreeMap<String, String>;

fn value(t: &Term, env: &Env) -> Option<String> {
    match t {
        Term::Const(c) => Some(c.clone()),
        Term::Var(v) => env.get(v).cloned(),
    }
}

fn ground(a: &Atom, env: &Env) -> (String, Vec<String>) {
    let args = a
        .args
        .iter()
        .map(|t| value(t, env).expect("bound"))
        .collect();
    (a.predicate.clone(), args)
}

fn unify(a: &Atom, fact: &[String], env: &Env) -> Option<Env> {
    let mut env = env.clone();
    for (t, v) in a.args.iter().zip(fact) {
        match t {
            Term::Const(c) if c != v => return None,
            Term::Const(_) => {}
            Term::Var(x) => match env.get(x) {
                Some(bound) if bound != v => return None,
                Some(_) => {}
                None => {
                    env.insert(x.clone(), v.clone());
                }
            },
        }
    }
    Some(env)
}

pub type Facts = BTreeMap<String, BTreeSet<Vec<String>>>;

fn matches(positive: &[&Atom], facts: &Facts, env: Env, out: &mut Vec<Env>) {
    let Some((first, rest)) = positive.split_first() else {
        out.push(env);
        return;
    };
    if let Some(rows) = facts.get(&first.predicate) {
        for row in rows {
            if row.len() == first.arity() {
                if let Some(next) = unify(first, row, &env) {
                    matches(rest, facts, next, out);
                }
            }
        }
    }
}

fn fire(rule: &Rule, facts: &Facts) -> Vec<(String, Vec<String>)> {
    let positive: Vec<&Atom> = rule.positive_atoms().collect();
    let mut envs = Vec::new();
    matches(&positive, facts, Env::new(), &mut envs);
    envs.into_iter()
        .filter(|env| {
            rule.body.iter().all(|l| match l {
                Literal::Positive(_) => true,
                Literal::Negative(a) => {
                    let (p, args) = ground(a, env);
                    !facts.get(&p).is_some_and(|rows| rows.contains(&args))
                }
                Literal::NotEqual(a, b) => value(a, env) != value(b, env),
            })
        })
        .map(|env| ground(&rule.head, &env))
        .collect()
}

/// Stratum numbers by the classic level assignment, or `None` when a
/// negative dependency lies on a cycle.
pub fn levels(p: &Program) -> Option<BTreeMap<String, usize>> {
    let mut level: BTreeMap<String, usize> = BTreeMap::new();
    for a in p.atoms() {
        level.insert(a.predicate.clone(), 0);
    }
    let bound = level.len();
    loop {
        let mut changed = false;
        for r in p.iter() {
            for l in &r.body {
                let (q, step) = match l {
                    Literal::Positive(a) => (&a.predicate, 0),
                    Literal::Negative(a) => (&a.predicate, 1),
                    Literal::NotEqual(..) => continue,
                };
                let need = level[q] + step;
                if level[&r.head.predicate] < need {
                    level.insert(r.head.predicate.clone(), need);
                    changed = true;
                    if need > bound {
                        return None;
                    }
                }
            }
        }
        if !changed {
            return Some(level);
        }
    }
}

/// Perfect model by naive iteration, stratum by stratum.
pub fn naive_model(p: &Program) -> Option<BTreeSet<Atom>> {
    let level = levels(p)?;
    let top = level.values().copied().max().unwrap_or(0);
    let mut facts: Facts = BTreeMap::new();
    for l in 0..=top {
        let rules: Vec<&Rule> = p.iter().filter(|r| level[&r.head.predicate] == l).collect();
        loop {
            let mut new = Vec::new();
            for r in &rules {
                for (pred, args) in fire(r, &facts) {
                    if !facts.get(&pred).is_some_and(|rows| rows.contains(&args)) {
                        new.push((pred, args));
                    }
                }
            }
            if new.is_empty() {
                break;
            }
            for (pred, args) in new {
                facts.entry(pred).or_default().insert(args);
            }
        }
    }
    Some(
        facts
            .into_iter()
            .flat_map(|(p, rows)| rows.into_iter().map(move |r| Atom::ground(p.clone(), &r)))
            .collect(),
    )
}

/// Answers to `query` in a set of ground atoms, as bindings of its variables.
pub fn oracle_answers(model: &BTreeSet<Atom>, query: &Atom) -> BTreeSet<BTreeMap<String, String>> {
    model
        .iter()
        .filter(|a| a.predicate == query.predicate && a.arity() == query.arity())
        .filter_map(|a| {
            let row: Vec<String> = a.args.iter().map(|t| t.name().to_owned()).collect();
            unify(query, &row, &Env::new())
        })
        .collect()
}

pub type Arcs = BTreeSet<(String, String, bool)>;

/// Predicate-level arcs `head -> body` with a negation flag.
pub fn arcs(p: &Program) -> (BTreeSet<String>, Arcs) {
    let mut nodes = BTreeSet::new();
    let mut arcs = BTreeSet::new();
    for r in p.iter() {
        nodes.insert(r.head.predicate.clone());
        for l in &r.body {
            let (a, neg) = match l {
                Literal::Positive(a) => (a, false),
                Literal::Negative(a) => (a, true),
                Literal::NotEqual(..) => continue,
            };
            nodes.insert(a.predicate.clone());
            arcs.insert((r.head.predicate.clone(), a.predicate.clone(), neg));
        }
    }
    (nodes, arcs)
}

fn reachable(from: &str, arcs: &Arcs) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([from.to_owned()]);
    while let Some(n) = queue.pop_front() {
        for (a, b, _) in arcs {
            if *a == n && seen.insert(b.clone()) {
                queue.push_back(b.clone());
            }
        }
    }
    seen
}

/// SCCs as mutual reachability classes.
pub fn scc_oracle(nodes: &BTreeSet<String>, arcs: &Arcs) -> BTreeSet<BTreeSet<String>> {
    let reach: BTreeMap<&String, BTreeSet<String>> =
        nodes.iter().map(|n| (n, reachable(n, arcs))).collect();
    nodes
        .iter()
        .map(|p| {
            let mut comp: BTreeSet<String> = nodes
                .iter()
                .filter(|q| reach[p].contains(*q) && reach[q].contains(p))
                .cloned()
                .collect();
            comp.insert(p.clone());
            comp
        })
        .collect()
}

/// Stratified iff no negative arc has both ends in one SCC.
pub fn stratified_oracle(p: &Program) -> bool {
    let (nodes, arcs) = arcs(p);
    let sccs = scc_oracle(&nodes, &arcs);
    arcs.iter()
        .filter(|(_, _, neg)| *neg)
        .all(|(a, b, _)| !sccs.iter().any(|c| c.contains(a) && c.contains(b)))
}

/// Original name behind a magic predicate `m#p#s`, or the name itself.
pub fn representative(pred: &str) -> String {
    match pred
        .strip_prefix("m#")
        .and_then(|rest| rest.rsplit_once('#'))
    {
        Some((p, _)) => format!("m#{p}"),
        None => pred.to_owned(),
    }
}

/// Checks that collapsing magic predicates onto representatives leaves the
/// component structure over original predicates unchanged.
pub fn sccs_preserved(original: &Program, rewritten: &Program) -> Result<(), String> {
    let (onodes, oarcs) = arcs(original);
    let osccs = scc_oracle(&onodes, &oarcs);
    let (rnodes, rarcs) = arcs(rewritten);
    let mnodes: BTreeSet<String> = rnodes.iter().map(|n| representative(n)).collect();
    let marcs: Arcs = rarcs
        .iter()
        .map(|(a, b, n)| (representative(a), representative(b), *n))
        .collect();
    let msccs = scc_oracle(&mnodes, &marcs);
    let present: Vec<&String> = mnodes.iter().filter(|n| onodes.contains(*n)).collect();
    for &a in &present {
        for &b in &present {
            let before = osccs.iter().any(|c| c.contains(a) && c.contains(b));
            let after = msccs.iter().any(|c| c.contains(a) && c.contains(b));
            if before != after {
                return Err(format!(
                    "{a} and {b}: together before={before}, after={after}"
                ));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Case {
    pub program: Program,
    pub query: Atom,
}

const VARS: &[&str] = &["X", "Y", "Z", "W"];

fn random_term(rng: &mut ChaCha8Rng, consts: &[String], pool: &[&str], p_const: f64) -> Term {
    if pool.is_empty() || rng.gen_bool(p_const) {
        Term::constant(consts.choose(rng).unwrap().clone())
    } else {
        Term::var(*pool.choose(rng).unwrap())
    }
}

/// A random stratified program with at most 4 intentional predicates of
/// arity at most 2, at most 6 constants and at most 8 rules, plus a query.
pub fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let consts: Vec<String> = (0..rng.gen_range(1..=6)).map(|i| format!("c{i}")).collect();
    let edb: Vec<(String, usize)> = vec![("e0".into(), 1), ("e1".into(), 2), ("e2".into(), 2)];
    let idb: Vec<(String, usize, usize)> = (0..rng.gen_range(1..=4))
        .map(|i| {
            let arity = if rng.gen_bool(0.1) {
                0
            } else {
                rng.gen_range(1..=2)
            };
            (format!("p{i}"), arity, rng.gen_range(0..=3))
        })
        .collect();

    let mut rules = Vec::new();
    for (name, arity) in &edb {
        for _ in 0..rng.gen_range(0..=8) {
            let args: Vec<&String> = (0..*arity).map(|_| consts.choose(rng).unwrap()).collect();
            rules.push(Rule::fact(Atom::ground(name.clone(), &args)));
        }
    }
    // a few facts over intentional predicates
    for _ in 0..rng.gen_range(0..=2) {
        let (name, arity, _) = idb.choose(rng).unwrap();
        let args: Vec<&String> = (0..*arity).map(|_| consts.choose(rng).unwrap()).collect();
        rules.push(Rule::fact(Atom::ground(name.clone(), &args)));
    }

    for _ in 0..rng.gen_range(1..=8) {
        let (head_name, head_arity, head_level) = idb.choose(rng).unwrap().clone();
        let usable_pos: Vec<(String, usize)> = edb
            .iter()
            .cloned()
            .chain(
                idb.iter()
                    .filter(|p| p.2 <= head_level)
                    .map(|p| (p.0.clone(), p.1)),
            )
            .collect();
        let usable_neg: Vec<(String, usize)> = edb
            .iter()
            .cloned()
            .chain(
                idb.iter()
                    .filter(|p| p.2 < head_level)
                    .map(|p| (p.0.clone(), p.1)),
            )
            .collect();

        let mut body = Vec::new();
        let mut bound: BTreeSet<&str> = BTreeSet::new();
        for _ in 0..rng.gen_range(1..=3) {
            let (name, arity) = usable_pos.choose(rng).unwrap();
            let args: Vec<Term> = (0..*arity)
                .map(|_| random_term(rng, &consts, VARS, 0.15))
                .collect();
            for t in &args {
                if let Term::Var(v) = t {
                    bound.insert(VARS.iter().find(|x| **x == v).unwrap());
                }
            }
            body.push(Literal::Positive(Atom::new(name.clone(), args)));
        }
        let pool: Vec<&str> = bound.iter().copied().collect();
        for _ in 0..rng.gen_range(0..=2) {
            let (name, arity) = usable_neg.choose(rng).unwrap();
            let args = (0..*arity)
                .map(|_| random_term(rng, &consts, &pool, 0.2))
                .collect();
            body.push(Literal::Negative(Atom::new(name.clone(), args)));
        }
        body.shuffle(rng);
        let head_args = (0..head_arity)
            .map(|_| random_term(rng, &consts, &pool, 0.1))
            .collect();
        rules.push(Rule::new(Atom::new(head_name, head_args), body));
    }

    let (qname, qarity) = if rng.gen_bool(0.85) {
        let (n, a, _) = idb.choose(rng).unwrap();
        (n.clone(), *a)
    } else {
        edb.choose(rng).unwrap().clone()
    };
    let query = Atom::new(
        qname,
        (0..qarity)
            .map(|_| random_term(rng, &consts, &["X", "Y"], 0.4))
            .collect(),
    );
    Case {
        program: Program::new(rules),
        query,
    }
}

// ---------------------------------------------------------------------------
// Description logic oracle

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DlFacts {
    pub concepts: BTreeSet<(String, String)>,
    pub roles: BTreeSet<(String, String, String)>,
    pub clash: bool,
}

impl DlFacts {
    fn has_c(&self, c: &str, x: &str) -> bool {
        self.concepts.contains(&(c.to_owned(), x.to_owned()))
    }

    fn pairs<'a>(&'a self, r: &'a str) -> impl Iterator<Item = (&'a String, &'a String)> + 'a {
        self.roles
            .iter()
            .filter(move |t| t.0 == r)
            .map(|t| (&t.1, &t.2))
    }

    fn members<'a>(&'a self, c: &'a str) -> impl Iterator<Item = &'a String> + 'a {
        self.concepts.iter().filter(move |t| t.0 == c).map(|t| &t.1)
    }
}

/// Forward chaining with the first-order reading of each axiom.
pub fn dl_saturate(kb: &KnowledgeBase) -> DlFacts {
    use TBoxAxiom::*;
    let mut f = DlFacts::default();
    for a in &kb.abox {
        match a {
            AboxAssertion::Concept(c, x) => {
                f.concepts.insert((c.clone(), x.clone()));
            }
            AboxAssertion::Role(r, x, y) => {
                f.roles.insert((r.clone(), x.clone(), y.clone()));
            }
        }
    }
    loop {
        let mut nc: Vec<(String, String)> = Vec::new();
        let mut nr: Vec<(String, String, String)> = Vec::new();
        for ax in &kb.tbox {
            match ax {
                Sub(b, a) => nc.extend(f.members(b).map(|x| (a.clone(), x.clone()))),
                ConjSub(b1, b2, a) => nc.extend(
                    f.members(b1)
                        .filter(|x| f.has_c(b2, x))
                        .map(|x| (a.clone(), x.clone())),
                ),
                ValueRestr(b, r, a) => nc.extend(
                    f.pairs(r)
                        .filter(|(x, _)| f.has_c(b, x))
                        .map(|(_, y)| (a.clone(), y.clone())),
                ),
                ExistsSub(r, b, a) => nc.extend(
                    f.pairs(r)
                        .filter(|(_, y)| f.has_c(b, y))
                        .map(|(x, _)| (a.clone(), x.clone())),
                ),
                DomainSub(r, a) => nc.extend(f.pairs(r).map(|(x, _)| (a.clone(), x.clone()))),
                RangeSub(r, a) => nc.extend(f.pairs(r).map(|(_, y)| (a.clone(), y.clone()))),
                ExistHead(..) => panic!("oracle has no existential witnesses"),
                Disjoint(..) | MaxCard(..) | RoleDisjoint(..) => {}
                RoleSub(s, r) => {
                    nr.extend(f.pairs(s).map(|(x, y)| (r.clone(), x.clone(), y.clone())))
                }
                InvRoleSub(s, r) => {
                    nr.extend(f.pairs(s).map(|(x, y)| (r.clone(), y.clone(), x.clone())))
                }
                Transitive(r) => {
                    for (x, y) in f.pairs(r) {
                        for (y2, z) in f.pairs(r) {
                            if y == y2 {
                                nr.push((r.clone(), x.clone(), z.clone()));
                            }
                        }
                    }
                }
                RoleChain(s, p, r) => {
                    for (x, y) in f.pairs(s) {
                        for (y2, z) in f.pairs(p) {
                            if y == y2 {
                                nr.push((r.clone(), x.clone(), z.clone()));
                            }
                        }
                    }
                }
            }
        }
        let before = (f.concepts.len(), f.roles.len());
        f.concepts.extend(nc);
        f.roles.extend(nr);
        if (f.concepts.len(), f.roles.len()) == before {
            break;
        }
    }
    f.clash = kb.tbox.iter().any(|ax| match ax {
        Disjoint(b, a) => f.members(b).any(|x| f.has_c(a, x)),
        MaxCard(b, r, a) => f.members(b).any(|x| {
            let succ: BTreeSet<&String> = f
                .pairs(r)
                .filter(|(s, y)| *s == x && f.has_c(a, y))
                .map(|(_, y)| y)
                .collect();
            succ.len() >= 2
        }),
        RoleDisjoint(s, r) => f
            .pairs(s)
            .any(|(x, y)| f.roles.contains(&(r.clone(), x.clone(), y.clone()))),
        _ => false,
    });
    f
}

/// Answers by trying every assignment of individuals to query variables.
pub fn cq_oracle(
    facts: &DlFacts,
    q: &ConjunctiveQuery,
    individuals: &BTreeSet<String>,
) -> BTreeSet<Vec<String>> {
    let vars: Vec<String> = {
        let mut seen = Vec::new();
        for a in &q.body {
            for v in a.variables() {
                if !seen.iter().any(|s: &String| s == v) {
                    seen.push(v.to_owned());
                }
            }
        }
        seen
    };
    let domain: Vec<&String> = individuals.iter().collect();
    let mut out = BTreeSet::new();
    let mut assignment = vec![0usize; vars.len()];
    loop {
        let env: Env = vars
            .iter()
            .cloned()
            .zip(
                assignment
                    .iter()
                    .map(|&i| domain.get(i).map(|s| (*s).clone()).unwrap_or_default()),
            )
            .collect();
        let holds = !domain.is_empty() || vars.is_empty();
        if holds
            && q.body.iter().all(|a| {
                let args: Vec<String> = a.args.iter().map(|t| value(t, &env).unwrap()).collect();
                match args.as_slice() {
                    [x] => facts.has_c(&a.predicate, x),
                    [x, y] => facts
                        .roles
                        .contains(&(a.predicate.clone(), x.clone(), y.clone())),
                    _ => false,
                }
            })
        {
            out.insert(q.answer_vars.iter().map(|v| env[v].clone()).collect());
        }
        // next assignment
        let mut i = 0;
        loop {
            if i == assignment.len() {
                return out;
            }
            assignment[i] += 1;
            if assignment[i] < domain.len() {
                break;
            }
            assignment[i] = 0;
            i += 1;
        }
    }
}

pub fn individuals(kb: &KnowledgeBase, q: Option<&ConjunctiveQuery>) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for a in &kb.abox {
        match a {
            AboxAssertion::Concept(_, x) => {
                out.insert(x.clone());
            }
            AboxAssertion::Role(_, x, y) => {
                out.insert(x.clone());
                out.insert(y.clone());
            }
        }
    }
    if let Some(q) = q {
        for a in &q.body {
            for t in &a.args {
                if let Term::Const(c) = t {
                    out.insert(c.clone());
                }
            }
        }
    }
    out
}

const CONCEPTS: &[&str] = &["A0", "A1", "A2", "A3"];
const ROLES: &[&str] = &["r0", "r1", "r2"];

fn pick(rng: &mut ChaCha8Rng, names: &[&str]) -> String {
    (*names.choose(rng).unwrap()).to_owned()
}

/// Any axiom with a plain Datalog reading.
pub fn random_axiom(rng: &mut ChaCha8Rng) -> TBoxAxiom {
    use TBoxAxiom::*;
    let c = |rng: &mut ChaCha8Rng| pick(rng, CONCEPTS);
    let r = |rng: &mut ChaCha8Rng| pick(rng, ROLES);
    match rng.gen_range(0..13) {
        0 => Sub(c(rng), c(rng)),
        1 => ConjSub(c(rng), c(rng), c(rng)),
        2 => ValueRestr(c(rng), r(rng), c(rng)),
        3 => ExistsSub(r(rng), c(rng), c(rng)),
        4 => DomainSub(r(rng), c(rng)),
        5 => RangeSub(r(rng), c(rng)),
        6 => Disjoint(c(rng), c(rng)),
        7 => MaxCard(c(rng), r(rng), c(rng)),
        8 => RoleSub(r(rng), r(rng)),
        9 => InvRoleSub(r(rng), r(rng)),
        10 => Transitive(r(rng)),
        11 => RoleChain(r(rng), r(rng), r(rng)),
        _ => RoleDisjoint(r(rng), r(rng)),
    }
}

/// At most 6 axioms, at most 8 individuals, a query of at most 3 atoms.
pub fn random_kb(rng: &mut ChaCha8Rng) -> (KnowledgeBase, ConjunctiveQuery) {
    let tbox = (0..rng.gen_range(0..=6))
        .map(|_| random_axiom(rng))
        .collect();
    let inds: Vec<String> = (0..rng.gen_range(1..=8)).map(|i| format!("i{i}")).collect();
    let abox = (0..rng.gen_range(0..=12))
        .map(|_| {
            if rng.gen_bool(0.5) {
                AboxAssertion::Concept(pick(rng, CONCEPTS), inds.choose(rng).unwrap().clone())
            } else {
                AboxAssertion::Role(
                    pick(rng, ROLES),
                    inds.choose(rng).unwrap().clone(),
                    inds.choose(rng).unwrap().clone(),
                )
            }
        })
        .collect();

    let term = |rng: &mut ChaCha8Rng| {
        if rng.gen_bool(0.15) {
            Term::constant(inds.choose(rng).unwrap().clone())
        } else {
            Term::var(*["X", "Y", "Z"].choose(rng).unwrap())
        }
    };
    let body: Vec<Atom> = (0..rng.gen_range(1..=3))
        .map(|_| {
            if rng.gen_bool(0.5) {
                Atom::new(pick(rng, CONCEPTS), vec![term(rng)])
            } else {
                Atom::new(pick(rng, ROLES), vec![term(rng), term(rng)])
            }
        })
        .collect();
    let vars: BTreeSet<&str> = body.iter().flat_map(Atom::variables).collect();
    let answer_vars = vars
        .into_iter()
        .filter(|_| rng.gen_bool(0.6))
        .map(str::to_owned)
        .collect();
    (
        KnowledgeBase { tbox, abox },
        ConjunctiveQuery { answer_vars, body },
    )
}

// ---------------------------------------------------------------------------
// Per-case checks shared by the property tests and the acceptance run

fn to_map(s: &datalog_magic::Substitution) -> BTreeMap<String, String> {
    s.iter()
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect()
}

#[derive(Debug, Default)]
pub struct CaseReport {
    /// Semi-naive model differs from the naive oracle.
    pub eval: Option<String>,
    /// Rewritten program unstratified or answers differ.
    pub magic: Option<String>,
    /// Rewriting merged components of the original program.
    pub scc: Option<String>,
}

pub fn check_case(case: &Case) -> CaseReport {
    use datalog_magic::magic::{full_free, magic_sets, SipsStrategy};
    use datalog_magic::stratify::{build_dependency_graph, check_stratification};

    let mut report = CaseReport::default();
    let Some(expected_model) = naive_model(&case.program) else {
        report.eval = Some("generator produced an unstratified program".into());
        return report;
    };
    match datalog_magic::evaluate(&case.program) {
        Ok(m) if m.as_set() == &expected_model => {}
        Ok(m) => {
            let got = m.as_set();
            report.eval = Some(format!(
                "missing {:?}, extra {:?}",
                expected_model
                    .difference(got)
                    .map(ToString::to_string)
                    .collect::<Vec<_>>(),
                got.difference(&expected_model)
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
            ));
        }
        Err(e) => report.eval = Some(e.to_string()),
    }

    let expected = oracle_answers(&expected_model, &case.query);
    for sips in [SipsStrategy::LeftToRight, SipsStrategy::Parallel] {
        for unroll in [false, true] {
            let tag = format!("{sips:?}{}", if unroll { "+full-free" } else { "" });
            let rewritten = match magic_sets(&case.query, &case.program, sips) {
                Ok(p) if unroll => full_free(&p),
                Ok(p) => p,
                Err(e) => {
                    report.magic.get_or_insert(format!("{tag}: {e}"));
                    continue;
                }
            };
            if !stratified_oracle(&rewritten)
                || !check_stratification(&build_dependency_graph(&rewritten))
            {
                report
                    .magic
                    .get_or_insert(format!("{tag}: rewriting is not stratified"));
                continue;
            }
            if let Err(e) = sccs_preserved(&case.program, &rewritten) {
                report.scc.get_or_insert(format!("{tag}: {e}"));
            }
            match datalog_magic::evaluate_model(&rewritten, Default::default()) {
                Ok(model) => {
                    let got: BTreeSet<BTreeMap<String, String>> =
                        model.answers(&case.query).iter().map(to_map).collect();
                    if got != expected {
                        report
                            .magic
                            .get_or_insert(format!("{tag}: expected {expected:?}, got {got:?}"));
                    }
                }
                Err(e) => {
                    report.magic.get_or_insert(format!("{tag}: {e}"));
                }
            }
        }
    }
    report
}

/// Certain answers with and without magic against the saturation oracle.
pub fn check_kb(kb: &KnowledgeBase, q: &ConjunctiveQuery) -> Result<(), String> {
    let facts = dl_saturate(kb);
    let expected = cq_oracle(&facts, q, &individuals(kb, Some(q)));
    for magic in [false, true] {
        let got = datalog_magic::dl::certain_answers(kb, q, magic).map_err(|e| e.to_string())?;
        if got != expected {
            return Err(format!("magic={magic}: expected {expected:?}, got {got:?}"));
        }
    }
    let consistent = datalog_magic::dl::check_consistency(kb).map_err(|e| e.to_string())?;
    if consistent == facts.clash {
        return Err(format!(
            "consistency: engine says {consistent}, oracle clash {}",
            facts.clash
        ));
    }
    Ok(())
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Program from `text`, including `m#` names.
pub fn program(text: &str) -> Program {
    datalog_magic::parser::parse_program_with(
        text,
        datalog_magic::parser::ParseOptions {
            allow_reserved: true,
        },
    )
    .unwrap()
}

// ---------------------------------------------------------------------------
// Per-axiom fidelity over three individuals

/// One axiom row: a label and the KB lines that must all translate to rules
/// agreeing with the oracle. An empty list marks a row that must be rejected.
pub const ROWS: &[(&str, &[&str])] = &[
    ("B subClassOf A", &["B subClassOf A"]),
    ("B1 and B2 subClassOf A", &["B1 and B2 subClassOf A"]),
    (
        "B subClassOf all R . A",
        &[
            "B subClassOf all R . A",
            "exists inverse R . B subClassOf A",
        ],
    ),
    ("exists R . B subClassOf A", &["exists R . B subClassOf A"]),
    (
        "domain R subClassOf A",
        &["domain R subClassOf A", "exists R . top subClassOf A"],
    ),
    ("range R subClassOf A", &["range R subClassOf A"]),
    ("B subClassOf exists R . A", &[]),
    ("B subClassOf not A", &["B subClassOf not A"]),
    (
        "B subClassOf maxcard 1 R . A",
        &["B subClassOf maxcard 1 R . A"],
    ),
    ("S subPropertyOf R", &["S subPropertyOf R"]),
    ("inverse S subPropertyOf R", &["inverse S subPropertyOf R"]),
    ("transitive R", &["transitive R"]),
    ("S o P subPropertyOf R", &["S o P subPropertyOf R"]),
    ("disjointProperty S R", &["disjointProperty S R"]),
];

fn engine_facts(kb: &KnowledgeBase) -> Result<DlFacts, String> {
    let names = datalog_magic::dl::NameMap::of(kb).map_err(|e| e.to_string())?;
    let program = datalog_magic::dl::translate_kb(kb).map_err(|e| e.to_string())?;
    let model = datalog_magic::evaluate(&program).map_err(|e| e.to_string())?;
    let mut f = DlFacts::default();
    for a in model.iter() {
        let args: Vec<String> = a.args.iter().map(|t| t.name().to_owned()).collect();
        let name = names.original(&a.predicate).to_owned();
        match args.as_slice() {
            [] if a.predicate == "inconsistent" => f.clash = true,
            [x] => {
                f.concepts.insert((name, x.clone()));
            }
            [x, y] => {
                f.roles.insert((name, x.clone(), y.clone()));
            }
            _ => return Err(format!("unexpected atom {a}")),
        }
    }
    Ok(f)
}

/// Checks `line` against the oracle on ABoxes over `{a, b, c}`: all of them
/// when there are at most 2^16, otherwise a seeded sample.
pub fn check_row(line: &str) -> Result<usize, String> {
    let (kb, _) = datalog_magic::dl::parse_kb(line).map_err(|e| e.to_string())?;
    let ax = kb.tbox.first().ok_or("no axiom")?;
    let inds = ["a", "b", "c"];
    let mut universe = Vec::new();
    for c in ax.concepts() {
        for x in inds {
            universe.push(AboxAssertion::Concept(c.to_owned(), x.to_owned()));
        }
    }
    for r in ax.roles() {
        for x in inds {
            for y in inds {
                universe.push(AboxAssertion::Role(
                    r.to_owned(),
                    x.to_owned(),
                    y.to_owned(),
                ));
            }
        }
    }
    universe.sort();
    universe.dedup();
    let n = universe.len();
    let masks: Vec<u64> = if n <= 16 {
        (0..1u64 << n).collect()
    } else {
        let mut rng = seeded(n as u64);
        (0..4000)
            .map(|_| rng.gen::<u64>() & ((1u64 << n) - 1))
            .collect()
    };
    let mut clashes = 0;
    for &mask in &masks {
        let abox = universe
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, a)| a.clone())
            .collect();
        let instance = KnowledgeBase {
            tbox: kb.tbox.clone(),
            abox,
        };
        let expected = dl_saturate(&instance);
        let got = engine_facts(&instance)?;
        if got != expected {
            return Err(format!(
                "ABox {:?}: expected {expected:?}, got {got:?}",
                instance.abox
            ));
        }
        clashes += usize::from(expected.clash);
    }
    Ok(clashes)
}

/// The row must be refused with the existential-head error.
pub fn check_rejected(line: &str) -> Result<(), String> {
    use datalog_magic::{Error, KbError};
    let (kb, _) = datalog_magic::dl::parse_kb(line).map_err(|e| e.to_string())?;
    match datalog_magic::dl::translate_kb(&kb) {
        Err(Error::Kb(KbError::ExistentialHeadUnsupported(v))) if v.len() == 1 => Ok(()),
        other => Err(format!("expected rejection, got {other:?}")),
    }
}

/// Runs every line of a row; constraint rows must also see their constraint
/// fire at least once.
pub fn check_row_entry(label: &str, lines: &[&str]) -> Result<(), String> {
    if lines.is_empty() {
        return check_rejected(label);
    }
    for line in lines {
        let clashes = check_row(line).map_err(|e| format!("{line}: {e}"))?;
        let constraint = ["not", "maxcard", "disjointProperty"]
            .iter()
            .any(|k| line.contains(k));
        if constraint && clashes == 0 {
            return Err(format!("{line}: constraint never fired"));
        }
    }
    Ok(())
}
