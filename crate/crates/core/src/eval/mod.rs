//! Bottom-up evaluation of stratified programs.
//!
//! Stages follow the SCC order of the dependency graph. Inside a stage the
//! least fixpoint of `J ↦ I ∪ T(J)` is computed semi-naively: each rule with
//! in-stage positive literals is split into one variant per such literal,
//! reading the previous iteration's delta there, older rows to its left and
//! all visible rows to its right.

mod plan;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::stratify::{stratify, Stratification};
use crate::syntax::{Atom, Interpretation, Program, Rule, Substitution, Term};

use plan::{CompiledRule, Plan};
use store::{Interner, Relation};

#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    /// Worker threads for rule variants inside an iteration. `1` runs
    /// everything on the calling thread.
    pub threads: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { threads: 1 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StageStats {
    pub predicates: Vec<String>,
    pub iterations: usize,
    /// Atoms added by this stage's rules.
    pub derived: usize,
    /// Atoms over this stage's predicates after the stage.
    pub atoms: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EvalStats {
    pub stages: Vec<StageStats>,
}

impl fmt::Display for EvalStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.stages.iter().enumerate() {
            writeln!(
                f,
                "stage {} {{{}}}: atoms={} derived={} iterations={}",
                i + 1,
                s.predicates.join(","),
                s.atoms,
                s.derived,
                s.iterations
            )?;
        }
        Ok(())
    }
}

/// The materialized result of an evaluation, kept in interned form.
pub struct Model {
    constants: Interner,
    predicates: Vec<(String, usize)>,
    pred_ids: BTreeMap<String, usize>,
    relations: Vec<Relation>,
    stats: EvalStats,
}

impl Model {
    pub fn stats(&self) -> &EvalStats {
        &self.stats
    }

    /// Total number of atoms.
    pub fn len(&self) -> usize {
        self.relations.iter().map(Relation::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count(&self, predicate: &str) -> usize {
        self.pred_ids
            .get(predicate)
            .map_or(0, |&p| self.relations[p].len())
    }

    pub fn arity(&self, predicate: &str) -> Option<usize> {
        self.pred_ids.get(predicate).map(|&p| self.predicates[p].1)
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        let Some(&p) = self.pred_ids.get(&atom.predicate) else {
            return false;
        };
        let mut tuple = Vec::with_capacity(atom.arity());
        for t in &atom.args {
            match t {
                Term::Const(c) => match self.constants.get(c) {
                    Some(id) => tuple.push(id),
                    None => return false,
                },
                Term::Var(_) => return false,
            }
        }
        tuple.len() == self.relations[p].arity() && self.relations[p].contains(&tuple)
    }

    /// Atoms of one predicate, in derivation order.
    pub fn atoms_of<'a>(&'a self, predicate: &str) -> impl Iterator<Item = Atom> + 'a {
        let p = self.pred_ids.get(predicate).copied();
        p.into_iter().flat_map(move |p| self.relation_atoms(p))
    }

    pub fn atoms(&self) -> impl Iterator<Item = Atom> + '_ {
        (0..self.relations.len()).flat_map(move |p| self.relation_atoms(p))
    }

    fn relation_atoms(&self, p: usize) -> impl Iterator<Item = Atom> + '_ {
        let rel = &self.relations[p];
        let name = &self.predicates[p].0;
        (0..rel.len()).map(move |id| {
            Atom::new(
                name.clone(),
                rel.row(id as u32)
                    .iter()
                    .map(|&c| Term::Const(self.constants.name(c).to_owned()))
                    .collect(),
            )
        })
    }

    pub fn to_interpretation(&self) -> Interpretation {
        self.atoms().collect()
    }

    /// Substitutions over the variables of `query` that turn it into an atom
    /// of the model. A ground query yields `{∅}` or `{}`.
    pub fn answers(&self, query: &Atom) -> BTreeSet<Substitution> {
        let Some(&p) = self.pred_ids.get(&query.predicate) else {
            return BTreeSet::new();
        };
        let rel = &self.relations[p];
        if rel.arity() != query.arity() {
            return BTreeSet::new();
        }
        // Constants absent from the model cannot match anything.
        let mut pattern = Vec::with_capacity(query.arity());
        for t in &query.args {
            match t {
                Term::Const(c) => match self.constants.get(c) {
                    Some(id) => pattern.push(Some(id)),
                    None => return BTreeSet::new(),
                },
                Term::Var(_) => pattern.push(None),
            }
        }
        let mut out = BTreeSet::new();
        'rows: for id in 0..rel.len() {
            let row = rel.row(id as u32);
            let mut s: BTreeMap<&str, u32> = BTreeMap::new();
            for ((t, want), &v) in query.args.iter().zip(&pattern).zip(row) {
                if let Some(c) = want {
                    if *c != v {
                        continue 'rows;
                    }
                } else if let Term::Var(x) = t {
                    match s.get(x.as_str()) {
                        Some(&prev) if prev != v => continue 'rows,
                        Some(_) => {}
                        None => {
                            s.insert(x, v);
                        }
                    }
                }
            }
            out.insert(
                s.into_iter()
                    .map(|(k, v)| (k, self.constants.name(v)))
                    .collect(),
            );
        }
        out
    }
}

/// Rules whose head predicate lies in one component of the stage order.
pub struct StageContext<'a> {
    pub program: &'a Program,
    pub stratification: &'a Stratification,
    /// 0-based position in the stage order.
    pub stage_index: usize,
    pub rules_in_stage: Vec<&'a Rule>,
}

impl<'a> StageContext<'a> {
    pub fn new(
        program: &'a Program,
        stratification: &'a Stratification,
        stage_index: usize,
    ) -> Self {
        let comp = &stratification.components()[stage_index];
        let rules_in_stage = program
            .rules
            .iter()
            .filter(|r| comp.contains(&r.head.predicate))
            .collect();
        StageContext {
            program,
            stratification,
            stage_index,
            rules_in_stage,
        }
    }
}

/// One application of the stage operator: every head instance whose positive
/// body holds in `interp` and whose negative body is disjoint from it.
pub fn stage_consequence(ctx: &StageContext<'_>, interp: &Interpretation) -> Interpretation {
    let mut engine = Engine::new(ctx.program, interp.iter());
    let rules: Vec<CompiledRule> = ctx
        .rules_in_stage
        .iter()
        .map(|r| engine.compile(r))
        .collect();
    let plans: Vec<Plan> = rules
        .iter()
        .map(|r| Plan::new(r, &vec![false; r.positive.len()], None))
        .collect();
    engine.prepare(&plans);
    let mut out = Interpretation::new();
    for plan in &plans {
        let mut buf = Vec::new();
        plan.run(&engine.relations, &mut buf);
        let (name, arity) = &engine.predicates[plan.head_pred()];
        let tuples: Vec<&[u32]> = if *arity == 0 {
            if buf.is_empty() {
                vec![]
            } else {
                vec![&[]]
            }
        } else {
            buf.chunks_exact(*arity).collect()
        };
        for tuple in tuples {
            out.insert(Atom::new(
                name.clone(),
                tuple
                    .iter()
                    .map(|&c| Term::Const(engine.constants.name(c).to_owned()))
                    .collect(),
            ));
        }
    }
    out
}

/// `TP(P)`: the union of the per-stage least fixpoints.
pub fn evaluate(program: &Program) -> Result<Interpretation> {
    Ok(evaluate_model(program, EvalOptions::default())?.to_interpretation())
}

pub fn evaluate_model(program: &Program, options: EvalOptions) -> Result<Model> {
    let strata = stratify(program)?;
    Engine::new(program, std::iter::empty()).run(program, &strata, options)
}

/// Answers `query` against `TP(P)`.
pub fn answer_query(program: &Program, query: &Atom) -> Result<BTreeSet<Substitution>> {
    check_query(program, query)?;
    let model = evaluate_model(program, EvalOptions::default())?;
    Ok(model.answers(query))
}

/// Fails if the program has no predicate matching the query's name and arity.
pub fn check_query(program: &Program, query: &Atom) -> Result<()> {
    match program.predicates().get(query.predicate.as_str()) {
        None => Err(Error::UnknownPredicate(query.predicate.clone())),
        Some(&k) if k != query.arity() => Err(Error::ArityMismatch {
            predicate: query.predicate.clone(),
            expected: k,
            found: query.arity(),
        }),
        Some(_) => Ok(()),
    }
}

struct Engine {
    constants: Interner,
    predicates: Vec<(String, usize)>,
    pred_ids: BTreeMap<String, usize>,
    relations: Vec<Relation>,
}

impl Engine {
    /// Registers every predicate of `program` and loads `extra` facts.
    fn new<'a>(program: &Program, extra: impl Iterator<Item = &'a Atom>) -> Engine {
        let mut engine = Engine {
            constants: Interner::default(),
            predicates: Vec::new(),
            pred_ids: BTreeMap::new(),
            relations: Vec::new(),
        };
        for a in program.atoms() {
            engine.pred(&a.predicate, a.arity());
        }
        let mut tuple = Vec::new();
        for a in extra {
            let p = engine.pred(&a.predicate, a.arity());
            engine.load(p, a, &mut tuple);
        }
        for rel in &mut engine.relations {
            rel.seal();
        }
        engine
    }

    fn pred(&mut self, name: &str, arity: usize) -> usize {
        if let Some(&p) = self.pred_ids.get(name) {
            return p;
        }
        let p = self.predicates.len();
        self.predicates.push((name.to_owned(), arity));
        self.pred_ids.insert(name.to_owned(), p);
        self.relations.push(Relation::new(arity));
        p
    }

    fn load(&mut self, p: usize, fact: &Atom, tuple: &mut Vec<u32>) {
        tuple.clear();
        for t in &fact.args {
            match t {
                Term::Const(c) => tuple.push(self.constants.intern(c)),
                Term::Var(v) => panic!("non-ground fact {fact} (variable {v})"),
            }
        }
        self.relations[p].insert(tuple);
    }

    fn compile(&mut self, rule: &Rule) -> CompiledRule {
        let ids = &self.pred_ids;
        CompiledRule::compile(rule, &|name: &str| ids[name], &mut self.constants)
    }

    fn prepare(&mut self, plans: &[Plan]) {
        for plan in plans {
            for (p, col) in plan.indexes() {
                self.relations[p].ensure_index(col);
            }
        }
    }

    fn run(
        mut self,
        program: &Program,
        strata: &Stratification,
        options: EvalOptions,
    ) -> Result<Model> {
        let pool = if options.threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(options.threads)
                    .build()
                    .map_err(|e| Error::Internal(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };

        let mut tuple = Vec::new();
        for r in program.iter().filter(|r| r.is_fact()) {
            let p = self.pred_ids[&r.head.predicate];
            self.load(p, &r.head, &mut tuple);
        }
        for rel in &mut self.relations {
            rel.seal();
        }

        let mut stats = EvalStats::default();
        for comp in strata.components() {
            let stage: BTreeSet<usize> = comp.iter().map(|p| self.pred_ids[p]).collect();
            let before: usize = stage.iter().map(|&p| self.relations[p].len()).sum();
            let rules: Vec<CompiledRule> = program
                .iter()
                .filter(|r| !r.is_fact() && comp.contains(&r.head.predicate))
                .map(|r| self.compile(r))
                .collect();

            let mut first_only = Vec::new();
            let mut recursive = Vec::new();
            for rule in &rules {
                debug_assert!(
                    rule.negative.iter().all(|a| !stage.contains(&a.pred)),
                    "negation inside a stage survived stratification"
                );
                let in_stage: Vec<bool> = rule
                    .positive
                    .iter()
                    .map(|a| stage.contains(&a.pred))
                    .collect();
                if in_stage.iter().any(|&b| b) {
                    for (i, _) in in_stage.iter().enumerate().filter(|(_, &b)| b) {
                        recursive.push(Plan::new(rule, &in_stage, Some(i)));
                    }
                } else {
                    first_only.push(Plan::new(rule, &in_stage, None));
                }
            }

            for &p in &stage {
                self.relations[p].open_stage();
            }
            let mut iterations = 0;
            if !rules.is_empty() {
                loop {
                    let plans: Vec<&Plan> = if iterations == 0 {
                        first_only.iter().chain(&recursive).collect()
                    } else {
                        recursive.iter().collect()
                    };
                    iterations += 1;
                    for plan in &plans {
                        for (p, col) in plan.indexes() {
                            self.relations[p].ensure_index(col);
                        }
                    }
                    let outputs = self.fire(&plans, pool.as_ref());
                    for (p, buf) in outputs {
                        let rel = &mut self.relations[p];
                        let arity = rel.arity();
                        if arity == 0 {
                            if !buf.is_empty() {
                                rel.insert(&[]);
                            }
                        } else {
                            for t in buf.chunks_exact(arity) {
                                rel.insert(t);
                            }
                        }
                    }
                    let mut grew = false;
                    for &p in &stage {
                        grew |= self.relations[p].advance();
                    }
                    if !grew {
                        break;
                    }
                }
            }
            for &p in &stage {
                self.relations[p].seal();
            }
            let after: usize = stage.iter().map(|&p| self.relations[p].len()).sum();
            stats.stages.push(StageStats {
                predicates: comp.iter().cloned().collect(),
                iterations,
                derived: after - before,
                atoms: after,
            });
        }

        Ok(Model {
            constants: self.constants,
            predicates: self.predicates,
            pred_ids: self.pred_ids,
            relations: self.relations,
            stats,
        })
    }

    /// Runs every plan against the current snapshot; returns head tuples per
    /// plan. Zero-arity heads report a single marker value when they fire.
    fn fire(&self, plans: &[&Plan], pool: Option<&rayon::ThreadPool>) -> Vec<(usize, Vec<u32>)> {
        let relations = &self.relations;
        let one = |plan: &&Plan| {
            let mut buf = Vec::new();
            plan.run(relations, &mut buf);
            (plan.head_pred(), buf)
        };
        match pool {
            Some(pool) if plans.len() > 1 => pool.install(|| plans.par_iter().map(one).collect()),
            _ => plans.iter().map(one).collect(),
        }
    }
}
