//! Rule compilation into nested-loop join plans.

use std::collections::BTreeMap;

use super::store::{Interner, Relation, Span};
use crate::syntax::{Atom, Literal, Rule, Term};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Slot {
    Const(u32),
    Var(usize),
}

#[derive(Clone, Debug)]
pub(crate) struct CompiledAtom {
    pub pred: usize,
    pub args: Vec<Slot>,
}

/// A rule over interned predicates and constants, variables numbered in
/// order of first occurrence.
#[derive(Clone, Debug)]
pub(crate) struct CompiledRule {
    pub head: CompiledAtom,
    pub positive: Vec<CompiledAtom>,
    pub negative: Vec<CompiledAtom>,
    pub not_equal: Vec<(Slot, Slot)>,
    pub vars: usize,
}

impl CompiledRule {
    pub fn compile(
        rule: &Rule,
        pred_id: &impl Fn(&str) -> usize,
        constants: &mut Interner,
    ) -> CompiledRule {
        let mut vars: BTreeMap<String, usize> = BTreeMap::new();
        let mut slot = |t: &Term, constants: &mut Interner| match t {
            Term::Const(c) => Slot::Const(constants.intern(c)),
            Term::Var(v) => {
                let next = vars.len();
                Slot::Var(*vars.entry(v.clone()).or_insert(next))
            }
        };
        let mut atom = |a: &Atom, constants: &mut Interner| CompiledAtom {
            pred: pred_id(&a.predicate),
            args: a.args.iter().map(|t| slot(t, constants)).collect(),
        };
        // Positive literals first so that every variable gets its slot from a
        // binding occurrence.
        let positive: Vec<CompiledAtom> =
            rule.positive_atoms().map(|a| atom(a, constants)).collect();
        let negative = rule.negative_atoms().map(|a| atom(a, constants)).collect();
        let head = atom(&rule.head, constants);
        let mut not_equal = Vec::new();
        for l in &rule.body {
            if let Literal::NotEqual(a, b) = l {
                let pair = (slot_of(a, &vars, constants), slot_of(b, &vars, constants));
                not_equal.push(pair);
            }
        }
        CompiledRule {
            head,
            positive,
            negative,
            not_equal,
            vars: vars.len(),
        }
    }
}

fn slot_of(t: &Term, vars: &BTreeMap<String, usize>, constants: &mut Interner) -> Slot {
    match t {
        Term::Const(c) => Slot::Const(constants.intern(c)),
        Term::Var(v) => Slot::Var(vars[v]),
    }
}

#[derive(Clone, Copy, Debug)]
enum ColOp {
    Skip,
    Check(Slot),
    Bind(usize),
}

#[derive(Clone, Debug)]
enum Access {
    /// Every column is determined: a single hash probe.
    Probe(Vec<Slot>),
    Index {
        col: usize,
        key: Slot,
    },
    Scan,
}

#[derive(Clone, Debug)]
enum Step {
    Join {
        pred: usize,
        span: Span,
        access: Access,
        cols: Vec<ColOp>,
    },
    Absent {
        pred: usize,
        args: Vec<Slot>,
    },
    Distinct(Slot, Slot),
}

/// One semi-naive variant of a rule.
#[derive(Clone, Debug)]
pub(crate) struct Plan {
    steps: Vec<Step>,
    head: CompiledAtom,
    vars: usize,
}

impl Plan {
    /// `in_stage[i]` tells whether positive literal `i` belongs to the stage
    /// being evaluated; `delta` selects the literal reading the delta. With
    /// `delta == None` every literal reads the full relation.
    pub fn new(rule: &CompiledRule, in_stage: &[bool], delta: Option<usize>) -> Plan {
        let span_of = |i: usize| match delta {
            None => Span::Full,
            Some(_) if !in_stage[i] => Span::Full,
            Some(d) if i < d => Span::Old,
            Some(d) if i == d => Span::Delta,
            Some(_) => Span::Full,
        };

        let mut bound = vec![false; rule.vars];
        let is_bound = |s: &Slot, bound: &[bool]| match s {
            Slot::Const(_) => true,
            Slot::Var(v) => bound[*v],
        };
        let mut remaining: Vec<usize> = (0..rule.positive.len()).collect();
        let mut order = Vec::with_capacity(remaining.len());
        if let Some(d) = delta {
            remaining.retain(|&i| i != d);
            order.push(d);
        }
        let mut steps = Vec::new();
        let mut pending_neg: Vec<usize> = (0..rule.negative.len()).collect();
        let mut pending_neq: Vec<usize> = (0..rule.not_equal.len()).collect();

        let mut emit_filters = |bound: &[bool], steps: &mut Vec<Step>| {
            pending_neq.retain(|&i| {
                let (a, b) = rule.not_equal[i];
                if is_bound(&a, bound) && is_bound(&b, bound) {
                    steps.push(Step::Distinct(a, b));
                    false
                } else {
                    true
                }
            });
            pending_neg.retain(|&i| {
                let atom = &rule.negative[i];
                if atom.args.iter().all(|s| is_bound(s, bound)) {
                    steps.push(Step::Absent {
                        pred: atom.pred,
                        args: atom.args.clone(),
                    });
                    false
                } else {
                    true
                }
            });
        };
        emit_filters(&bound, &mut steps);

        loop {
            let next = match order.pop() {
                Some(i) => i,
                None => {
                    // Most bound columns first, source order on ties.
                    let best = remaining.iter().enumerate().max_by_key(|(pos, &i)| {
                        let n = rule.positive[i]
                            .args
                            .iter()
                            .filter(|s| is_bound(s, &bound))
                            .count();
                        (n, std::cmp::Reverse(*pos))
                    });
                    match best {
                        Some((pos, &i)) => {
                            remaining.remove(pos);
                            i
                        }
                        None => break,
                    }
                }
            };
            let atom = &rule.positive[next];
            let mut cols = Vec::with_capacity(atom.args.len());
            let mut key = None;
            let before = bound.clone();
            for (c, s) in atom.args.iter().enumerate() {
                if is_bound(s, &before) {
                    if key.is_none() {
                        key = Some((c, *s));
                        cols.push(ColOp::Skip);
                    } else {
                        cols.push(ColOp::Check(*s));
                    }
                } else if let Slot::Var(v) = *s {
                    if bound[v] {
                        // repeated within this atom
                        cols.push(ColOp::Check(Slot::Var(v)));
                    } else {
                        bound[v] = true;
                        cols.push(ColOp::Bind(v));
                    }
                }
            }
            let all_bound = cols.iter().all(|c| !matches!(c, ColOp::Bind(_)));
            let access = if all_bound {
                Access::Probe(atom.args.clone())
            } else if let Some((col, key)) = key {
                Access::Index { col, key }
            } else {
                Access::Scan
            };
            steps.push(Step::Join {
                pred: atom.pred,
                span: span_of(next),
                access,
                cols,
            });
            emit_filters(&bound, &mut steps);
        }
        debug_assert!(bound.iter().all(|&b| b), "unsafe rule reached the planner");

        Plan {
            steps,
            head: rule.head.clone(),
            vars: rule.vars,
        }
    }

    /// (predicate, column) pairs this plan reads through an index.
    pub fn indexes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.steps.iter().filter_map(|s| match s {
            Step::Join {
                pred,
                access: Access::Index { col, .. },
                ..
            } => Some((*pred, *col)),
            _ => None,
        })
    }

    pub fn head_pred(&self) -> usize {
        self.head.pred
    }

    /// Appends every head tuple produced by this variant to `out`.
    pub fn run(&self, relations: &[Relation], out: &mut Vec<u32>) {
        let mut env = vec![0u32; self.vars];
        let mut scratch = Vec::new();
        self.step(0, relations, &mut env, &mut scratch, out);
    }

    fn step(
        &self,
        i: usize,
        relations: &[Relation],
        env: &mut [u32],
        scratch: &mut Vec<u32>,
        out: &mut Vec<u32>,
    ) {
        let value = |s: &Slot, env: &[u32]| match s {
            Slot::Const(c) => *c,
            Slot::Var(v) => env[*v],
        };
        let Some(step) = self.steps.get(i) else {
            if self.head.args.is_empty() {
                // marker for a nullary head
                out.push(0);
            } else {
                out.extend(self.head.args.iter().map(|s| value(s, env)));
            }
            return;
        };
        match step {
            Step::Distinct(a, b) => {
                if value(a, env) != value(b, env) {
                    self.step(i + 1, relations, env, scratch, out);
                }
            }
            Step::Absent { pred, args } => {
                scratch.clear();
                scratch.extend(args.iter().map(|s| value(s, env)));
                if !relations[*pred].contains(scratch) {
                    self.step(i + 1, relations, env, scratch, out);
                }
            }
            Step::Join {
                pred,
                span,
                access,
                cols,
            } => {
                let rel = &relations[*pred];
                match access {
                    Access::Probe(args) => {
                        scratch.clear();
                        scratch.extend(args.iter().map(|s| value(s, env)));
                        if let Some(id) = rel.find(scratch) {
                            if rel.span(*span).contains(&(id as usize)) {
                                self.step(i + 1, relations, env, scratch, out);
                            }
                        }
                    }
                    Access::Index { col, key } => {
                        let ids = rel.lookup(*col, value(key, env), *span);
                        for &id in ids {
                            if bind_row(rel.row(id), cols, env) {
                                self.step(i + 1, relations, env, scratch, out);
                            }
                        }
                    }
                    Access::Scan => {
                        for id in rel.span(*span) {
                            if bind_row(rel.row(id as u32), cols, env) {
                                self.step(i + 1, relations, env, scratch, out);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn bind_row(row: &[u32], cols: &[ColOp], env: &mut [u32]) -> bool {
    for (&v, op) in row.iter().zip(cols) {
        match *op {
            ColOp::Skip => {}
            ColOp::Bind(var) => env[var] = v,
            ColOp::Check(Slot::Const(c)) => {
                if v != c {
                    return false;
                }
            }
            ColOp::Check(Slot::Var(var)) => {
                if env[var] != v {
                    return false;
                }
            }
        }
    }
    true
}
