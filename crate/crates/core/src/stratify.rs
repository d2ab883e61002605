//! Predicate dependency graph, its strongly connected components, and the
//! stage order used by evaluation.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use crate::error::{Error, Result};
use crate::syntax::Program;

/// Polarity of the occurrences behind an arc.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ArcKind {
    pub positive: bool,
    pub negative: bool,
}

/// Arc `p -> q` whenever `p` heads a rule whose body mentions `q`; the arc is
/// marked when some such occurrence is negated.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DependencyGraph {
    nodes: BTreeSet<String>,
    arcs: BTreeMap<(String, String), ArcKind>,
}

impl DependencyGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, p: impl Into<String>) {
        self.nodes.insert(p.into());
    }

    pub fn add_arc(&mut self, from: &str, to: &str, negative: bool) {
        self.add_node(from);
        self.add_node(to);
        let kind = self
            .arcs
            .entry((from.to_owned(), to.to_owned()))
            .or_default();
        if negative {
            kind.negative = true;
        } else {
            kind.positive = true;
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(String::as_str)
    }

    pub fn contains(&self, p: &str) -> bool {
        self.nodes.contains(p)
    }

    pub fn arcs(&self) -> impl Iterator<Item = (&str, &str, ArcKind)> {
        self.arcs
            .iter()
            .map(|((a, b), k)| (a.as_str(), b.as_str(), *k))
    }

    pub fn arc(&self, from: &str, to: &str) -> Option<ArcKind> {
        self.arcs.get(&(from.to_owned(), to.to_owned())).copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn indexed(&self) -> (Vec<&str>, Vec<Vec<usize>>) {
        let names: Vec<&str> = self.nodes().collect();
        let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let mut adj = vec![Vec::new(); names.len()];
        for (a, b, _) in self.arcs() {
            adj[index[a]].push(index[b]);
        }
        (names, adj)
    }
}

/// One line per arc and polarity: `from -> to` or `from -> to not`.
impl fmt::Display for DependencyGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (a, b, k) in self.arcs() {
            if k.positive {
                writeln!(f, "{a} -> {b}")?;
            }
            if k.negative {
                writeln!(f, "{a} -> {b} not")?;
            }
        }
        Ok(())
    }
}

pub fn build_dependency_graph(program: &Program) -> DependencyGraph {
    let mut g = DependencyGraph::new();
    for r in program {
        g.add_node(&r.head.predicate);
        for l in &r.body {
            if let Some(a) = l.atom() {
                g.add_arc(&r.head.predicate, &a.predicate, l.is_negative());
            }
        }
    }
    g
}

/// Tarjan's algorithm over an adjacency list. Components come out in reverse
/// topological order: every arc leaving a component points to one emitted
/// earlier.
pub(crate) fn tarjan(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNVISITED: usize = usize::MAX;
    let n = adj.len();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    let mut next = 0;
    // (node, next child position)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut child)) = call.last_mut() {
            if let Some(&w) = adj[v].get(*child) {
                *child += 1;
                if index[w] == UNVISITED {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                out.push(comp);
            }
        }
    }
    out
}

/// SCC decomposition, sorted by smallest member for determinism.
pub fn strongly_connected_components(g: &DependencyGraph) -> Vec<BTreeSet<String>> {
    let (names, adj) = g.indexed();
    let mut comps: Vec<BTreeSet<String>> = tarjan(&adj)
        .into_iter()
        .map(|c| c.into_iter().map(|i| names[i].to_owned()).collect())
        .collect();
    comps.sort();
    comps
}

/// Returns the first marked arc whose endpoints share a component.
pub fn negative_cycle_witness(g: &DependencyGraph) -> Option<(String, String)> {
    let comps = strongly_connected_components(g);
    let mut comp_of = BTreeMap::new();
    for (i, c) in comps.iter().enumerate() {
        for p in c {
            comp_of.insert(p.as_str(), i);
        }
    }
    g.arcs()
        .find(|(a, b, k)| k.negative && comp_of[a] == comp_of[b])
        .map(|(a, b, _)| (a.to_owned(), b.to_owned()))
}

/// True iff no cycle goes through a marked arc.
pub fn check_stratification(g: &DependencyGraph) -> bool {
    negative_cycle_witness(g).is_none()
}

/// SCCs in evaluation order: dependencies first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stratification {
    components: Vec<BTreeSet<String>>,
    index: BTreeMap<String, usize>,
}

impl Stratification {
    pub fn components(&self) -> &[BTreeSet<String>] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Stage index (0-based) of a predicate.
    pub fn stage_of(&self, p: &str) -> Option<usize> {
        self.index.get(p).copied()
    }
}

/// Topological order of the SCC condensation. Among the components whose
/// dependencies are all placed, the one with the lexicographically smallest
/// member goes first.
pub fn order_components(g: &DependencyGraph) -> Stratification {
    let comps = strongly_connected_components(g);
    let mut comp_of = BTreeMap::new();
    for (i, c) in comps.iter().enumerate() {
        for p in c {
            comp_of.insert(p.as_str(), i);
        }
    }
    // deps[i] = components i points to; users[j] = components pointing to j
    let mut pending = vec![0usize; comps.len()];
    let mut users: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); comps.len()];
    let mut deps: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); comps.len()];
    for (a, b, _) in g.arcs() {
        let (ca, cb) = (comp_of[a], comp_of[b]);
        if ca != cb && deps[ca].insert(cb) {
            pending[ca] += 1;
            users[cb].insert(ca);
        }
    }
    // comps is sorted by smallest member, so the index orders by that name.
    let mut ready: BinaryHeap<Reverse<usize>> = (0..comps.len())
        .filter(|&i| pending[i] == 0)
        .map(Reverse)
        .collect();
    let mut order = Vec::with_capacity(comps.len());
    while let Some(Reverse(i)) = ready.pop() {
        order.push(i);
        for &u in &users[i] {
            pending[u] -= 1;
            if pending[u] == 0 {
                ready.push(Reverse(u));
            }
        }
    }
    debug_assert_eq!(order.len(), comps.len());

    let components: Vec<BTreeSet<String>> = order.into_iter().map(|i| comps[i].clone()).collect();
    let index = components
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.iter().map(move |p| (p.clone(), i)))
        .collect();
    Stratification { components, index }
}

/// Builds the graph, rejects unstratified programs, and orders the stages.
pub fn stratify(program: &Program) -> Result<Stratification> {
    let g = build_dependency_graph(program);
    if let Some((from, to)) = negative_cycle_witness(&g) {
        return Err(Error::NotStratified { from, to });
    }
    Ok(order_components(&g))
}
