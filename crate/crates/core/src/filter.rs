//! Polarity-counting filter over lexical selections.
//!
//! For a key (f, v) every anchored IPTD contributes an interval of possible
//! net counts: a positive `f` whose value set is exactly {v} adds 1, one
//! whose value set merely contains v adds [0, 1], negatives symmetrically.
//! A selection survives a key when the sum of its intervals contains 0.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Add;

use serde::Serialize;

use crate::grammar::Grammar;
use crate::ptd::Iptd;
use crate::selection::{SelectionEdge, SelectionGraph};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Interval {
    pub lo: i32,
    pub hi: i32,
}

impl Interval {
    pub const ZERO: Interval = Interval { lo: 0, hi: 0 };

    pub fn new(lo: i32, hi: i32) -> Self {
        assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn contains(self, x: i32) -> bool {
        self.lo <= x && x <= self.hi
    }
}

impl Add for Interval {
    type Output = Interval;

    fn add(self, o: Interval) -> Interval {
        Interval {
            lo: self.lo + o.lo,
            hi: self.hi + o.hi,
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Key {
    pub feature: String,
    pub value: String,
}

impl Key {
    pub fn new(feature: impl Into<String>, value: impl Into<String>) -> Self {
        Key {
            feature: feature.into(),
            value: value.into(),
        }
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.feature, self.value)
    }
}

/// Every (f, v) with f carrying an active polarity somewhere in the grammar.
pub fn default_keys(g: &Grammar) -> Vec<Key> {
    let mut keys = Vec::new();
    for f in g.polarized_features() {
        if let Some(dom) = g.signature.domain(&f) {
            keys.extend(dom.iter().map(|v| Key::new(f.clone(), v.clone())));
        }
    }
    keys
}

pub fn contribution(d: &Iptd, f: &str, v: &str) -> Interval {
    let mut out = Interval::ZERO;
    for n in d.ptd.nodes.values() {
        let Some(feat) = n.features.get(f) else { continue };
        if !feat.value.contains(v) {
            continue;
        }
        let pos = i32::from(feat.counts.positive);
        let neg = i32::from(feat.counts.negative);
        if feat.value.len() == 1 {
            out = out + Interval::new(pos - neg, pos - neg);
        } else {
            out = out + Interval::new(-neg, pos);
        }
    }
    out
}

/// Deterministic acyclic automaton for one key. States are (graph vertex,
/// accumulated interval); every path reaching a state has that interval.
#[derive(Clone, Debug, Serialize)]
pub struct CountingAutomaton {
    pub key: Key,
    pub states: Vec<AutomatonState>,
    /// (from state, selection edge, to state)
    pub transitions: Vec<(usize, usize, usize)>,
    pub initial: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct AutomatonState {
    pub vertex: usize,
    pub interval: Interval,
}

impl CountingAutomaton {
    pub fn final_states(&self, sink: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.states.len()).filter(move |&s| self.states[s].vertex == sink)
    }

    pub fn accepts_state(&self, s: usize, sink: usize) -> bool {
        self.states[s].vertex == sink && self.states[s].interval.contains(0)
    }

    /// Runs a path of selection edges; `None` if the path leaves the automaton.
    pub fn run(&self, path: &[usize]) -> Option<usize> {
        let mut s = self.initial;
        for &e in path {
            s = self
                .transitions
                .iter()
                .find(|t| t.0 == s && t.1 == e)
                .map(|t| t.2)?;
        }
        Some(s)
    }
}

fn edges_by_source(sg: &SelectionGraph) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); sg.vertex_count];
    for (i, e) in sg.edges.iter().enumerate() {
        out[e.from].push(i);
    }
    out
}

pub fn build_automaton(sg: &SelectionGraph, key: &Key) -> CountingAutomaton {
    let contrib: Vec<Interval> = sg
        .edges
        .iter()
        .map(|e| contribution(&e.iptd, &key.feature, &key.value))
        .collect();
    let out = edges_by_source(sg);
    let mut index: BTreeMap<AutomatonState, usize> = BTreeMap::new();
    let mut states = Vec::new();
    let mut transitions = Vec::new();
    let start = AutomatonState {
        vertex: sg.source,
        interval: Interval::ZERO,
    };
    index.insert(start, 0);
    states.push(start);
    // Vertices are topologically numbered, so visiting states by vertex
    // handles every state after all its predecessors.
    let mut frontier: BTreeSet<(usize, usize)> = BTreeSet::from([(sg.source, 0)]);
    while let Some((_, s)) = frontier.pop_first() {
        let st = states[s];
        for &e in &out[st.vertex] {
            let next = AutomatonState {
                vertex: sg.edges[e].to,
                interval: st.interval + contrib[e],
            };
            let t = match index.get(&next) {
                Some(&t) => t,
                None => {
                    states.push(next);
                    index.insert(next, states.len() - 1);
                    frontier.insert((next.vertex, states.len() - 1));
                    states.len() - 1
                }
            };
            transitions.push((s, e, t));
        }
    }
    CountingAutomaton {
        key: key.clone(),
        states,
        transitions,
        initial: 0,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct KeyStats {
    pub key: String,
    /// Selections this key accepts on its own.
    pub accepted: u64,
    /// Selections this key rejects on its own.
    pub rejected: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FilterStats {
    pub before: u64,
    pub after: u64,
    pub keys: Vec<KeyStats>,
}

#[derive(Clone, Debug)]
pub struct FilterOutcome {
    pub graph: SelectionGraph,
    pub stats: FilterStats,
}

fn accepted_paths(a: &CountingAutomaton, sink: usize) -> u64 {
    let mut count = vec![0u64; a.states.len()];
    let mut order: Vec<usize> = (0..a.states.len()).collect();
    order.sort_by_key(|&s| std::cmp::Reverse(a.states[s].vertex));
    for s in order {
        if a.accepts_state(s, sink) {
            count[s] = 1;
        }
        let mut sum = count[s];
        for t in a.transitions.iter().filter(|t| t.0 == s) {
            sum = sum.saturating_add(count[t.2]);
        }
        count[s] = sum;
    }
    count[a.initial]
}

/// Keeps exactly the selections accepted by every key. The result's
/// vertices are (vertex, interval vector) states; its source-to-sink paths
/// are in one-to-one correspondence with the surviving selections.
pub fn filter_selections(sg: &SelectionGraph, keys: &[Key]) -> FilterOutcome {
    let before = sg.path_count();
    let contrib: Vec<Vec<Interval>> = sg
        .edges
        .iter()
        .map(|e| {
            keys.iter()
                .map(|k| contribution(&e.iptd, &k.feature, &k.value))
                .collect()
        })
        .collect();
    let out = edges_by_source(sg);

    type State = (usize, Vec<Interval>);
    let start: State = (sg.source, vec![Interval::ZERO; keys.len()]);
    let mut reached: BTreeSet<State> = BTreeSet::from([start.clone()]);
    let mut frontier: BTreeSet<State> = BTreeSet::from([start.clone()]);
    let mut trans: Vec<(State, usize, State)> = Vec::new();
    while let Some(st) = frontier.pop_first() {
        for &e in &out[st.0] {
            let vec: Vec<Interval> = st.1.iter().zip(&contrib[e]).map(|(a, b)| *a + *b).collect();
            let next = (sg.edges[e].to, vec);
            if reached.insert(next.clone()) {
                frontier.insert(next.clone());
            }
            trans.push((st.clone(), e, next));
        }
    }

    let accepting = |s: &State| s.0 == sg.sink && s.1.iter().all(|i| i.contains(0));
    let mut live: BTreeSet<State> = reached.iter().filter(|s| accepting(s)).cloned().collect();
    let mut by_vertex: Vec<&(State, usize, State)> = trans.iter().collect();
    by_vertex.sort_by_key(|t| std::cmp::Reverse(t.0 .0));
    for t in by_vertex {
        if live.contains(&t.2) {
            live.insert(t.0.clone());
        }
    }

    // Number live states topologically; all accepting states share the sink.
    let mut numbering: BTreeMap<&State, usize> = BTreeMap::new();
    let mut next_id = 0;
    for s in live.iter().filter(|s| !accepting(s)) {
        numbering.insert(s, next_id);
        next_id += 1;
    }
    let sink = next_id;
    let mut edges: Vec<SelectionEdge> = Vec::new();
    for (from, e, to) in &trans {
        if !live.contains(from) || !live.contains(to) {
            continue;
        }
        let src = sg.edges[*e].clone();
        edges.push(SelectionEdge {
            from: numbering[from],
            to: if accepting(to) { sink } else { numbering[to] },
            ..src
        });
    }
    edges.sort_by_key(|e| (e.from, e.to));
    let graph = if live.contains(&start) {
        SelectionGraph {
            vertex_count: sink + 1,
            source: 0,
            sink,
            edges,
        }
    } else {
        SelectionGraph {
            vertex_count: 2,
            source: 0,
            sink: 1,
            edges: Vec::new(),
        }
    };
    let after = graph.path_count();
    let key_stats = keys
        .iter()
        .map(|k| {
            let accepted = accepted_paths(&build_automaton(sg, k), sg.sink);
            KeyStats {
                key: k.to_string(),
                accepted,
                rejected: before.saturating_sub(accepted),
            }
        })
        .collect();
    FilterOutcome {
        graph,
        stats: FilterStats {
            before,
            after,
            keys: key_stats,
        },
    }
}

/// Accepted selections by explicit product of the per-key automata.
/// Slower than [`filter_selections`]; kept for differential testing.
pub fn filter_by_product(sg: &SelectionGraph, keys: &[Key]) -> BTreeSet<Vec<usize>> {
    let automata: Vec<CountingAutomaton> = keys.iter().map(|k| build_automaton(sg, k)).collect();
    let step: Vec<BTreeMap<(usize, usize), usize>> = automata
        .iter()
        .map(|a| a.transitions.iter().map(|t| ((t.0, t.1), t.2)).collect())
        .collect();
    let out = edges_by_source(sg);
    let mut result = BTreeSet::new();
    let mut stack: Vec<(usize, Vec<usize>, Vec<usize>)> =
        vec![(sg.source, automata.iter().map(|a| a.initial).collect(), Vec::new())];
    while let Some((v, tuple, path)) = stack.pop() {
        if v == sg.sink {
            if automata
                .iter()
                .zip(&tuple)
                .all(|(a, &s)| a.accepts_state(s, sg.sink))
            {
                result.insert(path);
            }
            continue;
        }
        for &e in &out[v] {
            let next: Vec<usize> = tuple
                .iter()
                .enumerate()
                .map(|(k, &s)| step[k][&(s, e)])
                .collect();
            let mut p = path.clone();
            p.push(e);
            stack.push((sg.edges[e].to, next, p));
        }
    }
    result
}
