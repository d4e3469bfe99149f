//! The lexical-selection graph: token positions linked by anchored IPTDs.

use std::sync::Arc;

use crate::grammar::{anchor, Fresh, Grammar, Lexicon};
use crate::ptd::Iptd;
use crate::token::TokenGraph;

#[derive(Clone, Debug)]
pub struct SelectionEdge {
    pub from: usize,
    pub to: usize,
    pub word: String,
    pub iptd: Arc<Iptd>,
}

/// Acyclic graph whose source-to-sink paths are lexical selections.
/// Vertices are numbered in topological order.
#[derive(Clone, Debug)]
pub struct SelectionGraph {
    pub vertex_count: usize,
    pub source: usize,
    pub sink: usize,
    pub edges: Vec<SelectionEdge>,
}

#[derive(Clone, Debug)]
pub struct SelectionBuild {
    pub graph: SelectionGraph,
    /// Token words that no (usage, template) pair could anchor.
    pub unknown_words: Vec<String>,
}

pub fn build_selection_graph(tg: &TokenGraph, lex: &Lexicon, g: &Grammar) -> SelectionBuild {
    let mut fresh = Fresh::default();
    let mut edges = Vec::new();
    let mut unknown_words = Vec::new();
    for te in &tg.edges {
        let before = edges.len();
        for usage in lex.usages(&te.word) {
            for t in &g.templates {
                if let Some(d) = anchor(t, &te.word, usage, &mut fresh) {
                    edges.push(SelectionEdge {
                        from: te.from,
                        to: te.to,
                        word: te.word.clone(),
                        iptd: Arc::new(d),
                    });
                }
            }
        }
        if edges.len() == before && !unknown_words.contains(&te.word) {
            unknown_words.push(te.word.clone());
        }
    }
    SelectionBuild {
        graph: SelectionGraph {
            vertex_count: tg.vertex_count,
            source: 0,
            sink: tg.sink(),
            edges,
        },
        unknown_words,
    }
}

impl SelectionGraph {
    fn out_edges(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertex_count];
        for (i, e) in self.edges.iter().enumerate() {
            out[e.from].push(i);
        }
        out
    }

    /// Number of source-to-sink paths.
    pub fn path_count(&self) -> u64 {
        let mut count = vec![0u64; self.vertex_count];
        count[self.sink] = 1;
        let out = self.out_edges();
        for v in (0..self.vertex_count).rev() {
            if v == self.sink {
                continue;
            }
            count[v] = out[v]
                .iter()
                .fold(0u64, |acc, &e| acc.saturating_add(count[self.edges[e].to]));
        }
        count[self.source]
    }

    /// Source-to-sink paths as edge-index lists, in a fixed depth-first
    /// order, at most `limit` of them.
    pub fn paths(&self, limit: usize) -> Vec<Vec<usize>> {
        let out = self.out_edges();
        let mut result = Vec::new();
        let mut cur = Vec::new();
        self.walk(&out, self.source, &mut cur, &mut result, limit);
        result
    }

    fn walk(
        &self,
        out: &[Vec<usize>],
        v: usize,
        cur: &mut Vec<usize>,
        result: &mut Vec<Vec<usize>>,
        limit: usize,
    ) {
        if result.len() >= limit {
            return;
        }
        if v == self.sink {
            result.push(cur.clone());
            return;
        }
        for &e in &out[v] {
            cur.push(e);
            self.walk(out, self.edges[e].to, cur, result, limit);
            cur.pop();
        }
    }

    /// The IPTDs of a path, in order.
    pub fn selection(&self, path: &[usize]) -> Vec<Iptd> {
        path.iter().map(|&e| (*self.edges[e].iptd).clone()).collect()
    }

    /// Template ids along a path, e.g. `Jean:propn la:clit_obj ...`.
    pub fn describe(&self, path: &[usize]) -> Vec<String> {
        path.iter()
            .map(|&e| format!("{}:{}", self.edges[e].word, self.edges[e].iptd.template))
            .collect()
    }

    /// Copy without the edges that lie on no source-to-sink path.
    pub fn trimmed(&self) -> SelectionGraph {
        let n = self.vertex_count;
        let mut fwd = vec![false; n];
        fwd[self.source] = true;
        let mut order: Vec<usize> = (0..self.edges.len()).collect();
        order.sort_by_key(|&e| self.edges[e].from);
        for &e in &order {
            if fwd[self.edges[e].from] {
                fwd[self.edges[e].to] = true;
            }
        }
        let mut bwd = vec![false; n];
        bwd[self.sink] = true;
        for &e in order.iter().rev() {
            if bwd[self.edges[e].to] {
                bwd[self.edges[e].from] = true;
            }
        }
        SelectionGraph {
            vertex_count: n,
            source: self.source,
            sink: self.sink,
            edges: self
                .edges
                .iter()
                .filter(|e| fwd[e.from] && bwd[e.to])
                .cloned()
                .collect(),
        }
    }
}
