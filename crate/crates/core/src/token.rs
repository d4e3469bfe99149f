//! Tokenization into an acyclic graph of word forms.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

const PUNCTUATION: &[char] = &['.', ',', ';', ':', '!', '?', '(', ')', '"', '«', '»', '…'];
const APOSTROPHES: &[char] = &['\'', '’'];

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TokenEdge {
    pub from: usize,
    pub to: usize,
    pub word: String,
}

/// Vertices are numbered in topological order; 0 is the source and
/// `vertex_count - 1` the sink.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TokenGraph {
    pub vertex_count: usize,
    pub edges: Vec<TokenEdge>,
}

/// Splits on whitespace, detaches punctuation marks, and cuts elided forms
/// after their apostrophe (`qu'aime` gives `qu'` and `aime`).
pub fn segment(sentence: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in sentence.split_whitespace() {
        let mut cur = String::new();
        for c in chunk.chars() {
            if PUNCTUATION.contains(&c) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(c.to_string());
            } else if APOSTROPHES.contains(&c) {
                cur.push(c);
                out.push(std::mem::take(&mut cur));
            } else {
                cur.push(c);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

/// Builds the token graph; a contracted form yields two parallel branches,
/// the surface form and its expansion.
pub fn tokenize(sentence: &str, contractions: &BTreeMap<String, Vec<String>>) -> Result<TokenGraph> {
    let words = segment(sentence);
    if words.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut edges = Vec::new();
    let mut v = 0;
    for w in words {
        match contractions.get(&w).filter(|e| !e.is_empty()) {
            Some(expansion) => {
                let end = v + expansion.len();
                edges.push(TokenEdge {
                    from: v,
                    to: end,
                    word: w.clone(),
                });
                for (i, part) in expansion.iter().enumerate() {
                    edges.push(TokenEdge {
                        from: v + i,
                        to: v + i + 1,
                        word: part.clone(),
                    });
                }
                v = end;
            }
            None => {
                edges.push(TokenEdge {
                    from: v,
                    to: v + 1,
                    word: w,
                });
                v += 1;
            }
        }
    }
    Ok(TokenGraph {
        vertex_count: v + 1,
        edges,
    })
}

impl TokenGraph {
    pub fn sink(&self) -> usize {
        self.vertex_count - 1
    }

    /// Every source-to-sink word sequence.
    pub fn paths(&self) -> Vec<Vec<&str>> {
        let mut out = Vec::new();
        let mut cur = Vec::new();
        self.walk(0, &mut cur, &mut out);
        out
    }

    fn walk<'a>(&'a self, v: usize, cur: &mut Vec<&'a str>, out: &mut Vec<Vec<&'a str>>) {
        if v == self.sink() {
            out.push(cur.clone());
            return;
        }
        for e in self.edges.iter().filter(|e| e.from == v) {
            cur.push(&e.word);
            self.walk(e.to, cur, out);
            cur.pop();
        }
    }
}
