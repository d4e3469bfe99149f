//! Full pipeline: tokenize, anchor, filter, deep-parse, extract.

mod extract;
mod search;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use extract::{extract_models, Extracted};
pub use search::{parse_cky, parse_incremental, EngineOutput, SearchStats};

use crate::error::{Error, Result};
use crate::filter::{default_keys, filter_selections, FilterStats, Key};
use crate::grammar::{Grammar, Lexicon};
use crate::model::Interpretation;
use crate::ptd::{Iptd, Ptd};
use crate::selection::{build_selection_graph, SelectionGraph};
use crate::token::tokenize;
use crate::tree::SyntacticTree;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    #[default]
    Incremental,
    Cky,
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "incremental" => Ok(Engine::Incremental),
            "cky" => Ok(Engine::Cky),
            _ => Err(Error::Notation(format!("unknown engine `{s}`"))),
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Incremental => "incremental",
            Engine::Cky => "cky",
        })
    }
}

#[derive(Clone, Debug)]
pub struct ParseOptions {
    pub engine: Engine,
    /// Open active polarities tolerated before SHIFT is refused.
    pub polarity_bound: u32,
    /// Models reported per sentence.
    pub max_models: usize,
    /// Merge attempts allowed per lexical selection.
    pub max_steps: usize,
    pub filter: bool,
    /// Filter keys; `None` means every key of the grammar.
    pub keys: Option<Vec<Key>>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            engine: Engine::Incremental,
            polarity_bound: 6,
            max_models: 100,
            max_steps: 200_000,
            filter: true,
            keys: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParsedModel {
    pub tree: SyntacticTree,
    pub interpretation: Interpretation,
    /// `word:template` for each IPTD of the selection.
    pub selection: Vec<String>,
    pub iptds: Vec<Iptd>,
    /// The saturated description the tree was extracted from.
    pub ptd: Ptd,
    pub key: String,
    /// Size of the model's equivalence class under empty-sister reordering.
    pub variants: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ParseStats {
    pub selections: u64,
    pub saturated: usize,
    pub steps: usize,
    pub dead_ends: usize,
    pub cells: usize,
}

#[derive(Clone, Debug)]
pub struct ParseResult {
    pub sentence: String,
    pub unknown_words: Vec<String>,
    pub filter: FilterStats,
    pub models: Vec<ParsedModel>,
    pub stats: ParseStats,
    /// Some selection ran out of steps.
    pub incomplete: bool,
    /// More than `max_models` models were found.
    pub truncated: bool,
}

/// Anchored IPTDs as the numbered instances the engines work on.
pub fn instances(selection: &[Iptd]) -> Vec<Ptd> {
    selection
        .iter()
        .enumerate()
        .map(|(k, d)| d.ptd.with_instance(k as u32 + 1))
        .collect()
}

/// The selection graph a sentence is parsed over, filtered or not.
pub fn selections(
    sentence: &str,
    g: &Grammar,
    lex: &Lexicon,
    opts: &ParseOptions,
) -> Result<(SelectionGraph, FilterStats, Vec<String>)> {
    let tg = tokenize(sentence, &g.contractions)?;
    let build = build_selection_graph(&tg, lex, g);
    if opts.filter {
        let keys = opts.keys.clone().unwrap_or_else(|| default_keys(g));
        let out = filter_selections(&build.graph, &keys);
        Ok((out.graph, out.stats, build.unknown_words))
    } else {
        let n = build.graph.path_count();
        let stats = FilterStats {
            before: n,
            after: n,
            keys: Vec::new(),
        };
        Ok((build.graph.trimmed(), stats, build.unknown_words))
    }
}

/// Runs one engine on one selection and extracts its canonical models.
pub fn parse_selection(
    selection: &[Iptd],
    opts: &ParseOptions,
) -> Result<(Vec<(Extracted, Ptd)>, EngineOutput)> {
    let inst = instances(selection);
    let out = match opts.engine {
        Engine::Incremental => parse_incremental(&inst, opts.polarity_bound.max(1), opts.max_steps),
        Engine::Cky => parse_cky(&inst, opts.max_steps),
    };
    let mut models = Vec::new();
    for d in &out.saturated {
        match extract_models(d, selection) {
            Ok(ms) => models.extend(ms.into_iter().map(|m| (m, d.clone()))),
            Err(Error::NoLinearization(_)) => {}
            Err(e) => return Err(e),
        }
    }
    models.sort_by(|a, b| a.0.key.cmp(&b.0.key));
    models.dedup_by(|a, b| a.0.key == b.0.key);
    Ok((models, out))
}

pub fn parse(sentence: &str, g: &Grammar, lex: &Lexicon, opts: &ParseOptions) -> Result<ParseResult> {
    let (graph, filter, unknown_words) = selections(sentence, g, lex, opts)?;
    let mut stats = ParseStats::default();
    let mut incomplete = false;
    let mut found: BTreeMap<String, ParsedModel> = BTreeMap::new();
    for path in graph.paths(usize::MAX) {
        stats.selections += 1;
        let selection = graph.selection(&path);
        let (models, out) = parse_selection(&selection, opts)?;
        stats.saturated += out.saturated.len();
        stats.steps += out.stats.steps;
        stats.dead_ends += out.stats.dead_ends;
        stats.cells += out.stats.cells;
        incomplete |= out.incomplete;
        let described = graph.describe(&path);
        for (m, ptd) in models {
            found.entry(m.key.clone()).or_insert_with(|| ParsedModel {
                tree: m.tree,
                interpretation: m.interpretation,
                selection: described.clone(),
                iptds: selection.clone(),
                ptd,
                key: m.key,
                variants: m.variants,
            });
        }
    }
    let truncated = found.len() > opts.max_models;
    let models = found.into_values().take(opts.max_models).collect();
    Ok(ParseResult {
        sentence: sentence.to_string(),
        unknown_words,
        filter,
        models,
        stats,
        incomplete,
        truncated,
    })
}
