//! Deterministic reports for parses, filters and model checks.
//!
//! Reports carry no timings so that identical inputs give byte-identical
//! output.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::filter::FilterStats;
use crate::model::{ConditionTag, Interpretation, ModelVerdict};
use crate::parser::{ParseResult, ParseStats, ParsedModel};
use crate::ptd::{GraphExport, Origin};
use crate::tree::{SyntacticTree, TreeDoc, TreeNodeId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InterpretationRow {
    pub origins: Vec<String>,
    pub node: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ModelReport {
    pub selection: Vec<String>,
    pub bracketed: String,
    pub phonology: Vec<String>,
    pub tree: TreeDoc,
    pub interpretation: Vec<InterpretationRow>,
    /// Ordered trees identified with this one.
    pub variants: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParseReport {
    pub sentence: String,
    /// `PARSED` or `NO_PARSE`.
    pub status: &'static str,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub unknown_words: Vec<String>,
    pub filter: FilterStats,
    pub models: Vec<ModelReport>,
    pub stats: ParseStats,
    pub incomplete: bool,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GraphReport {
    pub sentence: String,
    pub status: &'static str,
    pub models: Vec<GraphModel>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GraphModel {
    pub selection: Vec<String>,
    pub bracketed: String,
    pub ptd: GraphExport,
}

/// Rows grouping description nodes by their image, in tree preorder:
/// `{A2, A3, A4} -> n0`.
pub fn interpretation_table(tree: &SyntacticTree, interp: &Interpretation) -> Vec<InterpretationRow> {
    let mut by_node: BTreeMap<TreeNodeId, Vec<&Origin>> = BTreeMap::new();
    for (o, t) in interp {
        by_node.entry(*t).or_default().push(o);
    }
    tree.preorder()
        .into_iter()
        .filter_map(|t| {
            by_node.get(&t).map(|os| InterpretationRow {
                origins: os.iter().map(ToString::to_string).collect(),
                node: tree.node(t).name.clone(),
            })
        })
        .collect()
}

pub fn model_report(m: &ParsedModel) -> ModelReport {
    ModelReport {
        selection: m.selection.clone(),
        bracketed: m.tree.bracketed(),
        phonology: m
            .tree
            .phonological_projection(m.tree.root())
            .into_iter()
            .map(str::to_string)
            .collect(),
        tree: m.tree.to_doc(),
        interpretation: interpretation_table(&m.tree, &m.interpretation),
        variants: m.variants,
    }
}

fn status(r: &ParseResult) -> &'static str {
    if r.models.is_empty() {
        "NO_PARSE"
    } else {
        "PARSED"
    }
}

pub fn parse_report(r: &ParseResult) -> ParseReport {
    ParseReport {
        sentence: r.sentence.clone(),
        status: status(r),
        unknown_words: r.unknown_words.clone(),
        filter: r.filter.clone(),
        models: r.models.iter().map(model_report).collect(),
        stats: r.stats,
        incomplete: r.incomplete,
        truncated: r.truncated,
    }
}

pub fn graph_report(r: &ParseResult) -> GraphReport {
    GraphReport {
        sentence: r.sentence.clone(),
        status: status(r),
        models: r
            .models
            .iter()
            .map(|m| GraphModel {
                selection: m.selection.clone(),
                bracketed: m.tree.bracketed(),
                ptd: m.ptd.to_graph(),
            })
            .collect(),
    }
}

pub fn render_parse_text(r: &ParseReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "sentence: {}", r.sentence);
    for w in &r.unknown_words {
        let _ = writeln!(s, "unknown word: {w}");
    }
    let _ = writeln!(
        s,
        "selections: {} -> {} after filtering",
        r.filter.before, r.filter.after
    );
    let _ = writeln!(s, "{}: {} model(s)", r.status, r.models.len());
    for (i, m) in r.models.iter().enumerate() {
        let _ = writeln!(s, "model {}: {}", i + 1, m.selection.join(" "));
        let _ = writeln!(s, "  {}", m.bracketed);
        let _ = writeln!(s, "  PP = [{}]", m.phonology.join(", "));
        if m.variants > 1 {
            let _ = writeln!(s, "  stands for {} orders of empty sisters", m.variants);
        }
        for row in &m.interpretation {
            let _ = writeln!(s, "  {{{}}} -> {}", row.origins.join(", "), row.node);
        }
    }
    if r.incomplete {
        let _ = writeln!(s, "warning: search budget exhausted, results may be incomplete");
    }
    if r.truncated {
        let _ = writeln!(s, "warning: more models exist than reported");
    }
    s
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FilterReport {
    pub sentence: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub unknown_words: Vec<String>,
    #[serde(flatten)]
    pub stats: FilterStats,
}

pub fn render_filter_text(r: &FilterReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "sentence: {}", r.sentence);
    for w in &r.unknown_words {
        let _ = writeln!(s, "unknown word: {w}");
    }
    let _ = writeln!(s, "selections before: {}", r.stats.before);
    let _ = writeln!(s, "selections after: {}", r.stats.after);
    let width = r.stats.keys.iter().map(|k| k.key.len()).max().unwrap_or(3).max(3);
    if !r.stats.keys.is_empty() {
        let _ = writeln!(s, "{:width$}  accepted  rejected", "key");
        for k in &r.stats.keys {
            let _ = writeln!(s, "{:width$}  {:>8}  {:>8}", k.key, k.accepted, k.rejected);
        }
    }
    s
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConditionRow {
    pub condition: &'static str,
    pub pass: bool,
    pub messages: Vec<String>,
}

/// One row per model condition, in checking order.
pub fn verdict_rows(v: &ModelVerdict) -> Vec<ConditionRow> {
    ConditionTag::ALL
        .iter()
        .map(|&tag| ConditionRow {
            condition: tag.code(),
            pass: v.passed(tag),
            messages: v
                .violations
                .iter()
                .filter(|x| x.tag == tag)
                .map(|x| {
                    if x.nodes.is_empty() {
                        x.message.clone()
                    } else {
                        format!("{} ({})", x.message, x.nodes.join(", "))
                    }
                })
                .collect(),
        })
        .collect()
}

pub fn render_verdict_text(rows: &[ConditionRow]) -> String {
    let mut s = String::new();
    for r in rows {
        let _ = writeln!(s, "{:9} {}", r.condition, if r.pass { "PASS" } else { "FAIL" });
        for m in &r.messages {
            let _ = writeln!(s, "          {m}");
        }
    }
    s
}
