//! Grammar and lexicon documents, template validation and anchoring.
//!
//! A grammar is a JSON document:
//!
//! ```json
//! {
//!   "signature": {"cat": ["np", "s", "v"]},
//!   "contractions": {"au": ["à", "le"]},
//!   "templates": [{
//!     "id": "propn",
//!     "interface": ["cat = np"],
//!     "nodes": {"B": ["cat + np"], "C": {"type": "anchor", "features": ["cat = np"]}},
//!     "relations": ["B > C"]
//!   }]
//! }
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::{
    compatible, AtomicFeatureStructure, CorefTag, FeatureSignature, FilteringFeatureStructure,
    ValueSet,
};
use crate::notation::{self, RawRelation};
use crate::ptd::{EdgePos, Iptd, NodeId, NodeType, Origin, Ptd, Relation};

/// A template is an unanchored IPTD whose `anchor` is the anchor slot.
pub type Template = Iptd;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GrammarDoc {
    signature: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    contractions: BTreeMap<String, Vec<String>>,
    templates: Vec<IptdDoc>,
}

/// Serialized IPTD, shared by templates and by anchored selections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IptdDoc {
    pub id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interface: Vec<String>,
    pub nodes: BTreeMap<String, NodeDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub relations: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeDoc {
    Features(Vec<String>),
    Typed {
        #[serde(rename = "type")]
        node_type: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        features: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phon: Option<String>,
    },
}

#[derive(Clone, Debug)]
pub struct Grammar {
    pub signature: FeatureSignature,
    pub contractions: BTreeMap<String, Vec<String>>,
    pub templates: Vec<Template>,
}

/// One problem found while checking a grammar.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LintIssue {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    pub message: String,
}

impl std::fmt::Display for LintIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.template {
            Some(t) => write!(f, "{t}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

fn build_signature(doc: &BTreeMap<String, Vec<String>>) -> (FeatureSignature, Vec<LintIssue>) {
    let mut sig = FeatureSignature::new();
    let mut issues = Vec::new();
    for (name, values) in doc {
        if let Err(e) = sig.declare(name, values.iter().cloned()) {
            issues.push(LintIssue {
                template: None,
                message: e.to_string(),
            });
        }
    }
    (sig, issues)
}

/// Builds an IPTD from its document. Templates (`anchored == false`) need
/// exactly one anchor slot without `phon`; anchored descriptions need a
/// `phon` on every anchor.
pub fn build_iptd(sig: &FeatureSignature, doc: &IptdDoc, anchored: bool) -> Result<Iptd, Vec<String>> {
    let mut errors = Vec::new();
    let mut ptd = Ptd::new();
    let mut ids: BTreeMap<&str, NodeId> = BTreeMap::new();
    let mut slots = Vec::new();
    for (name, node) in &doc.nodes {
        let (kind, features, phon) = match node {
            NodeDoc::Features(fs) => ("default", fs.as_slice(), None),
            NodeDoc::Typed {
                node_type,
                features,
                phon,
            } => (node_type.as_str(), features.as_slice(), phon.as_deref()),
        };
        let pfs = match notation::parse_features(sig, features) {
            Ok(p) => p,
            Err(e) => {
                errors.push(format!("node `{name}`: {e}"));
                Default::default()
            }
        };
        let ntype = match (kind, phon) {
            ("anchor", Some(p)) if anchored && !p.is_empty() => NodeType::Anchor(p.to_string()),
            ("anchor", None) if !anchored => NodeType::Full,
            ("anchor", _) if anchored => {
                errors.push(format!("anchor `{name}` needs a non-empty phon"));
                NodeType::Default
            }
            ("anchor", _) => {
                errors.push(format!("anchor slot `{name}` must not carry a phon"));
                NodeType::Default
            }
            (_, Some(_)) => {
                errors.push(format!("only anchors carry a phon (node `{name}`)"));
                NodeType::Default
            }
            ("full", None) => NodeType::Full,
            ("empty", None) => NodeType::Empty,
            ("default", None) => NodeType::Default,
            (other, None) => {
                errors.push(format!("node `{name}`: unknown node type `{other}`"));
                NodeType::Default
            }
        };
        let id = ptd.add_node(&pfs, ntype, Origin::new(0, name.clone()));
        if kind == "anchor" {
            slots.push(id);
        }
        ids.insert(name, id);
    }
    if !anchored && slots.len() != 1 {
        errors.push(format!("expected exactly one anchor slot, found {}", slots.len()));
    }
    let lookup = |n: &str, errors: &mut Vec<String>| -> Option<NodeId> {
        let id = ids.get(n).copied();
        if id.is_none() {
            errors.push(format!("relation mentions unknown node `{n}`"));
        }
        id
    };
    for text in &doc.relations {
        let raw = match notation::parse_relation(sig, text) {
            Ok(r) => r,
            Err(e) => {
                errors.push(e.to_string());
                continue;
            }
        };
        match raw {
            RawRelation::Dom { mother, daughters } => {
                let Some(m) = lookup(&mother, &mut errors) else { continue };
                for (d, pos) in daughters {
                    if let Some(d) = lookup(&d, &mut errors) {
                        ptd.add_relation(Relation::Dom {
                            mother: m,
                            daughter: d,
                            pos,
                        });
                    }
                }
            }
            RawRelation::Arity { mother, daughters } => {
                let Some(m) = lookup(&mother, &mut errors) else { continue };
                let mut ds = Vec::new();
                for d in daughters {
                    if let Some(d) = lookup(&d, &mut errors) {
                        ptd.add_relation(Relation::Dom {
                            mother: m,
                            daughter: d,
                            pos: EdgePos::Any,
                        });
                        ds.push(d);
                    }
                }
                ds.sort();
                let n = ds.len();
                ds.dedup();
                if n != ds.len() {
                    errors.push(format!("repeated daughter in `{text}`"));
                }
                ptd.add_relation(Relation::Arity {
                    mother: m,
                    daughters: ds,
                });
            }
            RawRelation::Ldom {
                ancestor,
                descendant,
                filter,
            } => {
                if let Some(f) = &filter {
                    if f.iter().any(|(name, _)| f.coref(name).is_some()) {
                        errors.push(format!("co-references are not allowed in filters: `{text}`"));
                    }
                }
                if let (Some(a), Some(d)) = (lookup(&ancestor, &mut errors), lookup(&descendant, &mut errors)) {
                    ptd.add_relation(Relation::Ldom {
                        ancestor: a,
                        descendant: d,
                        filter,
                    });
                }
            }
            RawRelation::Prec(a, b) => {
                if let (Some(a), Some(b)) = (lookup(&a, &mut errors), lookup(&b, &mut errors)) {
                    ptd.add_relation(Relation::Prec(a, b));
                }
            }
            RawRelation::Lprec(a, b) => {
                if let (Some(a), Some(b)) = (lookup(&a, &mut errors), lookup(&b, &mut errors)) {
                    ptd.add_relation(Relation::Lprec(a, b));
                }
            }
        }
    }
    let interface = match notation::parse_features(sig, &doc.interface)
        .and_then(|p| FilteringFeatureStructure::from_polarized(&p))
    {
        Ok(i) => i,
        Err(e) => {
            errors.push(format!("interface: {e}"));
            FilteringFeatureStructure::new()
        }
    };
    let iptd = Iptd {
        template: doc.id.clone(),
        interface,
        ptd,
        anchor: if anchored {
            slots.first().copied()
        } else {
            slots.first().copied().filter(|_| slots.len() == 1)
        },
    };
    if errors.is_empty() {
        for issue in iptd.validate() {
            let names: Vec<&str> = issue.nodes.iter().map(|n| iptd.ptd.node(*n).name()).collect();
            errors.push(format!("{} ({})", issue.message, names.join(", ")));
        }
    }
    if errors.is_empty() {
        Ok(iptd)
    } else {
        Err(errors)
    }
}

/// Serializes an IPTD back to its document form.
pub fn iptd_doc(sig: &FeatureSignature, d: &Iptd) -> IptdDoc {
    let name = |id: &NodeId| d.ptd.node(*id).name().to_string();
    let mut nodes = BTreeMap::new();
    for n in d.ptd.nodes.values() {
        let features: Vec<String> = n
            .features
            .iter()
            .map(|(fname, f)| {
                let pol = f.counts.iter().next().expect("unmerged node has one polarity");
                notation::render_feature(
                    sig,
                    &crate::feature::PolarizedFeature {
                        name: fname.clone(),
                        polarity: pol,
                        value: f.value.clone(),
                        coref: f.corefs.iter().next().copied(),
                    },
                )
            })
            .collect();
        let slot = d.anchor == Some(n.id);
        let doc = match (&n.ntype, slot) {
            (NodeType::Anchor(p), _) => NodeDoc::Typed {
                node_type: "anchor".into(),
                features,
                phon: Some(p.clone()),
            },
            (_, true) => NodeDoc::Typed {
                node_type: "anchor".into(),
                features,
                phon: None,
            },
            (NodeType::Default, false) => NodeDoc::Features(features),
            (t, false) => NodeDoc::Typed {
                node_type: t.name().into(),
                features,
                phon: None,
            },
        };
        nodes.insert(n.name().to_string(), doc);
    }
    let relations = d
        .ptd
        .relations
        .iter()
        .map(|r| match r {
            Relation::Dom {
                mother,
                daughter,
                pos,
            } => match pos {
                EdgePos::Any => format!("{} > {}", name(mother), name(daughter)),
                EdgePos::Leftmost => format!("{} > .{}", name(mother), name(daughter)),
                EdgePos::Rightmost => format!("{} > {}.", name(mother), name(daughter)),
            },
            Relation::Arity { mother, daughters } => format!(
                "{} > {{{}}}",
                name(mother),
                daughters.iter().map(name).collect::<Vec<_>>().join(", ")
            ),
            Relation::Ldom {
                ancestor,
                descendant,
                filter,
            } => match filter {
                None => format!("{} >* {}", name(ancestor), name(descendant)),
                Some(f) => format!(
                    "{} >*{{{}}} {}",
                    name(ancestor),
                    notation::render_filter(sig, f),
                    name(descendant)
                ),
            },
            Relation::Prec(a, b) => format!("{} < {}", name(a), name(b)),
            Relation::Lprec(a, b) => format!("{} <+ {}", name(a), name(b)),
        })
        .collect();
    IptdDoc {
        id: d.template.clone(),
        interface: d
            .interface
            .to_polarized()
            .iter()
            .map(|f| notation::render_feature(sig, f))
            .collect(),
        nodes,
        relations,
    }
}

impl Grammar {
    /// Parses and validates a grammar, collecting every problem.
    pub fn lint_str(text: &str) -> (Option<Grammar>, Vec<LintIssue>) {
        match serde_json::from_str::<GrammarDoc>(text) {
            Ok(doc) => Grammar::from_doc(doc),
            Err(e) => (
                None,
                vec![LintIssue {
                    template: None,
                    message: Error::from_json(&e).to_string(),
                }],
            ),
        }
    }

    fn from_doc(doc: GrammarDoc) -> (Option<Grammar>, Vec<LintIssue>) {
        let (signature, mut issues) = build_signature(&doc.signature);
        for (form, words) in &doc.contractions {
            if form.is_empty() || words.is_empty() || words.iter().any(String::is_empty) {
                issues.push(LintIssue {
                    template: None,
                    message: format!("bad contraction `{form}`"),
                });
            }
        }
        let mut templates = Vec::new();
        let mut seen = BTreeSet::new();
        for t in &doc.templates {
            if !seen.insert(t.id.as_str()) {
                issues.push(LintIssue {
                    template: Some(t.id.clone()),
                    message: "duplicate template id".into(),
                });
            }
            match build_iptd(&signature, t, false) {
                Ok(iptd) => templates.push(iptd),
                Err(errs) => issues.extend(errs.into_iter().map(|message| LintIssue {
                    template: Some(t.id.clone()),
                    message,
                })),
            }
        }
        let grammar = issues.is_empty().then(|| Grammar {
            signature,
            contractions: doc.contractions,
            templates,
        });
        (grammar, issues)
    }

    /// Parses and validates a grammar; the first problem is reported.
    pub fn from_json(text: &str) -> Result<Grammar> {
        let doc: GrammarDoc = serde_json::from_str(text).map_err(|e| Error::from_json(&e))?;
        let (g, issues) = Grammar::from_doc(doc);
        g.ok_or_else(|| Error::Validation {
            template: issues[0].template.clone().unwrap_or_else(|| "<grammar>".into()),
            message: issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
        })
    }

    pub fn load(path: &Path) -> Result<Grammar> {
        Grammar::from_json(&std::fs::read_to_string(path)?)
    }

    /// Canonical serialization: sorted keys, `?` for full domains.
    pub fn to_json(&self) -> String {
        let doc = GrammarDoc {
            signature: self
                .signature
                .iter()
                .map(|(k, v)| (k.to_string(), v.iter().cloned().collect()))
                .collect(),
            contractions: self.contractions.clone(),
            templates: self
                .templates
                .iter()
                .map(|t| iptd_doc(&self.signature, t))
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("grammar serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn template(&self, id: &str) -> Option<&Template> {
        self.templates.iter().find(|t| t.template == id)
    }

    /// Features that carry an active polarity somewhere in the grammar.
    pub fn polarized_features(&self) -> BTreeSet<String> {
        self.templates
            .iter()
            .flat_map(|t| t.ptd.nodes.values())
            .flat_map(|n| n.features.iter())
            .filter(|(_, f)| f.counts.positive + f.counts.negative > 0)
            .map(|(name, _)| name.clone())
            .collect()
    }
}

/// Reads a lexical selection: a JSON array of anchored IPTD documents.
pub fn selection_from_json(sig: &FeatureSignature, text: &str) -> Result<Vec<Iptd>> {
    let docs: Vec<IptdDoc> = serde_json::from_str(text).map_err(|e| Error::from_json(&e))?;
    docs.iter()
        .map(|d| {
            build_iptd(sig, d, true).map_err(|errs| Error::Validation {
                template: d.id.clone(),
                message: errs.join("; "),
            })
        })
        .collect()
}

pub fn selection_to_json(sig: &FeatureSignature, selection: &[Iptd]) -> String {
    let docs: Vec<IptdDoc> = selection.iter().map(|d| iptd_doc(sig, d)).collect();
    let mut s = serde_json::to_string_pretty(&docs).expect("selection serializes");
    s.push('\n');
    s
}

/// Allocator for node ids and co-reference tags across anchorings.
#[derive(Clone, Debug, Default)]
pub struct Fresh {
    pub next_node: u32,
    pub next_tag: u32,
}

/// Anchors `template` on `word` if `usage` is compatible with its interface.
/// Node ids and co-reference tags are fresh; interface features carrying a
/// co-reference tag are narrowed by the usage, and so are the template
/// features sharing that tag and name.
pub fn anchor(
    template: &Template,
    word: &str,
    usage: &AtomicFeatureStructure,
    fresh: &mut Fresh,
) -> Option<Iptd> {
    if word.is_empty() || !compatible(usage, &template.interface) {
        return None;
    }
    let slot = template.anchor?;
    let mut tags: BTreeMap<CorefTag, CorefTag> = BTreeMap::new();
    let mut tag_of = |t: CorefTag, fresh: &mut Fresh| {
        *tags.entry(t).or_insert_with(|| {
            let n = CorefTag(fresh.next_tag);
            fresh.next_tag += 1;
            n
        })
    };
    let base = fresh.next_node;
    let shift = |id: NodeId| NodeId(id.0 + base);
    fresh.next_node += template.ptd.next_id;

    let mut narrowed: BTreeMap<(String, CorefTag), ValueSet> = BTreeMap::new();
    let mut interface = FilteringFeatureStructure::new();
    for (name, values) in template.interface.iter() {
        let v = match usage.get(name) {
            Some(u) => values.intersect(&ValueSet::single(u.clone()))?,
            None => values.clone(),
        };
        interface.insert(name, v.clone());
        if let Some(t) = template.interface.coref(name) {
            let t = tag_of(t, fresh);
            interface.set_coref(name, Some(t));
            narrowed.insert((name.to_string(), t), v);
        }
    }

    let mut ptd = Ptd {
        nodes: BTreeMap::new(),
        relations: BTreeSet::new(),
        next_id: base + template.ptd.next_id,
    };
    for n in template.ptd.nodes.values() {
        let mut n = n.clone();
        n.id = shift(n.id);
        if n.id == shift(slot) {
            n.ntype = NodeType::Anchor(word.to_string());
        }
        for (name, f) in n.features.iter_mut() {
            f.corefs = f.corefs.iter().map(|t| tag_of(*t, fresh)).collect();
            for t in &f.corefs {
                if let Some(v) = narrowed.get(&(name.clone(), *t)) {
                    f.value = f.value.intersect(v)?;
                }
            }
        }
        ptd.nodes.insert(n.id, n);
    }
    for r in &template.ptd.relations {
        let r = match r {
            Relation::Dom {
                mother,
                daughter,
                pos,
            } => Relation::Dom {
                mother: shift(*mother),
                daughter: shift(*daughter),
                pos: *pos,
            },
            Relation::Arity { mother, daughters } => Relation::Arity {
                mother: shift(*mother),
                daughters: daughters.iter().map(|d| shift(*d)).collect(),
            },
            Relation::Ldom {
                ancestor,
                descendant,
                filter,
            } => Relation::Ldom {
                ancestor: shift(*ancestor),
                descendant: shift(*descendant),
                filter: filter.clone(),
            },
            Relation::Prec(a, b) => Relation::Prec(shift(*a), shift(*b)),
            Relation::Lprec(a, b) => Relation::Lprec(shift(*a), shift(*b)),
        };
        ptd.relations.insert(r);
    }
    Some(Iptd {
        template: template.template.clone(),
        interface,
        ptd,
        anchor: Some(shift(slot)),
    })
}

/// Word forms mapped to their usages.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lexicon {
    pub entries: BTreeMap<String, Vec<AtomicFeatureStructure>>,
}

impl Lexicon {
    pub fn from_json(text: &str) -> Result<Lexicon> {
        let lex: Lexicon = serde_json::from_str(text).map_err(|e| Error::from_json(&e))?;
        if lex.entries.keys().any(String::is_empty) {
            return Err(Error::Validation {
                template: "<lexicon>".into(),
                message: "empty word form".into(),
            });
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Lexicon> {
        Lexicon::from_json(&std::fs::read_to_string(path)?)
    }

    /// Usage features or values unknown to the signature.
    pub fn check(&self, sig: &FeatureSignature) -> Vec<String> {
        let mut out = Vec::new();
        for (word, usages) in &self.entries {
            for u in usages {
                for (k, v) in u {
                    match sig.domain(k) {
                        None => out.push(format!("`{word}`: unknown feature `{k}`")),
                        Some(d) if !d.contains(v) => {
                            out.push(format!("`{word}`: `{v}` is not a value of `{k}`"))
                        }
                        _ => {}
                    }
                }
            }
        }
        out
    }

    pub fn usages(&self, word: &str) -> &[AtomicFeatureStructure] {
        self.entries.get(word).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
      "signature": {"cat": ["np", "s", "v", "n"], "funct": ["subj", "obj"], "agr": ["sg", "pl"]},
      "templates": [
        {"id": "propn", "interface": ["cat = np"],
         "nodes": {"B": ["cat + np"], "C": {"type": "anchor", "features": ["cat = np"]}},
         "relations": ["B > C"]},
        {"id": "tverb", "interface": ["cat = v", "agr = <1> ?"],
         "nodes": {"S": ["cat + s"], "N": ["cat - np", "funct = subj", "agr = <1> ?"],
                   "V": {"type": "anchor", "features": ["cat = v"]}},
         "relations": ["S > N, V.", "N <+ V"]}
      ]
    }"#;

    #[test]
    fn load_save_round_trip() {
        let g = Grammar::from_json(SMALL).unwrap();
        assert_eq!(g.templates.len(), 2);
        let canon = g.to_json();
        let again = Grammar::from_json(&canon).unwrap();
        assert_eq!(again.to_json(), canon);
        assert!(canon.contains("\"agr = <1> ?\""));
    }

    #[test]
    fn validation_errors() {
        let bad = SMALL.replace("\"N <+ V\"", "\"N <+ C\"");
        let (_, issues) = Grammar::lint_str(&bad);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].template.as_deref(), Some("tverb"));

        let unknown = SMALL.replace("\"cat + np\"]", "\"size + big\"]");
        let (_, issues) = Grammar::lint_str(&unknown);
        assert_eq!(issues.len(), 1);
        assert!(matches!(Grammar::from_json(&unknown), Err(Error::Validation { .. })));

        assert!(matches!(Grammar::from_json("{\"signature\": "), Err(Error::Parse { line: 1, .. })));

        let no_mother = SMALL.replace("\"S > N, V.\", ", "\"S > V.\", ");
        let (_, issues) = Grammar::lint_str(&no_mother);
        assert!(!issues.is_empty());
    }

    #[test]
    fn anchoring() {
        let g = Grammar::from_json(SMALL).unwrap();
        let tv = g.template("tverb").unwrap();
        let mut fresh = Fresh::default();
        let usage: AtomicFeatureStructure =
            [("cat".to_string(), "v".to_string()), ("agr".to_string(), "pl".to_string())].into();
        let a = anchor(tv, "voient", &usage, &mut fresh).unwrap();
        assert_eq!(a.phon(), Some("voient"));
        assert!(a.validate().is_empty());
        let n = a.node_by_name("N").unwrap();
        assert_eq!(a.ptd.node(n).features["agr"].value, ValueSet::single("pl"));
        // the template itself is untouched
        let tn = tv.node_by_name("N").unwrap();
        assert_eq!(tv.ptd.node(tn).features["agr"].value.len(), 2);

        let b = anchor(tv, "voient", &usage, &mut fresh).unwrap();
        let ids_a: BTreeSet<_> = a.ptd.nodes.keys().collect();
        assert!(b.ptd.nodes.keys().all(|k| !ids_a.contains(k)));
        let tags = |d: &Iptd| -> BTreeSet<CorefTag> {
            d.ptd.nodes.values().flat_map(|n| n.features.values()).flat_map(|f| f.corefs.clone()).collect()
        };
        assert!(tags(&a).is_disjoint(&tags(&b)));

        let noun: AtomicFeatureStructure = [("cat".to_string(), "n".to_string())].into();
        assert!(anchor(tv, "voit", &noun, &mut fresh).is_none());
    }
}
