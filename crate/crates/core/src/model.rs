//! Model checking: does a syntactic tree, through an interpretation, satisfy
//! every adequacy, saturation and minimality condition of a description?

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::feature::{CorefTag, FilteringFeatureStructure, PolarityCounts, ValueSet};
use crate::ptd::{EdgePos, Iptd, NodeFeature, NodeId, NodeType, Origin, Ptd, Relation};
use crate::tree::{SyntacticTree, TreeNodeId};

/// Maps description nodes, named by origin, to tree nodes.
pub type Interpretation = BTreeMap<Origin, TreeNodeId>;

pub const DEFAULT_ORACLE_BOUND: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ConditionTag {
    #[serde(rename = "DOM")]
    Dom,
    #[serde(rename = "LDOM")]
    Ldom,
    #[serde(rename = "PREC")]
    Prec,
    #[serde(rename = "LPREC")]
    Lprec,
    #[serde(rename = "FEAT")]
    Feat,
    #[serde(rename = "COREF")]
    Coref,
    #[serde(rename = "NODETYPE")]
    NodeType,
    #[serde(rename = "SAT")]
    Sat,
    #[serde(rename = "MIN-SURJ")]
    MinSurj,
    #[serde(rename = "MIN-EDGE")]
    MinEdge,
    #[serde(rename = "MIN-FEAT")]
    MinFeat,
    #[serde(rename = "MIN-PHON")]
    MinPhon,
}

impl ConditionTag {
    pub const ALL: [ConditionTag; 12] = [
        ConditionTag::Dom,
        ConditionTag::Ldom,
        ConditionTag::Prec,
        ConditionTag::Lprec,
        ConditionTag::Feat,
        ConditionTag::Coref,
        ConditionTag::NodeType,
        ConditionTag::Sat,
        ConditionTag::MinSurj,
        ConditionTag::MinEdge,
        ConditionTag::MinFeat,
        ConditionTag::MinPhon,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ConditionTag::Dom => "DOM",
            ConditionTag::Ldom => "LDOM",
            ConditionTag::Prec => "PREC",
            ConditionTag::Lprec => "LPREC",
            ConditionTag::Feat => "FEAT",
            ConditionTag::Coref => "COREF",
            ConditionTag::NodeType => "NODETYPE",
            ConditionTag::Sat => "SAT",
            ConditionTag::MinSurj => "MIN-SURJ",
            ConditionTag::MinEdge => "MIN-EDGE",
            ConditionTag::MinFeat => "MIN-FEAT",
            ConditionTag::MinPhon => "MIN-PHON",
        }
    }
}

impl fmt::Display for ConditionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub tag: ConditionTag,
    pub nodes: Vec<String>,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ModelVerdict {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ModelVerdict {
    pub fn failed_tags(&self) -> BTreeSet<ConditionTag> {
        self.violations.iter().map(|v| v.tag).collect()
    }

    pub fn passed(&self, tag: ConditionTag) -> bool {
        !self.violations.iter().any(|v| v.tag == tag)
    }
}

/// A flat view over the description nodes being interpreted, whether they
/// come from a multiset of IPTDs or from one (merged) PTD.
struct View<'a> {
    labels: Vec<String>,
    features: Vec<&'a BTreeMap<String, NodeFeature>>,
    ntypes: Vec<&'a NodeType>,
    /// Co-reference tags only link features within the same scope.
    scopes: Vec<usize>,
    rels: Vec<VRel<'a>>,
}

enum VRel<'a> {
    Dom(usize, usize, EdgePos),
    Arity(usize, Vec<usize>),
    Ldom(usize, usize, Option<&'a FilteringFeatureStructure>),
    Prec(usize, usize),
    Lprec(usize, usize),
}

impl<'a> View<'a> {
    fn push_ptd(&mut self, ptd: &'a Ptd, scope: usize, label: impl Fn(&crate::ptd::DescNode) -> String) {
        let base = self.labels.len();
        let index: BTreeMap<NodeId, usize> = ptd
            .nodes
            .keys()
            .enumerate()
            .map(|(i, id)| (*id, base + i))
            .collect();
        for n in ptd.nodes.values() {
            self.labels.push(label(n));
            self.features.push(&n.features);
            self.ntypes.push(&n.ntype);
            self.scopes.push(scope);
        }
        for r in &ptd.relations {
            self.rels.push(match r {
                Relation::Dom {
                    mother,
                    daughter,
                    pos,
                } => VRel::Dom(index[mother], index[daughter], *pos),
                Relation::Arity { mother, daughters } => {
                    VRel::Arity(index[mother], daughters.iter().map(|d| index[d]).collect())
                }
                Relation::Ldom {
                    ancestor,
                    descendant,
                    filter,
                } => VRel::Ldom(index[ancestor], index[descendant], filter.as_ref()),
                Relation::Prec(a, b) => VRel::Prec(index[a], index[b]),
                Relation::Lprec(a, b) => VRel::Lprec(index[a], index[b]),
            });
        }
    }

    fn empty() -> Self {
        View {
            labels: Vec::new(),
            features: Vec::new(),
            ntypes: Vec::new(),
            scopes: Vec::new(),
            rels: Vec::new(),
        }
    }

    fn from_iptds(ds: &'a [Iptd]) -> (Self, Vec<Origin>) {
        let mut v = View::empty();
        let mut origins = Vec::new();
        for (k, d) in ds.iter().enumerate() {
            let inst = k as u32 + 1;
            for n in d.ptd.nodes.values() {
                origins.push(Origin::new(inst, n.name()));
            }
            v.push_ptd(&d.ptd, k, |n| Origin::new(inst, n.name()).to_string());
        }
        (v, origins)
    }

    fn from_ptd(ptd: &'a Ptd) -> Self {
        let mut v = View::empty();
        v.push_ptd(ptd, 0, |n| n.label());
        v
    }

    fn len(&self) -> usize {
        self.labels.len()
    }
}

/// Tree values must all be admitted by the filter on shared names.
fn admits(filter: &FilteringFeatureStructure, fs: &BTreeMap<String, ValueSet>) -> bool {
    filter.admits(fs)
}

fn check_view(tree: &SyntacticTree, v: &View, img: &[TreeNodeId]) -> ModelVerdict {
    let mut out = Vec::new();
    let mut violate = |tag, nodes: Vec<usize>, message: String| {
        out.push(Violation {
            tag,
            nodes: nodes.into_iter().map(|i| v.labels[i].clone()).collect(),
            message,
        });
    };
    let tname = |t: TreeNodeId| tree.node(t).name.as_str();

    for r in &v.rels {
        match r {
            VRel::Dom(m, d, pos) => {
                let (tm, td) = (img[*m], img[*d]);
                if !tree.is_parent(tm, td) {
                    violate(
                        ConditionTag::Dom,
                        vec![*m, *d],
                        format!("{} is not the mother of {}", tname(tm), tname(td)),
                    );
                    continue;
                }
                let kids = &tree.node(tm).children;
                let bad = match pos {
                    EdgePos::Any => false,
                    EdgePos::Leftmost => kids.first() != Some(&td),
                    EdgePos::Rightmost => kids.last() != Some(&td),
                };
                if bad {
                    violate(
                        ConditionTag::Dom,
                        vec![*m, *d],
                        format!("{} is not the {:?} daughter of {}", tname(td), pos, tname(tm)),
                    );
                }
            }
            VRel::Arity(m, ds) => {
                let images: BTreeSet<TreeNodeId> = ds.iter().map(|d| img[*d]).collect();
                let kids: BTreeSet<TreeNodeId> =
                    tree.node(img[*m]).children.iter().copied().collect();
                if images != kids || images.len() != ds.len() {
                    let mut nodes = vec![*m];
                    nodes.extend(ds);
                    violate(
                        ConditionTag::Dom,
                        nodes,
                        format!("{} does not have exactly the required daughters", tname(img[*m])),
                    );
                }
            }
            VRel::Ldom(a, d, filter) => {
                let (ta, td) = (img[*a], img[*d]);
                match tree.path(ta, td) {
                    Err(_) => violate(
                        ConditionTag::Ldom,
                        vec![*a, *d],
                        format!("{} does not dominate {}", tname(ta), tname(td)),
                    ),
                    Ok(path) => {
                        if let Some(f) = filter {
                            if let Some(p) = path.iter().find(|p| !admits(f, &tree.node(**p).features)) {
                                violate(
                                    ConditionTag::Ldom,
                                    vec![*a, *d],
                                    format!("{} on the path is not compatible with {{{f}}}", tname(*p)),
                                );
                            }
                        }
                    }
                }
            }
            VRel::Prec(a, b) | VRel::Lprec(a, b) => {
                let large = matches!(r, VRel::Lprec(..));
                let (ta, tb) = (img[*a], img[*b]);
                let pa = tree.node(ta).parent;
                let ok = pa.is_some() && pa == tree.node(tb).parent && {
                    let (ia, ib) = (tree.sibling_index(ta).unwrap(), tree.sibling_index(tb).unwrap());
                    if large {
                        ia < ib
                    } else {
                        ia + 1 == ib
                    }
                };
                if !ok {
                    let tag = if large { ConditionTag::Lprec } else { ConditionTag::Prec };
                    violate(
                        tag,
                        vec![*a, *b],
                        format!("{} does not precede {} as required", tname(ta), tname(tb)),
                    );
                }
            }
        }
    }

    // preimages of every tree node
    let mut pre: Vec<Vec<usize>> = vec![Vec::new(); tree.len()];
    for (i, t) in img.iter().enumerate() {
        pre[t.0].push(i);
    }

    for t in tree.ids() {
        for (name, value) in &tree.node(t).features {
            for &n in &pre[t.0] {
                if let Some(f) = v.features[n].get(name) {
                    if !value.is_subset(&f.value) {
                        violate(
                            ConditionTag::Feat,
                            vec![n],
                            format!("{}: {name}={value} is not admitted by {}", tname(t), f.value),
                        );
                    }
                }
            }
        }
    }

    let mut corefs: BTreeMap<(usize, CorefTag, &str), Vec<usize>> = BTreeMap::new();
    for n in 0..v.len() {
        for (name, f) in v.features[n] {
            for tag in &f.corefs {
                corefs.entry((v.scopes[n], *tag, name.as_str())).or_default().push(n);
            }
        }
    }
    for ((_, _, name), nodes) in &corefs {
        let values: BTreeSet<Option<&ValueSet>> = nodes
            .iter()
            .map(|n| tree.node(img[*n]).features.get(*name))
            .collect();
        if values.len() > 1 {
            violate(
                ConditionTag::Coref,
                nodes.clone(),
                format!("co-referent `{name}` values differ in the tree"),
            );
        }
    }

    for n in 0..v.len() {
        let t = img[n];
        let pp = tree.phonological_projection(t);
        let bad = match v.ntypes[n] {
            NodeType::Anchor(p) => (!tree.is_leaf(t) || pp != [p.as_str()])
                .then(|| format!("anchor `{p}` has image {} with projection {pp:?}", tname(t))),
            NodeType::Empty => (!pp.is_empty())
                .then(|| format!("empty node has image {} with projection {pp:?}", tname(t))),
            NodeType::Full => pp
                .is_empty()
                .then(|| format!("full node has image {} with an empty projection", tname(t))),
            NodeType::Default => None,
        };
        if let Some(msg) = bad {
            violate(ConditionTag::NodeType, vec![n], msg);
        }
    }

    for t in tree.ids() {
        let mut counts: BTreeMap<&str, PolarityCounts> = BTreeMap::new();
        for &n in &pre[t.0] {
            for (name, f) in v.features[n] {
                let c = counts.entry(name).or_default();
                *c = c.union(f.counts);
            }
        }
        for (name, c) in counts {
            if !c.is_saturated() {
                violate(
                    ConditionTag::Sat,
                    pre[t.0].clone(),
                    format!("{}: `{name}` polarities {c} are not saturated", tname(t)),
                );
            }
        }
    }

    let mut is_dom: BTreeSet<(usize, usize)> = BTreeSet::new();
    for r in &v.rels {
        if let VRel::Dom(m, d, _) = r {
            is_dom.insert((*m, *d));
        }
    }
    for t in tree.ids() {
        if pre[t.0].is_empty() {
            violate(
                ConditionTag::MinSurj,
                vec![],
                format!("{} is not the image of any description node", tname(t)),
            );
        }
        if let Some(p) = tree.node(t).parent {
            let witnessed = pre[p.0]
                .iter()
                .any(|m| pre[t.0].iter().any(|d| is_dom.contains(&(*m, *d))));
            if !witnessed {
                violate(
                    ConditionTag::MinEdge,
                    vec![],
                    format!("edge {} > {} has no dominance preimage", tname(p), tname(t)),
                );
            }
        }
        for name in tree.node(t).features.keys() {
            if !pre[t.0].iter().any(|n| v.features[*n].contains_key(name)) {
                violate(
                    ConditionTag::MinFeat,
                    vec![],
                    format!("{}: feature `{name}` is carried by no preimage", tname(t)),
                );
            }
        }
        if let Some(p) = &tree.node(t).phon {
            if !p.is_empty() {
                let anchors: Vec<usize> = pre[t.0]
                    .iter()
                    .copied()
                    .filter(|n| v.ntypes[*n].phon() == Some(p.as_str()))
                    .collect();
                if anchors.len() != 1 {
                    violate(
                        ConditionTag::MinPhon,
                        anchors,
                        format!("leaf {} `{p}` needs exactly one anchor `{p}`", tname(t)),
                    );
                }
            }
        }
    }

    ModelVerdict {
        ok: out.is_empty(),
        violations: out,
    }
}

fn images_of(
    tree: &SyntacticTree,
    keys: &[Origin],
    interp: &Interpretation,
) -> Result<Vec<TreeNodeId>> {
    let known: BTreeSet<&Origin> = keys.iter().collect();
    if let Some(extra) = interp.keys().find(|k| !known.contains(k)) {
        return Err(Error::Interpretation(format!("`{extra}` is not a description node")));
    }
    keys.iter()
        .map(|k| {
            let t = *interp
                .get(k)
                .ok_or_else(|| Error::Interpretation(format!("no image for `{k}`")))?;
            if tree.get(t).is_none() {
                return Err(Error::Interpretation(format!("`{k}` maps outside the tree")));
            }
            Ok(t)
        })
        .collect()
}

/// Reads `{"A2": "A", ...}`: description nodes to tree node names.
pub fn interpretation_from_json(tree: &SyntacticTree, text: &str) -> Result<Interpretation> {
    let raw: BTreeMap<String, String> = serde_json::from_str(text).map_err(|e| Error::from_json(&e))?;
    raw.iter()
        .map(|(o, name)| {
            let origin: Origin = o
                .parse()
                .map_err(|_| Error::Interpretation(format!("bad description node `{o}`")))?;
            let t = tree
                .by_name(name)
                .ok_or_else(|| Error::Interpretation(format!("no tree node named `{name}`")))?;
            Ok((origin, t))
        })
        .collect()
}

pub fn interpretation_to_json(tree: &SyntacticTree, interp: &Interpretation) -> String {
    let raw: BTreeMap<String, &str> = interp
        .iter()
        .map(|(o, t)| (o.to_string(), tree.node(*t).name.as_str()))
        .collect();
    let mut s = serde_json::to_string_pretty(&raw).expect("interpretation serializes");
    s.push('\n');
    s
}

/// Checks every model condition of `ds` (a multiset of IPTDs, the i-th one
/// being instance i+1) against `tree` under `interp`. A partial
/// interpretation is an error, not a verdict.
pub fn check_model(tree: &SyntacticTree, ds: &[Iptd], interp: &Interpretation) -> Result<ModelVerdict> {
    let (view, keys) = View::from_iptds(ds);
    let img = images_of(tree, &keys, interp)?;
    Ok(check_view(tree, &view, &img))
}

/// Same conditions for a single (possibly merged) PTD, interpreted by node id.
pub fn check_ptd_model(
    tree: &SyntacticTree,
    ptd: &Ptd,
    interp: &BTreeMap<NodeId, TreeNodeId>,
) -> Result<ModelVerdict> {
    let view = View::from_ptd(ptd);
    let mut img = Vec::with_capacity(ptd.len());
    for id in ptd.nodes.keys() {
        let t = *interp
            .get(id)
            .ok_or_else(|| Error::Interpretation(format!("no image for node {id}")))?;
        if tree.get(t).is_none() {
            return Err(Error::Interpretation(format!("node {id} maps outside the tree")));
        }
        img.push(t);
    }
    if interp.len() != ptd.len() {
        return Err(Error::Interpretation("interpretation mentions unknown nodes".into()));
    }
    Ok(check_view(tree, &view, &img))
}

/// Node-local conditions usable before the whole map is known.
fn unary_ok(tree: &SyntacticTree, v: &View, n: usize, t: TreeNodeId) -> bool {
    let node = tree.node(t);
    for (name, value) in &node.features {
        if let Some(f) = v.features[n].get(name) {
            if !value.is_subset(&f.value) {
                return false;
            }
        }
    }
    match v.ntypes[n] {
        NodeType::Anchor(p) => node.phon.as_deref() == Some(p.as_str()),
        NodeType::Empty => tree.phonological_projection(t).is_empty(),
        NodeType::Full => !tree.phonological_projection(t).is_empty(),
        NodeType::Default => true,
    }
}

fn binary_ok(tree: &SyntacticTree, v: &View, img: &[Option<TreeNodeId>]) -> bool {
    for r in &v.rels {
        let ok = match r {
            VRel::Dom(m, d, _) => match (img[*m], img[*d]) {
                (Some(a), Some(b)) => tree.is_parent(a, b),
                _ => true,
            },
            VRel::Ldom(a, d, _) => match (img[*a], img[*d]) {
                (Some(x), Some(y)) => tree.dominates(x, y),
                _ => true,
            },
            VRel::Prec(a, b) | VRel::Lprec(a, b) => match (img[*a], img[*b]) {
                (Some(x), Some(y)) => {
                    let p = tree.node(x).parent;
                    p.is_some() && p == tree.node(y).parent && {
                        let (i, j) = (tree.sibling_index(x).unwrap(), tree.sibling_index(y).unwrap());
                        if matches!(r, VRel::Lprec(..)) {
                            i < j
                        } else {
                            i + 1 == j
                        }
                    }
                }
                _ => true,
            },
            VRel::Arity(..) => true,
        };
        if !ok {
            return false;
        }
    }
    true
}

/// Exhaustive search for interpretations under which `tree` is a model of
/// `ds`, pruned by node-local and pairwise conditions. At most `limit`
/// results; fails above `bound` description nodes.
pub fn find_interpretations(
    tree: &SyntacticTree,
    ds: &[Iptd],
    limit: usize,
    bound: usize,
) -> Result<Vec<Interpretation>> {
    let (view, keys) = View::from_iptds(ds);
    if view.len() > bound {
        return Err(Error::OracleTooLarge {
            nodes: view.len(),
            bound,
        });
    }
    let candidates: Vec<Vec<TreeNodeId>> = (0..view.len())
        .map(|n| tree.ids().filter(|&t| unary_ok(tree, &view, n, t)).collect())
        .collect();
    let mut img = vec![None; view.len()];
    let mut found = Vec::new();
    search(tree, &view, &candidates, 0, &mut img, &mut |full| {
        if check_view(tree, &view, full).ok {
            found.push(keys.iter().cloned().zip(full.iter().copied()).collect());
        }
        found.len() < limit
    });
    Ok(found)
}

fn search(
    tree: &SyntacticTree,
    v: &View,
    cands: &[Vec<TreeNodeId>],
    i: usize,
    img: &mut Vec<Option<TreeNodeId>>,
    emit: &mut dyn FnMut(&[TreeNodeId]) -> bool,
) -> bool {
    if i == v.len() {
        let full: Vec<TreeNodeId> = img.iter().map(|t| t.unwrap()).collect();
        return emit(&full);
    }
    for &t in &cands[i] {
        img[i] = Some(t);
        if binary_ok(tree, v, img) && !search(tree, v, cands, i + 1, img, emit) {
            img[i] = None;
            return false;
        }
    }
    img[i] = None;
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature::FeatureSignature;
    use crate::notation::parse_features;
    use crate::tree::TreeDoc;

    fn sig() -> FeatureSignature {
        let mut s = FeatureSignature::new();
        s.declare("cat", ["s", "np", "v"]).unwrap();
        s
    }

    fn iptd(nodes: &[(&str, &[&str], NodeType)], doms: &[(&str, &str)]) -> Iptd {
        let mut p = Ptd::new();
        let mut ids = BTreeMap::new();
        for (name, feats, t) in nodes {
            let id = p.add_node(&parse_features(&sig(), feats).unwrap(), t.clone(), Origin::new(0, *name));
            ids.insert(*name, id);
        }
        for (m, d) in doms {
            p.add_relation(Relation::Dom {
                mother: ids[m],
                daughter: ids[d],
                pos: EdgePos::Any,
            });
        }
        Iptd {
            template: "t".into(),
            interface: FilteringFeatureStructure::new(),
            ptd: p,
            anchor: None,
        }
    }

    fn tree(json: &str) -> SyntacticTree {
        SyntacticTree::from_doc(&serde_json::from_str::<TreeDoc>(json).unwrap()).unwrap()
    }

    #[test]
    fn two_iptds_one_tree() {
        // np anchored by "a" plugs into the subject slot of "b"
        let d1 = iptd(
            &[("A", &["cat + np"], NodeType::Default), ("B", &[], NodeType::Anchor("a".into()))],
            &[("A", "B")],
        );
        let d2 = iptd(
            &[
                ("S", &["cat = s"], NodeType::Default),
                ("N", &["cat - np"], NodeType::Default),
                ("V", &[], NodeType::Anchor("b".into())),
            ],
            &[("S", "N"), ("S", "V")],
        );
        let t = tree(
            r#"{"name":"s","features":{"cat":"s"},"children":[
                {"name":"np","features":{"cat":"np"},"children":[{"name":"a","phon":"a"}]},
                {"name":"b","phon":"b"}]}"#,
        );
        let ds = vec![d1, d2];
        let found = find_interpretations(&t, &ds, 10, DEFAULT_ORACLE_BOUND).unwrap();
        assert_eq!(found.len(), 1);
        let i = &found[0];
        assert_eq!(i[&Origin::new(1, "A")], i[&Origin::new(2, "N")]);
        assert!(check_model(&t, &ds, i).unwrap().ok);

        let mut partial = i.clone();
        partial.remove(&Origin::new(1, "B"));
        assert!(check_model(&t, &ds, &partial).is_err());

        // swapping the order breaks nothing structural but violates nothing either:
        // there is no precedence constraint, so the reversed tree is a model too
        let swapped = tree(
            r#"{"name":"s","features":{"cat":"s"},"children":[
                {"name":"b","phon":"b"},
                {"name":"np","features":{"cat":"np"},"children":[{"name":"a","phon":"a"}]}]}"#,
        );
        assert_eq!(find_interpretations(&swapped, &ds, 10, 14).unwrap().len(), 1);

        // the single description alone leaves cat - np unsaturated
        let alone = find_interpretations(&t, &ds[1..], 10, 14).unwrap();
        assert!(alone.is_empty());
    }

    #[test]
    fn empty_multiset_has_no_model() {
        let t = tree(r#"{"name":"x","phon":""}"#);
        assert!(find_interpretations(&t, &[], 10, 14).unwrap().is_empty());
        let v = check_model(&t, &[], &Interpretation::new()).unwrap();
        assert_eq!(v.failed_tags(), BTreeSet::from([ConditionTag::MinSurj]));
    }

    #[test]
    fn oracle_bound() {
        let d = iptd(&[("A", &[], NodeType::Default)], &[]);
        let t = tree(r#"{"name":"x","phon":""}"#);
        let ds = vec![d; 3];
        assert!(matches!(
            find_interpretations(&t, &ds, 1, 2),
            Err(Error::OracleTooLarge { nodes: 3, bound: 2 })
        ));
    }
}
