//! Polarized tree descriptions and node merging.
//!
//! A [`Ptd`] is a persistent value: [`Ptd::merge_nodes`] never mutates its
//! input, so search branches can share ancestors freely.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature::{
    CorefTag, FilteringFeatureStructure, PolarityCounts, PolarizedFeatureStructure, ValueSet,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Provenance of a description node: which IPTD instance (its 1-based
/// position in the lexical selection, 0 for a bare template) and which
/// node of that IPTD.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Origin {
    pub instance: u32,
    pub node: String,
}

impl Origin {
    pub fn new(instance: u32, node: impl Into<String>) -> Self {
        Origin {
            instance,
            node: node.into(),
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.node.ends_with(|c: char| c.is_ascii_digit()) {
            write!(f, "{}.{}", self.node, self.instance)
        } else {
            write!(f, "{}{}", self.node, self.instance)
        }
    }
}

impl FromStr for Origin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("bad description node reference `{s}`");
        if let Some((node, inst)) = s.rsplit_once('.') {
            if !node.is_empty() {
                if let Ok(n) = inst.parse() {
                    return Ok(Origin::new(n, node));
                }
            }
        }
        let split = s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        if split == 0 || split == s.len() {
            return Err(bad());
        }
        let instance = s[split..].parse().map_err(|_| bad())?;
        Ok(Origin::new(instance, &s[..split]))
    }
}

impl Serialize for Origin {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Origin {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeType {
    Anchor(String),
    Full,
    Empty,
    Default,
}

impl NodeType {
    pub fn name(&self) -> &'static str {
        match self {
            NodeType::Anchor(_) => "anchor",
            NodeType::Full => "full",
            NodeType::Empty => "empty",
            NodeType::Default => "default",
        }
    }

    pub fn phon(&self) -> Option<&str> {
        match self {
            NodeType::Anchor(p) => Some(p),
            _ => None,
        }
    }
}

/// Combines the node types of two merged nodes.
pub fn node_type_combine(x: &NodeType, y: &NodeType) -> Result<NodeType, ClashKind> {
    use NodeType::*;
    match (x, y) {
        (Default, t) | (t, Default) => Ok(t.clone()),
        (Anchor(_), Anchor(_)) => Err(ClashKind::Anchor),
        (Anchor(_), Empty) | (Empty, Anchor(_)) | (Full, Empty) | (Empty, Full) => {
            Err(ClashKind::Type)
        }
        (Anchor(p), Full) | (Full, Anchor(p)) => Ok(Anchor(p.clone())),
        (Full, Full) => Ok(Full),
        (Empty, Empty) => Ok(Empty),
    }
}

/// Per-name feature of a (possibly merged) node: the full polarity multiset
/// of its origins, the intersected value set and every co-reference tag.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeFeature {
    pub counts: PolarityCounts,
    pub value: ValueSet,
    pub corefs: BTreeSet<CorefTag>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DescNode {
    pub id: NodeId,
    pub features: BTreeMap<String, NodeFeature>,
    pub ntype: NodeType,
    pub origins: BTreeSet<Origin>,
}

impl DescNode {
    /// `A2+A3`-style label built from the origins.
    pub fn label(&self) -> String {
        self.origins
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("+")
    }

    /// Name of the first origin; for an unmerged IPTD node, its own name.
    pub fn name(&self) -> &str {
        self.origins.iter().next().map(|o| o.node.as_str()).unwrap_or("")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgePos {
    Any,
    Leftmost,
    Rightmost,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relation {
    Dom {
        mother: NodeId,
        daughter: NodeId,
        pos: EdgePos,
    },
    /// The mother has exactly these daughters, in no particular order. Kept sorted.
    Arity {
        mother: NodeId,
        daughters: Vec<NodeId>,
    },
    Ldom {
        ancestor: NodeId,
        descendant: NodeId,
        filter: Option<FilteringFeatureStructure>,
    },
    Prec(NodeId, NodeId),
    Lprec(NodeId, NodeId),
}

impl Relation {
    pub fn endpoints(&self) -> Vec<NodeId> {
        match self {
            Relation::Dom {
                mother, daughter, ..
            } => vec![*mother, *daughter],
            Relation::Arity { mother, daughters } => {
                let mut v = vec![*mother];
                v.extend(daughters);
                v
            }
            Relation::Ldom {
                ancestor,
                descendant,
                ..
            } => vec![*ancestor, *descendant],
            Relation::Prec(a, b) | Relation::Lprec(a, b) => vec![*a, *b],
        }
    }

    fn rename(&self, f: &impl Fn(NodeId) -> NodeId) -> Result<Relation, MergeError> {
        Ok(match self {
            Relation::Dom {
                mother,
                daughter,
                pos,
            } => Relation::Dom {
                mother: f(*mother),
                daughter: f(*daughter),
                pos: *pos,
            },
            Relation::Arity { mother, daughters } => {
                let mut ds: Vec<NodeId> = daughters.iter().map(|&d| f(d)).collect();
                ds.sort();
                let before = ds.len();
                ds.dedup();
                if ds.len() != before {
                    return Err(MergeError::new(
                        ClashKind::Struct,
                        "two daughters of an arity constraint were identified",
                    ));
                }
                Relation::Arity {
                    mother: f(*mother),
                    daughters: ds,
                }
            }
            Relation::Ldom {
                ancestor,
                descendant,
                filter,
            } => Relation::Ldom {
                ancestor: f(*ancestor),
                descendant: f(*descendant),
                filter: filter.clone(),
            },
            Relation::Prec(a, b) => Relation::Prec(f(*a), f(*b)),
            Relation::Lprec(a, b) => Relation::Lprec(f(*a), f(*b)),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClashKind {
    Polarity,
    Value,
    Type,
    Order,
    Struct,
    Anchor,
}

impl ClashKind {
    pub fn code(self) -> &'static str {
        match self {
            ClashKind::Polarity => "POLARITY_CLASH",
            ClashKind::Value => "VALUE_CLASH",
            ClashKind::Type => "TYPE_CLASH",
            ClashKind::Order => "ORDER_CLASH",
            ClashKind::Struct => "STRUCT_CLASH",
            ClashKind::Anchor => "ANCHOR_CLASH",
        }
    }
}

impl fmt::Display for ClashKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{kind}: {message}")]
pub struct MergeError {
    pub kind: ClashKind,
    pub message: String,
}

impl MergeError {
    fn new(kind: ClashKind, message: impl Into<String>) -> Self {
        MergeError {
            kind,
            message: message.into(),
        }
    }
}

/// A well-formedness problem found by validation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub message: String,
    pub nodes: Vec<NodeId>,
}

/// Result of a successful merge.
#[derive(Clone, Debug)]
pub struct Merged {
    pub ptd: Ptd,
    /// Number of node identifications, the requested one included.
    pub steps: usize,
    /// Id of the node that now stands for the two merged nodes.
    pub survivor: NodeId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Unsaturated {
    pub node: NodeId,
    pub feature: String,
    pub polarities: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateKind {
    Dual,
    Virtual,
}

/// A pair of nodes whose merge would neutralize `feature`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Candidate {
    pub a: NodeId,
    pub b: NodeId,
    pub feature: String,
    pub kind: CandidateKind,
}

/// Sorted origin sets of all nodes; two PTDs built from the same
/// juxtaposition are equal up to node renaming iff their keys are equal.
pub type PartitionKey = Vec<Vec<Origin>>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Ptd {
    pub nodes: BTreeMap<NodeId, DescNode>,
    pub relations: BTreeSet<Relation>,
    pub next_id: u32,
}

impl Ptd {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(
        &mut self,
        features: &PolarizedFeatureStructure,
        ntype: NodeType,
        origin: Origin,
    ) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        let features = features
            .iter()
            .map(|f| {
                (
                    f.name.clone(),
                    NodeFeature {
                        counts: PolarityCounts::single(f.polarity),
                        value: f.value.clone(),
                        corefs: f.coref.into_iter().collect(),
                    },
                )
            })
            .collect();
        self.nodes.insert(
            id,
            DescNode {
                id,
                features,
                ntype,
                origins: BTreeSet::from([origin]),
            },
        );
        id
    }

    pub fn add_relation(&mut self, r: Relation) {
        self.relations.insert(r);
    }

    pub fn node(&self, id: NodeId) -> &DescNode {
        &self.nodes[&id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn find_origin(&self, origin: &Origin) -> Option<NodeId> {
        self.nodes
            .values()
            .find(|n| n.origins.contains(origin))
            .map(|n| n.id)
    }

    pub fn dom_edges(&self) -> impl Iterator<Item = (NodeId, NodeId, EdgePos)> + '_ {
        self.relations.iter().filter_map(|r| match r {
            Relation::Dom {
                mother,
                daughter,
                pos,
            } => Some((*mother, *daughter, *pos)),
            _ => None,
        })
    }

    pub fn dom_mothers(&self, id: NodeId) -> BTreeSet<NodeId> {
        self.dom_edges()
            .filter(|e| e.1 == id)
            .map(|e| e.0)
            .collect()
    }

    pub fn dom_daughters(&self, id: NodeId) -> BTreeSet<NodeId> {
        self.dom_edges()
            .filter(|e| e.0 == id)
            .map(|e| e.1)
            .collect()
    }

    fn max_tag(&self) -> Option<u32> {
        self.nodes
            .values()
            .flat_map(|n| n.features.values())
            .flat_map(|f| f.corefs.iter().map(|t| t.0))
            .max()
    }

    /// Disjoint union: `other`'s node ids and co-reference tags are shifted
    /// past this PTD's.
    pub fn juxtapose(&self, other: &Ptd) -> Ptd {
        let id_off = self.next_id;
        let tag_off = self.max_tag().map_or(0, |t| t + 1);
        let shift = |id: NodeId| NodeId(id.0 + id_off);
        let mut out = self.clone();
        for n in other.nodes.values() {
            let mut n = n.clone();
            n.id = shift(n.id);
            for f in n.features.values_mut() {
                f.corefs = f.corefs.iter().map(|t| CorefTag(t.0 + tag_off)).collect();
            }
            out.nodes.insert(n.id, n);
        }
        for r in &other.relations {
            let mut r = r.rename(&shift).expect("renaming by an injection");
            if let Relation::Ldom {
                filter: Some(f), ..
            } = &mut r
            {
                f.map_corefs(|t| CorefTag(t.0 + tag_off));
            }
            out.relations.insert(r);
        }
        out.next_id = id_off + other.next_id;
        out
    }

    /// Copy with every origin re-labelled as belonging to `instance`.
    pub fn with_instance(&self, instance: u32) -> Ptd {
        let mut out = self.clone();
        for n in out.nodes.values_mut() {
            n.origins = n
                .origins
                .iter()
                .map(|o| Origin::new(instance, o.node.clone()))
                .collect();
        }
        out
    }

    pub fn partition_key(&self) -> PartitionKey {
        let mut key: PartitionKey = self
            .nodes
            .values()
            .map(|n| n.origins.iter().cloned().collect())
            .collect();
        key.sort();
        key
    }

    /// Checks the PTD invariants: endpoints exist, sisters related by
    /// (large) precedence share an explicit mother, dominance is acyclic.
    pub fn validate(&self) -> Vec<Issue> {
        let mut issues = Vec::new();
        for r in &self.relations {
            let missing: Vec<NodeId> = r
                .endpoints()
                .into_iter()
                .filter(|id| !self.nodes.contains_key(id))
                .collect();
            if !missing.is_empty() {
                issues.push(Issue {
                    message: "relation endpoint does not exist".into(),
                    nodes: missing,
                });
            }
        }
        for n in self.nodes.values() {
            if let NodeType::Anchor(p) = &n.ntype {
                if p.is_empty() {
                    issues.push(Issue {
                        message: "anchor with an empty phonological form".into(),
                        nodes: vec![n.id],
                    });
                }
            }
        }
        for r in &self.relations {
            if let Relation::Prec(a, b) | Relation::Lprec(a, b) = r {
                let shared = self.dom_mothers(*a).intersection(&self.dom_mothers(*b)).count();
                if shared == 0 {
                    issues.push(Issue {
                        message: "precedence between nodes without a common mother".into(),
                        nodes: vec![*a, *b],
                    });
                }
            }
            if let Relation::Arity { mother, daughters } = r {
                let ds = self.dom_daughters(*mother);
                let missing: Vec<NodeId> =
                    daughters.iter().copied().filter(|d| !ds.contains(d)).collect();
                if !missing.is_empty() {
                    issues.push(Issue {
                        message: "arity daughter without a dominance edge".into(),
                        nodes: missing,
                    });
                }
            }
        }
        let dom: Vec<(NodeId, NodeId)> = self.dom_edges().map(|e| (e.0, e.1)).collect();
        for &(m, d) in &dom {
            if m == d || reaches(&dom, d, m) {
                issues.push(Issue {
                    message: "dominance cycle".into(),
                    nodes: vec![m, d],
                });
                break;
            }
        }
        issues
    }

    /// IPTD shape: dominance and large dominance together form a tree.
    pub fn validate_tree_shape(&self) -> Vec<Issue> {
        let mut issues = Vec::new();
        let mut incoming: BTreeMap<NodeId, BTreeSet<(NodeId, bool)>> = BTreeMap::new();
        let mut edges = Vec::new();
        for r in &self.relations {
            match r {
                Relation::Dom {
                    mother, daughter, ..
                } => {
                    incoming.entry(*daughter).or_default().insert((*mother, false));
                    edges.push((*mother, *daughter));
                }
                Relation::Ldom {
                    ancestor,
                    descendant,
                    ..
                } => {
                    incoming.entry(*descendant).or_default().insert((*ancestor, true));
                    edges.push((*ancestor, *descendant));
                }
                _ => {}
            }
        }
        for (d, ins) in &incoming {
            if ins.len() > 1 {
                issues.push(Issue {
                    message: "node with more than one mother or ancestor".into(),
                    nodes: std::iter::once(*d).chain(ins.iter().map(|x| x.0)).collect(),
                });
            }
        }
        let roots: Vec<NodeId> = self
            .nodes
            .keys()
            .copied()
            .filter(|id| !incoming.contains_key(id))
            .collect();
        if roots.len() != 1 {
            issues.push(Issue {
                message: format!("expected exactly one root, found {}", roots.len()),
                nodes: roots.clone(),
            });
        }
        if let Some(&root) = roots.first() {
            let unreachable: Vec<NodeId> = self
                .nodes
                .keys()
                .copied()
                .filter(|&id| !reaches(&edges, root, id))
                .collect();
            if !unreachable.is_empty() {
                issues.push(Issue {
                    message: "description is not connected".into(),
                    nodes: unreachable,
                });
            }
        }
        issues
    }

    /// Identifies nodes `a` and `b` and propagates the consequences to a fixpoint.
    pub fn merge_nodes(&self, a: NodeId, b: NodeId) -> Result<Merged, MergeError> {
        if a == b || !self.nodes.contains_key(&a) || !self.nodes.contains_key(&b) {
            return Err(MergeError::new(
                ClashKind::Struct,
                format!("cannot merge {a} with {b}"),
            ));
        }
        let mut ptd = self.clone();
        let mut forward: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        let mut steps = 1;
        let z = ptd.identify(a, b)?;
        forward.insert(a, z);
        forward.insert(b, z);
        loop {
            ptd.refresh_corefs()?;
            let Some((x, y)) = ptd.forced_pair() else { break };
            let z = ptd.identify(x, y)?;
            forward.insert(x, z);
            forward.insert(y, z);
            steps += 1;
        }
        ptd.drop_satisfied_ldoms();
        ptd.check_consistency()?;
        let mut survivor = a;
        while let Some(&next) = forward.get(&survivor) {
            survivor = next;
        }
        Ok(Merged {
            ptd,
            steps,
            survivor,
        })
    }

    fn identify(&mut self, x: NodeId, y: NodeId) -> Result<NodeId, MergeError> {
        let nx = self.nodes.remove(&x).expect("merged node exists");
        let ny = self.nodes.remove(&y).expect("merged node exists");
        let ntype = node_type_combine(&nx.ntype, &ny.ntype).map_err(|kind| {
            MergeError::new(
                kind,
                format!("node types {} and {} are incompatible", nx.ntype.name(), ny.ntype.name()),
            )
        })?;
        let mut features = nx.features;
        for (name, fy) in ny.features {
            match features.get_mut(&name) {
                None => {
                    features.insert(name, fy);
                }
                Some(fx) => {
                    fx.counts = fx.counts.union(fy.counts);
                    if fx.counts.is_overloaded() {
                        return Err(MergeError::new(
                            ClashKind::Polarity,
                            format!("feature `{name}` would carry polarities {}", fx.counts),
                        ));
                    }
                    fx.value = fx.value.intersect(&fy.value).ok_or_else(|| {
                        MergeError::new(
                            ClashKind::Value,
                            format!("feature `{name}`: {} and {} are disjoint", fx.value, fy.value),
                        )
                    })?;
                    fx.corefs.extend(fy.corefs);
                }
            }
        }
        let mut origins = nx.origins;
        origins.extend(ny.origins);
        let z = NodeId(self.next_id);
        self.next_id += 1;
        self.nodes.insert(
            z,
            DescNode {
                id: z,
                features,
                ntype,
                origins,
            },
        );
        let rename = |id: NodeId| if id == x || id == y { z } else { id };
        let relations = std::mem::take(&mut self.relations);
        for r in &relations {
            self.relations.insert(r.rename(&rename)?);
        }
        Ok(z)
    }

    /// Makes all features linked by co-reference (same name, shared tag)
    /// carry the intersection of their value sets.
    fn refresh_corefs(&mut self) -> Result<(), MergeError> {
        let mut parent: BTreeMap<(String, CorefTag), (String, CorefTag)> = BTreeMap::new();
        fn find(
            p: &mut BTreeMap<(String, CorefTag), (String, CorefTag)>,
            k: &(String, CorefTag),
        ) -> (String, CorefTag) {
            let mut cur = k.clone();
            while let Some(next) = p.get(&cur) {
                if *next == cur {
                    break;
                }
                cur = next.clone();
            }
            cur
        }
        let mut any = false;
        for n in self.nodes.values() {
            for (name, f) in &n.features {
                let mut tags = f.corefs.iter();
                let Some(first) = tags.next() else { continue };
                any = true;
                let k0 = (name.clone(), *first);
                parent.entry(k0.clone()).or_insert_with(|| k0.clone());
                for t in tags {
                    let k = (name.clone(), *t);
                    parent.entry(k.clone()).or_insert_with(|| k.clone());
                    let (r0, r1) = (find(&mut parent, &k0), find(&mut parent, &k));
                    if r0 != r1 {
                        parent.insert(r1, r0);
                    }
                }
            }
        }
        if !any {
            return Ok(());
        }
        let mut group_value: BTreeMap<(String, CorefTag), ValueSet> = BTreeMap::new();
        for n in self.nodes.values() {
            for (name, f) in &n.features {
                let Some(first) = f.corefs.iter().next() else { continue };
                let root = find(&mut parent, &(name.clone(), *first));
                let v = match group_value.get(&root) {
                    None => f.value.clone(),
                    Some(v) => v.intersect(&f.value).ok_or_else(|| {
                        MergeError::new(
                            ClashKind::Value,
                            format!("co-referent values of `{name}` are disjoint"),
                        )
                    })?,
                };
                group_value.insert(root, v);
            }
        }
        for n in self.nodes.values_mut() {
            for (name, f) in n.features.iter_mut() {
                let Some(first) = f.corefs.iter().next() else { continue };
                let root = find(&mut parent, &(name.clone(), *first));
                f.value = group_value[&root].clone();
            }
        }
        Ok(())
    }

    /// A pair of distinct nodes that every model maps to the same tree node.
    fn forced_pair(&self) -> Option<(NodeId, NodeId)> {
        let mut mothers: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        let mut leftmost: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        let mut rightmost: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        let mut prec_left: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        let mut prec_right: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        fn clash(map: &mut BTreeMap<NodeId, NodeId>, k: NodeId, v: NodeId) -> Option<(NodeId, NodeId)> {
            match map.insert(k, v) {
                Some(old) if old != v => Some((old, v)),
                _ => None,
            }
        }
        for r in &self.relations {
            let found = match r {
                Relation::Dom {
                    mother,
                    daughter,
                    pos,
                } => clash(&mut mothers, *daughter, *mother).or_else(|| match pos {
                    EdgePos::Leftmost => clash(&mut leftmost, *mother, *daughter),
                    EdgePos::Rightmost => clash(&mut rightmost, *mother, *daughter),
                    EdgePos::Any => None,
                }),
                Relation::Prec(x, y) => {
                    clash(&mut prec_left, *y, *x).or_else(|| clash(&mut prec_right, *x, *y))
                }
                _ => None,
            };
            if found.is_some() {
                return found;
            }
        }
        None
    }

    fn drop_satisfied_ldoms(&mut self) {
        let dom: Vec<(NodeId, NodeId)> = self.dom_edges().map(|e| (e.0, e.1)).collect();
        self.relations.retain(|r| match r {
            Relation::Ldom {
                ancestor,
                descendant,
                filter: None,
            } => !(ancestor == descendant || reaches(&dom, *ancestor, *descendant)),
            _ => true,
        });
    }

    fn check_consistency(&self) -> Result<(), MergeError> {
        let mut dom = Vec::new();
        let mut dom_ldom = Vec::new();
        let mut order = Vec::new();
        let mut leftmost = BTreeSet::new();
        let mut rightmost = BTreeSet::new();
        for r in &self.relations {
            match r {
                Relation::Dom {
                    mother,
                    daughter,
                    pos,
                } => {
                    if mother == daughter {
                        return Err(MergeError::new(ClashKind::Struct, "node dominates itself"));
                    }
                    if matches!(self.nodes[mother].ntype, NodeType::Anchor(_)) {
                        return Err(MergeError::new(
                            ClashKind::Struct,
                            format!("anchor {} would have a daughter", self.nodes[mother].label()),
                        ));
                    }
                    dom.push((*mother, *daughter));
                    dom_ldom.push((*mother, *daughter));
                    match pos {
                        EdgePos::Leftmost => {
                            leftmost.insert(*daughter);
                        }
                        EdgePos::Rightmost => {
                            rightmost.insert(*daughter);
                        }
                        EdgePos::Any => {}
                    }
                }
                Relation::Ldom {
                    ancestor,
                    descendant,
                    ..
                } => {
                    if ancestor != descendant {
                        dom_ldom.push((*ancestor, *descendant));
                    }
                }
                Relation::Prec(x, y) | Relation::Lprec(x, y) => {
                    if x == y {
                        return Err(MergeError::new(ClashKind::Order, "node precedes itself"));
                    }
                    order.push((*x, *y));
                }
                Relation::Arity { .. } => {}
            }
        }
        let ids: Vec<NodeId> = self.nodes.keys().copied().collect();
        let below = Closure::new(&ids, &dom_ldom);
        for &(m, d) in &dom {
            if below.reaches(d, m) {
                return Err(MergeError::new(ClashKind::Struct, "dominance cycle"));
            }
        }
        let before = Closure::new(&ids, &order);
        for &(x, y) in &order {
            if before.reaches(y, x) {
                return Err(MergeError::new(ClashKind::Order, "precedence cycle"));
            }
            if leftmost.contains(&y) || rightmost.contains(&x) {
                return Err(MergeError::new(
                    ClashKind::Order,
                    "a sister is required before a leftmost or after a rightmost daughter",
                ));
            }
        }
        for n in self.nodes.values() {
            if n.ntype != NodeType::Empty {
                continue;
            }
            for d in self.nodes.values() {
                if d.id != n.id
                    && matches!(d.ntype, NodeType::Anchor(_) | NodeType::Full)
                    && below.reaches(n.id, d.id)
                {
                    return Err(MergeError::new(
                        ClashKind::Type,
                        format!("empty node {} dominates non-empty {}", n.label(), d.label()),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Every (node, feature) whose polarity multiset is not globally saturated.
    pub fn saturation_status(&self) -> Vec<Unsaturated> {
        let mut out = Vec::new();
        for n in self.nodes.values() {
            for (name, f) in &n.features {
                if !f.counts.is_saturated() {
                    out.push(Unsaturated {
                        node: n.id,
                        feature: name.clone(),
                        polarities: f.counts.to_string(),
                    });
                }
            }
        }
        out
    }

    pub fn is_saturated(&self) -> bool {
        self.nodes
            .values()
            .all(|n| n.features.values().all(|f| f.counts.is_saturated()))
    }

    /// Number of positive and negative polarities still waiting for a dual.
    pub fn active_count(&self) -> u32 {
        self.nodes
            .values()
            .flat_map(|n| n.features.values())
            .map(|f| f.counts.open_active())
            .sum()
    }

    /// Pairs of nodes carrying dual active polarities for some feature,
    /// ordered by feature name then node ids.
    pub fn dual_pairs(&self) -> Vec<Candidate> {
        let mut out = Vec::new();
        let mut by_name: BTreeMap<&str, (Vec<NodeId>, Vec<NodeId>)> = BTreeMap::new();
        for n in self.nodes.values() {
            for (name, f) in &n.features {
                let c = f.counts;
                let entry = by_name.entry(name).or_default();
                if c.positive == 1 && c.negative == 0 {
                    entry.0.push(n.id);
                } else if c.negative == 1 && c.positive == 0 {
                    entry.1.push(n.id);
                }
            }
        }
        for (name, (pos, neg)) in by_name {
            for &p in &pos {
                for &q in &neg {
                    out.push(Candidate {
                        a: p.min(q),
                        b: p.max(q),
                        feature: name.to_string(),
                        kind: CandidateKind::Dual,
                    });
                }
            }
        }
        out.sort();
        out
    }

    /// Pairs attaching a virtual-only feature to a node carrying the same
    /// feature with a non-virtual polarity.
    pub fn virtual_pairs(&self) -> Vec<Candidate> {
        let mut out = Vec::new();
        for n in self.nodes.values() {
            for (name, f) in &n.features {
                if !f.counts.only_virtual() {
                    continue;
                }
                for m in self.nodes.values() {
                    if m.id == n.id {
                        continue;
                    }
                    if m.features.get(name).is_some_and(|g| g.counts.has_non_virtual()) {
                        out.push(Candidate {
                            a: n.id.min(m.id),
                            b: n.id.max(m.id),
                            feature: name.clone(),
                            kind: CandidateKind::Virtual,
                        });
                    }
                }
            }
        }
        out.sort();
        out
    }

    /// Dual and virtual pairs, one entry per unordered node pair; a pair that
    /// is dual for some feature is listed as dual.
    pub fn candidate_pairs(&self) -> Vec<Candidate> {
        let mut all = self.dual_pairs();
        all.extend(self.virtual_pairs());
        all.sort_by(|x, y| (x.a, x.b, x.kind, &x.feature).cmp(&(y.a, y.b, y.kind, &y.feature)));
        all.dedup_by_key(|c| (c.a, c.b));
        all.sort_by(|x, y| (&x.feature, x.a, x.b).cmp(&(&y.feature, y.a, y.b)));
        all
    }

    /// Nodes that could saturate feature `name` of node `id`.
    pub fn partners(&self, id: NodeId, name: &str) -> Vec<NodeId> {
        let Some(f) = self.nodes[&id].features.get(name) else {
            return Vec::new();
        };
        let c = f.counts;
        self.nodes
            .values()
            .filter(|m| m.id != id)
            .filter(|m| {
                let Some(g) = m.features.get(name) else { return false };
                let d = g.counts;
                if c.positive == 1 && c.negative == 0 {
                    d.negative == 1 && d.positive == 0
                } else if c.negative == 1 && c.positive == 0 {
                    d.positive == 1 && d.negative == 0
                } else if c.only_virtual() {
                    d.has_non_virtual()
                } else {
                    false
                }
            })
            .map(|m| m.id)
            .collect()
    }

    /// The unsaturated feature with the fewest partners, with those partners.
    pub fn tightest_obligation(&self) -> Option<(NodeId, String, Vec<NodeId>)> {
        let mut best: Option<(NodeId, String, Vec<NodeId>)> = None;
        for n in self.nodes.values() {
            for (name, f) in &n.features {
                if f.counts.is_saturated() {
                    continue;
                }
                let ps = self.partners(n.id, name);
                if best.as_ref().is_none_or(|b| ps.len() < b.2.len()) {
                    let done = ps.is_empty();
                    best = Some((n.id, name.clone(), ps));
                    if done {
                        return best;
                    }
                }
            }
        }
        best
    }

    pub fn to_graph(&self) -> GraphExport {
        let nodes = self
            .nodes
            .values()
            .map(|n| GraphNode {
                id: n.id.0,
                label: n.label(),
                origins: n.origins.iter().map(ToString::to_string).collect(),
                instances: n
                    .origins
                    .iter()
                    .map(|o| o.instance)
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect(),
                node_type: n.ntype.name().to_string(),
                phon: n.ntype.phon().map(str::to_string),
                features: n
                    .features
                    .iter()
                    .map(|(name, f)| GraphFeature {
                        name: name.clone(),
                        polarities: f.counts.to_string(),
                        value: f.value.to_string(),
                        corefs: f.corefs.iter().map(|t| t.0).collect(),
                        saturated: f.counts.is_saturated(),
                    })
                    .collect(),
            })
            .collect();
        let edges = self
            .relations
            .iter()
            .map(|r| match r {
                Relation::Dom {
                    mother,
                    daughter,
                    pos,
                } => GraphEdge::new("dom", *mother, vec![*daughter])
                    .position((*pos != EdgePos::Any).then_some(*pos)),
                Relation::Arity { mother, daughters } => {
                    GraphEdge::new("arity", *mother, daughters.clone())
                }
                Relation::Ldom {
                    ancestor,
                    descendant,
                    filter,
                } => GraphEdge {
                    filter: filter.as_ref().map(ToString::to_string),
                    ..GraphEdge::new("ldom", *ancestor, vec![*descendant])
                },
                Relation::Prec(a, b) => GraphEdge::new("prec", *a, vec![*b]),
                Relation::Lprec(a, b) => GraphEdge::new("lprec", *a, vec![*b]),
            })
            .collect();
        GraphExport {
            nodes,
            edges,
            unsaturated: self.saturation_status(),
        }
    }
}

/// Reflexive-transitive reachability over a fixed node set, computed once.
pub(crate) struct Closure {
    index: BTreeMap<NodeId, usize>,
    rows: Vec<Vec<bool>>,
}

impl Closure {
    pub(crate) fn new(ids: &[NodeId], edges: &[(NodeId, NodeId)]) -> Self {
        let index: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let n = ids.len();
        let mut adj = vec![Vec::new(); n];
        for (a, b) in edges {
            if let (Some(&i), Some(&j)) = (index.get(a), index.get(b)) {
                adj[i].push(j);
            }
        }
        let mut rows = vec![vec![false; n]; n];
        let mut stack = Vec::new();
        for (s, row) in rows.iter_mut().enumerate() {
            row[s] = true;
            stack.push(s);
            while let Some(x) = stack.pop() {
                for &y in &adj[x] {
                    if !row[y] {
                        row[y] = true;
                        stack.push(y);
                    }
                }
            }
        }
        Closure { index, rows }
    }

    pub(crate) fn reaches(&self, from: NodeId, to: NodeId) -> bool {
        match (self.index.get(&from), self.index.get(&to)) {
            (Some(&i), Some(&j)) => self.rows[i][j],
            _ => from == to,
        }
    }
}

/// True iff `to` is reachable from `from` (reflexively) along `edges`.
pub(crate) fn reaches(edges: &[(NodeId, NodeId)], from: NodeId, to: NodeId) -> bool {
    let mut seen = BTreeSet::from([from]);
    let mut stack = vec![from];
    while let Some(x) = stack.pop() {
        if x == to {
            return true;
        }
        for &(a, b) in edges {
            if a == x && seen.insert(b) {
                stack.push(b);
            }
        }
    }
    false
}

/// Graph form of a PTD for the debugging service and `--format graph`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GraphExport {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    pub unsaturated: Vec<Unsaturated>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GraphNode {
    pub id: u32,
    pub label: String,
    pub origins: Vec<String>,
    pub instances: Vec<u32>,
    #[serde(rename = "type")]
    pub node_type: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phon: Option<String>,
    pub features: Vec<GraphFeature>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GraphFeature {
    pub name: String,
    pub polarities: String,
    pub value: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub corefs: Vec<u32>,
    pub saturated: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GraphEdge {
    pub kind: &'static str,
    pub from: u32,
    pub to: Vec<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position: Option<EdgePos>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter: Option<String>,
}

impl GraphEdge {
    fn new(kind: &'static str, from: NodeId, to: Vec<NodeId>) -> Self {
        GraphEdge {
            kind,
            from: from.0,
            to: to.into_iter().map(|n| n.0).collect(),
            position: None,
            filter: None,
        }
    }

    fn position(mut self, pos: Option<EdgePos>) -> Self {
        self.position = pos;
        self
    }
}

/// An initial PTD: a template, or a template anchored on a word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Iptd {
    pub template: String,
    pub interface: FilteringFeatureStructure,
    pub ptd: Ptd,
    /// The anchor node (the slot, for an unanchored template).
    pub anchor: Option<NodeId>,
}

impl Iptd {
    pub fn validate(&self) -> Vec<Issue> {
        let mut issues = self.ptd.validate();
        if issues.is_empty() {
            issues.extend(self.ptd.validate_tree_shape());
        }
        issues
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.ptd
            .nodes
            .values()
            .find(|n| n.name() == name)
            .map(|n| n.id)
    }

    /// Phonological form of the anchor, once anchored.
    pub fn phon(&self) -> Option<&str> {
        self.anchor.and_then(|a| self.ptd.node(a).ntype.phon())
    }
}
