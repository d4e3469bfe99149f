//! Ordered syntactic trees: the models of tree descriptions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::ValueSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TreeNodeId(pub usize);

/// A tree node. Feature values are value sets: a singleton is an ordinary
/// atomic value, a wider set stands for "any one of these".
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeNode {
    pub name: String,
    pub features: BTreeMap<String, ValueSet>,
    pub children: Vec<TreeNodeId>,
    pub parent: Option<TreeNodeId>,
    /// Present iff the node is a leaf; the empty string is ε.
    pub phon: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntacticTree {
    nodes: Vec<TreeNode>,
}

/// Serialized tree: `{"name": .., "features": {..}, "children": [..]}` with
/// `"phon"` on leaves.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeDoc {
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub features: BTreeMap<String, ValueSet>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TreeDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phon: Option<String>,
}

impl SyntacticTree {
    /// A tree made of a single leaf.
    pub fn leaf(name: &str, features: BTreeMap<String, ValueSet>, phon: &str) -> Self {
        SyntacticTree {
            nodes: vec![TreeNode {
                name: name.to_string(),
                features,
                children: Vec::new(),
                parent: None,
                phon: Some(phon.to_string()),
            }],
        }
    }

    pub fn from_doc(doc: &TreeDoc) -> Result<Self> {
        let mut tree = SyntacticTree { nodes: Vec::new() };
        tree.push_doc(doc, None)?;
        let mut seen = BTreeSet::new();
        for n in &tree.nodes {
            if !seen.insert(n.name.as_str()) {
                return Err(Error::Tree(format!("duplicate node name `{}`", n.name)));
            }
        }
        Ok(tree)
    }

    fn push_doc(&mut self, doc: &TreeDoc, parent: Option<TreeNodeId>) -> Result<TreeNodeId> {
        let is_leaf = doc.children.is_empty();
        if is_leaf != doc.phon.is_some() {
            return Err(Error::Tree(format!(
                "node `{}`: phon must be present exactly on leaves",
                doc.name
            )));
        }
        let id = TreeNodeId(self.nodes.len());
        self.nodes.push(TreeNode {
            name: doc.name.clone(),
            features: doc.features.clone(),
            children: Vec::new(),
            parent,
            phon: doc.phon.clone(),
        });
        for child in &doc.children {
            let c = self.push_doc(child, Some(id))?;
            self.nodes[id.0].children.push(c);
        }
        Ok(id)
    }

    pub fn to_doc(&self) -> TreeDoc {
        self.doc_at(self.root())
    }

    fn doc_at(&self, id: TreeNodeId) -> TreeDoc {
        let n = self.node(id);
        TreeDoc {
            name: n.name.clone(),
            features: n.features.clone(),
            children: n.children.iter().map(|&c| self.doc_at(c)).collect(),
            phon: n.phon.clone(),
        }
    }

    pub fn root(&self) -> TreeNodeId {
        TreeNodeId(0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: TreeNodeId) -> &TreeNode {
        &self.nodes[id.0]
    }

    pub fn get(&self, id: TreeNodeId) -> Option<&TreeNode> {
        self.nodes.get(id.0)
    }

    pub fn ids(&self) -> impl Iterator<Item = TreeNodeId> {
        (0..self.nodes.len()).map(TreeNodeId)
    }

    pub fn by_name(&self, name: &str) -> Option<TreeNodeId> {
        self.nodes.iter().position(|n| n.name == name).map(TreeNodeId)
    }

    pub fn is_leaf(&self, id: TreeNodeId) -> bool {
        self.node(id).children.is_empty()
    }

    /// Strict immediate dominance: `m` is the mother of `d`.
    pub fn is_parent(&self, m: TreeNodeId, d: TreeNodeId) -> bool {
        self.node(d).parent == Some(m)
    }

    /// Reflexive-transitive dominance.
    pub fn dominates(&self, m: TreeNodeId, d: TreeNodeId) -> bool {
        let mut cur = Some(d);
        while let Some(c) = cur {
            if c == m {
                return true;
            }
            cur = self.node(c).parent;
        }
        false
    }

    /// Position of `id` among its siblings.
    pub fn sibling_index(&self, id: TreeNodeId) -> Option<usize> {
        let p = self.node(id).parent?;
        self.node(p).children.iter().position(|&c| c == id)
    }

    /// Left-to-right list of non-empty leaf forms under `id`.
    pub fn phonological_projection(&self, id: TreeNodeId) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_pp(id, &mut out);
        out
    }

    fn collect_pp<'a>(&'a self, id: TreeNodeId, out: &mut Vec<&'a str>) {
        let n = self.node(id);
        match &n.phon {
            Some(p) if !p.is_empty() => out.push(p),
            Some(_) => {}
            None => {
                for &c in &n.children {
                    self.collect_pp(c, out);
                }
            }
        }
    }

    /// Nodes from `m` down to `d`, both included.
    pub fn path(&self, m: TreeNodeId, d: TreeNodeId) -> Result<Vec<TreeNodeId>> {
        let mut out = Vec::new();
        let mut cur = Some(d);
        while let Some(c) = cur {
            out.push(c);
            if c == m {
                out.reverse();
                return Ok(out);
            }
            cur = self.node(c).parent;
        }
        Err(Error::NotAncestor {
            ancestor: self.node(m).name.clone(),
            descendant: self.node(d).name.clone(),
        })
    }

    pub fn preorder(&self) -> Vec<TreeNodeId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root()];
        while let Some(id) = stack.pop() {
            out.push(id);
            stack.extend(self.node(id).children.iter().rev());
        }
        out
    }

    /// One-line bracketed form, e.g. `(n0[cat=s] (n1[cat=np] "Jean") ...)`.
    pub fn bracketed(&self) -> String {
        let mut s = String::new();
        self.write_bracketed(self.root(), true, &|_| None, &mut s);
        s
    }

    /// Bracketed form without node names, for comparisons up to renaming.
    pub fn bracketed_anonymous(&self) -> String {
        let mut s = String::new();
        self.write_bracketed(self.root(), false, &|_| None, &mut s);
        s
    }

    /// Bracketed form where each node is labelled by `label` instead of its name.
    pub fn bracketed_with(&self, label: &dyn Fn(TreeNodeId) -> Option<String>) -> String {
        let mut s = String::new();
        self.write_bracketed(self.root(), false, label, &mut s);
        s
    }

    fn write_bracketed(
        &self,
        id: TreeNodeId,
        names: bool,
        label: &dyn Fn(TreeNodeId) -> Option<String>,
        out: &mut String,
    ) {
        let n = self.node(id);
        out.push('(');
        if names {
            out.push_str(&n.name);
        }
        if let Some(l) = label(id) {
            out.push_str(&l);
        }
        out.push('[');
        let feats: Vec<String> = n.features.iter().map(|(k, v)| format!("{k}={v}")).collect();
        out.push_str(&feats.join(","));
        out.push(']');
        if let Some(p) = &n.phon {
            let _ = write!(out, " {p:?}");
        }
        for &c in &n.children {
            out.push(' ');
            self.write_bracketed(c, names, label, out);
        }
        out.push(')');
    }
}
