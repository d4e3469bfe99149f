//! From a saturated description to ordered trees.
//!
//! Every description node becomes its own tree node and every dominance
//! edge a tree edge, so the only freedom left is the order of sisters and
//! the narrowing of feature values by large-dominance filters. Anchors are
//! tied to sentence positions, which fixes the relative order of every
//! sister with a non-empty yield; only empty sisters move around.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::feature::{CorefTag, ValueSet};
use crate::model::{check_model, Interpretation};
use crate::ptd::{EdgePos, Iptd, NodeId, NodeType, Ptd, Relation};
use crate::tree::{SyntacticTree, TreeDoc, TreeNodeId};

/// Upper bound on the sister-order combinations examined for one description.
const ORDER_LIMIT: usize = 20_000;

#[derive(Clone, Debug)]
pub struct Extracted {
    pub tree: SyntacticTree,
    pub interpretation: Interpretation,
    /// Canonical key: template ids of the selection plus the tree labelled
    /// with description origins. Equal keys mean equal models.
    pub key: String,
    /// Ordered trees in this model's equivalence class, which differ only
    /// in the order of adjacent empty sisters.
    pub variants: usize,
}

struct Shape<'a> {
    ptd: &'a Ptd,
    root: NodeId,
    mother: BTreeMap<NodeId, NodeId>,
    children: BTreeMap<NodeId, Vec<NodeId>>,
    values: BTreeMap<NodeId, BTreeMap<String, ValueSet>>,
    /// Sentence positions of the anchors below each node.
    span: BTreeMap<NodeId, BTreeSet<usize>>,
    words: BTreeMap<NodeId, String>,
}

fn fail<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::NoLinearization(msg.into()))
}

/// All canonical models of a saturated description built from `selection`,
/// whose i-th IPTD is instance i+1. `Error::NoLinearization` when the
/// description has no ordered tree as a model.
pub fn extract_models(ptd: &Ptd, selection: &[Iptd]) -> Result<Vec<Extracted>> {
    if !ptd.is_saturated() {
        return Err(Error::NotSaturated);
    }
    let mut shape = tree_shape(ptd)?;
    check_arity(&shape)?;
    place_anchors(&mut shape, selection)?;
    discharge_ldoms(&mut shape)?;
    check_node_types(&shape)?;
    let orders = sister_orders(&shape)?;

    let mothers: Vec<NodeId> = orders.keys().copied().collect();
    let total = orders.values().try_fold(1usize, |acc, o| acc.checked_mul(o.len()));
    if total.is_none_or(|t| t > ORDER_LIMIT) {
        return fail("too many sister orders to enumerate");
    }
    let templates: Vec<String> = selection
        .iter()
        .map(|d| format!("{}:{}", d.phon().unwrap_or("?"), d.template))
        .collect();
    let mut classes: BTreeMap<String, Extracted> = BTreeMap::new();
    let mut choice = vec![0usize; mothers.len()];
    loop {
        let chosen: BTreeMap<NodeId, &Vec<NodeId>> = mothers
            .iter()
            .zip(&choice)
            .map(|(m, &c)| (*m, &orders[m][c]))
            .collect();
        let class = class_key(&shape, &chosen, shape.root);
        let mut model = build(&shape, &chosen, selection, &templates)?;
        match classes.get_mut(&class) {
            Some(rep) if rep.key <= model.key => rep.variants += 1,
            Some(rep) => {
                model.variants = rep.variants + 1;
                *rep = model;
            }
            None => {
                classes.insert(class, model);
            }
        }
        // next combination
        let mut i = 0;
        loop {
            if i == choice.len() {
                let mut out: Vec<Extracted> = classes.into_values().collect();
                out.sort_by(|a, b| a.key.cmp(&b.key));
                return Ok(out);
            }
            choice[i] += 1;
            if choice[i] < orders[&mothers[i]].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

fn tree_shape(ptd: &Ptd) -> Result<Shape<'_>> {
    let mut mother = BTreeMap::new();
    let mut children: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for (m, d, _) in ptd.dom_edges() {
        if mother.insert(d, m).is_some_and(|old| old != m) {
            return fail(format!("{} has two mothers", ptd.node(d).label()));
        }
        children.entry(m).or_default().push(d);
    }
    let roots: Vec<NodeId> = ptd
        .nodes
        .keys()
        .copied()
        .filter(|id| !mother.contains_key(id))
        .collect();
    let [root] = roots[..] else {
        return fail(format!("{} roots", roots.len()));
    };
    let mut seen = BTreeSet::from([root]);
    let mut stack = vec![root];
    while let Some(x) = stack.pop() {
        for &c in children.get(&x).into_iter().flatten() {
            if seen.insert(c) {
                stack.push(c);
            }
        }
    }
    if seen.len() != ptd.len() {
        return fail("dominance edges do not connect the description");
    }
    let values = ptd
        .nodes
        .values()
        .map(|n| {
            let fs = n
                .features
                .iter()
                .map(|(k, f)| (k.clone(), f.value.clone()))
                .collect();
            (n.id, fs)
        })
        .collect();
    Ok(Shape {
        ptd,
        root,
        mother,
        children,
        values,
        span: BTreeMap::new(),
        words: BTreeMap::new(),
    })
}

fn check_arity(s: &Shape) -> Result<()> {
    for r in &s.ptd.relations {
        if let Relation::Arity { mother, daughters } = r {
            let have: BTreeSet<NodeId> = s.children.get(mother).into_iter().flatten().copied().collect();
            let want: BTreeSet<NodeId> = daughters.iter().copied().collect();
            if have != want || want.len() != daughters.len() {
                return fail(format!("{} has daughters beyond its arity", s.ptd.node(*mother).label()));
            }
        }
    }
    Ok(())
}

fn place_anchors(s: &mut Shape, selection: &[Iptd]) -> Result<()> {
    for (k, d) in selection.iter().enumerate() {
        let Some(a) = d.anchor else { continue };
        let origin = crate::ptd::Origin::new(k as u32 + 1, d.ptd.node(a).name());
        let Some(id) = s.ptd.find_origin(&origin) else {
            return Err(Error::Internal(format!("anchor {origin} missing from description")));
        };
        let NodeType::Anchor(word) = &s.ptd.node(id).ntype else {
            return Err(Error::Internal(format!("node {origin} lost its anchor type")));
        };
        if s.children.contains_key(&id) {
            return fail(format!("anchor {} has daughters", s.ptd.node(id).label()));
        }
        s.words.insert(id, word.clone());
        let mut cur = Some(id);
        while let Some(x) = cur {
            s.span.entry(x).or_default().insert(k);
            cur = s.mother.get(&x).copied();
        }
    }
    for (id, span) in &s.span {
        let (lo, hi) = (span.first().unwrap(), span.last().unwrap());
        if hi - lo + 1 != span.len() {
            return fail(format!("yield of {} is not contiguous", s.ptd.node(*id).label()));
        }
    }
    Ok(())
}

fn ancestors_to(s: &Shape, top: NodeId, bottom: NodeId) -> Option<Vec<NodeId>> {
    let mut path = vec![bottom];
    let mut cur = bottom;
    while cur != top {
        cur = *s.mother.get(&cur)?;
        path.push(cur);
    }
    Some(path)
}

fn discharge_ldoms(s: &mut Shape) -> Result<()> {
    let mut touched = false;
    for r in &s.ptd.relations {
        let Relation::Ldom {
            ancestor,
            descendant,
            filter,
        } = r
        else {
            continue;
        };
        let Some(path) = ancestors_to(s, *ancestor, *descendant) else {
            return fail(format!(
                "{} does not dominate {}",
                s.ptd.node(*ancestor).label(),
                s.ptd.node(*descendant).label()
            ));
        };
        let Some(filter) = filter else { continue };
        for x in path {
            let fs = s.values.get_mut(&x).expect("every node has values");
            for (name, allowed) in filter.iter() {
                if let Some(v) = fs.get_mut(name) {
                    let Some(narrow) = v.intersect(allowed) else {
                        return fail(format!(
                            "{} has {name}={v}, outside the path filter {filter}",
                            s.ptd.node(x).label()
                        ));
                    };
                    touched |= narrow != *v;
                    *v = narrow;
                }
            }
        }
    }
    if touched {
        propagate_corefs(s)?;
    }
    Ok(())
}

/// Re-equalizes co-referent values after filter narrowing.
fn propagate_corefs(s: &mut Shape) -> Result<()> {
    let mut tags_of: Vec<(NodeId, String, BTreeSet<CorefTag>)> = Vec::new();
    for n in s.ptd.nodes.values() {
        for (name, f) in &n.features {
            if !f.corefs.is_empty() {
                tags_of.push((n.id, name.clone(), f.corefs.clone()));
            }
        }
    }
    // Groups: features linked by a shared (name, tag), closed transitively.
    let mut group: Vec<usize> = (0..tags_of.len()).collect();
    fn root(g: &mut [usize], mut i: usize) -> usize {
        while g[i] != i {
            i = g[i];
        }
        i
    }
    for i in 0..tags_of.len() {
        for j in i + 1..tags_of.len() {
            if tags_of[i].1 == tags_of[j].1 && !tags_of[i].2.is_disjoint(&tags_of[j].2) {
                let (a, b) = (root(&mut group, i), root(&mut group, j));
                group[b] = a;
            }
        }
    }
    let mut value: BTreeMap<usize, ValueSet> = BTreeMap::new();
    for i in 0..tags_of.len() {
        let r = root(&mut group, i);
        let v = &s.values[&tags_of[i].0][&tags_of[i].1];
        let merged = match value.get(&r) {
            None => Some(v.clone()),
            Some(w) => w.intersect(v),
        };
        let Some(merged) = merged else {
            return fail(format!("co-referent values of `{}` became disjoint", tags_of[i].1));
        };
        value.insert(r, merged);
    }
    for i in 0..tags_of.len() {
        let r = root(&mut group, i);
        let (id, name, _) = &tags_of[i];
        s.values.get_mut(id).unwrap().insert(name.clone(), value[&r].clone());
    }
    Ok(())
}

fn check_node_types(s: &Shape) -> Result<()> {
    for n in s.ptd.nodes.values() {
        let nonempty = s.span.contains_key(&n.id);
        let leaf = !s.children.contains_key(&n.id);
        match n.ntype {
            NodeType::Empty if nonempty => return fail(format!("empty node {} has a yield", n.label())),
            NodeType::Full if !nonempty => return fail(format!("full node {} has no yield", n.label())),
            NodeType::Anchor(_) if !leaf => return fail(format!("anchor {} is not a leaf", n.label())),
            _ => {}
        }
    }
    Ok(())
}

struct SisterRules {
    prec: Vec<(NodeId, NodeId)>,
    lprec: Vec<(NodeId, NodeId)>,
    first: BTreeSet<NodeId>,
    last: BTreeSet<NodeId>,
}

fn sister_orders(s: &Shape) -> Result<BTreeMap<NodeId, Vec<Vec<NodeId>>>> {
    let mut rules: BTreeMap<NodeId, SisterRules> = s
        .children
        .keys()
        .map(|&m| {
            (
                m,
                SisterRules {
                    prec: Vec::new(),
                    lprec: Vec::new(),
                    first: BTreeSet::new(),
                    last: BTreeSet::new(),
                },
            )
        })
        .collect();
    for r in &s.ptd.relations {
        match r {
            Relation::Prec(a, b) | Relation::Lprec(a, b) => {
                let (ma, mb) = (s.mother.get(a), s.mother.get(b));
                let (Some(ma), Some(mb)) = (ma, mb) else {
                    return fail("precedence between nodes without mothers");
                };
                if ma != mb {
                    return fail(format!(
                        "{} and {} must be sisters",
                        s.ptd.node(*a).label(),
                        s.ptd.node(*b).label()
                    ));
                }
                let rule = rules.get_mut(ma).unwrap();
                if matches!(r, Relation::Prec(..)) {
                    rule.prec.push((*a, *b));
                } else {
                    rule.lprec.push((*a, *b));
                }
            }
            Relation::Dom {
                mother,
                daughter,
                pos: EdgePos::Leftmost,
            } => {
                rules.get_mut(mother).unwrap().first.insert(*daughter);
            }
            Relation::Dom {
                mother,
                daughter,
                pos: EdgePos::Rightmost,
            } => {
                rules.get_mut(mother).unwrap().last.insert(*daughter);
            }
            _ => {}
        }
    }
    let mut out = BTreeMap::new();
    for (&m, kids) in &s.children {
        let rule = &rules[&m];
        let mut fixed: Vec<NodeId> = kids.iter().copied().filter(|k| s.span.contains_key(k)).collect();
        fixed.sort_by_key(|k| s.span[k].first().copied());
        let mut empties: Vec<NodeId> = kids.iter().copied().filter(|k| !s.span.contains_key(k)).collect();
        empties.sort();
        let mut found = Vec::new();
        let mut cur = Vec::new();
        let mut used = vec![false; empties.len()];
        orders_rec(rule, &fixed, 0, &empties, &mut used, kids.len(), &mut cur, &mut found);
        if found.is_empty() {
            return fail(format!("no order of the daughters of {}", s.ptd.node(m).label()));
        }
        out.insert(m, found);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn orders_rec(
    rule: &SisterRules,
    fixed: &[NodeId],
    next_fixed: usize,
    empties: &[NodeId],
    used: &mut [bool],
    total: usize,
    cur: &mut Vec<NodeId>,
    found: &mut Vec<Vec<NodeId>>,
) {
    if cur.len() == total {
        found.push(cur.clone());
        return;
    }
    let try_place = |x: NodeId, cur: &mut Vec<NodeId>| -> bool {
        let at = cur.len();
        if rule.first.contains(&x) && at != 0 {
            return false;
        }
        if cur.last().is_some_and(|p| rule.last.contains(p)) {
            return false;
        }
        for &(a, b) in &rule.prec {
            if b == x && cur.last() != Some(&a) {
                return false;
            }
            if cur.last() == Some(&a) && b != x {
                return false;
            }
        }
        for &(a, b) in &rule.lprec {
            if a == x && cur.contains(&b) {
                return false;
            }
        }
        true
    };
    if next_fixed < fixed.len() {
        let x = fixed[next_fixed];
        if try_place(x, cur) {
            cur.push(x);
            orders_rec(rule, fixed, next_fixed + 1, empties, used, total, cur, found);
            cur.pop();
        }
    }
    for i in 0..empties.len() {
        if used[i] {
            continue;
        }
        let x = empties[i];
        if try_place(x, cur) {
            used[i] = true;
            cur.push(x);
            orders_rec(rule, fixed, next_fixed, empties, used, total, cur, found);
            cur.pop();
            used[i] = false;
        }
    }
}

fn node_label(s: &Shape, id: NodeId) -> String {
    let fs: Vec<String> = s.values[&id].iter().map(|(k, v)| format!("{k}={v}")).collect();
    let mut out = format!("[{}]", fs.join(","));
    if let Some(w) = s.words.get(&id) {
        out.push_str(&format!(" {w:?}"));
    }
    out
}

/// Structural key in which each run of consecutive empty-yield sisters is
/// replaced by the sorted list of their keys.
fn class_key(s: &Shape, chosen: &BTreeMap<NodeId, &Vec<NodeId>>, id: NodeId) -> String {
    let mut out = format!("({}", node_label(s, id));
    if let Some(kids) = chosen.get(&id) {
        let mut run: Vec<String> = Vec::new();
        let flush = |run: &mut Vec<String>, out: &mut String| {
            if !run.is_empty() {
                run.sort();
                out.push_str(&format!(" {{{}}}", run.join(" ")));
                run.clear();
            }
        };
        for &k in kids.iter() {
            let key = class_key(s, chosen, k);
            if s.span.contains_key(&k) {
                flush(&mut run, &mut out);
                out.push(' ');
                out.push_str(&key);
            } else {
                run.push(key);
            }
        }
        flush(&mut run, &mut out);
    }
    out.push(')');
    out
}

fn build(
    s: &Shape,
    chosen: &BTreeMap<NodeId, &Vec<NodeId>>,
    selection: &[Iptd],
    templates: &[String],
) -> Result<Extracted> {
    let mut counter = 0usize;
    let mut names: BTreeMap<NodeId, String> = BTreeMap::new();
    let doc = doc_rec(s, chosen, s.root, &mut counter, &mut names);
    let tree = SyntacticTree::from_doc(&doc)?;
    let mut interpretation = Interpretation::new();
    let mut preimage: BTreeMap<TreeNodeId, String> = BTreeMap::new();
    for (id, name) in &names {
        let t = tree
            .by_name(name)
            .ok_or_else(|| Error::Internal(format!("tree node {name} missing")))?;
        let n = s.ptd.node(*id);
        for o in &n.origins {
            interpretation.insert(o.clone(), t);
        }
        preimage.insert(t, n.label());
    }
    let verdict = check_model(&tree, selection, &interpretation)?;
    if !verdict.ok {
        let tags: Vec<&str> = verdict.violations.iter().map(|v| v.tag.code()).collect();
        return Err(Error::Internal(format!(
            "extracted tree {} fails {}",
            tree.bracketed(),
            tags.join(", ")
        )));
    }
    let labelled = tree.bracketed_with(&|t| preimage.get(&t).map(|l| format!("{{{l}}}")));
    Ok(Extracted {
        key: format!("{} {}", templates.join(" "), labelled),
        tree,
        interpretation,
        variants: 1,
    })
}

fn doc_rec(
    s: &Shape,
    chosen: &BTreeMap<NodeId, &Vec<NodeId>>,
    id: NodeId,
    counter: &mut usize,
    names: &mut BTreeMap<NodeId, String>,
) -> TreeDoc {
    let name = format!("n{counter}");
    *counter += 1;
    names.insert(id, name.clone());
    let children: Vec<TreeDoc> = chosen
        .get(&id)
        .map(|kids| kids.iter().map(|&k| doc_rec(s, chosen, k, counter, names)).collect())
        .unwrap_or_default();
    let phon = children
        .is_empty()
        .then(|| s.words.get(&id).cloned().unwrap_or_default());
    TreeDoc {
        name,
        features: s.values[&id].clone(),
        children,
        phon,
    }
}
