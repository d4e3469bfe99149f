//! A second model checker written straight from the model conditions, over
//! plain vectors, sharing no code with the library checker beyond the data
//! types. Returns the set of failed condition codes.

use std::collections::{BTreeMap, BTreeSet};

use igram_core::tree::TreeDoc;
use igram_core::{EdgePos, Interpretation, Iptd, NodeType, Origin, Relation, SyntacticTree};

struct TNode {
    name: String,
    feats: BTreeMap<String, BTreeSet<String>>,
    kids: Vec<usize>,
    parent: Option<usize>,
    phon: Option<String>,
}

fn flatten(doc: &TreeDoc, parent: Option<usize>, out: &mut Vec<TNode>) -> usize {
    let me = out.len();
    out.push(TNode {
        name: doc.name.clone(),
        feats: doc
            .features
            .iter()
            .map(|(k, v)| (k.clone(), v.iter().map(str::to_string).collect()))
            .collect(),
        kids: Vec::new(),
        parent,
        phon: doc.phon.clone(),
    });
    for c in &doc.children {
        let id = flatten(c, Some(me), out);
        out[me].kids.push(id);
    }
    me
}

struct DNode {
    scope: usize,
    feats: BTreeMap<String, Feat>,
    ntype: NodeType,
}

struct Feat {
    plus: u32,
    minus: u32,
    neutral: u32,
    values: BTreeSet<String>,
    corefs: BTreeSet<u32>,
}

fn pp(t: &[TNode], i: usize) -> Vec<String> {
    match &t[i].phon {
        Some(p) if p.is_empty() => vec![],
        Some(p) => vec![p.clone()],
        None => t[i].kids.iter().flat_map(|&k| pp(t, k)).collect(),
    }
}

/// Nodes from `top` down to `bottom`, if `top` dominates `bottom`.
fn path(t: &[TNode], top: usize, bottom: usize) -> Option<Vec<usize>> {
    let mut up = vec![bottom];
    let mut cur = bottom;
    while cur != top {
        cur = t[cur].parent?;
        up.push(cur);
    }
    up.reverse();
    Some(up)
}

fn saturated(plus: u32, minus: u32, neutral: u32) -> bool {
    (plus == 1 && minus == 1) || (plus == 0 && minus == 0 && neutral > 0)
}

/// `Err` when the interpretation is not total on the description nodes or
/// names nodes outside them.
pub fn check(tree: &SyntacticTree, ds: &[Iptd], interp: &Interpretation) -> Result<BTreeSet<&'static str>, ()> {
    let mut t = Vec::new();
    flatten(&tree.to_doc(), None, &mut t);
    let by_name: BTreeMap<&str, usize> = t.iter().enumerate().map(|(i, n)| (n.name.as_str(), i)).collect();

    let mut d = Vec::new();
    let mut img = Vec::new();
    let mut rels = Vec::new();
    let mut seen = BTreeSet::new();
    for (k, iptd) in ds.iter().enumerate() {
        let mut local = BTreeMap::new();
        for (id, n) in &iptd.ptd.nodes {
            let origin = Origin::new(k as u32 + 1, n.name());
            let target = interp.get(&origin).ok_or(())?;
            seen.insert(origin);
            img.push(*by_name.get(tree.get(*target).ok_or(())?.name.as_str()).unwrap());
            local.insert(*id, d.len());
            d.push(DNode {
                scope: k,
                feats: n
                    .features
                    .iter()
                    .map(|(name, f)| {
                        (
                            name.clone(),
                            Feat {
                                plus: f.counts.positive.into(),
                                minus: f.counts.negative.into(),
                                neutral: f.counts.neutral.into(),
                                values: f.value.iter().map(str::to_string).collect(),
                                corefs: f.corefs.iter().map(|c| c.0).collect(),
                            },
                        )
                    })
                    .collect(),
                ntype: n.ntype.clone(),
            });
        }
        for r in &iptd.ptd.relations {
            rels.push((r.clone(), local.clone()));
        }
    }
    if seen.len() != interp.len() {
        return Err(());
    }

    let mut failed = BTreeSet::new();
    let pos_of = |i: usize| t[t[i].parent.unwrap()].kids.iter().position(|&k| k == i).unwrap();
    let mut doms = BTreeSet::new();
    for (r, local) in &rels {
        match r {
            Relation::Dom { mother, daughter, pos } => {
                let (m, c) = (img[local[mother]], img[local[daughter]]);
                doms.insert((local[mother], local[daughter]));
                let ok = t[c].parent == Some(m)
                    && match pos {
                        EdgePos::Any => true,
                        EdgePos::Leftmost => t[m].kids[0] == c,
                        EdgePos::Rightmost => *t[m].kids.last().unwrap() == c,
                    };
                if !ok {
                    failed.insert("DOM");
                }
            }
            Relation::Arity { mother, daughters } => {
                let m = img[local[mother]];
                let images: Vec<usize> = daughters.iter().map(|x| img[local[x]]).collect();
                let distinct: BTreeSet<usize> = images.iter().copied().collect();
                let kids: BTreeSet<usize> = t[m].kids.iter().copied().collect();
                if distinct.len() != images.len() || distinct != kids {
                    failed.insert("DOM");
                }
            }
            Relation::Ldom { ancestor, descendant, filter } => {
                match path(&t, img[local[ancestor]], img[local[descendant]]) {
                    None => {
                        failed.insert("LDOM");
                    }
                    Some(p) => {
                        if let Some(f) = filter {
                            let bad = p.iter().any(|&x| {
                                t[x].feats.iter().any(|(name, vals)| {
                                    f.get(name).is_some_and(|allowed| vals.iter().any(|v| !allowed.contains(v)))
                                })
                            });
                            if bad {
                                failed.insert("LDOM");
                            }
                        }
                    }
                }
            }
            Relation::Prec(a, b) | Relation::Lprec(a, b) => {
                let (x, y) = (img[local[a]], img[local[b]]);
                let strict = matches!(r, Relation::Prec(..));
                let ok = t[x].parent.is_some()
                    && t[x].parent == t[y].parent
                    && if strict { pos_of(x) + 1 == pos_of(y) } else { pos_of(x) < pos_of(y) };
                if !ok {
                    failed.insert(if strict { "PREC" } else { "LPREC" });
                }
            }
        }
    }

    let mut pre: Vec<Vec<usize>> = vec![Vec::new(); t.len()];
    for (n, &x) in img.iter().enumerate() {
        pre[x].push(n);
    }
    let preimages = |x: usize| pre[x].iter().copied();

    for x in 0..t.len() {
        for (name, vals) in &t[x].feats {
            for n in preimages(x) {
                if let Some(f) = d[n].feats.get(name) {
                    if !vals.is_subset(&f.values) {
                        failed.insert("FEAT");
                    }
                }
            }
        }
    }

    for a in 0..d.len() {
        for b in 0..d.len() {
            if a == b || d[a].scope != d[b].scope {
                continue;
            }
            for (name, fa) in &d[a].feats {
                let Some(fb) = d[b].feats.get(name) else { continue };
                if fa.corefs.is_disjoint(&fb.corefs) {
                    continue;
                }
                if t[img[a]].feats.get(name) != t[img[b]].feats.get(name) {
                    failed.insert("COREF");
                }
            }
        }
    }

    for n in 0..d.len() {
        let x = img[n];
        let proj = pp(&t, x);
        let ok = match &d[n].ntype {
            NodeType::Anchor(p) => t[x].phon.as_deref() == Some(p.as_str()),
            NodeType::Empty => proj.is_empty(),
            NodeType::Full => !proj.is_empty(),
            NodeType::Default => true,
        };
        if !ok {
            failed.insert("NODETYPE");
        }
    }

    for x in 0..t.len() {
        let names: BTreeSet<&String> = preimages(x).flat_map(|n| d[n].feats.keys()).collect();
        for name in names {
            let (mut p, mut m, mut z) = (0, 0, 0);
            for n in preimages(x) {
                if let Some(f) = d[n].feats.get(name) {
                    p += f.plus;
                    m += f.minus;
                    z += f.neutral;
                }
            }
            if !saturated(p, m, z) {
                failed.insert("SAT");
            }
        }
    }

    for x in 0..t.len() {
        if preimages(x).next().is_none() {
            failed.insert("MIN-SURJ");
        }
        if let Some(parent) = t[x].parent {
            if !doms.iter().any(|&(a, b)| img[a] == parent && img[b] == x) {
                failed.insert("MIN-EDGE");
            }
        }
        if t[x].feats.keys().any(|name| !preimages(x).any(|n| d[n].feats.contains_key(name))) {
            failed.insert("MIN-FEAT");
        }
        if let Some(p) = &t[x].phon {
            if !p.is_empty() {
                let anchors = preimages(x)
                    .filter(|&n| matches!(&d[n].ntype, NodeType::Anchor(q) if q == p))
                    .count();
                if anchors != 1 {
                    failed.insert("MIN-PHON");
                }
            }
        }
    }
    Ok(failed)
}
