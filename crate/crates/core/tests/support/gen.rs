//! Random instances with a known model: a random ordered tree is cut into
//! description fragments whose polarities saturate exactly on the tree, so
//! the cutting map is an interpretation.

use std::collections::{BTreeMap, BTreeSet};

use igram_core::feature::{FilteringFeatureStructure, PolarizedFeature, PolarizedFeatureStructure};
use igram_core::tree::TreeDoc;
use igram_core::{
    CorefTag, EdgePos, Interpretation, Iptd, NodeType, Origin, Polarity, Ptd, Relation, SyntacticTree,
    TreeNodeId, ValueSet,
};
use rand::seq::SliceRandom;
use rand::Rng;

const WORDS: [&str; 4] = ["a", "b", "c", "d"];
const CATS: [&str; 3] = ["x", "y", "z"];
const NUMS: [&str; 2] = ["sg", "pl"];

#[derive(Clone, Debug)]
pub struct Shape {
    pub parent: Vec<Option<usize>>,
    pub kids: Vec<Vec<usize>>,
    pub feats: Vec<BTreeMap<String, String>>,
    pub phon: Vec<Option<String>>,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    fn doc(&self, i: usize) -> TreeDoc {
        TreeDoc {
            name: format!("T{i}"),
            features: self.feats[i]
                .iter()
                .map(|(k, v)| (k.clone(), ValueSet::single(v.clone())))
                .collect(),
            children: self.kids[i].iter().map(|&k| self.doc(k)).collect(),
            phon: self.phon[i].clone(),
        }
    }

    pub fn tree(&self) -> SyntacticTree {
        SyntacticTree::from_doc(&self.doc(0)).unwrap()
    }

    fn silent(&self, i: usize) -> bool {
        match &self.phon[i] {
            Some(p) => p.is_empty(),
            None => self.kids[i].iter().all(|&k| self.silent(k)),
        }
    }

    fn above(&self, a: usize, b: usize) -> bool {
        let mut cur = self.parent[b];
        while let Some(c) = cur {
            if c == a {
                return true;
            }
            cur = self.parent[c];
        }
        false
    }
}

pub struct Instance {
    pub shape: Shape,
    pub tree: SyntacticTree,
    pub iptds: Vec<Iptd>,
    /// Description node origin to index in `shape`.
    pub planted: BTreeMap<Origin, usize>,
}

impl Instance {
    pub fn desc_count(&self) -> usize {
        self.planted.len()
    }

    pub fn interp(&self) -> Interpretation {
        by_name(&self.tree, &self.planted)
    }
}

pub fn by_name(tree: &SyntacticTree, m: &BTreeMap<Origin, usize>) -> Interpretation {
    m.iter()
        .map(|(o, x)| (o.clone(), tree.by_name(&format!("T{x}")).unwrap()))
        .collect()
}

fn shape(rng: &mut impl Rng, n: usize) -> Shape {
    let mut parent = vec![None];
    let mut kids = vec![Vec::new(); n];
    for i in 1..n {
        let p = rng.gen_range(0..i);
        parent.push(Some(p));
        let at = rng.gen_range(0..=kids[p].len());
        kids[p].insert(at, i);
    }
    let mut feats = Vec::new();
    let mut phon = Vec::new();
    for k in &kids {
        let mut f = BTreeMap::new();
        if rng.gen_bool(0.8) {
            f.insert("cat".to_string(), CATS.choose(rng).unwrap().to_string());
        }
        if rng.gen_bool(0.3) {
            f.insert("num".to_string(), NUMS.choose(rng).unwrap().to_string());
        }
        feats.push(f);
        phon.push(k.is_empty().then(|| {
            if rng.gen_bool(0.25) {
                String::new()
            } else {
                WORDS.choose(rng).unwrap().to_string()
            }
        }));
    }
    Shape { parent, kids, feats, phon }
}

fn domain(name: &str) -> &'static [&'static str] {
    if name == "cat" {
        &CATS
    } else {
        &NUMS
    }
}

fn widen(rng: &mut impl Rng, name: &str, v: &str) -> ValueSet {
    let mut vals = vec![v.to_string()];
    for w in domain(name) {
        if *w != v && rng.gen_bool(0.3) {
            vals.push(w.to_string());
        }
    }
    ValueSet::new(vals).unwrap()
}

struct Slot {
    x: usize,
    name: String,
    ntype: NodeType,
    feats: BTreeMap<String, (Polarity, ValueSet, Option<CorefTag>)>,
}

/// A random instance with at most `max_tree` tree nodes and `max_desc`
/// description nodes.
pub fn instance(rng: &mut impl Rng, max_tree: usize, max_desc: usize) -> Instance {
    loop {
        if let Some(i) = attempt(rng, max_tree, max_desc) {
            return i;
        }
    }
}

fn attempt(rng: &mut impl Rng, max_tree: usize, max_desc: usize) -> Option<Instance> {
    let n = rng.gen_range(1..=max_tree);
    let s = shape(rng, n);
    let edges: Vec<usize> = (1..n).collect();
    let parts = rng.gen_range(1..=4usize).min(edges.len().max(1));
    let mut owners: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for &c in &edges {
        let k = rng.gen_range(0..parts);
        let o = owners.entry(c).or_default();
        o.insert(k);
        if parts > 1 && rng.gen_bool(0.15) {
            o.insert(rng.gen_range(0..parts));
        }
    }
    let mut members: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); parts];
    for (&c, ks) in &owners {
        for &k in ks {
            members[k].insert(c);
            members[k].insert(s.parent[c].unwrap());
        }
    }
    if n == 1 {
        members[0].insert(0);
    }
    let keep: Vec<usize> = (0..parts).filter(|&k| !members[k].is_empty()).collect();

    let mut slots: Vec<Vec<Slot>> = Vec::new();
    for &k in &keep {
        let mut v: Vec<Slot> = members[k]
            .iter()
            .map(|&x| Slot {
                x,
                name: format!("N{x}"),
                ntype: NodeType::Default,
                feats: BTreeMap::new(),
            })
            .collect();
        if rng.gen_bool(0.1) {
            let x = rng.gen_range(0..n);
            v.push(Slot {
                x,
                name: format!("X{x}"),
                ntype: NodeType::Default,
                feats: BTreeMap::new(),
            });
        }
        slots.push(v);
    }
    if slots.iter().map(Vec::len).sum::<usize>() > max_desc {
        return None;
    }

    let mut pre: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (k, v) in slots.iter().enumerate() {
        for (j, sl) in v.iter().enumerate() {
            pre[sl.x].push((k, j));
        }
    }
    for x in 0..n {
        let p = &pre[x];
        let word = s.phon[x].clone().filter(|w| !w.is_empty());
        let anchor = word.as_ref().map(|_| *p.choose(rng).unwrap());
        for &(k, j) in p {
            slots[k][j].ntype = if Some((k, j)) == anchor {
                NodeType::Anchor(word.clone().unwrap())
            } else if rng.gen_bool(0.5) {
                NodeType::Default
            } else if s.silent(x) {
                NodeType::Empty
            } else {
                NodeType::Full
            };
        }
        for (name, v) in &s.feats[x] {
            let mut carriers: Vec<(usize, usize)> = p.iter().copied().filter(|_| rng.gen_bool(0.7)).collect();
            if carriers.is_empty() {
                carriers.push(*p.choose(rng).unwrap());
            }
            carriers.shuffle(rng);
            let active = carriers.len() >= 2 && rng.gen_bool(0.6);
            for (i, &(k, j)) in carriers.iter().enumerate() {
                let pol = match (active, i) {
                    (true, 0) => Polarity::Positive,
                    (true, 1) => Polarity::Negative,
                    (false, 0) => Polarity::Neutral,
                    _ if rng.gen_bool(0.5) => Polarity::Virtual,
                    _ => Polarity::Neutral,
                };
                slots[k][j].feats.insert(name.clone(), (pol, widen(rng, name, v), None));
            }
        }
    }
    for v in slots.iter_mut() {
        let mut tag = 0;
        for a in 0..v.len() {
            for b in a + 1..v.len() {
                let names: Vec<String> = v[a].feats.keys().cloned().collect();
                for name in names {
                    let same = s.feats[v[a].x].get(&name) == s.feats[v[b].x].get(&name);
                    let free = v[a].feats[&name].2.is_none() && v[b].feats.get(&name).is_some_and(|f| f.2.is_none());
                    if same && free && rng.gen_bool(0.15) {
                        tag += 1;
                        v[a].feats.get_mut(&name).unwrap().2 = Some(CorefTag(tag));
                        v[b].feats.get_mut(&name).unwrap().2 = Some(CorefTag(tag));
                    }
                }
            }
        }
    }

    let mut iptds = Vec::new();
    let mut planted = BTreeMap::new();
    for (i, (&k, v)) in keep.iter().zip(&slots).enumerate() {
        let mut ptd = Ptd::new();
        let mut id = BTreeMap::new();
        let mut anchor = None;
        for sl in v {
            let pfs: PolarizedFeatureStructure = sl
                .feats
                .iter()
                .map(|(name, (pol, value, coref))| PolarizedFeature {
                    name: name.clone(),
                    polarity: *pol,
                    value: value.clone(),
                    coref: *coref,
                })
                .collect();
            let nid = ptd.add_node(&pfs, sl.ntype.clone(), Origin::new(0, sl.name.clone()));
            if matches!(sl.ntype, NodeType::Anchor(_)) {
                anchor = Some(nid);
            }
            if sl.name.starts_with('N') {
                id.insert(sl.x, nid);
            }
            planted.insert(Origin::new(i as u32 + 1, sl.name.clone()), sl.x);
        }
        let owned = |c: usize| owners.get(&c).is_some_and(|o| o.contains(&k));
        for (&c, &cid) in &id {
            let Some(p) = s.parent[c] else { continue };
            if !owned(c) {
                continue;
            }
            let sibs = &s.kids[p];
            let pos = if sibs[0] == c && rng.gen_bool(0.3) {
                EdgePos::Leftmost
            } else if *sibs.last().unwrap() == c && rng.gen_bool(0.3) {
                EdgePos::Rightmost
            } else {
                EdgePos::Any
            };
            ptd.add_relation(Relation::Dom { mother: id[&p], daughter: cid, pos });
        }
        for (&p, &pid) in &id {
            let sibs = &s.kids[p];
            let mine: Vec<usize> = sibs.iter().copied().filter(|&c| owned(c)).collect();
            if !sibs.is_empty() && mine.len() == sibs.len() && rng.gen_bool(0.3) {
                let mut daughters: Vec<_> = mine.iter().map(|c| id[c]).collect();
                daughters.sort();
                ptd.add_relation(Relation::Arity { mother: pid, daughters });
            }
            for (i, &a) in mine.iter().enumerate() {
                for &b in &mine[i + 1..] {
                    let (ia, ib) = (
                        sibs.iter().position(|&z| z == a).unwrap(),
                        sibs.iter().position(|&z| z == b).unwrap(),
                    );
                    if ib == ia + 1 && rng.gen_bool(0.5) {
                        ptd.add_relation(Relation::Prec(id[&a], id[&b]));
                    } else if rng.gen_bool(0.3) {
                        ptd.add_relation(Relation::Lprec(id[&a], id[&b]));
                    }
                }
            }
        }
        for (&a, &aid) in &id {
            for (&b, &bid) in &id {
                if !s.above(a, b) || s.parent[b] == Some(a) || !rng.gen_bool(0.3) {
                    continue;
                }
                let filter = rng.gen_bool(0.5).then(|| {
                    let mut cats: BTreeSet<String> = BTreeSet::new();
                    let mut cur = b;
                    loop {
                        cats.extend(s.feats[cur].get("cat").cloned());
                        if cur == a {
                            break;
                        }
                        cur = s.parent[cur].unwrap();
                    }
                    for c in CATS {
                        if rng.gen_bool(0.2) {
                            cats.insert(c.to_string());
                        }
                    }
                    let mut f = FilteringFeatureStructure::new();
                    if let Some(vs) = ValueSet::new(cats) {
                        f.insert("cat", vs);
                    }
                    f
                });
                ptd.add_relation(Relation::Ldom { ancestor: aid, descendant: bid, filter });
            }
        }
        iptds.push(Iptd {
            template: format!("g{i}"),
            interface: FilteringFeatureStructure::new(),
            ptd,
            anchor,
        });
    }
    let tree = s.tree();
    Some(Instance { shape: s, tree, iptds, planted })
}

/// A nearby (tree, interpretation) pair that may or may not be a model.
pub fn perturb(rng: &mut impl Rng, inst: &Instance) -> (SyntacticTree, Interpretation) {
    let mut s = inst.shape.clone();
    let mut m = inst.planted.clone();
    let n = s.len();
    match rng.gen_range(0..6) {
        0 | 1 => {
            let keys: Vec<Origin> = m.keys().cloned().collect();
            for _ in 0..rng.gen_range(1..=2) {
                let o = keys.choose(rng).unwrap().clone();
                m.insert(o, rng.gen_range(0..n));
            }
        }
        2 => {
            let inner: Vec<usize> = (0..n).filter(|&x| s.kids[x].len() > 1).collect();
            if let Some(&x) = inner.choose(rng) {
                s.kids[x].shuffle(rng);
            }
        }
        3 => {
            let x = rng.gen_range(0..n);
            let name = if rng.gen_bool(0.7) { "cat" } else { "num" };
            s.feats[x].insert(name.to_string(), domain(name).choose(rng).unwrap().to_string());
        }
        4 => {
            let leaves: Vec<usize> = (0..n).filter(|&x| s.kids[x].is_empty()).collect();
            let x = *leaves.choose(rng).unwrap();
            s.phon[x] = Some(if rng.gen_bool(0.3) { String::new() } else { WORDS.choose(rng).unwrap().to_string() });
        }
        _ => {
            for v in m.values_mut() {
                *v = rng.gen_range(0..n);
            }
        }
    }
    let tree = s.tree();
    let interp = by_name(&tree, &m);
    (tree, interp)
}

pub fn image_of(i: &Interpretation, o: &Origin) -> TreeNodeId {
    i[o]
}
