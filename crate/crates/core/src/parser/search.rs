//! The two deep-parsing engines and the shared REDUCE closure.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::ptd::{Closure, NodeId, NodeType, Origin, PartitionKey, Ptd, Relation};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    /// Merge attempts.
    pub steps: usize,
    /// Failed merges, merges contradicting the word order, and states with
    /// an unsatisfiable obligation.
    pub dead_ends: usize,
    /// Non-empty chart cells (CKY only).
    pub cells: usize,
}

#[derive(Clone, Debug, Default)]
pub struct EngineOutput {
    /// Saturated descriptions, one per partition of the description nodes,
    /// ordered by partition key.
    pub saturated: Vec<Ptd>,
    pub stats: SearchStats,
    /// The step budget ran out; `saturated` may be missing results.
    pub incomplete: bool,
}

/// Sentence positions of the anchors, used to discard descriptions that
/// no tree over the sentence can satisfy. Both tests are necessary
/// conditions of the linearization done at extraction, and they stay false
/// under further merging, so pruning with them loses no model.
pub(crate) struct WordOrder {
    positions: BTreeMap<Origin, usize>,
}

impl WordOrder {
    pub fn new(instances: &[Ptd]) -> Self {
        let mut positions = BTreeMap::new();
        for (k, d) in instances.iter().enumerate() {
            for n in d.nodes.values() {
                if matches!(n.ntype, NodeType::Anchor(_)) {
                    positions.extend(n.origins.iter().map(|o| (o.clone(), k)));
                }
            }
        }
        WordOrder { positions }
    }

    /// False when some sister precedence puts a later word first, or when
    /// a word inside the span of a node's words sits under a sister of one
    /// of that node's ancestors.
    pub fn admits(&self, ptd: &Ptd) -> bool {
        let ids: Vec<NodeId> = ptd.nodes.keys().copied().collect();
        let mut down = Vec::new();
        let mut order = Vec::new();
        for r in &ptd.relations {
            match r {
                Relation::Dom { mother, daughter, .. } => down.push((*mother, *daughter)),
                Relation::Ldom { ancestor, descendant, .. } => down.push((*ancestor, *descendant)),
                Relation::Prec(x, y) | Relation::Lprec(x, y) => order.push((*x, *y)),
                Relation::Arity { .. } => {}
            }
        }
        let anchors: Vec<(NodeId, usize)> = ptd
            .nodes
            .values()
            .filter_map(|n| {
                n.origins
                    .iter()
                    .find_map(|o| self.positions.get(o))
                    .map(|&p| (n.id, p))
            })
            .collect();
        if anchors.len() < 2 || order.is_empty() {
            return true;
        }
        let below = Closure::new(&ids, &down);
        let mut spans: BTreeMap<NodeId, (usize, usize)> = BTreeMap::new();
        for &x in &ids {
            for &(a, p) in &anchors {
                if below.reaches(x, a) {
                    let s = spans.entry(x).or_insert((p, p));
                    s.0 = s.0.min(p);
                    s.1 = s.1.max(p);
                }
            }
        }
        for (x, y) in &order {
            if let (Some(sx), Some(sy)) = (spans.get(x), spans.get(y)) {
                if sx.1 >= sy.0 {
                    return false;
                }
            }
        }
        for (&x, &(lo, hi)) in &spans {
            for &(a, p) in &anchors {
                if p <= lo || p >= hi || below.reaches(x, a) {
                    continue;
                }
                let split = order.iter().any(|&(v, w)| {
                    (below.reaches(v, x) && below.reaches(w, a)) || (below.reaches(w, x) && below.reaches(v, a))
                });
                if split {
                    return false;
                }
            }
        }
        true
    }
}

pub(crate) struct Search {
    words: WordOrder,
    max_steps: usize,
    pub stats: SearchStats,
    pub exhausted: bool,
    closed: BTreeSet<PartitionKey>,
    pub found: BTreeMap<PartitionKey, Ptd>,
}

impl Search {
    pub fn new(instances: &[Ptd], max_steps: usize) -> Self {
        Search {
            words: WordOrder::new(instances),
            max_steps,
            stats: SearchStats::default(),
            exhausted: false,
            closed: BTreeSet::new(),
            found: BTreeMap::new(),
        }
    }

    fn spend(&mut self) -> bool {
        if self.stats.steps >= self.max_steps {
            self.exhausted = true;
            return false;
        }
        self.stats.steps += 1;
        true
    }

    pub fn merge(&mut self, ptd: &Ptd, a: crate::ptd::NodeId, b: crate::ptd::NodeId) -> Option<Option<Ptd>> {
        if !self.spend() {
            return None;
        }
        match ptd.merge_nodes(a, b) {
            Ok(m) if self.words.admits(&m.ptd) => Some(Some(m.ptd)),
            _ => {
                self.stats.dead_ends += 1;
                Some(None)
            }
        }
    }

    /// REDUCE until saturation. Each step resolves the open feature with
    /// the fewest possible partners, trying every partner; since that
    /// feature must be resolved in any saturated result, this reaches every
    /// saturated partition reachable by merging polarity partners.
    pub fn close(&mut self, ptd: Ptd) {
        if self.exhausted || !self.closed.insert(ptd.partition_key()) {
            return;
        }
        if ptd.is_saturated() {
            self.found.insert(ptd.partition_key(), ptd);
            return;
        }
        let Some((node, _, partners)) = ptd.tightest_obligation() else {
            self.stats.dead_ends += 1;
            return;
        };
        if partners.is_empty() {
            self.stats.dead_ends += 1;
            return;
        }
        for p in partners {
            match self.merge(&ptd, node, p) {
                None => return,
                Some(Some(next)) => self.close(next),
                Some(None) => {}
            }
        }
    }

    pub fn finish(self) -> EngineOutput {
        EngineOutput {
            saturated: self.found.into_values().collect(),
            stats: self.stats,
            incomplete: self.exhausted,
        }
    }
}

/// Depth-first SHIFT/REDUCE over `instances`. SHIFT adds the next IPTD
/// while at most `bound` active polarities are open; otherwise a dual pair
/// must be reduced first. When everything is shifted the REDUCE closure
/// completes the description.
pub fn parse_incremental(instances: &[Ptd], bound: u32, max_steps: usize) -> EngineOutput {
    let mut search = Search::new(instances, max_steps);
    let mut visited = BTreeSet::new();
    incremental(&mut search, &mut visited, instances, Ptd::new(), 0, bound);
    search.finish()
}

fn incremental(
    search: &mut Search,
    visited: &mut BTreeSet<(usize, PartitionKey)>,
    instances: &[Ptd],
    ptd: Ptd,
    next: usize,
    bound: u32,
) {
    if search.exhausted || !visited.insert((next, ptd.partition_key())) {
        return;
    }
    if next == instances.len() {
        search.close(ptd);
        return;
    }
    if ptd.active_count() <= bound {
        let shifted = ptd.juxtapose(&instances[next]);
        incremental(search, visited, instances, shifted, next + 1, bound);
        return;
    }
    let pairs = ptd.dual_pairs();
    if pairs.is_empty() {
        search.stats.dead_ends += 1;
    }
    for c in pairs {
        match search.merge(&ptd, c.a, c.b) {
            None => return,
            Some(Some(m)) => incremental(search, visited, instances, m, next, bound),
            Some(None) => {}
        }
    }
}

/// Chart parsing: cell [i, j] holds the descriptions of tokens i..=j
/// obtained from some split [i, k] + [k+1, j] by merging one dual pair
/// across the split. The full-span cell is completed by the REDUCE closure.
pub fn parse_cky(instances: &[Ptd], max_steps: usize) -> EngineOutput {
    let n = instances.len();
    let mut search = Search::new(instances, max_steps);
    if n == 0 {
        return search.finish();
    }
    let mut chart: BTreeMap<(usize, usize), BTreeMap<PartitionKey, Ptd>> = BTreeMap::new();
    for (i, d) in instances.iter().enumerate() {
        chart.insert((i, i), BTreeMap::from([(d.partition_key(), d.clone())]));
    }
    'spans: for len in 2..=n {
        for i in 0..=n - len {
            let j = i + len - 1;
            let mut cell = BTreeMap::new();
            for k in i..j {
                let (left, right) = (&chart[&(i, k)], &chart[&(k + 1, j)]);
                for a in left.values() {
                    for b in right.values() {
                        let joined = a.juxtapose(b);
                        let split = a.next_id;
                        for c in joined.dual_pairs() {
                            if (c.a.0 < split) == (c.b.0 < split) {
                                continue;
                            }
                            match search.merge(&joined, c.a, c.b) {
                                None => break 'spans,
                                Some(Some(m)) => {
                                    cell.insert(m.partition_key(), m);
                                }
                                Some(None) => {}
                            }
                        }
                    }
                }
            }
            if !cell.is_empty() {
                search.stats.cells += 1;
            }
            chart.insert((i, j), cell);
        }
    }
    if n == 1 {
        search.stats.cells = 1;
    }
    if let Some(full) = chart.remove(&(0, n - 1)) {
        for d in full.into_values() {
            search.close(d);
        }
    }
    search.finish()
}
