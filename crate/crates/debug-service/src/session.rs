//! Interactive parsing sessions: pick a lexical selection, then merge node
//! pairs one at a time with undo.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use igram_core::filter::FilterStats;
use igram_core::parser::{extract_models, instances, selections, ParseOptions, ParsedModel};
use igram_core::ptd::{CandidateKind, GraphExport};
use igram_core::report::{model_report, ModelReport};
use igram_core::{Error, Grammar, Iptd, Lexicon, MergeError, NodeId, Ptd, SelectionGraph};
use serde::Serialize;

pub const DEFAULT_TTL: Duration = Duration::from_secs(30 * 60);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Selecting,
    Merging,
    Saturated,
    DeadEnd,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Selecting => "SELECTING",
            Status::Merging => "MERGING",
            Status::Saturated => "SATURATED",
            Status::DeadEnd => "DEAD_END",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("empty input")]
    EmptyInput,
    #[error("unknown grammar `{0}`")]
    UnknownGrammar(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("not allowed while the session is {0}")]
    WrongState(Status),
    #[error("no selection with index {0}")]
    BadIndex(usize),
    #[error("#{0} and #{1} are not a listed candidate pair")]
    BadPair(u32, u32),
    /// The merge was predicted to fail and did; the session is unchanged.
    #[error("{0}")]
    Clash(MergeError),
    #[error("merge outcome differs from its prediction: {0}")]
    MergeFailed(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::EmptyInput => "EMPTY_INPUT",
            ServiceError::UnknownGrammar(_) => "UNKNOWN_GRAMMAR",
            ServiceError::UnknownSession(_) => "UNKNOWN_SESSION",
            ServiceError::WrongState(_) => "WRONG_STATE",
            ServiceError::BadIndex(_) => "BAD_INDEX",
            ServiceError::BadPair(..) => "BAD_PAIR",
            ServiceError::Clash(e) => e.kind.code(),
            ServiceError::MergeFailed(_) => "MERGE_FAILED",
            ServiceError::Core(Error::EmptyInput) => "EMPTY_INPUT",
            ServiceError::Core(e) => e.code(),
        }
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

pub struct Loaded {
    pub grammar: Grammar,
    pub lexicon: Lexicon,
}

impl Loaded {
    /// Reads `grammar.json` and `lexicon.json` from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Loaded> {
        Ok(Loaded {
            grammar: Grammar::load(&dir.join("grammar.json"))?,
            lexicon: Lexicon::load(&dir.join("lexicon.json"))?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SelectionItem {
    pub index: usize,
    pub words: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SelectionPage {
    pub total: u64,
    pub items: Vec<SelectionItem>,
    /// Pass as `after` to get the next page; absent on the last page.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub next: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CandidateView {
    pub a: u32,
    pub b: u32,
    pub a_label: String,
    pub b_label: String,
    pub feature: String,
    pub kind: CandidateKind,
    /// `OK` or the clash code the merge would fail with.
    pub outcome: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StateView {
    pub id: String,
    pub sentence: String,
    pub grammar: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub unknown_words: Vec<String>,
    pub filter: FilterStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionItem>,
    pub merges: Vec<[u32; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ptd: Option<GraphExport>,
    pub models: Vec<ModelReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub struct Session {
    pub id: String,
    pub sentence: String,
    pub grammar: String,
    graph: SelectionGraph,
    filter: FilterStats,
    unknown_words: Vec<String>,
    chosen: Option<SelectionItem>,
    selection: Vec<Iptd>,
    /// Bottom is the juxtaposed selection; each merge pushes one entry.
    history: Vec<Ptd>,
    merges: Vec<(NodeId, NodeId)>,
    status: Status,
}

impl Session {
    pub fn create(id: String, sentence: &str, grammar: &str, loaded: &Loaded) -> Result<Session> {
        if sentence.trim().is_empty() {
            return Err(ServiceError::EmptyInput);
        }
        let (graph, filter, unknown_words) =
            selections(sentence, &loaded.grammar, &loaded.lexicon, &ParseOptions::default())?;
        Ok(Session {
            id,
            sentence: sentence.to_string(),
            grammar: grammar.to_string(),
            graph,
            filter,
            unknown_words,
            chosen: None,
            selection: Vec::new(),
            history: Vec::new(),
            merges: Vec::new(),
            status: Status::Selecting,
        })
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn top(&self) -> Option<&Ptd> {
        self.history.last()
    }

    pub fn selection(&self) -> &[Iptd] {
        &self.selection
    }

    pub fn merges(&self) -> &[(NodeId, NodeId)] {
        &self.merges
    }

    fn require(&self, ok: &[Status]) -> Result<()> {
        if ok.contains(&self.status) {
            Ok(())
        } else {
            Err(ServiceError::WrongState(self.status))
        }
    }

    /// Up to `cap` filtered selections starting at index `after`.
    pub fn list_selections(&self, cap: usize, after: usize) -> Result<SelectionPage> {
        self.require(&[Status::Selecting])?;
        let total = self.graph.path_count();
        let paths = self.graph.paths(after.saturating_add(cap).saturating_add(1));
        let items: Vec<SelectionItem> = paths
            .iter()
            .enumerate()
            .skip(after)
            .take(cap)
            .map(|(index, p)| SelectionItem {
                index,
                words: self.graph.describe(p),
            })
            .collect();
        let next = (paths.len() > after + cap).then(|| (after + cap).to_string());
        Ok(SelectionPage { total, items, next })
    }

    pub fn choose(&mut self, index: usize) -> Result<()> {
        self.require(&[Status::Selecting])?;
        let paths = self.graph.paths(index.saturating_add(1));
        let path = paths.get(index).ok_or(ServiceError::BadIndex(index))?;
        self.selection = self.graph.selection(path);
        self.chosen = Some(SelectionItem {
            index,
            words: self.graph.describe(path),
        });
        let start = instances(&self.selection)
            .iter()
            .fold(Ptd::new(), |acc, d| acc.juxtapose(d));
        self.history = vec![start];
        self.refresh_status();
        Ok(())
    }

    fn evaluate(ptd: &Ptd) -> Vec<(CandidateView, std::result::Result<Ptd, MergeError>)> {
        ptd.candidate_pairs()
            .into_iter()
            .map(|c| {
                let result = ptd.merge_nodes(c.a, c.b).map(|m| m.ptd);
                let (outcome, message) = match &result {
                    Ok(_) => ("OK", None),
                    Err(e) => (e.kind.code(), Some(e.message.clone())),
                };
                let view = CandidateView {
                    a: c.a.0,
                    b: c.b.0,
                    a_label: ptd.node(c.a).label(),
                    b_label: ptd.node(c.b).label(),
                    feature: c.feature,
                    kind: c.kind,
                    outcome,
                    message,
                };
                (view, result)
            })
            .collect()
    }

    fn refresh_status(&mut self) {
        let top = self.history.last().expect("history is non-empty while merging");
        self.status = if top.is_saturated() {
            Status::Saturated
        } else if Self::evaluate(top).iter().any(|(_, r)| r.is_ok()) {
            Status::Merging
        } else {
            Status::DeadEnd
        };
    }

    /// Every dual and virtual pair of the current description, each merged
    /// on a scratch copy to predict its outcome.
    pub fn candidates(&self) -> Result<Vec<CandidateView>> {
        self.require(&[Status::Merging, Status::DeadEnd, Status::Saturated])?;
        Ok(Self::evaluate(self.top().expect("chosen")).into_iter().map(|(v, _)| v).collect())
    }

    pub fn merge(&mut self, a: u32, b: u32) -> Result<()> {
        self.require(&[Status::Merging])?;
        let (x, y) = (NodeId(a.min(b)), NodeId(a.max(b)));
        let top = self.top().expect("chosen");
        let predicted = Self::evaluate(top)
            .into_iter()
            .find(|(v, _)| v.a == x.0 && v.b == y.0)
            .ok_or(ServiceError::BadPair(a, b))?;
        let actual = top.merge_nodes(x, y).map(|m| m.ptd);
        match (predicted.1, actual) {
            (Ok(p), Ok(m)) if p == m => {
                self.history.push(m);
                self.merges.push((x, y));
                self.refresh_status();
            }
            (Err(p), Err(e)) if p.kind == e.kind => return Err(ServiceError::Clash(e)),
            (p, m) => {
                return Err(ServiceError::MergeFailed(format!(
                    "predicted {}, got {}",
                    p.map_or_else(|e| e.kind.code(), |_| "OK"),
                    m.map_or_else(|e| e.kind.code(), |_| "OK"),
                )))
            }
        }
        Ok(())
    }

    pub fn undo(&mut self) -> Result<()> {
        if self.status == Status::Selecting || self.history.len() < 2 {
            return Err(ServiceError::WrongState(self.status));
        }
        self.history.pop();
        self.merges.pop();
        self.refresh_status();
        Ok(())
    }

    pub fn state(&self) -> StateView {
        let mut models = Vec::new();
        let mut note = None;
        if let (Status::Saturated, Some(top), Some(chosen)) = (self.status, self.top(), &self.chosen) {
            match extract_models(top, &self.selection) {
                Ok(ms) => {
                    models = ms
                        .into_iter()
                        .map(|m| {
                            model_report(&ParsedModel {
                                tree: m.tree,
                                interpretation: m.interpretation,
                                selection: chosen.words.clone(),
                                iptds: self.selection.clone(),
                                ptd: top.clone(),
                                key: m.key,
                                variants: m.variants,
                            })
                        })
                        .collect();
                }
                Err(e) => note = Some(e.to_string()),
            }
        }
        StateView {
            id: self.id.clone(),
            sentence: self.sentence.clone(),
            grammar: self.grammar.clone(),
            status: self.status,
            unknown_words: self.unknown_words.clone(),
            filter: self.filter.clone(),
            selection: self.chosen.clone(),
            merges: self.merges.iter().map(|(a, b)| [a.0, b.0]).collect(),
            ptd: self.top().map(Ptd::to_graph),
            models,
            note,
        }
    }
}

/// Loaded grammars and live sessions. Each session has its own lock, so
/// requests on one session are serialized and distinct sessions never wait
/// on each other beyond the registry lookup.
pub struct Registry {
    grammars: BTreeMap<String, Arc<Loaded>>,
    sessions: Mutex<HashMap<String, Entry>>,
    ttl: Duration,
}

struct Entry {
    session: Arc<Mutex<Session>>,
    last_used: Instant,
}

impl Registry {
    pub fn new(grammars: BTreeMap<String, Loaded>, ttl: Duration) -> Self {
        Registry {
            grammars: grammars.into_iter().map(|(k, v)| (k, Arc::new(v))).collect(),
            sessions: Mutex::new(HashMap::new()),
            ttl,
        }
    }

    pub fn grammar_ids(&self) -> Vec<String> {
        self.grammars.keys().cloned().collect()
    }

    pub fn create(&self, sentence: &str, grammar: &str) -> Result<Arc<Mutex<Session>>> {
        let loaded = self
            .grammars
            .get(grammar)
            .ok_or_else(|| ServiceError::UnknownGrammar(grammar.to_string()))?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = Arc::new(Mutex::new(Session::create(id.clone(), sentence, grammar, loaded)?));
        self.lock().insert(
            id,
            Entry {
                session: session.clone(),
                last_used: Instant::now(),
            },
        );
        Ok(session)
    }

    /// The live session `id`, marked as used now.
    pub fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>> {
        self.get_at(id, Instant::now())
    }

    pub fn get_at(&self, id: &str, now: Instant) -> Result<Arc<Mutex<Session>>> {
        let mut sessions = self.lock();
        let missing = || ServiceError::UnknownSession(id.to_string());
        let entry = sessions.get_mut(id).ok_or_else(missing)?;
        if now.saturating_duration_since(entry.last_used) > self.ttl {
            sessions.remove(id);
            return Err(missing());
        }
        entry.last_used = entry.last_used.max(now);
        Ok(entry.session.clone())
    }

    pub fn remove(&self, id: &str) -> Result<()> {
        self.lock()
            .remove(id)
            .map(|_| ())
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    /// Drops sessions idle for longer than the time-to-live as of `now`;
    /// returns how many were dropped.
    pub fn reap(&self, now: Instant) -> usize {
        let mut sessions = self.lock();
        let before = sessions.len();
        sessions.retain(|_, e| now.saturating_duration_since(e.last_used) <= self.ttl);
        before - sessions.len()
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, Entry>> {
        self.sessions.lock().unwrap_or_else(|e| e.into_inner())
    }
}
