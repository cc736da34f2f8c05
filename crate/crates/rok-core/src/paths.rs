//! Multi-hop path search between key entities and neighbor-branch
//! collection.
//!
//! Path enumeration is undirected by default: an edge may be walked against
//! its stored direction, and each step records which way it was traversed.
//! Candidate paths between entity pairs are generated by a frontier
//! iteration — the first linked entity searches towards all others, matched
//! entities become the next sources — and their triples union into the
//! candidate subgraph handed to the ranker.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Result, RokError};
use crate::kg::{EntityId, KnowledgeGraph, Triple};
use crate::Score;

/// Lexicographic ordering key of a path: node surfaces, relation surfaces,
/// traversal directions.
pub type PathLexKey = (Vec<String>, Vec<String>, Vec<bool>);

/// One traversal step: a stored triple plus the direction it was walked.
/// `forward` means head → tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathStep {
    pub triple: Triple,
    pub forward: bool,
}

impl PathStep {
    pub fn from_node(&self) -> EntityId {
        if self.forward {
            self.triple.head
        } else {
            self.triple.tail
        }
    }

    pub fn to_node(&self) -> EntityId {
        if self.forward {
            self.triple.tail
        } else {
            self.triple.head
        }
    }
}

/// An ordered chain of triples connecting two key entities. Node sequences
/// are simple (no repeats); `avg_pr` is filled by the ranker.
#[derive(Debug, Clone, PartialEq)]
pub struct ReasoningPath {
    pub steps: Vec<PathStep>,
    pub nodes: Vec<EntityId>,
    pub key_count: usize,
    pub avg_pr: Option<Score>,
}

impl ReasoningPath {
    fn from_steps(start: EntityId, steps: Vec<PathStep>) -> Self {
        let mut nodes = Vec::with_capacity(steps.len() + 1);
        nodes.push(start);
        for s in &steps {
            nodes.push(s.to_node());
        }
        Self {
            steps,
            nodes,
            key_count: 0,
            avg_pr: None,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn start(&self) -> EntityId {
        self.nodes[0]
    }

    pub fn end(&self) -> EntityId {
        *self.nodes.last().unwrap()
    }

    pub fn contains_triple(&self, t: &Triple) -> bool {
        self.steps.iter().any(|s| s.triple == *t)
    }

    /// Count how many of `keys` lie on this path.
    pub fn count_keys(&mut self, keys: &BTreeSet<EntityId>) {
        self.key_count = self.nodes.iter().filter(|n| keys.contains(n)).count();
    }

    /// Lexicographic path order: node surfaces, then relation surfaces,
    /// then traversal directions. This is the tie-break inside ranking
    /// buckets.
    pub fn lex_key(&self, g: &KnowledgeGraph) -> PathLexKey {
        (
            self.nodes
                .iter()
                .map(|&n| g.entity_surface(n).to_string())
                .collect(),
            self.steps
                .iter()
                .map(|s| g.relation_surface(s.triple.relation).to_string())
                .collect(),
            self.steps.iter().map(|s| !s.forward).collect(),
        )
    }

    /// Enumeration order of path search: shortest first, then lexicographic.
    pub fn sort_key(&self, g: &KnowledgeGraph) -> (usize, PathLexKey) {
        (self.len(), self.lex_key(g))
    }

    /// Render as `a -[r]-> b <-[s]- c`.
    pub fn render(&self, g: &KnowledgeGraph) -> String {
        let mut out = g.entity_surface(self.start()).to_string();
        for s in &self.steps {
            let rel = g.relation_surface(s.triple.relation);
            if s.forward {
                out.push_str(&format!(" -[{rel}]-> "));
            } else {
                out.push_str(&format!(" <-[{rel}]- "));
            }
            out.push_str(g.entity_surface(s.to_node()));
        }
        out
    }
}

/// Result of a single-pair path search.
#[derive(Debug, Clone)]
pub struct PathSearch {
    pub paths: Vec<ReasoningPath>,
    /// True when the cap cut the enumeration short.
    pub truncated: bool,
}

// Per-node expansion lists under the traversal mode, memoized per search
// and held in canonical order: (other-entity surface, relation surface,
// forward-before-reverse).
struct Expansions {
    directed: bool,
    memo: std::collections::HashMap<EntityId, std::rc::Rc<Vec<PathStep>>>,
}

impl Expansions {
    fn new(directed: bool) -> Self {
        Self {
            directed,
            memo: std::collections::HashMap::new(),
        }
    }

    fn get(&mut self, g: &KnowledgeGraph, u: EntityId) -> std::rc::Rc<Vec<PathStep>> {
        if let Some(steps) = self.memo.get(&u) {
            return steps.clone();
        }
        let mut steps: Vec<PathStep> = g
            .out_edges(u)
            .iter()
            .map(|&(r, t)| PathStep {
                triple: Triple::new(u, r, t),
                forward: true,
            })
            .collect();
        if !self.directed {
            steps.extend(g.in_edges(u).iter().map(|&(r, h)| PathStep {
                triple: Triple::new(h, r, u),
                forward: false,
            }));
        }
        steps.retain(|s| !s.triple.is_self_loop());
        steps.sort_by(|a, b| {
            let ka = (
                g.entity_surface(a.to_node()),
                g.relation_surface(a.triple.relation),
                !a.forward,
            );
            let kb = (
                g.entity_surface(b.to_node()),
                g.relation_surface(b.triple.relation),
                !b.forward,
            );
            ka.cmp(&kb)
        });
        let rc = std::rc::Rc::new(steps);
        self.memo.insert(u, rc.clone());
        rc
    }
}

struct PairSearch<'a> {
    g: &'a KnowledgeGraph,
    expansions: &'a mut Expansions,
    target: EntityId,
    target_len: usize,
    cap: usize,
    found: Vec<Vec<PathStep>>,
    truncated: bool,
}

impl PairSearch<'_> {
    // Depth-limited DFS emitting simple paths of exactly `target_len`.
    // Returns false when the cap aborted the search.
    fn dfs(&mut self, u: EntityId, steps: &mut Vec<PathStep>, visited: &mut Vec<EntityId>) -> bool {
        if steps.len() == self.target_len {
            if u == self.target {
                if self.found.len() == self.cap {
                    self.truncated = true;
                    return false;
                }
                self.found.push(steps.clone());
            }
            return true;
        }
        // a simple path cannot pass through its own endpoint
        if u == self.target {
            return true;
        }
        let expansion = self.expansions.get(self.g, u);
        for &step in expansion.iter() {
            let next = step.to_node();
            if visited.contains(&next) {
                continue;
            }
            steps.push(step);
            visited.push(next);
            let keep_going = self.dfs(next, steps, visited);
            visited.pop();
            steps.pop();
            if !keep_going {
                return false;
            }
        }
        true
    }
}

/// All simple paths from `a` to `b` with at most `max_hop` edges, sorted
/// shortest-first then lexicographically; enumeration stops at `cap` paths
/// with the truncation flagged.
pub fn find_paths_between(
    g: &KnowledgeGraph,
    a: EntityId,
    b: EntityId,
    max_hop: usize,
    cap: usize,
    directed: bool,
) -> Result<PathSearch> {
    if a == b {
        return Err(RokError::DegeneratePair(g.entity_surface(a).to_string()));
    }
    for e in [a, b] {
        if e.index() >= g.entity_count() {
            return Err(RokError::UnknownEntity(format!("#{}", e.0)));
        }
    }
    if max_hop == 0 || cap == 0 {
        return Err(RokError::InvalidInput(
            "max_hop and cap must be at least 1".into(),
        ));
    }

    let mut expansions = Expansions::new(directed);
    let mut all: Vec<ReasoningPath> = Vec::new();
    let mut truncated = false;
    for target_len in 1..=max_hop {
        let mut search = PairSearch {
            g,
            expansions: &mut expansions,
            target: b,
            target_len,
            cap: cap - all.len(),
            found: Vec::new(),
            truncated: false,
        };
        let completed = search.dfs(a, &mut Vec::new(), &mut vec![a]);
        let was_truncated = search.truncated;
        let mut level: Vec<ReasoningPath> = search
            .found
            .into_iter()
            .map(|steps| ReasoningPath::from_steps(a, steps))
            .collect();
        level.sort_by_key(|p| p.sort_key(g));
        all.extend(level);
        if was_truncated || !completed {
            truncated = true;
            break;
        }
    }
    Ok(PathSearch {
        paths: all,
        truncated,
    })
}

/// Deduplicated union of candidate-path triples plus the induced node set.
#[derive(Debug, Clone, Default)]
pub struct Subgraph {
    pub triples: Vec<Triple>,
    pub nodes: Vec<EntityId>,
}

impl Subgraph {
    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> Self {
        let set: BTreeSet<Triple> = triples.into_iter().collect();
        let mut nodes = BTreeSet::new();
        for t in &set {
            nodes.insert(t.head);
            nodes.insert(t.tail);
        }
        Self {
            triples: set.into_iter().collect(),
            nodes: nodes.into_iter().collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

/// One round of the frontier iteration: which source searched, and which
/// remaining candidates it reached.
#[derive(Debug, Clone)]
pub struct FrontierRound {
    pub source: EntityId,
    pub matched: Vec<EntityId>,
}

/// Output of [`gen_main_candidates`].
#[derive(Debug, Clone)]
pub struct MainPaths {
    pub candidates: Vec<ReasoningPath>,
    pub subgraph: Subgraph,
    pub rounds: Vec<FrontierRound>,
    pub truncated: bool,
}

/// Frontier iteration over the candidate entity set.
///
/// The first candidate searches for paths to every remaining candidate;
/// reached candidates join a queue of future sources in discovery order,
/// and a candidate leaves the set once it has been used as a source. When
/// the queue drains with candidates still unprocessed (disconnected
/// components), the next remaining candidate reseeds it. With a single
/// candidate the result is its one-hop triples as the subgraph and no
/// candidate paths.
pub fn gen_main_candidates(
    g: &KnowledgeGraph,
    e_cand: &[EntityId],
    max_hop: usize,
    cap: usize,
    directed: bool,
) -> Result<MainPaths> {
    if e_cand.is_empty() {
        return Err(RokError::InvalidInput(
            "candidate entity set is empty".into(),
        ));
    }
    let keys: BTreeSet<EntityId> = e_cand.iter().copied().collect();

    if e_cand.len() == 1 {
        let one_hop = g.one_hop_triples(e_cand[0])?;
        return Ok(MainPaths {
            candidates: Vec::new(),
            subgraph: Subgraph::from_triples(one_hop),
            rounds: Vec::new(),
            truncated: false,
        });
    }

    let mut remaining: Vec<EntityId> = Vec::new();
    for &e in e_cand {
        if !remaining.contains(&e) {
            remaining.push(e);
        }
    }
    let mut frontier: VecDeque<EntityId> = VecDeque::new();
    let mut queued: BTreeSet<EntityId> = BTreeSet::new();
    let mut candidates: Vec<ReasoningPath> = Vec::new();
    let mut triples: BTreeSet<Triple> = BTreeSet::new();
    let mut rounds: Vec<FrontierRound> = Vec::new();
    let mut truncated = false;

    while !remaining.is_empty() {
        let source = loop {
            match frontier.pop_front() {
                Some(e) if remaining.contains(&e) => break Some(e),
                Some(_) => continue,
                None => break None,
            }
        }
        .unwrap_or(remaining[0]);

        let mut matched = Vec::new();
        for &target in remaining.iter().filter(|&&t| t != source) {
            let search = find_paths_between(g, source, target, max_hop, cap, directed)?;
            truncated |= search.truncated;
            if !search.paths.is_empty() {
                matched.push(target);
            }
            for mut p in search.paths {
                p.count_keys(&keys);
                for s in &p.steps {
                    triples.insert(s.triple);
                }
                candidates.push(p);
            }
        }
        remaining.retain(|&e| e != source);
        for &m in &matched {
            if queued.insert(m) {
                frontier.push_back(m);
            }
        }
        rounds.push(FrontierRound { source, matched });
    }

    Ok(MainPaths {
        candidates,
        subgraph: Subgraph::from_triples(triples),
        rounds,
        truncated,
    })
}

/// A first-order neighbor triple of a key entity, with its source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborTriple {
    pub triple: Triple,
    pub source: EntityId,
}

/// Collect the off-path first-order neighborhood of the key entities.
///
/// Triples already on a selected main path are dropped, and the
/// same-relation rule applies: when a key entity reaches some main-path
/// node through relation R, its other R-neighbors that are off the main
/// paths are dropped too. A triple incident to several key entities is
/// attributed to the first one in candidate order.
pub fn gen_neighbor_candidates(
    g: &KnowledgeGraph,
    e_cand: &[EntityId],
    main: &[ReasoningPath],
) -> Result<Vec<NeighborTriple>> {
    let main_triples: BTreeSet<Triple> = main
        .iter()
        .flat_map(|p| p.steps.iter().map(|s| s.triple))
        .collect();
    let main_nodes: BTreeSet<EntityId> =
        main.iter().flat_map(|p| p.nodes.iter().copied()).collect();

    let mut kept: Vec<NeighborTriple> = Vec::new();
    let mut seen: BTreeSet<Triple> = BTreeSet::new();

    for &key in e_cand {
        let incident = g.one_hop_triples(key)?;
        // relations through which this key entity touches a main-path node
        let shadowing: BTreeSet<_> = incident
            .iter()
            .filter(|t| {
                t.other_end(key)
                    .map(|o| main_nodes.contains(&o))
                    .unwrap_or(false)
            })
            .map(|t| t.relation)
            .collect();
        for t in incident {
            if main_triples.contains(&t) {
                continue;
            }
            let other = match t.other_end(key) {
                Some(o) => o,
                None => continue,
            };
            if shadowing.contains(&t.relation) && !main_nodes.contains(&other) {
                continue;
            }
            if seen.insert(t) {
                kept.push(NeighborTriple {
                    triple: t,
                    source: key,
                });
            }
        }
    }
    Ok(kept)
}
