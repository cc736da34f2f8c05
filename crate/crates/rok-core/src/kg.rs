//! In-memory triple store with entity/relation catalogs and adjacency
//! indexes.
//!
//! Graphs are loaded from flat files (TSV or JSON-lines), deduplicated, and
//! frozen: after [`load_graph`] returns, a [`KnowledgeGraph`] is never
//! mutated, so it can be shared freely across concurrent pipeline runs.
//!
//! Entity and relation identity is the normalized surface form (see
//! [`crate::linker::normalize`]); the first raw spelling seen in the input
//! is kept as the canonical display surface.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RokError};
use crate::linker::normalize;

/// Dense handle into the entity catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub u32);

/// Dense handle into the relation catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// One directed (head, relation, tail) fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }

    pub fn is_self_loop(self) -> bool {
        self.head == self.tail
    }

    /// The endpoint opposite to `e`, if `e` is incident to this triple.
    pub fn other_end(self, e: EntityId) -> Option<EntityId> {
        if self.head == e {
            Some(self.tail)
        } else if self.tail == e {
            Some(self.head)
        } else {
            None
        }
    }
}

/// Supported triple-file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphFormat {
    /// `head\trelation\ttail`, one triple per line, no header.
    Tsv,
    /// One JSON object per line with keys `h`, `r`, `t`.
    JsonLines,
}

impl GraphFormat {
    /// Guess the format from a file extension; TSV is the default.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") | Some("ndjson") => GraphFormat::JsonLines,
            _ => GraphFormat::Tsv,
        }
    }
}

#[derive(Debug, Deserialize)]
struct JsonTriple {
    h: String,
    r: String,
    t: String,
}

/// Load-time counters.
#[derive(Debug, Clone, Default, Serialize)]
pub struct LoadReport {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
    pub duplicates_dropped: usize,
}

/// Structural findings over a loaded graph; never mutates anything.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub self_loops: Vec<Triple>,
    pub isolated_entities: Vec<EntityId>,
    pub dangling_relations: Vec<RelationId>,
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
}

/// Immutable indexed triple store.
pub struct KnowledgeGraph {
    entity_surfaces: Vec<String>,
    entity_norms: Vec<String>,
    entity_index: HashMap<String, EntityId>,
    relation_surfaces: Vec<String>,
    relation_index: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    out_adj: Vec<Vec<(RelationId, EntityId)>>,
    in_adj: Vec<Vec<(RelationId, EntityId)>>,
}

impl fmt::Debug for KnowledgeGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KnowledgeGraph")
            .field("entities", &self.entity_surfaces.len())
            .field("relations", &self.relation_surfaces.len())
            .field("triples", &self.triples.len())
            .finish()
    }
}

/// Accumulates triples before freezing them into a [`KnowledgeGraph`].
#[derive(Default)]
pub struct GraphBuilder {
    entity_surfaces: Vec<String>,
    entity_norms: Vec<String>,
    entity_index: HashMap<String, EntityId>,
    relation_surfaces: Vec<String>,
    relation_index: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    duplicates: usize,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register an entity (used for catalog-only entities; triples register
    /// their endpoints automatically). Returns its id.
    pub fn add_entity(&mut self, surface: &str) -> Result<EntityId> {
        let raw = surface.trim();
        let norm = normalize(raw);
        if norm.is_empty() {
            return Err(RokError::InvalidInput(format!(
                "entity surface '{surface}' normalizes to empty"
            )));
        }
        if let Some(&id) = self.entity_index.get(&norm) {
            return Ok(id);
        }
        let id = EntityId(self.entity_surfaces.len() as u32);
        self.entity_surfaces.push(raw.to_string());
        self.entity_norms.push(norm.clone());
        self.entity_index.insert(norm, id);
        Ok(id)
    }

    fn add_relation(&mut self, surface: &str) -> Result<RelationId> {
        let raw = surface.trim();
        let norm = normalize(raw);
        if norm.is_empty() {
            return Err(RokError::InvalidInput(format!(
                "relation surface '{surface}' normalizes to empty"
            )));
        }
        if let Some(&id) = self.relation_index.get(&norm) {
            return Ok(id);
        }
        let id = RelationId(self.relation_surfaces.len() as u32);
        self.relation_surfaces.push(raw.to_string());
        self.relation_index.insert(norm, id);
        Ok(id)
    }

    /// Add one triple by surface strings; duplicates (after normalization)
    /// are counted and dropped.
    pub fn add_triple(&mut self, head: &str, relation: &str, tail: &str) -> Result<()> {
        let h = self.add_entity(head)?;
        let r = self.add_relation(relation)?;
        let t = self.add_entity(tail)?;
        let triple = Triple::new(h, r, t);
        if self.triple_set.insert(triple) {
            self.triples.push(triple);
        } else {
            self.duplicates += 1;
        }
        Ok(())
    }

    pub fn build(self) -> Result<(KnowledgeGraph, LoadReport)> {
        if self.triples.is_empty() && self.entity_surfaces.is_empty() {
            return Err(RokError::EmptyGraph);
        }
        let n = self.entity_surfaces.len();
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        for t in &self.triples {
            out_adj[t.head.index()].push((t.relation, t.tail));
            in_adj[t.tail.index()].push((t.relation, t.head));
        }
        for adj in out_adj.iter_mut().chain(in_adj.iter_mut()) {
            adj.sort_unstable();
        }
        let report = LoadReport {
            entities: n,
            relations: self.relation_surfaces.len(),
            triples: self.triples.len(),
            duplicates_dropped: self.duplicates,
        };
        let graph = KnowledgeGraph {
            entity_surfaces: self.entity_surfaces,
            entity_norms: self.entity_norms,
            entity_index: self.entity_index,
            relation_surfaces: self.relation_surfaces,
            relation_index: self.relation_index,
            triples: self.triples,
            triple_set: self.triple_set,
            out_adj,
            in_adj,
        };
        Ok((graph, report))
    }
}

fn check_field(line_no: usize, field: &str, name: &str) -> Result<()> {
    if field.trim().is_empty() {
        return Err(RokError::Parse {
            line: line_no,
            msg: format!("empty {name} field"),
        });
    }
    if field.contains('\t') || field.contains('\n') || field.contains('\r') {
        return Err(RokError::Parse {
            line: line_no,
            msg: format!("{name} field contains a control character"),
        });
    }
    Ok(())
}

/// Parse triples from a reader into a builder. Blank lines are skipped;
/// malformed lines fail with their 1-based line number.
fn read_into(builder: &mut GraphBuilder, reader: impl Read, format: GraphFormat) -> Result<()> {
    let reader = BufReader::new(reader);
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        match format {
            GraphFormat::Tsv => {
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() != 3 {
                    return Err(RokError::Parse {
                        line: line_no,
                        msg: format!("expected 3 tab-separated fields, got {}", fields.len()),
                    });
                }
                for (field, name) in fields.iter().zip(["head", "relation", "tail"]) {
                    check_field(line_no, field, name)?;
                }
                builder.add_triple(fields[0], fields[1], fields[2])?;
            }
            GraphFormat::JsonLines => {
                let parsed: JsonTriple =
                    serde_json::from_str(line).map_err(|e| RokError::Parse {
                        line: line_no,
                        msg: e.to_string(),
                    })?;
                check_field(line_no, &parsed.h, "head")?;
                check_field(line_no, &parsed.r, "relation")?;
                check_field(line_no, &parsed.t, "tail")?;
                builder.add_triple(&parsed.h, &parsed.r, &parsed.t)?;
            }
        }
    }
    Ok(())
}

/// Load and index a knowledge graph from a triple file.
pub fn load_graph(path: &Path, format: GraphFormat) -> Result<(KnowledgeGraph, LoadReport)> {
    let file = fs::File::open(path)?;
    let mut builder = GraphBuilder::new();
    read_into(&mut builder, file, format)?;
    if builder.triples.is_empty() {
        return Err(RokError::EmptyGraph);
    }
    builder.build()
}

/// Load a graph from an in-memory string (same semantics as [`load_graph`]).
pub fn load_graph_str(text: &str, format: GraphFormat) -> Result<(KnowledgeGraph, LoadReport)> {
    let mut builder = GraphBuilder::new();
    read_into(&mut builder, text.as_bytes(), format)?;
    if builder.triples.is_empty() {
        return Err(RokError::EmptyGraph);
    }
    builder.build()
}

impl KnowledgeGraph {
    pub fn entity_count(&self) -> usize {
        self.entity_surfaces.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relation_surfaces.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn contains_triple(&self, t: &Triple) -> bool {
        self.triple_set.contains(t)
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = EntityId> + '_ {
        (0..self.entity_surfaces.len() as u32).map(EntityId)
    }

    /// Canonical display surface of an entity.
    pub fn entity_surface(&self, e: EntityId) -> &str {
        &self.entity_surfaces[e.index()]
    }

    /// Normalized surface of an entity (the identity key).
    pub fn entity_norm(&self, e: EntityId) -> &str {
        &self.entity_norms[e.index()]
    }

    pub fn relation_surface(&self, r: RelationId) -> &str {
        &self.relation_surfaces[r.index()]
    }

    /// Look up an entity by name; the query is normalized first.
    pub fn entity_by_name(&self, name: &str) -> Option<EntityId> {
        self.entity_index.get(&normalize(name)).copied()
    }

    pub fn relation_by_name(&self, name: &str) -> Option<RelationId> {
        self.relation_index.get(&normalize(name)).copied()
    }

    fn check_entity(&self, e: EntityId) -> Result<()> {
        if e.index() >= self.entity_surfaces.len() {
            return Err(RokError::UnknownEntity(format!("#{}", e.0)));
        }
        Ok(())
    }

    /// Outgoing edges of `e` as `(relation, tail)` pairs, sorted by id.
    pub fn out_edges(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.out_adj[e.index()]
    }

    /// Incoming edges of `e` as `(relation, head)` pairs, sorted by id.
    pub fn in_edges(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.in_adj[e.index()]
    }

    /// All triples incident to `e` (either direction), each in its stored
    /// orientation, sorted by (head, relation, tail) ids. A self-loop
    /// appears once.
    pub fn one_hop_triples(&self, e: EntityId) -> Result<Vec<Triple>> {
        self.check_entity(e)?;
        let mut set: Vec<Triple> = self.out_adj[e.index()]
            .iter()
            .map(|&(r, t)| Triple::new(e, r, t))
            .chain(
                self.in_adj[e.index()]
                    .iter()
                    .map(|&(r, h)| Triple::new(h, r, e)),
            )
            .collect();
        set.sort_unstable();
        set.dedup();
        Ok(set)
    }

    /// Structural report: self-loops, isolated catalog entities, relations
    /// with no triples.
    pub fn validate(&self) -> ValidationReport {
        let self_loops: Vec<Triple> = self
            .triples
            .iter()
            .copied()
            .filter(|t| t.is_self_loop())
            .collect();
        let isolated_entities: Vec<EntityId> = self
            .entity_ids()
            .filter(|e| self.out_adj[e.index()].is_empty() && self.in_adj[e.index()].is_empty())
            .collect();
        let mut used = vec![false; self.relation_surfaces.len()];
        for t in &self.triples {
            used[t.relation.index()] = true;
        }
        let dangling_relations: Vec<RelationId> = (0..used.len() as u32)
            .map(RelationId)
            .filter(|r| !used[r.index()])
            .collect();
        ValidationReport {
            self_loops,
            isolated_entities,
            dangling_relations,
            entities: self.entity_count(),
            relations: self.relation_count(),
            triples: self.triple_count(),
        }
    }

    /// Serialize the triple set back to TSV, one triple per line in load
    /// order. Reloading the output yields an identical triple set.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(self.entity_surface(t.head));
            out.push('\t');
            out.push_str(self.relation_surface(t.relation));
            out.push('\t');
            out.push_str(self.entity_surface(t.tail));
            out.push('\n');
        }
        out
    }

    /// `"(head, relation, tail)"` with canonical surfaces.
    pub fn render_triple(&self, t: &Triple) -> String {
        format!(
            "({}, {}, {})",
            self.entity_surface(t.head),
            self.relation_surface(t.relation),
            self.entity_surface(t.tail)
        )
    }
}
