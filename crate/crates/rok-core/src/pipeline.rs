//! End-to-end question flow: CoT expansion, entity extraction, linking,
//! main-path generation and ranking, one batched neighbor filter, and the
//! final answer — all captured in an auditable record.
//!
//! Stage failures degrade instead of aborting: a question that cannot be
//! linked still receives a final answer over empty context, flagged as
//! degraded, so batch evaluation can separate the failure modes. Only an
//! exhausted call budget stops a run early (with a partial record).
//!
//! With a scripted mock backend the whole flow is byte-deterministic;
//! timing measurements are kept in memory but never serialized.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Result, RokError};
use crate::kg::KnowledgeGraph;
use crate::linker::{self, normalize, LinkedEntity, LinkedEntitySet, MentionSet, MentionSource};
use crate::llm::{
    self, LlmBackend, LlmCall, LlmTranscript, PromptTemplate, TemplateId, TemplateSet,
};
use crate::paths::{self, NeighborTriple, ReasoningPath};
use crate::ranker;
use crate::Score;

/// Gold answer entities by category; every list may be empty.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct GoldLabels {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub disease: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub medication: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub test: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub open: Vec<String>,
}

impl GoldLabels {
    pub fn is_empty(&self) -> bool {
        self.disease.is_empty()
            && self.medication.is_empty()
            && self.test.is_empty()
            && self.open.is_empty()
    }

    /// Union of all categories.
    pub fn all(&self) -> Vec<&str> {
        self.disease
            .iter()
            .chain(&self.medication)
            .chain(&self.test)
            .chain(&self.open)
            .map(String::as_str)
            .collect()
    }
}

/// One input question, optionally with gold labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<GoldLabels>,
}

impl QuestionRecord {
    pub fn new(id: impl Into<String>, question: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            question: question.into(),
            gold: None,
        }
    }
}

/// A selected main path, rendered for the record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenderedPath {
    pub text: String,
    pub nodes: Vec<String>,
    pub key_count: usize,
    pub avg_pr: Option<Score>,
}

/// An accepted neighbor triple, rendered for the record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenderedNeighbor {
    pub text: String,
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub source: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: &'static str,
    pub millis: f64,
}

/// Complete, auditable outcome of one question run. Timing lives only in
/// memory so serialized records stay byte-identical across runs.
#[derive(Debug, Clone, Serialize)]
pub struct AnswerRecord {
    pub id: String,
    pub question: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gold: Option<GoldLabels>,
    pub answer: String,
    pub degraded: bool,
    pub degradation_reasons: Vec<String>,
    pub linked_entities: Vec<LinkedEntity>,
    pub unmatched_mentions: Vec<String>,
    pub main_paths: Vec<RenderedPath>,
    pub neighbor_triples: Vec<RenderedNeighbor>,
    pub warnings: Vec<String>,
    pub transcript: Vec<LlmCall>,
    #[serde(skip)]
    pub stage_timing: Vec<StageTiming>,
}

impl AnswerRecord {
    fn new(q: &QuestionRecord) -> Self {
        Self {
            id: q.id.clone(),
            question: q.question.clone(),
            gold: q.gold.clone().filter(|g| !g.is_empty()),
            answer: String::new(),
            degraded: false,
            degradation_reasons: Vec::new(),
            linked_entities: Vec::new(),
            unmatched_mentions: Vec::new(),
            main_paths: Vec::new(),
            neighbor_triples: Vec::new(),
            warnings: Vec::new(),
            transcript: Vec::new(),
            stage_timing: Vec::new(),
        }
    }

    fn degrade(&mut self, reason: impl Into<String>) {
        self.degraded = true;
        self.degradation_reasons.push(reason.into());
    }

    pub fn transcript_ids(&self) -> Vec<TemplateId> {
        self.transcript.iter().map(|c| c.template).collect()
    }
}

/// Render the selected main paths as a prompt block (one path per line).
pub fn serialize_main_paths(paths: &[ReasoningPath], g: &KnowledgeGraph) -> String {
    let mut lines = vec!["Main reasoning paths:".to_string()];
    if paths.is_empty() {
        lines.push("(none)".to_string());
    } else {
        lines.extend(paths.iter().map(|p| p.render(g)));
    }
    lines.join("\n")
}

/// Render the accepted neighbor triples as a prompt block.
pub fn serialize_neighbor_triples(neighbors: &[NeighborTriple], g: &KnowledgeGraph) -> String {
    let mut lines = vec!["Neighbor triples:".to_string()];
    if neighbors.is_empty() {
        lines.push("(none)".to_string());
    } else {
        lines.extend(neighbors.iter().map(|n| g.render_triple(&n.triple)));
    }
    lines.join("\n")
}

/// Both context blocks as one prompt-ready text, in selection order.
pub fn serialize_paths(
    paths: &[ReasoningPath],
    neighbors: &[NeighborTriple],
    g: &KnowledgeGraph,
) -> String {
    format!(
        "{}\n\n{}",
        serialize_main_paths(paths, g),
        serialize_neighbor_triples(neighbors, g)
    )
}

// Match the filter response's kept triples back to the candidate set by
// normalized (head, relation, tail) equality; anything unparseable or
// unknown is dropped with a warning.
fn match_filter_response(
    response: &str,
    candidates: &[NeighborTriple],
    g: &KnowledgeGraph,
    warnings: &mut Vec<String>,
) -> Vec<NeighborTriple> {
    let mut index: BTreeMap<(String, String, String), usize> = BTreeMap::new();
    for (i, n) in candidates.iter().enumerate() {
        index.insert(
            (
                g.entity_norm(n.triple.head).to_string(),
                normalize(g.relation_surface(n.triple.relation)),
                g.entity_norm(n.triple.tail).to_string(),
            ),
            i,
        );
    }
    let mut accepted: BTreeSet<usize> = BTreeSet::new();
    for raw_line in response.lines() {
        let line = llm::strip_list_marker(raw_line.trim());
        if line.is_empty() || line == "(none)" {
            continue;
        }
        let inner = match line.strip_prefix('(').and_then(|s| s.strip_suffix(')')) {
            Some(inner) => inner,
            None => {
                warnings.push(format!("filter response line not a triple: '{raw_line}'"));
                continue;
            }
        };
        let fields: Vec<&str> = inner.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            warnings.push(format!("filter response line not a triple: '{raw_line}'"));
            continue;
        }
        let key = (
            normalize(fields[0]),
            normalize(fields[1]),
            normalize(fields[2]),
        );
        match index.get(&key) {
            Some(&i) => {
                accepted.insert(i);
            }
            None => warnings.push(format!(
                "filter response kept a triple that was not a candidate: '{raw_line}'"
            )),
        }
    }
    accepted
        .into_iter()
        .map(|i| candidates[i].clone())
        .collect()
}

/// Shared context for running questions against one graph and backend.
pub struct Pipeline<'a> {
    pub graph: &'a KnowledgeGraph,
    pub config: &'a RunConfig,
    pub backend: &'a dyn LlmBackend,
    pub templates: TemplateSet,
}

impl<'a> Pipeline<'a> {
    /// Build a pipeline, loading template overrides when configured.
    pub fn new(
        graph: &'a KnowledgeGraph,
        config: &'a RunConfig,
        backend: &'a dyn LlmBackend,
    ) -> Result<Self> {
        let templates = match &config.llm.templates {
            Some(path) => TemplateSet::from_json_file(path)?,
            None => TemplateSet::default(),
        };
        Ok(Self {
            graph,
            config,
            backend,
            templates,
        })
    }

    fn bindings<'b>(pairs: &[(&'b str, String)]) -> std::collections::HashMap<&'b str, String> {
        pairs.iter().cloned().collect()
    }

    // One budgeted LLM stage. Non-budget failures degrade the record and
    // yield None; budget exhaustion propagates and aborts the run.
    fn stage_call(
        &self,
        transcript: &mut LlmTranscript,
        template: &PromptTemplate,
        bindings: &std::collections::HashMap<&str, String>,
        rec: &mut AnswerRecord,
        stage: &str,
    ) -> Result<Option<String>> {
        match llm::call(self.backend, transcript, template, bindings) {
            Ok(resp) => Ok(Some(resp)),
            Err(e @ RokError::BudgetExhausted(_)) => Err(e),
            Err(e) => {
                rec.degrade(format!("llm_stage_failed:{stage}"));
                rec.warnings.push(e.to_string());
                Ok(None)
            }
        }
    }

    /// Run the full flow for one question. All stage errors are captured
    /// in the returned record.
    pub fn run_question(&self, q: &QuestionRecord) -> AnswerRecord {
        let mut rec = AnswerRecord::new(q);
        if q.question.trim().is_empty() {
            rec.degrade("empty_question");
        }
        let mut transcript = LlmTranscript::new(self.config.llm.budget);
        if let Err(e) = self.drive(q, &mut rec, &mut transcript) {
            match e {
                RokError::BudgetExhausted(_) => {
                    rec.degrade("budget_exhausted");
                    rec.warnings.push(e.to_string());
                }
                other => {
                    rec.degrade("pipeline_error");
                    rec.warnings.push(other.to_string());
                }
            }
        }
        rec.transcript = transcript.calls().to_vec();
        rec
    }

    fn drive(
        &self,
        q: &QuestionRecord,
        rec: &mut AnswerRecord,
        transcript: &mut LlmTranscript,
    ) -> Result<()> {
        let cfg = self.config;
        let g = self.graph;

        // stages 1-2: expand the question and collect mention strings
        let started = Instant::now();
        let raw_mentions: Vec<String> = if cfg.llm.merged_expand_extract {
            let merged = PromptTemplate::new(
                TemplateId::CotExpand,
                format!(
                    "{}{}",
                    self.templates.cot_expand.text, self.templates.extract_entities.text
                ),
            );
            let bindings = Self::bindings(&[
                ("question", q.question.clone()),
                ("text", "the reasoning process above".to_string()),
            ]);
            match self.stage_call(transcript, &merged, &bindings, rec, "cot_expand")? {
                Some(resp) => llm::parse_entity_list(&resp),
                None => Vec::new(),
            }
        } else {
            let bindings = Self::bindings(&[("question", q.question.clone())]);
            let cot_text = self
                .stage_call(
                    transcript,
                    &self.templates.cot_expand,
                    &bindings,
                    rec,
                    "cot_expand",
                )?
                .unwrap_or_default();
            let extract_input = format!("{}\n{}", q.question, cot_text);
            let bindings = Self::bindings(&[("text", extract_input)]);
            match self.stage_call(
                transcript,
                &self.templates.extract_entities,
                &bindings,
                rec,
                "extract_entities",
            )? {
                Some(resp) => llm::parse_entity_list(&resp),
                None => Vec::new(),
            }
        };
        let question_norm = normalize(&q.question);
        let mentions = MentionSet::new(raw_mentions.into_iter().map(|m| {
            let source = if linker::contains_whole_token(&question_norm, &normalize(&m)) {
                MentionSource::Question
            } else {
                MentionSource::Cot
            };
            (m, source)
        }));
        rec.stage_timing.push(StageTiming {
            stage: "expand_extract",
            millis: started.elapsed().as_secs_f64() * 1e3,
        });

        // stage 3: link mentions to the graph
        let started = Instant::now();
        let linked = match linker::link(&mentions, g, cfg.linker.threshold) {
            Ok(l) => l,
            Err(e) => {
                rec.degrade("link_failed");
                rec.warnings.push(e.to_string());
                LinkedEntitySet::default()
            }
        };
        rec.linked_entities = linked.entities.clone();
        rec.unmatched_mentions = linked.unmatched.clone();
        rec.stage_timing.push(StageTiming {
            stage: "link",
            millis: started.elapsed().as_secs_f64() * 1e3,
        });

        if linked.is_empty() {
            // nothing to search from: answer over empty context
            rec.degrade("no_linked_entities");
            self.final_stage(q, rec, transcript, &[], &[])?;
            return Ok(());
        }

        // stages 4-5: candidate paths, PageRank, bucket selection
        let started = Instant::now();
        let e_cand = linked.ids();
        let main_out = paths::gen_main_candidates(
            g,
            &e_cand,
            cfg.paths.max_hop,
            cfg.paths.cap,
            cfg.paths.directed,
        )?;
        if main_out.truncated {
            rec.warnings.push(format!(
                "path enumeration truncated at cap {}",
                cfg.paths.cap
            ));
        }
        let p_main: Vec<ReasoningPath> = if main_out.candidates.is_empty() {
            rec.degrade("no_main_paths");
            Vec::new()
        } else {
            let pr = ranker::pagerank::<Score>(
                &main_out.subgraph,
                cfg.ranker.damping,
                cfg.ranker.tol,
                cfg.ranker.max_iter,
                cfg.paths.directed,
            )?;
            if !pr.converged {
                rec.warnings.push(format!(
                    "pagerank stopped after {} iterations with residual {:e}",
                    pr.iterations, pr.residual
                ));
            }
            let scored = ranker::score_paths(main_out.candidates, &pr, g)?;
            ranker::bucket_select(scored, e_cand.len(), cfg.ranker.top_k, g)?
        };
        rec.stage_timing.push(StageTiming {
            stage: "paths_and_ranking",
            millis: started.elapsed().as_secs_f64() * 1e3,
        });

        // stage 6: neighbor branch, filtered by one batched call
        let started = Instant::now();
        let neighbor_candidates = paths::gen_neighbor_candidates(g, &e_cand, &p_main)?;
        let triples_block = if neighbor_candidates.is_empty() {
            "(none)".to_string()
        } else {
            neighbor_candidates
                .iter()
                .map(|n| g.render_triple(&n.triple))
                .collect::<Vec<_>>()
                .join("\n")
        };
        let bindings = Self::bindings(&[
            ("question", q.question.clone()),
            ("background", serialize_main_paths(&p_main, g)),
            ("triples", triples_block),
            ("one_shot", self.templates.one_shot.clone()),
        ]);
        let accepted = match self.stage_call(
            transcript,
            &self.templates.filter_triples,
            &bindings,
            rec,
            "filter_triples",
        )? {
            Some(resp) => match_filter_response(&resp, &neighbor_candidates, g, &mut rec.warnings),
            None => Vec::new(),
        };
        rec.stage_timing.push(StageTiming {
            stage: "neighbor_filter",
            millis: started.elapsed().as_secs_f64() * 1e3,
        });

        // stage 7: final answer over both context blocks
        self.final_stage(q, rec, transcript, &p_main, &accepted)?;
        Ok(())
    }

    fn final_stage(
        &self,
        q: &QuestionRecord,
        rec: &mut AnswerRecord,
        transcript: &mut LlmTranscript,
        p_main: &[ReasoningPath],
        accepted: &[NeighborTriple],
    ) -> Result<()> {
        let g = self.graph;
        let started = Instant::now();
        let bindings = Self::bindings(&[
            ("question", q.question.clone()),
            ("main_paths", serialize_main_paths(p_main, g)),
            ("neighbor_triples", serialize_neighbor_triples(accepted, g)),
        ]);
        if let Some(answer) = self.stage_call(
            transcript,
            &self.templates.final_answer,
            &bindings,
            rec,
            "final_answer",
        )? {
            rec.answer = answer;
        }
        rec.main_paths = p_main
            .iter()
            .map(|p| RenderedPath {
                text: p.render(g),
                nodes: p
                    .nodes
                    .iter()
                    .map(|&n| g.entity_surface(n).to_string())
                    .collect(),
                key_count: p.key_count,
                avg_pr: p.avg_pr,
            })
            .collect();
        rec.neighbor_triples = accepted
            .iter()
            .map(|n| RenderedNeighbor {
                text: g.render_triple(&n.triple),
                head: g.entity_surface(n.triple.head).to_string(),
                relation: g.relation_surface(n.triple.relation).to_string(),
                tail: g.entity_surface(n.triple.tail).to_string(),
                source: g.entity_surface(n.source).to_string(),
            })
            .collect();
        rec.stage_timing.push(StageTiming {
            stage: "final_answer",
            millis: started.elapsed().as_secs_f64() * 1e3,
        });
        Ok(())
    }

    /// Vanilla reference mode: a single final-answer call with no graph
    /// context at all.
    pub fn run_vanilla(&self, q: &QuestionRecord) -> AnswerRecord {
        let mut rec = AnswerRecord::new(q);
        let mut transcript = LlmTranscript::new(self.config.llm.budget);
        if let Err(e) = self.final_stage(q, &mut rec, &mut transcript, &[], &[]) {
            rec.degrade("budget_exhausted");
            rec.warnings.push(e.to_string());
        }
        rec.transcript = transcript.calls().to_vec();
        rec
    }

    /// Run a batch with per-question isolation; results come back in input
    /// order regardless of worker count.
    pub fn run_batch(&self, questions: &[QuestionRecord], jobs: usize) -> Vec<AnswerRecord> {
        if jobs > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .expect("worker pool");
            pool.install(|| {
                use rayon::prelude::*;
                questions.par_iter().map(|q| self.run_question(q)).collect()
            })
        } else {
            questions.iter().map(|q| self.run_question(q)).collect()
        }
    }
}

/// Read a questions file: one JSON object per line.
pub fn read_questions_jsonl(path: &Path) -> Result<Vec<QuestionRecord>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut q: QuestionRecord = serde_json::from_str(line).map_err(|e| RokError::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        if q.question.trim().is_empty() {
            return Err(RokError::Parse {
                line: idx + 1,
                msg: "question must be non-empty".to_string(),
            });
        }
        q.gold = q.gold.filter(|g| !g.is_empty());
        out.push(q);
    }
    Ok(out)
}

/// Serialize records as JSONL, one record per line, in input order.
pub fn records_to_jsonl(records: &[AnswerRecord]) -> Result<String> {
    let mut out = String::new();
    for rec in records {
        out.push_str(&serde_json::to_string(rec)?);
        out.push('\n');
    }
    Ok(out)
}

/// Deserializable mirror of [`AnswerRecord`] for reading batch output back
/// (evaluation does not need transcripts to be structurally identical).
#[derive(Debug, Clone, Deserialize)]
pub struct OutputRecord {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub gold: Option<GoldLabels>,
    pub answer: String,
    #[serde(default)]
    pub degraded: bool,
    #[serde(default)]
    pub degradation_reasons: Vec<String>,
}

/// Read batch output produced by [`records_to_jsonl`].
pub fn read_records_jsonl(path: &Path) -> Result<Vec<OutputRecord>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: OutputRecord = serde_json::from_str(line).map_err(|e| RokError::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{load_graph_str, GraphFormat};
    use crate::llm::MockBackend;

    fn toy_graph() -> KnowledgeGraph {
        load_graph_str(
            concat!(
                "hoarse voice\tis_symptom_of\tlaryngitis\n",
                "sore throat\tis_symptom_of\tlaryngitis\n",
                "laryngitis\trequires_test\tthroat swab\n",
                "laryngitis\ttreated_with\tibuprofen\n",
                "laryngitis\ttreated_with\tvoice rest\n",
            ),
            GraphFormat::Tsv,
        )
        .unwrap()
        .0
    }

    fn scripted() -> MockBackend {
        MockBackend::new()
            .with_default(TemplateId::CotExpand, "The symptoms point to laryngitis.")
            .with_default(
                TemplateId::ExtractEntities,
                "1. hoarse voice\n2. laryngitis",
            )
            .with_default(
                TemplateId::FilterTriples,
                "(laryngitis, treated_with, ibuprofen)",
            )
            .with_default(
                TemplateId::FinalAnswer,
                "You may have laryngitis; take ibuprofen and get a throat swab.",
            )
    }

    fn question() -> QuestionRecord {
        QuestionRecord::new("q1", "I have a hoarse voice.")
    }

    #[test]
    fn full_run_uses_all_four_stages_in_order() {
        let g = toy_graph();
        let cfg = RunConfig::default();
        let backend = scripted();
        let pipe = Pipeline::new(&g, &cfg, &backend).unwrap();
        let rec = pipe.run_question(&question());
        assert_eq!(
            rec.transcript_ids(),
            vec![
                TemplateId::CotExpand,
                TemplateId::ExtractEntities,
                TemplateId::FilterTriples,
                TemplateId::FinalAnswer,
            ]
        );
        assert!(!rec.degraded, "reasons: {:?}", rec.degradation_reasons);
        assert!(rec.answer.contains("laryngitis"));
        assert_eq!(rec.neighbor_triples.len(), 1);
        assert_eq!(rec.neighbor_triples[0].tail, "ibuprofen");
    }

    #[test]
    fn merged_mode_makes_three_calls_with_same_selection() {
        let g = toy_graph();
        let backend = scripted().with_default(
            TemplateId::CotExpand,
            // merged mode parses entities straight out of the single response
            "1. hoarse voice\n2. laryngitis",
        );
        let mut cfg = RunConfig::default();
        cfg.set(
            "llm.merged_expand_extract",
            "true",
            crate::config::Provenance::Flag,
        )
        .unwrap();
        let pipe = Pipeline::new(&g, &cfg, &backend).unwrap();
        let rec = pipe.run_question(&question());
        assert_eq!(
            rec.transcript_ids(),
            vec![
                TemplateId::CotExpand,
                TemplateId::FilterTriples,
                TemplateId::FinalAnswer,
            ]
        );

        let cfg_full = RunConfig::default();
        let backend_full = scripted();
        let pipe_full = Pipeline::new(&g, &cfg_full, &backend_full).unwrap();
        let rec_full = pipe_full.run_question(&question());
        let paths_merged: Vec<&str> = rec.main_paths.iter().map(|p| p.text.as_str()).collect();
        let paths_full: Vec<&str> = rec_full
            .main_paths
            .iter()
            .map(|p| p.text.as_str())
            .collect();
        assert_eq!(paths_merged, paths_full);
    }

    #[test]
    fn unlinkable_question_degrades_but_still_answers() {
        let g = toy_graph();
        let cfg = RunConfig::default();
        let backend = MockBackend::new()
            .with_default(TemplateId::CotExpand, "no medical content here")
            .with_default(TemplateId::ExtractEntities, "quantum flux\nwarp drive")
            .with_default(TemplateId::FinalAnswer, "I cannot tell from the data.");
        let pipe = Pipeline::new(&g, &cfg, &backend).unwrap();
        let rec = pipe.run_question(&QuestionRecord::new("q2", "Tell me about warp drives"));
        assert!(rec.degraded);
        assert!(rec
            .degradation_reasons
            .contains(&"no_linked_entities".to_string()));
        assert_eq!(
            rec.transcript_ids(),
            vec![
                TemplateId::CotExpand,
                TemplateId::ExtractEntities,
                TemplateId::FinalAnswer,
            ]
        );
        assert_eq!(rec.answer, "I cannot tell from the data.");
        assert!(rec.main_paths.is_empty());
    }

    #[test]
    fn budget_exhaustion_aborts_with_partial_record() {
        let g = toy_graph();
        let mut cfg = RunConfig::default();
        cfg.set("llm.budget", "2", crate::config::Provenance::Flag)
            .unwrap();
        let backend = scripted();
        let pipe = Pipeline::new(&g, &cfg, &backend).unwrap();
        let rec = pipe.run_question(&question());
        assert!(rec.degraded);
        assert!(rec
            .degradation_reasons
            .contains(&"budget_exhausted".to_string()));
        assert_eq!(rec.transcript.len(), 2);
        assert!(rec.answer.is_empty());
    }

    #[test]
    fn scripted_gap_mid_pipeline_degrades_that_stage() {
        let g = toy_graph();
        let cfg = RunConfig::default();
        // no filter_triples script: that stage fails, run continues
        let backend = MockBackend::new()
            .with_default(TemplateId::CotExpand, "laryngitis")
            .with_default(TemplateId::ExtractEntities, "hoarse voice, laryngitis")
            .with_default(TemplateId::FinalAnswer, "answer");
        let pipe = Pipeline::new(&g, &cfg, &backend).unwrap();
        let rec = pipe.run_question(&question());
        assert!(rec.degraded);
        assert!(rec
            .degradation_reasons
            .iter()
            .any(|r| r == "llm_stage_failed:filter_triples"));
        assert_eq!(rec.answer, "answer");
        assert!(rec.neighbor_triples.is_empty());
    }

    #[test]
    fn prompt_context_only_contains_selected_material() {
        let g = toy_graph();
        let cfg = RunConfig::default();
        let backend = scripted();
        let pipe = Pipeline::new(&g, &cfg, &backend).unwrap();
        let rec = pipe.run_question(&question());
        let final_prompt = &rec.transcript.last().unwrap().prompt;
        // voice rest was a neighbor candidate but the filter kept only ibuprofen
        assert!(!final_prompt.contains("voice rest"));
        assert!(final_prompt.contains("ibuprofen"));
        for p in &rec.main_paths {
            assert!(final_prompt.contains(&p.text));
        }
    }

    #[test]
    fn serialize_paths_direction_markers() {
        let g = load_graph_str("a\tr\tb\nc\ts\tb\n", GraphFormat::Tsv)
            .unwrap()
            .0;
        let a = g.entity_by_name("a").unwrap();
        let c = g.entity_by_name("c").unwrap();
        let found = paths::find_paths_between(&g, a, c, 2, 10, false)
            .unwrap()
            .paths;
        assert_eq!(found[0].render(&g), "a -[r]-> b <-[s]- c");
        let block = serialize_main_paths(&found, &g);
        assert!(block.starts_with("Main reasoning paths:\n"));
        assert!(block.contains("a -[r]-> b <-[s]- c"));
        let empty = serialize_paths(&[], &[], &g);
        assert_eq!(
            empty,
            "Main reasoning paths:\n(none)\n\nNeighbor triples:\n(none)"
        );
    }

    #[test]
    fn vanilla_mode_is_one_call() {
        let g = toy_graph();
        let cfg = RunConfig::default();
        let backend = scripted();
        let pipe = Pipeline::new(&g, &cfg, &backend).unwrap();
        let rec = pipe.run_vanilla(&question());
        assert_eq!(rec.transcript_ids(), vec![TemplateId::FinalAnswer]);
        assert!(rec.main_paths.is_empty());
    }

    #[test]
    fn batch_is_isolated_and_order_preserving() {
        let g = toy_graph();
        let cfg = RunConfig::default();
        let backend = scripted();
        let pipe = Pipeline::new(&g, &cfg, &backend).unwrap();
        let questions = vec![
            QuestionRecord::new("a", "I have a hoarse voice."),
            QuestionRecord::new("b", "   "),
            QuestionRecord::new("c", "My throat is sore."),
        ];
        let out = pipe.run_batch(&questions, 1);
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].id, "a");
        assert_eq!(out[1].id, "b");
        assert_eq!(out[2].id, "c");
        assert!(out[1].degraded);
    }

    #[test]
    fn batch_output_is_deterministic_across_jobs() {
        let g = toy_graph();
        let cfg = RunConfig::default();
        let backend = scripted();
        let pipe = Pipeline::new(&g, &cfg, &backend).unwrap();
        let questions: Vec<QuestionRecord> = (0..8)
            .map(|i| QuestionRecord::new(format!("q{i}"), "I have a hoarse voice."))
            .collect();
        let serial = records_to_jsonl(&pipe.run_batch(&questions, 1)).unwrap();
        let parallel = records_to_jsonl(&pipe.run_batch(&questions, 4)).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn filter_response_matching_is_lenient() {
        let g = toy_graph();
        let lar = g.entity_by_name("laryngitis").unwrap();
        let candidates = paths::gen_neighbor_candidates(&g, &[lar], &[]).unwrap();
        let mut warnings = Vec::new();
        let accepted = match_filter_response(
            "1. (Laryngitis, Treated_With, Ibuprofen)\ngarbage\n(laryngitis, treated_with, unicorn tears)",
            &candidates,
            &g,
            &mut warnings,
        );
        assert_eq!(accepted.len(), 1);
        assert_eq!(g.entity_surface(accepted[0].triple.tail), "ibuprofen");
        assert_eq!(warnings.len(), 2);
    }
}
