//! Offline metrics over batch output: per-category key-entity match
//! accuracy and Hits@1.
//!
//! A gold entity counts as hit when its normalized name (or any alias)
//! occurs in the answer text at word boundaries. Hits@1 compares the
//! answer's first extracted entity — falling back to the whole answer —
//! against the gold alias set by normalized equality. Degraded runs stay
//! in the denominators; a failed pipeline is a miss, not a skip.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RokError};
use crate::linker::{contains_whole_token, normalize};
use crate::llm::parse_entity_list;
use crate::pipeline::{GoldLabels, OutputRecord};
use crate::Score;

/// Optional alias lists per entity, loaded from a JSON map
/// `{"entity": ["alias", …]}`. All lookups are normalized.
#[derive(Debug, Clone, Default)]
pub struct AliasMap {
    aliases: HashMap<String, Vec<String>>,
}

impl AliasMap {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let raw: HashMap<String, Vec<String>> = serde_json::from_str(&text)?;
        let mut aliases = HashMap::new();
        for (k, v) in raw {
            aliases.insert(normalize(&k), v.iter().map(|a| normalize(a)).collect());
        }
        Ok(Self { aliases })
    }

    /// The entity's normalized name followed by its normalized aliases.
    pub fn expansions(&self, entity: &str) -> Vec<String> {
        let norm = normalize(entity);
        let mut out = vec![norm.clone()];
        if let Some(extra) = self.aliases.get(&norm) {
            out.extend(extra.iter().cloned());
        }
        out
    }
}

fn answer_mentions(answer_norm: &str, entity: &str, aliases: &AliasMap) -> bool {
    aliases
        .expansions(entity)
        .iter()
        .any(|alias| contains_whole_token(answer_norm, alias))
}

/// Hit rate of one category on one question.
fn category_hits(answer_norm: &str, gold: &[String], aliases: &AliasMap) -> Option<Score> {
    if gold.is_empty() {
        return None;
    }
    let hits = gold
        .iter()
        .filter(|e| answer_mentions(answer_norm, e, aliases))
        .count();
    Some(hits as Score / gold.len() as Score)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryRate {
    /// Questions carrying gold labels for this category.
    pub questions: usize,
    pub rate: Score,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionEval {
    pub id: String,
    pub degraded: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disease: Option<Score>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub medication: Option<Score>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<Score>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub open: Option<Score>,
}

/// Entity-match accuracy report. `overall` is the macro average over the
/// categories that appear in the batch; micro averaging (total hits over
/// total gold entities) is available behind a flag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disease: Option<CategoryRate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub medication: Option<CategoryRate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<CategoryRate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub open: Option<CategoryRate>,
    pub overall: Score,
    pub averaging: String,
    pub degraded_runs: usize,
    pub per_question: Vec<QuestionEval>,
}

struct CategoryAccumulator {
    per_question_rates: Vec<Score>,
    entity_hits: usize,
    entity_total: usize,
}

impl CategoryAccumulator {
    fn new() -> Self {
        Self {
            per_question_rates: Vec::new(),
            entity_hits: 0,
            entity_total: 0,
        }
    }

    fn add(&mut self, answer_norm: &str, gold: &[String], aliases: &AliasMap) -> Option<Score> {
        let rate = category_hits(answer_norm, gold, aliases)?;
        self.per_question_rates.push(rate);
        self.entity_total += gold.len();
        self.entity_hits += gold
            .iter()
            .filter(|e| answer_mentions(answer_norm, e, aliases))
            .count();
        Some(rate)
    }

    fn rate(&self) -> Option<CategoryRate> {
        if self.per_question_rates.is_empty() {
            return None;
        }
        Some(CategoryRate {
            questions: self.per_question_rates.len(),
            rate: self.per_question_rates.iter().sum::<Score>()
                / self.per_question_rates.len() as Score,
        })
    }
}

/// Per-category key-entity match accuracy over a batch.
pub fn entity_match_accuracy(
    records: &[OutputRecord],
    aliases: &AliasMap,
    micro: bool,
) -> Result<EvalReport> {
    if !records
        .iter()
        .any(|r| r.gold.as_ref().map(|g| !g.is_empty()).unwrap_or(false))
    {
        return Err(RokError::NoGoldLabels);
    }

    let mut disease = CategoryAccumulator::new();
    let mut medication = CategoryAccumulator::new();
    let mut test = CategoryAccumulator::new();
    let mut open = CategoryAccumulator::new();
    let mut per_question = Vec::new();
    let mut degraded_runs = 0;

    for rec in records {
        if rec.degraded {
            degraded_runs += 1;
        }
        let gold = match &rec.gold {
            Some(g) if !g.is_empty() => g,
            _ => continue,
        };
        let answer_norm = normalize(&rec.answer);
        per_question.push(QuestionEval {
            id: rec.id.clone(),
            degraded: rec.degraded,
            disease: disease.add(&answer_norm, &gold.disease, aliases),
            medication: medication.add(&answer_norm, &gold.medication, aliases),
            test: test.add(&answer_norm, &gold.test, aliases),
            open: open.add(&answer_norm, &gold.open, aliases),
        });
    }

    let categories = [disease.rate(), medication.rate(), test.rate(), open.rate()];
    let overall = if micro {
        let hits: usize = [&disease, &medication, &test, &open]
            .iter()
            .map(|c| c.entity_hits)
            .sum();
        let total: usize = [&disease, &medication, &test, &open]
            .iter()
            .map(|c| c.entity_total)
            .sum();
        hits as Score / total as Score
    } else {
        let present: Vec<Score> = categories.iter().flatten().map(|c| c.rate).collect();
        present.iter().sum::<Score>() / present.len() as Score
    };
    let [disease, medication, test, open] = categories;

    Ok(EvalReport {
        disease,
        medication,
        test,
        open,
        overall,
        averaging: if micro { "micro" } else { "macro" }.to_string(),
        degraded_runs,
        per_question,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HitsReport {
    pub hits: usize,
    pub total: usize,
    pub rate: Score,
}

fn gold_alias_set(gold: &GoldLabels, aliases: &AliasMap) -> Vec<String> {
    gold.all()
        .iter()
        .flat_map(|e| aliases.expansions(e))
        .collect()
}

/// Hits@1 over records with gold labels: the answer's first extracted
/// entity (or the normalized answer text) must equal some gold alias.
pub fn hits_at_1(records: &[OutputRecord], aliases: &AliasMap) -> HitsReport {
    let mut hits = 0;
    let mut total = 0;
    for rec in records {
        let gold = match &rec.gold {
            Some(g) if !g.is_empty() => g,
            _ => continue,
        };
        total += 1;
        let gold_set = gold_alias_set(gold, aliases);
        let mut candidates: Vec<String> = Vec::new();
        if let Some(first) = parse_entity_list(&rec.answer).into_iter().next() {
            candidates.push(normalize(&first));
        }
        candidates.push(normalize(&rec.answer));
        if candidates.iter().any(|c| gold_set.contains(c)) {
            hits += 1;
        }
    }
    HitsReport {
        hits,
        total,
        rate: if total == 0 {
            0.0
        } else {
            hits as Score / total as Score
        },
    }
}
