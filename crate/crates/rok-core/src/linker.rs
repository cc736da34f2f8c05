//! Lexical entity linking: resolve mention strings against the graph's
//! entity catalog.
//!
//! Matching is deterministic and fully offline: exact normalized match
//! first, then highest token-set Jaccard similarity above a threshold,
//! ties broken by the lexicographically smallest entity surface. Strings
//! without internal whitespace fall back to per-character tokens, which
//! also gives CJK text a usable similarity.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Result, RokError};
use crate::kg::{EntityId, KnowledgeGraph};
use crate::Score;

// Full-width marks that `char::is_ascii_punctuation` misses.
const CJK_PUNCT: &[char] = &[
    '。', '，', '、', '；', '：', '！', '？', '（', '）', '「', '」', '“', '”', '‘', '’', '《',
    '》', '．',
];

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || CJK_PUNCT.contains(&c)
}

/// Canonical form used for all identity and matching decisions: lowercase,
/// outer whitespace and punctuation stripped, internal whitespace collapsed
/// to single spaces.
pub fn normalize(s: &str) -> String {
    let lowered = s.to_lowercase();
    let trimmed = lowered.trim_matches(|c: char| c.is_whitespace() || is_punct(c));
    let mut out = String::with_capacity(trimmed.len());
    let mut last_was_space = false;
    for c in trimmed.chars() {
        if c.is_whitespace() {
            if !last_was_space {
                out.push(' ');
                last_was_space = true;
            }
        } else {
            out.push(c);
            last_was_space = false;
        }
    }
    out
}

/// Token set of a normalized string: whitespace-separated words, or
/// per-character tokens when the string contains no whitespace.
pub fn token_set(normalized: &str) -> BTreeSet<String> {
    if normalized.contains(' ') {
        normalized.split(' ').map(str::to_string).collect()
    } else {
        normalized.chars().map(|c| c.to_string()).collect()
    }
}

/// Token-set Jaccard similarity; empty-vs-anything scores 0, two empty sets
/// score 0 as well (an empty mention never links).
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> Score {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count();
    let union = a.union(b).count();
    inter as Score / union as Score
}

/// Whether `needle` occurs in `haystack` at word boundaries; both arguments
/// must already be normalized. Needles without any ASCII alphanumerics
/// (CJK text, which has no word boundaries) fall back to plain substring
/// containment.
pub fn contains_whole_token(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let padded_h = format!(" {haystack} ");
    let padded_n = format!(" {needle} ");
    if padded_h.contains(&padded_n) {
        return true;
    }
    !needle.chars().any(|c| c.is_ascii_alphanumeric()) && haystack.contains(needle)
}

/// Where a mention came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MentionSource {
    Question,
    Cot,
}

#[derive(Debug, Clone, Serialize)]
pub struct Mention {
    pub text: String,
    pub source: MentionSource,
}

/// Ordered, deduplicated mention list extracted from the question and the
/// chain-of-thought expansion.
#[derive(Debug, Clone, Default, Serialize)]
pub struct MentionSet {
    mentions: Vec<Mention>,
}

impl MentionSet {
    /// Build from raw mention strings; duplicates after normalization keep
    /// their first occurrence, empty-normalizing strings are dropped.
    pub fn new(raw: impl IntoIterator<Item = (String, MentionSource)>) -> Self {
        let mut seen = BTreeSet::new();
        let mut mentions = Vec::new();
        for (text, source) in raw {
            let norm = normalize(&text);
            if norm.is_empty() || !seen.insert(norm) {
                continue;
            }
            mentions.push(Mention {
                text: text.trim().to_string(),
                source,
            });
        }
        Self { mentions }
    }

    pub fn mentions(&self) -> &[Mention] {
        &self.mentions
    }

    pub fn is_empty(&self) -> bool {
        self.mentions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.mentions.len()
    }
}

/// One successful mention → entity resolution.
#[derive(Debug, Clone, Serialize)]
pub struct LinkedEntity {
    #[serde(skip)]
    pub entity: EntityId,
    pub surface: String,
    pub mention: String,
    pub score: Score,
}

/// The question's candidate entity set, in mention order.
#[derive(Debug, Clone, Default, Serialize)]
pub struct LinkedEntitySet {
    pub entities: Vec<LinkedEntity>,
    pub unmatched: Vec<String>,
}

impl LinkedEntitySet {
    pub fn ids(&self) -> Vec<EntityId> {
        self.entities.iter().map(|e| e.entity).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }
}

/// Similarity between a normalized mention and a normalized entity
/// surface. Exact matches never reach the scorer; it only ranks fuzzy
/// candidates, so an embedding-based scorer can drop in without touching
/// the linking rules.
pub trait SimilarityScorer: Send + Sync {
    fn score(&self, mention_norm: &str, entity_norm: &str) -> Score;
}

/// Default scorer: token-set Jaccard with the per-character fallback.
#[derive(Debug, Clone, Copy, Default)]
pub struct JaccardScorer;

impl SimilarityScorer for JaccardScorer {
    fn score(&self, mention_norm: &str, entity_norm: &str) -> Score {
        jaccard(&token_set(mention_norm), &token_set(entity_norm))
    }
}

/// Resolve each mention to at most one graph entity using the default
/// Jaccard scorer.
pub fn link(
    mentions: &MentionSet,
    g: &KnowledgeGraph,
    threshold: Score,
) -> Result<LinkedEntitySet> {
    link_with_scorer(mentions, g, threshold, &JaccardScorer)
}

/// Resolve each mention to at most one graph entity.
///
/// Exact normalized matches score 1.0 and dominate; otherwise the entity
/// with the highest scorer similarity at or above `threshold` wins, ties
/// going to the lexicographically smallest surface. Unmatched mentions are
/// reported, not fatal. Mentions resolving to an already-linked entity are
/// folded into the earlier link.
pub fn link_with_scorer(
    mentions: &MentionSet,
    g: &KnowledgeGraph,
    threshold: Score,
    scorer: &dyn SimilarityScorer,
) -> Result<LinkedEntitySet> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(RokError::InvalidInput(format!(
            "linker threshold must lie in [0,1], got {threshold}"
        )));
    }
    if g.triple_count() == 0 && g.entity_count() == 0 {
        return Err(RokError::EmptyGraph);
    }

    let mut result = LinkedEntitySet::default();
    let mut taken = BTreeSet::new();

    for mention in mentions.mentions() {
        let norm = normalize(&mention.text);
        let chosen = if let Some(id) = g.entity_by_name(&norm) {
            Some((id, 1.0))
        } else if norm.is_empty() {
            None
        } else {
            let mut best: Option<(EntityId, Score)> = None;
            for e in g.entity_ids() {
                let s = scorer.score(&norm, g.entity_norm(e));
                if s < threshold {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((be, bs)) => {
                        s > bs || (s == bs && g.entity_surface(e) < g.entity_surface(be))
                    }
                };
                if better {
                    best = Some((e, s));
                }
            }
            best
        };

        match chosen {
            Some((id, score)) => {
                if taken.insert(id) {
                    result.entities.push(LinkedEntity {
                        entity: id,
                        surface: g.entity_surface(id).to_string(),
                        mention: mention.text.clone(),
                        score,
                    });
                }
            }
            None => result.unmatched.push(mention.text.clone()),
        }
    }
    Ok(result)
}
