//! PageRank scoring of candidate subgraphs and bucketed top-k path
//! selection.
//!
//! The power-iteration kernel is generic over the float type via
//! `num_traits::Float`; the rest of the pipeline instantiates it with
//! [`crate::Score`]. Transition edges follow the traversal mode used by
//! path search: undirected by default, so each triple contributes a move
//! in both directions. Dangling nodes (directed mode only) redistribute
//! their mass uniformly, keeping the transition matrix column-stochastic,
//! which makes the score vector sum to one after every iteration.

use std::collections::BTreeMap;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive};

use crate::error::{Result, RokError};
use crate::kg::{EntityId, KnowledgeGraph};
use crate::paths::{ReasoningPath, Subgraph};
use crate::Score;

/// Damped random-walk scores over a subgraph's nodes.
#[derive(Debug, Clone)]
pub struct PageRankScores<F = Score> {
    nodes: Vec<EntityId>,
    scores: Vec<F>,
    pub damping: F,
    pub iterations: usize,
    pub residual: F,
    pub converged: bool,
    /// Largest |Σ scores − 1| observed across iterations.
    pub worst_sum_deviation: F,
}

impl<F: Float> PageRankScores<F> {
    pub fn score(&self, e: EntityId) -> Option<F> {
        self.nodes.binary_search(&e).ok().map(|i| self.scores[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (EntityId, F)> + '_ {
        self.nodes.iter().copied().zip(self.scores.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Power iteration from the uniform vector: `pr = d·M·pr + (1−d)/n`.
///
/// Stops when the L1 step difference drops below `tol` or after `max_iter`
/// iterations, whichever comes first.
pub fn pagerank<F>(
    sub: &Subgraph,
    damping: F,
    tol: F,
    max_iter: usize,
    directed: bool,
) -> Result<PageRankScores<F>>
where
    F: Float + FromPrimitive + AddAssign,
{
    if sub.is_empty() {
        return Err(RokError::EmptySubgraph);
    }
    if damping < F::zero() || damping > F::one() {
        return Err(RokError::InvalidInput(
            "damping factor must lie in [0,1]".into(),
        ));
    }

    let nodes = sub.nodes.clone();
    let n = nodes.len();
    let index: BTreeMap<EntityId, usize> = nodes
        .iter()
        .copied()
        .enumerate()
        .map(|(i, e)| (e, i))
        .collect();

    // directed moves j -> i under the traversal mode
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for t in &sub.triples {
        let h = index[&t.head];
        let tl = index[&t.tail];
        edges.push((h, tl));
        if !directed {
            edges.push((tl, h));
        }
    }
    let mut out_degree = vec![0usize; n];
    for &(j, _) in &edges {
        out_degree[j] += 1;
    }

    let nf = F::from_usize(n).expect("node count fits the float type");
    let uniform = F::one() / nf;
    let teleport = (F::one() - damping) / nf;

    let mut pr = vec![uniform; n];
    let mut iterations = 0;
    let mut residual = F::infinity();
    let mut converged = false;
    let mut worst_sum_deviation = {
        let sum = pr.iter().fold(F::zero(), |acc, &v| acc + v);
        (sum - F::one()).abs()
    };

    while iterations < max_iter {
        let dangling_mass = (0..n)
            .filter(|&j| out_degree[j] == 0)
            .fold(F::zero(), |acc, j| acc + pr[j]);
        let mut next = vec![teleport + damping * dangling_mass / nf; n];
        for &(j, i) in &edges {
            next[i] += damping * pr[j] / F::from_usize(out_degree[j]).unwrap();
        }
        iterations += 1;

        let sum = next.iter().fold(F::zero(), |acc, &v| acc + v);
        let dev = (sum - F::one()).abs();
        if dev > worst_sum_deviation {
            worst_sum_deviation = dev;
        }
        residual = pr
            .iter()
            .zip(next.iter())
            .fold(F::zero(), |acc, (&a, &b)| acc + (a - b).abs());
        pr = next;
        if residual < tol {
            converged = true;
            break;
        }
    }

    Ok(PageRankScores {
        nodes,
        scores: pr,
        damping,
        iterations,
        residual,
        converged,
        worst_sum_deviation,
    })
}

/// Fill each path's `avg_pr` with the arithmetic mean of its nodes' scores
/// (endpoints included, each node once).
pub fn score_paths(
    mut paths: Vec<ReasoningPath>,
    pr: &PageRankScores<Score>,
    g: &KnowledgeGraph,
) -> Result<Vec<ReasoningPath>> {
    for p in &mut paths {
        let mut total = 0.0;
        for &node in &p.nodes {
            total += pr
                .score(node)
                .ok_or_else(|| RokError::MissingScore(g.entity_surface(node).to_string()))?;
        }
        p.avg_pr = Some(total / p.nodes.len() as Score);
    }
    Ok(paths)
}

/// Candidate paths grouped by the number of key entities they contain,
/// each bucket sorted by average PageRank descending (ties by the
/// canonical path order).
#[derive(Debug, Clone, Default)]
pub struct BucketedPaths {
    pub buckets: BTreeMap<usize, Vec<ReasoningPath>>,
    /// Bucket range is `0..=max_key` where `max_key` is the key-entity
    /// count; empty buckets are simply absent.
    pub max_key: usize,
}

fn require_scored(paths: &[ReasoningPath], g: &KnowledgeGraph) -> Result<()> {
    for p in paths {
        if p.avg_pr.is_none() {
            return Err(RokError::MissingScore(format!(
                "path starting at '{}' has no average PageRank",
                g.entity_surface(p.start())
            )));
        }
    }
    Ok(())
}

/// Group scored paths into key-count buckets.
pub fn bucketize(
    paths: Vec<ReasoningPath>,
    n_keys: usize,
    g: &KnowledgeGraph,
) -> Result<BucketedPaths> {
    require_scored(&paths, g)?;
    let mut buckets: BTreeMap<usize, Vec<ReasoningPath>> = BTreeMap::new();
    for p in paths {
        buckets.entry(p.key_count).or_default().push(p);
    }
    for bucket in buckets.values_mut() {
        bucket.sort_by(|a, b| {
            b.avg_pr
                .unwrap()
                .total_cmp(&a.avg_pr.unwrap())
                .then_with(|| a.lex_key(g).cmp(&b.lex_key(g)))
        });
    }
    Ok(BucketedPaths {
        buckets,
        max_key: n_keys,
    })
}

/// Select the top-k main reasoning paths: fill from the bucket with the
/// most key entities downward, taking paths in within-bucket order, until
/// `k` paths are chosen or the candidates run out.
pub fn bucket_select(
    paths: Vec<ReasoningPath>,
    n_keys: usize,
    k: usize,
    g: &KnowledgeGraph,
) -> Result<Vec<ReasoningPath>> {
    if k == 0 {
        return Err(RokError::InvalidInput("top-k must be at least 1".into()));
    }
    let bucketed = bucketize(paths, n_keys, g)?;
    let mut selected = Vec::new();
    for (_, bucket) in bucketed.buckets.iter().rev() {
        for p in bucket {
            if selected.len() == k {
                return Ok(selected);
            }
            selected.push(p.clone());
        }
    }
    Ok(selected)
}
