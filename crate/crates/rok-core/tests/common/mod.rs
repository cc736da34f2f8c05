//! Independent oracles the integration suite checks the engine against.
//!
//! Everything here recomputes results from first principles over the
//! graph's public triple list — no adjacency indexes, no power iteration,
//! no bucket machinery — so agreement with the engine is meaningful.

// not every test binary uses every oracle; oracle code favors plainness
// over signature polish
#![allow(dead_code)]
#![allow(clippy::too_many_arguments)]
#![allow(clippy::needless_range_loop)]

use std::collections::BTreeMap;

use rok_core::kg::{EntityId, KnowledgeGraph};
use rok_core::paths::{ReasoningPath, Subgraph};

/// Canonical string form of a path, built from raw fields:
/// `a -[r]-> b <-[s]- c`.
pub fn canon_path(path: &ReasoningPath, g: &KnowledgeGraph) -> String {
    let mut out = g.entity_surface(path.nodes[0]).to_string();
    for s in &path.steps {
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

/// Brute-force simple-path enumeration by linear triple-list scans.
/// Returns canonical strings, sorted.
pub fn oracle_paths(
    g: &KnowledgeGraph,
    a: EntityId,
    b: EntityId,
    max_hop: usize,
    directed: bool,
) -> Vec<String> {
    fn recurse(
        g: &KnowledgeGraph,
        u: EntityId,
        b: EntityId,
        max_hop: usize,
        directed: bool,
        visited: &mut Vec<EntityId>,
        text: String,
        out: &mut Vec<String>,
    ) {
        if visited.len() - 1 == max_hop {
            return;
        }
        for t in g.triples() {
            if t.head == t.tail {
                continue;
            }
            let steps: &[(EntityId, EntityId, bool)] = if directed {
                &[(t.head, t.tail, true)]
            } else {
                &[(t.head, t.tail, true), (t.tail, t.head, false)]
            };
            for &(from, to, forward) in steps {
                if from != u || visited.contains(&to) {
                    continue;
                }
                let rel = g.relation_surface(t.relation);
                let arrow = if forward {
                    format!(" -[{rel}]-> ")
                } else {
                    format!(" <-[{rel}]- ")
                };
                let next_text = format!("{text}{arrow}{}", g.entity_surface(to));
                if to == b {
                    out.push(next_text);
                    continue;
                }
                visited.push(to);
                recurse(g, to, b, max_hop, directed, visited, next_text, out);
                visited.pop();
            }
        }
    }

    let mut out = Vec::new();
    recurse(
        g,
        a,
        b,
        max_hop,
        directed,
        &mut vec![a],
        g.entity_surface(a).to_string(),
        &mut out,
    );
    out.sort();
    out
}

// Column-stochastic transition matrix over the subgraph's traversal edges;
// dangling columns become uniform.
fn transition_matrix(sub: &Subgraph, directed: bool) -> (Vec<EntityId>, Vec<Vec<f64>>) {
    let nodes = sub.nodes.clone();
    let n = nodes.len();
    let index: BTreeMap<EntityId, usize> = nodes
        .iter()
        .copied()
        .enumerate()
        .map(|(i, e)| (e, i))
        .collect();
    let mut counts = vec![vec![0usize; n]; n]; // counts[i][j]: moves j -> i
    let mut outdeg = vec![0usize; n];
    for t in &sub.triples {
        let h = index[&t.head];
        let tl = index[&t.tail];
        counts[tl][h] += 1;
        outdeg[h] += 1;
        if !directed {
            counts[h][tl] += 1;
            outdeg[tl] += 1;
        }
    }
    let mut m = vec![vec![0.0; n]; n];
    for j in 0..n {
        for i in 0..n {
            m[i][j] = if outdeg[j] == 0 {
                1.0 / n as f64
            } else {
                counts[i][j] as f64 / outdeg[j] as f64
            };
        }
    }
    (nodes, m)
}

// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        assert!(a[col][col].abs() > 1e-14, "singular system");
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x
}

/// Exact PageRank via the dense linear system `(I - dM)x = (1-d)/n`.
/// For `d = 1` the stationary distribution is solved directly with the
/// normalization constraint replacing one equation.
pub fn oracle_pagerank(sub: &Subgraph, damping: f64, directed: bool) -> BTreeMap<EntityId, f64> {
    let (nodes, m) = transition_matrix(sub, directed);
    let n = nodes.len();
    let x = if damping >= 1.0 {
        // (M - I)x = 0 with sum(x) = 1 in the last row
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = m[i][j] - if i == j { 1.0 } else { 0.0 };
            }
        }
        let mut b = vec![0.0; n];
        for j in 0..n {
            a[n - 1][j] = 1.0;
        }
        b[n - 1] = 1.0;
        solve(a, b)
    } else {
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = (if i == j { 1.0 } else { 0.0 }) - damping * m[i][j];
            }
        }
        let b = vec![(1.0 - damping) / n as f64; n];
        solve(a, b)
    };
    nodes.into_iter().zip(x).collect()
}

/// Full-sort selection oracle: order every scored path by key_count
/// descending, then avg_pr descending, ties broken lexicographically by
/// node-surface sequence (then relations, then directions); take `k`.
pub fn oracle_bucket_select(paths: &[ReasoningPath], k: usize, g: &KnowledgeGraph) -> Vec<String> {
    type TieKey = (Vec<String>, Vec<String>, Vec<bool>);
    let tie_key = |p: &ReasoningPath| -> TieKey {
        (
            p.nodes
                .iter()
                .map(|&n| g.entity_surface(n).to_string())
                .collect(),
            p.steps
                .iter()
                .map(|s| g.relation_surface(s.triple.relation).to_string())
                .collect(),
            p.steps.iter().map(|s| !s.forward).collect(),
        )
    };
    let mut keyed: Vec<(usize, f64, TieKey, String)> = paths
        .iter()
        .map(|p| (p.key_count, p.avg_pr.unwrap(), tie_key(p), canon_path(p, g)))
        .collect();
    keyed.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then_with(|| b.1.total_cmp(&a.1))
            .then_with(|| a.2.cmp(&b.2))
    });
    keyed
        .into_iter()
        .take(k)
        .map(|(_, _, _, text)| text)
        .collect()
}

/// Rule-by-rule neighbor filter oracle over the raw triple list.
pub fn oracle_neighbor_filter(
    g: &KnowledgeGraph,
    e_cand: &[EntityId],
    main: &[ReasoningPath],
) -> Vec<String> {
    let main_triples: Vec<_> = main
        .iter()
        .flat_map(|p| p.steps.iter().map(|s| s.triple))
        .collect();
    let main_nodes: Vec<EntityId> = main.iter().flat_map(|p| p.nodes.iter().copied()).collect();
    let mut kept = Vec::new();
    let mut seen = Vec::new();
    for &key in e_cand {
        for t in g.triples() {
            let other = if t.head == key {
                t.tail
            } else if t.tail == key {
                t.head
            } else {
                continue;
            };
            if main_triples.contains(t) || seen.contains(t) {
                continue;
            }
            // does this key reach any main-path node via the same relation?
            let shadowed = g.triples().iter().any(|s| {
                s.relation == t.relation
                    && ((s.head == key && main_nodes.contains(&s.tail))
                        || (s.tail == key && main_nodes.contains(&s.head)))
            });
            if shadowed && !main_nodes.contains(&other) {
                continue;
            }
            seen.push(*t);
            kept.push(g.render_triple(t));
        }
    }
    kept.sort();
    kept
}
