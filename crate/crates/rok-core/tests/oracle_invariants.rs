//! Module-level invariants checked against independent recomputation:
//! frozen one-hop sets, frontier replay, score recomputation, stationary
//! distributions at full damping, and subgraph minimality.

mod common;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rok_core::kg::{load_graph, load_graph_str, GraphFormat, KnowledgeGraph};
use rok_core::llm::parse_entity_list;
use rok_core::paths::{gen_main_candidates, Subgraph};
use rok_core::ranker::{pagerank, score_paths};

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn toy_graph() -> KnowledgeGraph {
    load_graph(&fixtures_dir().join("toy_medical_kg.tsv"), GraphFormat::Tsv)
        .unwrap()
        .0
}

// Expected incident set for "migraine" in the bundled graph, verified by
// the linear-scan oracle below before freezing.
const MIGRAINE_ONE_HOP: [&str; 7] = [
    "(headache, is_symptom_of, migraine)",
    "(light sensitivity, is_symptom_of, migraine)",
    "(migraine, requires_test, ct scan)",
    "(migraine, treated_with, ibuprofen)",
    "(migraine, treated_with, sumatriptan)",
    "(migraine, worsened_by, stress)",
    "(nausea, is_symptom_of, migraine)",
];

#[test]
fn one_hop_of_migraine_matches_linear_scan() {
    let g = toy_graph();
    let migraine = g.entity_by_name("migraine").unwrap();
    let mut got: Vec<String> = g
        .one_hop_triples(migraine)
        .unwrap()
        .iter()
        .map(|t| g.render_triple(t))
        .collect();
    got.sort();

    let mut scanned: Vec<String> = g
        .triples()
        .iter()
        .filter(|t| t.head == migraine || t.tail == migraine)
        .map(|t| g.render_triple(t))
        .collect();
    scanned.sort();

    assert_eq!(got, scanned);
    assert_eq!(got, MIGRAINE_ONE_HOP);
}

#[test]
fn one_hop_equals_linear_scan_on_thousand_triple_graph() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut lines = String::new();
    for _ in 0..1000 {
        lines.push_str(&format!(
            "e{}\tr{}\te{}\n",
            rng.gen_range(0..120),
            rng.gen_range(0..8),
            rng.gen_range(0..120)
        ));
    }
    let g = load_graph_str(&lines, GraphFormat::Tsv).unwrap().0;
    for e in g.entity_ids() {
        let got: BTreeSet<_> = g.one_hop_triples(e).unwrap().into_iter().collect();
        let scanned: BTreeSet<_> = g
            .triples()
            .iter()
            .copied()
            .filter(|t| t.head == e || t.tail == e)
            .collect();
        assert_eq!(got, scanned);
    }
}

#[test]
fn frontier_replay_on_toy_graph_with_three_entities() {
    let g = toy_graph();
    let keys: Vec<_> = ["hoarse voice", "cough", "migraine"]
        .iter()
        .map(|n| g.entity_by_name(n).unwrap())
        .collect();
    let out = gen_main_candidates(&g, &keys, 3, 10_000, false).unwrap();

    // oracle: replay the frontier schedule with brute-force pair search
    let mut remaining = keys.clone();
    let mut frontier = std::collections::VecDeque::new();
    let mut queued = BTreeSet::new();
    let mut expected: Vec<String> = Vec::new();
    while !remaining.is_empty() {
        let source = loop {
            match frontier.pop_front() {
                Some(e) if remaining.contains(&e) => break Some(e),
                Some(_) => continue,
                None => break None,
            }
        }
        .unwrap_or(remaining[0]);
        for &target in remaining.iter().filter(|&&t| t != source) {
            let paths = common::oracle_paths(&g, source, target, 3, false);
            if !paths.is_empty() && queued.insert(target) {
                frontier.push_back(target);
            }
            expected.extend(paths);
        }
        remaining.retain(|&e| e != source);
    }
    expected.sort();

    let mut got: Vec<String> = out
        .candidates
        .iter()
        .map(|p| common::canon_path(p, &g))
        .collect();
    got.sort();
    assert_eq!(got, expected);

    // subgraph is exactly the union of candidate-path triples
    let union: BTreeSet<_> = out
        .candidates
        .iter()
        .flat_map(|p| p.steps.iter().map(|s| s.triple))
        .collect();
    let sub: BTreeSet<_> = out.subgraph.triples.iter().copied().collect();
    assert_eq!(sub, union);
}

#[test]
fn subgraph_minimality_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..25 {
        let n = rng.gen_range(4..=9usize);
        let mut lines = String::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen_bool(0.35) {
                    lines.push_str(&format!("n{i}\tr{}\tn{j}\n", rng.gen_range(0..2)));
                }
            }
        }
        if lines.is_empty() {
            continue;
        }
        let g = load_graph_str(&lines, GraphFormat::Tsv).unwrap().0;
        let keys: Vec<_> = g.entity_ids().take(3).collect();
        if keys.len() < 2 {
            continue;
        }
        let out = gen_main_candidates(&g, &keys, 3, 10_000, false).unwrap();
        for t in &out.subgraph.triples {
            assert!(
                out.candidates.iter().any(|p| p.contains_triple(t)),
                "removing {} would break no candidate path",
                g.render_triple(t)
            );
        }
    }
}

#[test]
fn full_damping_matches_stationary_distribution() {
    // strongly connected aperiodic graphs on <= 5 nodes
    let cases = [
        "a\tr\tb\nb\tr\tc\nc\tr\ta\n",
        "a\tr\tb\nb\tr\tc\nc\tr\ta\nc\tr\td\nd\tr\ta\n",
        "a\tr\tb\nb\tr\ta\nb\tr\tc\nc\tr\ta\nc\tr\td\nd\tr\tb\nd\tr\te\ne\tr\tc\n",
    ];
    for lines in cases {
        let g = load_graph_str(lines, GraphFormat::Tsv).unwrap().0;
        let sub = Subgraph::from_triples(g.triples().iter().copied());
        let pr = pagerank::<f64>(&sub, 1.0, 1e-12, 5000, true).unwrap();
        let exact = common::oracle_pagerank(&sub, 1.0, true);
        for (e, score) in pr.iter() {
            assert!(
                (score - exact[&e]).abs() < 1e-8,
                "node {} drifted from the stationary distribution",
                g.entity_surface(e)
            );
        }
    }
}

#[test]
fn avg_pr_recomputation_on_toy_candidates() {
    let g = toy_graph();
    let keys: Vec<_> = ["hoarse voice", "sore throat", "laryngitis", "throat swab"]
        .iter()
        .map(|n| g.entity_by_name(n).unwrap())
        .collect();
    let out = gen_main_candidates(&g, &keys, 3, 10_000, false).unwrap();
    let pr = pagerank::<f64>(&out.subgraph, 0.85, 1e-10, 500, false).unwrap();
    let exact = common::oracle_pagerank(&out.subgraph, 0.85, false);
    let scored = score_paths(out.candidates, &pr, &g).unwrap();
    for p in &scored {
        let mean: f64 = p.nodes.iter().map(|n| exact[n]).sum::<f64>() / p.nodes.len() as f64;
        assert!(
            (p.avg_pr.unwrap() - mean).abs() < 1e-6,
            "path {} scored {} but the oracle mean is {mean}",
            common::canon_path(p, &g),
            p.avg_pr.unwrap()
        );
    }
}

#[test]
fn scripted_cot_fixture_yields_expected_mentions() {
    // the bundled chain-of-thought response must parse to the same mention
    // list the extract stage returns, so merged mode links identically
    let script: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(fixtures_dir().join("mock_responses.json")).unwrap(),
    )
    .unwrap();
    let cot = script["cot_expand"]["default"].as_str().unwrap();
    let mentions = parse_entity_list(cot);
    for expected in ["hoarse voice", "sore throat", "laryngitis", "throat swab"] {
        assert!(
            mentions.iter().any(|m| m == expected),
            "mention '{expected}' missing from parsed CoT fixture"
        );
    }
    let extract = script["extract_entities"]["default"].as_str().unwrap();
    assert_eq!(
        parse_entity_list(extract),
        ["hoarse voice", "sore throat", "laryngitis", "throat swab"]
    );
}

#[test]
fn desk_scale_batch_of_516_completes_quickly() {
    let g = toy_graph();
    let cfg = rok_core::config::RunConfig::default();
    let backend =
        rok_core::llm::MockBackend::from_json_file(&fixtures_dir().join("mock_responses.json"))
            .unwrap();
    let pipe = rok_core::pipeline::Pipeline::new(&g, &cfg, &backend).unwrap();
    let questions: Vec<_> = (0..516)
        .map(|i| {
            rok_core::pipeline::QuestionRecord::new(
                format!("g{i:03}"),
                "I have a hoarse voice and a sore throat.",
            )
        })
        .collect();
    let started = std::time::Instant::now();
    let records = pipe.run_batch(&questions, 4);
    let elapsed = started.elapsed();
    assert_eq!(records.len(), 516);
    assert!(records.iter().all(|r| !r.degraded));
    assert!(
        elapsed.as_secs_f64() < 60.0,
        "desk-scale batch took {elapsed:?}"
    );
}
