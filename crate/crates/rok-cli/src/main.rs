//! `rok` — command-line front end for the reasoning-path engine.
//!
//! Subcommands: `graph validate|stats`, `link`, `paths`, `answer`,
//! `batch`, `eval`. Results go to stdout (add `--json` for machine-readable
//! output); diagnostics go to stderr. Exit codes: 0 success, 1 domain
//! error, 2 usage error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rok_core::config::{Provenance, RunConfig};
use rok_core::eval::{entity_match_accuracy, hits_at_1, AliasMap};
use rok_core::kg::{load_graph, GraphFormat};
use rok_core::linker::{link, MentionSet, MentionSource};
use rok_core::llm::{parse_entity_list, HttpBackend, LlmBackend, MockBackend};
use rok_core::paths::gen_main_candidates;
use rok_core::pipeline::{
    read_questions_jsonl, read_records_jsonl, records_to_jsonl, Pipeline, QuestionRecord,
};
use rok_core::ranker::{bucket_select, bucketize, pagerank, score_paths};
use rok_core::Score;

#[derive(Parser)]
#[command(
    name = "rok",
    version,
    about = "Knowledge-graph reasoning paths for LLM answers"
)]
struct Cli {
    /// Config file (TOML); defaults to $ROK_CONFIG when set
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Emit machine-readable JSON on stdout
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct EngineFlags {
    /// Maximum path length in hops (paths.max_hop)
    #[arg(long)]
    max_hop: Option<usize>,

    /// Per-pair path cap (paths.cap)
    #[arg(long)]
    cap: Option<usize>,

    /// Respect edge direction during traversal (paths.directed)
    #[arg(long)]
    directed: bool,

    /// PageRank damping factor (ranker.damping)
    #[arg(long)]
    damping: Option<Score>,

    /// Number of main paths to select (ranker.top_k)
    #[arg(long)]
    top_k: Option<usize>,

    /// Linker similarity threshold (linker.threshold)
    #[arg(long)]
    threshold: Option<Score>,
}

impl EngineFlags {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        let pairs: Vec<(&str, Option<String>)> = vec![
            ("paths.max_hop", self.max_hop.map(|v| v.to_string())),
            ("paths.cap", self.cap.map(|v| v.to_string())),
            ("paths.directed", self.directed.then(|| "true".to_string())),
            ("ranker.damping", self.damping.map(|v| v.to_string())),
            ("ranker.top_k", self.top_k.map(|v| v.to_string())),
            ("linker.threshold", self.threshold.map(|v| v.to_string())),
        ];
        for (key, value) in pairs {
            if let Some(value) = value {
                cfg.set(key, &value, Provenance::Flag)?;
            }
        }
        Ok(())
    }
}

#[derive(Args, Default)]
struct LlmFlags {
    /// Backend kind: mock or http (llm.kind)
    #[arg(long)]
    llm_kind: Option<String>,

    /// Chat-completions endpoint URL (llm.endpoint)
    #[arg(long)]
    endpoint: Option<String>,

    /// Model name sent to the endpoint (llm.model)
    #[arg(long)]
    model: Option<String>,

    /// Scripted-response JSON for the mock backend (llm.mock_file)
    #[arg(long)]
    mock_file: Option<PathBuf>,

    /// Combine CoT expansion and entity extraction into one call
    /// (llm.merged_expand_extract)
    #[arg(long)]
    merged: bool,

    /// Logical LLM calls allowed per question (llm.budget)
    #[arg(long)]
    budget: Option<usize>,

    /// Per-domain template overrides, JSON (llm.templates)
    #[arg(long)]
    templates: Option<PathBuf>,
}

impl LlmFlags {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        let pairs: Vec<(&str, Option<String>)> = vec![
            ("llm.kind", self.llm_kind.clone()),
            ("llm.endpoint", self.endpoint.clone()),
            ("llm.model", self.model.clone()),
            (
                "llm.mock_file",
                self.mock_file.as_ref().map(|p| p.display().to_string()),
            ),
            (
                "llm.merged_expand_extract",
                self.merged.then(|| "true".to_string()),
            ),
            ("llm.budget", self.budget.map(|v| v.to_string())),
            (
                "llm.templates",
                self.templates.as_ref().map(|p| p.display().to_string()),
            ),
        ];
        for (key, value) in pairs {
            if let Some(value) = value {
                cfg.set(key, &value, Provenance::Flag)?;
            }
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Inspect a triple file
    Graph {
        #[command(subcommand)]
        cmd: GraphCmd,
    },
    /// Resolve mention strings against the graph's entity catalog
    Link {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        format: Option<String>,
        /// Question text; parsed leniently into mention candidates
        #[arg(long)]
        question: String,
        /// Optional chain-of-thought text file contributing more mentions
        #[arg(long)]
        cot_file: Option<PathBuf>,
        #[command(flatten)]
        engine: EngineFlags,
    },
    /// Enumerate, rank, and select reasoning paths between named entities
    Paths {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        format: Option<String>,
        /// Comma-separated entity names
        #[arg(long)]
        entities: String,
        #[command(flatten)]
        engine: EngineFlags,
    },
    /// Answer one question end to end
    Answer {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        question: String,
        /// Skip the graph entirely (vanilla single-call reference)
        #[arg(long)]
        no_kg: bool,
        #[command(flatten)]
        engine: EngineFlags,
        #[command(flatten)]
        llm: LlmFlags,
    },
    /// Answer a JSONL file of questions, one record per line
    Batch {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads for question-level parallelism
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        engine: EngineFlags,
        #[command(flatten)]
        llm: LlmFlags,
    },
    /// Score batch output against its gold labels
    Eval {
        #[arg(long)]
        results: PathBuf,
        /// entity-match or hits1
        #[arg(long)]
        metric: String,
        /// JSON alias map: entity to alias list
        #[arg(long)]
        alias: Option<PathBuf>,
        /// Micro-average entity hits instead of macro category means
        #[arg(long)]
        micro: bool,
        /// Also write the JSON report to this path
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GraphCmd {
    /// Structural report: self-loops, isolated entities, unused relations
    Validate {
        path: PathBuf,
        #[arg(long)]
        format: Option<String>,
    },
    /// Entity / relation / triple counts
    Stats {
        path: PathBuf,
        #[arg(long)]
        format: Option<String>,
    },
}

fn graph_format(path: &Path, flag: &Option<String>) -> Result<GraphFormat> {
    match flag.as_deref() {
        None => Ok(GraphFormat::from_path(path)),
        Some("tsv") => Ok(GraphFormat::Tsv),
        Some("jsonl") | Some("json") => Ok(GraphFormat::JsonLines),
        Some(other) => bail!("unknown graph format '{other}' (expected tsv or jsonl)"),
    }
}

// Flags are applied before the file so they win; the loader skips
// flag-provenance keys.
fn build_config(
    cli_config: &Option<PathBuf>,
    apply_flags: impl FnOnce(&mut RunConfig) -> Result<()>,
) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    apply_flags(&mut cfg)?;
    let path = cli_config.clone().or_else(|| {
        std::env::var("ROK_CONFIG")
            .ok()
            .filter(|p| !p.is_empty())
            .map(PathBuf::from)
    });
    if let Some(path) = path {
        cfg.load_file(&path)
            .with_context(|| format!("loading config {}", path.display()))?;
    }
    Ok(cfg)
}

fn build_backend(cfg: &RunConfig) -> Result<Box<dyn LlmBackend>> {
    match cfg.llm.kind {
        rok_core::config::BackendKind::Mock => {
            let path = cfg
                .llm
                .mock_file
                .as_ref()
                .ok_or_else(|| anyhow!("llm.kind is 'mock' but llm.mock_file is not set"))?;
            Ok(Box::new(MockBackend::from_json_file(path).with_context(
                || format!("loading mock responses from {}", path.display()),
            )?))
        }
        rok_core::config::BackendKind::Http => {
            if cfg.llm.endpoint.is_empty() {
                bail!("llm.kind is 'http' but llm.endpoint is empty");
            }
            Ok(Box::new(HttpBackend::new(
                cfg.llm.endpoint.clone(),
                cfg.llm.model.clone(),
            )))
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

#[derive(Serialize)]
struct ValidateOutput {
    entities: usize,
    relations: usize,
    triples: usize,
    self_loops: Vec<String>,
    isolated_entities: Vec<String>,
    dangling_relations: Vec<String>,
}

fn cmd_graph(cmd: GraphCmd, json: bool) -> Result<()> {
    match cmd {
        GraphCmd::Stats { path, format } => {
            let format = graph_format(&path, &format)?;
            let (_, report) = load_graph(&path, format)?;
            if json {
                print_json(&report)?;
            } else {
                println!(
                    "entities={}, relations={}, triples={} (duplicates dropped: {})",
                    report.entities, report.relations, report.triples, report.duplicates_dropped
                );
            }
        }
        GraphCmd::Validate { path, format } => {
            let format = graph_format(&path, &format)?;
            let (g, _) = load_graph(&path, format)?;
            let rep = g.validate();
            let out = ValidateOutput {
                entities: rep.entities,
                relations: rep.relations,
                triples: rep.triples,
                self_loops: rep.self_loops.iter().map(|t| g.render_triple(t)).collect(),
                isolated_entities: rep
                    .isolated_entities
                    .iter()
                    .map(|&e| g.entity_surface(e).to_string())
                    .collect(),
                dangling_relations: rep
                    .dangling_relations
                    .iter()
                    .map(|&r| g.relation_surface(r).to_string())
                    .collect(),
            };
            if json {
                print_json(&out)?;
            } else {
                println!(
                    "entities={}, relations={}, triples={}",
                    out.entities, out.relations, out.triples
                );
                println!("self-loops: {}", out.self_loops.len());
                for t in &out.self_loops {
                    println!("  {t}");
                }
                println!("isolated entities: {}", out.isolated_entities.len());
                for e in &out.isolated_entities {
                    println!("  {e}");
                }
                println!("unused relations: {}", out.dangling_relations.len());
                for r in &out.dangling_relations {
                    println!("  {r}");
                }
            }
        }
    }
    Ok(())
}

fn cmd_link(
    graph: PathBuf,
    format: Option<String>,
    question: String,
    cot_file: Option<PathBuf>,
    engine: EngineFlags,
    cli_config: &Option<PathBuf>,
    json: bool,
) -> Result<()> {
    let cfg = build_config(cli_config, |c| engine.apply(c))?;
    let format = graph_format(&graph, &format)?;
    let (g, _) = load_graph(&graph, format)?;

    let mut raw: Vec<(String, MentionSource)> = parse_entity_list(&question)
        .into_iter()
        .map(|m| (m, MentionSource::Question))
        .collect();
    if let Some(path) = cot_file {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        raw.extend(
            parse_entity_list(&text)
                .into_iter()
                .map(|m| (m, MentionSource::Cot)),
        );
    }
    let mentions = MentionSet::new(raw);
    let linked = link(&mentions, &g, cfg.linker.threshold)?;

    if json {
        print_json(&linked)?;
    } else {
        println!("{:<30} {:<30} score", "mention", "entity");
        for l in &linked.entities {
            println!("{:<30} {:<30} {:.3}", l.mention, l.surface, l.score);
        }
        for u in &linked.unmatched {
            println!("{u:<30} {:<30} -", "(unmatched)");
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct PathsOutput {
    entities: Vec<String>,
    pagerank: Vec<(String, Score)>,
    buckets: BTreeMap<usize, Vec<String>>,
    selected: Vec<SelectedPath>,
    subgraph: Vec<String>,
    truncated: bool,
}

#[derive(Serialize)]
struct SelectedPath {
    text: String,
    key_count: usize,
    avg_pr: Score,
}

fn cmd_paths(
    graph: PathBuf,
    format: Option<String>,
    entities: String,
    engine: EngineFlags,
    cli_config: &Option<PathBuf>,
    json: bool,
) -> Result<()> {
    let cfg = build_config(cli_config, |c| engine.apply(c))?;
    let format = graph_format(&graph, &format)?;
    let (g, _) = load_graph(&graph, format)?;

    let names: Vec<&str> = entities
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if names.is_empty() {
        bail!("--entities needs at least one entity name");
    }
    let mut ids = Vec::new();
    for name in &names {
        let id = g
            .entity_by_name(name)
            .ok_or_else(|| anyhow!("entity '{name}' is not in the graph"))?;
        if !ids.contains(&id) {
            ids.push(id);
        }
    }

    let out = gen_main_candidates(
        &g,
        &ids,
        cfg.paths.max_hop,
        cfg.paths.cap,
        cfg.paths.directed,
    )?;

    if ids.len() == 1 {
        eprintln!("single entity given: showing its one-hop fallback subgraph");
    }
    if out.subgraph.is_empty() {
        if json {
            print_json(&PathsOutput {
                entities: names.iter().map(|s| s.to_string()).collect(),
                pagerank: Vec::new(),
                buckets: BTreeMap::new(),
                selected: Vec::new(),
                subgraph: Vec::new(),
                truncated: out.truncated,
            })?;
        } else {
            println!(
                "no paths connect the given entities within {} hops",
                cfg.paths.max_hop
            );
        }
        return Ok(());
    }

    let pr = pagerank::<Score>(
        &out.subgraph,
        cfg.ranker.damping,
        cfg.ranker.tol,
        cfg.ranker.max_iter,
        cfg.paths.directed,
    )?;
    let scored = score_paths(out.candidates, &pr, &g)?;
    let bucketed = bucketize(scored.clone(), ids.len(), &g)?;
    let selected = bucket_select(scored, ids.len(), cfg.ranker.top_k, &g)?;

    let result = PathsOutput {
        entities: names.iter().map(|s| s.to_string()).collect(),
        pagerank: pr
            .iter()
            .map(|(e, s)| (g.entity_surface(e).to_string(), s))
            .collect(),
        buckets: bucketed
            .buckets
            .iter()
            .map(|(k, paths)| (*k, paths.iter().map(|p| p.render(&g)).collect()))
            .collect(),
        selected: selected
            .iter()
            .map(|p| SelectedPath {
                text: p.render(&g),
                key_count: p.key_count,
                avg_pr: p.avg_pr.unwrap_or_default(),
            })
            .collect(),
        subgraph: out
            .subgraph
            .triples
            .iter()
            .map(|t| g.render_triple(t))
            .collect(),
        truncated: out.truncated,
    };

    if json {
        print_json(&result)?;
    } else {
        println!("node PageRank (damping {}):", cfg.ranker.damping);
        for (name, score) in &result.pagerank {
            println!("  {score:.6}  {name}");
        }
        for (key_count, paths) in result.buckets.iter().rev() {
            println!("bucket key_count={key_count} ({} paths):", paths.len());
            for p in paths {
                println!("  {p}");
            }
        }
        println!("selected top {}:", result.selected.len());
        for p in &result.selected {
            println!("  [kc={} avg_pr={:.6}] {}", p.key_count, p.avg_pr, p.text);
        }
        println!("subgraph ({} triples):", result.subgraph.len());
        for t in &result.subgraph {
            println!("  {t}");
        }
        if result.truncated {
            eprintln!("note: path enumeration hit the cap; results were truncated");
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_answer(
    graph: PathBuf,
    format: Option<String>,
    question: String,
    no_kg: bool,
    engine: EngineFlags,
    llm: LlmFlags,
    cli_config: &Option<PathBuf>,
    json: bool,
) -> Result<()> {
    let cfg = build_config(cli_config, |c| {
        engine.apply(c)?;
        llm.apply(c)
    })?;
    let format = graph_format(&graph, &format)?;
    let (g, _) = load_graph(&graph, format)?;
    let backend = build_backend(&cfg)?;
    let pipe = Pipeline::new(&g, &cfg, backend.as_ref())?;
    let q = QuestionRecord::new("cli", question);
    let rec = if no_kg {
        pipe.run_vanilla(&q)
    } else {
        pipe.run_question(&q)
    };

    if json {
        print_json(&rec)?;
    } else {
        if !rec.linked_entities.is_empty() {
            println!("linked entities:");
            for l in &rec.linked_entities {
                println!("  {} <- '{}' ({:.3})", l.surface, l.mention, l.score);
            }
        }
        if !rec.main_paths.is_empty() {
            println!("main reasoning paths:");
            for p in &rec.main_paths {
                println!("  [kc={}] {}", p.key_count, p.text);
            }
        }
        if !rec.neighbor_triples.is_empty() {
            println!("accepted neighbor triples:");
            for n in &rec.neighbor_triples {
                println!("  {}", n.text);
            }
        }
        println!("answer:\n{}", rec.answer);
        if rec.degraded {
            eprintln!("degraded run: {}", rec.degradation_reasons.join(", "));
        }
        for w in &rec.warnings {
            eprintln!("warning: {w}");
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct BatchSummary {
    questions: usize,
    degraded: usize,
    out: String,
}

#[allow(clippy::too_many_arguments)]
fn cmd_batch(
    graph: PathBuf,
    format: Option<String>,
    questions: PathBuf,
    out: PathBuf,
    jobs: usize,
    engine: EngineFlags,
    llm: LlmFlags,
    cli_config: &Option<PathBuf>,
    json: bool,
) -> Result<()> {
    if jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    let cfg = build_config(cli_config, |c| {
        engine.apply(c)?;
        llm.apply(c)
    })?;
    let format = graph_format(&graph, &format)?;
    let (g, _) = load_graph(&graph, format)?;
    let backend = build_backend(&cfg)?;
    let pipe = Pipeline::new(&g, &cfg, backend.as_ref())?;
    let qs = read_questions_jsonl(&questions)?;
    let records = pipe.run_batch(&qs, jobs);
    std::fs::write(&out, records_to_jsonl(&records)?)?;
    let summary = BatchSummary {
        questions: records.len(),
        degraded: records.iter().filter(|r| r.degraded).count(),
        out: out.display().to_string(),
    };
    if json {
        print_json(&summary)?;
    } else {
        println!(
            "answered {} questions ({} degraded) -> {}",
            summary.questions, summary.degraded, summary.out
        );
    }
    Ok(())
}

fn cmd_eval(
    results: PathBuf,
    metric: String,
    alias: Option<PathBuf>,
    micro: bool,
    out: Option<PathBuf>,
    cli_config: &Option<PathBuf>,
    json: bool,
) -> Result<()> {
    let cfg = build_config(cli_config, |_| Ok(()))?;
    let records = read_records_jsonl(&results)?;
    let aliases = match alias {
        Some(path) => AliasMap::from_json_file(&path)?,
        None => AliasMap::default(),
    };
    let micro = micro || cfg.eval.micro;

    let report_json = match metric.as_str() {
        "entity-match" => {
            let report = entity_match_accuracy(&records, &aliases, micro)?;
            if !json {
                for (name, rate) in [
                    ("disease", &report.disease),
                    ("medication", &report.medication),
                    ("test", &report.test),
                    ("open", &report.open),
                ] {
                    if let Some(r) = rate {
                        println!("{name:<12} {:.4}  ({} questions)", r.rate, r.questions);
                    }
                }
                println!(
                    "overall      {:.4}  ({} average)",
                    report.overall, report.averaging
                );
                println!("degraded runs: {}", report.degraded_runs);
            }
            serde_json::to_value(&report)?
        }
        "hits1" => {
            let report = hits_at_1(&records, &aliases);
            if !json {
                println!(
                    "hits@1       {:.4}  ({}/{})",
                    report.rate, report.hits, report.total
                );
            }
            serde_json::to_value(&report)?
        }
        other => bail!("unknown metric '{other}' (expected entity-match or hits1)"),
    };

    if json {
        println!("{}", serde_json::to_string_pretty(&report_json)?);
    }
    if let Some(path) = out {
        std::fs::write(&path, serde_json::to_string_pretty(&report_json)?)?;
        eprintln!("report written to {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Graph { cmd } => cmd_graph(cmd, cli.json),
        Command::Link {
            graph,
            format,
            question,
            cot_file,
            engine,
        } => cmd_link(
            graph,
            format,
            question,
            cot_file,
            engine,
            &cli.config,
            cli.json,
        ),
        Command::Paths {
            graph,
            format,
            entities,
            engine,
        } => cmd_paths(graph, format, entities, engine, &cli.config, cli.json),
        Command::Answer {
            graph,
            format,
            question,
            no_kg,
            engine,
            llm,
        } => cmd_answer(
            graph,
            format,
            question,
            no_kg,
            engine,
            llm,
            &cli.config,
            cli.json,
        ),
        Command::Batch {
            graph,
            format,
            questions,
            out,
            jobs,
            engine,
            llm,
        } => cmd_batch(
            graph,
            format,
            questions,
            out,
            jobs,
            engine,
            llm,
            &cli.config,
            cli.json,
        ),
        Command::Eval {
            results,
            metric,
            alias,
            micro,
            out,
        } => cmd_eval(results, metric, alias, micro, out, &cli.config, cli.json),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
