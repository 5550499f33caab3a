use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dsx_core::engine::synth::synthetic_corpus;
use dsx_core::engine::{
    ground_truth, measure_recall_with_truth, Engine, QueryGenerator, SearchConfig, SearchMode, Strategy,
    DEFAULT_MAX_RESULTS,
};
use dsx_core::features::DEFAULT_LENGTH;
use dsx_core::index::{build_index, VectorIndex, DEFAULT_K};
use dsx_core::ingestion::{split_hunks, Corpus};
use dsx_core::query::Query;
use dsx::api::SearchResponse;

#[derive(Parser)]
#[command(name = "dsx", version, about = "Search code changes by example")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Featurize a corpus and write its index.
    Index(IndexArgs),
    /// Run one query.
    Search(SearchArgs),
    /// Measure recall of indexed search against exhaustive search.
    Eval(EvalArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Write a synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Args)]
struct IndexArgs {
    /// JSON Lines corpus; written here when --git-log is given.
    #[arg(long, env = "DSX_CORPUS")]
    corpus: PathBuf,
    /// Raw `git log -p` output to split into hunks.
    #[arg(long)]
    git_log: Option<PathBuf>,
    #[arg(long, env = "DSX_INDEX")]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_LENGTH)]
    l: usize,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, env = "DSX_INDEX")]
    index: PathBuf,
    #[arg(long, env = "DSX_CORPUS")]
    corpus: PathBuf,
    /// Old side of the query; `\n` separates lines.
    #[arg(long, requires = "new", conflicts_with = "query")]
    old: Option<String>,
    #[arg(long, requires = "old", conflicts_with = "query")]
    new: Option<String>,
    /// Both sides as `old -> new`.
    #[arg(long)]
    query: Option<String>,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_RESULTS)]
    max_results: usize,
    /// Match against every change instead of the nearest k.
    #[arg(long)]
    exhaustive: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Strategy to evaluate; all four when omitted.
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "DSX_CORPUS", conflicts_with = "synthetic")]
    corpus: Option<PathBuf>,
    /// Size of a generated corpus, used when no corpus is given.
    #[arg(long, default_value_t = 5000)]
    synthetic: usize,
    #[arg(long, default_value_t = 1000)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_LENGTH)]
    l: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "DSX_INDEX")]
    index: PathBuf,
    #[arg(long, env = "DSX_CORPUS")]
    corpus: PathBuf,
    #[arg(long, env = "DSX_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Index(a) => index(a),
        Command::Search(a) => search(a),
        Command::Eval(a) => eval(a),
        Command::Serve(a) => serve(a),
        Command::Synth(a) => {
            synthetic_corpus(a.n, a.seed).save(&a.out)?;
            println!("wrote {} changes to {}", a.n, a.out.display());
            Ok(())
        }
    }
}

fn load_engine(corpus: &Path, index: &Path) -> Result<Engine> {
    let corpus = Corpus::load(corpus).with_context(|| format!("reading corpus {}", corpus.display()))?;
    let index = VectorIndex::load(index).with_context(|| format!("reading index {}", index.display()))?;
    Ok(Engine::new(corpus, index)?)
}

fn index(a: IndexArgs) -> Result<()> {
    let corpus = match &a.git_log {
        Some(log) => {
            let text = fs::read_to_string(log).with_context(|| format!("reading {}", log.display()))?;
            let repo = log.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let split = split_hunks(&text, &repo)?;
            log::info!("{} hunks kept, {} skipped", split.changes.len(), split.skipped.len());
            let corpus: Corpus = split.changes.into_iter().collect();
            corpus.save(&a.corpus)?;
            corpus
        }
        None => Corpus::load(&a.corpus).with_context(|| format!("reading corpus {}", a.corpus.display()))?,
    };
    let rejected = corpus.validate();
    for (id, why) in rejected.iter().take(5) {
        log::warn!("change {id} not searchable: {why}");
    }
    let index = build_index(&corpus, a.l)?;
    index.save(&a.out)?;
    println!(
        "indexed {} changes ({} unparseable) into {}",
        corpus.len(),
        rejected.len(),
        a.out.display()
    );
    Ok(())
}

fn search(a: SearchArgs) -> Result<()> {
    let query = match (&a.query, &a.old, &a.new) {
        (Some(q), _, _) => Query::from_arrow(&q.replace("\\n", "\n"))?,
        (None, Some(old), Some(new)) => Query::from_texts(&old.replace("\\n", "\n"), &new.replace("\\n", "\n")),
        _ => bail!("give either --query or both --old and --new"),
    };
    let engine = load_engine(&a.corpus, &a.index)?;
    let config = SearchConfig {
        k: a.k,
        max_results: a.max_results,
        mode: if a.exhaustive { SearchMode::Exhaustive } else { SearchMode::Indexed },
        ..engine.defaults
    };
    let outcome = engine.search(&query, &config)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&SearchResponse::from(outcome))?);
        return Ok(());
    }
    for r in &outcome.results {
        let distance = r.distance.map(|d| format!(" distance {d:.3}")).unwrap_or_default();
        let c = &r.change;
        println!("#{} change {}{distance} {} {} {}", r.rank, c.id, c.repo, c.commit, c.file);
        for l in &c.old_lines {
            println!("- {l}");
        }
        for l in &c.new_lines {
            println!("+ {l}");
        }
        for (k, v) in &r.bindings {
            println!("  {k} = {v}");
        }
    }
    let s = outcome.stats;
    println!(
        "{} results, {} retrieved, {} pruned, {} checked in {} ms",
        outcome.results.len(),
        s.retrieved,
        s.pruned,
        s.checked,
        s.elapsed.as_millis()
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let corpus = match &a.corpus {
        Some(p) => Corpus::load(p)?,
        None => synthetic_corpus(a.synthetic, a.seed),
    };
    corpus.prepare_all();
    let index = build_index(&corpus, a.l)?;
    let strategies = match a.strategy {
        Some(s) => vec![s],
        None => Strategy::ALL.to_vec(),
    };
    let mut gen = QueryGenerator::new(a.seed);
    let mut queries = Vec::new();
    for s in strategies {
        queries.extend(gen.generate(&corpus, s, a.n)?);
    }
    let config = SearchConfig { k: a.k, l: a.l, ..SearchConfig::default() };
    let truth = ground_truth(&queries, &corpus, &config)?;
    let report = measure_recall_with_truth(&queries, &truth, &corpus, &index, &config)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(());
    }
    println!("corpus {} changes, k = {}", corpus.len(), report.k);
    for s in &report.per_strategy {
        println!(
            "{:<12} {:>3} queries  recall {:.3}  results/query {:.1}",
            s.strategy.name(),
            s.queries,
            s.mean_recall,
            s.mean_results
        );
    }
    println!("mean recall {:.3}", report.mean_recall);
    let z = &report.sizes;
    println!(
        "query {:.1} chars, result {:.1} chars, {:.1} results/query",
        z.mean_query_chars, z.mean_result_chars, z.mean_results_per_query
    );
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let engine = load_engine(&a.corpus, &a.index)?;
    engine.corpus.prepare_all();
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(dsx::server::serve(Arc::new(engine), SocketAddr::new(a.host, a.port)))?;
    Ok(())
}
