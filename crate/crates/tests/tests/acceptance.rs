//! One line per acceptance criterion. Runs as a plain binary so the lines
//! come out in order and unbuffered.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use dsx_core::engine::synth::synthetic_corpus;
use dsx_core::engine::{
    ground_truth, measure_recall_with_truth, Engine, QueryGenerator, SearchConfig, Strategy,
};
use dsx_core::features::FeatureVector;
use dsx_core::index::{build_index, VectorIndex};
use dsx_core::ingestion::{CodeChange, Corpus};
use dsx_core::matcher::match_texts;
use dsx_core::query::Query;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn motivating_example() -> Outcome {
    let corpus: Corpus = [
        CodeChange::new(&["if(check(a - 1, b)){"], &["if(check(a - 1, c)){"]),
        CodeChange::new(&["if(isValidPoint(x, y)){"], &["if(isValidPoint(y, x)){"]),
        CodeChange::new(
            &["while(var > k - 1){", "  sum += count(var);"],
            &["while(var > k){", "  sum += 2 * count(var);"],
        ),
    ]
    .into_iter()
    .collect();
    let engine = Engine::build(corpus, 1000).unwrap();
    let q = Query::new(
        &["if(ID<1>(EXPR<1>, EXPR<2>)){", "  <...>"],
        &["if(ID<1>(EXPR<2>, EXPR<1>)){", "  <...>"],
    );
    let out = engine.search(&q, &SearchConfig::default()).unwrap();
    let ids = out.ids();
    let bindings: Vec<(String, String)> = out
        .results
        .first()
        .map(|r| r.bindings.clone().into_iter().collect())
        .unwrap_or_default();
    let expected = [("EXPR<1>", "x"), ("EXPR<2>", "y"), ("ID<1>", "isValidPoint")]
        .map(|(a, b)| (a.to_string(), b.to_string()));
    outcome(ids == [1] && bindings == expected, format!("results {ids:?}, bindings {bindings:?}"))
}

fn query_examples() -> Outcome {
    let m = |old: &[&str], new: &[&str], q_old: &[&str], q_new: &[&str]| {
        match_texts(&CodeChange::new(old, new), &Query::new(q_old, q_new)).unwrap().matched
    };
    let none: [&str; 0] = [];
    let positives = [
        m(&["evt.trig();"], &none, &["ID.ID();"], &["_"]),
        m(
            &["if (x > 0)", "  y = 1;"],
            &["if (x < 0)", "  y = 0;"],
            &["if (EXPR)", "  ID OP LT;"],
            &["if (EXPR)", "  ID OP LT;"],
        ),
        m(&["run(k);", "now(k);"], &["runNow(k);"], &["run(EXPR<0>);", "now(EXPR<0>);"], &["runNow(EXPR<0>);"]),
    ];
    let negatives = [
        m(&["run(k);", "now(j);"], &["runNow(k);"], &["run(EXPR<0>);", "now(EXPR<0>);"], &["runNow(EXPR<0>);"]),
        m(&["run(k);", "now(k);"], &["runNow(j);"], &["run(EXPR<0>);", "now(EXPR<0>);"], &["runNow(EXPR<0>);"]),
        m(&["evt.trig();"], &["evt.fire();"], &["ID.ID();"], &["_"]),
        m(
            &["if (x > 0)", "  y = 1;"],
            &["if (x < 0)", "  y = z;"],
            &["if (EXPR)", "  ID OP LT;"],
            &["if (EXPR)", "  ID OP LT;"],
        ),
    ];
    outcome(
        positives.iter().all(|&b| b) && negatives.iter().all(|&b| !b),
        format!("rows {positives:?}, perturbed {negatives:?}"),
    )
}

fn scaling_factor() -> Outcome {
    let v = |b: [bool; 3]| FeatureVector::from_bits(&b);
    let index = VectorIndex::from_vectors(3, &[v([true, true, true]), v([false, false, false])]).unwrap();
    let hits = index.retrieve(&v([false, false, true]), 2).unwrap();
    let order: Vec<usize> = hits.iter().map(|c| c.change_id).collect();
    let d: Vec<f64> = hits.iter().map(|c| c.distance).collect();
    let pass = order == [0, 1] && (d[0] - 4.25f64.sqrt()).abs() < 1e-9 && (d[1] - 6.25f64.sqrt()).abs() < 1e-9;
    outcome(pass, format!("order {order:?}, distances {d:?}"))
}

fn oracle_equivalence() -> Outcome {
    let mut pairs = 0;
    let mut positives = 0;
    let mut bad = Vec::new();
    for seed in [7, 8] {
        let a = support::oracle_agreement(seed, 80, 80);
        pairs += a.pairs;
        positives += a.positives;
        bad.extend(a.disagreements);
    }
    let first = bad.first().cloned().unwrap_or_default();
    outcome(
        pairs >= 5000 && bad.is_empty(),
        format!("{pairs} pairs, {positives} matching, {} disagreements {first}", bad.len()),
    )
}

fn pruning_soundness() -> Outcome {
    let p = support::pruning_soundness(11, 100, 100);
    outcome(
        p.pairs >= 10_000 && p.unsound == 0,
        format!("{} pairs, {} pruned, {} matching, {} pruned matches", p.pairs, p.pruned, p.matched, p.unsound),
    )
}

fn precision() -> Outcome {
    let p = support::precision(5000, 100, 61);
    outcome(
        p.queries == 100 && p.failures == 0,
        format!("{} queries, {} results, {} not re-verified", p.queries, p.results, p.failures),
    )
}

struct RecallSetup {
    corpus: Corpus,
    index: VectorIndex,
    queries: Vec<dsx_core::engine::GeneratedQuery>,
    truth: Vec<std::collections::BTreeSet<usize>>,
}

fn recall_setup() -> RecallSetup {
    let corpus = synthetic_corpus(5000, 71);
    corpus.prepare_all();
    let index = build_index(&corpus, 1000).unwrap();
    let mut gen = QueryGenerator::new(72);
    let mut queries = Vec::new();
    for s in Strategy::ALL {
        queries.extend(gen.generate(&corpus, s, 20).unwrap());
    }
    let truth = ground_truth(&queries, &corpus, &SearchConfig::default()).unwrap();
    RecallSetup {
        corpus,
        index,
        queries,
        truth,
    }
}

fn recall_at(setup: &RecallSetup, k: usize) -> dsx_core::engine::RecallReport {
    let config = SearchConfig { k, ..SearchConfig::default() };
    measure_recall_with_truth(&setup.queries, &setup.truth, &setup.corpus, &setup.index, &config).unwrap()
}

fn recall(setup: &RecallSetup) -> Outcome {
    let r = recall_at(setup, 1000);
    let as_is = r.strategy(Strategy::AsIs).unwrap().mean_recall;
    let per: Vec<String> = r
        .per_strategy
        .iter()
        .map(|s| format!("{} {:.3}", s.strategy, s.mean_recall))
        .collect();
    outcome(
        as_is >= 0.90 && r.mean_recall >= 0.75,
        format!("k=1000: {}, mean {:.3}", per.join(", "), r.mean_recall),
    )
}

fn k_monotonicity(setup: &RecallSetup) -> Outcome {
    let low = recall_at(setup, 500).mean_recall;
    let high = recall_at(setup, 2000).mean_recall;
    outcome(high >= low, format!("k=500 {low:.3}, k=2000 {high:.3}"))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn latency() -> Outcome {
    let t = Instant::now();
    let engine = Engine::build(synthetic_corpus(100_000, 81), 1000).unwrap();
    let built = t.elapsed();
    let mut gen = QueryGenerator::new(82);
    let mut queries = Vec::new();
    for s in Strategy::ALL {
        queries.extend(gen.generate(&engine.corpus, s, 5).unwrap());
    }
    let indexed = SearchConfig::default();
    let exhaustive = SearchConfig::exhaustive();
    let mut fast = Vec::new();
    let mut slow = Vec::new();
    for q in &queries {
        let t = Instant::now();
        engine.search(&q.query, &indexed).unwrap();
        fast.push(t.elapsed().as_secs_f64());
        let t = Instant::now();
        engine.search(&q.query, &exhaustive).unwrap();
        slow.push(t.elapsed().as_secs_f64());
    }
    let (f, s) = (median(fast), median(slow));
    let ratio = s / f;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    outcome(
        f < 2.0 && ratio >= 5.0,
        format!(
            "100000 changes (built in {:.1}s, {cores} cores), {} queries: indexed median {:.4}s, exhaustive median {:.4}s, ratio {ratio:.1}x",
            built.as_secs_f64(),
            queries.len(),
            f,
            s
        ),
    )
}

fn persistence() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (queries, mismatches) = support::persistence_round_trip(dir.path(), 5000, 100, 91);
    outcome(queries == 100 && mismatches == 0, format!("{queries} queries, {mismatches} differing outputs"))
}

fn run(name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let o = f();
    let took = t.elapsed();
    let in_time = took <= limit;
    let pass = o.pass && in_time;
    let time = if in_time {
        format!("{:.2}s", took.as_secs_f64())
    } else {
        format!("{:.2}s, over the {}s limit", took.as_secs_f64(), limit.as_secs())
    };
    println!("{} {name}: {} ({time})", if pass { "PASS" } else { "FAIL" }, o.detail);
    pass
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let mut passed = vec![
        run("motivating example", secs(1), motivating_example),
        run("query examples conformance", secs(1), query_examples),
        run("scaling factor", secs(1), scaling_factor),
        run("matcher oracle equivalence", secs(300), oracle_equivalence),
        run("pruning soundness", secs(300), pruning_soundness),
        run("precision", secs(600), precision),
    ];
    let t = Instant::now();
    let setup = recall_setup();
    let setup_time = t.elapsed();
    passed.push(run("recall at k=1000", secs(1800) - setup_time, || recall(&setup)));
    passed.push(run("recall grows with k", secs(1800) - setup_time, || k_monotonicity(&setup)));
    passed.push(run("latency", secs(3600), latency));
    passed.push(run("index persistence", secs(60), persistence));
    let ok = passed.iter().filter(|&&p| p).count();
    println!("{ok}/{} acceptance criteria passed", passed.len());
    if ok == passed.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
