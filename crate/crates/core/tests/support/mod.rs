#![allow(dead_code)]

//! Reference implementations shared by the integration tests.

use std::collections::BTreeMap;

use dsx_core::engine::{QueryGenerator, Strategy};
use dsx_core::grammar::{rule, Category, NodeId, NodeKind, ParseTree, PlaceholderSpec};
use dsx_core::ingestion::{prepare, CodeChange, PreparedChange};
use dsx_core::matcher::{matches, prune_by_leaves};
use dsx_core::query::{ParsedQuery, Query};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Env = BTreeMap<PlaceholderSpec, String>;

/// S-expression of a subtree, used to compare bound subtrees.
pub fn canon(t: &ParseTree, id: NodeId) -> String {
    let n = t.node(id);
    let mut s = format!("({:?} {}", n.kind, n.label);
    for &c in &n.children {
        s.push(' ');
        s.push_str(&canon(t, c));
    }
    s.push(')');
    s
}

fn accepts(spec: PlaceholderSpec, t: &ParseTree, c: NodeId) -> bool {
    let n = t.node(c);
    match spec.category {
        Category::Expr => n.kind == NodeKind::Nonterminal && rule::EXPRESSIONS.contains(&n.label.as_str()),
        cat => n.kind == NodeKind::Terminal && n.terminal_class == cat.terminal_class(),
    }
}

fn is_stmt(t: &ParseTree, c: NodeId) -> bool {
    let n = t.node(c);
    n.kind == NodeKind::Nonterminal && rule::STATEMENTS.contains(&n.label.as_str())
}

fn is_expr(t: &ParseTree, c: NodeId) -> bool {
    let n = t.node(c);
    n.kind == NodeKind::Nonterminal && rule::EXPRESSIONS.contains(&n.label.as_str())
}

/// Every environment under which query node `q` expands to change node `c`.
fn node_envs(qt: &ParseTree, q: NodeId, ct: &ParseTree, c: NodeId, env: &Env) -> Vec<Env> {
    let (qn, cn) = (qt.node(q), ct.node(c));
    match qn.kind {
        NodeKind::Terminal => {
            if cn.kind == NodeKind::Terminal && cn.label == qn.label {
                vec![env.clone()]
            } else {
                vec![]
            }
        }
        NodeKind::Nonterminal => {
            if cn.kind != NodeKind::Nonterminal || cn.label != qn.label {
                return vec![];
            }
            let list = qn.label == rule::SNIPPET || qn.label == rule::BLOCK;
            seq_envs(qt, &qn.children, ct, &cn.children, list, env)
        }
        NodeKind::Placeholder => {
            let spec = qn.placeholder.unwrap();
            if !accepts(spec, ct, c) {
                return vec![];
            }
            if spec.name.is_none() {
                return vec![env.clone()];
            }
            let text = canon(ct, c);
            match env.get(&spec) {
                Some(bound) if *bound != text => vec![],
                Some(_) => vec![env.clone()],
                None => {
                    let mut e = env.clone();
                    e.insert(spec, text);
                    vec![e]
                }
            }
        }
        NodeKind::Wildcard => vec![env.clone()],
        NodeKind::EmptyMarker => vec![],
    }
}

/// Expansions of query children `qs` that equal change children `cs` exactly.
fn seq_envs(qt: &ParseTree, qs: &[NodeId], ct: &ParseTree, cs: &[NodeId], list: bool, env: &Env) -> Vec<Env> {
    let Some((&q, qrest)) = qs.split_first() else {
        return if cs.is_empty() { vec![env.clone()] } else { vec![] };
    };
    let mut out = Vec::new();
    if qt.node(q).kind == NodeKind::Wildcard {
        let max = if list {
            cs.iter().take_while(|&&c| is_stmt(ct, c)).count()
        } else {
            usize::from(cs.first().is_some_and(|&c| is_stmt(ct, c) || is_expr(ct, c)))
        };
        for n in 0..=max {
            out.extend(seq_envs(qt, qrest, ct, &cs[n..], list, env));
        }
        return out;
    }
    let Some((&c, crest)) = cs.split_first() else {
        return out;
    };
    for e in node_envs(qt, q, ct, c, env) {
        out.extend(seq_envs(qt, qrest, ct, crest, list, &e));
    }
    out
}

fn lists(t: &ParseTree) -> Vec<Vec<NodeId>> {
    let root = t.node(t.root());
    if root.kind != NodeKind::Nonterminal {
        return vec![];
    }
    let mut out = vec![root.children.clone()];
    for id in t.ids() {
        let n = t.node(id);
        if n.kind != NodeKind::Nonterminal {
            continue;
        }
        if n.label == rule::BLOCK {
            out.push(n.children.clone());
        } else if n.label == rule::IF || n.label == rule::WHILE {
            for &c in &n.children {
                if is_stmt(t, c) && t.node(c).label != rule::BLOCK {
                    out.push(vec![c]);
                }
            }
        }
    }
    out
}

/// All increasing index tuples of length `r` drawn from `0..n`.
fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    if r == 0 {
        return vec![vec![]];
    }
    if n < r {
        return vec![];
    }
    let mut out = combinations(n - 1, r);
    for mut c in combinations(n - 1, r - 1) {
        c.push(n - 1);
        out.push(c);
    }
    out
}

fn side_envs(qt: &ParseTree, ct: &ParseTree, env: &Env) -> Vec<Env> {
    if qt.node(qt.root()).kind == NodeKind::EmptyMarker {
        let blank = ct.node(ct.root()).children.is_empty();
        return if blank { vec![env.clone()] } else { vec![] };
    }
    if let Some(e) = qt.bare_expression() {
        return ct
            .ids()
            .filter(|&c| is_expr(ct, c))
            .flat_map(|c| node_envs(qt, e, ct, c, env))
            .collect();
    }
    let stmts: Vec<NodeId> = qt
        .children(qt.root())
        .iter()
        .copied()
        .filter(|&q| qt.node(q).kind != NodeKind::Wildcard)
        .collect();
    let mut out = Vec::new();
    for list in lists(ct) {
        for pick in combinations(list.len(), stmts.len()) {
            let mut envs = vec![env.clone()];
            for (&q, &i) in stmts.iter().zip(&pick) {
                envs = envs.iter().flat_map(|e| node_envs(qt, q, ct, list[i], e)).collect();
            }
            out.extend(envs);
        }
    }
    out
}

/// Brute-force reference matcher: enumerates every expansion of both query
/// sides and reports whether a consistent one exists.
pub fn oracle_matches(change: &PreparedChange, query: &ParsedQuery) -> bool {
    side_envs(&query.old, &change.old, &Env::new())
        .iter()
        .any(|e| !side_envs(&query.new, &change.new, e).is_empty())
}

pub const STATEMENTS: &[&str] = &[
    "x = 1;",
    "x = y + 1;",
    "y = x * 2;",
    "foo(x, y);",
    "foo(y, x);",
    "bar(x);",
    "int z = foo(x);",
    "x++;",
    "return x;",
    "return foo(x) + 1;",
    "if (x > 0) y = 1;",
    "if (x) { y = 2; }",
    "while (y) { y = y - 1; }",
    "a.b(c);",
    "z = !x;",
];

pub const QUERY_STATEMENTS: &[&str] = &[
    "<...>",
    "ID = LT;",
    "ID = EXPR;",
    "x = EXPR<1>;",
    "EXPR<1> = EXPR<1> OP LT;",
    "ID<1>(EXPR<1>, EXPR<2>);",
    "ID<1>(EXPR<2>, EXPR<1>);",
    "foo(EXPR, EXPR);",
    "bar(ID<1>);",
    "int ID = EXPR;",
    "ID++;",
    "return EXPR;",
    "return EXPR binOP LT;",
    "if (EXPR) <...>",
    "if (EXPR) { <...> }",
    "while (EXPR<1>) { <...> }",
    "ID.ID(EXPR);",
    "ID = unOP ID;",
    "y = EXPR<2> * LT;",
];

fn pick_lines<R: Rng>(rng: &mut R, pool: &[&str], max: usize) -> Vec<String> {
    let n = rng.gen_range(1..=max);
    (0..n).map(|_| pool.choose(rng).unwrap().to_string()).collect()
}

pub fn random_code<R: Rng>(rng: &mut R) -> Vec<String> {
    if rng.gen_bool(0.05) {
        return vec![];
    }
    pick_lines(rng, STATEMENTS, 3)
}

pub fn random_query_side<R: Rng>(rng: &mut R) -> Vec<String> {
    match rng.gen_range(0..20) {
        0 => vec!["_".into()],
        1 | 2 => vec![["EXPR", "foo(EXPR<1>)", "x + LT", "ID(ID)"].choose(rng).unwrap().to_string()],
        3..=10 => pick_lines(rng, QUERY_STATEMENTS, 1),
        _ => pick_lines(rng, QUERY_STATEMENTS, 3),
    }
}

/// Small changes crossed with hand-built and generated queries.
pub fn family(seed: u64, changes: usize, queries: usize) -> (Vec<PreparedChange>, Vec<(Query, ParsedQuery)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cs = Vec::new();
    while cs.len() < changes {
        let c = CodeChange::new(&random_code(&mut rng), &random_code(&mut rng));
        if let Ok(p) = prepare(&c) {
            cs.push(p);
        }
    }
    let mut qs = Vec::new();
    while qs.len() < queries {
        let q = Query::new(&random_query_side(&mut rng), &random_query_side(&mut rng));
        if let Ok(p) = q.parse() {
            qs.push((q, p));
        }
    }
    let mut gen = QueryGenerator::new(seed);
    for (i, c) in cs.iter().enumerate().take(queries / 2) {
        let q = gen.query_for(c, Strategy::ALL[i % 4]);
        let p = q.parse().unwrap();
        qs.push((q, p));
    }
    (cs, qs)
}

#[derive(Debug, Default)]
pub struct Agreement {
    pub pairs: usize,
    pub positives: usize,
    pub disagreements: Vec<String>,
}

pub fn oracle_agreement(seed: u64, changes: usize, queries: usize) -> Agreement {
    let (cs, qs) = family(seed, changes, queries);
    let mut out = Agreement::default();
    for c in &cs {
        for (q, p) in &qs {
            out.pairs += 1;
            let expected = oracle_matches(c, p);
            out.positives += usize::from(expected);
            if matches(c, p).matched != expected {
                out.disagreements.push(format!(
                    "{:?} -> {:?} with {q:?}: oracle says {expected}",
                    c.old.pretty_lines(),
                    c.new.pretty_lines()
                ));
            }
        }
    }
    out
}

#[derive(Debug, Default)]
pub struct Pruning {
    pub pairs: usize,
    pub pruned: usize,
    pub matched: usize,
    /// Pairs pruned although they match.
    pub unsound: usize,
}

pub fn pruning_soundness(seed: u64, changes: usize, queries: usize) -> Pruning {
    let (cs, qs) = family(seed, changes, queries);
    let mut out = Pruning::default();
    for c in &cs {
        for (_, p) in &qs {
            out.pairs += 1;
            let keep = prune_by_leaves(c, p);
            let m = matches(c, p).matched;
            out.pruned += usize::from(!keep);
            out.matched += usize::from(m);
            out.unsound += usize::from(!keep && m);
        }
    }
    out
}

/// Squared distances computed directly from the definition, in f64.
pub fn brute_force_ranking(
    vectors: &[dsx_core::features::FeatureVector],
    query: &dsx_core::features::FeatureVector,
) -> Vec<(usize, f64)> {
    let m = query.len() as f64 / 2.0 + 1.0;
    let mut out: Vec<(usize, f64)> = vectors
        .iter()
        .enumerate()
        .map(|(id, p)| {
            let d2: f64 = (0..query.len())
                .map(|i| {
                    let diff = m * f64::from(u8::from(query.get(i))) - f64::from(u8::from(p.get(i)));
                    diff * diff
                })
                .sum();
            (id, d2.sqrt())
        })
        .collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    out
}

/// Saves and reloads an index over a synthetic corpus and compares the
/// retrieval output of generated queries. Returns (queries, mismatches).
pub fn persistence_round_trip(dir: &std::path::Path, corpus_size: usize, queries: usize, seed: u64) -> (usize, usize) {
    use dsx_core::engine::synth::synthetic_corpus;
    use dsx_core::features::Featurizer;
    use dsx_core::index::{build_index, VectorIndex};

    let corpus = synthetic_corpus(corpus_size, seed);
    let index = build_index(&corpus, 1000).unwrap();
    let path = dir.join("round_trip.dsix");
    index.save(&path).unwrap();
    let loaded = VectorIndex::load(&path).unwrap();
    assert_eq!(
        std::fs::metadata(&path).unwrap().len() as usize,
        VectorIndex::file_size(1000, corpus_size)
    );
    let mut gen = QueryGenerator::new(seed);
    let fz = Featurizer::default();
    let mut mismatches = 0;
    let mut done = 0;
    for (i, strategy) in Strategy::ALL.iter().cycle().take(queries).enumerate() {
        let q = gen
            .query_for(corpus.prepared(i * 7 % corpus_size).unwrap(), *strategy)
            .parse()
            .unwrap();
        let v = fz.featurize_query(&q);
        let a = index.retrieve(&v, 500).unwrap();
        let b = loaded.retrieve(&v, 500).unwrap();
        let same = a.len() == b.len()
            && a.iter().zip(&b).all(|(x, y)| {
                x.change_id == y.change_id && x.distance.to_bits() == y.distance.to_bits()
            });
        mismatches += usize::from(!same);
        done += 1;
    }
    (done, mismatches)
}

#[derive(Debug, Default)]
pub struct Precision {
    pub queries: usize,
    pub results: usize,
    /// Returned results that do not re-verify.
    pub failures: usize,
}

/// Runs generated queries through the indexed engine and re-checks every
/// result from its source text.
pub fn precision(corpus_size: usize, queries: usize, seed: u64) -> Precision {
    use dsx_core::engine::synth::synthetic_corpus;
    use dsx_core::engine::{Engine, SearchConfig};
    use dsx_core::matcher::match_texts;

    let corpus = synthetic_corpus(corpus_size, seed);
    let engine = Engine::build(corpus, 1000).unwrap();
    let mut gen = QueryGenerator::new(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = SearchConfig { k: 1000, max_results: 1000, ..SearchConfig::default() };
    let mut out = Precision::default();
    for i in 0..queries {
        let id = rng.gen_range(0..corpus_size);
        let Ok(change) = engine.corpus.prepared(id) else { continue };
        let q = gen.query_for(change, Strategy::ALL[i % 4]);
        let found = engine.search(&q, &config).unwrap();
        out.queries += 1;
        for r in &found.results {
            out.results += 1;
            out.failures += usize::from(!match_texts(&r.change, &q).unwrap().matched);
        }
    }
    out
}
