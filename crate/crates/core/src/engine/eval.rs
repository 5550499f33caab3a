//! Ground-truth query generation and recall measurement.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::{search_parsed, EngineError, SearchConfig, SearchMode};
use crate::grammar::{rule, Category, NodeId, NodeKind, ParseTree, TerminalClass};
use crate::index::VectorIndex;
use crate::ingestion::{ChangeId, Corpus, PreparedChange};
use crate::matcher::Matcher;
use crate::query::{ParsedQuery, Query};

const MAX_ATTEMPTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    AsIs,
    Less,
    More,
    Generalized,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::AsIs, Strategy::Less, Strategy::More, Strategy::Generalized];

    /// Chance that a single identifier, literal or operator becomes a placeholder.
    pub fn default_probability(self) -> f64 {
        match self {
            Strategy::AsIs => 0.0,
            Strategy::Less => 0.25,
            Strategy::More => 0.75,
            Strategy::Generalized => 0.95,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::AsIs => "as-is",
            Strategy::Less => "less",
            Strategy::More => "more",
            Strategy::Generalized => "generalized",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown strategy `{0}` (expected as-is, less, more or generalized)")]
pub struct UnknownStrategy(String);

impl FromStr for Strategy {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "as-is" | "asis" => Ok(Strategy::AsIs),
            "less" | "less-placeholders" => Ok(Strategy::Less),
            "more" | "more-placeholders" => Ok(Strategy::More),
            "generalized" => Ok(Strategy::Generalized),
            _ => Err(UnknownStrategy(s.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("the corpus has no parseable change to sample from")]
    EmptyCorpus,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratedQuery {
    pub source: ChangeId,
    pub strategy: Strategy,
    pub query: Query,
}

/// Seeded query generator; probabilities can be overridden per strategy.
pub struct QueryGenerator {
    rng: ChaCha8Rng,
    probabilities: BTreeMap<Strategy, f64>,
}

impl QueryGenerator {
    pub fn new(seed: u64) -> QueryGenerator {
        QueryGenerator {
            rng: ChaCha8Rng::seed_from_u64(seed),
            probabilities: Strategy::ALL.iter().map(|&s| (s, s.default_probability())).collect(),
        }
    }

    pub fn with_probability(mut self, strategy: Strategy, p: f64) -> QueryGenerator {
        self.probabilities.insert(strategy, p.clamp(0.0, 1.0));
        self
    }

    /// `n` queries from uniformly sampled changes (without replacement while
    /// the corpus is large enough).
    pub fn generate(&mut self, corpus: &Corpus, strategy: Strategy, n: usize) -> Result<Vec<GeneratedQuery>, EvalError> {
        let valid: Vec<ChangeId> = (0..corpus.len()).filter(|&id| corpus.prepared(id).is_ok()).collect();
        if valid.is_empty() {
            return Err(EvalError::EmptyCorpus);
        }
        let picks: Vec<ChangeId> = if n <= valid.len() {
            sample(&mut self.rng, valid.len(), n).into_iter().map(|i| valid[i]).collect()
        } else {
            (0..n).map(|_| valid[self.rng.gen_range(0..valid.len())]).collect()
        };
        Ok(picks
            .into_iter()
            .map(|id| {
                let change = corpus.prepared(id).expect("sampled from parseable changes");
                GeneratedQuery {
                    source: id,
                    strategy,
                    query: self.query_for(change, strategy),
                }
            })
            .collect())
    }

    /// A query derived from `change` that is checked to match it. Random
    /// abstractions that break the match (operator placeholders regroup
    /// differently than concrete operators) are re-drawn; after repeated
    /// failures the verbatim query is used.
    pub fn query_for(&mut self, change: &PreparedChange, strategy: Strategy) -> Query {
        let p = self.probabilities[&strategy];
        if strategy == Strategy::AsIs || p == 0.0 {
            return verbatim(change);
        }
        for _ in 0..MAX_ATTEMPTS {
            let mut names = Names::default();
            let old = self.abstract_side(&change.old, p, strategy == Strategy::Generalized, &mut names);
            let new = self.abstract_side(&change.new, p, strategy == Strategy::Generalized, &mut names);
            let query = Query { old, new };
            if let Ok(parsed) = query.parse() {
                if Matcher::default().matches(change, &parsed).matched {
                    return query;
                }
            }
        }
        log::debug!("falling back to a verbatim query");
        verbatim(change)
    }

    fn abstract_side(&mut self, tree: &ParseTree, p: f64, fold: bool, names: &mut Names) -> Vec<String> {
        if tree.is_blank() {
            return vec!["_".to_string()];
        }
        let mut replaced: HashMap<NodeId, String> = HashMap::new();
        for id in tree.ids() {
            let n = tree.node(id);
            let Some(category) = replaceable(tree, id) else { continue };
            if self.rng.gen_bool(p) {
                replaced.insert(id, names.get(category, &n.label));
            }
        }
        if fold {
            let mut folded: HashMap<NodeId, String> = HashMap::new();
            fold_expressions(tree, tree.root(), &replaced, names, &mut folded);
            for (id, text) in folded {
                replaced.insert(id, text);
            }
        }
        tree.pretty_lines_with(|id| replaced.get(&id).cloned())
    }
}

fn verbatim(change: &PreparedChange) -> Query {
    let side = |t: &ParseTree| {
        if t.is_blank() {
            vec!["_".to_string()]
        } else {
            t.pretty_lines()
        }
    };
    Query {
        old: side(&change.old),
        new: side(&change.new),
    }
}

/// Placeholder numbering: one name per distinct (category, text).
#[derive(Default)]
struct Names {
    ids: HashMap<(Category, String), u32>,
    next: HashMap<Category, u32>,
}

impl Names {
    fn get(&mut self, category: Category, text: &str) -> String {
        let key = (category, text.to_string());
        let n = match self.ids.get(&key) {
            Some(&n) => n,
            None => {
                let next = self.next.entry(category).or_insert(0);
                *next += 1;
                self.ids.insert(key, *next);
                *next
            }
        };
        format!("{}<{n}>", category.keyword())
    }
}

/// Placeholder category a terminal can be replaced with, if any.
fn replaceable(tree: &ParseTree, id: NodeId) -> Option<Category> {
    let n = tree.node(id);
    if n.kind != NodeKind::Terminal {
        return None;
    }
    let parent = n.parent.map(|p| tree.node(p).label.as_str());
    match n.terminal_class? {
        TerminalClass::Identifier => Some(Category::Id),
        TerminalClass::Literal => Some(Category::Lt),
        TerminalClass::AssignOp => Some(Category::Op),
        TerminalClass::BinaryOp => Some(Category::BinOp),
        // postfix `++`/`--` have no placeholder form
        TerminalClass::UnaryOp if parent != Some(rule::POSTFIX) => Some(Category::UnOp),
        _ => None,
    }
}

/// Folds maximal call-free expressions whose replaceable terminals were all
/// replaced into `EXPR` placeholders. A lone identifier in callee position
/// stays an `ID`.
fn fold_expressions(
    tree: &ParseTree,
    id: NodeId,
    replaced: &HashMap<NodeId, String>,
    names: &mut Names,
    out: &mut HashMap<NodeId, String>,
) {
    let n = tree.node(id);
    let is_callee = n.parent.is_some_and(|p| {
        let parent = tree.node(p);
        parent.label == rule::CALL && parent.children[0] == id
    });
    if n.is_expression() && !(is_callee && n.label == rule::NAME) && fully_replaced(tree, id, replaced) {
        out.insert(id, names.get(Category::Expr, &tree.text(id)));
        return;
    }
    for &c in &n.children {
        fold_expressions(tree, c, replaced, names, out);
    }
}

fn fully_replaced(tree: &ParseTree, id: NodeId, replaced: &HashMap<NodeId, String>) -> bool {
    let mut any = false;
    let mut stack = vec![id];
    while let Some(x) = stack.pop() {
        let n = tree.node(x);
        if n.label == rule::CALL && n.kind == NodeKind::Nonterminal {
            return false;
        }
        if replaceable(tree, x).is_some() {
            if !replaced.contains_key(&x) {
                return false;
            }
            any = true;
        }
        stack.extend(&n.children);
    }
    any
}

/// `n` queries for `strategy`, generated with `seed`.
pub fn generate_ground_truth_queries(
    corpus: &Corpus,
    strategy: Strategy,
    n: usize,
    seed: u64,
) -> Result<Vec<GeneratedQuery>, EvalError> {
    QueryGenerator::new(seed).generate(corpus, strategy, n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryRecall {
    pub source: ChangeId,
    pub strategy: Strategy,
    /// Matching changes in the whole corpus.
    pub truth: usize,
    /// Matching changes the indexed search returned.
    pub found: usize,
    pub recall: f64,
    pub query_chars: usize,
    pub mean_result_chars: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyRecall {
    pub strategy: Strategy,
    pub queries: usize,
    pub mean_recall: f64,
    pub mean_results: f64,
}

/// Query and result sizes in characters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeStats {
    pub mean_results_per_query: f64,
    pub mean_query_chars: f64,
    pub mean_result_chars: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallReport {
    pub k: usize,
    pub per_query: Vec<QueryRecall>,
    pub per_strategy: Vec<StrategyRecall>,
    pub mean_recall: f64,
    pub sizes: SizeStats,
}

impl RecallReport {
    pub fn strategy(&self, s: Strategy) -> Option<&StrategyRecall> {
        self.per_strategy.iter().find(|r| r.strategy == s)
    }
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn parse_all(queries: &[GeneratedQuery]) -> Result<Vec<ParsedQuery>, EvalError> {
    queries
        .iter()
        .map(|q| q.query.parse().map_err(|e| EvalError::Engine(e.into())))
        .collect()
}

/// Matching change ids per query, from exhaustive search.
pub fn ground_truth(queries: &[GeneratedQuery], corpus: &Corpus, config: &SearchConfig) -> Result<Vec<BTreeSet<ChangeId>>, EvalError> {
    let parsed = parse_all(queries)?;
    let exhaustive = SearchConfig {
        mode: SearchMode::Exhaustive,
        max_results: usize::MAX,
        ..*config
    };
    let empty = VectorIndex::new(config.l);
    parallel_map(&parsed, |q| {
        search_parsed(q, &exhaustive, corpus, &empty).map(|o| o.results.iter().map(|r| r.change.id).collect())
    })
}

/// Recall of indexed search at `config.k`, with results uncapped up to `k`.
pub fn measure_recall(
    queries: &[GeneratedQuery],
    corpus: &Corpus,
    index: &VectorIndex,
    config: &SearchConfig,
) -> Result<RecallReport, EvalError> {
    let truth = ground_truth(queries, corpus, config)?;
    measure_recall_with_truth(queries, &truth, corpus, index, config)
}

pub fn measure_recall_with_truth(
    queries: &[GeneratedQuery],
    truth: &[BTreeSet<ChangeId>],
    corpus: &Corpus,
    index: &VectorIndex,
    config: &SearchConfig,
) -> Result<RecallReport, EvalError> {
    assert_eq!(queries.len(), truth.len());
    let parsed = parse_all(queries)?;
    let indexed = SearchConfig {
        mode: SearchMode::Indexed,
        max_results: config.k,
        ..*config
    };
    let found: Vec<Vec<ChangeId>> = parallel_map(&parsed, |q| {
        search_parsed(q, &indexed, corpus, index).map(|o| o.results.iter().map(|r| r.change.id).collect())
    })?;
    let per_query: Vec<QueryRecall> = queries
        .iter()
        .zip(truth)
        .zip(&found)
        .map(|((q, t), f)| {
            let hit = f.iter().filter(|id| t.contains(id)).count();
            QueryRecall {
                source: q.source,
                strategy: q.strategy,
                truth: t.len(),
                found: hit,
                // a query without any match is trivially fully recalled
                recall: if t.is_empty() { 1.0 } else { hit as f64 / t.len() as f64 },
                query_chars: q.query.char_len(),
                mean_result_chars: mean(f.iter().map(|&id| corpus.changes()[id].char_len() as f64)),
            }
        })
        .collect();
    let per_strategy = Strategy::ALL
        .iter()
        .filter_map(|&s| {
            let rows: Vec<&QueryRecall> = per_query.iter().filter(|r| r.strategy == s).collect();
            (!rows.is_empty()).then(|| StrategyRecall {
                strategy: s,
                queries: rows.len(),
                mean_recall: mean(rows.iter().map(|r| r.recall)),
                mean_results: mean(rows.iter().map(|r| r.found as f64)),
            })
        })
        .collect();
    let sizes = SizeStats {
        mean_results_per_query: mean(per_query.iter().map(|r| r.found as f64)),
        mean_query_chars: mean(per_query.iter().map(|r| r.query_chars as f64)),
        mean_result_chars: mean(per_query.iter().filter(|r| r.found > 0).map(|r| r.mean_result_chars)),
    };
    Ok(RecallReport {
        k: config.k,
        mean_recall: mean(per_query.iter().map(|r| r.recall)),
        per_query,
        per_strategy,
        sizes,
    })
}

fn parallel_map<T: Sync, R: Send>(
    items: &[T],
    f: impl Fn(&T) -> Result<R, EngineError> + Sync,
) -> Result<Vec<R>, EvalError> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let chunk = items.len().div_ceil(threads).max(1);
    let parts: Vec<Result<Vec<R>, EngineError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| scope.spawn(|| part.iter().map(&f).collect::<Result<Vec<R>, _>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}
