//! Search pipeline: parse, featurize, retrieve, prune, match, rank.

mod eval;
pub mod synth;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{check_length, Featurizer, DEFAULT_LENGTH};
use crate::index::{IndexError, VectorIndex, DEFAULT_K};
use crate::ingestion::{ChangeId, CodeChange, Corpus};
use crate::matcher::{Matcher, RequiredTokens, DEFAULT_SEARCH_BUDGET};
use crate::query::{ParsedQuery, Query, QueryError};

pub use eval::{
    ground_truth, measure_recall_with_truth,
    generate_ground_truth_queries, measure_recall, EvalError, GeneratedQuery, QueryGenerator,
    QueryRecall, RecallReport, SizeStats, Strategy, StrategyRecall, UnknownStrategy,
};

pub const DEFAULT_MAX_RESULTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    #[default]
    Indexed,
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub k: usize,
    pub l: usize,
    pub max_results: usize,
    pub search_budget: usize,
    pub mode: SearchMode,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            k: DEFAULT_K,
            l: DEFAULT_LENGTH,
            max_results: DEFAULT_MAX_RESULTS,
            search_budget: DEFAULT_SEARCH_BUDGET,
            mode: SearchMode::Indexed,
        }
    }
}

impl SearchConfig {
    pub fn exhaustive() -> SearchConfig {
        SearchConfig {
            mode: SearchMode::Exhaustive,
            max_results: usize::MAX,
            ..SearchConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.k == 0 {
            return Err(EngineError::InvalidConfig("k must be at least 1".into()));
        }
        if self.max_results == 0 {
            return Err(EngineError::InvalidConfig("max_results must be at least 1".into()));
        }
        check_length(self.l).map_err(|e| EngineError::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub change: CodeChange,
    /// Position in the returned list, starting at 1.
    pub rank: usize,
    /// L2 distance to the scaled query; absent in exhaustive mode.
    pub distance: Option<f64>,
    /// Named placeholders and the source text they are bound to.
    pub bindings: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SearchStats {
    /// Candidates considered: retrieved neighbours, or the corpus size in exhaustive mode.
    pub retrieved: usize,
    /// Candidates rejected by the token prefilter.
    pub pruned: usize,
    /// Candidates handed to the matcher.
    pub checked: usize,
    pub matched: usize,
    /// Candidates abandoned because the search budget ran out.
    pub budget_exceeded: usize,
    #[serde(serialize_with = "millis")]
    pub elapsed: Duration,
}

fn millis<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u64(d.as_millis() as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchOutcome {
    pub results: Vec<SearchResult>,
    pub stats: SearchStats,
}

impl SearchOutcome {
    pub fn ids(&self) -> Vec<ChangeId> {
        self.results.iter().map(|r| r.change.id).collect()
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid query: {0}")]
    QueryParse(#[from] QueryError),
    #[error("index has vector length {index}, configuration asks for {config}")]
    IndexMismatch { index: usize, config: usize },
    #[error("index holds {index} vectors but the corpus has {corpus} changes")]
    CorpusMismatch { index: usize, corpus: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Runs a query against a corpus and its index.
pub fn search(
    query: &Query,
    config: &SearchConfig,
    corpus: &Corpus,
    index: &VectorIndex,
) -> Result<SearchOutcome, EngineError> {
    let parsed = query.parse()?;
    search_parsed(&parsed, config, corpus, index)
}

pub fn search_parsed(
    query: &ParsedQuery,
    config: &SearchConfig,
    corpus: &Corpus,
    index: &VectorIndex,
) -> Result<SearchOutcome, EngineError> {
    let start = Instant::now();
    config.validate()?;
    let candidates: Vec<(ChangeId, Option<f64>)> = match config.mode {
        SearchMode::Indexed => {
            if index.vector_len() != config.l {
                return Err(EngineError::IndexMismatch {
                    index: index.vector_len(),
                    config: config.l,
                });
            }
            if index.count() != corpus.len() {
                return Err(EngineError::CorpusMismatch {
                    index: index.count(),
                    corpus: corpus.len(),
                });
            }
            if corpus.is_empty() {
                Vec::new()
            } else {
                let v = Featurizer::new(config.l)
                    .map_err(|e| EngineError::InvalidConfig(e.to_string()))?
                    .featurize_query(query);
                index
                    .retrieve(&v, config.k)?
                    .into_iter()
                    .map(|c| (c.change_id, Some(c.distance)))
                    .collect()
            }
        }
        SearchMode::Exhaustive => (0..corpus.len()).map(|id| (id, None)).collect(),
    };
    let mut stats = SearchStats {
        retrieved: candidates.len(),
        ..SearchStats::default()
    };
    let required = RequiredTokens::of_query(query);
    let matcher = Matcher::with_budget(config.search_budget);
    let mut results = Vec::new();
    for (id, distance) in candidates {
        if results.len() >= config.max_results {
            break;
        }
        let Ok(change) = corpus.prepared(id) else {
            continue;
        };
        if !required.admits(change) {
            stats.pruned += 1;
            continue;
        }
        stats.checked += 1;
        let outcome = match matcher.try_match(change, query) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("change {id}: {e}");
                stats.budget_exceeded += 1;
                continue;
            }
        };
        let Some(witness) = outcome.witness else {
            continue;
        };
        results.push(SearchResult {
            change: corpus.changes()[id].clone(),
            rank: results.len() + 1,
            distance,
            bindings: witness.binding_texts(change),
        });
    }
    stats.matched = results.len();
    stats.elapsed = start.elapsed();
    Ok(SearchOutcome { results, stats })
}

/// A corpus with its index, ready to answer queries.
#[derive(Debug)]
pub struct Engine {
    pub corpus: Corpus,
    pub index: VectorIndex,
    pub defaults: SearchConfig,
}

impl Engine {
    pub fn new(corpus: Corpus, index: VectorIndex) -> Result<Engine, EngineError> {
        if index.count() != corpus.len() {
            return Err(EngineError::CorpusMismatch {
                index: index.count(),
                corpus: corpus.len(),
            });
        }
        let defaults = SearchConfig {
            l: index.vector_len(),
            ..SearchConfig::default()
        };
        Ok(Engine {
            corpus,
            index,
            defaults,
        })
    }

    /// Parses the corpus and builds an index of vector length `l`.
    pub fn build(corpus: Corpus, l: usize) -> Result<Engine, EngineError> {
        corpus.prepare_all();
        let index = crate::index::build_index(&corpus, l)?;
        Engine::new(corpus, index)
    }

    pub fn search(&self, query: &Query, config: &SearchConfig) -> Result<SearchOutcome, EngineError> {
        search(query, config, &self.corpus, &self.index)
    }
}
