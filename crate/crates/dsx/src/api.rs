//! JSON bodies shared by the HTTP service and `dsx search --json`.

use std::collections::BTreeMap;

use dsx_core::engine::{EngineError, SearchConfig, SearchMode, SearchOutcome};
use dsx_core::query::{Query, QueryError, Side};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRequest {
    pub old: String,
    pub new: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_results: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exhaustive: Option<bool>,
}

impl SearchRequest {
    pub fn query(&self) -> Query {
        Query::from_texts(&self.old, &self.new)
    }

    /// `defaults` with the fields this request sets.
    pub fn config(&self, defaults: &SearchConfig) -> SearchConfig {
        let mut c = *defaults;
        if self.exhaustive.unwrap_or(false) {
            c.mode = SearchMode::Exhaustive;
            c.max_results = usize::MAX;
        }
        if let Some(k) = self.k {
            c.k = k;
        }
        if let Some(m) = self.max_results {
            c.max_results = m;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultItem {
    pub id: usize,
    pub rank: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
    pub old: Vec<String>,
    pub new: Vec<String>,
    pub bindings: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub retrieved: usize,
    pub matched: usize,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub results: Vec<ResultItem>,
    pub stats: Stats,
}

impl From<SearchOutcome> for SearchResponse {
    fn from(o: SearchOutcome) -> Self {
        SearchResponse {
            results: o
                .results
                .into_iter()
                .map(|r| ResultItem {
                    id: r.change.id,
                    rank: r.rank,
                    distance: r.distance,
                    old: r.change.old_lines,
                    new: r.change.new_lines,
                    bindings: r.bindings,
                })
                .collect(),
            stats: Stats {
                retrieved: o.stats.retrieved,
                matched: o.stats.matched,
                elapsed_ms: o.stats.elapsed.as_millis() as u64,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<Side>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<u32>,
}

impl ErrorBody {
    pub fn message(error: impl ToString) -> ErrorBody {
        ErrorBody {
            error: error.to_string(),
            side: None,
            line: None,
            column: None,
        }
    }

    /// Error body plus whether the client is at fault.
    pub fn from_engine(e: &EngineError) -> (ErrorBody, bool) {
        match e {
            EngineError::QueryParse(QueryError::Parse { side, error }) => {
                let (line, column) = error.position();
                let body = ErrorBody {
                    error: e.to_string(),
                    side: Some(*side),
                    line: Some(line),
                    column: Some(column),
                };
                (body, true)
            }
            EngineError::QueryParse(_) | EngineError::InvalidConfig(_) | EngineError::IndexMismatch { .. } => {
                (ErrorBody::message(e), true)
            }
            _ => (ErrorBody::message(e), false),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub corpus: usize,
}
