//! Change queries: an old-side and a new-side pattern.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{parse_query, ParseError, ParseTree};

/// Separator accepted between the two sides of a one-line query.
pub const ARROW: &str = " -> ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Old,
    New,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Old, Side::New];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub old: Vec<String>,
    pub new: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum QueryError {
    #[error("{side:?} side of the query: {error}")]
    Parse { side: Side, error: ParseError },
    #[error("both sides of the query are `_`")]
    BothEmpty,
    #[error("expected `old{ARROW}new`")]
    MissingArrow,
}

impl Query {
    pub fn new<S: AsRef<str>, T: AsRef<str>>(old: &[S], new: &[T]) -> Query {
        Query {
            old: old.iter().map(|l| l.as_ref().to_string()).collect(),
            new: new.iter().map(|l| l.as_ref().to_string()).collect(),
        }
    }

    /// Builds a query from its two sides given as multi-line strings.
    pub fn from_texts(old: &str, new: &str) -> Query {
        Query {
            old: old.lines().map(str::to_string).collect(),
            new: new.lines().map(str::to_string).collect(),
        }
    }

    /// Parses the single-string form `old -> new`. Lines of either side may
    /// be separated by `\n`.
    pub fn from_arrow(text: &str) -> Result<Query, QueryError> {
        let (old, new) = text.split_once(ARROW).ok_or(QueryError::MissingArrow)?;
        Ok(Query::from_texts(old, new))
    }

    pub fn side(&self, side: Side) -> &[String] {
        match side {
            Side::Old => &self.old,
            Side::New => &self.new,
        }
    }

    pub fn parse(&self) -> Result<ParsedQuery, QueryError> {
        let old = parse_query(&self.old).map_err(|error| QueryError::Parse {
            side: Side::Old,
            error,
        })?;
        let new = parse_query(&self.new).map_err(|error| QueryError::Parse {
            side: Side::New,
            error,
        })?;
        if old.is_empty_marker() && new.is_empty_marker() {
            return Err(QueryError::BothEmpty);
        }
        Ok(ParsedQuery { old, new })
    }

    /// Number of characters in both sides, newlines excluded.
    pub fn char_len(&self) -> usize {
        self.old.iter().chain(&self.new).map(|l| l.trim().chars().count()).sum()
    }
}

#[derive(Debug, Clone)]
pub struct ParsedQuery {
    pub old: ParseTree,
    pub new: ParseTree,
}

impl ParsedQuery {
    pub fn side(&self, side: Side) -> &ParseTree {
        match side {
            Side::Old => &self.old,
            Side::New => &self.new,
        }
    }
}
