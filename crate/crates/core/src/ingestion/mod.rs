//! Code changes (hunks) and the on-disk corpus.
//!
//! The corpus file is JSON Lines with one object per change:
//!
//! ```text
//! {"id":0,"repo":"r","commit":"c","file":"f","old":["x = 1;"],"new":["x = 2;"]}
//! ```
//!
//! Ids are dense and follow file order.

mod diff;

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{parse_code, trees_equal, ParseError, ParseTree};
use crate::matcher::TokenSet;
use crate::query::Side;

pub use diff::{split_commit_into_hunks, split_hunks, DiffFormatError, HunkSplit, SkippedHunk};

pub type ChangeId = usize;

/// One hunk: the removed lines and the added lines, with provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeChange {
    #[serde(default)]
    pub id: ChangeId,
    #[serde(default)]
    pub repo: String,
    #[serde(default)]
    pub commit: String,
    #[serde(default)]
    pub file: String,
    #[serde(rename = "old")]
    pub old_lines: Vec<String>,
    #[serde(rename = "new")]
    pub new_lines: Vec<String>,
}

impl CodeChange {
    pub fn new<S: AsRef<str>, T: AsRef<str>>(old: &[S], new: &[T]) -> CodeChange {
        CodeChange {
            id: 0,
            repo: String::new(),
            commit: String::new(),
            file: String::new(),
            old_lines: old.iter().map(|l| l.as_ref().to_string()).collect(),
            new_lines: new.iter().map(|l| l.as_ref().to_string()).collect(),
        }
    }

    pub fn side(&self, side: Side) -> &[String] {
        match side {
            Side::Old => &self.old_lines,
            Side::New => &self.new_lines,
        }
    }

    /// Characters of both sides, surrounding whitespace of each line excluded.
    pub fn char_len(&self) -> usize {
        self.old_lines
            .iter()
            .chain(&self.new_lines)
            .map(|l| l.trim().chars().count())
            .sum()
    }
}

/// Why a hunk cannot be stored as a code change.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Rejection {
    #[error("both sides are empty")]
    BothSidesEmpty,
    #[error("{side:?} side does not parse: {error}")]
    Unparseable { side: Side, error: ParseError },
    #[error("old and new side parse to the same tree")]
    TreeEqual,
}

pub(crate) fn check_change(change: &CodeChange) -> Result<(), Rejection> {
    prepare(change).map(|_| ())
}

/// Parses both sides and enforces the code-change invariants.
pub fn prepare(change: &CodeChange) -> Result<PreparedChange, Rejection> {
    if change.old_lines.iter().all(|l| l.trim().is_empty())
        && change.new_lines.iter().all(|l| l.trim().is_empty())
    {
        return Err(Rejection::BothSidesEmpty);
    }
    let old = parse_code(&change.old_lines).map_err(|error| Rejection::Unparseable {
        side: Side::Old,
        error,
    })?;
    let new = parse_code(&change.new_lines).map_err(|error| Rejection::Unparseable {
        side: Side::New,
        error,
    })?;
    if trees_equal(&old, &new) {
        return Err(Rejection::TreeEqual);
    }
    Ok(PreparedChange::new(old, new))
}

/// Parse trees of a change plus the data the matcher's prefilter needs.
#[derive(Debug, Clone)]
pub struct PreparedChange {
    pub old: ParseTree,
    pub new: ParseTree,
    pub old_tokens: TokenSet,
    pub new_tokens: TokenSet,
}

impl PreparedChange {
    pub fn new(old: ParseTree, new: ParseTree) -> PreparedChange {
        PreparedChange {
            old_tokens: TokenSet::of_tree(&old),
            new_tokens: TokenSet::of_tree(&new),
            old,
            new,
        }
    }

    pub fn side(&self, side: Side) -> &ParseTree {
        match side {
            Side::Old => &self.old,
            Side::New => &self.new,
        }
    }

    pub fn tokens(&self, side: Side) -> &TokenSet {
        match side {
            Side::Old => &self.old_tokens,
            Side::New => &self.new_tokens,
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("change rejected: {0}")]
    Rejected(#[from] Rejection),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Append-ordered collection of code changes with lazily parsed trees.
#[derive(Debug, Default)]
pub struct Corpus {
    changes: Vec<CodeChange>,
    prepared: Vec<OnceLock<Result<PreparedChange, Rejection>>>,
}

impl Corpus {
    pub fn new() -> Corpus {
        Corpus::default()
    }

    pub fn len(&self) -> usize {
        self.changes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }

    pub fn changes(&self) -> &[CodeChange] {
        &self.changes
    }

    pub fn get(&self, id: ChangeId) -> Option<&CodeChange> {
        self.changes.get(id)
    }

    /// Validates and appends a change, returning its id.
    pub fn append_change(&mut self, mut change: CodeChange) -> Result<ChangeId, CorpusError> {
        let prepared = prepare(&change)?;
        let id = self.changes.len();
        change.id = id;
        self.changes.push(change);
        self.prepared.push(OnceLock::from(Ok(prepared)));
        Ok(id)
    }

    /// Appends without parsing; only the both-sides-empty invariant is checked.
    fn push_unchecked(&mut self, mut change: CodeChange) -> ChangeId {
        let id = self.changes.len();
        change.id = id;
        self.changes.push(change);
        self.prepared.push(OnceLock::new());
        id
    }

    /// Parsed form of a change, computed on first use and cached.
    pub fn prepared(&self, id: ChangeId) -> Result<&PreparedChange, &Rejection> {
        self.prepared[id]
            .get_or_init(|| prepare(&self.changes[id]))
            .as_ref()
    }

    /// Parses every change now, using all available cores.
    pub fn prepare_all(&self) {
        let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
        let chunk = self.len().div_ceil(threads).max(1);
        std::thread::scope(|scope| {
            for start in (0..self.len()).step_by(chunk) {
                scope.spawn(move || {
                    for id in start..(start + chunk).min(self.len()) {
                        let _ = self.prepared(id);
                    }
                });
            }
        });
    }

    /// Full scan of the code-change invariants.
    pub fn validate(&self) -> Vec<(ChangeId, Rejection)> {
        (0..self.len())
            .filter_map(|id| self.prepared(id).err().map(|e| (id, e.clone())))
            .collect()
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Corpus, CorpusError> {
        let mut corpus = Corpus::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let change: CodeChange =
                serde_json::from_str(&line).map_err(|e| CorpusError::Format {
                    line: lineno,
                    message: e.to_string(),
                })?;
            if change.old_lines.is_empty() && change.new_lines.is_empty() {
                return Err(CorpusError::Format {
                    line: lineno,
                    message: "both sides of the change are empty".into(),
                });
            }
            if change.id != corpus.len() {
                log::debug!(
                    "corpus line {lineno}: id {} reassigned to {}",
                    change.id,
                    corpus.len()
                );
            }
            corpus.push_unchecked(change);
        }
        Ok(corpus)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
        Corpus::from_reader(BufReader::new(File::open(path)?))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CorpusError> {
        for change in &self.changes {
            serde_json::to_writer(&mut w, change).map_err(io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }
}

impl FromIterator<CodeChange> for Corpus {
    /// Collects changes, dropping those that violate the code-change invariants.
    fn from_iter<I: IntoIterator<Item = CodeChange>>(iter: I) -> Corpus {
        let mut corpus = Corpus::new();
        for change in iter {
            if let Err(e) = corpus.append_change(change) {
                log::info!("dropping change: {e}");
            }
        }
        corpus
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    Corpus::load(path)
}

pub fn append_change(corpus: &mut Corpus, change: CodeChange) -> Result<ChangeId, CorpusError> {
    corpus.append_change(change)
}
