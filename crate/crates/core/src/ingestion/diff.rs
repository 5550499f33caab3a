//! Unified-diff and `git log -p` hunk extraction.

use thiserror::Error;

use super::{check_change, CodeChange, Rejection};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiffFormatError {
    #[error("line {line}: malformed hunk header `{header}`")]
    BadHeader { line: usize, header: String },
    #[error("line {line}: unexpected line inside hunk: `{text}`")]
    BadHunkLine { line: usize, text: String },
    #[error("hunk starting at line {line} ends early")]
    Truncated { line: usize },
}

/// A hunk that did not become a [`CodeChange`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedHunk {
    /// Line of the `@@` header in the input.
    pub line: usize,
    pub file: String,
    pub reason: Rejection,
}

#[derive(Debug, Clone, Default)]
pub struct HunkSplit {
    pub changes: Vec<CodeChange>,
    pub skipped: Vec<SkippedHunk>,
}

#[derive(Debug, Clone, Copy)]
struct HunkHeader {
    old_len: usize,
    new_len: usize,
}

fn parse_header(text: &str) -> Option<HunkHeader> {
    let rest = text.strip_prefix("@@ -")?;
    let (ranges, _) = rest.split_once(" @@")?;
    let (old, new) = ranges.split_once(" +")?;
    fn range_len(r: &str) -> Option<usize> {
        match r.split_once(',') {
            Some((start, len)) => {
                start.parse::<usize>().ok()?;
                len.parse().ok()
            }
            None => {
                r.parse::<usize>().ok()?;
                Some(1)
            }
        }
    }
    Some(HunkHeader {
        old_len: range_len(old)?,
        new_len: range_len(new)?,
    })
}

/// Splits unified-diff text (plain `diff -u` output or `git log -p`) into one
/// code change per hunk. Context lines are dropped. Hunks without changed
/// lines, with an unparseable side, or whose sides parse to equal trees are
/// skipped and reported in [`HunkSplit::skipped`].
pub fn split_hunks(diff_text: &str, repo: &str) -> Result<HunkSplit, DiffFormatError> {
    let lines: Vec<&str> = diff_text.lines().collect();
    let mut out = HunkSplit::default();
    let mut commit = String::new();
    let mut file = String::new();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        if let Some(sha) = line.strip_prefix("commit ") {
            commit = sha.split_whitespace().next().unwrap_or_default().to_string();
        } else if let Some(path) = line.strip_prefix("+++ ") {
            if path != "/dev/null" {
                file = strip_prefix_dir(path).to_string();
            }
        } else if let Some(path) = line.strip_prefix("--- ") {
            if path != "/dev/null" {
                file = strip_prefix_dir(path).to_string();
            }
        } else if line.starts_with("@@") {
            let header_line = i + 1;
            let header = parse_header(line).ok_or_else(|| DiffFormatError::BadHeader {
                line: header_line,
                header: line.to_string(),
            })?;
            let (mut old_left, mut new_left) = (header.old_len, header.new_len);
            let (mut old, mut new) = (Vec::new(), Vec::new());
            i += 1;
            while old_left > 0 || new_left > 0 {
                let Some(&body) = lines.get(i) else {
                    return Err(DiffFormatError::Truncated { line: header_line });
                };
                match body.as_bytes().first() {
                    Some(b'-') if old_left > 0 => {
                        old.push(body[1..].to_string());
                        old_left -= 1;
                    }
                    Some(b'+') if new_left > 0 => {
                        new.push(body[1..].to_string());
                        new_left -= 1;
                    }
                    Some(b' ') | None if old_left > 0 && new_left > 0 => {
                        old_left -= 1;
                        new_left -= 1;
                    }
                    Some(b'\\') => {}
                    _ => {
                        return Err(DiffFormatError::BadHunkLine {
                            line: i + 1,
                            text: body.to_string(),
                        })
                    }
                }
                i += 1;
            }
            let change = CodeChange {
                id: out.changes.len(),
                repo: repo.to_string(),
                commit: commit.clone(),
                file: file.clone(),
                old_lines: old,
                new_lines: new,
            };
            match check_change(&change) {
                Ok(()) => out.changes.push(change),
                Err(reason) => {
                    log::info!("skipping hunk at line {header_line} of {file}: {reason}");
                    out.skipped.push(SkippedHunk {
                        line: header_line,
                        file: file.clone(),
                        reason,
                    });
                }
            }
            continue;
        }
        i += 1;
    }
    Ok(out)
}

/// Hunk-level code changes of a diff; skipped hunks are only logged.
pub fn split_commit_into_hunks(diff_text: &str) -> Result<Vec<CodeChange>, DiffFormatError> {
    Ok(split_hunks(diff_text, "")?.changes)
}

fn strip_prefix_dir(path: &str) -> &str {
    let path = path.split('\t').next().unwrap_or(path);
    path.strip_prefix("a/")
        .or_else(|| path.strip_prefix("b/"))
        .unwrap_or(path)
}
