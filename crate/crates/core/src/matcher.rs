//! Exact matching of a code change against a query.
//!
//! A query side matches a change side when its trees can be expanded into a
//! part of the change tree:
//!
//! * `EXPR` expands to any expression, `ID`, `LT`, `OP`, `binOP` and `unOP`
//!   to a terminal of the matching class;
//! * all occurrences of a named placeholder, on both sides, expand to equal
//!   subtrees;
//! * `<...>` inside a statement list expands to zero or more consecutive
//!   statements, anywhere else to nothing or one expression or statement;
//! * `_` matches only an empty change side.
//!
//! The top-level statements of a query side may map to any order-preserving
//! subsequence of one statement list of the change: the root list, the
//! statements of a block, or the single-statement body of an `if`, `else` or
//! `while`. Below that level every change node has to be matched by a query
//! node or absorbed by a wildcard. A query side that is a bare expression
//! may match any expression of the change.
//!
//! The search is a depth-first walk over partial node mappings. The first
//! complete mapping in top-down, left-to-right order is returned as witness.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::features::fnv1a64;
use crate::grammar::{parse_code, rule, Category, NodeId, NodeKind, ParseTree, PlaceholderSpec};
use crate::ingestion::{CodeChange, PreparedChange};
use crate::query::{ParsedQuery, Query, QueryError, Side};

pub const DEFAULT_SEARCH_BUDGET: usize = 1_000_000;

/// Terminal labels occurring in a tree, stored as sorted FNV hashes. A hash
/// collision can only make [`prune_by_leaves`] more permissive.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenSet {
    hashes: Vec<u64>,
}

impl TokenSet {
    pub fn of_tree(tree: &ParseTree) -> TokenSet {
        TokenSet::from_labels(
            tree.nodes()
                .iter()
                .filter(|n| n.kind == NodeKind::Terminal)
                .map(|n| n.label.as_str()),
        )
    }

    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> TokenSet {
        let mut hashes: Vec<u64> = labels.into_iter().map(|l| fnv1a64(l.as_bytes())).collect();
        hashes.sort_unstable();
        hashes.dedup();
        TokenSet { hashes }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.hashes.binary_search(&fnv1a64(token.as_bytes())).is_ok()
    }

    pub fn is_subset_of(&self, other: &TokenSet) -> bool {
        self.hashes.iter().all(|h| other.hashes.binary_search(h).is_ok())
    }

    pub fn len(&self) -> usize {
        self.hashes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hashes.is_empty()
    }
}

/// Concrete terminals a change must contain, per side, to possibly match.
#[derive(Debug, Clone)]
pub struct RequiredTokens {
    pub old: TokenSet,
    pub new: TokenSet,
}

impl RequiredTokens {
    pub fn of_query(query: &ParsedQuery) -> RequiredTokens {
        RequiredTokens {
            old: TokenSet::of_tree(&query.old),
            new: TokenSet::of_tree(&query.new),
        }
    }

    pub fn admits(&self, change: &PreparedChange) -> bool {
        self.old.is_subset_of(&change.old_tokens) && self.new.is_subset_of(&change.new_tokens)
    }
}

/// False when some concrete query terminal is missing from the same side of
/// the change, in which case the change cannot match.
pub fn prune_by_leaves(change: &PreparedChange, query: &ParsedQuery) -> bool {
    RequiredTokens::of_query(query).admits(change)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MappedPair {
    pub side: Side,
    pub query: NodeId,
    pub change: NodeId,
}

/// Change subtree a named placeholder is bound to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Binding {
    pub side: Side,
    pub node: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WildcardExpansion {
    pub side: Side,
    pub query: NodeId,
    /// Change nodes the wildcard stands for, possibly none.
    pub absorbed: Vec<NodeId>,
}

/// A complete or partial mapping from query nodes to change nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct NodeMapping {
    pub pairs: Vec<MappedPair>,
    pub bindings: BTreeMap<PlaceholderSpec, Binding>,
    pub wildcards: Vec<WildcardExpansion>,
}

impl NodeMapping {
    pub fn change_node(&self, side: Side, query: NodeId) -> Option<NodeId> {
        self.pairs
            .iter()
            .find(|p| p.side == side && p.query == query)
            .map(|p| p.change)
    }

    /// Named bindings rendered as source text, e.g. `ID<1>` → `isValidPoint`.
    pub fn binding_texts(&self, change: &PreparedChange) -> BTreeMap<String, String> {
        self.bindings
            .iter()
            .map(|(spec, b)| (spec.to_string(), change.side(b.side).text(b.node)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchResult {
    pub matched: bool,
    pub witness: Option<NodeMapping>,
    /// Partial mappings taken from the worklist.
    pub explored: usize,
}

impl MatchResult {
    fn no_match(explored: usize) -> MatchResult {
        MatchResult {
            matched: false,
            witness: None,
            explored,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchError {
    #[error("search budget of {budget} mappings exceeded")]
    SearchBudgetExceeded { budget: usize },
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("{side:?} side of the change does not parse: {error}")]
    Change {
        side: Side,
        error: crate::grammar::ParseError,
    },
}

#[derive(Debug, Clone, Copy)]
enum Goal {
    /// Place one query side somewhere in the change.
    Anchor(Side),
    /// Top-level query statements `qi..` against anchor list `list` from `ci`, gaps allowed.
    SubSeq { side: Side, list: u32, qi: u32, ci: u32 },
    /// Children `qi..` of query node `q` against children `ci..` of change node `c`, no gaps.
    Seq { side: Side, q: NodeId, qi: u32, c: NodeId, ci: u32 },
    Node { side: Side, q: NodeId, c: NodeId },
}

#[derive(Debug, Clone)]
struct State {
    goals: Vec<Goal>,
    mapping: NodeMapping,
}

enum Step {
    Continue,
    Fail,
    /// Alternatives in exploration order; each is a list of goals, the last
    /// of which runs first, plus an optional wildcard expansion to record.
    Branch(Vec<(Vec<Goal>, Option<WildcardExpansion>)>),
}

struct Ctx<'a> {
    change: &'a PreparedChange,
    query: &'a ParsedQuery,
    anchors: [Vec<Vec<NodeId>>; 2],
}

impl Ctx<'_> {
    fn ct(&self, side: Side) -> &ParseTree {
        self.change.side(side)
    }

    fn qt(&self, side: Side) -> &ParseTree {
        self.query.side(side)
    }
}

/// Statement lists a query side may anchor in: the root list, every block's
/// children and every single-statement `if`/`else`/`while` body.
fn anchor_lists(tree: &ParseTree) -> Vec<Vec<NodeId>> {
    let mut out = Vec::new();
    if tree.node(tree.root()).kind != NodeKind::Nonterminal {
        return out;
    }
    out.push(tree.children(tree.root()).to_vec());
    for id in tree.ids() {
        let n = tree.node(id);
        if n.label == rule::BLOCK && n.kind == NodeKind::Nonterminal {
            out.push(n.children.clone());
        } else if n.label == rule::IF || n.label == rule::WHILE {
            for &c in &n.children {
                let child = tree.node(c);
                if child.is_statement() && child.label != rule::BLOCK {
                    out.push(vec![c]);
                }
            }
        }
    }
    out
}

fn side_index(side: Side) -> usize {
    match side {
        Side::Old => 0,
        Side::New => 1,
    }
}

/// Cheap necessary condition for query node `q` to match change node `c`.
fn head_compatible(qt: &ParseTree, q: NodeId, ct: &ParseTree, c: NodeId) -> bool {
    let (qn, cn) = (qt.node(q), ct.node(c));
    match qn.kind {
        NodeKind::Terminal | NodeKind::Nonterminal => qn.kind == cn.kind && qn.label == cn.label,
        NodeKind::Placeholder => true,
        NodeKind::Wildcard => true,
        NodeKind::EmptyMarker => false,
    }
}

fn placeholder_accepts(spec: PlaceholderSpec, ct: &ParseTree, c: NodeId) -> bool {
    let cn = ct.node(c);
    match spec.category {
        Category::Expr => cn.is_expression(),
        cat => cn.kind == NodeKind::Terminal && cn.terminal_class == cat.terminal_class(),
    }
}

/// Matcher with a configurable exploration budget.
#[derive(Debug, Clone, Copy)]
pub struct Matcher {
    pub budget: usize,
}

impl Default for Matcher {
    fn default() -> Self {
        Matcher {
            budget: DEFAULT_SEARCH_BUDGET,
        }
    }
}

impl Matcher {
    pub fn with_budget(budget: usize) -> Matcher {
        Matcher { budget }
    }

    /// Like [`Matcher::try_match`], reporting an exhausted budget as a
    /// non-match.
    pub fn matches(&self, change: &PreparedChange, query: &ParsedQuery) -> MatchResult {
        match self.try_match(change, query) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("treating candidate as non-matching: {e}");
                MatchResult::no_match(self.budget)
            }
        }
    }

    pub fn try_match(&self, change: &PreparedChange, query: &ParsedQuery) -> Result<MatchResult, MatchError> {
        let ctx = Ctx {
            change,
            query,
            anchors: [anchor_lists(&change.old), anchor_lists(&change.new)],
        };
        let mut work = vec![State {
            goals: vec![Goal::Anchor(Side::New), Goal::Anchor(Side::Old)],
            mapping: NodeMapping::default(),
        }];
        let mut explored = 0;
        while let Some(mut state) = work.pop() {
            explored += 1;
            if explored > self.budget {
                return Err(MatchError::SearchBudgetExceeded { budget: self.budget });
            }
            loop {
                let Some(goal) = state.goals.pop() else {
                    return Ok(MatchResult {
                        matched: true,
                        witness: Some(state.mapping),
                        explored,
                    });
                };
                match step(&ctx, goal, &mut state) {
                    Step::Continue => {}
                    Step::Fail => break,
                    Step::Branch(alts) => {
                        for (goals, expansion) in alts.into_iter().rev() {
                            let mut next = state.clone();
                            next.goals.extend(goals);
                            if let Some(e) = expansion {
                                next.mapping.wildcards.push(e);
                            }
                            work.push(next);
                        }
                        break;
                    }
                }
            }
        }
        Ok(MatchResult::no_match(explored))
    }
}

fn step(ctx: &Ctx<'_>, goal: Goal, state: &mut State) -> Step {
    match goal {
        Goal::Anchor(side) => anchor(ctx, side),
        Goal::SubSeq { side, list, qi, ci } => {
            let qt = ctx.qt(side);
            let qlist = qt.children(qt.root());
            let Some(&q) = qlist.get(qi as usize) else {
                return Step::Continue;
            };
            if qt.node(q).kind == NodeKind::Wildcard {
                state.goals.push(Goal::SubSeq { side, list, qi: qi + 1, ci });
                return Step::Continue;
            }
            let ct = ctx.ct(side);
            let clist = &ctx.anchors[side_index(side)][list as usize];
            let alts: Vec<_> = (ci as usize..clist.len())
                .filter(|&j| head_compatible(qt, q, ct, clist[j]))
                .map(|j| {
                    let goals = vec![
                        Goal::SubSeq { side, list, qi: qi + 1, ci: j as u32 + 1 },
                        Goal::Node { side, q, c: clist[j] },
                    ];
                    (goals, None)
                })
                .collect();
            Step::Branch(alts)
        }
        Goal::Seq { side, q, qi, c, ci } => seq(ctx, side, q, qi, c, ci, state),
        Goal::Node { side, q, c } => node(ctx, side, q, c, state),
    }
}

fn anchor(ctx: &Ctx<'_>, side: Side) -> Step {
    let (qt, ct) = (ctx.qt(side), ctx.ct(side));
    if qt.is_empty_marker() {
        return if ct.is_blank() { Step::Continue } else { Step::Fail };
    }
    if let Some(e) = qt.bare_expression() {
        let alts = ct
            .ids()
            .filter(|&c| ct.node(c).is_expression() && head_compatible(qt, e, ct, c))
            .map(|c| (vec![Goal::Node { side, q: e, c }], None))
            .collect();
        return Step::Branch(alts);
    }
    let alts = (0..ctx.anchors[side_index(side)].len())
        .map(|list| (vec![Goal::SubSeq { side, list: list as u32, qi: 0, ci: 0 }], None))
        .collect();
    Step::Branch(alts)
}

fn seq(ctx: &Ctx<'_>, side: Side, q: NodeId, qi: u32, c: NodeId, ci: u32, state: &mut State) -> Step {
    let (qt, ct) = (ctx.qt(side), ctx.ct(side));
    let (qk, ck) = (qt.children(q), ct.children(c));
    let (qi_, ci_) = (qi as usize, ci as usize);
    let Some(&qn) = qk.get(qi_) else {
        return if ci_ == ck.len() { Step::Continue } else { Step::Fail };
    };
    if qt.node(qn).kind != NodeKind::Wildcard {
        let Some(&cn) = ck.get(ci_) else {
            return Step::Fail;
        };
        if !head_compatible(qt, qn, ct, cn) {
            return Step::Fail;
        }
        state.goals.push(Goal::Seq { side, q, qi: qi + 1, c, ci: ci + 1 });
        state.goals.push(Goal::Node { side, q: qn, c: cn });
        return Step::Continue;
    }
    let label = qt.node(q).label.as_str();
    let max = if label == rule::SNIPPET || label == rule::BLOCK {
        ck[ci_..].iter().take_while(|&&n| ct.node(n).is_statement()).count()
    } else {
        usize::from(ck.get(ci_).is_some_and(|&n| {
            let n = ct.node(n);
            n.is_expression() || n.is_statement()
        }))
    };
    let last = qi_ + 1 == qk.len();
    let alts = (0..=max)
        .filter(|&n| !last || ci_ + n == ck.len())
        .map(|n| {
            let goals = vec![Goal::Seq { side, q, qi: qi + 1, c, ci: ci + n as u32 }];
            let expansion = WildcardExpansion {
                side,
                query: qn,
                absorbed: ck[ci_..ci_ + n].to_vec(),
            };
            (goals, Some(expansion))
        })
        .collect();
    Step::Branch(alts)
}

fn node(ctx: &Ctx<'_>, side: Side, q: NodeId, c: NodeId, state: &mut State) -> Step {
    let (qt, ct) = (ctx.qt(side), ctx.ct(side));
    let (qn, cn) = (qt.node(q), ct.node(c));
    match qn.kind {
        NodeKind::Terminal => {
            if cn.kind != NodeKind::Terminal || cn.label != qn.label {
                return Step::Fail;
            }
        }
        NodeKind::Nonterminal => {
            if cn.kind != NodeKind::Nonterminal || cn.label != qn.label {
                return Step::Fail;
            }
            state.goals.push(Goal::Seq { side, q, qi: 0, c, ci: 0 });
        }
        NodeKind::Placeholder => {
            let spec = qn.placeholder.expect("placeholder node without spec");
            if !placeholder_accepts(spec, ct, c) {
                return Step::Fail;
            }
            if spec.name.is_some() {
                match state.mapping.bindings.get(&spec) {
                    Some(b) => {
                        if !ctx.ct(b.side).subtree_eq(b.node, ct, c) {
                            return Step::Fail;
                        }
                    }
                    None => {
                        state.mapping.bindings.insert(spec, Binding { side, node: c });
                    }
                }
            }
        }
        NodeKind::Wildcard => {
            state.mapping.wildcards.push(WildcardExpansion {
                side,
                query: q,
                absorbed: vec![c],
            });
            return Step::Continue;
        }
        NodeKind::EmptyMarker => return Step::Fail,
    }
    state.mapping.pairs.push(MappedPair { side, query: q, change: c });
    Step::Continue
}

/// Matches with the default budget; an exhausted budget counts as no match.
pub fn matches(change: &PreparedChange, query: &ParsedQuery) -> MatchResult {
    Matcher::default().matches(change, query)
}

/// Parses both the change and the query, then matches them. Unlike corpus
/// ingestion this accepts changes whose sides are tree-equal.
pub fn match_texts(change: &CodeChange, query: &Query) -> Result<MatchResult, MatchError> {
    let parsed = query.parse()?;
    let old = parse_code(&change.old_lines).map_err(|error| MatchError::Change { side: Side::Old, error })?;
    let new = parse_code(&change.new_lines).map_err(|error| MatchError::Change { side: Side::New, error })?;
    Matcher::default().try_match(&PreparedChange::new(old, new), &parsed)
}
