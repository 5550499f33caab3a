//! Arena-backed parse trees for code snippets and query patterns.

use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

/// Index of a node inside its [`ParseTree`]. Nodes are numbered in preorder,
/// so the root is always `NodeId(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Nonterminal,
    Terminal,
    Placeholder,
    Wildcard,
    EmptyMarker,
}

/// Lexical role of a terminal, fixed by the grammar position it was parsed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminalClass {
    Identifier,
    Literal,
    AssignOp,
    BinaryOp,
    UnaryOp,
    Keyword,
    Punct,
}

/// Syntactic category a placeholder stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Expr,
    Id,
    Lt,
    Op,
    BinOp,
    UnOp,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Expr,
        Category::Id,
        Category::Lt,
        Category::Op,
        Category::BinOp,
        Category::UnOp,
    ];

    /// Query-language keyword for this category.
    pub fn keyword(self) -> &'static str {
        match self {
            Category::Expr => "EXPR",
            Category::Id => "ID",
            Category::Lt => "LT",
            Category::Op => "OP",
            Category::BinOp => "binOP",
            Category::UnOp => "unOP",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Category> {
        Category::ALL.into_iter().find(|c| c.keyword() == word)
    }

    /// Terminal class a single-terminal category binds to. `Expr` binds subtrees.
    pub fn terminal_class(self) -> Option<TerminalClass> {
        match self {
            Category::Expr => None,
            Category::Id => Some(TerminalClass::Identifier),
            Category::Lt => Some(TerminalClass::Literal),
            Category::Op => Some(TerminalClass::AssignOp),
            Category::BinOp => Some(TerminalClass::BinaryOp),
            Category::UnOp => Some(TerminalClass::UnaryOp),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PlaceholderSpec {
    pub category: Category,
    pub name: Option<u32>,
}

impl fmt::Display for PlaceholderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.name {
            Some(n) => write!(f, "{}<{}>", self.category.keyword(), n),
            None => f.write_str(self.category.keyword()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start_line: u32,
    pub start_col: u32,
    pub end_line: u32,
    pub end_col: u32,
}

impl Span {
    fn cover(a: Span, b: Span) -> Span {
        Span {
            start_line: a.start_line,
            start_col: a.start_col,
            end_line: b.end_line,
            end_col: b.end_col,
        }
    }
}

/// Rule names of the reference grammar.
pub mod rule {
    pub const SNIPPET: &str = "snippet";
    pub const BLOCK: &str = "block";
    pub const IF: &str = "if_stmt";
    pub const WHILE: &str = "while_stmt";
    pub const RETURN: &str = "return_stmt";
    pub const VAR_DECL: &str = "var_decl";
    pub const ASSIGN: &str = "assign_stmt";
    pub const EXPR_STMT: &str = "expr_stmt";
    pub const BINARY: &str = "binary";
    pub const UNARY: &str = "unary";
    pub const POSTFIX: &str = "postfix";
    pub const CALL: &str = "call";
    pub const ARGS: &str = "args";
    pub const MEMBER: &str = "member";
    pub const PAREN: &str = "paren";
    pub const NAME: &str = "name";
    pub const LITERAL: &str = "literal";

    pub const STATEMENTS: [&str; 7] = [BLOCK, IF, WHILE, RETURN, VAR_DECL, ASSIGN, EXPR_STMT];
    pub const EXPRESSIONS: [&str; 8] = [BINARY, UNARY, POSTFIX, CALL, MEMBER, PAREN, NAME, LITERAL];
}

pub const WILDCARD_LABEL: &str = "<...>";
pub const EMPTY_LABEL: &str = "_";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeNode {
    /// Rule name for nonterminals, token text otherwise.
    pub label: String,
    pub kind: NodeKind,
    pub placeholder: Option<PlaceholderSpec>,
    pub terminal_class: Option<TerminalClass>,
    pub children: Vec<NodeId>,
    pub parent: Option<NodeId>,
    pub span: Option<Span>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn is_statement(&self) -> bool {
        self.kind == NodeKind::Nonterminal && rule::STATEMENTS.contains(&self.label.as_str())
    }

    /// True for change-tree nodes an `EXPR` placeholder may bind.
    pub fn is_expression(&self) -> bool {
        self.kind == NodeKind::Nonterminal && rule::EXPRESSIONS.contains(&self.label.as_str())
    }

    /// Placeholder, wildcard or empty marker.
    pub fn is_query_only(&self) -> bool {
        matches!(
            self.kind,
            NodeKind::Placeholder | NodeKind::Wildcard | NodeKind::EmptyMarker
        )
    }

    /// String used for this node when hashing features.
    pub fn repr(&self) -> &str {
        &self.label
    }
}

/// Owned node used while parsing, flattened into a [`ParseTree`] afterwards.
#[derive(Debug, Clone)]
pub(crate) struct Built {
    pub label: String,
    pub kind: NodeKind,
    pub placeholder: Option<PlaceholderSpec>,
    pub terminal_class: Option<TerminalClass>,
    pub children: Vec<Built>,
    pub span: Option<Span>,
}

impl Built {
    pub fn nonterminal(label: &str, children: Vec<Built>) -> Built {
        let span = match (
            children.iter().find_map(|c| c.span),
            children.iter().rev().find_map(|c| c.span),
        ) {
            (Some(a), Some(b)) => Some(Span::cover(a, b)),
            _ => None,
        };
        Built {
            label: label.to_string(),
            kind: NodeKind::Nonterminal,
            placeholder: None,
            terminal_class: None,
            children,
            span,
        }
    }

    pub fn leaf(label: String, kind: NodeKind, class: Option<TerminalClass>, span: Span) -> Built {
        Built {
            label,
            kind,
            placeholder: None,
            terminal_class: class,
            children: Vec::new(),
            span: Some(span),
        }
    }
}

/// A parse tree stored in preorder. Node 0 is the `snippet` root (or the
/// empty marker for a `_` query side).
#[derive(Debug, Clone)]
pub struct ParseTree {
    nodes: Vec<TreeNode>,
    hashes: Vec<u64>,
}

impl ParseTree {
    pub(crate) fn from_built(root: Built) -> ParseTree {
        let mut nodes = Vec::new();
        flatten(root, None, &mut nodes);
        let mut tree = ParseTree {
            nodes,
            hashes: Vec::new(),
        };
        tree.rehash();
        tree
    }

    pub(crate) fn empty_marker() -> ParseTree {
        ParseTree::from_built(Built {
            label: EMPTY_LABEL.to_string(),
            kind: NodeKind::EmptyMarker,
            placeholder: None,
            terminal_class: None,
            children: Vec::new(),
            span: None,
        })
    }

    fn rehash(&mut self) {
        let mut hashes = vec![0u64; self.nodes.len()];
        // preorder numbering: children always have larger ids than parents
        for i in (0..self.nodes.len()).rev() {
            let n = &self.nodes[i];
            let mut h = std::collections::hash_map::DefaultHasher::new();
            n.label.hash(&mut h);
            n.kind.hash(&mut h);
            n.placeholder.hash(&mut h);
            n.children.len().hash(&mut h);
            for c in &n.children {
                hashes[c.index()].hash(&mut h);
            }
            hashes[i] = h.finish();
        }
        self.hashes = hashes;
    }

    pub fn root(&self) -> NodeId {
        NodeId::ROOT
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id.index()]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    #[inline]
    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.index()].children
    }

    /// Structural hash of the subtree rooted at `id` (spans excluded).
    #[inline]
    pub fn subtree_hash(&self, id: NodeId) -> u64 {
        self.hashes[id.index()]
    }

    /// `_` query side.
    pub fn is_empty_marker(&self) -> bool {
        self.nodes[0].kind == NodeKind::EmptyMarker
    }

    /// A code side without any content (pure insertion or removal).
    pub fn is_blank(&self) -> bool {
        self.nodes[0].kind == NodeKind::Nonterminal && self.nodes[0].children.is_empty()
    }

    /// The expression of a snippet that is one bare expression without `;`.
    pub fn bare_expression(&self) -> Option<NodeId> {
        let root = self.node(NodeId::ROOT);
        if root.kind != NodeKind::Nonterminal || root.children.len() != 1 {
            return None;
        }
        let stmt = root.children[0];
        let node = self.node(stmt);
        if node.label == rule::EXPR_STMT && node.children.len() == 1 {
            Some(node.children[0])
        } else {
            None
        }
    }

    pub fn has_query_nodes(&self) -> bool {
        self.nodes.iter().any(TreeNode::is_query_only)
    }

    /// Terminal-like leaves (terminals, placeholders, wildcards) in order.
    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.ids()
            .filter(move |&id| self.node(id).kind != NodeKind::Nonterminal)
    }

    /// Structural equality of two subtrees: label, kind, placeholder and
    /// children, recursively. Spans are ignored.
    pub fn subtree_eq(&self, a: NodeId, other: &ParseTree, b: NodeId) -> bool {
        if self.subtree_hash(a) != other.subtree_hash(b) {
            return false;
        }
        let (x, y) = (self.node(a), other.node(b));
        x.label == y.label
            && x.kind == y.kind
            && x.placeholder == y.placeholder
            && x.children.len() == y.children.len()
            && x.children
                .iter()
                .zip(&y.children)
                .all(|(&ca, &cb)| self.subtree_eq(ca, other, cb))
    }

    /// Space-separated token text of a subtree.
    pub fn text(&self, id: NodeId) -> String {
        let mut out = Vec::new();
        self.collect_text(id, &mut out);
        out.join(" ")
    }

    fn collect_text<'a>(&'a self, id: NodeId, out: &mut Vec<&'a str>) {
        let n = self.node(id);
        if n.kind == NodeKind::Nonterminal {
            for &c in &n.children {
                self.collect_text(c, out);
            }
        } else {
            out.push(&n.label);
        }
    }

    fn collect_replaced(&self, id: NodeId, replace: &dyn Fn(NodeId) -> Option<String>, out: &mut Vec<String>) {
        if let Some(tok) = replace(id) {
            out.push(tok);
            return;
        }
        let n = self.node(id);
        if n.kind == NodeKind::Nonterminal {
            for &c in &n.children {
                self.collect_replaced(c, replace, out);
            }
        } else {
            out.push(n.label.clone());
        }
    }

    /// Token text of a subtree laid out as source lines: no space before
    /// closing punctuation, line breaks after `;`, `{` and `}`.
    pub fn pretty_lines(&self) -> Vec<String> {
        self.pretty_lines_with(|_| None)
    }

    /// Like [`ParseTree::pretty_lines`], with the subtree of every node for
    /// which `replace` returns a token printed as that token instead.
    pub fn pretty_lines_with(&self, replace: impl Fn(NodeId) -> Option<String>) -> Vec<String> {
        let mut owned = Vec::new();
        self.collect_replaced(NodeId::ROOT, &replace, &mut owned);
        let tokens: Vec<&str> = owned.iter().map(String::as_str).collect();
        let mut lines = Vec::new();
        let mut line = String::new();
        let mut prev: Option<&str> = None;
        for tok in tokens {
            let glue = matches!(tok, ";" | "," | ")" | ".")
                || tok == "(" && prev.is_some_and(|p| !is_operator_text(p) && !matches!(p, "(" | "," | "if" | "while" | "return"))
                || matches!(prev, Some("(") | Some("."));
            if !line.is_empty() && !glue {
                line.push(' ');
            }
            line.push_str(tok);
            if matches!(tok, ";" | "{" | "}") {
                lines.push(std::mem::take(&mut line));
                prev = None;
                continue;
            }
            prev = Some(tok);
        }
        if !line.is_empty() {
            lines.push(line);
        }
        lines
    }
}

fn is_operator_text(s: &str) -> bool {
    s.chars().all(|c| "=+-*/%!<>&|".contains(c))
}

fn flatten(b: Built, parent: Option<NodeId>, out: &mut Vec<TreeNode>) -> NodeId {
    let id = NodeId(out.len() as u32);
    out.push(TreeNode {
        label: b.label,
        kind: b.kind,
        placeholder: b.placeholder,
        terminal_class: b.terminal_class,
        children: Vec::with_capacity(b.children.len()),
        parent,
        span: b.span,
    });
    for child in b.children {
        let cid = flatten(child, Some(id), out);
        out[id.index()].children.push(cid);
    }
    id
}

/// Structural equality of whole trees; source spans are ignored.
pub fn trees_equal(a: &ParseTree, b: &ParseTree) -> bool {
    a.subtree_eq(NodeId::ROOT, b, NodeId::ROOT)
}

impl PartialEq for ParseTree {
    fn eq(&self, other: &Self) -> bool {
        trees_equal(self, other)
    }
}

impl fmt::Display for ParseTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(t: &ParseTree, id: NodeId, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            let n = t.node(id);
            match n.kind {
                NodeKind::Nonterminal => {
                    write!(f, "{}(", n.label)?;
                    for (i, &c) in n.children.iter().enumerate() {
                        if i > 0 {
                            f.write_str(" ")?;
                        }
                        go(t, c, f)?;
                    }
                    f.write_str(")")
                }
                _ => write!(f, "{:?}", n.label),
            }
        }
        go(self, NodeId::ROOT, f)
    }
}
