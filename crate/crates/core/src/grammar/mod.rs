//! MiniLang: the reference target language, its query extension and a
//! relaxed parser for incomplete hunks.
//!
//! Statements: blocks, `if`/`else`, `while`, `return`, expression statements,
//! assignments (`lvalue op expr;`) and declarations (`Type name = expr;`).
//! Expressions: binary and unary operators, calls, member access,
//! parentheses, identifiers and literals.
//!
//! The query extension adds the placeholders `EXPR`, `ID`, `LT`, `OP`,
//! `binOP` and `unOP` (each optionally named, as in `EXPR<1>`), the wildcard
//! `<...>` and the empty marker `_`.
//!
//! Other target languages can be plugged in through the [`Grammar`] trait.

mod lexer;
mod parser;
mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lexer::{tokenize, Token, TokenKind};
pub use tree::{
    rule, trees_equal, Category, NodeId, NodeKind, ParseTree, PlaceholderSpec, Span,
    TerminalClass, TreeNode, EMPTY_LABEL, WILDCARD_LABEL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Code,
    Query,
}

/// Lines of code (or of a query pattern) to be parsed as one unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snippet {
    pub lines: Vec<String>,
    pub mode: Mode,
}

impl Snippet {
    pub fn code<S: AsRef<str>>(lines: &[S]) -> Snippet {
        Snippet {
            lines: lines.iter().map(|l| l.as_ref().to_string()).collect(),
            mode: Mode::Code,
        }
    }

    pub fn query<S: AsRef<str>>(lines: &[S]) -> Snippet {
        Snippet {
            lines: lines.iter().map(|l| l.as_ref().to_string()).collect(),
            mode: Mode::Query,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseError {
    #[error("{line}:{column}: {message}")]
    Lex {
        line: u32,
        column: u32,
        message: String,
    },
    #[error("{line}:{column}: {message}")]
    Syntax {
        line: u32,
        column: u32,
        message: String,
    },
    #[error("{line}:{column}: query token `{token}` is not allowed in code")]
    QueryTokenInCodeMode { line: u32, column: u32, token: String },
}

impl ParseError {
    pub fn position(&self) -> (u32, u32) {
        match self {
            ParseError::Lex { line, column, .. }
            | ParseError::Syntax { line, column, .. }
            | ParseError::QueryTokenInCodeMode { line, column, .. } => (*line, *column),
        }
    }
}

/// Parses a snippet under the relaxed grammar. The root of the result is a
/// `snippet` node, or the empty marker for a query side written as `_`.
pub fn parse_snippet(snippet: &Snippet) -> Result<ParseTree, ParseError> {
    let tokens = tokenize(&snippet.lines)?;
    parser::parse_tokens(tokens, snippet.mode)
}

pub fn parse_code<S: AsRef<str>>(lines: &[S]) -> Result<ParseTree, ParseError> {
    parse_snippet(&Snippet::code(lines))
}

pub fn parse_query<S: AsRef<str>>(lines: &[S]) -> Result<ParseTree, ParseError> {
    parse_snippet(&Snippet::query(lines))
}

/// Boundary for target languages. Implementations must produce trees whose
/// statement and expression nodes use the rule names in [`rule`], so that
/// feature extraction and matching work unchanged.
pub trait Grammar: Send + Sync {
    fn name(&self) -> &str;
    fn parse(&self, snippet: &Snippet) -> Result<ParseTree, ParseError>;
}

/// The built-in reference language.
#[derive(Debug, Clone, Copy, Default)]
pub struct MiniLang;

impl Grammar for MiniLang {
    fn name(&self) -> &str {
        "minilang"
    }

    fn parse(&self, snippet: &Snippet) -> Result<ParseTree, ParseError> {
        parse_snippet(snippet)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(src: &str) -> String {
        parse_code(&[src]).unwrap().to_string()
    }

    fn qshape(lines: &[&str]) -> String {
        parse_query(lines).unwrap().to_string()
    }

    #[test]
    fn open_if_block_from_hunk() {
        assert_eq!(
            shape("if(isValidPoint(x, y)){"),
            r#"snippet(if_stmt("if" "(" call(name("isValidPoint") "(" args(name("x") "," name("y")) ")") ")" block("{")))"#
        );
    }

    #[test]
    fn empty_marker_query() {
        let t = parse_query(&["_"]).unwrap();
        assert!(t.is_empty_marker());
        assert_eq!(t.len(), 1);
        assert!(parse_query(&["  _  "]).unwrap().is_empty_marker());
    }

    #[test]
    fn literal_placeholder_in_assignment() {
        let t = parse_query(&["myVar = LT;"]).unwrap();
        assert_eq!(
            t.to_string(),
            r#"snippet(assign_stmt(name("myVar") "=" literal("LT") ";"))"#
        );
        let lit = t.ids().find(|&id| t.node(id).kind == NodeKind::Placeholder).unwrap();
        assert_eq!(
            t.node(lit).placeholder,
            Some(PlaceholderSpec {
                category: Category::Lt,
                name: None
            })
        );
    }

    #[test]
    fn orphan_close_brace_is_a_root_terminal() {
        assert_eq!(shape("} x = 1;"), r#"snippet("}" assign_stmt(name("x") "=" literal("1") ";"))"#);
    }

    #[test]
    fn bare_expression_needs_no_semicolon() {
        assert_eq!(shape("a + 1"), r#"snippet(expr_stmt(binary(name("a") "+" literal("1"))))"#);
        // only the whole snippet may be a bare expression
        assert!(parse_code(&["a + 1", "b();"]).is_err());
        assert!(parse_code(&["b();", "a + 1"]).is_err());
    }

    #[test]
    fn placeholders_rejected_in_code() {
        let err = parse_code(&["x = EXPR;"]).unwrap_err();
        assert!(matches!(err, ParseError::QueryTokenInCodeMode { line: 1, column: 5, .. }));
        assert!(matches!(
            parse_code(&["<...>"]),
            Err(ParseError::QueryTokenInCodeMode { .. })
        ));
    }

    #[test]
    fn underscore_is_an_identifier_in_code() {
        assert_eq!(shape("_"), r#"snippet(expr_stmt(name("_")))"#);
        assert!(parse_code(&["_ = 1;"]).is_ok());
    }

    #[test]
    fn empty_code_is_a_blank_snippet() {
        let empty: [&str; 0] = [];
        assert!(parse_code(&empty).unwrap().is_blank());
        assert!(parse_query(&empty).is_err());
    }

    #[test]
    fn statement_and_expression_wildcards() {
        assert_eq!(
            qshape(&["ID();", "<...>", "ID();"]),
            r#"snippet(expr_stmt(call(name("ID") "(" args() ")") ";") "<...>" expr_stmt(call(name("ID") "(" args() ")") ";"))"#
        );
        assert_eq!(
            qshape(&["foo(<...>);"]),
            r#"snippet(expr_stmt(call(name("foo") "(" args("<...>") ")") ";"))"#
        );
        assert_eq!(
            qshape(&["return <...>;"]),
            r#"snippet(return_stmt("return" "<...>" ";"))"#
        );
    }

    #[test]
    fn example_queries_parse() {
        assert_eq!(
            qshape(&["ID.ID();"]),
            r#"snippet(expr_stmt(call(member(name("ID") "." "ID") "(" args() ")") ";"))"#
        );
        assert_eq!(
            qshape(&["if (EXPR)", "  ID OP LT;"]),
            r#"snippet(if_stmt("if" "(" "EXPR" ")" assign_stmt(name("ID") "OP" literal("LT") ";")))"#
        );
        assert_eq!(
            qshape(&["run(EXPR<0>);", "now(EXPR<0>);"]),
            r#"snippet(expr_stmt(call(name("run") "(" args("EXPR<0>") ")") ";") expr_stmt(call(name("now") "(" args("EXPR<0>") ")") ";"))"#
        );
    }

    #[test]
    fn operator_placeholders() {
        assert_eq!(
            qshape(&["x = EXPR binOP unOP y;"]),
            r#"snippet(assign_stmt(name("x") "=" binary("EXPR" "binOP" unary("unOP" name("y"))) ";"))"#
        );
        let t = parse_query(&["x = a binOP<2> b;"]).unwrap();
        assert!(t.nodes().iter().any(|n| n.placeholder
            == Some(PlaceholderSpec {
                category: Category::BinOp,
                name: Some(2)
            })));
    }

    #[test]
    fn precedence_and_parentheses_shape_the_tree() {
        assert_eq!(
            shape("a||b&&c;"),
            r#"snippet(expr_stmt(binary(name("a") "||" binary(name("b") "&&" name("c"))) ";"))"#
        );
        let flat = parse_code(&["a||b&&c;"]).unwrap();
        let parens = parse_code(&["a||(b&&c);"]).unwrap();
        assert!(!trees_equal(&flat, &parens));
    }

    #[test]
    fn whitespace_does_not_change_the_tree() {
        assert!(trees_equal(
            &parse_code(&["x=1;"]).unwrap(),
            &parse_code(&[" x = 1 ;"]).unwrap()
        ));
        assert!(!trees_equal(
            &parse_code(&["x=1;"]).unwrap(),
            &parse_code(&["x=2;"]).unwrap()
        ));
    }

    #[test]
    fn declarations_and_control_flow() {
        assert_eq!(
            shape("int x = 5;"),
            r#"snippet(var_decl("int" "x" "=" literal("5") ";"))"#
        );
        assert_eq!(
            shape("while (i < n) { i++; }"),
            r#"snippet(while_stmt("while" "(" binary(name("i") "<" name("n")) ")" block("{" expr_stmt(postfix(name("i") "++") ";") "}")))"#
        );
        assert_eq!(
            shape("if (a) return; else b = -1;"),
            r#"snippet(if_stmt("if" "(" name("a") ")" return_stmt("return" ";") "else" assign_stmt(name("b") "=" unary("-" literal("1")) ";")))"#
        );
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse_code(&["x = ;"]).unwrap_err() {
            ParseError::Syntax { line, column, .. } => assert_eq!((line, column), (1, 5)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_code(&["f() = 1;"]).is_err());
        assert!(parse_code(&["if (x)"]).is_err());
        assert!(parse_query(&["import LT().LT()"]).is_err());
    }

    #[test]
    fn spans_are_recorded() {
        let t = parse_code(&["x = 1;", "  y();"]).unwrap();
        let y = t.ids().find(|&id| t.node(id).label == "y").unwrap();
        let s = t.node(y).span.unwrap();
        assert_eq!((s.start_line, s.start_col), (2, 3));
    }

    #[test]
    fn pretty_lines_reparse_to_the_same_tree() {
        let src = ["if (isValid(p.x, -y)) {", "  count += 1;", "}", "return f(a)(b);"];
        let t = parse_code(&src).unwrap();
        let lines = t.pretty_lines();
        assert_eq!(lines[0], "if (isValid(p.x, - y)) {");
        assert!(trees_equal(&t, &parse_code(&lines).unwrap()));
    }
}
