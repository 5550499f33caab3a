//! Recursive-descent parser for MiniLang and its query extension.
//!
//! The grammar is relaxed so that single diff hunks parse:
//!
//! * a `{` that is never closed yields a block without its `}` child,
//! * an orphan `}` at top level becomes a terminal child of the root,
//! * a snippet that is one bare expression needs no trailing `;`,
//! * a query side consisting only of `_` yields the empty-marker root.

use super::lexer::{Token, TokenKind};
use super::tree::{
    rule, Built, Category, NodeKind, ParseTree, PlaceholderSpec, Span, TerminalClass,
    WILDCARD_LABEL,
};
use super::{Mode, ParseError};

const ASSIGN_OPS: [&str; 3] = ["=", "+=", "-="];

// Binary precedence levels, loosest first. A `binOP` placeholder binds
// tighter than every concrete level.
const BINARY_LEVELS: [&[&str]; 6] = [
    &["||"],
    &["&&"],
    &["==", "!="],
    &["<", ">", "<=", ">="],
    &["+", "-"],
    &["*", "/", "%"],
];

pub(crate) fn parse_tokens(tokens: Vec<Token>, mode: Mode) -> Result<ParseTree, ParseError> {
    if mode == Mode::Query {
        match tokens.as_slice() {
            [] => {
                return Err(ParseError::Syntax {
                    line: 1,
                    column: 1,
                    message: "empty query side; write `_` for the absence of code".into(),
                })
            }
            [t] if t.kind == TokenKind::Underscore => return Ok(ParseTree::empty_marker()),
            _ => {}
        }
    } else if let Some(t) = tokens.iter().find(|t| {
        matches!(t.kind, TokenKind::Placeholder(_) | TokenKind::Wildcard)
    }) {
        return Err(ParseError::QueryTokenInCodeMode {
            line: t.line,
            column: t.col,
            token: t.text.clone(),
        });
    }
    let mut p = Parser { tokens, pos: 0 };
    let root = p.snippet()?;
    Ok(ParseTree::from_built(root))
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, ahead: usize) -> Option<&Token> {
        self.tokens.get(self.pos + ahead)
    }

    fn at(&self, text: &str) -> bool {
        self.peek().is_some_and(|t| t.is(text))
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        self.pos += 1;
        t
    }

    fn error_here(&self, message: impl Into<String>) -> ParseError {
        let (line, column) = match self.peek().or_else(|| self.tokens.last()) {
            Some(t) if self.pos < self.tokens.len() => (t.line, t.col),
            Some(t) => (t.line, t.col + t.text.chars().count() as u32),
            None => (1, 1),
        };
        ParseError::Syntax {
            line,
            column,
            message: message.into(),
        }
    }

    fn expect(&mut self, text: &str, class: TerminalClass) -> Result<Built, ParseError> {
        if self.at(text) {
            Ok(terminal(self.next(), class))
        } else {
            let found = self
                .peek()
                .map_or("end of snippet".to_string(), |t| format!("`{}`", t.text));
            Err(self.error_here(format!("expected `{text}`, found {found}")))
        }
    }

    fn snippet(&mut self) -> Result<Built, ParseError> {
        let mut items = Vec::new();
        while let Some(tok) = self.peek() {
            if tok.is("}") {
                items.push(terminal(self.next(), TerminalClass::Punct));
                continue;
            }
            let first = items.is_empty();
            let stmt = self.statement(first)?;
            items.push(stmt);
        }
        Ok(Built::nonterminal(rule::SNIPPET, items))
    }

    /// `top_first` marks the first item of a snippet, the only place where a
    /// bare expression may omit its `;`.
    fn statement(&mut self, top_first: bool) -> Result<Built, ParseError> {
        let tok = self.peek().expect("statement called at end of input");
        if tok.kind == TokenKind::Wildcard && self.wildcard_is_statement() {
            return Ok(wildcard(self.next()));
        }
        if tok.is("{") {
            return self.block();
        }
        if tok.kind == TokenKind::Keyword {
            return match tok.text.as_str() {
                "if" => self.if_stmt(),
                "while" => self.while_stmt(),
                "return" => self.return_stmt(),
                other => Err(self.error_here(format!("unexpected keyword `{other}`"))),
            };
        }
        if is_ident_like(tok) && self.peek_at(1).is_some_and(is_ident_like) {
            return self.var_decl();
        }
        let expr = self.expression()?;
        if let Some(op) = self.assign_operator() {
            if !is_lvalue(&expr) {
                return Err(self.error_here("left side of assignment is not assignable"));
            }
            let rhs = self.expression()?;
            let semi = self.expect(";", TerminalClass::Punct)?;
            return Ok(Built::nonterminal(rule::ASSIGN, vec![expr, op, rhs, semi]));
        }
        if self.peek().is_none() && top_first {
            return Ok(Built::nonterminal(rule::EXPR_STMT, vec![expr]));
        }
        let semi = self.expect(";", TerminalClass::Punct)?;
        Ok(Built::nonterminal(rule::EXPR_STMT, vec![expr, semi]))
    }

    fn wildcard_is_statement(&self) -> bool {
        match self.peek_at(1) {
            None => true,
            Some(t) => !matches!(t.kind, TokenKind::Operator)
                && !(t.kind == TokenKind::Punct && [";", ".", "(", ")", ","].contains(&t.text.as_str())),
        }
    }

    fn assign_operator(&mut self) -> Option<Built> {
        let tok = self.peek()?;
        match &tok.kind {
            TokenKind::Operator if ASSIGN_OPS.contains(&tok.text.as_str()) => {
                Some(terminal(self.next(), TerminalClass::AssignOp))
            }
            TokenKind::Placeholder(spec) if spec.category == Category::Op => {
                let spec = *spec;
                Some(placeholder(self.next(), spec))
            }
            _ => None,
        }
    }

    fn block(&mut self) -> Result<Built, ParseError> {
        let mut children = vec![self.expect("{", TerminalClass::Punct)?];
        loop {
            match self.peek() {
                // unclosed block: the hunk ends before its `}`
                None => break,
                Some(t) if t.is("}") => {
                    children.push(terminal(self.next(), TerminalClass::Punct));
                    break;
                }
                Some(_) => children.push(self.statement(false)?),
            }
        }
        Ok(Built::nonterminal(rule::BLOCK, children))
    }

    fn body(&mut self) -> Result<Built, ParseError> {
        if self.peek().is_none() {
            return Err(self.error_here("expected a statement"));
        }
        self.statement(false)
    }

    fn if_stmt(&mut self) -> Result<Built, ParseError> {
        let mut children = vec![
            self.expect("if", TerminalClass::Keyword)?,
            self.expect("(", TerminalClass::Punct)?,
            self.expression()?,
            self.expect(")", TerminalClass::Punct)?,
            self.body()?,
        ];
        if self.at("else") {
            children.push(terminal(self.next(), TerminalClass::Keyword));
            children.push(self.body()?);
        }
        Ok(Built::nonterminal(rule::IF, children))
    }

    fn while_stmt(&mut self) -> Result<Built, ParseError> {
        let children = vec![
            self.expect("while", TerminalClass::Keyword)?,
            self.expect("(", TerminalClass::Punct)?,
            self.expression()?,
            self.expect(")", TerminalClass::Punct)?,
            self.body()?,
        ];
        Ok(Built::nonterminal(rule::WHILE, children))
    }

    fn return_stmt(&mut self) -> Result<Built, ParseError> {
        let mut children = vec![self.expect("return", TerminalClass::Keyword)?];
        if !self.at(";") {
            children.push(self.expression()?);
        }
        children.push(self.expect(";", TerminalClass::Punct)?);
        Ok(Built::nonterminal(rule::RETURN, children))
    }

    fn var_decl(&mut self) -> Result<Built, ParseError> {
        let ty = self.identifier()?;
        let name = self.identifier()?;
        let eq = self.expect("=", TerminalClass::Punct)?;
        let init = self.expression()?;
        let semi = self.expect(";", TerminalClass::Punct)?;
        Ok(Built::nonterminal(rule::VAR_DECL, vec![ty, name, eq, init, semi]))
    }

    /// An identifier terminal or an `ID` placeholder.
    fn identifier(&mut self) -> Result<Built, ParseError> {
        match self.peek() {
            Some(t) if matches!(t.kind, TokenKind::Ident | TokenKind::Underscore) => {
                Ok(terminal(self.next(), TerminalClass::Identifier))
            }
            Some(Token {
                kind: TokenKind::Placeholder(spec),
                ..
            }) if spec.category == Category::Id => {
                let spec = *spec;
                Ok(placeholder(self.next(), spec))
            }
            _ => Err(self.error_here("expected an identifier")),
        }
    }

    fn expression(&mut self) -> Result<Built, ParseError> {
        self.binary(0)
    }

    fn binary(&mut self, level: usize) -> Result<Built, ParseError> {
        if level == BINARY_LEVELS.len() {
            return self.placeholder_binary();
        }
        let mut lhs = self.binary(level + 1)?;
        while let Some(t) = self.peek() {
            if t.kind != TokenKind::Operator || !BINARY_LEVELS[level].contains(&t.text.as_str()) {
                break;
            }
            let op = terminal(self.next(), TerminalClass::BinaryOp);
            let rhs = self.binary(level + 1)?;
            lhs = Built::nonterminal(rule::BINARY, vec![lhs, op, rhs]);
        }
        Ok(lhs)
    }

    fn placeholder_binary(&mut self) -> Result<Built, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Token {
            kind: TokenKind::Placeholder(spec),
            ..
        }) = self.peek()
        {
            if spec.category != Category::BinOp {
                break;
            }
            let spec = *spec;
            let op = placeholder(self.next(), spec);
            let rhs = self.unary()?;
            lhs = Built::nonterminal(rule::BINARY, vec![lhs, op, rhs]);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Built, ParseError> {
        let op = match self.peek() {
            Some(t) if t.kind == TokenKind::Operator && ["!", "-", "++", "--"].contains(&t.text.as_str()) => {
                terminal(self.next(), TerminalClass::UnaryOp)
            }
            Some(Token {
                kind: TokenKind::Placeholder(spec),
                ..
            }) if spec.category == Category::UnOp => {
                let spec = *spec;
                placeholder(self.next(), spec)
            }
            _ => return self.postfix(),
        };
        let operand = self.unary()?;
        Ok(Built::nonterminal(rule::UNARY, vec![op, operand]))
    }

    fn postfix(&mut self) -> Result<Built, ParseError> {
        let mut expr = self.primary()?;
        loop {
            if self.at("(") {
                let open = terminal(self.next(), TerminalClass::Punct);
                let mut args = Vec::new();
                if !self.at(")") {
                    args.push(self.expression()?);
                    while self.at(",") {
                        args.push(terminal(self.next(), TerminalClass::Punct));
                        args.push(self.expression()?);
                    }
                }
                let close = self.expect(")", TerminalClass::Punct)?;
                let args = Built::nonterminal(rule::ARGS, args);
                expr = Built::nonterminal(rule::CALL, vec![expr, open, args, close]);
            } else if self.at(".") {
                let dot = terminal(self.next(), TerminalClass::Punct);
                let field = self.identifier()?;
                expr = Built::nonterminal(rule::MEMBER, vec![expr, dot, field]);
            } else if self.at("++") || self.at("--") {
                let op = terminal(self.next(), TerminalClass::UnaryOp);
                expr = Built::nonterminal(rule::POSTFIX, vec![expr, op]);
            } else {
                return Ok(expr);
            }
        }
    }

    fn primary(&mut self) -> Result<Built, ParseError> {
        let Some(tok) = self.peek() else {
            return Err(self.error_here("expected an expression, found end of snippet"));
        };
        match &tok.kind {
            TokenKind::Ident | TokenKind::Underscore => {
                let id = terminal(self.next(), TerminalClass::Identifier);
                Ok(Built::nonterminal(rule::NAME, vec![id]))
            }
            TokenKind::Int | TokenKind::Str | TokenKind::Bool | TokenKind::Null => {
                let lit = terminal(self.next(), TerminalClass::Literal);
                Ok(Built::nonterminal(rule::LITERAL, vec![lit]))
            }
            TokenKind::Placeholder(spec) => {
                let spec = *spec;
                match spec.category {
                    Category::Expr => Ok(placeholder(self.next(), spec)),
                    Category::Id => {
                        let id = placeholder(self.next(), spec);
                        Ok(Built::nonterminal(rule::NAME, vec![id]))
                    }
                    Category::Lt => {
                        let lit = placeholder(self.next(), spec);
                        Ok(Built::nonterminal(rule::LITERAL, vec![lit]))
                    }
                    _ => Err(self.error_here(format!(
                        "placeholder `{}` cannot stand for an expression",
                        tok.text
                    ))),
                }
            }
            TokenKind::Wildcard => Ok(wildcard(self.next())),
            TokenKind::Punct if tok.text == "(" => {
                let open = terminal(self.next(), TerminalClass::Punct);
                let inner = self.expression()?;
                let close = self.expect(")", TerminalClass::Punct)?;
                Ok(Built::nonterminal(rule::PAREN, vec![open, inner, close]))
            }
            _ => Err(self.error_here(format!("expected an expression, found `{}`", tok.text))),
        }
    }
}

fn is_ident_like(t: &Token) -> bool {
    match &t.kind {
        TokenKind::Ident | TokenKind::Underscore => true,
        TokenKind::Placeholder(spec) => spec.category == Category::Id,
        _ => false,
    }
}

fn is_lvalue(expr: &Built) -> bool {
    match expr.kind {
        NodeKind::Placeholder => true,
        NodeKind::Nonterminal => expr.label == rule::NAME || expr.label == rule::MEMBER,
        _ => false,
    }
}

fn span_of(t: &Token) -> Span {
    Span {
        start_line: t.line,
        start_col: t.col,
        end_line: t.line,
        end_col: t.col + t.text.chars().count() as u32,
    }
}

fn terminal(t: Token, class: TerminalClass) -> Built {
    let span = span_of(&t);
    Built::leaf(t.text, NodeKind::Terminal, Some(class), span)
}

fn placeholder(t: Token, spec: PlaceholderSpec) -> Built {
    let span = span_of(&t);
    let mut b = Built::leaf(spec.to_string(), NodeKind::Placeholder, None, span);
    b.placeholder = Some(spec);
    b
}

fn wildcard(t: Token) -> Built {
    let span = span_of(&t);
    Built::leaf(WILDCARD_LABEL.to_string(), NodeKind::Wildcard, None, span)
}
