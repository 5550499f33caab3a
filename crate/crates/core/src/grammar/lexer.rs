use super::tree::{Category, PlaceholderSpec};
use super::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Keyword,
    Int,
    Str,
    Bool,
    Null,
    Operator,
    Punct,
    Placeholder(PlaceholderSpec),
    Wildcard,
    /// A lone `_`. Identifier in code, the empty marker when it is a whole query side.
    Underscore,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    /// 1-based line and column of the first character.
    pub line: u32,
    pub col: u32,
}

impl Token {
    pub fn is(&self, text: &str) -> bool {
        matches!(self.kind, TokenKind::Operator | TokenKind::Punct | TokenKind::Keyword)
            && self.text == text
    }
}

const KEYWORDS: [&str; 4] = ["if", "else", "while", "return"];

// longest first so maximal munch falls out of the scan order
const OPERATORS: [&str; 19] = [
    "||", "&&", "==", "!=", "<=", ">=", "+=", "-=", "++", "--", "=", "<", ">", "+", "-", "*",
    "/", "%", "!",
];

const PUNCT: [char; 7] = ['(', ')', '{', '}', ';', ',', '.'];

/// Lexes MiniLang source lines, including the query-language tokens.
pub fn tokenize<S: AsRef<str>>(lines: &[S]) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    for (lineno, line) in lines.iter().enumerate() {
        lex_line(line.as_ref(), lineno as u32 + 1, &mut out)?;
    }
    Ok(out)
}

fn lex_line(line: &str, lineno: u32, out: &mut Vec<Token>) -> Result<(), ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i as u32 + 1;
        let push = |out: &mut Vec<Token>, kind: TokenKind, text: String| {
            out.push(Token {
                kind,
                text,
                line: lineno,
                col,
            })
        };
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            break;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            if let Some(category) = Category::from_keyword(&word) {
                let mut name = None;
                if let Some((n, len)) = named_suffix(&chars[i..]) {
                    name = Some(n);
                    i += len;
                }
                let text: String = chars[start..i].iter().collect();
                push(out, TokenKind::Placeholder(PlaceholderSpec { category, name }), text);
                continue;
            }
            let kind = match word.as_str() {
                "_" => TokenKind::Underscore,
                "true" | "false" => TokenKind::Bool,
                "null" => TokenKind::Null,
                w if KEYWORDS.contains(&w) => TokenKind::Keyword,
                _ => TokenKind::Ident,
            };
            push(out, kind, word);
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            push(out, TokenKind::Int, chars[start..i].iter().collect());
            continue;
        }
        if c == '"' {
            let start = i;
            i += 1;
            let mut closed = false;
            while i < chars.len() {
                match chars[i] {
                    '\\' => i += 2,
                    '"' => {
                        i += 1;
                        closed = true;
                        break;
                    }
                    _ => i += 1,
                }
            }
            if !closed {
                return Err(ParseError::Lex {
                    line: lineno,
                    column: col,
                    message: "unterminated string literal".into(),
                });
            }
            push(out, TokenKind::Str, chars[start..i].iter().collect());
            continue;
        }
        if chars[i..].starts_with(&['<', '.', '.', '.', '>']) {
            i += 5;
            push(out, TokenKind::Wildcard, "<...>".into());
            continue;
        }
        if PUNCT.contains(&c) {
            i += 1;
            push(out, TokenKind::Punct, c.to_string());
            continue;
        }
        let ahead: String = chars[i..].iter().take(2).collect();
        if let Some(op) = OPERATORS.iter().find(|op| ahead.starts_with(*op)) {
            i += op.len();
            push(out, TokenKind::Operator, op.to_string());
            continue;
        }
        return Err(ParseError::Lex {
            line: lineno,
            column: col,
            message: format!("unexpected character {c:?}"),
        });
    }
    Ok(())
}

/// `<digits>` directly after a placeholder keyword; returns the number and
/// the consumed length.
fn named_suffix(rest: &[char]) -> Option<(u32, usize)> {
    if rest.first() != Some(&'<') {
        return None;
    }
    let digits = rest[1..].iter().take_while(|c| c.is_ascii_digit()).count();
    if digits == 0 || rest.get(1 + digits) != Some(&'>') {
        return None;
    }
    let n: String = rest[1..1 + digits].iter().collect();
    Some((n.parse().ok()?, digits + 2))
}
