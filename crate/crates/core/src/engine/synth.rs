//! Seeded generator of MiniLang hunks for experiments and tests.
//!
//! Each change starts from a random snippet of one to four statements and
//! applies one or two edits of the kinds seen in real histories: swapped or
//! changed arguments, changed literals and operators, renamed calls, added,
//! removed or wrapped statements, and pure insertions or removals.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingestion::{prepare, CodeChange, Corpus};

const STEMS: [&str; 40] = [
    "count", "index", "value", "item", "node", "list", "map", "key", "buffer", "size", "pos",
    "total", "result", "state", "config", "name", "path", "offset", "limit", "width", "height",
    "token", "entry", "cache", "queue", "stack", "event", "handler", "parent", "child", "delta",
    "score", "flag", "timer", "level", "mode", "range", "frame", "block", "owner",
];
const PREFIXES: [&str; 10] = ["", "get", "set", "is", "has", "update", "read", "to", "find", "check"];
const SUFFIXES: [&str; 6] = ["", "Id", "Count", "At", "Next", "Info"];
const TYPES: [&str; 8] = ["int", "long", "double", "boolean", "String", "List", "Map", "var"];
const STRINGS: [&str; 8] = ["\"\"", "\"a\"", "\"id\"", "\"name\"", "\"ok\"", "\"error\"", "\"/\"", "\",\""];
const COMPARE: [&str; 6] = ["==", "!=", "<", ">", "<=", ">="];
const ARITH: [&str; 5] = ["+", "-", "*", "/", "%"];
const LOGIC: [&str; 2] = ["&&", "||"];

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Name(String),
    Lit(String),
    Binary(Box<Expr>, &'static str, Box<Expr>),
    Unary(&'static str, Box<Expr>),
    Call(Box<Expr>, Vec<Expr>),
    Member(Box<Expr>, String),
}

#[derive(Debug, Clone, PartialEq)]
enum Stmt {
    Assign(Expr, &'static str, Expr),
    Decl(&'static str, String, Expr),
    Call(Expr),
    Incr(Expr, &'static str),
    Return(Option<Expr>),
    If(Expr, Vec<Stmt>),
    While(Expr, Vec<Stmt>),
    /// `if (c) {` or `while (c) {` whose body lies outside the hunk.
    Open(&'static str, Expr),
}

fn precedence(op: &str) -> u8 {
    match op {
        "||" => 1,
        "&&" => 2,
        "==" | "!=" => 3,
        "<" | ">" | "<=" | ">=" => 4,
        "+" | "-" => 5,
        _ => 6,
    }
}

fn render_expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Name(s) | Expr::Lit(s) => out.push_str(s),
        Expr::Binary(l, op, r) => {
            let p = precedence(op);
            render_operand(l, |q| q < p, out);
            out.push_str(&format!(" {op} "));
            render_operand(r, |q| q <= p, out);
        }
        Expr::Unary(op, x) => {
            out.push_str(op);
            render_operand(x, |_| true, out);
        }
        Expr::Call(f, args) => {
            render_expr(f, out);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                render_expr(a, out);
            }
            out.push(')');
        }
        Expr::Member(x, field) => {
            render_expr(x, out);
            out.push('.');
            out.push_str(field);
        }
    }
}

/// Renders a binary operand, parenthesized when `needs_paren` holds for its
/// precedence.
fn render_operand(e: &Expr, needs_paren: impl Fn(u8) -> bool, out: &mut String) {
    if let Expr::Binary(_, op, _) = e {
        if needs_paren(precedence(op)) {
            out.push('(');
            render_expr(e, out);
            out.push(')');
            return;
        }
    }
    render_expr(e, out);
}

fn expr_text(e: &Expr) -> String {
    let mut s = String::new();
    render_expr(e, &mut s);
    s
}

fn render_stmt(s: &Stmt, indent: usize, lines: &mut Vec<String>) {
    let pad = "  ".repeat(indent);
    match s {
        Stmt::Assign(l, op, r) => lines.push(format!("{pad}{} {op} {};", expr_text(l), expr_text(r))),
        Stmt::Decl(ty, name, init) => lines.push(format!("{pad}{ty} {name} = {};", expr_text(init))),
        Stmt::Call(c) => lines.push(format!("{pad}{};", expr_text(c))),
        Stmt::Incr(x, op) => lines.push(format!("{pad}{}{op};", expr_text(x))),
        Stmt::Return(None) => lines.push(format!("{pad}return;")),
        Stmt::Return(Some(e)) => lines.push(format!("{pad}return {};", expr_text(e))),
        Stmt::If(c, body) | Stmt::While(c, body) => {
            let kw = if matches!(s, Stmt::If(..)) { "if" } else { "while" };
            lines.push(format!("{pad}{kw} ({}) {{", expr_text(c)));
            for b in body {
                render_stmt(b, indent + 1, lines);
            }
            lines.push(format!("{pad}}}"));
        }
        Stmt::Open(kw, c) => lines.push(format!("{pad}{kw} ({}) {{", expr_text(c))),
    }
}

fn render(stmts: &[Stmt]) -> Vec<String> {
    let mut lines = Vec::new();
    for s in stmts {
        render_stmt(s, 0, &mut lines);
    }
    lines
}

/// Preorder walk over every expression, with the mutable-visit counter
/// pattern used to edit the n-th expression satisfying a predicate.
fn for_each_expr(stmts: &mut [Stmt], f: &mut dyn FnMut(&mut Expr)) {
    fn walk(e: &mut Expr, f: &mut dyn FnMut(&mut Expr)) {
        f(e);
        match e {
            Expr::Name(_) | Expr::Lit(_) => {}
            Expr::Binary(l, _, r) => {
                walk(l, f);
                walk(r, f);
            }
            Expr::Unary(_, x) | Expr::Member(x, _) => walk(x, f),
            Expr::Call(c, args) => {
                walk(c, f);
                for a in args {
                    walk(a, f);
                }
            }
        }
    }
    for s in stmts {
        match s {
            Stmt::Assign(l, _, r) => {
                walk(l, f);
                walk(r, f);
            }
            Stmt::Decl(_, _, e) | Stmt::Call(e) | Stmt::Incr(e, _) | Stmt::Open(_, e) => walk(e, f),
            Stmt::Return(e) => {
                if let Some(e) = e {
                    walk(e, f);
                }
            }
            Stmt::If(c, body) | Stmt::While(c, body) => {
                walk(c, f);
                for_each_expr(body, f);
            }
        }
    }
}

/// Applies `edit` to the `n`-th expression (preorder) for which `pick` holds.
fn edit_nth(stmts: &mut [Stmt], pick: impl Fn(&Expr) -> bool, n: usize, edit: &mut dyn FnMut(&mut Expr)) {
    let mut seen = 0;
    for_each_expr(stmts, &mut |e| {
        if pick(e) {
            if seen == n {
                edit(e);
            }
            seen += 1;
        }
    });
}

fn count_exprs(stmts: &mut [Stmt], pick: impl Fn(&Expr) -> bool) -> usize {
    let mut n = 0;
    for_each_expr(stmts, &mut |e| {
        if pick(e) {
            n += 1;
        }
    });
    n
}

/// Seeded source of synthetic code changes.
pub struct SynthGenerator {
    rng: ChaCha8Rng,
    names: Vec<String>,
}

impl SynthGenerator {
    pub fn new(seed: u64) -> SynthGenerator {
        let mut names = Vec::new();
        for stem in STEMS {
            for prefix in PREFIXES {
                for suffix in SUFFIXES {
                    let name = if prefix.is_empty() {
                        format!("{stem}{suffix}")
                    } else {
                        let mut c = stem.chars();
                        let first = c.next().unwrap().to_ascii_uppercase();
                        format!("{prefix}{first}{}{suffix}", c.as_str())
                    };
                    names.push(name);
                }
            }
        }
        names.extend(["i", "j", "k", "n", "x", "y", "a", "b", "s", "e"].map(String::from));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        names.shuffle(&mut rng);
        SynthGenerator { rng, names }
    }

    /// Skewed pick: a few names are common, most are rare.
    fn name(&mut self) -> String {
        let u: f64 = self.rng.gen();
        let i = ((self.names.len() as f64) * u * u * u) as usize;
        self.names[i.min(self.names.len() - 1)].clone()
    }

    fn literal(&mut self) -> String {
        match self.rng.gen_range(0..10) {
            0..=5 => {
                let bound = if self.rng.gen_bool(0.7) { 4 } else { 1000 };
                self.rng.gen_range(0..bound).to_string()
            }
            6 | 7 => STRINGS.choose(&mut self.rng).unwrap().to_string(),
            8 => ["true", "false"].choose(&mut self.rng).unwrap().to_string(),
            _ => "null".to_string(),
        }
    }

    fn leaf(&mut self) -> Expr {
        if self.rng.gen_bool(0.65) {
            Expr::Name(self.name())
        } else {
            Expr::Lit(self.literal())
        }
    }

    fn callee(&mut self) -> Expr {
        if self.rng.gen_bool(0.4) {
            Expr::Member(Box::new(Expr::Name(self.name())), self.name())
        } else {
            Expr::Name(self.name())
        }
    }

    fn call(&mut self, depth: u32) -> Expr {
        let n = [0, 1, 1, 2, 2, 3][self.rng.gen_range(0..6)];
        let args = (0..n).map(|_| self.expr(depth.saturating_sub(1))).collect();
        Expr::Call(Box::new(self.callee()), args)
    }

    fn expr(&mut self, depth: u32) -> Expr {
        if depth == 0 {
            return self.leaf();
        }
        match self.rng.gen_range(0..10) {
            0..=3 => self.leaf(),
            4 | 5 => {
                let op = ARITH.choose(&mut self.rng).unwrap();
                Expr::Binary(Box::new(self.expr(depth - 1)), op, Box::new(self.expr(depth - 1)))
            }
            6 => Expr::Member(Box::new(Expr::Name(self.name())), self.name()),
            7 => Expr::Unary(["!", "-"][self.rng.gen_range(0..2)], Box::new(self.leaf())),
            _ => self.call(depth),
        }
    }

    fn condition(&mut self) -> Expr {
        let cmp = Expr::Binary(
            Box::new(self.expr(1)),
            COMPARE.choose(&mut self.rng).unwrap(),
            Box::new(self.expr(1)),
        );
        match self.rng.gen_range(0..6) {
            0 => self.call(1),
            1 => Expr::Binary(Box::new(cmp), LOGIC.choose(&mut self.rng).unwrap(), Box::new(self.expr(1))),
            2 => Expr::Unary("!", Box::new(self.call(1))),
            _ => cmp,
        }
    }

    fn lvalue(&mut self) -> Expr {
        if self.rng.gen_bool(0.25) {
            Expr::Member(Box::new(Expr::Name(self.name())), self.name())
        } else {
            Expr::Name(self.name())
        }
    }

    fn simple_stmt(&mut self) -> Stmt {
        match self.rng.gen_range(0..12) {
            0..=3 => {
                let op = ["=", "=", "=", "+=", "-="][self.rng.gen_range(0..5)];
                Stmt::Assign(self.lvalue(), op, self.expr(2))
            }
            4 | 5 => Stmt::Decl(TYPES.choose(&mut self.rng).unwrap(), self.name(), self.expr(2)),
            6..=8 => Stmt::Call(self.call(2)),
            9 => Stmt::Incr(Expr::Name(self.name()), ["++", "--"][self.rng.gen_range(0..2)]),
            _ => Stmt::Return(if self.rng.gen_bool(0.85) { Some(self.expr(2)) } else { None }),
        }
    }

    fn stmt(&mut self, nested: bool) -> Stmt {
        if nested {
            return self.simple_stmt();
        }
        match self.rng.gen_range(0..10) {
            0 => {
                let n = self.rng.gen_range(1..=2);
                Stmt::If(self.condition(), (0..n).map(|_| self.simple_stmt()).collect())
            }
            1 => Stmt::While(self.condition(), vec![self.simple_stmt()]),
            _ => self.simple_stmt(),
        }
    }

    fn snippet(&mut self) -> Vec<Stmt> {
        let n = [1, 1, 1, 2, 2, 3, 4][self.rng.gen_range(0..7)];
        let mut stmts: Vec<Stmt> = (0..n).map(|_| self.stmt(false)).collect();
        if self.rng.gen_bool(0.12) {
            let kw = if self.rng.gen_bool(0.75) { "if" } else { "while" };
            let open = Stmt::Open(kw, self.condition());
            stmts.truncate(self.rng.gen_range(0..=stmts.len().min(1)));
            stmts.push(open);
        }
        stmts
    }

    /// One edit of `stmts`; returns false when the edit does not apply.
    fn edit(&mut self, stmts: &mut Vec<Stmt>) -> bool {
        match self.rng.gen_range(0..11) {
            0 => {
                let is_pair = |e: &Expr| matches!(e, Expr::Call(_, a) if a.len() >= 2);
                let n = count_exprs(stmts, is_pair);
                if n == 0 {
                    return false;
                }
                let i = self.rng.gen_range(0..n);
                edit_nth(stmts, is_pair, i, &mut |e| {
                    if let Expr::Call(_, args) = e {
                        args.swap(0, 1);
                    }
                });
                true
            }
            1 => {
                let is_lit = |e: &Expr| matches!(e, Expr::Lit(_));
                let n = count_exprs(stmts, is_lit);
                if n == 0 {
                    return false;
                }
                let i = self.rng.gen_range(0..n);
                let lit = self.literal();
                edit_nth(stmts, is_lit, i, &mut |e| *e = Expr::Lit(lit.clone()));
                true
            }
            2 => {
                let is_bin = |e: &Expr| matches!(e, Expr::Binary(..));
                let n = count_exprs(stmts, is_bin);
                if n == 0 {
                    return false;
                }
                let i = self.rng.gen_range(0..n);
                let pick: f64 = self.rng.gen();
                edit_nth(stmts, is_bin, i, &mut |e| {
                    if let Expr::Binary(_, op, _) = e {
                        let family: &[&'static str] = if COMPARE.contains(op) {
                            &COMPARE
                        } else if LOGIC.contains(op) {
                            &LOGIC
                        } else {
                            &ARITH
                        };
                        *op = family[(pick * family.len() as f64) as usize];
                    }
                });
                true
            }
            3 | 4 => {
                let is_name = |e: &Expr| matches!(e, Expr::Name(_));
                let n = count_exprs(stmts, is_name);
                if n == 0 {
                    return false;
                }
                let i = self.rng.gen_range(0..n);
                let name = self.name();
                edit_nth(stmts, is_name, i, &mut |e| *e = Expr::Name(name.clone()));
                true
            }
            5 => {
                let is_call = |e: &Expr| matches!(e, Expr::Call(..));
                let n = count_exprs(stmts, is_call);
                if n == 0 {
                    return false;
                }
                let i = self.rng.gen_range(0..n);
                let arg = self.expr(1);
                let add = self.rng.gen_bool(0.5);
                edit_nth(stmts, is_call, i, &mut |e| {
                    if let Expr::Call(_, args) = e {
                        if add || args.is_empty() {
                            args.push(arg.clone());
                        } else {
                            args.pop();
                        }
                    }
                });
                true
            }
            6 => {
                // an open block must stay last
                let end = stmts.len() - usize::from(matches!(stmts.last(), Some(Stmt::Open(..))));
                let at = self.rng.gen_range(0..=end);
                let s = self.stmt(false);
                stmts.insert(at, s);
                true
            }
            7 => {
                if stmts.len() < 2 {
                    return false;
                }
                let at = self.rng.gen_range(0..stmts.len());
                stmts.remove(at);
                true
            }
            8 => {
                let at = self.rng.gen_range(0..stmts.len());
                if matches!(stmts[at], Stmt::Open(..) | Stmt::If(..) | Stmt::While(..)) {
                    return false;
                }
                let inner = stmts[at].clone();
                stmts[at] = Stmt::If(self.condition(), vec![inner]);
                true
            }
            9 => {
                let is_any = |e: &Expr| !matches!(e, Expr::Member(..));
                let n = count_exprs(stmts, is_any);
                if n == 0 {
                    return false;
                }
                let i = self.rng.gen_range(0..n);
                let replacement = self.expr(1);
                edit_nth(stmts, is_any, i, &mut |e| *e = replacement.clone());
                true
            }
            _ => {
                let at = self.rng.gen_range(0..stmts.len());
                match &mut stmts[at] {
                    Stmt::Assign(_, op, _) => {
                        *op = ["=", "+=", "-="][self.rng.gen_range(0..3)];
                        true
                    }
                    Stmt::Incr(_, op) => {
                        *op = if *op == "++" { "--" } else { "++" };
                        true
                    }
                    _ => false,
                }
            }
        }
    }

    /// A change whose sides parse and differ.
    pub fn change(&mut self) -> CodeChange {
        loop {
            let roll = self.rng.gen_range(0..100);
            let (old, new) = if roll < 5 {
                (Vec::new(), self.snippet())
            } else if roll < 10 {
                (self.snippet(), Vec::new())
            } else {
                let old = self.snippet();
                let mut new = old.clone();
                let edits = if self.rng.gen_bool(0.25) { 2 } else { 1 };
                for _ in 0..edits {
                    let mut tries = 0;
                    while !self.edit(&mut new) && tries < 8 {
                        tries += 1;
                    }
                }
                (old, new)
            };
            let change = CodeChange::new(&render(&old), &render(&new));
            if prepare(&change).is_ok() {
                return change;
            }
        }
    }
}

/// A corpus of `n` synthetic changes; the same seed always yields the same corpus.
pub fn synthetic_corpus(n: usize, seed: u64) -> Corpus {
    let mut g = SynthGenerator::new(seed);
    let mut corpus = Corpus::new();
    for i in 0..n {
        let mut change = g.change();
        change.repo = "synthetic".into();
        change.commit = format!("{:08x}", i / 3);
        change.file = format!("src/File{}.mini", i % 97);
        corpus
            .append_change(change)
            .expect("generated change satisfies the corpus invariants");
    }
    corpus
}
