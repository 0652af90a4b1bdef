//! Coefficient expression language.
//!
//! ```text
//! expr   := term (("+"|"-") term)*
//! term   := factor (("*"|"/") factor)*
//! factor := ("+"|"-") factor | atom ("^" real)?
//! atom   := number | "i" | "t" | "x" | "z1" | "z2" | "(" expr ")" | fn "(" expr ")"
//! fn     := "log" | "exp" | "sqrt"
//! ```
//!
//! Exponents are real literals, optionally signed or parenthesized. `log`
//! is the natural log of a positive real argument, so its argument may
//! depend on `t` only.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    T,
    X,
    Z1,
    Z2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Log,
    Exp,
    Sqrt,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    I,
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
    Func(Func, Box<Expr>),
}

/// Point at which an expression is evaluated.
#[derive(Debug, Clone, Copy)]
pub struct Point {
    pub t: f64,
    pub x: C64,
    pub z1: C64,
    pub z2: C64,
}

impl Point {
    pub fn tx(t: f64, x: C64) -> Self {
        Point { t, x, z1: C64::new(0.0, 0.0), z2: C64::new(0.0, 0.0) }
    }
}

pub fn parse_expr(text: &str) -> Result<Expr> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    let tok = p.peek();
    if tok.kind != Tok::Eof {
        return Err(syntax(tok, "unexpected input after expression"));
    }
    check_log_arguments(&e)?;
    Ok(e)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    kind: Tok,
    line: usize,
    col: usize,
}

fn syntax(tok: &Token, msg: &str) -> Error {
    Error::Syntax { line: tok.line, column: tok.col, message: msg.to_string() }
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let start_col = col;
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let simple = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(kind) = simple {
            out.push(Token { kind, line, col: start_col });
            i += 1;
            col += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let s = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let lit: String = chars[s..i].iter().collect();
            let v: f64 = lit.parse().map_err(|_| Error::Syntax {
                line,
                column: start_col,
                message: format!("malformed number `{lit}`"),
            })?;
            out.push(Token { kind: Tok::Num(v), line, col: start_col });
            col += i - s;
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let s = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let name: String = chars[s..i].iter().collect();
            out.push(Token { kind: Tok::Ident(name), line, col: start_col });
            col += i - s;
            continue;
        }
        return Err(Error::Syntax { line, column: start_col, message: format!("unexpected character `{c}`") });
    }
    out.push(Token { kind: Tok::Eof, line, col });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek().kind {
                Tok::Plus => {
                    self.next();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.next();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek().kind {
                Tok::Star => {
                    self.next();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Tok::Slash => {
                    self.next();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        match self.peek().kind {
            Tok::Minus => {
                self.next();
                return Ok(Expr::Neg(Box::new(self.factor()?)));
            }
            Tok::Plus => {
                self.next();
                return self.factor();
            }
            _ => {}
        }
        let base = self.atom()?;
        if self.peek().kind == Tok::Caret {
            self.next();
            let p = self.real_literal()?;
            return Ok(Expr::Pow(Box::new(base), p));
        }
        Ok(base)
    }

    fn real_literal(&mut self) -> Result<f64> {
        let tok = self.peek().clone();
        let paren = tok.kind == Tok::LParen;
        if paren {
            self.next();
        }
        let mut sign = 1.0;
        match self.peek().kind {
            Tok::Minus => {
                self.next();
                sign = -1.0;
            }
            Tok::Plus => {
                self.next();
            }
            _ => {}
        }
        let t = self.next();
        let v = match t.kind {
            Tok::Num(v) => v,
            Tok::Eof => return Err(syntax(&t, "expected a real exponent")),
            _ => return Err(Error::NonLiteralExponent { line: t.line, column: t.col }),
        };
        if paren {
            let close = self.next();
            if close.kind != Tok::RParen {
                return Err(Error::NonLiteralExponent { line: close.line, column: close.col });
            }
        }
        Ok(sign * v)
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self.next();
        match tok.kind {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let e = self.expr()?;
                let close = self.next();
                if close.kind != Tok::RParen {
                    return Err(syntax(&close, "expected `)`"));
                }
                Ok(e)
            }
            Tok::Ident(ref name) => match name.as_str() {
                "i" => Ok(Expr::I),
                "t" => Ok(Expr::Var(Var::T)),
                "x" => Ok(Expr::Var(Var::X)),
                "z1" => Ok(Expr::Var(Var::Z1)),
                "z2" => Ok(Expr::Var(Var::Z2)),
                "log" | "exp" | "sqrt" => {
                    let f = match name.as_str() {
                        "log" => Func::Log,
                        "exp" => Func::Exp,
                        _ => Func::Sqrt,
                    };
                    let open = self.next();
                    if open.kind != Tok::LParen {
                        return Err(syntax(&open, "expected `(` after function name"));
                    }
                    let arg = self.expr()?;
                    let close = self.next();
                    if close.kind != Tok::RParen {
                        return Err(syntax(&close, "expected `)`"));
                    }
                    Ok(Expr::Func(f, Box::new(arg)))
                }
                _ => Err(Error::UnknownIdentifier { name: name.clone(), line: tok.line, column: tok.col }),
            },
            Tok::Eof => Err(syntax(&tok, "unexpected end of input")),
            _ => Err(syntax(&tok, "expected a number, variable, function or `(`")),
        }
    }
}

fn check_log_arguments(e: &Expr) -> Result<()> {
    let mut bad = false;
    e.visit(&mut |n| {
        if let Expr::Func(Func::Log, a) = n {
            if a.depends_on(Var::X) || a.depends_on(Var::Z1) || a.depends_on(Var::Z2) || a.contains_i() {
                bad = true;
            }
        }
    });
    if bad {
        return Err(Error::Syntax {
            line: 1,
            column: 1,
            message: "log takes a positive real argument depending on t only".into(),
        });
    }
    Ok(())
}

impl Expr {
    pub fn num(v: f64) -> Self {
        Expr::Num(v)
    }

    pub fn var(v: Var) -> Self {
        Expr::Var(v)
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Func(_, a) => a.visit(f),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    pub fn depends_on(&self, v: Var) -> bool {
        let mut hit = false;
        self.visit(&mut |n| {
            if *n == Expr::Var(v) {
                hit = true;
            }
        });
        hit
    }

    fn contains_i(&self) -> bool {
        let mut hit = false;
        self.visit(&mut |n| {
            if *n == Expr::I {
                hit = true;
            }
        });
        hit
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::I | Expr::Var(_) => 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Func(_, a) => 1 + a.depth(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Direct tree interpretation.
    pub fn eval(&self, p: &Point) -> C64 {
        match self {
            Expr::Num(v) => C64::new(*v, 0.0),
            Expr::I => C64::new(0.0, 1.0),
            Expr::Var(Var::T) => C64::new(p.t, 0.0),
            Expr::Var(Var::X) => p.x,
            Expr::Var(Var::Z1) => p.z1,
            Expr::Var(Var::Z2) => p.z2,
            Expr::Neg(a) => -a.eval(p),
            Expr::Add(a, b) => a.eval(p) + b.eval(p),
            Expr::Sub(a, b) => a.eval(p) - b.eval(p),
            Expr::Mul(a, b) => a.eval(p) * b.eval(p),
            Expr::Div(a, b) => a.eval(p) / b.eval(p),
            Expr::Pow(a, e) => cpow(a.eval(p), *e),
            Expr::Func(f, a) => apply(*f, a.eval(p)),
        }
    }

    /// Compile to a stack program (used for hot evaluation).
    pub fn compile(&self) -> Program {
        let mut ops = Vec::new();
        self.emit(&mut ops);
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        for op in &ops {
            match op {
                Op::Const(_) | Op::Load(_) => depth += 1,
                Op::Add | Op::Sub | Op::Mul | Op::Div => depth -= 1,
                _ => {}
            }
            max_depth = max_depth.max(depth);
        }
        Program { ops: Arc::from(ops), stack: max_depth.max(1) }
    }

    fn emit(&self, ops: &mut Vec<Op>) {
        match self {
            Expr::Num(v) => ops.push(Op::Const(C64::new(*v, 0.0))),
            Expr::I => ops.push(Op::Const(C64::new(0.0, 1.0))),
            Expr::Var(v) => ops.push(Op::Load(*v)),
            Expr::Neg(a) => {
                a.emit(ops);
                ops.push(Op::Neg);
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.emit(ops);
                b.emit(ops);
                ops.push(match self {
                    Expr::Add(..) => Op::Add,
                    Expr::Sub(..) => Op::Sub,
                    Expr::Mul(..) => Op::Mul,
                    _ => Op::Div,
                });
            }
            Expr::Pow(a, e) => {
                a.emit(ops);
                ops.push(Op::Pow(*e));
            }
            Expr::Func(f, a) => {
                a.emit(ops);
                ops.push(Op::Func(*f));
            }
        }
    }

    /// Symbolic derivative with light constant folding.
    pub fn diff(&self, v: Var) -> Expr {
        use Expr::*;
        match self {
            Num(_) | I => Num(0.0),
            Var(w) => Num(if *w == v { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.diff(v)),
            Add(a, b) => add(a.diff(v), b.diff(v)),
            Sub(a, b) => sub(a.diff(v), b.diff(v)),
            Mul(a, b) => add(mul(a.diff(v), (**b).clone()), mul((**a).clone(), b.diff(v))),
            Div(a, b) => div(
                sub(mul(a.diff(v), (**b).clone()), mul((**a).clone(), b.diff(v))),
                pow((**b).clone(), 2.0),
            ),
            Pow(a, e) => mul(mul(Num(*e), pow((**a).clone(), e - 1.0)), a.diff(v)),
            Func(self::Func::Log, a) => div(a.diff(v), (**a).clone()),
            Func(self::Func::Exp, a) => mul(self.clone(), a.diff(v)),
            Func(self::Func::Sqrt, a) => div(a.diff(v), mul(Num(2.0), self.clone())),
        }
    }

    /// Replace a variable by a constant and fold.
    pub fn substitute(&self, v: Var, value: f64) -> Expr {
        use Expr::*;
        match self {
            Var(w) if *w == v => Num(value),
            Num(_) | I | Var(_) => self.clone(),
            Neg(a) => neg(a.substitute(v, value)),
            Add(a, b) => add(a.substitute(v, value), b.substitute(v, value)),
            Sub(a, b) => sub(a.substitute(v, value), b.substitute(v, value)),
            Mul(a, b) => mul(a.substitute(v, value), b.substitute(v, value)),
            Div(a, b) => div(a.substitute(v, value), b.substitute(v, value)),
            Pow(a, e) => pow(a.substitute(v, value), *e),
            Func(f, a) => func(*f, a.substitute(v, value)),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }

    /// Constant value when the tree has no free variables.
    pub fn as_constant(&self) -> Option<C64> {
        if [Var::T, Var::X, Var::Z1, Var::Z2].iter().any(|&v| self.depends_on(v)) {
            return None;
        }
        Some(self.eval(&Point::tx(1.0, C64::new(0.0, 0.0))))
    }
}

fn cpow(z: C64, e: f64) -> C64 {
    if e.fract() == 0.0 && e.abs() <= 64.0 {
        return z.powi(e as i32);
    }
    if z.im == 0.0 && z.re > 0.0 {
        return C64::new(z.re.powf(e), 0.0);
    }
    z.powf(e)
}

fn apply(f: Func, z: C64) -> C64 {
    match f {
        Func::Log => {
            if z.im == 0.0 && z.re > 0.0 {
                C64::new(z.re.ln(), 0.0)
            } else {
                z.ln()
            }
        }
        Func::Exp => z.exp(),
        Func::Sqrt => {
            if z.im == 0.0 && z.re >= 0.0 {
                C64::new(z.re.sqrt(), 0.0)
            } else {
                z.sqrt()
            }
        }
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) if v == 0.0 => Expr::Num(0.0),
        Expr::Neg(inner) => *inner,
        a => Expr::Neg(Box::new(a)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if a.is_zero() => b,
        _ if b.is_zero() => a,
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x + y),
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if b.is_zero() => a,
        _ if a.is_zero() => neg(b),
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x - y),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if a.is_zero() || b.is_zero() => Expr::Num(0.0),
        (Expr::Num(x), _) if *x == 1.0 => b,
        (_, Expr::Num(y)) if *y == 1.0 => a,
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x * y),
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if a.is_zero() => Expr::Num(0.0),
        (_, Expr::Num(y)) if *y == 1.0 => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

fn pow(a: Expr, e: f64) -> Expr {
    match a {
        _ if e == 0.0 => Expr::Num(1.0),
        _ if e == 1.0 => a,
        Expr::Num(v) if v > 0.0 || e.fract() == 0.0 => Expr::Num(v.powf(e)),
        a => Expr::Pow(Box::new(a), e),
    }
}

fn func(f: Func, a: Expr) -> Expr {
    match (f, &a) {
        (Func::Exp, Expr::Num(v)) if *v == 0.0 => Expr::Num(1.0),
        (Func::Sqrt, Expr::Num(v)) if *v == 0.0 || *v == 1.0 => Expr::Num(*v),
        _ => Expr::Func(f, Box::new(a)),
    }
}

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => PREC_ADD,
        Expr::Mul(..) | Expr::Div(..) => PREC_MUL,
        Expr::Neg(_) => PREC_NEG,
        Expr::Pow(..) => PREC_POW,
        _ => PREC_ATOM,
    }
}

fn write_num(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    // `{:?}` is the shortest representation that parses back to the same f64.
    write!(f, "{v:?}")
}

fn write_wrapped(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    if prec(e) < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if *v < 0.0 || v.is_sign_negative() {
                    write!(f, "(-")?;
                    write_num(f, -v)?;
                    write!(f, ")")
                } else {
                    write_num(f, *v)
                }
            }
            Expr::I => write!(f, "i"),
            Expr::Var(Var::T) => write!(f, "t"),
            Expr::Var(Var::X) => write!(f, "x"),
            Expr::Var(Var::Z1) => write!(f, "z1"),
            Expr::Var(Var::Z2) => write!(f, "z2"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                write_wrapped(f, a, PREC_NEG)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                write_wrapped(f, a, PREC_ADD)?;
                write!(f, "{}", if matches!(self, Expr::Add(..)) { " + " } else { " - " })?;
                write_wrapped(f, b, PREC_MUL)
            }
            Expr::Mul(a, b) | Expr::Div(a, b) => {
                write_wrapped(f, a, PREC_MUL)?;
                write!(f, "{}", if matches!(self, Expr::Mul(..)) { "*" } else { "/" })?;
                write_wrapped(f, b, PREC_NEG)
            }
            Expr::Pow(a, e) => {
                write_wrapped(f, a, PREC_ATOM)?;
                write!(f, "^")?;
                write_num(f, *e)
            }
            Expr::Func(func, a) => {
                let name = match func {
                    Func::Log => "log",
                    Func::Exp => "exp",
                    Func::Sqrt => "sqrt",
                };
                write!(f, "{name}({a})")
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Const(C64),
    Load(Var),
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Pow(f64),
    Func(Func),
}

/// Compiled postfix program; cheap to clone and safe to share across threads.
#[derive(Debug, Clone)]
pub struct Program {
    ops: Arc<[Op]>,
    stack: usize,
}

impl Program {
    pub fn eval(&self, p: &Point) -> C64 {
        let mut small = [C64::new(0.0, 0.0); 32];
        let mut big;
        let st: &mut [C64] = if self.stack <= 32 {
            &mut small
        } else {
            big = vec![C64::new(0.0, 0.0); self.stack];
            &mut big
        };
        let mut sp = 0usize;
        for op in self.ops.iter() {
            match *op {
                Op::Const(c) => {
                    st[sp] = c;
                    sp += 1;
                }
                Op::Load(v) => {
                    st[sp] = match v {
                        Var::T => C64::new(p.t, 0.0),
                        Var::X => p.x,
                        Var::Z1 => p.z1,
                        Var::Z2 => p.z2,
                    };
                    sp += 1;
                }
                Op::Neg => st[sp - 1] = -st[sp - 1],
                Op::Pow(e) => st[sp - 1] = cpow(st[sp - 1], e),
                Op::Func(f) => st[sp - 1] = apply(f, st[sp - 1]),
                Op::Add | Op::Sub | Op::Mul | Op::Div => {
                    let b = st[sp - 1];
                    let a = st[sp - 2];
                    sp -= 1;
                    st[sp - 1] = match op {
                        Op::Add => a + b,
                        Op::Sub => a - b,
                        Op::Mul => a * b,
                        _ => a / b,
                    };
                }
            }
        }
        st[0]
    }
}
