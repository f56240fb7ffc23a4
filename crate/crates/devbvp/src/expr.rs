//! A small closed-form expression language over the variables `t`, `x`, `y`.
//!
//! This is the configuration surface for every scalar function in a problem
//! file: nonlinearities, deviations, history functions, lower/upper solutions
//! and Lipschitz coefficients. The grammar (EBNF, also in the README):
//!
//! ```text
//! expression := additive [ cmp additive ]        (comparisons only inside piecewise)
//! additive   := term { ("+" | "-") term }
//! term       := unary { ("*" | "/") unary }
//! unary      := "-" unary | power
//! power      := primary [ "^" unary ]            (right-associative)
//! primary    := NUMBER | NAME "(" expression { "," expression } ")"
//!             | NAME | "(" expression ")"
//! cmp        := "<" | "<=" | ">" | ">=" | "==" | "!="
//! ```
//!
//! Names: variables `t`, `x`, `y`; constants `pi`, `e`; functions `sin`,
//! `cos`, `sqrt`, `abs`, `floor`, `exp`, `log`, `min`, `max`,
//! `piecewise(cond, then, else)` and `paperphi(k, v)`.
//!
//! `floor` is the integer part rounding toward negative infinity.
//! `paperphi(k, v)` is the countably-piecewise sawtooth `k/n - k*v` where the
//! branch index `n` is chosen so that `|v|` lies in `(1/(n+1), 1/n]` for
//! `|v| <= 1` and in `(n, n+1]` for `|v| > 1`, with value `0` at `v = 0`.
//! These half-open intervals tile `(0, inf)`, so the function is total.
//!
//! Evaluation is IEEE double precision and never panics: domain faults
//! (division by zero, `sqrt` of a negative, `log` of a non-positive, invalid
//! powers, overflow to non-finite) are reported as [`EvalError`].

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    X,
    Y,
}

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::X => "x",
            Var::Y => "y",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Sqrt,
    Abs,
    Floor,
    Exp,
    Log,
    Min,
    Max,
    PaperPhi,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Floor => "floor",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Min => "min",
            Func::Max => "max",
            Func::PaperPhi => "paperphi",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max | Func::PaperPhi => 2,
            _ => 1,
        }
    }
}

/// Comparison node; only legal as the first argument of `piecewise`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cmp {
    pub op: CmpOp,
    pub lhs: Expr,
    pub rhs: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
    Piecewise(Box<Cmp>, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("syntax error at byte {offset}: found {found}, expected {}", expected.join(" | "))]
pub struct ParseError {
    pub offset: usize,
    pub found: String,
    pub expected: Vec<&'static str>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of negative number {0}")]
    SqrtNegative(f64),
    #[error("logarithm of non-positive number {0}")]
    LogNonPositive(f64),
    #[error("power {base}^{exponent} is undefined")]
    PowDomain { base: f64, exponent: f64 },
    #[error("result is not finite")]
    NonFinite,
}

/// The sawtooth behind `paperphi`: slope `-k` pieces with upward jumps (for
/// positive arguments) at the reciprocals `1/n` and the integers.
pub fn sawtooth_step(k: f64, v: f64) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    let m = v.abs();
    let n = if m <= 1.0 {
        // |v| in (1/(n+1), 1/n]  <=>  n = floor(1/|v|)
        (1.0 / m).floor()
    } else {
        // |v| in (n, n+1]
        m.ceil() - 1.0
    };
    k / n - k * v
}

impl Expr {
    pub fn eval(&self, t: f64, x: f64, y: f64) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(c) => *c,
            Expr::Var(Var::T) => t,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::Y) => y,
            Expr::Neg(e) => -e.eval(t, x, y)?,
            Expr::Bin(op, a, b) => {
                let a = a.eval(t, x, y)?;
                let b = b.eval(t, x, y)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        let p = a.powf(b);
                        if !p.is_finite() {
                            return Err(EvalError::PowDomain { base: a, exponent: b });
                        }
                        p
                    }
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(t, x, y)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(EvalError::SqrtNegative(a));
                        }
                        a.sqrt()
                    }
                    Func::Abs => a.abs(),
                    Func::Floor => a.floor(),
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(EvalError::LogNonPositive(a));
                        }
                        a.ln()
                    }
                    Func::Min => a.min(args[1].eval(t, x, y)?),
                    Func::Max => a.max(args[1].eval(t, x, y)?),
                    Func::PaperPhi => sawtooth_step(a, args[1].eval(t, x, y)?),
                }
            }
            Expr::Piecewise(c, then, els) => {
                if c.holds(t, x, y)? {
                    then.eval(t, x, y)?
                } else {
                    els.eval(t, x, y)?
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Which of (t, x, y) occur free in the expression.
    pub fn uses(&self) -> [bool; 3] {
        let mut u = [false; 3];
        self.collect_uses(&mut u);
        u
    }

    fn collect_uses(&self, u: &mut [bool; 3]) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(Var::T) => u[0] = true,
            Expr::Var(Var::X) => u[1] = true,
            Expr::Var(Var::Y) => u[2] = true,
            Expr::Neg(e) => e.collect_uses(u),
            Expr::Bin(_, a, b) => {
                a.collect_uses(u);
                b.collect_uses(u);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_uses(u)),
            Expr::Piecewise(c, a, b) => {
                c.lhs.collect_uses(u);
                c.rhs.collect_uses(u);
                a.collect_uses(u);
                b.collect_uses(u);
            }
        }
    }
}

impl Cmp {
    pub fn holds(&self, t: f64, x: f64, y: f64) -> Result<bool, EvalError> {
        let a = self.lhs.eval(t, x, y)?;
        let b = self.rhs.eval(t, x, y)?;
        Ok(match self.op {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        })
    }
}

// Unparsing prints every compound subexpression parenthesized, so the output
// re-parses to the same tree. Numerals use Rust's shortest round-trip form.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) => {
                if *c < 0.0 || c.is_sign_negative() {
                    write!(f, "(-{:?})", -c)
                } else {
                    write!(f, "{c:?}")
                }
            }
            Expr::Var(v) => f.write_str(v.name()),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {s} {b})")
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Expr::Piecewise(c, a, b) => {
                let s = match c.op {
                    CmpOp::Lt => "<",
                    CmpOp::Le => "<=",
                    CmpOp::Gt => ">",
                    CmpOp::Ge => ">=",
                    CmpOp::Eq => "==",
                    CmpOp::Ne => "!=",
                };
                write!(f, "piecewise({} {} {}, {}, {})", c.lhs, s, c.rhs, a, b)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Cmp(CmpOp),
    End,
}

struct Lexed {
    tok: Tok,
    offset: usize,
}

fn lex(src: &str) -> Result<Vec<Lexed>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let start = i;
        match b {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => out.push(Lexed { tok: Tok::Plus, offset: start }),
            b'-' => out.push(Lexed { tok: Tok::Minus, offset: start }),
            b'*' => out.push(Lexed { tok: Tok::Star, offset: start }),
            b'/' => out.push(Lexed { tok: Tok::Slash, offset: start }),
            b'^' => out.push(Lexed { tok: Tok::Caret, offset: start }),
            b'(' => out.push(Lexed { tok: Tok::LParen, offset: start }),
            b')' => out.push(Lexed { tok: Tok::RParen, offset: start }),
            b',' => out.push(Lexed { tok: Tok::Comma, offset: start }),
            b'<' | b'>' | b'=' | b'!' => {
                let two_eq = i + 1 < bytes.len() && bytes[i + 1] == b'=';
                let op = match (b, two_eq) {
                    (b'<', true) => Some(CmpOp::Le),
                    (b'<', false) => Some(CmpOp::Lt),
                    (b'>', true) => Some(CmpOp::Ge),
                    (b'>', false) => Some(CmpOp::Gt),
                    (b'=', true) => Some(CmpOp::Eq),
                    (b'!', true) => Some(CmpOp::Ne),
                    _ => None,
                };
                match op {
                    Some(op) => {
                        out.push(Lexed { tok: Tok::Cmp(op), offset: start });
                        if two_eq {
                            i += 1;
                        }
                    }
                    None => {
                        return Err(ParseError {
                            offset: start,
                            found: format!("{:?}", b as char),
                            expected: vec!["comparison operator"],
                        })
                    }
                }
            }
            b'0'..=b'9' => {
                let mut j = i;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j < bytes.len() && bytes[j] == b'.' {
                    j += 1;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        j = k;
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                    }
                }
                let text = &src[i..j];
                let value: f64 = text.parse().map_err(|_| ParseError {
                    offset: start,
                    found: text.to_string(),
                    expected: vec!["number"],
                })?;
                if !value.is_finite() {
                    return Err(ParseError {
                        offset: start,
                        found: text.to_string(),
                        expected: vec!["finite number"],
                    });
                }
                out.push(Lexed { tok: Tok::Num(value), offset: start });
                i = j;
                continue;
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let mut j = i;
                while j < bytes.len()
                    && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_')
                {
                    j += 1;
                }
                out.push(Lexed {
                    tok: Tok::Name(src[i..j].to_string()),
                    offset: start,
                });
                i = j;
                continue;
            }
            _ => {
                // Report the whole character for non-ASCII bytes.
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    offset: start,
                    found: format!("{ch:?}"),
                    expected: vec!["number", "name", "operator", "parenthesis"],
                });
            }
        }
        i += 1;
    }
    out.push(Lexed { tok: Tok::End, offset: src.len() });
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

const MAX_DEPTH: usize = 200;

/// Outcome of parsing at the lowest precedence level: either a numeric
/// expression or a bare comparison (which is only legal inside `piecewise`).
enum Parsed {
    Value(Expr),
    Comparison(Cmp, usize),
}

struct Parser {
    toks: Vec<Lexed>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].offset
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, expected: Vec<&'static str>) -> ParseError {
        let found = match self.peek() {
            Tok::Num(v) => format!("number {v:?}"),
            Tok::Name(n) => format!("name {n:?}"),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::Cmp(_) => "comparison operator".into(),
            Tok::End => "end of input".into(),
        };
        ParseError {
            offset: self.offset(),
            found,
            expected,
        }
    }

    fn expression(&mut self, depth: usize) -> Result<Parsed, ParseError> {
        let lhs = self.additive(depth)?;
        if let Tok::Cmp(op) = *self.peek() {
            let at = self.offset();
            self.bump();
            let rhs = self.additive(depth)?;
            return Ok(Parsed::Comparison(Cmp { op, lhs, rhs }, at));
        }
        Ok(Parsed::Value(lhs))
    }

    fn value(&mut self, depth: usize) -> Result<Expr, ParseError> {
        match self.expression(depth)? {
            Parsed::Value(e) => Ok(e),
            Parsed::Comparison(_, at) => Err(ParseError {
                offset: at,
                found: "comparison".into(),
                expected: vec!["numeric expression (comparisons are only allowed as the first argument of piecewise)"],
            }),
        }
    }

    fn additive(&mut self, depth: usize) -> Result<Expr, ParseError> {
        let mut lhs = self.term(depth)?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.term(depth)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self, depth: usize) -> Result<Expr, ParseError> {
        let mut lhs = self.unary(depth)?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.unary(depth)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self, depth: usize) -> Result<Expr, ParseError> {
        if depth >= MAX_DEPTH {
            return Err(ParseError {
                offset: self.offset(),
                found: "expression nested too deeply".into(),
                expected: vec!["shallower expression"],
            });
        }
        if matches!(self.peek(), Tok::Minus) {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary(depth + 1)?)));
        }
        self.power(depth)
    }

    fn power(&mut self, depth: usize) -> Result<Expr, ParseError> {
        let base = self.primary(depth)?;
        if matches!(self.peek(), Tok::Caret) {
            self.bump();
            let exponent = self.unary(depth + 1)?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self, depth: usize) -> Result<Expr, ParseError> {
        if depth >= MAX_DEPTH {
            return Err(ParseError {
                offset: self.offset(),
                found: "expression nested too deeply".into(),
                expected: vec!["shallower expression"],
            });
        }
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.value(depth + 1)?;
                if !matches!(self.peek(), Tok::RParen) {
                    return Err(self.err(vec!["')'"]));
                }
                self.bump();
                Ok(inner)
            }
            Tok::Name(name) => {
                let at = self.offset();
                self.bump();
                if matches!(self.peek(), Tok::LParen) {
                    self.call(&name, at, depth)
                } else {
                    match name.as_str() {
                        "t" => Ok(Expr::Var(Var::T)),
                        "x" => Ok(Expr::Var(Var::X)),
                        "y" => Ok(Expr::Var(Var::Y)),
                        "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                        "e" => Ok(Expr::Num(std::f64::consts::E)),
                        _ => Err(ParseError {
                            offset: at,
                            found: format!("name {name:?}"),
                            expected: vec!["t", "x", "y", "pi", "e", "function name"],
                        }),
                    }
                }
            }
            _ => Err(self.err(vec!["number", "name", "'('", "'-'"])),
        }
    }

    fn call(&mut self, name: &str, at: usize, depth: usize) -> Result<Expr, ParseError> {
        self.bump(); // consume '('
        let mut args = Vec::new();
        let mut cond = None;
        if name == "piecewise" {
            match self.expression(depth + 1)? {
                Parsed::Comparison(c, _) => cond = Some(c),
                Parsed::Value(_) => {
                    return Err(ParseError {
                        offset: at,
                        found: "numeric expression".into(),
                        expected: vec!["comparison as the first argument of piecewise"],
                    })
                }
            }
        } else {
            args.push(self.value(depth + 1)?);
        }
        while matches!(self.peek(), Tok::Comma) {
            self.bump();
            args.push(self.value(depth + 1)?);
        }
        if !matches!(self.peek(), Tok::RParen) {
            return Err(self.err(vec!["','", "')'"]));
        }
        self.bump();

        if name == "piecewise" {
            if args.len() != 2 {
                return Err(ParseError {
                    offset: at,
                    found: format!("piecewise with {} argument(s) after the condition", args.len()),
                    expected: vec!["piecewise(cond, then, else)"],
                });
            }
            let els = args.pop().unwrap();
            let then = args.pop().unwrap();
            return Ok(Expr::Piecewise(
                Box::new(cond.unwrap()),
                Box::new(then),
                Box::new(els),
            ));
        }

        let func = match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "floor" => Func::Floor,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "min" => Func::Min,
            "max" => Func::Max,
            "paperphi" => Func::PaperPhi,
            _ => {
                return Err(ParseError {
                    offset: at,
                    found: format!("unknown function {name:?}"),
                    expected: vec![
                        "sin", "cos", "sqrt", "abs", "floor", "exp", "log", "min", "max",
                        "piecewise", "paperphi",
                    ],
                })
            }
        };
        if args.len() != func.arity() {
            return Err(ParseError {
                offset: at,
                found: format!("{} argument(s) to {}", args.len(), func.name()),
                expected: match func.arity() {
                    1 => vec!["1 argument"],
                    _ => vec!["2 arguments"],
                },
            });
        }
        Ok(Expr::Call(func, args))
    }
}

pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.value(0)?;
    if !matches!(p.peek(), Tok::End) {
        return Err(p.err(vec!["end of input", "operator"]));
    }
    Ok(e)
}
