//! The small expression language used for time-varying rates and rewards.
//!
//! Expressions are written over the variables `t` (time) and `x` (state
//! index as a real), the constant `pi`, the binary operators `+ - * / ^`,
//! unary minus, and the functions `sin`, `cos`, `exp`, `log`, `sqrt`,
//! `abs`, `floor`, `min(a,b)`, `max(a,b)`.
//!
//! Precedence, loosest to tightest: `+ -`, then `* /`, then unary minus,
//! then `^`. `+ - * /` associate left, `^` associates right, so
//! `-2^2 = -(2^2) = -4` and `2^3^2 = 2^(3^2) = 512`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Abstract syntax tree of a parsed expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// The time variable `t`.
    Time,
    /// The state variable `x`.
    State,
    /// The constant `pi`.
    Pi,
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
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
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
    Floor,
    Min,
    Max,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Floor => "floor",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "floor" => Func::Floor,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }
}

/// Parse an expression string into an [`Expr`].
pub fn parse(text: &str) -> Result<Expr> {
    let mut p = Parser::new(text)?;
    let e = p.parse_expr()?;
    match p.peek() {
        Token::End => Ok(e),
        _ => Err(p.error("unexpected trailing input")),
    }
}

impl FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Expr> {
        parse(s)
    }
}

impl Expr {
    /// Evaluate at time `t` and state value `x`.
    ///
    /// Division by zero, `log` of a non-positive value, `sqrt` of a
    /// negative value, and any non-finite intermediate result are errors
    /// rather than IEEE infinities.
    pub fn eval(&self, t: f64, x: f64) -> Result<f64> {
        let v = self.eval_inner(t, x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.eval_error(t, x, "non-finite result"))
        }
    }

    fn eval_inner(&self, t: f64, x: f64) -> Result<f64> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Time => t,
            Expr::State => x,
            Expr::Pi => std::f64::consts::PI,
            Expr::Neg(e) => -e.eval_inner(t, x)?,
            Expr::Binary(op, a, b) => {
                let va = a.eval_inner(t, x)?;
                let vb = b.eval_inner(t, x)?;
                match op {
                    BinOp::Add => va + vb,
                    BinOp::Sub => va - vb,
                    BinOp::Mul => va * vb,
                    BinOp::Div => {
                        if vb == 0.0 {
                            return Err(self.eval_error(t, x, "division by zero"));
                        }
                        va / vb
                    }
                    BinOp::Pow => {
                        let v = va.powf(vb);
                        if v.is_nan() {
                            return Err(self.eval_error(t, x, "power outside real domain"));
                        }
                        v
                    }
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval_inner(t, x)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(self.eval_error(t, x, "log of non-positive value"));
                        }
                        a.ln()
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(self.eval_error(t, x, "sqrt of negative value"));
                        }
                        a.sqrt()
                    }
                    Func::Abs => a.abs(),
                    Func::Floor => a.floor(),
                    Func::Min => a.min(args[1].eval_inner(t, x)?),
                    Func::Max => a.max(args[1].eval_inner(t, x)?),
                }
            }
        })
    }

    fn eval_error(&self, t: f64, x: f64, message: &str) -> Error {
        Error::Eval {
            expr: self.to_string(),
            t,
            x,
            message: message.to_string(),
        }
    }

    /// Replace every occurrence of the state variable `x` with a literal.
    ///
    /// Model loading uses this to specialize shared per-state expressions,
    /// so downstream moment formulas see functions of `t` alone.
    pub fn bind_state(&self, x: f64) -> Expr {
        match self {
            Expr::State => Expr::Num(x),
            Expr::Num(_) | Expr::Time | Expr::Pi => self.clone(),
            Expr::Neg(e) => Expr::Neg(Box::new(e.bind_state(x))),
            Expr::Binary(op, a, b) => {
                Expr::Binary(*op, Box::new(a.bind_state(x)), Box::new(b.bind_state(x)))
            }
            Expr::Call(f, args) => {
                Expr::Call(*f, args.iter().map(|a| a.bind_state(x)).collect())
            }
        }
    }

    /// Replace `t` with `factor * t`, turning `f(t)` into `f(factor t)`.
    ///
    /// Together with an outer multiplication this implements the time
    /// rescaling that normalizes a period-`p` model to period 1.
    pub fn scale_time(&self, factor: f64) -> Expr {
        match self {
            Expr::Time => Expr::Binary(
                BinOp::Mul,
                Box::new(Expr::Num(factor)),
                Box::new(Expr::Time),
            ),
            Expr::Num(_) | Expr::State | Expr::Pi => self.clone(),
            Expr::Neg(e) => Expr::Neg(Box::new(e.scale_time(factor))),
            Expr::Binary(op, a, b) => Expr::Binary(
                *op,
                Box::new(a.scale_time(factor)),
                Box::new(b.scale_time(factor)),
            ),
            Expr::Call(f, args) => {
                Expr::Call(*f, args.iter().map(|a| a.scale_time(factor)).collect())
            }
        }
    }

    /// True if the state variable occurs anywhere in the tree.
    pub fn references_state(&self) -> bool {
        match self {
            Expr::State => true,
            Expr::Num(_) | Expr::Time | Expr::Pi => false,
            Expr::Neg(e) => e.references_state(),
            Expr::Binary(_, a, b) => a.references_state() || b.references_state(),
            Expr::Call(_, args) => args.iter().any(Expr::references_state),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            // A negative literal prints with a leading minus, so it binds
            // like a negation.
            Expr::Neg(_) => 3,
            Expr::Num(v) if v.is_sign_negative() => 3,
            Expr::Binary(BinOp::Pow, ..) => 4,
            _ => 5,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn paren(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
            if e.precedence() < min_prec {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Time => write!(f, "t"),
            Expr::State => write!(f, "x"),
            Expr::Pi => write!(f, "pi"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                paren(f, e, 3)
            }
            Expr::Binary(op, a, b) => {
                let (sym, prec) = match op {
                    BinOp::Add => ("+", 1),
                    BinOp::Sub => ("-", 1),
                    BinOp::Mul => ("*", 2),
                    BinOp::Div => ("/", 2),
                    BinOp::Pow => ("^", 4),
                };
                // Left-assoc chains reuse the operator precedence on the
                // left; the right side needs one level more. `^` is the
                // mirror image.
                if *op == BinOp::Pow {
                    paren(f, a, prec + 1)?;
                    write!(f, "{sym}")?;
                    paren(f, b, prec)
                } else {
                    paren(f, a, prec)?;
                    write!(f, "{sym}")?;
                    paren(f, b, prec + 1)
                }
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// A time-varying scalar function given by an expression, optionally with
/// declared non-smooth points.
///
/// Non-smooth points are never detected automatically: models must list
/// them here or in the model-level breakpoint set so that ODE segment
/// boundaries line up with every kink and discontinuity.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFunction {
    pub expr: Expr,
    /// Absolute non-smooth points of `t -> expr(t, x)`.
    pub breakpoints: Vec<f64>,
    /// Period for `breakpoints` when they repeat (points are offsets into
    /// one period); `None` means the listed points are one-off.
    pub period: Option<f64>,
}

impl TimeFunction {
    pub fn new(expr: Expr) -> Self {
        TimeFunction {
            expr,
            breakpoints: Vec::new(),
            period: None,
        }
    }

    pub fn constant(v: f64) -> Self {
        TimeFunction::new(Expr::Num(v))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(TimeFunction::new(parse(text)?))
    }

    pub fn eval(&self, t: f64, x: f64) -> Result<f64> {
        self.expr.eval(t, x)
    }

    pub fn bind_state(&self, x: f64) -> TimeFunction {
        TimeFunction {
            expr: self.expr.bind_state(x),
            breakpoints: self.breakpoints.clone(),
            period: self.period,
        }
    }

    /// `f(t) -> f(factor t)`, rescaling declared breakpoints to match.
    pub fn scale_time(&self, factor: f64) -> TimeFunction {
        TimeFunction {
            expr: self.expr.scale_time(factor),
            breakpoints: self.breakpoints.iter().map(|b| b / factor).collect(),
            period: self.period.map(|p| p / factor),
        }
    }
}

// ---------------------------------------------------------------------------
// Lexer and parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Parser> {
        let mut tokens = Vec::new();
        let bytes = text.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i] as char;
            let start = i;
            match c {
                ' ' | '\t' | '\n' | '\r' => {
                    i += 1;
                }
                '+' => {
                    tokens.push((Token::Plus, start));
                    i += 1;
                }
                '-' => {
                    tokens.push((Token::Minus, start));
                    i += 1;
                }
                '*' => {
                    tokens.push((Token::Star, start));
                    i += 1;
                }
                '/' => {
                    tokens.push((Token::Slash, start));
                    i += 1;
                }
                '^' => {
                    tokens.push((Token::Caret, start));
                    i += 1;
                }
                '(' => {
                    tokens.push((Token::LParen, start));
                    i += 1;
                }
                ')' => {
                    tokens.push((Token::RParen, start));
                    i += 1;
                }
                ',' => {
                    tokens.push((Token::Comma, start));
                    i += 1;
                }
                '0'..='9' | '.' => {
                    let mut j = i;
                    while j < bytes.len() && matches!(bytes[j] as char, '0'..='9' | '.') {
                        j += 1;
                    }
                    // Exponent part, accepting `1e-3` and `2.5E+10`.
                    if j < bytes.len() && matches!(bytes[j] as char, 'e' | 'E') {
                        let mut k = j + 1;
                        if k < bytes.len() && matches!(bytes[k] as char, '+' | '-') {
                            k += 1;
                        }
                        if k < bytes.len() && (bytes[k] as char).is_ascii_digit() {
                            j = k;
                            while j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                                j += 1;
                            }
                        }
                    }
                    let s = &text[i..j];
                    let v: f64 = s.parse().map_err(|_| Error::Parse {
                        offset: start,
                        message: format!("malformed number `{s}`"),
                    })?;
                    tokens.push((Token::Num(v), start));
                    i = j;
                }
                'a'..='z' | 'A'..='Z' | '_' => {
                    let mut j = i;
                    while j < bytes.len()
                        && matches!(bytes[j] as char, 'a'..='z' | 'A'..='Z' | '0'..='9' | '_')
                    {
                        j += 1;
                    }
                    tokens.push((Token::Ident(text[i..j].to_string()), start));
                    i = j;
                }
                _ => {
                    return Err(Error::Parse {
                        offset: start,
                        message: format!("unexpected character `{c}`"),
                    })
                }
            }
        }
        tokens.push((Token::End, text.len()));
        Ok(Parser { tokens, pos: 0 })
    }

    fn peek(&self) -> &Token {
        &self.tokens[self.pos].0
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].0.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn error(&self, message: &str) -> Error {
        Error::Parse {
            offset: self.offset(),
            message: message.to_string(),
        }
    }

    fn expect(&mut self, tok: Token, what: &str) -> Result<()> {
        if *self.peek() == tok {
            self.advance();
            Ok(())
        } else {
            Err(self.error(what))
        }
    }

    fn parse_expr(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_term()?;
        loop {
            let op = match self.peek() {
                Token::Plus => BinOp::Add,
                Token::Minus => BinOp::Sub,
                _ => break,
            };
            self.advance();
            let rhs = self.parse_term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_term(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_factor()?;
        loop {
            let op = match self.peek() {
                Token::Star => BinOp::Mul,
                Token::Slash => BinOp::Div,
                _ => break,
            };
            self.advance();
            let rhs = self.parse_factor()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // Unary minus sits between `* /` and `^`, so `-2^2` is `-(2^2)`.
    fn parse_factor(&mut self) -> Result<Expr> {
        if *self.peek() == Token::Minus {
            self.advance();
            return Ok(Expr::Neg(Box::new(self.parse_factor()?)));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Expr> {
        let base = self.parse_atom()?;
        if *self.peek() == Token::Caret {
            self.advance();
            // Right-associative; the exponent may carry a unary minus.
            let exp = self.parse_factor()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Expr> {
        match self.advance() {
            Token::Num(v) => Ok(Expr::Num(v)),
            Token::LParen => {
                let e = self.parse_expr()?;
                self.expect(Token::RParen, "expected `)`")?;
                Ok(e)
            }
            Token::Ident(name) => match name.as_str() {
                "t" => Ok(Expr::Time),
                "x" => Ok(Expr::State),
                "pi" => Ok(Expr::Pi),
                _ => {
                    if let Some(func) = Func::from_name(&name) {
                        self.expect(Token::LParen, "expected `(` after function name")?;
                        let mut args = vec![self.parse_expr()?];
                        while *self.peek() == Token::Comma {
                            self.advance();
                            args.push(self.parse_expr()?);
                        }
                        self.expect(Token::RParen, "expected `)` closing argument list")?;
                        if args.len() != func.arity() {
                            return Err(self.error(&format!(
                                "`{}` takes {} argument(s), got {}",
                                func.name(),
                                func.arity(),
                                args.len()
                            )));
                        }
                        Ok(Expr::Call(func, args))
                    } else {
                        Err(self.error(&format!("unknown identifier `{name}`")))
                    }
                }
            },
            _ => Err(self.error("expected a number, identifier, or `(`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(text: &str, t: f64, x: f64) -> f64 {
        parse(text).unwrap().eval(t, x).unwrap()
    }

    #[test]
    fn sinusoid_rate() {
        assert!((ev("2 + 0.5*sin(2*pi*t)", 0.25, 0.0) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn exponential_rate() {
        assert!((ev("3 - 2*exp(-t/4)", 0.0, 0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sawtooth_at_integer_multiple() {
        assert_eq!(ev("7*t - floor(7*t)", 1.0, 0.0), 0.0);
    }

    #[test]
    fn state_dependent_reward() {
        // sawtooth value 0.5 at t=0.5, scaled by x=4, plus 0.1
        assert!((ev("x*(7*t - floor(7*t)) + 0.1", 0.5, 4.0) - 2.1).abs() < 1e-12);
    }

    #[test]
    fn arrival_rate_with_secular_term() {
        let v = ev(
            "35 + 10*cos(2*pi/3*t) + 10*cos(4*pi/3*(t+3/8)) + min(t,36)",
            0.0,
            0.0,
        );
        // 35 + 10 + 10*cos(pi/2) + 0 = 45
        assert!((v - 45.0).abs() < 1e-12);
    }

    #[test]
    fn min_clamps() {
        assert_eq!(ev("min(t, 36)", 100.0, 0.0), 36.0);
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("2+3*4^2", 0.0, 0.0), 50.0);
        assert_eq!(ev("-2^2", 0.0, 0.0), -4.0);
        assert_eq!(ev("2^-2", 0.0, 0.0), 0.25);
        assert_eq!(ev("2^3^2", 0.0, 0.0), 512.0);
        assert_eq!(ev("10-2-3", 0.0, 0.0), 5.0);
        assert_eq!(ev("16/4/2", 0.0, 0.0), 2.0);
    }

    #[test]
    fn domain_errors() {
        assert!(parse("1/ (t - t)").unwrap().eval(1.0, 0.0).is_err());
        assert!(parse("log(t)").unwrap().eval(0.0, 0.0).is_err());
        assert!(parse("sqrt(-t)").unwrap().eval(2.0, 0.0).is_err());
        assert!(parse("exp(1000)").unwrap().eval(0.0, 0.0).is_err());
    }

    #[test]
    fn parse_errors_carry_offsets() {
        match parse("1 + @") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse("foo(1)").is_err());
        assert!(parse("min(1)").is_err());
        assert!(parse("sin(1,2)").is_err());
        assert!(parse("1 +").is_err());
        assert!(parse("(1").is_err());
    }

    #[test]
    fn display_round_trips() {
        for text in [
            "2 + 0.5*sin(2*pi*t)",
            "-2^2",
            "x*(7*t - floor(7*t)) + 0.1",
            "min(t, 36) - max(-t, 1/(t+1))",
            "2^-(t+1)",
            "1 - (2 - 3)",
            "(1+t)^(2*t)",
        ] {
            let ast = parse(text).unwrap();
            let reparsed = parse(&ast.to_string()).unwrap();
            for i in 0..20 {
                let t = 0.31 * i as f64;
                let x = (i % 5) as f64;
                let a = ast.eval(t, x);
                let b = reparsed.eval(t, x);
                match (a, b) {
                    (Ok(va), Ok(vb)) => assert_eq!(va, vb, "mismatch for {text} at t={t}"),
                    (Err(_), Err(_)) => {}
                    _ => panic!("round-trip changed error behavior for {text}"),
                }
            }
        }
    }

    #[test]
    fn bind_state_substitutes() {
        let e = parse("x*(7*t - floor(7*t)) + 0.1").unwrap();
        assert!(e.references_state());
        let bound = e.bind_state(4.0);
        assert!(!bound.references_state());
        assert!((bound.eval(0.5, f64::NAN).unwrap() - 2.1).abs() < 1e-12);
    }
}
