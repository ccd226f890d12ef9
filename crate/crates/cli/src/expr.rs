//! Arithmetic expressions over `x`, `y`, `t` for source terms and initial data.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | 'x' | 'y' | 't' | func '(' sum ')' | '(' sum ')'
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-x^2`
//! is `-(x^2)` and `2^-1` is `0.5`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite value from {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: f64, y: f64, t: f64) -> Result<f64, ExprError> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::Y) => y,
            Expr::Var(Var::T) => t,
            Expr::Neg(e) => -e.eval(x, y, t)?,
            Expr::Call(f, e) => {
                let a = e.eval(x, y, t)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                }
            }
            Expr::Bin(op, l, r) => {
                let a = l.eval(x, y, t)?;
                let b = r.eval(x, y, t)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(ExprError::DivisionByZero);
                        }
                        a / b
                    }
                    BinOp::Pow => a.powf(b),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::NonFinite(self.kind()))
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Expr::Const(_) | Expr::Var(_) => "an input",
            Expr::Neg(_) => "negation",
            Expr::Call(Func::Sin, _) => "sin",
            Expr::Call(Func::Cos, _) => "cos",
            Expr::Call(Func::Exp, _) => "exp",
            Expr::Bin(BinOp::Add, ..) => "addition",
            Expr::Bin(BinOp::Sub, ..) => "subtraction",
            Expr::Bin(BinOp::Mul, ..) => "multiplication",
            Expr::Bin(BinOp::Div, ..) => "division",
            Expr::Bin(BinOp::Pow, ..) => "power",
        }
    }
}

impl fmt::Display for Expr {
    /// Fully parenthesized form; parses back to the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Var(Var::Y) => f.write_str("y"),
            Expr::Var(Var::T) => f.write_str("t"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Call(func, e) => {
                let name = match func {
                    Func::Sin => "sin",
                    Func::Cos => "cos",
                    Func::Exp => "exp",
                };
                write!(f, "{name}({e})")
            }
            Expr::Bin(op, l, r) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({l} {s} {r})")
            }
        }
    }
}

pub fn parse_expr(text: &str) -> Result<Expr, ExprError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let e = p.sum()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.syntax("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn syntax(&self, message: &str) -> ExprError {
        ExprError::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.sum()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(_) => Err(self.syntax("expected a number, variable, function or '('")),
            None => Err(self.syntax("unexpected end of input")),
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.syntax(&format!("expected '{}'", c as char)))
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            let exp_start = self.pos;
            digits(self);
            if self.pos == exp_start {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        text.parse::<f64>().map(Expr::Const).map_err(|_| ExprError::Syntax {
            offset: start,
            message: format!("malformed number `{text}`"),
        })
    }

    fn ident(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii identifier");
        let func = match name {
            "x" => return Ok(Expr::Var(Var::X)),
            "y" => return Ok(Expr::Var(Var::Y)),
            "t" => return Ok(Expr::Var(Var::T)),
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            _ => {
                return Err(ExprError::UnknownIdentifier {
                    offset: start,
                    name: name.to_string(),
                })
            }
        };
        self.expect(b'(')?;
        let arg = self.sum()?;
        self.expect(b')')?;
        Ok(Expr::Call(func, Box::new(arg)))
    }
}

/// Source adapter: evaluation errors become NaN, which the assembly routines
/// reject as an invalid field.
#[derive(Debug, Clone)]
pub struct ExprSource(pub Expr);

impl capsim::fem::Source for ExprSource {
    fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        self.0.eval(x, y, t).unwrap_or(f64::NAN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: f64, y: f64, t: f64) -> f64 {
        parse_expr(s).unwrap().eval(x, y, t).unwrap()
    }

    #[test]
    fn zero_constant() {
        assert_eq!(parse_expr("0").unwrap(), Expr::Const(0.0));
        assert_eq!(ev("0", 0.3, -2.0, 7.0), 0.0);
    }

    #[test]
    fn sine_at_quarter_period() {
        assert!((ev("sin(3.14159265*x)*t", 0.5, 0.0, 2.0) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn syntax_error_offset() {
        match parse_expr("x +* y") {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_identifier() {
        assert_eq!(
            parse_expr("2*z"),
            Err(ExprError::UnknownIdentifier { offset: 2, name: "z".into() })
        );
        assert!(matches!(parse_expr("tan(x)"), Err(ExprError::UnknownIdentifier { offset: 0, .. })));
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("-2^2", 0.0, 0.0, 0.0), -4.0);
        assert_eq!(ev("2^3^2", 0.0, 0.0, 0.0), 512.0);
        assert_eq!(ev("2^-1", 0.0, 0.0, 0.0), 0.5);
        assert_eq!(ev("8/4/2", 0.0, 0.0, 0.0), 1.0);
        assert_eq!(ev("1-2-3", 0.0, 0.0, 0.0), -4.0);
        assert_eq!(ev("1+2*3", 0.0, 0.0, 0.0), 7.0);
        assert_eq!(ev("--x", 3.0, 0.0, 0.0), 3.0);
        assert_eq!(ev(" ( x + y ) * t ", 1.0, 2.0, 3.0), 9.0);
        assert_eq!(ev("1.5e2 + .5", 0.0, 0.0, 0.0), 150.5);
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let e = parse_expr("1/(x-1)").unwrap();
        assert_eq!(e.eval(1.0, 0.0, 0.0), Err(ExprError::DivisionByZero));
        assert_eq!(e.eval(2.0, 0.0, 0.0), Ok(1.0));
        assert!(matches!(parse_expr("exp(x)").unwrap().eval(1e4, 0.0, 0.0), Err(ExprError::NonFinite(_))));
    }

    #[test]
    fn malformed_inputs() {
        for s in ["", "(", "x)", "sin x", "2 3", "1 +", "x^", "sin(x"] {
            assert!(matches!(parse_expr(s), Err(ExprError::Syntax { .. })), "{s}");
        }
    }

    #[test]
    fn display_round_trips() {
        for s in ["-x^2*sin(y)/(1+t)", "2^3^2", "exp(-(x-0.5)^2) - 1e-3*t"] {
            let e = parse_expr(s).unwrap();
            assert_eq!(parse_expr(&e.to_string()).unwrap(), e);
        }
    }
}
