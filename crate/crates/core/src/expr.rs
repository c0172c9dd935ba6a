//! Closed-form problem data: parsing, evaluation, printing.
//!
//! Expressions are written over the variables `t` (time) and `u` (state),
//! decimal literals, `+ - * / ^` with the usual precedence (`^` binds
//! tightest and associates right, then unary minus, then `* /`, then `+ -`),
//! parentheses, and the functions `sin cos exp ln sqrt abs sign`.
//!
//! Evaluation is strict about domains: division by zero, `ln` of a
//! nonpositive value, `sqrt` of a negative value, a negative base under a
//! non-integer exponent, and non-finite intermediates are all reported as
//! errors naming the operation and its inputs, never smuggled through as NaN.
//!
//! Problem data like `abs(u)^(-1/2)*u` is continuous at `u = 0` even though
//! naive evaluation meets `0^(-1/2)`. `eval_zero_u` computes the limit as
//! `u -> 0` by exponent bookkeeping: every subexpression is reduced to either
//! a constant or a leading term `c * |u|^p * sign(u)^k`, products and powers
//! combine exponents, and the limit is read off the combined form.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use core::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    T,
    U,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    Ln(Box<Expr>),
    Sqrt(Box<Expr>),
    Abs(Box<Expr>),
    Sign(Box<Expr>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParseError {
    /// Byte offset into the source string.
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error at byte {}: {}", self.offset, self.message)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalError {
    /// Operation that failed ("div", "ln", "pow", ..).
    pub op: &'static str,
    pub args: [f64; 2],
    pub detail: &'static str,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "domain error in {}({}, {}): {}",
            self.op, self.args[0], self.args[1], self.detail
        )
    }
}

fn err(op: &'static str, a: f64, b: f64, detail: &'static str) -> EvalError {
    EvalError {
        op,
        args: [a, b],
        detail,
    }
}

// ---------------------------------------------------------------- parsing

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn fail<T>(&self, message: String) -> Result<T, ParseError> {
        Err(ParseError {
            offset: self.pos,
            message,
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            // right associative, and the exponent may carry a sign: 2^-3
            let exponent = self.factor()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => self.fail(String::from("unexpected end of expression")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() == Some(b')') {
                    self.pos += 1;
                    Ok(inner)
                } else {
                    self.fail(String::from("expected ')'"))
                }
            }
            Some(c) if c.is_ascii_digit() => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(c) => self.fail(format!("unexpected character '{}'", c as char)),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        if matches!(self.src.get(self.pos), Some(&b'e') | Some(&b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(&b'+') | Some(&b'-')) {
                self.pos += 1;
            }
            if self.src.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                // not an exponent part after all (e.g. "2*exp(t)")
                self.pos = mark;
            }
        }
        let text = core::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match text.parse::<f64>() {
            Ok(v) => Ok(Expr::Num(v)),
            Err(_) => Err(ParseError {
                offset: start,
                message: format!("invalid number literal '{text}'"),
            }),
        }
    }

    fn ident(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        let name = core::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match name {
            "t" => return Ok(Expr::T),
            "u" => return Ok(Expr::U),
            _ => {}
        }
        let make: fn(Box<Expr>) -> Expr = match name {
            "sin" => Expr::Sin,
            "cos" => Expr::Cos,
            "exp" => Expr::Exp,
            "ln" => Expr::Ln,
            "sqrt" => Expr::Sqrt,
            "abs" => Expr::Abs,
            "sign" => Expr::Sign,
            _ => {
                return Err(ParseError {
                    offset: start,
                    message: format!("unknown identifier '{name}'"),
                })
            }
        };
        if self.peek() != Some(b'(') {
            return self.fail(format!("expected '(' after '{name}'"));
        }
        self.pos += 1;
        let arg = self.expr()?;
        if self.peek() != Some(b')') {
            return self.fail(String::from("expected ')'"));
        }
        self.pos += 1;
        Ok(make(Box::new(arg)))
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let mut p = Parser {
            src: src.as_bytes(),
            pos: 0,
        };
        let e = p.expr()?;
        if p.peek().is_some() {
            return p.fail(String::from("trailing input after expression"));
        }
        Ok(e)
    }

    // ------------------------------------------------------------- eval

    pub fn eval(&self, t: f64, u: f64) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(c) => *c,
            Expr::T => t,
            Expr::U => u,
            Expr::Neg(a) => -a.eval(t, u)?,
            Expr::Add(a, b) => a.eval(t, u)? + b.eval(t, u)?,
            Expr::Sub(a, b) => a.eval(t, u)? - b.eval(t, u)?,
            Expr::Mul(a, b) => a.eval(t, u)? * b.eval(t, u)?,
            Expr::Div(a, b) => {
                let x = a.eval(t, u)?;
                let y = b.eval(t, u)?;
                if y == 0.0 {
                    return Err(err("div", x, y, "division by zero"));
                }
                x / y
            }
            Expr::Pow(a, b) => {
                let x = a.eval(t, u)?;
                let y = b.eval(t, u)?;
                pow_checked(x, y)?
            }
            Expr::Sin(a) => libm::sin(a.eval(t, u)?),
            Expr::Cos(a) => libm::cos(a.eval(t, u)?),
            Expr::Exp(a) => libm::exp(a.eval(t, u)?),
            Expr::Ln(a) => {
                let x = a.eval(t, u)?;
                if x <= 0.0 {
                    return Err(err("ln", x, 0.0, "nonpositive input"));
                }
                libm::log(x)
            }
            Expr::Sqrt(a) => {
                let x = a.eval(t, u)?;
                if x < 0.0 {
                    return Err(err("sqrt", x, 0.0, "negative input"));
                }
                libm::sqrt(x)
            }
            Expr::Abs(a) => a.eval(t, u)?.abs(),
            Expr::Sign(a) => {
                let x = a.eval(t, u)?;
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(err(self.op_name(), v, 0.0, "non-finite result"))
        }
    }

    fn op_name(&self) -> &'static str {
        match self {
            Expr::Num(_) => "literal",
            Expr::T => "t",
            Expr::U => "u",
            Expr::Neg(_) => "neg",
            Expr::Add(..) => "add",
            Expr::Sub(..) => "sub",
            Expr::Mul(..) => "mul",
            Expr::Div(..) => "div",
            Expr::Pow(..) => "pow",
            Expr::Sin(_) => "sin",
            Expr::Cos(_) => "cos",
            Expr::Exp(_) => "exp",
            Expr::Ln(_) => "ln",
            Expr::Sqrt(_) => "sqrt",
            Expr::Abs(_) => "abs",
            Expr::Sign(_) => "sign",
        }
    }

    /// Limit of the expression as u -> 0 (two sided), with t fixed.
    ///
    /// Errors if the limit does not exist, is not finite, or cannot be
    /// certified by the exponent bookkeeping, e.g. for a bare `sign(u)`,
    /// `1/u`, or `abs(u)^(-1/2)` that no positive power of u compensates.
    pub fn eval_zero_u(&self, t: f64) -> Result<f64, EvalError> {
        self.zero_form(t)?.limit()
    }

    fn zero_form(&self, t: f64) -> Result<ZeroForm, EvalError> {
        use ZeroForm::*;
        let form = match self {
            Expr::Num(c) => Val {
                v: *c,
                exact: true,
            },
            Expr::T => Val { v: t, exact: true },
            Expr::U => UPow {
                coef: 1.0,
                p: 1.0,
                odd: true,
            },
            Expr::Neg(a) => a.zero_form(t)?.neg(),
            Expr::Add(a, b) => a.zero_form(t)?.add(b.zero_form(t)?)?,
            Expr::Sub(a, b) => a.zero_form(t)?.add(b.zero_form(t)?.neg())?,
            Expr::Mul(a, b) => a.zero_form(t)?.mul(b.zero_form(t)?)?,
            Expr::Div(a, b) => {
                let inv = b.zero_form(t)?.invert()?;
                a.zero_form(t)?.mul(inv)?
            }
            Expr::Pow(a, b) => {
                if b.uses_u() {
                    return Err(err("pow", 0.0, 0.0, "exponent depends on u at u = 0"));
                }
                let w = b.eval(t, 0.0)?;
                a.zero_form(t)?.pow(w)?
            }
            Expr::Sin(a) => match a.zero_form(t)? {
                Val { v, exact } => Val {
                    v: libm::sin(v),
                    exact,
                },
                // sin x = x (1 + o(1)) for vanishing x
                u @ UPow { p, .. } if p > 0.0 => u,
                UPow { coef, odd, .. } if odd => UPow {
                    coef: libm::sin(coef),
                    p: 0.0,
                    odd: true,
                },
                UPow { .. } => Small { p: 0.0 },
                Small { p } => Small { p: p.max(0.0) },
            },
            Expr::Cos(a) => match a.zero_form(t)? {
                Val { v, exact } => Val {
                    v: libm::cos(v),
                    exact,
                },
                UPow { p, .. } if p > 0.0 => Val {
                    v: 1.0,
                    exact: false,
                },
                // cos is even, so a sign(u) factor in the argument drops
                UPow { coef, odd, .. } if odd => Val {
                    v: libm::cos(coef),
                    exact: false,
                },
                UPow { .. } => Small { p: 0.0 },
                Small { p } if p > 0.0 => Val {
                    v: 1.0,
                    exact: false,
                },
                Small { .. } => Small { p: 0.0 },
            },
            Expr::Exp(a) => match a.zero_form(t)? {
                Val { v, exact } => Val {
                    v: libm::exp(v),
                    exact,
                },
                UPow { p, .. } if p > 0.0 => Val {
                    v: 1.0,
                    exact: false,
                },
                UPow { coef, p, odd } => {
                    if odd {
                        return Err(err("exp", coef, p, "two-sided limit does not exist"));
                    }
                    if coef < 0.0 {
                        // exp(-c |u|^-q) -> 0
                        Val {
                            v: 0.0,
                            exact: false,
                        }
                    } else {
                        return Err(err("exp", coef, p, "argument unbounded as u -> 0"));
                    }
                }
                Small { p } if p > 0.0 => Val {
                    v: 1.0,
                    exact: false,
                },
                Small { .. } => Small { p: 0.0 },
            },
            Expr::Ln(a) => match a.zero_form(t)? {
                Val { v, exact } if v > 0.0 => Val {
                    v: libm::log(v),
                    exact,
                },
                Val { v, .. } => return Err(err("ln", v, 0.0, "nonpositive input")),
                UPow { coef, p, .. } => {
                    return Err(err("ln", coef, p, "logarithm unbounded or undefined at u = 0"))
                }
                Small { p } => return Err(err("ln", 0.0, p, "sign of input unknown at u = 0")),
            },
            Expr::Sqrt(a) => match a.zero_form(t)? {
                Val { v, exact } if v >= 0.0 => Val {
                    v: libm::sqrt(v),
                    exact,
                },
                Val { v, .. } => return Err(err("sqrt", v, 0.0, "negative input")),
                UPow { coef, p, odd } => {
                    if odd || coef < 0.0 {
                        return Err(err("sqrt", coef, p, "sign-changing input near u = 0"));
                    }
                    UPow {
                        coef: libm::sqrt(coef),
                        p: 0.5 * p,
                        odd: false,
                    }
                }
                Small { p } => return Err(err("sqrt", 0.0, p, "sign of input unknown at u = 0")),
            },
            Expr::Abs(a) => match a.zero_form(t)? {
                Val { v, exact } => Val { v: v.abs(), exact },
                UPow { coef, p, .. } => UPow {
                    coef: coef.abs(),
                    p,
                    odd: false,
                },
                s @ Small { .. } => s,
            },
            Expr::Sign(a) => match a.zero_form(t)? {
                Val { v, exact } => Val {
                    v: if v > 0.0 {
                        1.0
                    } else if v < 0.0 {
                        -1.0
                    } else {
                        0.0
                    },
                    exact,
                },
                UPow { coef, odd, .. } => {
                    let s = if coef > 0.0 { 1.0 } else { -1.0 };
                    if odd {
                        UPow {
                            coef: s,
                            p: 0.0,
                            odd: true,
                        }
                    } else {
                        Val {
                            v: s,
                            exact: false,
                        }
                    }
                }
                Small { p } => return Err(err("sign", 0.0, p, "sign of input unknown at u = 0")),
            },
        };
        Ok(form.normalize())
    }

    pub fn uses_t(&self) -> bool {
        self.any(&|e| matches!(e, Expr::T))
    }

    pub fn uses_u(&self) -> bool {
        self.any(&|e| matches!(e, Expr::U))
    }

    fn any(&self, pred: &impl Fn(&Expr) -> bool) -> bool {
        if pred(self) {
            return true;
        }
        match self {
            Expr::Num(_) | Expr::T | Expr::U => false,
            Expr::Neg(a)
            | Expr::Sin(a)
            | Expr::Cos(a)
            | Expr::Exp(a)
            | Expr::Ln(a)
            | Expr::Sqrt(a)
            | Expr::Abs(a)
            | Expr::Sign(a) => a.any(pred),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.any(pred) || b.any(pred),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }
}

fn pow_checked(x: f64, y: f64) -> Result<f64, EvalError> {
    let v = if x > 0.0 {
        libm::pow(x, y)
    } else if x == 0.0 {
        if y > 0.0 {
            0.0
        } else if y == 0.0 {
            1.0
        } else {
            return Err(err("pow", x, y, "zero base with negative exponent"));
        }
    } else {
        if y != libm::floor(y) || y.abs() >= 1e15 {
            return Err(err("pow", x, y, "negative base with non-integer exponent"));
        }
        let m = libm::pow(-x, y);
        if (y as i64) % 2 != 0 {
            -m
        } else {
            m
        }
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(err("pow", x, y, "non-finite result"))
    }
}

/// Behaviour of a subexpression as u -> 0 with t fixed.
///
/// * `Val`: the value tends to `v`; with `exact` the subtree is u-free and
///   the value is identically `v`, otherwise corrections of size o(1) may
///   remain (so an inexact 0 cannot be treated as annihilating).
/// * `UPow`: the value is `coef * |u|^p * sign(u)^odd * (1 + o(1))` with
///   `coef != 0`; the relative correction survives products, quotients and
///   powers, which is what keeps the exponent algebra sound.
/// * `Small`: only a magnitude bound is known, value = O(|u|^p) with p >= 0.
///   Produced by cancellations and parity mixing; the limit is 0 when p > 0
///   and reported as indeterminate when p = 0.
#[derive(Clone, Copy, Debug)]
enum ZeroForm {
    Val { v: f64, exact: bool },
    UPow { coef: f64, p: f64, odd: bool },
    Small { p: f64 },
}

impl ZeroForm {
    fn normalize(self) -> ZeroForm {
        match self {
            ZeroForm::UPow { coef, p, odd } if p == 0.0 && !odd => ZeroForm::Val {
                v: coef,
                exact: false,
            },
            other => other,
        }
    }

    fn neg(self) -> ZeroForm {
        match self {
            ZeroForm::Val { v, exact } => ZeroForm::Val { v: -v, exact },
            ZeroForm::UPow { coef, p, odd } => ZeroForm::UPow { coef: -coef, p, odd },
            s @ ZeroForm::Small { .. } => s,
        }
    }

    fn mul(self, rhs: ZeroForm) -> Result<ZeroForm, EvalError> {
        use ZeroForm::*;
        Ok(match (self, rhs) {
            (Val { v: a, exact: ea }, Val { v: b, exact: eb }) => Val {
                v: a * b,
                exact: ea && eb,
            },
            (Val { v, exact }, other) | (other, Val { v, exact }) => {
                if v == 0.0 {
                    if exact {
                        // a literal zero factor kills the product everywhere
                        Val { v: 0.0, exact: true }
                    } else {
                        match other {
                            UPow { coef, p, .. } if p < 0.0 => {
                                return Err(err(
                                    "mul",
                                    coef,
                                    p,
                                    "vanishing factor times unbounded factor at u = 0",
                                ))
                            }
                            UPow { p, .. } | Small { p } => Small { p: p.max(0.0) },
                            Val { .. } => unreachable!(),
                        }
                    }
                } else {
                    match other {
                        UPow { coef, p, odd } => UPow {
                            coef: v * coef,
                            p,
                            odd,
                        },
                        Small { p } => Small { p },
                        Val { .. } => unreachable!(),
                    }
                }
            }
            (
                UPow {
                    coef: c1,
                    p: p1,
                    odd: o1,
                },
                UPow {
                    coef: c2,
                    p: p2,
                    odd: o2,
                },
            ) => UPow {
                coef: c1 * c2,
                p: p1 + p2,
                odd: o1 != o2,
            },
            (UPow { coef, p: p1, .. }, Small { p: p2 })
            | (Small { p: p2 }, UPow { coef, p: p1, .. }) => {
                let p = p1 + p2;
                if p < 0.0 {
                    return Err(err("mul", coef, p, "uncontrolled product at u = 0"));
                }
                Small { p }
            }
            (Small { p: p1 }, Small { p: p2 }) => Small { p: p1 + p2 },
        }
        .normalize())
    }

    fn invert(self) -> Result<ZeroForm, EvalError> {
        use ZeroForm::*;
        match self {
            Val { v, exact } => {
                if v == 0.0 {
                    Err(err("div", v, 0.0, "division by a vanishing quantity"))
                } else {
                    Ok(Val { v: 1.0 / v, exact })
                }
            }
            UPow { coef, p, odd } => Ok(UPow {
                coef: 1.0 / coef,
                p: -p,
                odd,
            }),
            Small { p } => Err(err("div", 0.0, p, "division by a term of unknown sign")),
        }
    }

    fn pow(self, w: f64) -> Result<ZeroForm, EvalError> {
        use ZeroForm::*;
        let int_w = w == libm::floor(w) && w.abs() < 1e15;
        Ok(match self {
            Val { v, exact } => Val {
                v: pow_checked(v, w)?,
                exact,
            },
            UPow { coef, p, odd } => {
                if (odd || coef < 0.0) && !int_w {
                    return Err(err(
                        "pow",
                        coef,
                        w,
                        "sign-changing base under non-integer exponent near u = 0",
                    ));
                }
                let odd_w = int_w && (w as i64) % 2 != 0;
                let flip = coef < 0.0 && odd_w;
                UPow {
                    coef: pow_checked(coef.abs(), w)? * if flip { -1.0 } else { 1.0 },
                    p: p * w,
                    odd: odd && odd_w,
                }
            }
            Small { p } => {
                if w < 0.0 {
                    return Err(err("pow", 0.0, w, "negative power of a vanishing bound"));
                }
                if !int_w {
                    return Err(err("pow", 0.0, w, "sign of base unknown at u = 0"));
                }
                if w == 0.0 {
                    Val { v: 1.0, exact: false }
                } else {
                    Small { p: p * w }
                }
            }
        }
        .normalize())
    }

    /// Sum keeping whatever dominates as u -> 0; exact cancellation of the
    /// leading term degrades to a `Small` remainder instead of a hard zero.
    fn add(self, rhs: ZeroForm) -> Result<ZeroForm, EvalError> {
        use ZeroForm::*;
        Ok(match (self, rhs) {
            (Val { v: a, exact: ea }, Val { v: b, exact: eb }) => Val {
                v: a + b,
                exact: ea && eb,
            },
            (Val { v, exact }, UPow { coef, p, odd })
            | (UPow { coef, p, odd }, Val { v, exact }) => {
                if p > 0.0 {
                    if v == 0.0 && exact {
                        UPow { coef, p, odd }
                    } else {
                        Val { v, exact: false }
                    }
                } else if p == 0.0 {
                    return Err(err("add", v, coef, "sign(u)-like term at u = 0"));
                } else {
                    return Err(err("add", v, p, "unbounded term as u -> 0"));
                }
            }
            (Val { v, exact }, Small { p }) | (Small { p }, Val { v, exact }) => {
                if v == 0.0 && exact {
                    Small { p }
                } else {
                    Val { v, exact: false }
                }
            }
            (
                UPow {
                    coef: c1,
                    p: p1,
                    odd: o1,
                },
                UPow {
                    coef: c2,
                    p: p2,
                    odd: o2,
                },
            ) => {
                if p1 == p2 {
                    if o1 == o2 {
                        let c = c1 + c2;
                        if c == 0.0 {
                            if p1 < 0.0 {
                                // the o(1) remainders of the cancelled pair
                                // are still amplified by |u|^p1
                                return Err(err("add", c1, p1, "uncontrolled cancellation"));
                            }
                            Small { p: p1 }
                        } else {
                            UPow { coef: c, p: p1, odd: o1 }
                        }
                    } else if p1 >= 0.0 {
                        // c1|u|^p + c2|u|^p sign(u): only a bound survives
                        Small { p: p1 }
                    } else {
                        return Err(err("add", c1, c2, "mixed unbounded parity at u = 0"));
                    }
                } else if p1 < p2 {
                    UPow {
                        coef: c1,
                        p: p1,
                        odd: o1,
                    }
                } else {
                    UPow {
                        coef: c2,
                        p: p2,
                        odd: o2,
                    }
                }
            }
            (UPow { coef, p: pu, odd }, Small { p: ps })
            | (Small { p: ps }, UPow { coef, p: pu, odd }) => {
                if pu <= ps {
                    if pu < 0.0 {
                        return Err(err("add", coef, pu, "unbounded term as u -> 0"));
                    }
                    UPow { coef, p: pu, odd }
                } else {
                    Small { p: ps }
                }
            }
            (Small { p: p1 }, Small { p: p2 }) => Small { p: p1.min(p2) },
        }
        .normalize())
    }

    fn limit(self) -> Result<f64, EvalError> {
        match self {
            ZeroForm::Val { v, .. } => {
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(err("limit", v, 0.0, "non-finite limit"))
                }
            }
            ZeroForm::UPow { coef, p, odd } => {
                if p > 0.0 {
                    Ok(0.0)
                } else if p == 0.0 && odd {
                    Err(err("limit", coef, p, "two-sided limit does not exist"))
                } else {
                    Err(err("limit", coef, p, "unbounded as u -> 0"))
                }
            }
            ZeroForm::Small { p } => {
                if p > 0.0 {
                    Ok(0.0)
                } else {
                    Err(err("limit", 0.0, p, "limit indeterminate at u = 0"))
                }
            }
        }
    }
}

// --------------------------------------------------------------- printing

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn paren(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Num(c) => write!(f, "{c}"),
            Expr::T => write!(f, "t"),
            Expr::U => write!(f, "u"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                paren(f, a, 3)
            }
            Expr::Add(a, b) => {
                paren(f, a, 1)?;
                write!(f, " + ")?;
                paren(f, b, 2)
            }
            Expr::Sub(a, b) => {
                paren(f, a, 1)?;
                write!(f, " - ")?;
                paren(f, b, 2)
            }
            Expr::Mul(a, b) => {
                paren(f, a, 2)?;
                write!(f, "*")?;
                paren(f, b, 3)
            }
            Expr::Div(a, b) => {
                paren(f, a, 2)?;
                write!(f, "/")?;
                paren(f, b, 3)
            }
            Expr::Pow(a, b) => {
                paren(f, a, 5)?;
                write!(f, "^")?;
                // exponent may be a signed factor; parenthesize below that
                paren(f, b, 3)
            }
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Ln(a) => write!(f, "ln({a})"),
            Expr::Sqrt(a) => write!(f, "sqrt({a})"),
            Expr::Abs(a) => write!(f, "abs({a})"),
            Expr::Sign(a) => write!(f, "sign({a})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(src: &str) -> Expr {
        Expr::parse(src).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(p("1+2*3").eval(0.0, 0.0).unwrap(), 7.0);
        assert_eq!(p("2^3^2").eval(0.0, 0.0).unwrap(), 512.0); // right assoc
        assert_eq!(p("-2^2").eval(0.0, 0.0).unwrap(), -4.0); // ^ above unary -
        assert_eq!(p("2^-1").eval(0.0, 0.0).unwrap(), 0.5);
        assert_eq!(p("6/2/3").eval(0.0, 0.0).unwrap(), 1.0); // left assoc
        assert_eq!(p("(1+2)*3").eval(0.0, 0.0).unwrap(), 9.0);
    }

    #[test]
    fn parse_errors_carry_offsets() {
        let e = Expr::parse("1 + * 2").unwrap_err();
        assert_eq!(e.offset, 4);
        let e = Expr::parse("sin 3").unwrap_err();
        assert!(e.message.contains("expected '('"));
        let e = Expr::parse("foo(t)").unwrap_err();
        assert_eq!(e.offset, 0);
        assert!(e.message.contains("foo"));
        let e = Expr::parse("(1+2").unwrap_err();
        assert!(e.message.contains(")"));
        let e = Expr::parse("1 2").unwrap_err();
        assert!(e.message.contains("trailing"));
    }

    #[test]
    fn scientific_literals_and_exp_function_coexist() {
        assert_eq!(p("2e3").eval(0.0, 0.0).unwrap(), 2000.0);
        assert_eq!(p("1.5e-2").eval(0.0, 0.0).unwrap(), 0.015);
        let v = p("2*exp(t)").eval(1.0, 0.0).unwrap();
        assert!((v - 2.0 * libm::exp(1.0)).abs() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        assert!(p("1/u").eval(0.0, 0.0).is_err());
        assert!(p("ln(u)").eval(0.0, -1.0).is_err());
        assert!(p("sqrt(u)").eval(0.0, -1.0).is_err());
        assert!(p("u^0.5").eval(0.0, -2.0).is_err());
        assert!(p("u^(-1/2)").eval(0.0, 0.0).is_err());
        let e = p("ln(u)").eval(0.0, -1.0).unwrap_err();
        assert_eq!(e.op, "ln");
        assert_eq!(e.args[0], -1.0);
    }

    #[test]
    fn limit_algebra_at_zero() {
        // combined exponent 1 - 1/2 > 0, limit 0
        assert_eq!(p("abs(u)^(-1/2)*u").eval_zero_u(0.3).unwrap(), 0.0);
        assert_eq!(
            p("abs(u)^(-1/2)*u*(1+0.1*sin(abs(u)))")
                .eval_zero_u(0.5)
                .unwrap(),
            0.0
        );
        assert_eq!(p("abs(u)^(-2/3)*u").eval_zero_u(0.0).unwrap(), 0.0);
        assert_eq!(p("u^3").eval_zero_u(0.0).unwrap(), 0.0);
        assert_eq!(p("t + u").eval_zero_u(2.5).unwrap(), 2.5);
        assert_eq!(p("cos(u)").eval_zero_u(0.0).unwrap(), 1.0);
        // and genuine failures
        assert!(p("sign(u)").eval_zero_u(0.0).is_err());
        assert!(p("abs(u)^(-1/2)").eval_zero_u(0.0).is_err());
        assert!(p("1/u").eval_zero_u(0.0).is_err());
        assert!(p("exp(sign(u))").eval_zero_u(0.0).is_err());
    }

    #[test]
    fn limit_matches_nearby_evaluation() {
        let cases = [
            "abs(u)^(-1/2)*u*(1+0.1*sin(abs(u)))",
            "abs(u)^(1/2)*sign(u) + t",
            "u*abs(u)",
            "sqrt(abs(u))*u - u",
        ];
        for src in cases {
            let e = p(src);
            let lim = e.eval_zero_u(0.7).unwrap();
            let near = e.eval(0.7, 1e-12).unwrap();
            assert!(
                (lim - near).abs() < 1e-5,
                "{src}: limit {lim} vs near {near}"
            );
        }
    }

    #[test]
    fn display_round_trips() {
        let cases = [
            "abs(u)^(-1/2)*u",
            "1 + 2*t - u/3",
            "-(t + u)^2",
            "2^-3",
            "sin(t)*cos(u) + exp(t - u)",
            "(1 + t)*(2 - u)",
            "t - (u - 1)",
            "0.56*abs(u)^(3/2)",
        ];
        for src in cases {
            let once = p(src);
            let printed = format!("{once}");
            let twice = Expr::parse(&printed).unwrap_or_else(|e| {
                panic!("reparse of '{printed}' (from '{src}') failed: {e}")
            });
            assert_eq!(once, twice, "{src} -> {printed}");
        }
    }

    #[test]
    fn variable_usage_flags() {
        assert!(p("sin(t)*u").uses_t());
        assert!(p("sin(t)*u").uses_u());
        assert!(!p("2*t + 1").uses_u());
        assert!(!p("abs(u)").uses_t());
    }
}
