//! Small arithmetic grammar for complex-valued fields in `x` and `y`.
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | name | name '(' expr ')' | '(' expr ')' | '|z|'
//! ```
//!
//! Names: `x`, `y`, `z`, `zbar`, `r2` (`|z|²`), `i`, `pi`. Functions:
//! `exp`, `sin`, `cos`, `tan`, `sinh`, `cosh`, `sqrt`, `abs`, `re`, `im`,
//! `conj`, `bump` (`(1 − t)⁴` for `t < 1`, else 0).

use crate::error::{Error, Result};
use num_complex::Complex;

type Cx = Complex<f64>;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(Op, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Var {
    X,
    Y,
    Z,
    Zbar,
    R2,
    Modulus,
    I,
    Pi,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Sqrt,
    Abs,
    Re,
    Im,
    Conj,
    Bump,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Sym(char),
    Bar,
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        if ch.is_whitespace() {
            i += 1;
        } else if ch.is_ascii_digit() || ch == '.' {
            let start = i;
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
            let text: String = chars[start..i].iter().collect();
            let v = text.parse::<f64>().map_err(|_| Error::Config(format!("bad number {text:?}")))?;
            out.push(Tok::Num(v));
        } else if ch.is_ascii_alphabetic() || ch == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Name(chars[start..i].iter().collect()));
        } else if ch == '|' {
            out.push(Tok::Bar);
            i += 1;
        } else if "+-*/^()".contains(ch) {
            out.push(Tok::Sym(ch));
            i += 1;
        } else {
            return Err(Error::Config(format!("unexpected character {ch:?} in expression")));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, t: Tok) -> Result<()> {
        match self.next() {
            Some(ref got) if *got == t => Ok(()),
            got => Err(Error::Config(format!("expected {t:?}, found {got:?}"))),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Tok::Sym(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(if c == '+' { Op::Add } else { Op::Sub }, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Sym(c @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(if c == '*' { Op::Mul } else { Op::Div }, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if let Some(Tok::Sym('-')) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Tok::Sym('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Bin(Op::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::Sym('(')) => {
                let e = self.expr()?;
                self.expect(Tok::Sym(')'))?;
                Ok(e)
            }
            Some(Tok::Bar) => {
                match self.next() {
                    Some(Tok::Name(n)) if n == "z" => {}
                    other => return Err(Error::Config(format!("only |z| is supported between bars, found {other:?}"))),
                }
                self.expect(Tok::Bar)?;
                Ok(Expr::Var(Var::Modulus))
            }
            Some(Tok::Name(name)) => {
                if let Some(Tok::Sym('(')) = self.peek() {
                    let f = func(&name)?;
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect(Tok::Sym(')'))?;
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                Ok(Expr::Var(var(&name)?))
            }
            other => Err(Error::Config(format!("unexpected token {other:?}"))),
        }
    }
}

fn var(name: &str) -> Result<Var> {
    Ok(match name {
        "x" => Var::X,
        "y" => Var::Y,
        "z" => Var::Z,
        "zbar" => Var::Zbar,
        "r2" => Var::R2,
        "i" => Var::I,
        "pi" => Var::Pi,
        _ => return Err(Error::Config(format!("unknown variable {name:?}"))),
    })
}

fn func(name: &str) -> Result<Func> {
    Ok(match name {
        "exp" => Func::Exp,
        "sin" => Func::Sin,
        "cos" => Func::Cos,
        "tan" => Func::Tan,
        "sinh" => Func::Sinh,
        "cosh" => Func::Cosh,
        "sqrt" => Func::Sqrt,
        "abs" => Func::Abs,
        "re" => Func::Re,
        "im" => Func::Im,
        "conj" => Func::Conj,
        "bump" => Func::Bump,
        _ => return Err(Error::Config(format!("unknown function {name:?}"))),
    })
}

/// Parse a full expression.
pub fn parse(src: &str) -> Result<Expr> {
    let mut p = Parser { toks: lex(src)?, pos: 0 };
    if p.toks.is_empty() {
        return Err(Error::Config("empty expression".into()));
    }
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(Error::Config(format!("trailing input after position {}", p.pos)));
    }
    Ok(e)
}

impl Expr {
    pub fn eval(&self, z: Cx) -> Cx {
        match self {
            Expr::Num(v) => Cx::new(*v, 0.0),
            Expr::Var(v) => match v {
                Var::X => Cx::new(z.re, 0.0),
                Var::Y => Cx::new(z.im, 0.0),
                Var::Z => z,
                Var::Zbar => z.conj(),
                Var::R2 => Cx::new(z.norm_sqr(), 0.0),
                Var::Modulus => Cx::new(z.norm(), 0.0),
                Var::I => Cx::new(0.0, 1.0),
                Var::Pi => Cx::new(std::f64::consts::PI, 0.0),
            },
            Expr::Neg(e) => -e.eval(z),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(z), b.eval(z));
                match op {
                    Op::Add => a + b,
                    Op::Sub => a - b,
                    Op::Mul => a * b,
                    Op::Div => a / b,
                    Op::Pow => {
                        if b.im == 0.0 && b.re.fract() == 0.0 && b.re.abs() < 64.0 {
                            a.powi(b.re as i32)
                        } else if a.im == 0.0 && a.re >= 0.0 && b.im == 0.0 {
                            Cx::new(a.re.powf(b.re), 0.0)
                        } else {
                            a.powc(b)
                        }
                    }
                }
            }
            Expr::Call(f, a) => {
                let a = a.eval(z);
                match f {
                    Func::Exp => a.exp(),
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tan => a.tan(),
                    Func::Sinh => a.sinh(),
                    Func::Cosh => a.cosh(),
                    Func::Sqrt => a.sqrt(),
                    Func::Abs => Cx::new(a.norm(), 0.0),
                    Func::Re => Cx::new(a.re, 0.0),
                    Func::Im => Cx::new(a.im, 0.0),
                    Func::Conj => a.conj(),
                    Func::Bump => {
                        let t = a.re;
                        Cx::new(if t < 1.0 { (1.0 - t).powi(4) } else { 0.0 }, 0.0)
                    }
                }
            }
        }
    }
}
