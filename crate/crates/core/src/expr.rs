//! Boundary-data expressions: `x`, `y`, `nrm` (= |x|), numbers,
//! `+ - * /`, unary minus, `sin cos exp abs`, parentheses.

use std::fmt;

use crate::domain::BoundaryFn;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    X,
    Y,
    Nrm,
    Neg(Box<Node>),
    Call(Func, Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
}

/// Parsed boundary expression.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryExpr {
    source: String,
    root: Node,
}

impl fmt::Display for BoundaryExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' | b'-' | b'*' | b'/' => {
                out.push((Tok::Op(c as char), i));
                i += 1;
            }
            b'(' => {
                out.push((Tok::LParen, i));
                i += 1;
            }
            b')' => {
                out.push((Tok::RParen, i));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let v: f64 = text
                    .parse()
                    .map_err(|_| Error::Syntax { offset: start, message: format!("bad number '{text}'") })?;
                out.push((Tok::Num(v), start));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
            }
            _ => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(Error::Syntax { offset: i, message: format!("unexpected character '{ch}'") });
            }
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Syntax { offset: self.offset(), message: message.into() })
    }

    // expr := term (('+' | '-') term)*
    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    // term := unary (('*' | '/') unary)*
    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if let Tok::Op('-') = self.peek() {
            self.bump();
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Node> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Node::Num(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let func = match name.as_str() {
                    "x" => return Ok(Node::X),
                    "y" => return Ok(Node::Y),
                    "nrm" => return Ok(Node::Nrm),
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "exp" => Func::Exp,
                    "abs" => Func::Abs,
                    _ => return Err(Error::UnknownIdentifier { name, offset: at }),
                };
                if *self.peek() != Tok::LParen {
                    return self.syntax(format!("expected '(' after {name}"));
                }
                self.bump();
                let arg = self.expr()?;
                self.expect_rparen()?;
                Ok(Node::Call(func, Box::new(arg)))
            }
            Tok::End => Err(Error::Syntax { offset: at, message: "unexpected end of input".into() }),
            t => Err(Error::Syntax { offset: at, message: format!("unexpected token {t:?}") }),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        if *self.peek() != Tok::RParen {
            return self.syntax("expected ')'");
        }
        self.bump();
        Ok(())
    }
}

/// Parses `src`; errors carry the byte offset of the offending token.
pub fn parse_boundary_expr(src: &str) -> Result<BoundaryExpr> {
    let mut p = Parser { toks: lex(src)?, pos: 0 };
    let root = p.expr()?;
    if *p.peek() != Tok::End {
        return p.syntax("trailing input");
    }
    Ok(BoundaryExpr { source: src.to_string(), root })
}

fn eval(n: &Node, x: &[f64]) -> Result<f64> {
    Ok(match n {
        Node::Num(v) => *v,
        Node::X => x.first().copied().unwrap_or(0.0),
        Node::Y => x.get(1).copied().unwrap_or(0.0),
        Node::Nrm => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        Node::Neg(a) => -eval(a, x)?,
        Node::Call(f, a) => {
            let v = eval(a, x)?;
            match f {
                Func::Sin => v.sin(),
                Func::Cos => v.cos(),
                Func::Exp => v.exp(),
                Func::Abs => v.abs(),
            }
        }
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, x)?, eval(b, x)?);
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == 0.0 {
                        return Err(Error::Eval(format!("division by zero at {x:?}")));
                    }
                    a / b
                }
            }
        }
    })
}

impl BoundaryExpr {
    pub fn source(&self) -> &str {
        &self.source
    }

    /// Evaluates at `x`; a non-finite result is an error, never a value.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let v = eval(&self.root, x)?;
        if !v.is_finite() {
            return Err(Error::Eval(format!("'{}' is not finite at {x:?}", self.source)));
        }
        Ok(v)
    }
}

impl BoundaryFn for BoundaryExpr {
    fn eval(&self, x: &[f64]) -> Result<f64> {
        BoundaryExpr::eval(self, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: &[f64]) -> f64 {
        parse_boundary_expr(src).unwrap().eval(x).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(ev("-1", &[0.3, 0.4]), -1.0);
        assert_eq!(ev("x + y", &[0.5, 0.25]), 0.75);
        assert!((ev("exp(-nrm)", &[1.0, 0.0]) - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 - 2 - 3", &[0.0]), -4.0);
        assert_eq!(ev("8 / 4 / 2", &[0.0]), 1.0);
        assert_eq!(ev("1 + 2 * 3", &[0.0]), 7.0);
        assert_eq!(ev("-2 * 3", &[0.0]), -6.0);
        assert_eq!(ev("--x", &[1.5]), 1.5);
        assert_eq!(ev("(1 + 2) * 3", &[0.0]), 9.0);
        assert_eq!(ev("2 * -x", &[1.5]), -3.0);
        assert_eq!(ev("1.5e1 + 2E-1", &[0.0]), 15.2);
        assert_eq!(ev("abs(x - 3)", &[1.0]), 2.0);
        assert!((ev("sin(x)*sin(x) + cos(x)*cos(x)", &[0.7]) - 1.0).abs() < 1e-15);
        assert_eq!(ev("nrm", &[3.0, 4.0]), 5.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_boundary_expr("x + z"), Err(Error::UnknownIdentifier { offset: 4, .. })));
        assert!(matches!(parse_boundary_expr("x +"), Err(Error::Syntax { offset: 3, .. })));
        assert!(matches!(parse_boundary_expr("(x"), Err(Error::Syntax { offset: 2, .. })));
        assert!(matches!(parse_boundary_expr("x $ y"), Err(Error::Syntax { offset: 2, .. })));
        assert!(matches!(parse_boundary_expr("x y"), Err(Error::Syntax { offset: 2, .. })));
        assert!(matches!(parse_boundary_expr("sin x"), Err(Error::Syntax { offset: 4, .. })));
        assert!(matches!(parse_boundary_expr(""), Err(Error::Syntax { offset: 0, .. })));
        let e = parse_boundary_expr("1 / (x - 1)").unwrap();
        assert!(matches!(e.eval(&[1.0]), Err(Error::Eval(_))));
        assert!(matches!(parse_boundary_expr("exp(1000)").unwrap().eval(&[0.0]), Err(Error::Eval(_))));
    }
}
