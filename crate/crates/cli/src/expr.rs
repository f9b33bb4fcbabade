//! Arithmetic expression strings over named coordinates: +, -, *, /, ^,
//! sin, cos, exp, sqrt, parentheses and numeric literals. Parsed once into
//! an AST that evaluates over a coordinate slice and differentiates
//! symbolically, so user-defined systems get closed-form Jacobians.

use std::fmt;

#[derive(Debug, Clone)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    Sqrt(Box<Expr>),
}

#[derive(Debug)]
pub struct ExprError(pub String);

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "expression error: {}", self.0)
    }
}

impl std::error::Error for ExprError {}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ExprError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '-' | '−' => {
                out.push(Token::Minus);
                i += 1;
            }
            '*' | '×' => {
                out.push(Token::Star);
                i += 1;
            }
            '/' | '÷' => {
                out.push(Token::Slash);
                i += 1;
            }
            '^' => {
                out.push(Token::Caret);
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_digit()
                        || chars[i] == '.'
                        || chars[i] == 'e'
                        || chars[i] == 'E'
                        || ((chars[i] == '+' || chars[i] == '-')
                            && i > start
                            && (chars[i - 1] == 'e' || chars[i - 1] == 'E')))
                {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let v = text
                    .parse::<f64>()
                    .map_err(|_| ExprError(format!("bad number literal '{text}'")))?;
                out.push(Token::Number(v));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(ExprError(format!("unexpected character '{other}'"))),
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    vars: &'a [String],
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Token) -> Result<(), ExprError> {
        match self.next() {
            Some(found) if found == t => Ok(()),
            other => Err(ExprError(format!("expected {t:?}, found {other:?}"))),
        }
    }

    // expr := term (('+' | '-') term)*
    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.next();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.next();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // term := factor (('*' | '/') factor)*
    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.next();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(Token::Slash) => {
                    self.next();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // factor := '-' factor | power, so that -x^2 reads as -(x^2).
    fn factor(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(Token::Minus) => {
                self.next();
                Ok(Expr::Neg(Box::new(self.factor()?)))
            }
            Some(Token::Plus) => {
                self.next();
                self.factor()
            }
            _ => self.power(),
        }
    }

    // power := atom ('^' factor)?   (right-associative, signed exponents)
    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if let Some(Token::Caret) = self.peek() {
            self.next();
            let exponent = self.factor()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.next() {
            Some(Token::Number(v)) => Ok(Expr::Const(v)),
            Some(Token::LParen) => {
                let inner = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(inner)
            }
            Some(Token::Ident(name)) => {
                if let Some(Token::LParen) = self.peek() {
                    self.next();
                    let arg = self.expr()?;
                    self.expect(Token::RParen)?;
                    let arg = Box::new(arg);
                    match name.as_str() {
                        "sin" => Ok(Expr::Sin(arg)),
                        "cos" => Ok(Expr::Cos(arg)),
                        "exp" => Ok(Expr::Exp(arg)),
                        "sqrt" => Ok(Expr::Sqrt(arg)),
                        other => Err(ExprError(format!("unknown function '{other}'"))),
                    }
                } else if name == "pi" {
                    Ok(Expr::Const(std::f64::consts::PI))
                } else {
                    match self.vars.iter().position(|v| v == &name) {
                        Some(idx) => Ok(Expr::Var(idx)),
                        None => Err(ExprError(format!(
                            "unknown variable '{name}' (coordinates: {:?})",
                            self.vars
                        ))),
                    }
                }
            }
            other => Err(ExprError(format!("unexpected token {other:?}"))),
        }
    }
}

impl Expr {
    pub fn parse(src: &str, vars: &[String]) -> Result<Expr, ExprError> {
        let tokens = tokenize(src)?;
        if tokens.is_empty() {
            return Err(ExprError("empty expression".into()));
        }
        let mut parser = Parser {
            tokens,
            pos: 0,
            vars,
        };
        let e = parser.expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(ExprError(format!(
                "trailing tokens after position {}",
                parser.pos
            )));
        }
        Ok(e)
    }

    pub fn eval(&self, env: &[f64]) -> f64 {
        match self {
            Expr::Const(v) => *v,
            Expr::Var(i) => env[*i],
            Expr::Add(a, b) => a.eval(env) + b.eval(env),
            Expr::Sub(a, b) => a.eval(env) - b.eval(env),
            Expr::Mul(a, b) => a.eval(env) * b.eval(env),
            Expr::Div(a, b) => a.eval(env) / b.eval(env),
            Expr::Pow(a, b) => a.eval(env).powf(b.eval(env)),
            Expr::Neg(a) => -a.eval(env),
            Expr::Sin(a) => a.eval(env).sin(),
            Expr::Cos(a) => a.eval(env).cos(),
            Expr::Exp(a) => a.eval(env).exp(),
            Expr::Sqrt(a) => a.eval(env).sqrt(),
        }
    }

    fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(v) => Some(*v),
            Expr::Neg(a) => a.as_const().map(|v| -v),
            _ => None,
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self.as_const(), Some(v) if v == 0.0)
    }

    fn add(a: Expr, b: Expr) -> Expr {
        if a.is_zero() {
            return b;
        }
        if b.is_zero() {
            return a;
        }
        Expr::Add(Box::new(a), Box::new(b))
    }

    fn mul(a: Expr, b: Expr) -> Expr {
        if a.is_zero() || b.is_zero() {
            return Expr::Const(0.0);
        }
        if let Some(1.0) = a.as_const() {
            return b;
        }
        if let Some(1.0) = b.as_const() {
            return a;
        }
        Expr::Mul(Box::new(a), Box::new(b))
    }

    /// Symbolic derivative with respect to variable index `var`.
    /// Powers must have constant exponents.
    pub fn diff(&self, var: usize) -> Result<Expr, ExprError> {
        Ok(match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(i) => Expr::Const(if *i == var { 1.0 } else { 0.0 }),
            Expr::Add(a, b) => Expr::add(a.diff(var)?, b.diff(var)?),
            Expr::Sub(a, b) => {
                let db = b.diff(var)?;
                if db.is_zero() {
                    a.diff(var)?
                } else {
                    Expr::Sub(Box::new(a.diff(var)?), Box::new(db))
                }
            }
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.diff(var)?, (**b).clone()),
                Expr::mul((**a).clone(), b.diff(var)?),
            ),
            Expr::Div(a, b) => {
                // (a/b)' = a'/b − a b'/b².
                let da = a.diff(var)?;
                let db = b.diff(var)?;
                let term1 = Expr::Div(Box::new(da), Box::new((**b).clone()));
                if db.is_zero() {
                    term1
                } else {
                    let b2 = Expr::Mul(Box::new((**b).clone()), Box::new((**b).clone()));
                    let term2 = Expr::Div(
                        Box::new(Expr::mul((**a).clone(), db)),
                        Box::new(b2),
                    );
                    Expr::Sub(Box::new(term1), Box::new(term2))
                }
            }
            Expr::Pow(a, b) => {
                let n = b.as_const().ok_or_else(|| {
                    ExprError("only constant exponents can be differentiated".into())
                })?;
                // n a^(n−1) a'.
                let reduced = Expr::Pow(Box::new((**a).clone()), Box::new(Expr::Const(n - 1.0)));
                Expr::mul(Expr::mul(Expr::Const(n), reduced), a.diff(var)?)
            }
            Expr::Neg(a) => {
                let da = a.diff(var)?;
                if da.is_zero() {
                    Expr::Const(0.0)
                } else {
                    Expr::Neg(Box::new(da))
                }
            }
            Expr::Sin(a) => Expr::mul(Expr::Cos(a.clone()), a.diff(var)?),
            Expr::Cos(a) => Expr::mul(
                Expr::Neg(Box::new(Expr::Sin(a.clone()))),
                a.diff(var)?,
            ),
            Expr::Exp(a) => Expr::mul(Expr::Exp(a.clone()), a.diff(var)?),
            Expr::Sqrt(a) => {
                // (√a)' = a' / (2√a).
                let da = a.diff(var)?;
                if da.is_zero() {
                    Expr::Const(0.0)
                } else {
                    Expr::Div(
                        Box::new(da),
                        Box::new(Expr::mul(Expr::Const(2.0), Expr::Sqrt(a.clone()))),
                    )
                }
            }
        })
    }
}
