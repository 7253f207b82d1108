//! A small boolean expression language over state vector entries, standing
//! in for generated checker code so scores stay sandboxed and portable.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr := and ("or" and)*
//! and  := not ("and" not)*
//! not  := "not" not | cmp | "(" expr ")"
//! cmp  := term op number;  op ∈ {<, >, <=, >=}
//! term := s[i] | id(s[i]) | abs(s[i])
//! ```

use std::fmt;

use crate::error::{Error, Result};
use crate::types::State;

use super::{Polarity, ScoreFn};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Id,
    Abs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Gt,
    Le,
    Ge,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PredicateExpr {
    Cmp {
        func: Func,
        index: usize,
        op: CmpOp,
        value: f64,
    },
    And(Box<PredicateExpr>, Box<PredicateExpr>),
    Or(Box<PredicateExpr>, Box<PredicateExpr>),
    Not(Box<PredicateExpr>),
}

impl PredicateExpr {
    pub fn parse(text: &str) -> Result<Self> {
        let tokens = tokenize(text)?;
        let mut parser = Parser { tokens, pos: 0 };
        let expr = parser.expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(Error::ScoreSpec(format!(
                "trailing input after expression: {:?}",
                &parser.tokens[parser.pos..]
            )));
        }
        Ok(expr)
    }

    pub fn eval(&self, state: &[f64]) -> Result<bool> {
        match self {
            PredicateExpr::Cmp {
                func,
                index,
                op,
                value,
            } => {
                let raw = *state.get(*index).ok_or_else(|| {
                    Error::invalid(format!(
                        "predicate reads s[{index}] but the state has {} entries",
                        state.len()
                    ))
                })?;
                let lhs = match func {
                    Func::Id => raw,
                    Func::Abs => raw.abs(),
                };
                Ok(match op {
                    CmpOp::Lt => lhs < *value,
                    CmpOp::Gt => lhs > *value,
                    CmpOp::Le => lhs <= *value,
                    CmpOp::Ge => lhs >= *value,
                })
            }
            PredicateExpr::And(a, b) => Ok(a.eval(state)? && b.eval(state)?),
            PredicateExpr::Or(a, b) => Ok(a.eval(state)? || b.eval(state)?),
            PredicateExpr::Not(a) => Ok(!a.eval(state)?),
        }
    }

    /// Largest state index the expression reads.
    pub fn max_index(&self) -> usize {
        match self {
            PredicateExpr::Cmp { index, .. } => *index,
            PredicateExpr::And(a, b) | PredicateExpr::Or(a, b) => {
                a.max_index().max(b.max_index())
            }
            PredicateExpr::Not(a) => a.max_index(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Op(CmpOp),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Ident(s) => write!(f, "{s}"),
            Token::Number(n) => write!(f, "{n}"),
            Token::LParen => write!(f, "("),
            Token::RParen => write!(f, ")"),
            Token::LBracket => write!(f, "["),
            Token::RBracket => write!(f, "]"),
            Token::Op(CmpOp::Lt) => write!(f, "<"),
            Token::Op(CmpOp::Gt) => write!(f, ">"),
            Token::Op(CmpOp::Le) => write!(f, "<="),
            Token::Op(CmpOp::Ge) => write!(f, ">="),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '(' => {
                tokens.push(Token::LParen);
                i += 1;
            }
            ')' => {
                tokens.push(Token::RParen);
                i += 1;
            }
            '[' => {
                tokens.push(Token::LBracket);
                i += 1;
            }
            ']' => {
                tokens.push(Token::RBracket);
                i += 1;
            }
            '<' | '>' => {
                let eq = chars.get(i + 1) == Some(&'=');
                tokens.push(Token::Op(match (c, eq) {
                    ('<', false) => CmpOp::Lt,
                    ('<', true) => CmpOp::Le,
                    ('>', false) => CmpOp::Gt,
                    (_, true) => CmpOp::Ge,
                    _ => unreachable!(),
                }));
                i += if eq { 2 } else { 1 };
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                tokens.push(Token::Ident(word.to_lowercase()));
            }
            c if c.is_ascii_digit() || c == '-' || c == '.' => {
                let start = i;
                i += 1;
                while i < chars.len()
                    && (chars[i].is_ascii_digit() || chars[i] == '.' || chars[i] == 'e'
                        || (chars[i] == '-' && chars[i - 1] == 'e'))
                {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                let value: f64 = word
                    .parse()
                    .map_err(|_| Error::ScoreSpec(format!("bad number `{word}`")))?;
                tokens.push(Token::Number(value));
            }
            other => {
                return Err(Error::ScoreSpec(format!(
                    "unexpected character `{other}` in predicate"
                )))
            }
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Result<Token> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| Error::ScoreSpec("predicate ends mid-expression".into()))?;
        self.pos += 1;
        Ok(tok)
    }

    fn expect(&mut self, want: &Token) -> Result<()> {
        let got = self.next()?;
        if got != *want {
            return Err(Error::ScoreSpec(format!("expected `{want}`, found `{got}`")));
        }
        Ok(())
    }

    fn keyword(&self, word: &str) -> bool {
        matches!(self.peek(), Some(Token::Ident(w)) if w == word)
    }

    fn expr(&mut self) -> Result<PredicateExpr> {
        let mut lhs = self.conjunction()?;
        while self.keyword("or") {
            self.pos += 1;
            let rhs = self.conjunction()?;
            lhs = PredicateExpr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<PredicateExpr> {
        let mut lhs = self.negation()?;
        while self.keyword("and") {
            self.pos += 1;
            let rhs = self.negation()?;
            lhs = PredicateExpr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn negation(&mut self) -> Result<PredicateExpr> {
        if self.keyword("not") {
            self.pos += 1;
            return Ok(PredicateExpr::Not(Box::new(self.negation()?)));
        }
        if self.peek() == Some(&Token::LParen) {
            self.pos += 1;
            let inner = self.expr()?;
            self.expect(&Token::RParen)?;
            return Ok(inner);
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<PredicateExpr> {
        let (func, index) = match self.next()? {
            Token::Ident(w) if w == "s" => (Func::Id, self.state_index()?),
            Token::Ident(w) if w == "id" || w == "abs" => {
                let func = if w == "abs" { Func::Abs } else { Func::Id };
                self.expect(&Token::LParen)?;
                match self.next()? {
                    Token::Ident(s) if s == "s" => {}
                    got => {
                        return Err(Error::ScoreSpec(format!("expected `s`, found `{got}`")))
                    }
                }
                let index = self.state_index()?;
                self.expect(&Token::RParen)?;
                (func, index)
            }
            got => {
                return Err(Error::ScoreSpec(format!(
                    "expected a state term, found `{got}`"
                )))
            }
        };
        let op = match self.next()? {
            Token::Op(op) => op,
            got => {
                return Err(Error::ScoreSpec(format!(
                    "expected a comparison operator, found `{got}`"
                )))
            }
        };
        let value = match self.next()? {
            Token::Number(v) => v,
            got => return Err(Error::ScoreSpec(format!("expected a number, found `{got}`"))),
        };
        Ok(PredicateExpr::Cmp {
            func,
            index,
            op,
            value,
        })
    }

    fn state_index(&mut self) -> Result<usize> {
        self.expect(&Token::LBracket)?;
        let index = match self.next()? {
            Token::Number(v) if v >= 0.0 && v.fract() == 0.0 => v as usize,
            got => {
                return Err(Error::ScoreSpec(format!(
                    "expected a state index, found `{got}`"
                )))
            }
        };
        self.expect(&Token::RBracket)?;
        Ok(index)
    }
}

/// Score backed by a predicate over the raw state vector. The checker's
/// verdict is mapped through the polarity so 1 always marks desirable.
pub struct PredicateScore {
    expr: PredicateExpr,
    polarity: Polarity,
    alpha: f64,
}

impl PredicateScore {
    pub fn new(expr: PredicateExpr, polarity: Polarity, alpha: f64) -> Self {
        PredicateScore {
            expr,
            polarity,
            alpha,
        }
    }
}

impl ScoreFn for PredicateScore {
    fn score(&mut self, state: &State) -> Result<f64> {
        let flagged = self.expr.eval(state.as_vector()?)?;
        let desirable = match self.polarity {
            Polarity::CheckerFlagsUndesirable => !flagged,
            Polarity::CheckerFlagsDesirable => flagged,
        };
        Ok(if desirable { 1.0 } else { self.alpha })
    }

    fn reset(&mut self) {}

    fn binary_levels(&self) -> Option<[f64; 2]> {
        Some([self.alpha, 1.0])
    }

    fn needs_images(&self) -> bool {
        false
    }
}
