//! Recursive-descent parser for the expression grammar.
//!
//! Identifiers `[A-Za-z][A-Za-z0-9]*`; integers; `+ - * / ^` with `^`
//! binding tightest and right-associative; unary minus; calls `name(args)`;
//! jet atoms `u`, `u_x`, `u_xxy` or `diff(u,x,2,y,1)`; formal integrals
//! `int(expr, var)`; declared opaque functions `g1(t)` and their formal
//! derivatives `g1_t(t)`.

use super::{Atom, ElemFn, Expr};
use std::collections::BTreeMap;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function name `{name}` at byte {offset}")]
    UnknownFunction { offset: usize, name: String },
    #[error("malformed multi-index `{text}` at byte {offset}")]
    MalformedMultiIndex { offset: usize, text: String },
}

/// Declares how identifiers resolve while parsing.
#[derive(Debug, Clone, Default)]
pub struct ParseCtx {
    pub indep: Vec<String>,
    pub deps: Vec<String>,
    pub params: Vec<String>,
    /// opaque function name -> arity
    pub opaque: BTreeMap<String, usize>,
}

impl ParseCtx {
    /// The (x, y, t) / u space used throughout the bundled corpus.
    pub fn default_space() -> ParseCtx {
        ParseCtx {
            indep: vec!["x".into(), "y".into(), "t".into()],
            deps: vec!["u".into()],
            params: vec![],
            opaque: BTreeMap::new(),
        }
    }

    pub fn with_opaque(mut self, name: &str, arity: usize) -> ParseCtx {
        self.opaque.insert(name.to_string(), arity);
        self
    }
}

/// Parses with the default (x, y, t; u) space.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    parse_with(text, &ParseCtx::default_space())
}

pub fn parse_with(text: &str, ctx: &ParseCtx) -> Result<Expr, ParseError> {
    let mut p = Parser {
        bytes: text.as_bytes(),
        pos: 0,
        ctx,
    };
    p.skip_ws();
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    ctx: &'a ParseCtx,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> ParseError {
        ParseError::Syntax {
            offset: self.pos,
            message: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            self.skip_ws();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(&format!("expected `{}`", c as char)))
        }
    }

    // expr := term (('+'|'-') term)*
    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.term()?];
        loop {
            if self.eat(b'+') {
                terms.push(self.term()?);
            } else if self.eat(b'-') {
                terms.push(Expr::neg(self.term()?));
            } else {
                break;
            }
        }
        Ok(Expr::add(terms))
    }

    // term := unary (('*'|'/') unary)*
    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat(b'*') {
                acc = Expr::mul2(acc, self.unary()?);
            } else if self.eat(b'/') {
                acc = Expr::div(acc, self.unary()?);
            } else {
                break;
            }
        }
        Ok(acc)
    }

    // unary := '-' unary | power
    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            Ok(Expr::neg(self.unary()?))
        } else {
            self.power()
        }
    }

    // power := primary ('^' unary)?   (right-associative via unary)
    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.eat(b'^') {
            let exp = self.unary()?;
            Ok(Expr::pow(base, exp))
        } else {
            Ok(base)
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                self.skip_ws();
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident_expr(),
            _ => Err(self.err("expected expression")),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        let n: num_bigint::BigInt = text.parse().map_err(|_| self.err("bad integer"))?;
        self.skip_ws();
        Ok(Expr::Rat(super::Rat::from_integer(n)))
    }

    /// Reads an identifier token, including a `_suffix` when present.
    fn ident_token(&mut self) -> (usize, String, Option<String>) {
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_alphanumeric())
        {
            self.pos += 1;
        }
        let base = std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .to_string();
        let mut suffix = None;
        if self.peek() == Some(b'_') {
            let save = self.pos;
            self.pos += 1;
            let sstart = self.pos;
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_alphanumeric() {
                self.pos += 1;
            }
            if self.pos > sstart {
                suffix = Some(
                    std::str::from_utf8(&self.bytes[sstart..self.pos])
                        .unwrap()
                        .to_string(),
                );
            } else {
                self.pos = save;
            }
        }
        (start, base, suffix)
    }

    fn ident_expr(&mut self) -> Result<Expr, ParseError> {
        let (start, base, suffix) = self.ident_token();
        self.skip_ws();
        let has_call = self.peek() == Some(b'(');

        if has_call {
            if suffix.is_none() {
                if base == "diff" {
                    return self.diff_call(start);
                }
                if base == "int" {
                    return self.int_call();
                }
                if base == "sqrt" {
                    let args = self.call_args()?;
                    if args.len() != 1 {
                        return Err(self.err("sqrt takes one argument"));
                    }
                    return Ok(Expr::pow(args.into_iter().next().unwrap(), Expr::ratio(1, 2)));
                }
                if base == "cosh" {
                    let args = self.call_args()?;
                    if args.len() != 1 {
                        return Err(self.err("cosh takes one argument"));
                    }
                    return Ok(Expr::pow(
                        Expr::fun(ElemFn::Sech, args.into_iter().next().unwrap()),
                        Expr::int(-1),
                    ));
                }
                if base == "sinh" {
                    let args = self.call_args()?;
                    if args.len() != 1 {
                        return Err(self.err("sinh takes one argument"));
                    }
                    let a = args.into_iter().next().unwrap();
                    return Ok(Expr::mul2(
                        Expr::fun(ElemFn::Tanh, a.clone()),
                        Expr::pow(Expr::fun(ElemFn::Sech, a), Expr::int(-1)),
                    ));
                }
                if let Some(f) = ElemFn::from_name(&base) {
                    let args = self.call_args()?;
                    if args.len() != 1 {
                        return Err(self.err(&format!("{} takes one argument", base)));
                    }
                    return Ok(Expr::fun(f, args.into_iter().next().unwrap()));
                }
            }
            // opaque application, possibly with a derivative suffix
            if let Some(&arity) = self.ctx.opaque.get(&base) {
                let args = self.call_args()?;
                if args.len() != arity {
                    return Err(ParseError::Syntax {
                        offset: start,
                        message: format!(
                            "`{}` expects {} argument(s), got {}",
                            base,
                            arity,
                            args.len()
                        ),
                    });
                }
                let derivs = match suffix {
                    None => vec![0; args.len()],
                    Some(s) => resolve_opaque_suffix(&s, &args).ok_or(
                        ParseError::MalformedMultiIndex {
                            offset: start,
                            text: s.clone(),
                        },
                    )?,
                };
                return Ok(Expr::Atom(Atom::Opaque {
                    name: base,
                    derivs,
                    args,
                }));
            }
            return Err(ParseError::UnknownFunction {
                offset: start,
                name: base,
            });
        }

        // bare identifier / subscripted jet atom
        if let Some(s) = suffix {
            if self.ctx.deps.contains(&base) {
                let idx = split_subscript(&s, &self.ctx.indep).ok_or(
                    ParseError::MalformedMultiIndex {
                        offset: start,
                        text: s.clone(),
                    },
                )?;
                return Ok(Expr::Atom(Atom::Jet { dep: base, idx }));
            }
            return Err(ParseError::MalformedMultiIndex {
                offset: start,
                text: format!("{}_{}", base, s),
            });
        }
        if self.ctx.indep.contains(&base) {
            return Ok(Expr::var(&base));
        }
        if self.ctx.deps.contains(&base) {
            return Ok(Expr::Atom(Atom::Jet {
                dep: base,
                idx: vec![],
            }));
        }
        // anything else is a named parameter / free constant
        Ok(Expr::param(&base))
    }

    fn call_args(&mut self) -> Result<Vec<Expr>, ParseError> {
        self.expect(b'(')?;
        let mut args = vec![];
        if self.eat(b')') {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat(b',') {
                continue;
            }
            self.expect(b')')?;
            return Ok(args);
        }
    }

    /// `diff(u, x, 2, y, 1)` builds a jet atom when the head is a bare
    /// dependent; otherwise applies total derivatives to the head expression.
    fn diff_call(&mut self, start: usize) -> Result<Expr, ParseError> {
        self.expect(b'(')?;
        let head = self.expr()?;
        let mut pairs: Vec<(String, u32)> = vec![];
        while self.eat(b',') {
            let (vstart, vname, vsuf) = self.ident_token();
            self.skip_ws();
            if vsuf.is_some() || !self.ctx.indep.contains(&vname) {
                return Err(ParseError::MalformedMultiIndex {
                    offset: vstart,
                    text: vname,
                });
            }
            let mut count = 1u32;
            let save = self.pos;
            if self.eat(b',') {
                if self.peek().map_or(false, |c| c.is_ascii_digit()) {
                    let n = self.number()?;
                    count = n
                        .as_rat()
                        .and_then(|r| {
                            use num_traits::ToPrimitive;
                            r.to_integer().to_u32()
                        })
                        .ok_or_else(|| self.err("bad derivative count"))?;
                } else {
                    // the comma starts the next (var, count) pair
                    self.pos = save;
                }
            }
            pairs.push((vname, count));
        }
        self.expect(b')')?;
        if pairs.is_empty() {
            return Err(ParseError::Syntax {
                offset: start,
                message: "diff needs at least one variable".into(),
            });
        }
        if let Expr::Atom(Atom::Jet { dep, idx }) = &head {
            let mut m: BTreeMap<String, u32> = idx.iter().cloned().collect();
            for (v, k) in pairs {
                *m.entry(v).or_insert(0) += k;
            }
            let idx: Vec<(String, u32)> = m.into_iter().filter(|(_, k)| *k > 0).collect();
            return Ok(Expr::Atom(Atom::Jet {
                dep: dep.clone(),
                idx,
            }));
        }
        let mut e = head;
        for (v, k) in pairs {
            for _ in 0..k {
                e = crate::jet::total_derivative(&e, &v);
            }
        }
        Ok(e)
    }

    fn int_call(&mut self) -> Result<Expr, ParseError> {
        self.expect(b'(')?;
        let body = self.expr()?;
        self.expect(b',')?;
        let (vstart, vname, vsuf) = self.ident_token();
        self.skip_ws();
        if vsuf.is_some() || !self.ctx.indep.contains(&vname) {
            return Err(ParseError::MalformedMultiIndex {
                offset: vstart,
                text: vname,
            });
        }
        self.expect(b')')?;
        Ok(Expr::integral(body, &vname))
    }
}

/// Splits a jet subscript like `xxy` into sorted (var, count) pairs using
/// longest-match against the declared independent variables.
fn split_subscript(s: &str, indep: &[String]) -> Option<Vec<(String, u32)>> {
    let mut counts: BTreeMap<String, u32> = BTreeMap::new();
    let mut rest = s;
    while !rest.is_empty() {
        let hit = indep
            .iter()
            .filter(|v| rest.starts_with(v.as_str()))
            .max_by_key(|v| v.len())?;
        *counts.entry(hit.clone()).or_insert(0) += 1;
        rest = &rest[hit.len()..];
    }
    Some(counts.into_iter().collect())
}

/// Resolves an opaque-derivative suffix like `tt` or `a2` against the
/// parsed argument list.
fn resolve_opaque_suffix(s: &str, args: &[Expr]) -> Option<Vec<u32>> {
    let mut names: Vec<(String, usize)> = vec![];
    for (i, a) in args.iter().enumerate() {
        match a {
            Expr::Atom(Atom::Var(v)) => names.push((v.clone(), i)),
            Expr::Atom(Atom::Param(p)) => names.push((p.clone(), i)),
            _ => {}
        }
        names.push((format!("a{}", i + 1), i));
    }
    let mut derivs = vec![0u32; args.len()];
    let mut rest = s;
    while !rest.is_empty() {
        let (_, slot) = names
            .iter()
            .filter(|(n, _)| rest.starts_with(n.as_str()))
            .max_by_key(|(n, _)| n.len())
            .map(|(n, i)| (n.clone(), *i))?;
        let hit_len = names
            .iter()
            .filter(|(n, _)| rest.starts_with(n.as_str()))
            .map(|(n, _)| n.len())
            .max()?;
        derivs[slot] += 1;
        rest = &rest[hit_len..];
    }
    Some(derivs)
}
