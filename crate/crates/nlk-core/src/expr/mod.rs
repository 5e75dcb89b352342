//! Exact-arithmetic symbolic expression kernel.
//!
//! Expressions are kept in an expanded canonical normal form: a sum of
//! terms, each term a rational coefficient times a sorted product of
//! base^exponent factors. Two expressions that are equal as
//! rational-coefficient combinations of distinct atoms normalize to
//! structurally identical trees, so equality and zero-testing are plain
//! structural checks.
//!
//! All construction goes through the smart constructors ([`Expr::add`],
//! [`Expr::mul`], [`Expr::pow`], ...) which maintain the invariants.

mod numeric;
mod parse;
mod render;
mod zero;

pub use numeric::{eval_numeric, EvalError};
pub use parse::{parse, parse_with, ParseCtx, ParseError};
pub use render::render;
pub use zero::{is_zero, IsZeroOptions, SamplePlan, ZeroMode, ZeroVerdict};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;

pub type Rat = BigRational;

/// Elementary functions with built-in derivative rules.
///
/// `sqrt`, `cosh` and `sinh` are accepted by the parser but normalize to
/// powers of these primitives, so they never appear as atoms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ElemFn {
    Exp,
    Ln,
    Tanh,
    Sech,
    Erf,
    Sin,
    Cos,
}

impl ElemFn {
    pub fn name(self) -> &'static str {
        match self {
            ElemFn::Exp => "exp",
            ElemFn::Ln => "ln",
            ElemFn::Tanh => "tanh",
            ElemFn::Sech => "sech",
            ElemFn::Erf => "erf",
            ElemFn::Sin => "sin",
            ElemFn::Cos => "cos",
        }
    }

    pub fn from_name(s: &str) -> Option<ElemFn> {
        Some(match s {
            "exp" => ElemFn::Exp,
            "ln" => ElemFn::Ln,
            "tanh" => ElemFn::Tanh,
            "sech" => ElemFn::Sech,
            "erf" => ElemFn::Erf,
            "sin" => ElemFn::Sin,
            "cos" => ElemFn::Cos,
            _ => return None,
        })
    }
}

/// An indivisible symbol the polynomial layer is built over.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    /// Independent variable.
    Var(String),
    /// Named parameter (alpha, gamma, n, c1, ..., free constants, `pi`).
    Param(String),
    /// Jet coordinate: a dependent variable with a derivative multi-index.
    /// `idx` is sorted by variable name; counts are >= 1; empty = the
    /// dependent itself. Mixed partials commute by construction.
    Jet { dep: String, idx: Vec<(String, u32)> },
    /// Elementary function application.
    Fun(ElemFn, Box<Expr>),
    /// Opaque function application, e.g. `g1(t)`. `derivs[i]` counts formal
    /// partial derivatives with respect to argument slot `i`.
    Opaque {
        name: String,
        derivs: Vec<u32>,
        args: Vec<Expr>,
    },
    /// Formal antiderivative of `body` with respect to `var`.
    Int { body: Box<Expr>, var: String },
}

impl Atom {
    pub fn jet(dep: &str, idx: &[(&str, u32)]) -> Atom {
        let mut v: Vec<(String, u32)> = idx
            .iter()
            .filter(|(_, k)| *k > 0)
            .map(|(n, k)| (n.to_string(), *k))
            .collect();
        v.sort();
        Atom::Jet {
            dep: dep.to_string(),
            idx: v,
        }
    }

    /// Total derivative order of a jet atom; 0 for anything else.
    pub fn jet_order(&self) -> u32 {
        match self {
            Atom::Jet { idx, .. } => idx.iter().map(|(_, k)| k).sum(),
            _ => 0,
        }
    }
}

/// Normalized expression. See module docs for the invariants; use the
/// constructors rather than building variants by hand.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    /// Rational constant in lowest terms.
    Rat(Rat),
    /// Bare atom (an implicit factor with exponent 1, coefficient 1).
    Atom(Atom),
    /// base^exponent with exponent != 0, 1. Integer exponents never sit on
    /// rational, product or power bases (those fold/distribute/merge).
    Pow(Box<Expr>, Box<Expr>),
    /// coeff * factors; coeff != 0, factors sorted with pairwise-distinct
    /// bases, each an `Atom` or `Pow`; (coeff, factors) != (1, [f]).
    Mul(Rat, Vec<Expr>),
    /// >= 2 terms, sorted by monomial, no like monomials, no zero terms.
    Add(Vec<Expr>),
}

pub fn rat_i64(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Cap on expanding (sum)^k multinomially.
const MAX_EXPAND: u32 = 64;
/// Cap on exact integer exponentiation of rationals.
const MAX_RAT_POW: u32 = 4096;
/// Trial-division bound for canonicalizing fractional powers of rationals.
const FACTOR_BOUND: u64 = 100_000;

impl Expr {
    pub fn zero() -> Expr {
        Expr::Rat(Rat::zero())
    }

    pub fn one() -> Expr {
        Expr::Rat(Rat::one())
    }

    pub fn int(n: i64) -> Expr {
        Expr::Rat(rat_i64(n))
    }

    pub fn ratio(n: i64, d: i64) -> Expr {
        Expr::Rat(ratio(n, d))
    }

    pub fn rat(r: Rat) -> Expr {
        Expr::Rat(r)
    }

    pub fn var(name: &str) -> Expr {
        Expr::Atom(Atom::Var(name.to_string()))
    }

    pub fn param(name: &str) -> Expr {
        Expr::Atom(Atom::Param(name.to_string()))
    }

    pub fn jet(dep: &str, idx: &[(&str, u32)]) -> Expr {
        Expr::Atom(Atom::jet(dep, idx))
    }

    pub fn opaque(name: &str, derivs: Vec<u32>, args: Vec<Expr>) -> Expr {
        debug_assert_eq!(derivs.len(), args.len());
        Expr::Atom(Atom::Opaque {
            name: name.to_string(),
            derivs,
            args,
        })
    }

    pub fn is_zero_const(&self) -> bool {
        matches!(self, Expr::Rat(r) if r.is_zero())
    }

    pub fn is_one_const(&self) -> bool {
        matches!(self, Expr::Rat(r) if r.is_one())
    }

    pub fn as_rat(&self) -> Option<&Rat> {
        match self {
            Expr::Rat(r) => Some(r),
            _ => None,
        }
    }

    /// The exponent as a plain integer, if it is one.
    pub fn as_int(&self) -> Option<BigInt> {
        match self {
            Expr::Rat(r) if r.is_integer() => Some(r.to_integer()),
            _ => None,
        }
    }

    /// Splits a term into (coefficient, monomial factors).
    fn split_term(self) -> (Rat, Vec<Expr>) {
        match self {
            Expr::Rat(r) => (r, vec![]),
            Expr::Mul(c, fs) => (c, fs),
            other => (Rat::one(), vec![other]),
        }
    }

    /// Views a factor as (base, exponent).
    fn factor_parts(self) -> (Expr, Expr) {
        match self {
            Expr::Pow(b, e) => (*b, *e),
            other => (other, Expr::one()),
        }
    }

    fn assemble_term(coeff: Rat, mut factors: Vec<Expr>) -> Expr {
        if coeff.is_zero() {
            return Expr::zero();
        }
        factors.sort();
        if factors.is_empty() {
            Expr::Rat(coeff)
        } else if coeff.is_one() && factors.len() == 1 {
            factors.pop().unwrap()
        } else {
            Expr::Mul(coeff, factors)
        }
    }

    /// Sum of `items`, fully flattened and with like terms collected.
    pub fn add(items: Vec<Expr>) -> Expr {
        let mut map: BTreeMap<Vec<Expr>, Rat> = BTreeMap::new();
        let mut stack = items;
        while let Some(it) = stack.pop() {
            match it {
                Expr::Add(ts) => stack.extend(ts),
                other => {
                    let (c, mono) = other.split_term();
                    if c.is_zero() {
                        continue;
                    }
                    let slot = map.entry(mono).or_insert_with(Rat::zero);
                    *slot += c;
                }
            }
        }
        let mut terms: Vec<Expr> = map
            .into_iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|(mono, c)| Expr::assemble_term(c, mono))
            .collect();
        match terms.len() {
            0 => Expr::zero(),
            1 => terms.pop().unwrap(),
            _ => Expr::Add(terms),
        }
    }

    pub fn add2(a: Expr, b: Expr) -> Expr {
        Expr::add(vec![a, b])
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::add(vec![a, Expr::neg(b)])
    }

    pub fn neg(a: Expr) -> Expr {
        Expr::mul(vec![Expr::int(-1), a])
    }

    /// Product of `items`: flattens, folds rationals, merges equal bases by
    /// adding exponents, and distributes over sums.
    pub fn mul(items: Vec<Expr>) -> Expr {
        let mut coeff = Rat::one();
        let mut sums: Vec<Vec<Expr>> = vec![];
        let mut merged: BTreeMap<Expr, Expr> = BTreeMap::new(); // base -> exponent
        let mut work = items;
        while let Some(it) = work.pop() {
            match it {
                Expr::Rat(r) => {
                    if r.is_zero() {
                        return Expr::zero();
                    }
                    coeff *= r;
                }
                Expr::Mul(c, fs) => {
                    if c.is_zero() {
                        return Expr::zero();
                    }
                    coeff *= c;
                    work.extend(fs);
                }
                Expr::Add(ts) => sums.push(ts),
                f => {
                    let (b, e) = f.factor_parts();
                    if let Some(old) = merged.remove(&b) {
                        let total = Expr::add2(old, e);
                        // Re-simplify; the result may collapse to anything.
                        work.push(Expr::pow(b, total));
                    } else {
                        merged.insert(b, e);
                    }
                }
            }
        }
        let factors: Vec<Expr> = merged
            .into_iter()
            .map(|(b, e)| {
                if e.is_one_const() {
                    b
                } else {
                    Expr::Pow(Box::new(b), Box::new(e))
                }
            })
            .collect();
        let prim = Expr::assemble_term(coeff, factors);
        if sums.is_empty() {
            return prim;
        }
        // Distribute over the collected sums term by term.
        let mut terms = vec![prim];
        for s in sums {
            let mut next = Vec::with_capacity(terms.len() * s.len());
            for t in &terms {
                for st in &s {
                    next.push(Expr::mul(vec![t.clone(), st.clone()]));
                }
            }
            terms = next;
        }
        Expr::add(terms)
    }

    pub fn mul2(a: Expr, b: Expr) -> Expr {
        Expr::mul(vec![a, b])
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::mul(vec![a, Expr::pow(b, Expr::int(-1))])
    }

    /// base^exp in canonical form.
    pub fn pow(base: Expr, exp: Expr) -> Expr {
        if exp.is_zero_const() {
            // 0^0 = 1 by the usual formal convention.
            return Expr::one();
        }
        if exp.is_one_const() {
            return base;
        }
        match base {
            Expr::Rat(r) => Expr::pow_rat_base(r, exp),
            Expr::Add(ts) => {
                let (content, prim) = extract_content(ts);
                let cpow = Expr::pow_rat_base(content, exp.clone());
                if let Some(k) = exp.as_int() {
                    if k.is_positive() {
                        if let Some(ku) = k.to_u32() {
                            if ku <= MAX_EXPAND {
                                let mut acc = Expr::one();
                                for _ in 0..ku {
                                    acc = Expr::mul2(acc, prim.clone());
                                }
                                return Expr::mul2(cpow, acc);
                            }
                        }
                    }
                }
                Expr::mul2(cpow, Expr::Pow(Box::new(prim), Box::new(exp)))
            }
            Expr::Mul(c, fs) => {
                if exp.as_int().is_some() {
                    // (c * f1 * f2)^k distributes exactly for integer k.
                    let mut parts = vec![Expr::pow_rat_base(c, exp.clone())];
                    for f in fs {
                        let (b, e) = f.factor_parts();
                        parts.push(Expr::pow(b, Expr::mul2(e, exp.clone())));
                    }
                    Expr::mul(parts)
                } else {
                    // Fractional/symbolic power over a product: split off the
                    // positive rational coefficient, keep the rest whole so
                    // numeric evaluation can pair signed bases.
                    if c.is_positive() && !c.is_one() {
                        let cpow = Expr::pow_rat_base(c, exp.clone());
                        let rest = Expr::assemble_term(Rat::one(), fs);
                        return Expr::mul2(cpow, Expr::pow(rest, exp));
                    }
                    let b = Expr::Mul(c, fs);
                    Expr::Pow(Box::new(b), Box::new(exp))
                }
            }
            Expr::Pow(b2, e2) => {
                if exp.as_int().is_some() {
                    // (b^e2)^k = b^(e2*k) is exact for integer k.
                    Expr::pow(*b2, Expr::mul2(*e2, exp))
                } else {
                    Expr::Pow(Box::new(Expr::Pow(b2, e2)), Box::new(exp))
                }
            }
            atom @ Expr::Atom(_) => Expr::Pow(Box::new(atom), Box::new(exp)),
        }
    }

    /// Canonical form of rational^exp.
    fn pow_rat_base(r: Rat, exp: Expr) -> Expr {
        if r.is_one() {
            return Expr::one();
        }
        match &exp {
            Expr::Rat(e) if e.is_integer() => {
                let k = e.to_integer();
                if r.is_zero() {
                    if k.is_positive() {
                        return Expr::zero();
                    }
                    // 0^negative: keep formally; numeric eval reports a
                    // domain error.
                    return Expr::Pow(Box::new(Expr::Rat(r)), Box::new(exp));
                }
                if let Some(ka) = k.abs().to_u32() {
                    if ka <= MAX_RAT_POW {
                        let mut num = r.numer().pow(ka);
                        let mut den = r.denom().pow(ka);
                        if k.is_negative() {
                            std::mem::swap(&mut num, &mut den);
                        }
                        return Expr::Rat(Rat::new(num, den));
                    }
                }
                Expr::Pow(Box::new(Expr::Rat(r)), Box::new(exp))
            }
            Expr::Rat(e) => {
                if r.is_zero() {
                    if e.is_positive() {
                        return Expr::zero();
                    }
                    return Expr::Pow(Box::new(Expr::Rat(r)), Box::new(exp));
                }
                rational_root(r, e.clone())
            }
            _ => {
                if r.is_zero() {
                    // 0^symbolic: treat the symbolic exponent as positive
                    // (the kernel works on a positive chart).
                    return Expr::zero();
                }
                Expr::Pow(Box::new(Expr::Rat(r)), Box::new(exp))
            }
        }
    }

    /// Rebuilds an expression bottom-up through the constructors. On an
    /// already-normalized tree this is the identity.
    pub fn renormalize(&self) -> Expr {
        match self {
            Expr::Rat(r) => Expr::Rat(r.clone()),
            Expr::Atom(a) => Expr::Atom(renormalize_atom(a)),
            Expr::Pow(b, e) => Expr::pow(b.renormalize(), e.renormalize()),
            Expr::Mul(c, fs) => {
                let mut items = vec![Expr::Rat(c.clone())];
                items.extend(fs.iter().map(|f| f.renormalize()));
                Expr::mul(items)
            }
            Expr::Add(ts) => Expr::add(ts.iter().map(|t| t.renormalize()).collect()),
        }
    }

    /// Elementary function application with exact special values.
    pub fn fun(f: ElemFn, arg: Expr) -> Expr {
        if arg.is_zero_const() {
            match f {
                ElemFn::Exp | ElemFn::Cos | ElemFn::Sech => return Expr::one(),
                ElemFn::Tanh | ElemFn::Erf | ElemFn::Sin => return Expr::zero(),
                ElemFn::Ln => {}
            }
        }
        if f == ElemFn::Ln && arg.is_one_const() {
            return Expr::zero();
        }
        Expr::Atom(Atom::Fun(f, Box::new(arg)))
    }

    /// Formal antiderivative of `body` with respect to `var`.
    ///
    /// Linear in the body; factors whose total derivative in `var` vanishes
    /// are pulled out; explicit powers of `var` and single jet factors with a
    /// `var`-derivative integrate exactly. Anything else stays as an `Int`
    /// atom with `D_var Int(body, var) = body` as its defining rule.
    pub fn integral(body: Expr, var: &str) -> Expr {
        match body {
            Expr::Add(ts) => Expr::add(
                ts.into_iter()
                    .map(|t| Expr::integral(t, var))
                    .collect(),
            ),
            other => {
                let (c, factors) = other.split_term();
                if c.is_zero() {
                    return Expr::zero();
                }
                let mut free: Vec<Expr> = vec![];
                let mut bound: Vec<Expr> = vec![];
                for f in factors {
                    if free_of_total(&f, var) {
                        free.push(f);
                    } else {
                        bound.push(f);
                    }
                }
                let head = Expr::assemble_term(c, free);
                let tail = match bound.len() {
                    0 => Expr::var(var),
                    1 => integrate_single_factor(bound.pop().unwrap(), var),
                    _ => Expr::Atom(Atom::Int {
                        body: Box::new(Expr::assemble_term(Rat::one(), bound)),
                        var: var.to_string(),
                    }),
                };
                Expr::mul2(head, tail)
            }
        }
    }

    /// All atoms occurring in the expression (including inside function
    /// arguments and integral bodies), deduplicated.
    pub fn atoms(&self) -> Vec<Atom> {
        let mut out = std::collections::BTreeSet::new();
        collect_atoms(self, &mut out);
        out.into_iter().collect()
    }

    pub fn contains_atom(&self, a: &Atom) -> bool {
        match self {
            Expr::Rat(_) => false,
            Expr::Atom(at) => {
                if at == a {
                    return true;
                }
                atom_children(at).iter().any(|c| c.contains_atom(a))
            }
            Expr::Pow(b, e) => b.contains_atom(a) || e.contains_atom(a),
            Expr::Mul(_, fs) => fs.iter().any(|f| f.contains_atom(a)),
            Expr::Add(ts) => ts.iter().any(|t| t.contains_atom(a)),
        }
    }

    /// Structural partial derivative with respect to one atom, treating all
    /// other atoms as constants. Errors when the atom occurs inside an `Int`
    /// body (the formal antiderivative has no structural partial there).
    pub fn partial_atom(&self, a: &Atom) -> Result<Expr, Unsupported> {
        Ok(match self {
            Expr::Rat(_) => Expr::zero(),
            Expr::Atom(at) => {
                if at == a {
                    Expr::one()
                } else {
                    match at {
                        Atom::Fun(f, arg) => {
                            let da = arg.partial_atom(a)?;
                            if da.is_zero_const() {
                                Expr::zero()
                            } else {
                                Expr::mul2(fn_derivative(*f, arg), da)
                            }
                        }
                        Atom::Opaque { name, derivs, args } => {
                            let mut parts = vec![];
                            for (i, arg) in args.iter().enumerate() {
                                let da = arg.partial_atom(a)?;
                                if da.is_zero_const() {
                                    continue;
                                }
                                let mut d2 = derivs.clone();
                                d2[i] += 1;
                                parts.push(Expr::mul2(
                                    Expr::Atom(Atom::Opaque {
                                        name: name.clone(),
                                        derivs: d2,
                                        args: args.clone(),
                                    }),
                                    da,
                                ));
                            }
                            Expr::add(parts)
                        }
                        Atom::Int { body, .. } => {
                            if body.contains_atom(a) {
                                return Err(Unsupported(
                                    "partial derivative of an atom under a formal integral"
                                        .into(),
                                ));
                            }
                            Expr::zero()
                        }
                        _ => Expr::zero(),
                    }
                }
            }
            Expr::Pow(b, e) => {
                let db = b.partial_atom(a)?;
                let de = e.partial_atom(a)?;
                let mut parts = vec![];
                if !db.is_zero_const() {
                    let em1 = Expr::add2((**e).clone(), Expr::int(-1));
                    parts.push(Expr::mul(vec![
                        (**e).clone(),
                        Expr::pow((**b).clone(), em1),
                        db,
                    ]));
                }
                if !de.is_zero_const() {
                    parts.push(Expr::mul(vec![
                        self.clone(),
                        Expr::fun(ElemFn::Ln, (**b).clone()),
                        de,
                    ]));
                }
                Expr::add(parts)
            }
            Expr::Mul(c, fs) => {
                let mut parts = vec![];
                for (i, f) in fs.iter().enumerate() {
                    let df = f.partial_atom(a)?;
                    if df.is_zero_const() {
                        continue;
                    }
                    let mut rest: Vec<Expr> = vec![Expr::Rat(c.clone()), df];
                    for (j, g) in fs.iter().enumerate() {
                        if i != j {
                            rest.push(g.clone());
                        }
                    }
                    parts.push(Expr::mul(rest));
                }
                Expr::add(parts)
            }
            Expr::Add(ts) => {
                let mut parts = vec![];
                for t in ts {
                    parts.push(t.partial_atom(a)?);
                }
                Expr::add(parts)
            }
        })
    }

    /// Simultaneous substitution of atoms by expressions, then
    /// renormalization. Unbound atoms pass through; matching is performed on
    /// the atoms as they appear, outermost first.
    pub fn substitute(&self, bindings: &BTreeMap<Atom, Expr>) -> Expr {
        match self {
            Expr::Rat(r) => Expr::Rat(r.clone()),
            Expr::Atom(a) => {
                if let Some(rep) = bindings.get(a) {
                    return rep.clone();
                }
                match a {
                    Atom::Fun(f, arg) => Expr::fun(*f, arg.substitute(bindings)),
                    Atom::Opaque { name, derivs, args } => Expr::Atom(Atom::Opaque {
                        name: name.clone(),
                        derivs: derivs.clone(),
                        args: args.iter().map(|x| x.substitute(bindings)).collect(),
                    }),
                    Atom::Int { body, var } => {
                        Expr::integral(body.substitute(bindings), var)
                    }
                    _ => Expr::Atom(a.clone()),
                }
            }
            Expr::Pow(b, e) => Expr::pow(b.substitute(bindings), e.substitute(bindings)),
            Expr::Mul(c, fs) => {
                let mut items = vec![Expr::Rat(c.clone())];
                items.extend(fs.iter().map(|f| f.substitute(bindings)));
                Expr::mul(items)
            }
            Expr::Add(ts) => Expr::add(ts.iter().map(|t| t.substitute(bindings)).collect()),
        }
    }

    /// Largest total jet order appearing anywhere in the expression.
    pub fn max_jet_order(&self) -> u32 {
        self.atoms().iter().map(|a| a.jet_order()).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("unsupported: {0}")]
pub struct Unsupported(pub String);

/// d f / d arg as an expression in `arg`.
pub(crate) fn fn_derivative(f: ElemFn, arg: &Expr) -> Expr {
    match f {
        ElemFn::Exp => Expr::fun(ElemFn::Exp, arg.clone()),
        ElemFn::Ln => Expr::pow(arg.clone(), Expr::int(-1)),
        ElemFn::Tanh => Expr::pow(Expr::fun(ElemFn::Sech, arg.clone()), Expr::int(2)),
        ElemFn::Sech => Expr::mul(vec![
            Expr::int(-1),
            Expr::fun(ElemFn::Sech, arg.clone()),
            Expr::fun(ElemFn::Tanh, arg.clone()),
        ]),
        // d/dz erf(z) = 2/sqrt(pi) * exp(-z^2)
        ElemFn::Erf => Expr::mul(vec![
            Expr::int(2),
            Expr::pow(Expr::param("pi"), Expr::ratio(-1, 2)),
            Expr::fun(
                ElemFn::Exp,
                Expr::neg(Expr::pow(arg.clone(), Expr::int(2))),
            ),
        ]),
        ElemFn::Sin => Expr::fun(ElemFn::Cos, arg.clone()),
        ElemFn::Cos => Expr::neg(Expr::fun(ElemFn::Sin, arg.clone())),
    }
}

fn renormalize_atom(a: &Atom) -> Atom {
    match a {
        Atom::Fun(f, arg) => Atom::Fun(*f, Box::new(arg.renormalize())),
        Atom::Opaque { name, derivs, args } => Atom::Opaque {
            name: name.clone(),
            derivs: derivs.clone(),
            args: args.iter().map(|x| x.renormalize()).collect(),
        },
        Atom::Int { body, var } => Atom::Int {
            body: Box::new(body.renormalize()),
            var: var.clone(),
        },
        other => other.clone(),
    }
}

fn atom_children(a: &Atom) -> Vec<&Expr> {
    match a {
        Atom::Fun(_, arg) => vec![arg],
        Atom::Opaque { args, .. } => args.iter().collect(),
        Atom::Int { body, .. } => vec![body],
        _ => vec![],
    }
}

fn collect_atoms(e: &Expr, out: &mut std::collections::BTreeSet<Atom>) {
    match e {
        Expr::Rat(_) => {}
        Expr::Atom(a) => {
            out.insert(a.clone());
            for c in atom_children(a) {
                collect_atoms(c, out);
            }
        }
        Expr::Pow(b, x) => {
            collect_atoms(b, out);
            collect_atoms(x, out);
        }
        Expr::Mul(_, fs) => fs.iter().for_each(|f| collect_atoms(f, out)),
        Expr::Add(ts) => ts.iter().for_each(|t| collect_atoms(t, out)),
    }
}

/// True when the total derivative of `e` with respect to `var` is zero by
/// inspection: no explicit `var`, no jet atoms (every dependent depends on
/// every independent variable), and no `var` inside function arguments or
/// integral bodies. Integrals in `var` itself are never free.
pub fn free_of_total(e: &Expr, var: &str) -> bool {
    match e {
        Expr::Rat(_) => true,
        Expr::Atom(a) => match a {
            Atom::Var(v) => v != var,
            Atom::Param(_) => true,
            Atom::Jet { .. } => false,
            Atom::Fun(_, arg) => free_of_total(arg, var),
            Atom::Opaque { args, .. } => args.iter().all(|x| free_of_total(x, var)),
            Atom::Int { body, var: iv } => iv != var && free_of_total(body, var),
        },
        Expr::Pow(b, x) => free_of_total(b, var) && free_of_total(x, var),
        Expr::Mul(_, fs) => fs.iter().all(|f| free_of_total(f, var)),
        Expr::Add(ts) => ts.iter().all(|t| free_of_total(t, var)),
    }
}

/// Exact antiderivative of a single bound factor, else an `Int` atom.
fn integrate_single_factor(f: Expr, var: &str) -> Expr {
    let (base, exp) = f.clone().factor_parts();
    // Power rule for explicit powers of the integration variable.
    if base == Expr::var(var) {
        if let Expr::Rat(k) = &exp {
            if *k == -Rat::one() {
                return Expr::fun(ElemFn::Ln, Expr::var(var));
            }
            let k1 = k + Rat::one();
            return Expr::mul2(
                Expr::Rat(k1.recip()),
                Expr::pow(Expr::var(var), Expr::Rat(k1)),
            );
        }
    }
    // A single first-power jet atom with a derivative in `var` drops it.
    if let Expr::Atom(Atom::Jet { dep, idx }) = &f {
        if let Some(pos) = idx.iter().position(|(v, _)| v == var) {
            let mut idx2 = idx.clone();
            if idx2[pos].1 == 1 {
                idx2.remove(pos);
            } else {
                idx2[pos].1 -= 1;
            }
            return Expr::Atom(Atom::Jet {
                dep: dep.clone(),
                idx: idx2,
            });
        }
    }
    Expr::Atom(Atom::Int {
        body: Box::new(f),
        var: var.to_string(),
    })
}

/// Pulls the rational content out of a sum's terms so that sum bases of
/// powers are canonical: content = gcd of |coefficients| with the sign of
/// the leading (first sorted) term; the primitive part starts positive.
fn extract_content(terms: Vec<Expr>) -> (Rat, Expr) {
    let split: Vec<(Rat, Vec<Expr>)> = terms.into_iter().map(|t| t.split_term()).collect();
    let mut content = Rat::zero();
    for (c, _) in &split {
        content = rat_gcd(&content, c);
    }
    if content.is_zero() {
        return (Rat::one(), Expr::zero());
    }
    if split[0].0.is_negative() {
        content = -content;
    }
    let prim = Expr::add(
        split
            .into_iter()
            .map(|(c, mono)| Expr::assemble_term(c / content.clone(), mono))
            .collect(),
    );
    (content, prim)
}

fn rat_gcd(a: &Rat, b: &Rat) -> Rat {
    use num_integer::Integer;
    if a.is_zero() {
        return b.abs();
    }
    if b.is_zero() {
        return a.abs();
    }
    let num = a.numer().gcd(b.numer());
    let den = a.denom().lcm(b.denom());
    Rat::new(num, den)
}

/// Canonicalizes r^(p/q) for non-integer rational exponent: extracts perfect
/// q-th powers through partial factorization, keeps the sign as a canonical
/// (-1)^e factor with e reduced mod 2.
fn rational_root(r: Rat, e: Rat) -> Expr {
    let mut coeff = Rat::one();
    let mut factors: Vec<Expr> = vec![];
    let negative = r.is_negative();
    let q = e.denom().to_u64().unwrap_or(u64::MAX);
    if negative {
        let q_odd = q % 2 == 1;
        if q_odd {
            // (-x)^(p/q) = (-1)^p x^(p/q) for odd q.
            if e.numer().abs().to_u64().map_or(true, |p| p % 2 == 1) {
                coeff = -coeff;
            }
        } else {
            // Keep a canonical (-1)^e' factor, e' in [0, 2).
            let two = Rat::from_integer(BigInt::from(2));
            let mut em = e.clone() % two.clone();
            if em.is_negative() {
                em += two;
            }
            if !em.is_zero() {
                if em.is_integer() {
                    coeff = -coeff;
                } else {
                    factors.push(Expr::Pow(
                        Box::new(Expr::int(-1)),
                        Box::new(Expr::Rat(em)),
                    ));
                }
            }
        }
    }
    let rabs = r.abs();
    // numerator primes with +multiplicity, denominator primes with -multiplicity
    for (prime, mult) in factor_with_bail(rabs.numer())
        .into_iter()
        .map(|(p, m)| (p, m as i64))
        .chain(
            factor_with_bail(rabs.denom())
                .into_iter()
                .map(|(p, m)| (p, -(m as i64))),
        )
    {
        let total = Rat::from_integer(BigInt::from(mult)) * e.clone();
        let int_part = total.floor();
        let frac = total - int_part.clone();
        let ip = int_part.to_integer();
        if !ip.is_zero() {
            let p_rat = Rat::from_integer(prime.clone());
            if let Some(k) = ip.abs().to_u32() {
                let powed = Rat::from_integer(p_rat.numer().pow(k));
                if ip.is_negative() {
                    coeff /= powed;
                } else {
                    coeff *= powed;
                }
            }
        }
        if !frac.is_zero() {
            factors.push(Expr::Pow(
                Box::new(Expr::Rat(Rat::from_integer(prime))),
                Box::new(Expr::Rat(frac)),
            ));
        }
    }
    Expr::assemble_term(coeff, factors)
}

/// Partial prime factorization with trial division; any cofactor beyond the
/// bound is kept whole as a pseudo-prime.
fn factor_with_bail(n: &BigInt) -> Vec<(BigInt, u64)> {
    let mut out = vec![];
    let mut m = n.clone();
    if m.is_one() || m.is_zero() {
        return out;
    }
    let mut p = BigInt::from(2u32);
    while &p * &p <= m {
        if p.to_u64().map_or(true, |v| v > FACTOR_BOUND) {
            break;
        }
        let mut mult = 0u64;
        while (&m % &p).is_zero() {
            m /= &p;
            mult += 1;
        }
        if mult > 0 {
            out.push((p.clone(), mult));
        }
        p += 1u32;
    }
    if !m.is_one() {
        out.push((m, 1));
    }
    out
}
