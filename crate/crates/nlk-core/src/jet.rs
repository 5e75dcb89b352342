//! Jet-space bookkeeping: total derivatives, the Euler operator,
//! divergences, and reduction modulo a PDE system's solved forms.

use crate::expr::{fn_derivative, Atom, Expr, ParseCtx, Unsupported};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Independent and dependent variable declaration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JetSpace {
    pub indep: Vec<String>,
    pub deps: Vec<String>,
}

impl JetSpace {
    pub fn new(indep: &[&str], deps: &[&str]) -> JetSpace {
        JetSpace {
            indep: indep.iter().map(|s| s.to_string()).collect(),
            deps: deps.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// The default (x, y, t; u) space.
    pub fn xyt_u() -> JetSpace {
        JetSpace::new(&["x", "y", "t"], &["u"])
    }

    pub fn parse_ctx(&self) -> ParseCtx {
        ParseCtx {
            indep: self.indep.clone(),
            deps: self.deps.clone(),
            params: vec![],
            opaque: BTreeMap::new(),
        }
    }
}

/// Total derivative D_v: ∂/∂v plus the chain through every jet coordinate.
/// Jet atoms simply have their multi-index bumped; formal integrals follow
/// D_v ∫(b)dv = b and commute with foreign derivatives.
pub fn total_derivative(e: &Expr, v: &str) -> Expr {
    match e {
        Expr::Rat(_) => Expr::zero(),
        Expr::Atom(a) => match a {
            Atom::Var(w) => {
                if w == v {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Atom::Param(_) => Expr::zero(),
            Atom::Jet { dep, idx } => {
                let mut m: BTreeMap<String, u32> = idx.iter().cloned().collect();
                *m.entry(v.to_string()).or_insert(0) += 1;
                Expr::Atom(Atom::Jet {
                    dep: dep.clone(),
                    idx: m.into_iter().collect(),
                })
            }
            Atom::Fun(f, arg) => {
                let da = total_derivative(arg, v);
                if da.is_zero_const() {
                    Expr::zero()
                } else {
                    Expr::mul2(fn_derivative(*f, arg), da)
                }
            }
            Atom::Opaque { name, derivs, args } => {
                let mut parts = vec![];
                for (i, arg) in args.iter().enumerate() {
                    let da = total_derivative(arg, v);
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
            Atom::Int { body, var } => {
                if var == v {
                    (**body).clone()
                } else {
                    Expr::integral(total_derivative(body, v), var)
                }
            }
        },
        Expr::Pow(b, x) => {
            let db = total_derivative(b, v);
            let dx = total_derivative(x, v);
            let mut parts = vec![];
            if !db.is_zero_const() {
                let em1 = Expr::add2((**x).clone(), Expr::int(-1));
                parts.push(Expr::mul(vec![
                    (**x).clone(),
                    Expr::pow((**b).clone(), em1),
                    db,
                ]));
            }
            if !dx.is_zero_const() {
                parts.push(Expr::mul(vec![
                    e.clone(),
                    Expr::fun(crate::expr::ElemFn::Ln, (**b).clone()),
                    dx,
                ]));
            }
            Expr::add(parts)
        }
        Expr::Mul(c, fs) => {
            let mut parts = vec![];
            for (i, f) in fs.iter().enumerate() {
                let df = total_derivative(f, v);
                if df.is_zero_const() {
                    continue;
                }
                let mut items = vec![Expr::Rat(c.clone()), df];
                for (j, g) in fs.iter().enumerate() {
                    if i != j {
                        items.push(g.clone());
                    }
                }
                parts.push(Expr::mul(items));
            }
            Expr::add(parts)
        }
        Expr::Add(ts) => Expr::add(ts.iter().map(|t| total_derivative(t, v)).collect()),
    }
}

/// Applies a multi-index of total derivatives.
pub fn total_derivative_multi(e: &Expr, idx: &[(String, u32)]) -> Expr {
    let mut acc = e.clone();
    for (v, k) in idx {
        for _ in 0..*k {
            acc = total_derivative(&acc, v);
        }
    }
    acc
}

/// Euler operator (variational derivative) with respect to `dep`:
/// Σ_J (-1)^|J| D_J ∂e/∂u_J over the jet multi-indices present.
///
/// Errors when jets of `dep` occur under a formal integral (the nonlocal
/// variational derivative is out of scope) or inside opaque/elementary
/// function arguments.
pub fn euler_operator(e: &Expr, dep: &str) -> Result<Expr, Unsupported> {
    for a in e.atoms() {
        let blocked = match &a {
            Atom::Int { body, .. } => jets_of(body, dep),
            Atom::Fun(_, arg) => jets_of(arg, dep),
            Atom::Opaque { args, .. } => args.iter().any(|x| jets_of(x, dep)),
            _ => false,
        };
        if blocked {
            return Err(Unsupported(format!(
                "Euler operator: jets of `{}` occur inside `{}`",
                dep,
                crate::expr::render(&Expr::Atom(a))
            )));
        }
    }
    let mut parts = vec![];
    for a in e.atoms() {
        if let Atom::Jet { dep: d, idx } = &a {
            if d != dep {
                continue;
            }
            let partial = e.partial_atom(&a)?;
            let order: u32 = idx.iter().map(|(_, k)| k).sum();
            let derived = total_derivative_multi(&partial, idx);
            let sign = if order % 2 == 0 { 1 } else { -1 };
            parts.push(Expr::mul2(Expr::int(sign), derived));
        }
    }
    Ok(Expr::add(parts))
}

fn jets_of(e: &Expr, dep: &str) -> bool {
    e.atoms()
        .iter()
        .any(|a| matches!(a, Atom::Jet { dep: d, .. } if d == dep))
}

/// One equation in solved form: `solved = rhs`, with `solved` a jet atom
/// that does not occur in `rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeEquation {
    pub solved: Atom,
    pub rhs: Expr,
}

impl PdeEquation {
    pub fn new(solved: Atom, rhs: Expr) -> Result<PdeEquation, Unsupported> {
        if !matches!(solved, Atom::Jet { .. }) {
            return Err(Unsupported("solved form must be a jet atom".into()));
        }
        if rhs.contains_atom(&solved) {
            return Err(Unsupported(format!(
                "solved derivative `{}` occurs in its own right side",
                crate::expr::render(&Expr::Atom(solved))
            )));
        }
        Ok(PdeEquation { solved, rhs })
    }

    /// The residual `solved - rhs`; zero exactly on solutions.
    pub fn residual(&self) -> Expr {
        Expr::sub(Expr::Atom(self.solved.clone()), self.rhs.clone())
    }
}

/// A PDE system with designated solved leading derivatives, used for
/// on-shell reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeSystem {
    pub space: JetSpace,
    pub eqs: Vec<PdeEquation>,
}

const REDUCE_ITERATION_BOUND: usize = 2000;

impl PdeSystem {
    pub fn new(space: JetSpace, eqs: Vec<PdeEquation>) -> PdeSystem {
        PdeSystem { space, eqs }
    }

    /// Largest jet order over all equations (solved side included).
    pub fn max_order(&self) -> u32 {
        self.eqs
            .iter()
            .map(|eq| eq.rhs.max_jet_order().max(eq.solved.jet_order()))
            .max()
            .unwrap_or(0)
    }
}

/// Substitutes every occurrence of each solved leading derivative and all of
/// its total-derivative prolongations, highest order first, to a fixpoint.
pub fn reduce_on_solutions(e: &Expr, sys: &PdeSystem) -> Result<Expr, Unsupported> {
    let mut cur = e.clone();
    let mut cache: BTreeMap<Atom, Expr> = BTreeMap::new();
    for _ in 0..REDUCE_ITERATION_BOUND {
        let target = match find_reducible(&cur, sys) {
            None => return Ok(cur),
            Some(t) => t,
        };
        let replacement = match cache.get(&target.atom) {
            Some(r) => r.clone(),
            None => {
                let eq = &sys.eqs[target.eq_index];
                let diff_by = index_difference(&target.atom, &eq.solved);
                let r = total_derivative_multi(&eq.rhs, &diff_by);
                cache.insert(target.atom.clone(), r.clone());
                r
            }
        };
        let mut bind = BTreeMap::new();
        bind.insert(target.atom, replacement);
        cur = cur.substitute(&bind);
    }
    Err(Unsupported(
        "on-shell reduction exceeded the iteration bound".into(),
    ))
}

struct Reducible {
    atom: Atom,
    eq_index: usize,
}

/// The highest-order jet atom in `e` that extends some solved form; ties
/// broken by equation order.
fn find_reducible(e: &Expr, sys: &PdeSystem) -> Option<Reducible> {
    let mut best: Option<(u32, usize, Atom)> = None;
    for a in e.atoms() {
        if let Atom::Jet { .. } = a {
            for (i, eq) in sys.eqs.iter().enumerate() {
                if extends(&a, &eq.solved) {
                    let ord = a.jet_order();
                    let cand = (ord, i, a.clone());
                    best = match best {
                        None => Some(cand),
                        Some(prev) => {
                            if cand.0 > prev.0 || (cand.0 == prev.0 && cand.1 < prev.1) {
                                Some(cand)
                            } else {
                                Some(prev)
                            }
                        }
                    };
                    break; // first matching equation wins for this atom
                }
            }
        }
    }
    best.map(|(_, eq_index, atom)| Reducible { atom, eq_index })
}

/// True when `a` is `base` differentiated further (componentwise >=).
fn extends(a: &Atom, base: &Atom) -> bool {
    match (a, base) {
        (
            Atom::Jet { dep: d1, idx: i1 },
            Atom::Jet { dep: d2, idx: i2 },
        ) => {
            if d1 != d2 {
                return false;
            }
            let m1: BTreeMap<&String, u32> = i1.iter().map(|(v, k)| (v, *k)).collect();
            i2.iter().all(|(v, k)| m1.get(v).copied().unwrap_or(0) >= *k)
        }
        _ => false,
    }
}

fn index_difference(a: &Atom, base: &Atom) -> Vec<(String, u32)> {
    if let (Atom::Jet { idx: i1, .. }, Atom::Jet { idx: i2, .. }) = (a, base) {
        let m2: BTreeMap<&String, u32> = i2.iter().map(|(v, k)| (v, *k)).collect();
        i1.iter()
            .filter_map(|(v, k)| {
                let rest = k - m2.get(v).copied().unwrap_or(0);
                if rest > 0 {
                    Some((v.clone(), rest))
                } else {
                    None
                }
            })
            .collect()
    } else {
        vec![]
    }
}

/// Σ_i D_{x_i} C^i with components paired to `order`.
pub fn divergence(comps: &[Expr], order: &[String]) -> Result<Expr, Unsupported> {
    if comps.len() != order.len() {
        return Err(Unsupported(format!(
            "flux has {} components for {} variables",
            comps.len(),
            order.len()
        )));
    }
    Ok(Expr::add(
        comps
            .iter()
            .zip(order)
            .map(|(c, v)| total_derivative(c, v))
            .collect(),
    ))
}

/// Rearranges `expr = 0` as `atom = rhs` when `expr` is linear in `atom`
/// with an atom-free coefficient.
pub fn solve_for(expr: &Expr, atom: &Atom) -> Option<PdeEquation> {
    let coeff = expr.partial_atom(atom).ok()?;
    if coeff.is_zero_const() || coeff.contains_atom(atom) {
        return None;
    }
    let rest = Expr::sub(
        expr.clone(),
        Expr::mul2(coeff.clone(), Expr::Atom(atom.clone())),
    );
    if rest.contains_atom(atom) {
        return None;
    }
    let rhs = Expr::div(Expr::neg(rest), coeff);
    PdeEquation::new(atom.clone(), rhs).ok()
}
