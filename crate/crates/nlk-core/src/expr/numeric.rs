//! IEEE-754 double evaluation of normalized expressions.
//!
//! Atoms are bound through their canonical rendering, so `u`, `diff(u,x,1)`,
//! `g1(t)` and `g1_t(t)` are all independent coordinates, which is exactly
//! the jet-space reading the verification layer needs. `pi` is bound
//! automatically unless overridden.

use super::{render, Atom, ElemFn, Expr};
use num_traits::ToPrimitive;
use std::collections::BTreeMap;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("unbound atom `{0}`")]
    Unbound(String),
    #[error("domain error: {0}")]
    Domain(String),
}

pub fn eval_numeric(e: &Expr, point: &BTreeMap<String, f64>) -> Result<f64, EvalError> {
    let v = eval(e, point)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::Domain("non-finite result".into()))
    }
}

fn eval(e: &Expr, point: &BTreeMap<String, f64>) -> Result<f64, EvalError> {
    match e {
        Expr::Rat(r) => r
            .to_f64()
            .ok_or_else(|| EvalError::Domain("rational out of f64 range".into())),
        Expr::Atom(a) => eval_atom(a, point),
        Expr::Pow(_, _) => eval_monomial(std::slice::from_ref(e), point),
        Expr::Mul(c, fs) => {
            let head = c
                .to_f64()
                .ok_or_else(|| EvalError::Domain("rational out of f64 range".into()))?;
            Ok(head * eval_monomial(fs, point)?)
        }
        Expr::Add(ts) => {
            let mut acc = 0.0;
            for t in ts {
                acc += eval(t, point)?;
            }
            Ok(acc)
        }
    }
}

/// Evaluates a product of factors. Factors with identical non-integer
/// exponents are multiplied at the base level first, so real combinations
/// like (-1)^(1/2) * t^(1/2) with t < 0 evaluate cleanly.
fn eval_monomial(fs: &[Expr], point: &BTreeMap<String, f64>) -> Result<f64, EvalError> {
    let mut acc = 1.0;
    let mut grouped: BTreeMap<&Expr, f64> = BTreeMap::new();
    for f in fs {
        let (b, e) = match f {
            Expr::Pow(b, e) => (&**b, Some(&**e)),
            other => (other, None),
        };
        let bv = eval(b, point)?;
        match e {
            None => acc *= bv,
            Some(exp) => {
                if let Some(k) = exp.as_int() {
                    let k = k
                        .to_i32()
                        .ok_or_else(|| EvalError::Domain("huge exponent".into()))?;
                    if bv == 0.0 && k < 0 {
                        return Err(EvalError::Domain("zero to a negative power".into()));
                    }
                    acc *= bv.powi(k);
                } else {
                    *grouped.entry(exp).or_insert(1.0) *= bv;
                }
            }
        }
    }
    for (exp, base) in grouped {
        let ev = eval(exp, point)?;
        if base < 0.0 {
            return Err(EvalError::Domain(format!(
                "negative base {} to non-integer power",
                base
            )));
        }
        if base == 0.0 && ev <= 0.0 {
            return Err(EvalError::Domain("zero to a non-positive power".into()));
        }
        acc *= base.powf(ev);
    }
    Ok(acc)
}

fn eval_atom(a: &Atom, point: &BTreeMap<String, f64>) -> Result<f64, EvalError> {
    match a {
        Atom::Fun(f, arg) => {
            let x = eval(arg, point)?;
            Ok(match f {
                ElemFn::Exp => x.exp(),
                ElemFn::Ln => {
                    if x <= 0.0 {
                        return Err(EvalError::Domain(format!("ln of {}", x)));
                    }
                    x.ln()
                }
                ElemFn::Tanh => x.tanh(),
                ElemFn::Sech => 1.0 / x.cosh(),
                ElemFn::Erf => libm::erf(x),
                ElemFn::Sin => x.sin(),
                ElemFn::Cos => x.cos(),
            })
        }
        other => {
            let key = render(&Expr::Atom(other.clone()));
            if let Some(v) = point.get(&key) {
                return Ok(*v);
            }
            if let Atom::Param(p) = other {
                if p == "pi" {
                    return Ok(std::f64::consts::PI);
                }
            }
            Err(EvalError::Unbound(key))
        }
    }
}
