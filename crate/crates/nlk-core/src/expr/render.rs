//! Canonical text renderer. `parse(render(e))` reproduces `e` exactly.

use super::{Atom, Expr};
use num_traits::{One, Signed};

/// Renders in the expression grammar, jets in `diff(...)` form.
pub fn render(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Add(ts) => {
            for (i, t) in ts.iter().enumerate() {
                if i == 0 {
                    write_term(out, t, false);
                } else if term_is_negative(t) {
                    out.push_str(" - ");
                    write_term(out, t, true);
                } else {
                    out.push_str(" + ");
                    write_term(out, t, false);
                }
            }
        }
        other => write_term(out, other, false),
    }
}

/// True when the term's rational coefficient is negative.
fn term_is_negative(t: &Expr) -> bool {
    match t {
        Expr::Rat(r) => r.is_negative(),
        Expr::Mul(c, _) => c.is_negative(),
        _ => false,
    }
}

/// Writes one term; with `strip_sign` the leading minus is omitted
/// (the caller printed " - ").
fn write_term(out: &mut String, t: &Expr, strip_sign: bool) {
    match t {
        Expr::Rat(r) => {
            let r = if strip_sign { r.abs() } else { r.clone() };
            out.push_str(&render_rat(&r));
        }
        Expr::Mul(c, fs) => {
            let c = if strip_sign { c.abs() } else { c.clone() };
            let mut first = true;
            if c == -num_rational::BigRational::from_integer(1.into()) {
                out.push('-');
            } else if !c.is_one() {
                out.push_str(&render_rat(&c));
                first = false;
            }
            for f in fs {
                if !first {
                    out.push('*');
                }
                first = false;
                write_factor(out, f);
            }
        }
        other => {
            if strip_sign {
                // only Rat/Mul report negative
                unreachable!("non-coefficient term cannot carry a sign");
            }
            write_factor(out, other);
        }
    }
}

fn render_rat(r: &num_rational::BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn write_factor(out: &mut String, f: &Expr) {
    match f {
        Expr::Pow(b, e) => {
            write_pow_base(out, b);
            out.push('^');
            write_pow_exp(out, e);
        }
        Expr::Atom(a) => write_atom(out, a),
        Expr::Rat(r) => {
            if r.is_negative() || !r.is_integer() {
                out.push('(');
                out.push_str(&render_rat(r));
                out.push(')');
            } else {
                out.push_str(&render_rat(r));
            }
        }
        other => {
            out.push('(');
            write_expr(out, other);
            out.push(')');
        }
    }
}

fn write_pow_base(out: &mut String, b: &Expr) {
    match b {
        Expr::Atom(a) => write_atom(out, a),
        Expr::Rat(r) if !r.is_negative() && r.is_integer() => {
            out.push_str(&render_rat(r));
        }
        other => {
            out.push('(');
            write_expr(out, other);
            out.push(')');
        }
    }
}

fn write_pow_exp(out: &mut String, e: &Expr) {
    match e {
        Expr::Rat(r) if r.is_integer() && !r.is_negative() => {
            out.push_str(&render_rat(r));
        }
        Expr::Atom(a @ (Atom::Var(_) | Atom::Param(_))) => write_atom(out, a),
        other => {
            out.push('(');
            write_expr(out, other);
            out.push(')');
        }
    }
}

fn write_atom(out: &mut String, a: &Atom) {
    match a {
        Atom::Var(v) => out.push_str(v),
        Atom::Param(p) => out.push_str(p),
        Atom::Jet { dep, idx } => {
            if idx.is_empty() {
                out.push_str(dep);
            } else {
                out.push_str("diff(");
                out.push_str(dep);
                for (v, k) in idx {
                    out.push(',');
                    out.push_str(v);
                    out.push(',');
                    out.push_str(&k.to_string());
                }
                out.push(')');
            }
        }
        Atom::Fun(f, arg) => {
            out.push_str(f.name());
            out.push('(');
            write_expr(out, arg);
            out.push(')');
        }
        Atom::Opaque { name, derivs, args } => {
            out.push_str(name);
            if derivs.iter().any(|&k| k > 0) {
                out.push('_');
                for (i, &k) in derivs.iter().enumerate() {
                    let unit = match &args[i] {
                        Expr::Atom(Atom::Var(v)) => v.clone(),
                        Expr::Atom(Atom::Param(p)) => p.clone(),
                        _ => format!("a{}", i + 1),
                    };
                    for _ in 0..k {
                        out.push_str(&unit);
                    }
                }
            }
            out.push('(');
            for (i, arg) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, arg);
            }
            out.push(')');
        }
        Atom::Int { body, var } => {
            out.push_str("int(");
            write_expr(out, body);
            out.push_str(", ");
            out.push_str(var);
            out.push(')');
        }
    }
}
