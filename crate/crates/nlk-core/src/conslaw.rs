//! Conservation-law machinery: multiplier verification and search, the
//! three-dimensional homotopy operator, and flux-identity checking.

use crate::expr::{is_zero, Atom, Expr, IsZeroOptions, Rat, Unsupported, ZeroVerdict};
use crate::jet::{divergence, euler_operator, total_derivative_multi, JetSpace};
use crate::linalg::{monomial_coordinates, rational_nullspace};
use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use std::collections::BTreeMap;

/// Ordered conserved-flux vector with its multiplier of record.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxVector {
    /// Component order as independent-variable names, e.g. ["t", "y", "x"].
    pub order: Vec<String>,
    pub comps: Vec<Expr>,
    pub multiplier: Option<Expr>,
}

impl FluxVector {
    pub fn new(order: &[&str], comps: Vec<Expr>, multiplier: Option<Expr>) -> FluxVector {
        FluxVector {
            order: order.iter().map(|s| s.to_string()).collect(),
            comps,
            multiplier,
        }
    }

    pub fn divergence(&self) -> Result<Expr, Unsupported> {
        divergence(&self.comps, &self.order)
    }

    /// Component for a named variable, if present.
    pub fn component(&self, var: &str) -> Option<&Expr> {
        self.order
            .iter()
            .position(|v| v == var)
            .map(|i| &self.comps[i])
    }
}

/// Is Δ a conservation-law multiplier for P? Checks E_u(Δ·P) for every
/// dependent of the space; symbolic zero for all certifies the multiplier.
pub fn verify_multiplier(
    pde: &Expr,
    delta: &Expr,
    js: &JetSpace,
    opts: &IsZeroOptions,
) -> Result<ZeroVerdict, Unsupported> {
    let product = Expr::mul2(delta.clone(), pde.clone());
    let mut worst = ZeroVerdict::SymbolicZero;
    for dep in &js.deps {
        let e = euler_operator(&product, dep)?;
        let v = is_zero(&e, opts);
        worst = worse(worst, v);
    }
    Ok(worst)
}

fn worse(a: ZeroVerdict, b: ZeroVerdict) -> ZeroVerdict {
    fn rank(v: &ZeroVerdict) -> u8 {
        match v {
            ZeroVerdict::SymbolicZero => 0,
            ZeroVerdict::NumericZero { .. } => 1,
            ZeroVerdict::Unknown { .. } => 2,
            ZeroVerdict::NonZero { .. } => 3,
        }
    }
    if rank(&b) > rank(&a) {
        b
    } else {
        a
    }
}

/// Linear multiplier ansatz: candidate basis expressions.
#[derive(Debug, Clone)]
pub struct MultiplierAnsatz {
    pub basis: Vec<Expr>,
}

/// Expands E_u((Σ c_i m_i)·P) = Σ c_i E_u(m_i·P), collects coefficients of
/// every monomial, and solves the homogeneous system exactly. Returns a
/// basis of the multiplier space.
pub fn multiplier_search(
    pde: &Expr,
    ansatz: &MultiplierAnsatz,
    js: &JetSpace,
) -> Result<Vec<Expr>, Unsupported> {
    let mut euler_images = vec![];
    for m in &ansatz.basis {
        let mut per_dep = vec![];
        for dep in &js.deps {
            per_dep.push(euler_operator(&Expr::mul2(m.clone(), pde.clone()), dep)?);
        }
        euler_images.push(per_dep);
    }
    // Stack all dependents' Euler images into one coordinate system.
    let flat: Vec<Expr> = euler_images.iter().flatten().cloned().collect();
    let (_, coords) = monomial_coordinates(&flat);
    let per = js.deps.len();
    let n_basis = ansatz.basis.len();
    let n_monos = coords.first().map(|v| v.len()).unwrap_or(0);
    let mut rows: Vec<Vec<Rat>> = vec![];
    for d in 0..per {
        for m in 0..n_monos {
            let row: Vec<Rat> = (0..n_basis)
                .map(|i| coords[i * per + d][m].clone())
                .collect();
            if row.iter().any(|x| !x.is_zero()) {
                rows.push(row);
            }
        }
    }
    let null = rational_nullspace(&rows, n_basis);
    Ok(null
        .into_iter()
        .map(|v| {
            Expr::add(
                v.into_iter()
                    .zip(&ansatz.basis)
                    .map(|(c, m)| Expr::mul2(Expr::Rat(c), m.clone()))
                    .collect(),
            )
        })
        .collect())
}

/// Off-shell flux identity: Div(C) - Δ·P.
pub fn flux_residual(pde: &Expr, flux: &FluxVector) -> Result<Expr, Unsupported> {
    let delta = flux
        .multiplier
        .clone()
        .ok_or_else(|| Unsupported("flux carries no multiplier".into()))?;
    Ok(Expr::sub(
        flux.divergence()?,
        Expr::mul2(delta, pde.clone()),
    ))
}

pub fn verify_flux(
    pde: &Expr,
    flux: &FluxVector,
    opts: &IsZeroOptions,
) -> Result<ZeroVerdict, Unsupported> {
    Ok(is_zero(&flux_residual(pde, flux)?, opts))
}

/// Flux reconstruction by the three-dimensional homotopy operator.
///
/// `h` must be polynomial in the jets of the space's dependents with no
/// jet-free part. The λ-integral is exact: a monomial of total jet degree d
/// picks up the factor 1/d. The returned flux records Div(result) - h as
/// its residual of record via [`homotopy_residual`].
pub fn homotopy_flux(h: &Expr, js: &JetSpace) -> Result<FluxVector, Unsupported> {
    check_polynomial_in_jets(h, js)?;
    let mut comps = vec![];
    for xl in &js.indep {
        let z = homotopy_integrand(h, js, xl)?;
        comps.push(lambda_integral(&z, js)?);
    }
    Ok(FluxVector {
        order: js.indep.clone(),
        comps,
        multiplier: None,
    })
}

pub fn homotopy_residual(h: &Expr, flux: &FluxVector) -> Result<Expr, Unsupported> {
    Ok(Expr::sub(flux.divergence()?, h.clone()))
}

fn check_polynomial_in_jets(h: &Expr, js: &JetSpace) -> Result<(), Unsupported> {
    for a in h.atoms() {
        let inner_jets = match &a {
            Atom::Fun(_, arg) => has_dep_jets(arg, js),
            Atom::Opaque { args, .. } => args.iter().any(|x| has_dep_jets(x, js)),
            Atom::Int { body, .. } => has_dep_jets(body, js),
            _ => false,
        };
        if inner_jets {
            return Err(Unsupported(
                "homotopy operator: expression is not polynomial in the jets".into(),
            ));
        }
    }
    // Every term must carry at least one jet factor with a positive integer
    // exponent, and jet factors must have nonnegative integer exponents.
    let terms: Vec<Expr> = match h {
        Expr::Add(ts) => ts.clone(),
        other => vec![other.clone()],
    };
    for t in terms {
        let (_, factors) = match t {
            Expr::Rat(_) => {
                return Err(Unsupported(
                    "homotopy operator: integrand has a jet-free part".into(),
                ))
            }
            Expr::Mul(c, fs) => (c, fs),
            other => (Rat::one(), vec![other]),
        };
        let mut has_jet = false;
        for f in &factors {
            let (base, exp) = match f {
                Expr::Pow(b, e) => ((**b).clone(), (**e).clone()),
                other => (other.clone(), Expr::one()),
            };
            if let Expr::Atom(Atom::Jet { dep, .. }) = &base {
                if js.deps.contains(dep) {
                    has_jet = true;
                    match exp.as_int().and_then(|k| k.to_i64()) {
                        Some(k) if k >= 1 => {}
                        _ => {
                            return Err(Unsupported(
                                "homotopy operator: jet with non-integer exponent".into(),
                            ))
                        }
                    }
                }
            }
        }
        if !has_jet {
            return Err(Unsupported(
                "homotopy operator: integrand has a jet-free part".into(),
            ));
        }
    }
    Ok(())
}

fn has_dep_jets(e: &Expr, js: &JetSpace) -> bool {
    e.atoms()
        .iter()
        .any(|a| matches!(a, Atom::Jet { dep, .. } if js.deps.contains(dep)))
}

/// The integrand Z^{xl}_u H before λ-scaling: for every jet u_k with
/// k_l >= 1, sum over 0 <= i <= k (i_l <= k_l - 1) of
/// B(i,k) u_i (-D)^(k-i-e_l) ∂H/∂u_k with the multinomial weight
/// B = M(i) M(k-i-e_l) / M(k).
fn homotopy_integrand(h: &Expr, js: &JetSpace, xl: &str) -> Result<Expr, Unsupported> {
    let mut parts = vec![];
    for a in h.atoms() {
        let Atom::Jet { dep, idx } = &a else { continue };
        if !js.deps.contains(dep) {
            continue;
        }
        let k = dense_index(idx, &js.indep);
        let l = js
            .indep
            .iter()
            .position(|v| v == xl)
            .ok_or_else(|| Unsupported(format!("unknown variable {}", xl)))?;
        if k[l] == 0 {
            continue;
        }
        let dh = h.partial_atom(&a)?;
        // enumerate i with 0 <= i <= k componentwise, i_l <= k_l - 1
        let mut bounds = k.clone();
        bounds[l] -= 1;
        for i in enumerate_boxes(&bounds) {
            let b = homotopy_coefficient(&i, &k, l);
            // (-D)^(k-i-e_l)
            let mut dcount: Vec<(String, u32)> = vec![];
            let mut total_d = 0u32;
            for (j, v) in js.indep.iter().enumerate() {
                let mut kj = k[j] - i[j];
                if j == l {
                    kj -= 1;
                }
                if kj > 0 {
                    dcount.push((v.clone(), kj));
                    total_d += kj;
                }
            }
            let derived = total_derivative_multi(&dh, &dcount);
            let sign = if total_d % 2 == 0 { 1 } else { -1 };
            let pairs: Vec<(&str, u32)> = js
                .indep
                .iter()
                .enumerate()
                .filter(|(j, _)| i[*j] > 0)
                .map(|(j, v)| (v.as_str(), i[j]))
                .collect();
            let u_i = Expr::jet(dep, &pairs);
            parts.push(Expr::mul(vec![
                Expr::int(sign),
                Expr::Rat(b),
                u_i,
                derived,
            ]));
        }
    }
    Ok(Expr::add(parts))
}

fn dense_index(idx: &[(String, u32)], indep: &[String]) -> Vec<u32> {
    let m: BTreeMap<&String, u32> = idx.iter().map(|(v, k)| (v, *k)).collect();
    indep.iter().map(|v| m.get(v).copied().unwrap_or(0)).collect()
}

fn enumerate_boxes(bounds: &[u32]) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for &b in bounds {
        let mut next = vec![];
        for prefix in out {
            for v in 0..=b {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

fn multinomial(v: &[u32]) -> BigInt {
    let total: u32 = v.iter().sum();
    let mut num = BigInt::one();
    for k in 2..=total {
        num *= BigInt::from(k);
    }
    let mut den = BigInt::one();
    for &x in v {
        for k in 2..=x {
            den *= BigInt::from(k);
        }
    }
    num / den
}

fn homotopy_coefficient(i: &[u32], k: &[u32], l: usize) -> Rat {
    let mut rest: Vec<u32> = k
        .iter()
        .zip(i)
        .map(|(kk, ii)| kk - ii)
        .collect();
    rest[l] -= 1;
    let num = multinomial(i) * multinomial(&rest);
    let den = multinomial(k);
    Rat::new(num, den)
}

/// Exact λ-integral ∫₀¹ e[λu] dλ/λ for a jet-polynomial: each monomial of
/// total jet degree d is scaled by 1/d.
fn lambda_integral(e: &Expr, js: &JetSpace) -> Result<Expr, Unsupported> {
    let terms: Vec<Expr> = match e {
        Expr::Add(ts) => ts.clone(),
        other if other.is_zero_const() => return Ok(Expr::zero()),
        other => vec![other.clone()],
    };
    let mut out = vec![];
    for t in terms {
        let (c, factors) = match t {
            Expr::Rat(_) => {
                return Err(Unsupported(
                    "homotopy λ-integral: jet-free monomial".into(),
                ))
            }
            Expr::Mul(c, fs) => (c, fs),
            other => (Rat::one(), vec![other]),
        };
        let mut degree = BigInt::zero();
        for f in &factors {
            let (base, exp) = match f {
                Expr::Pow(b, e) => ((**b).clone(), (**e).clone()),
                other => (other.clone(), Expr::one()),
            };
            if let Expr::Atom(Atom::Jet { dep, .. }) = &base {
                if js.deps.contains(dep) {
                    let k = exp.as_int().ok_or_else(|| {
                        Unsupported("homotopy λ-integral: non-integer jet power".into())
                    })?;
                    degree += k;
                }
            }
        }
        if degree <= BigInt::zero() {
            return Err(Unsupported(
                "homotopy λ-integral: jet-free monomial".into(),
            ));
        }
        let scale = Rat::new(BigInt::one(), degree);
        let mut items = vec![Expr::Rat(c * scale)];
        items.extend(factors);
        out.push(Expr::mul(items));
    }
    Ok(Expr::add(out))
}
