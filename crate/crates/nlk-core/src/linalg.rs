//! Exact linear algebra used by the multiplier search and the structure
//! constant solver.

use crate::expr::{Expr, Rat};
use num_traits::{One, Signed, Zero};
use std::collections::BTreeMap;

/// Basis of the nullspace of `rows` (each row a linear form over the
/// unknowns), by exact Gaussian elimination over the rationals.
pub fn rational_nullspace(rows: &[Vec<Rat>], unknowns: usize) -> Vec<Vec<Rat>> {
    let mut m: Vec<Vec<Rat>> = rows.to_vec();
    let mut pivot_col_of_row = vec![];
    let mut row = 0usize;
    for col in 0..unknowns {
        let pivot = (row..m.len()).find(|&r| !m[r][col].is_zero());
        let Some(p) = pivot else { continue };
        m.swap(row, p);
        let inv = m[row][col].clone().recip();
        for c in col..unknowns {
            let v = m[row][c].clone() * inv.clone();
            m[row][c] = v;
        }
        for r in 0..m.len() {
            if r != row && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in col..unknowns {
                    let v = m[r][c].clone() - f.clone() * m[row][c].clone();
                    m[r][c] = v;
                }
            }
        }
        pivot_col_of_row.push(col);
        row += 1;
        if row == m.len() {
            break;
        }
    }
    let pivot_cols: std::collections::BTreeSet<usize> =
        pivot_col_of_row.iter().copied().collect();
    let mut basis = vec![];
    for free in 0..unknowns {
        if pivot_cols.contains(&free) {
            continue;
        }
        let mut v = vec![Rat::zero(); unknowns];
        v[free] = Rat::one();
        for (r, &pc) in pivot_col_of_row.iter().enumerate() {
            v[pc] = -m[r][free].clone();
        }
        // scale to integer entries with positive leading coefficient
        basis.push(normalize_vector(v));
    }
    basis
}

fn normalize_vector(v: Vec<Rat>) -> Vec<Rat> {
    use num_integer::Integer;
    let mut den = num_bigint::BigInt::one();
    for x in &v {
        den = den.lcm(x.denom());
    }
    let scaled: Vec<Rat> = v
        .into_iter()
        .map(|x| x * Rat::from_integer(den.clone()))
        .collect();
    let mut gcd = num_bigint::BigInt::zero();
    for x in &scaled {
        gcd = gcd.gcd(&x.numer().abs());
    }
    if gcd.is_zero() {
        return scaled;
    }
    let lead_sign = scaled
        .iter()
        .find(|x| !x.is_zero())
        .map(|x| x.is_negative())
        .unwrap_or(false);
    let div = if lead_sign { -gcd } else { gcd };
    scaled
        .into_iter()
        .map(|x| x / Rat::from_integer(div.clone()))
        .collect()
}

/// Whether `target` is a rational linear combination of `basis`; returns the
/// coefficients when it is. All vectors are dense rational rows.
pub fn in_rational_span(basis: &[Vec<Rat>], target: &[Rat]) -> Option<Vec<Rat>> {
    if basis.is_empty() {
        return if target.iter().all(|x| x.is_zero()) {
            Some(vec![])
        } else {
            None
        };
    }
    let n = target.len();
    // Solve basis^T c = target by elimination on the augmented system.
    let mut m: Vec<Vec<Rat>> = (0..n)
        .map(|i| {
            let mut row: Vec<Rat> = basis.iter().map(|b| b[i].clone()).collect();
            row.push(target[i].clone());
            row
        })
        .collect();
    let cols = basis.len();
    let mut pivots: Vec<(usize, usize)> = vec![];
    let mut row = 0usize;
    for col in 0..cols {
        let Some(p) = (row..m.len()).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(row, p);
        let inv = m[row][col].clone().recip();
        for c in col..=cols {
            let v = m[row][c].clone() * inv.clone();
            m[row][c] = v;
        }
        for r in 0..m.len() {
            if r != row && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in col..=cols {
                    let v = m[r][c].clone() - f.clone() * m[row][c].clone();
                    m[r][c] = v;
                }
            }
        }
        pivots.push((row, col));
        row += 1;
        if row == m.len() {
            break;
        }
    }
    // inconsistent rows?
    for r in row..m.len() {
        if !m[r][cols].is_zero() {
            return None;
        }
    }
    let mut coeffs = vec![Rat::zero(); cols];
    for (r, c) in pivots {
        coeffs[c] = m[r][cols].clone();
    }
    Some(coeffs)
}

/// Outcome of solving a linear system with expression-valued entries.
#[derive(Debug, Clone)]
pub enum ExprSolve {
    /// A particular solution (free unknowns set to zero).
    Solution(Vec<Expr>),
    /// The system is inconsistent; carries one irreducible residual row.
    Inconsistent(Expr),
    /// A needed pivot was not an invertible monomial; exact elimination
    /// over expressions was abandoned rather than risk an unsound division.
    NotMonomialPivot,
}

/// Gaussian elimination where matrix entries are symbolic expressions.
/// Rows are divided only by pivots in invertible monomial form (a rational
/// times atom powers), which keeps every step exact.
pub fn expr_solve(mut a: Vec<Vec<Expr>>, mut b: Vec<Expr>) -> ExprSolve {
    let rows = a.len();
    let cols = if rows == 0 { 0 } else { a[0].len() };
    let mut pivots: Vec<(usize, usize)> = vec![];
    let mut row = 0usize;
    for col in 0..cols {
        let Some(p) = (row..rows).find(|&r| !a[r][col].is_zero_const()) else {
            continue;
        };
        a.swap(row, p);
        b.swap(row, p);
        if !is_invertible_monomial(&a[row][col]) {
            return ExprSolve::NotMonomialPivot;
        }
        let inv = Expr::pow(a[row][col].clone(), Expr::int(-1));
        for c in col..cols {
            a[row][c] = Expr::mul2(a[row][c].clone(), inv.clone());
        }
        b[row] = Expr::mul2(b[row].clone(), inv.clone());
        for r in 0..rows {
            if r != row && !a[r][col].is_zero_const() {
                let f = a[r][col].clone();
                for c in col..cols {
                    let v = Expr::sub(
                        a[r][c].clone(),
                        Expr::mul2(f.clone(), a[row][c].clone()),
                    );
                    a[r][c] = v;
                }
                b[r] = Expr::sub(b[r].clone(), Expr::mul2(f, b[row].clone()));
            }
        }
        pivots.push((row, col));
        row += 1;
        if row == rows {
            break;
        }
    }
    for r in row..rows {
        if !b[r].is_zero_const() {
            return ExprSolve::Inconsistent(b[r].clone());
        }
    }
    let mut sol = vec![Expr::zero(); cols];
    for (r, c) in pivots {
        sol[c] = b[r].clone();
    }
    ExprSolve::Solution(sol)
}

/// A rational times a product of atom powers; exactly invertible.
fn is_invertible_monomial(e: &Expr) -> bool {
    fn factor_ok(f: &Expr) -> bool {
        match f {
            Expr::Atom(_) => true,
            Expr::Pow(b, _) => matches!(&**b, Expr::Atom(_) | Expr::Rat(_)),
            _ => false,
        }
    }
    match e {
        Expr::Rat(r) => !r.is_zero(),
        Expr::Atom(_) => true,
        Expr::Pow(_, _) => factor_ok(e),
        Expr::Mul(_, fs) => fs.iter().all(factor_ok),
        Expr::Add(_) => false,
    }
}

/// Decomposes a set of expressions into a shared monomial basis and their
/// rational coordinate vectors. Every expression must be a rational linear
/// combination of monomials (which normalized expressions always are).
pub fn monomial_coordinates(exprs: &[Expr]) -> (Vec<Vec<Expr>>, Vec<Vec<Rat>>) {
    let mut monos: BTreeMap<Vec<Expr>, usize> = BTreeMap::new();
    let decomposed: Vec<Vec<(Vec<Expr>, Rat)>> = exprs
        .iter()
        .map(|e| {
            let terms: Vec<Expr> = match e {
                Expr::Add(ts) => ts.clone(),
                other if other.is_zero_const() => vec![],
                other => vec![other.clone()],
            };
            terms
                .into_iter()
                .map(|t| {
                    let (c, mono) = match t {
                        Expr::Rat(r) => (r, vec![]),
                        Expr::Mul(c, fs) => (c, fs),
                        other => (Rat::one(), vec![other]),
                    };
                    let next = monos.len();
                    monos.entry(mono.clone()).or_insert(next);
                    (mono, c)
                })
                .collect()
        })
        .collect();
    let mut basis: Vec<Vec<Expr>> = vec![vec![]; monos.len()];
    for (m, i) in &monos {
        basis[*i] = m.clone();
    }
    let vectors = decomposed
        .into_iter()
        .map(|terms| {
            let mut v = vec![Rat::zero(); monos.len()];
            for (m, c) in terms {
                v[monos[&m]] = c;
            }
            v
        })
        .collect();
    (basis, vectors)
}
