//! Zero-testing: exact via the normal form, probabilistic via seeded
//! sampling at random rational points.

use super::{eval_numeric, render, Atom, EvalError, Expr};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ZeroVerdict {
    SymbolicZero,
    NumericZero {
        max_abs: f64,
    },
    NonZero {
        witness: BTreeMap<String, f64>,
        value: f64,
    },
    Unknown {
        reason: String,
    },
}

impl ZeroVerdict {
    pub fn is_zeroish(&self) -> bool {
        matches!(
            self,
            ZeroVerdict::SymbolicZero | ZeroVerdict::NumericZero { .. }
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ZeroVerdict::SymbolicZero => "SymbolicZero",
            ZeroVerdict::NumericZero { .. } => "NumericZero",
            ZeroVerdict::NonZero { .. } => "NonZero",
            ZeroVerdict::Unknown { .. } => "Unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZeroMode {
    Symbolic,
    Numeric,
    Auto,
}

impl Default for ZeroMode {
    fn default() -> Self {
        ZeroMode::Auto
    }
}

impl std::str::FromStr for ZeroMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "symbolic" => Ok(ZeroMode::Symbolic),
            "numeric" => Ok(ZeroMode::Numeric),
            "auto" => Ok(ZeroMode::Auto),
            other => Err(format!("unknown mode `{}`", other)),
        }
    }
}

/// Sampling box per atom (by canonical rendering) with a default range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplePlan {
    /// Default sampling interval for atoms not listed in `boxes`.
    pub default_box: (f64, f64),
    pub boxes: BTreeMap<String, (f64, f64)>,
}

impl Default for SamplePlan {
    fn default() -> Self {
        SamplePlan {
            // positive O(1) box; keeps powers, logs and symbolic exponents real
            default_box: (0.25, 1.75),
            boxes: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IsZeroOptions {
    pub mode: ZeroMode,
    pub seed: u64,
    pub samples: u32,
    pub tolerance: f64,
    pub plan: SamplePlan,
}

impl Default for IsZeroOptions {
    fn default() -> Self {
        IsZeroOptions {
            mode: ZeroMode::Auto,
            seed: 42,
            samples: 16,
            tolerance: 1e-9,
            plan: SamplePlan::default(),
        }
    }
}

const RESAMPLE_LIMIT: u32 = 64;

/// Decides whether `e` is zero. Symbolic mode trusts only the normal form;
/// numeric mode samples seeded random points; auto tries symbolic first.
pub fn is_zero(e: &Expr, opts: &IsZeroOptions) -> ZeroVerdict {
    if e.is_zero_const() {
        return ZeroVerdict::SymbolicZero;
    }
    match opts.mode {
        ZeroMode::Symbolic => ZeroVerdict::Unknown {
            reason: "normal form is not the zero constant".into(),
        },
        ZeroMode::Numeric | ZeroMode::Auto => sample_zero(e, opts),
    }
}

fn sample_zero(e: &Expr, opts: &IsZeroOptions) -> ZeroVerdict {
    let atoms: Vec<Atom> = e
        .atoms()
        .into_iter()
        .filter(|a| !matches!(a, Atom::Fun(_, _)))
        .filter(|a| !matches!(a, Atom::Param(p) if p == "pi"))
        .collect();
    let keys: Vec<String> = atoms
        .iter()
        .map(|a| render(&Expr::Atom(a.clone())))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut max_abs: f64 = 0.0;
    let mut produced = 0u32;
    let mut rejected = 0u32;
    while produced < opts.samples {
        if rejected > RESAMPLE_LIMIT {
            return ZeroVerdict::Unknown {
                reason: format!(
                    "sampling failed: {} domain rejections before {} valid samples",
                    rejected, opts.samples
                ),
            };
        }
        let mut point: BTreeMap<String, f64> = BTreeMap::new();
        for k in &keys {
            let (lo, hi) = opts
                .plan
                .boxes
                .get(k)
                .copied()
                .unwrap_or(opts.plan.default_box);
            point.insert(k.clone(), rng.gen_range(lo..hi));
        }
        match eval_scaled(e, &point) {
            Ok((v, scale)) => {
                produced += 1;
                let rel = v.abs() / scale.max(1.0);
                max_abs = max_abs.max(rel);
                let hard = (opts.tolerance * 1e3).max(1e-6);
                if rel > hard {
                    return ZeroVerdict::NonZero {
                        witness: point,
                        value: v,
                    };
                }
            }
            Err(EvalError::Domain(_)) => {
                rejected += 1;
            }
            Err(EvalError::Unbound(k)) => {
                return ZeroVerdict::Unknown {
                    reason: format!("unbound atom {} during sampling", k),
                }
            }
        }
    }
    if max_abs <= opts.tolerance {
        ZeroVerdict::NumericZero { max_abs }
    } else {
        ZeroVerdict::Unknown {
            reason: format!(
                "residual {} between tolerance {} and the nonzero threshold",
                max_abs, opts.tolerance
            ),
        }
    }
}

/// Evaluates `e` together with the cancellation scale (the sum of the
/// magnitudes of the top-level terms), so tolerances are relative to the
/// size of what cancelled.
fn eval_scaled(e: &Expr, point: &BTreeMap<String, f64>) -> Result<(f64, f64), EvalError> {
    match e {
        Expr::Add(ts) => {
            let mut acc = 0.0;
            let mut scale: f64 = 0.0;
            for t in ts {
                let v = eval_numeric(t, point)?;
                acc += v;
                scale = scale.max(v.abs());
            }
            if !acc.is_finite() || !scale.is_finite() {
                return Err(EvalError::Domain("non-finite sum".into()));
            }
            Ok((acc, scale))
        }
        other => {
            let v = eval_numeric(other, point)?;
            Ok((v, v.abs()))
        }
    }
}
