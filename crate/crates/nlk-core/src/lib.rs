//! Symbolic toolkit for constructing and mechanically verifying nonlocally
//! related PDE systems: conservation-law multipliers and fluxes, the 3D
//! homotopy operator, reduced potential systems, inverse potential systems
//! via hodograph charts, Lie vector fields with solvable chains, double
//! reduction, and Cole-Hopf solution transport.

pub mod conslaw;
pub mod expr;
pub mod jet;
pub mod linalg;

pub use expr::{parse, parse_with, render, Expr, ParseCtx};
pub use jet::{JetSpace, PdeSystem};

#[cfg(test)]
mod smoke {
    use super::expr::*;
    use super::jet::*;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    #[test]
    fn lowest_terms() {
        assert_eq!(p("3/6"), Expr::ratio(1, 2));
    }

    #[test]
    fn cancellation() {
        assert!(p("x + x - 2*x").is_zero_const());
    }

    #[test]
    fn burgers_kp_inner_operator() {
        let e = p("u_t + alpha*u^n*u_x");
        let expected = Expr::add2(
            Expr::jet("u", &[("t", 1)]),
            Expr::mul(vec![
                Expr::param("alpha"),
                Expr::pow(Expr::jet("u", &[]), Expr::param("n")),
                Expr::jet("u", &[("x", 1)]),
            ]),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn render_parse_roundtrip_basic() {
        for s in [
            "u_t + alpha*u^n*u_x + beta*u_xx",
            "(x+y)^2/(8*t)",
            "tanh(x)^2 + sech(x)^2 - 1",
            "int(x*u_xt, x)",
            "g1_t(t)*u_x",
            "2^(1/2)*t^(-3/4)",
        ] {
            let ctx = ParseCtx::default_space().with_opaque("g1", 1);
            let e = parse_with(s, &ctx).unwrap();
            let rendered = render(&e);
            let e2 = parse_with(&rendered, &ctx).unwrap();
            assert_eq!(e, e2, "roundtrip failed for `{}` -> `{}`", s, rendered);
        }
    }

    #[test]
    fn substitute_exponent_collapse() {
        let e = p("u^n");
        let mut b = std::collections::BTreeMap::new();
        b.insert(Atom::Param("n".into()), Expr::one());
        assert_eq!(e.substitute(&b), p("u"));
    }

    #[test]
    fn substitute_rational_point() {
        let e = p("(x+y)^2/(8*t)");
        let mut b = std::collections::BTreeMap::new();
        b.insert(Atom::Var("x".into()), Expr::one());
        b.insert(Atom::Var("y".into()), Expr::one());
        b.insert(Atom::Var("t".into()), Expr::ratio(1, 2));
        assert_eq!(e.substitute(&b), Expr::one());
    }

    #[test]
    fn total_derivative_product_rule() {
        // D_x(u^2) = 2 u u_x
        let d = total_derivative(&p("u^2"), "x");
        assert_eq!(d, p("2*u*u_x"));
    }

    #[test]
    fn total_derivative_similarity_variable() {
        // D_t(x t^(-1/2)) = -(1/2) x t^(-3/2)
        let d = total_derivative(&p("x*t^(-1/2)"), "t");
        assert_eq!(d, p("-1/2*x*t^(-3/2)"));
    }

    #[test]
    fn euler_annihilates_divergence() {
        // E_u(D_x(u^2) + D_y(u*u_y)) = 0
        let e = Expr::add2(
            total_derivative(&p("u^2"), "x"),
            total_derivative(&p("u*u_y"), "y"),
        );
        assert!(euler_operator(&e, "u").unwrap().is_zero_const());
    }

    #[test]
    fn euler_examples() {
        assert_eq!(euler_operator(&p("u*u_xx"), "u").unwrap(), p("2*u_xx"));
        assert_eq!(euler_operator(&p("u_x^2"), "u").unwrap(), p("-2*u_xx"));
    }

    #[test]
    fn eval_kink_amplitude() {
        let e = p("1 - 2*tanh(0)");
        let v = eval_numeric(&e, &Default::default()).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn hyperbolic_identity_numeric_only() {
        let e = p("tanh(x)^2 + sech(x)^2 - 1");
        let opts = IsZeroOptions::default();
        match is_zero(&e, &opts) {
            ZeroVerdict::NumericZero { .. } => {}
            v => panic!("expected NumericZero, got {:?}", v),
        }
    }

    #[test]
    fn nonzero_witness() {
        let e = p("x*y - 1");
        match is_zero(&e, &IsZeroOptions::default()) {
            ZeroVerdict::NonZero { .. } => {}
            v => panic!("expected NonZero, got {:?}", v),
        }
    }

    #[test]
    fn symbolic_exponent_merge() {
        // u^n * u = u^(n+1)
        assert_eq!(p("u^n * u"), p("u^(n+1)"));
    }

    #[test]
    fn ring_distribution() {
        assert_eq!(p("x*(y + z) - x*y - x*z"), Expr::zero());
        assert_eq!(p("(x+y)^2"), p("x^2 + 2*x*y + y^2"));
    }

    #[test]
    fn reduce_modulo_uw() {
        // u_t = -alpha u u_x - beta u_xx + w_y  (UW at n=1, g=1)
        let space = JetSpace::new(&["x", "y", "t"], &["u", "w"]);
        let ctx = space.parse_ctx();
        let rhs = parse_with("-alpha*u*u_x - beta*u_xx + w_y", &ctx).unwrap();
        let sys = PdeSystem::new(
            space,
            vec![PdeEquation::new(Atom::jet("u", &[("t", 1)]), rhs.clone()).unwrap()],
        );
        let r = reduce_on_solutions(&parse_with("u_t", &ctx).unwrap(), &sys).unwrap();
        assert_eq!(r, rhs);
        // prolonged: u_tx -> D_x rhs
        let r2 = reduce_on_solutions(&parse_with("u_tx", &ctx).unwrap(), &sys).unwrap();
        assert_eq!(r2, total_derivative(&rhs, "x"));
    }
}

#[cfg(test)]
mod conslaw_smoke {
    use super::conslaw::*;
    use super::expr::*;
    use super::jet::*;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    /// Burgers-KP left side, expanded: (u_t + α u^n u_x + β u_xx)_x + γ u_yy
    fn kp() -> Expr {
        let inner = p("u_t + alpha*u^n*u_x + beta*u_xx");
        Expr::add2(total_derivative(&inner, "x"), p("gamma*u_yy"))
    }

    #[test]
    fn multiplier_one_passes() {
        let js = JetSpace::xyt_u();
        let v = verify_multiplier(&kp(), &Expr::one(), &js, &Default::default()).unwrap();
        assert_eq!(v, ZeroVerdict::SymbolicZero);
    }

    #[test]
    fn multiplier_u_fails() {
        let js = JetSpace::xyt_u();
        let v = verify_multiplier(&kp(), &p("u"), &js, &Default::default()).unwrap();
        assert!(!v.is_zeroish(), "{:?}", v);
    }

    #[test]
    fn multiplier_xt_instance() {
        // Δ = x t - y^2/(2 γ), the g³ = t instance
        let js = JetSpace::xyt_u();
        let delta = p("x*t - y^2/(2*gamma)");
        let v = verify_multiplier(&kp(), &delta, &js, &Default::default()).unwrap();
        assert_eq!(v, ZeroVerdict::SymbolicZero);
    }

    #[test]
    fn homotopy_hand_case() {
        // J^x(2 u u_x) = u^2, other components zero
        let js = JetSpace::xyt_u();
        let f = homotopy_flux(&p("2*u*u_x"), &js).unwrap();
        assert_eq!(f.component("x").unwrap(), &p("u^2"));
        assert!(f.component("y").unwrap().is_zero_const());
        assert!(f.component("t").unwrap().is_zero_const());
    }

    #[test]
    fn homotopy_round_trip_kp() {
        // H = 1·P at n=1 must reconstruct co-divergent fluxes
        let js = JetSpace::xyt_u();
        let mut b = std::collections::BTreeMap::new();
        b.insert(Atom::Param("n".into()), Expr::one());
        let h = kp().substitute(&b);
        let f = homotopy_flux(&h, &js).unwrap();
        let r = homotopy_residual(&h, &f).unwrap();
        assert!(r.is_zero_const(), "residual: {}", render(&r));
    }

    #[test]
    fn search_finds_xy_span() {
        let js = JetSpace::xyt_u();
        let ansatz = MultiplierAnsatz {
            basis: vec![p("1"), p("x"), p("y"), p("x*y"), p("x^2"), p("y^2")],
        };
        let found = multiplier_search(&kp(), &ansatz, &js).unwrap();
        assert_eq!(found.len(), 4, "{:?}", found.iter().map(render).collect::<Vec<_>>());
    }
}
