use briot::characteristics::{invert_flow, FlowMap};
use briot::classifier::scrx1_value;
use briot::expr::{parse_expr, Expr, Point};
use briot::field::ScalarField;
use briot::germ::{circle_nodes, horner, HoloGerm};
use briot::solution::{Exponent, SolutionHandle};
use briot::tseries::TSeries;
use briot::C64;
use proptest::prelude::*;

fn close(a: C64, b: C64, tol: f64) -> bool {
    if !(a.re.is_finite() && a.im.is_finite() && b.re.is_finite() && b.im.is_finite()) {
        return true;
    }
    (a - b).norm() <= tol * (1.0 + a.norm().max(b.norm()))
}

fn expr_text() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("t".to_string()),
        Just("x".to_string()),
        Just("i".to_string()),
        (-4.0f64..4.0).prop_map(|v| format!("({v})")),
        (1u32..20).prop_map(|v| v.to_string()),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone(), prop_oneof![Just("+"), Just("-"), Just("*"), Just("/")])
                .prop_map(|(a, b, op)| format!("({a}) {op} ({b})")),
            (inner.clone(), 0u32..4).prop_map(|(a, n)| format!("({a})^{n}")),
            (inner.clone(), prop_oneof![Just("exp"), Just("sqrt")]).prop_map(|(a, f)| format!("{f}({a})")),
            // log only takes positive functions of t
            (inner.clone(), prop_oneof![Just("log(t)"), Just("log(1/t)"), Just("log(2 + t^2)")]).prop_map(|(a, l)| format!("({a}) * {l}")),
            inner.prop_map(|a| format!("-({a})")),
        ]
    })
}

fn points() -> Vec<Point> {
    [(0.05, C64::new(0.1, -0.2)), (0.3, C64::new(-0.4, 0.05)), (0.9, C64::new(0.7, 0.6))]
        .into_iter()
        .map(|(t, x)| Point::tx(t, x))
        .collect()
}

fn germ(max_deg: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| C64::new(a, b)), 1..=max_deg + 1)
}

fn series() -> impl Strategy<Value = TSeries> {
    prop::collection::vec((prop_oneof![Just(0.0), Just(0.5), Just(1.0), Just(2.0)], 0u32..2, germ(4)), 1..4).prop_map(|ts| {
        ts.into_iter().fold(TSeries::zero(), |acc, (e, k, g)| acc.add(&TSeries::monomial(e, k, g)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn printed_expressions_reparse_to_the_same_function(text in expr_text()) {
        let e = parse_expr(&text).unwrap();
        let again: Expr = parse_expr(&e.to_string()).unwrap();
        for p in points() {
            prop_assert!(close(e.eval(&p), again.eval(&p), 1e-12), "{text} → {e}");
        }
    }

    #[test]
    fn compiled_and_interpreted_evaluation_agree(text in expr_text()) {
        let e = parse_expr(&text).unwrap();
        let prog = e.compile();
        for p in points() {
            prop_assert!(close(e.eval(&p), prog.eval(&p), 1e-12), "{e}");
        }
    }

    #[test]
    fn series_products_evaluate_pointwise(a in series(), b in series(), t in 0.01f64..0.5, xr in -0.5f64..0.5, xi in -0.5f64..0.5) {
        let x = C64::new(xr, xi);
        let p = a.mul(&b, 1e6);
        prop_assert!(close(p.eval(t, x), a.eval(t, x) * b.eval(t, x), 1e-12));
    }

    #[test]
    fn series_x_derivative_matches_eval_d(a in series(), t in 0.01f64..0.5, xr in -0.5f64..0.5) {
        let x = C64::new(xr, 0.1);
        prop_assert!(close(a.dx().eval(t, x), a.eval_d(t, x).1, 1e-12));
    }

    #[test]
    fn series_euler_derivative_matches_difference_quotient(a in series(), t in 0.05f64..0.5) {
        let x = C64::new(0.2, -0.1);
        let h = 1e-5 * t;
        let fd = (a.eval(t + h, x) - a.eval(t - h, x)) / (2.0 * h) * t;
        prop_assert!(close(a.t_dt().eval(t, x), fd, 1e-6));
    }

    #[test]
    fn circle_samples_recover_polynomials(c in germ(8), rho in 0.1f64..2.0) {
        let samples: Vec<C64> = circle_nodes(32, rho, C64::new(0.0, 0.0)).iter().map(|&x| horner(&c, x)).collect();
        let g = HoloGerm::from_circle_samples(&samples, rho);
        let want = HoloGerm::polynomial(c);
        prop_assert!(g.max_abs_diff(&want) <= 1e-12 * rho.powi(-8).max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn inverse_flow_of_a_linear_drift(beta in -1.0f64..1.0, xr in -0.3f64..0.3, xi in -0.3f64..0.3) {
        let fm = FlowMap::new(ScalarField::parse(&format!("({beta})*t"), 1.0, 2.0).unwrap());
        let x0 = C64::new(xr, xi);
        let r = invert_flow(&fm, 0.1, x0, 0.3, 50).unwrap();
        prop_assert!((r.xi - (x0 - 0.2 * beta)).norm() <= 1e-9);
        prop_assert!(r.residual <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn scrx1_is_homogeneous(c in 0.1f64..20.0, arg in 0.0f64..std::f64::consts::TAU) {
        let f = ScalarField::parse("x^2/4 + t*x", 0.3, 1.0).unwrap();
        let u = SolutionHandle::from_field(&f, Exponent::Exact(0.0));
        let base = scrx1_value(&u).value;
        let v = scrx1_value(&u.scale(C64::from_polar(c, arg))).value;
        prop_assert!((v - c * base).abs() <= 1e-9 * c * base);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn series_family_members_solve_the_reduced_equation(psi in prop::collection::vec(-1.0f64..1.0, 1..4)) {
        use briot::field::EquationSpec;
        use briot::nonlinear::{certify, reduce_about};
        use briot::series::{quadratic_gradient_drift, quadratic_gradient_u0, series_family};
        let spec = EquationSpec::quadratic_gradient(3.0, 1.0);
        let u0 = quadratic_gradient_u0(C64::new(3.0, 0.0), 1.0, spec.t0, spec.r0);
        let s0 = reduce_about(&spec, &u0).unwrap();
        let f = quadratic_gradient_drift(C64::new(3.0, 0.0), 1.0, s0.t0, s0.r0);
        let u = series_family(C64::new(3.0, 0.0), &f, &HoloGerm::from_real(&psi), 12).unwrap().handle(s0.t0, s0.r0);
        prop_assert!(certify(&s0, &u).unwrap().residual_sup <= 1e-8);
    }
}
