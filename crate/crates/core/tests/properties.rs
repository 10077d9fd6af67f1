use proptest::prelude::*;
use regulab::expr::Expression;
use regulab::metrics::{ConvexSet, ExtendedReal, Halfspace, PROJECTION_TOL};

fn leaf() -> impl Strategy<Value = String> {
    prop_oneof![
        (0u32..1000).prop_map(|v| format!("{}", v as f64 / 8.0)),
        (1usize..=3).prop_map(|i| format!("x{i}")),
    ]
}

fn expr_source() -> impl Strategy<Value = String> {
    leaf().prop_recursive(4, 32, 3, |inner| {
        prop_oneof![
            (inner.clone(), prop::sample::select(vec!["+", "-", "*", "/", "^"]), inner.clone())
                .prop_map(|(a, op, b)| format!("({a}) {op} ({b})")),
            inner.clone().prop_map(|a| format!("-({a})")),
            (prop::sample::select(vec!["abs", "sqrt", "exp", "log"]), inner.clone()).prop_map(|(f, a)| format!("{f}({a})")),
            (prop::sample::select(vec!["min", "max"]), inner.clone(), inner.clone())
                .prop_map(|(f, a, b)| format!("{f}({a}, {b})")),
            (inner.clone(), prop::sample::select(vec!["<", "<=", ">", ">=", "==", "!="]), inner.clone(), inner.clone(), inner)
                .prop_map(|(a, c, b, t, e)| format!("if({a} {c} {b}, {t}, {e})")),
        ]
    })
}

fn coords(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0f64..4.0, n)
}

/// A nonempty convex set of dimension `n`, one strategy per kind.
fn convex_set(n: usize) -> impl Strategy<Value = ConvexSet> {
    let boxed = (coords(n), prop::collection::vec(0.0f64..3.0, n)).prop_map(|(lo, w)| ConvexSet::Box {
        hi: lo.iter().zip(&w).map(|(l, w)| l + w).collect(),
        lo,
    });
    let ball = (coords(n), 0.1f64..3.0).prop_map(|(center, radius)| ConvexSet::Ball { center, radius });
    let poly = (coords(n), prop::collection::vec((coords(n), 0.0f64..1.0), 1..6)).prop_map(|(z, hs)| {
        let constraints = hs
            .into_iter()
            .filter(|(a, _)| a.iter().any(|v| v.abs() > 1e-3))
            .map(|(a, slack)| {
                let b = a.iter().zip(&z).map(|(u, v)| u * v).sum::<f64>() + slack;
                Halfspace { a, b }
            })
            .collect::<Vec<_>>();
        if constraints.is_empty() {
            ConvexSet::WholeSpace { dim: z.len() }
        } else {
            ConvexSet::Polyhedron { constraints }
        }
    });
    prop_oneof![Just(ConvexSet::WholeSpace { dim: n }), boxed, ball, poly]
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
}

fn scale(u: &[f64]) -> f64 {
    u.iter().fold(1.0f64, |m, v| m.max(v.abs()))
}

proptest! {
    #[test]
    fn print_parse_round_trip(src in expr_source()) {
        let e = Expression::parse(&src).unwrap();
        let again = Expression::parse(&e.to_string()).unwrap();
        prop_assert_eq!(e.root(), again.root());
    }

    #[test]
    fn arbitrary_text_never_panics(src in "\\PC{0,40}") {
        let _ = Expression::parse(&src);
    }

    #[test]
    fn token_soup_never_panics(toks in prop::collection::vec(
        prop::sample::select(vec!["x1", "2", "+", "-", "*", "/", "^", "(", ")", ",", "if", "abs", "min", "<", "==", "1e", "."]), 0..20)) {
        let _ = Expression::parse(&toks.join(" "));
    }

    #[test]
    fn eval_is_bit_reproducible(src in expr_source(), x in coords(3)) {
        let e = Expression::parse(&src).unwrap();
        let a = e.eval(&x).map(f64::to_bits).ok();
        let b = e.eval(&x).map(f64::to_bits).ok();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn projection_laws((c, u, v) in (1usize..=3).prop_flat_map(|n| (convex_set(n), coords(n), coords(n)))) {
        let tol = PROJECTION_TOL;
        let pu = c.project(&u, tol).unwrap();
        let pv = c.project(&v, tol).unwrap();
        let s = scale(&u).max(scale(&v));
        prop_assert!(c.contains(&pu, tol * s), "{pu:?} not in {c:?}");
        let ppu = c.project(&pu, tol).unwrap();
        prop_assert!(dist(&ppu, &pu) <= tol * s, "idempotence {}", dist(&ppu, &pu));
        prop_assert!(dist(&pu, &pv) <= dist(&u, &v) + 4.0 * tol * s);
        // z = pv ranges over C
        let lhs: f64 = u.iter().zip(&pu).zip(&pv).map(|((a, p), z)| (a - p) * (z - p)).sum();
        prop_assert!(lhs <= tol * s * (1.0 + dist(&u, &pv)), "variational {lhs}");
    }

    #[test]
    fn projection_fixes_members((c, u) in (1usize..=3).prop_flat_map(|n| (convex_set(n), coords(n)))) {
        if c.contains(&u, 0.0) {
            let pu = c.project(&u, PROJECTION_TOL).unwrap();
            prop_assert!(dist(&pu, &u) <= PROJECTION_TOL * scale(&u));
        }
    }

    #[test]
    fn extended_real_order(a in prop::option::of(-1e6f64..1e6), b in prop::option::of(-1e6f64..1e6), c in prop::option::of(-1e6f64..1e6)) {
        let e = |v: Option<f64>| ExtendedReal::new(v.unwrap_or(f64::INFINITY));
        let (a, b, c) = (e(a), e(b), e(c));
        prop_assert_eq!(a.min(b), b.min(a));
        prop_assert_eq!(a.max(b), b.max(a));
        prop_assert_eq!(a.min(b).min(c), a.min(b.min(c)));
        prop_assert_eq!(a.max(b).max(c), a.max(b.max(c)));
        prop_assert!(!(a + b).value().is_nan());
        if a.is_finite() {
            prop_assert!(a < ExtendedReal::new(f64::INFINITY));
        }
    }
}

mod envelope {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use regulab::regularity::{fit_holder_envelope, RegularitySample, Verdict, SAFETY};

    fn power_law(alpha: f64, c: f64, noise: f64, seed: u64) -> Vec<RegularitySample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..2000)
            .map(|_| {
                let s = 2f64.powf(rng.gen_range(-30.0..0.0));
                let r = c * s.powf(alpha) * (1.0 - noise * rng.gen::<f64>());
                RegularitySample::new(s, r)
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn recovers_exponent(alpha in 0.2f64..1.5, c in 0.1f64..10.0, seed in any::<u64>()) {
            let fit = fit_holder_envelope(&power_law(alpha, c, 0.1, seed));
            prop_assert_eq!(fit.verdict, Verdict::Holder);
            prop_assert!((fit.alpha - alpha).abs() <= 0.03, "{} vs {alpha}", fit.alpha);
        }

        /// A Holder verdict means every sample sits under `SAFETY·c·s^α`.
        #[test]
        fn holder_verdict_is_sound(alpha in 0.2f64..1.5, seed in any::<u64>()) {
            let samples = power_law(alpha, 1.0, 0.1, seed);
            let fit = fit_holder_envelope(&samples);
            if fit.verdict == Verdict::Holder {
                for p in &samples {
                    prop_assert!(p.r <= SAFETY * fit.c * p.s.powf(fit.alpha) * (1.0 + 1e-9));
                }
            }
        }
    }
}

mod maps {
    use proptest::prelude::*;
    use regulab::map_model::{AnalysisBox, MapModel};

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// `y ∈ F(x)` iff `x ∈ F⁻¹(y)`, and inverting twice changes nothing.
        #[test]
        fn inverse_is_graph_symmetric(a in 0.5f64..2.0, b in -1.0f64..1.0, x in -1.5f64..1.5) {
            let src = format!("{a} * x1^3 + {b} * x1");
            let f = MapModel::from_exprs(&[&src]).unwrap();
            let xbox = AnalysisBox::new(vec![-2.0], vec![2.0], 64).unwrap();
            let ybox = AnalysisBox::new(vec![-30.0], vec![30.0], 64).unwrap();
            let y = f.forward_set(&[x], &ybox, 1e-9).unwrap();
            prop_assert_eq!(y.len(), 1);
            let pre = f.inverse_set(y.points()[0].as_slice(), &xbox, 1e-9).unwrap();
            prop_assert!(pre.points().iter().any(|p| (p[0] - x).abs() <= 1e-6), "{x} not in {:?}", pre.points());
            let twice = f.clone().inverse().inverse();
            let again = twice.forward_set(&[x], &ybox, 1e-9).unwrap();
            prop_assert_eq!(again.points(), y.points());
        }
    }
}

mod vi {
    use proptest::prelude::*;
    use regulab::map_model::{AnalysisBox, VectorMap};
    use regulab::metrics::{ConvexSet, Halfspace};
    use regulab::vi::{normal_map_eval, solution_set, solution_set_by_scan, solve_normal_equation, vi_residual, VIProblem};

    const TOL: f64 = 1e-9;

    fn set(kind: u8, lo: f64, w: f64) -> ConvexSet {
        match kind {
            0 => ConvexSet::WholeSpace { dim: 1 },
            1 => ConvexSet::Polyhedron { constraints: vec![Halfspace { a: vec![-1.0], b: -lo }] },
            _ => ConvexSet::Box { lo: vec![lo], hi: vec![lo + w] },
        }
    }

    /// Strongly monotone scalar VIs: exactly one solution.
    fn problem() -> impl Strategy<Value = (VIProblem, f64)> {
        (0.5f64..2.0, 0.0f64..1.0, -1.0f64..1.0, 0u8..3, -1.5f64..0.5, 0.5f64..2.0, -1.0f64..1.0).prop_map(
            |(a, b, c, kind, lo, w, p)| {
                let f = format!("{a} * x1 + {b} * x1^3 + {c}");
                (VIProblem::parse(&[f], set(kind, lo, w)).unwrap(), p)
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn normal_map_round_trip((prob, p) in problem()) {
            let ubox = AnalysisBox::new(vec![-30.0], vec![30.0], 64).unwrap();
            let sols = solution_set(&prob, &[p], &ubox, TOL).unwrap();
            prop_assert_eq!(sols.len(), 1);
            for x in sols.points() {
                let fx = prob.f().eval(x).unwrap();
                let u = vec![x[0] - fx[0] - p];
                let r = normal_map_eval(&prob, &u).unwrap()[0] + p;
                prop_assert!(r.abs() <= 10.0 * TOL, "residual {r}");
            }
            let probes: Vec<Vec<f64>> = (0..=40).map(|i| prob.project(&[-4.0 + 0.2 * i as f64]).unwrap()).collect();
            for u in solve_normal_equation(&prob, &[p], &ubox, TOL).unwrap().points() {
                let x = prob.project(u).unwrap();
                let r = vi_residual(&prob, &[p], &x, &probes, TOL).unwrap().value();
                prop_assert!(r <= 10.0 * TOL, "vi residual {r}");
            }
        }

        #[test]
        fn scan_agrees_with_solver((prob, p) in problem()) {
            let ubox = AnalysisBox::new(vec![-30.0], vec![30.0], 64).unwrap();
            let grid = AnalysisBox::new(vec![-4.0], vec![4.0], 801).unwrap();
            let h = grid.step(0);
            let a = solution_set(&prob, &[p], &ubox, TOL).unwrap();
            let b = solution_set_by_scan(&prob, &[p], &grid, 1e-7).unwrap();
            let covered = |x: &Vec<f64>, other: &[Vec<f64>]| other.iter().any(|y| (x[0] - y[0]).abs() <= h);
            for x in a.points() {
                prop_assert!(covered(x, b.points()), "{x:?} missing from scan {:?}", b.points());
            }
            for x in b.points() {
                prop_assert!(covered(x, a.points()), "{x:?} missing from solver {:?}", a.points());
            }
        }
    }
}
