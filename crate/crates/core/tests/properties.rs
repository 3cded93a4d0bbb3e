use nmm_core::geometry::Geometry;
use nmm_core::lifting::{enumerate_optimum, solve_lifted, LabelGrid, LiftingConfig};
use nmm_core::linalg::Operator;
use nmm_core::problem::{BoxDomain, CompositeProblem, InnerMap, Regularizer, ScalarFn, SeparableMap, SmoothOuter, TvNorm};
use nmm_core::scalar::{minimize_1d, GridSearch};
use nmm_core::solver::{self, majorizer_value, mm_step, Method, SolverConfig};
use proptest::prelude::*;

fn sin_problem(f: Vec<f64>) -> CompositeProblem<f64> {
    let n = f.len();
    CompositeProblem::new(
        SmoothOuter::least_squares(Operator::Identity(n), f).unwrap(),
        InnerMap::Separable(SeparableMap::uniform(n, ScalarFn::sin())),
        Regularizer::Separable(vec![ScalarFn::square().scaled(0.05); n]),
        BoxDomain::uniform(n, -3.0, 3.0).unwrap(),
    )
    .unwrap()
}

fn vec3() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn majorizer_dominates_energy(f in vec3(), uk in vec3(), u in vec3(), tau in 0.05..0.99f64) {
        let p = sin_problem(f);
        let g = Geometry::quadratic();
        let e = p.energy(&u).unwrap();
        prop_assert!(majorizer_value(&p, &g, tau, &uk, &u).unwrap() >= e - 1e-9 * (1.0 + e.abs()));
    }

    #[test]
    fn mm_step_decreases_majorizer(f in vec3(), uk in vec3(), tau in 0.05..0.99f64) {
        let p = sin_problem(f);
        let g = Geometry::quadratic();
        let next = mm_step(&p, &g, tau, &uk).unwrap();
        let at_anchor = majorizer_value(&p, &g, tau, &uk, &uk).unwrap();
        prop_assert!(majorizer_value(&p, &g, tau, &uk, &next).unwrap() <= at_anchor);
        prop_assert!(p.energy(&next).unwrap() <= p.energy(&uk).unwrap() + 1e-12);
    }

    #[test]
    fn search_beats_every_grid_point(c in -2.0..2.0f64, w in 0.5..8.0f64) {
        let f = move |x: f64| (x - c).powi(2) + 0.3 * (w * x).sin();
        let cfg = GridSearch { grid_n: 257, ..GridSearch::default() };
        let m = minimize_1d(f, -3.0, 3.0, &cfg).unwrap();
        for i in 0..257 {
            prop_assert!(m.f <= f(-3.0 + 6.0 * i as f64 / 256.0));
        }
    }

    #[test]
    fn bregman_is_nonnegative(a in 0.01..5.0f64, b in 0.01..5.0f64) {
        for g in [Geometry::quadratic(), Geometry::burg_entropy(), Geometry::diag_quadratic(vec![2.0]).unwrap()] {
            let d = g.bregman(&[a], &[b]).unwrap();
            prop_assert!(d >= -1e-15);
            prop_assert_eq!(g.bregman(&[a], &[a]).unwrap(), 0.0);
        }
    }

    #[test]
    fn runs_satisfy_descent_and_summed_rate(f in vec3(), u0 in vec3()) {
        let p = sin_problem(f);
        let cfg = SolverConfig { max_iter: 60, ..SolverConfig::new(Method::Proposed, 1.0).unwrap() };
        let run = solver::run(&p, &Geometry::quadratic(), &cfg, &u0).unwrap();
        prop_assert!(solver::descent_violations(&run).is_empty());
        prop_assert!(solver::rate_check(&run).holds);
        let acc: Vec<_> = run.trace.iter().filter(|r| r.accepted).collect();
        let sum_dz: f64 = acc.iter().skip(1).map(|r| r.dz).sum();
        let drop = acc[0].energy - acc[acc.len() - 1].energy;
        let alpha = cfg.descent_factor();
        prop_assert!(sum_dz <= drop / alpha + 1e-9 * (1.0 + drop.abs() / alpha));
        let again = solver::run(&p, &Geometry::quadratic(), &cfg, &u0).unwrap();
        prop_assert_eq!(again.u_final, run.u_final);
    }

    #[test]
    fn lifting_matches_enumeration(
        h in 1usize..=2, w in 1usize..=2, l in 2usize..=6,
        seed in prop::collection::vec(0.0..1.0f64, 24),
        alpha in 0.0..2.0f64,
        iso in any::<bool>(),
    ) {
        let n = h * w;
        let norm = if iso { TvNorm::Isotropic } else { TvNorm::Anisotropic };
        let grid = LabelGrid::new(
            h, w, LabelGrid::uniform_labels(0.0, 1.0, l),
            seed[..n * l].to_vec(), vec![alpha; n], norm,
        ).unwrap();
        let cfg = LiftingConfig { labels: l, max_iter: 20_000, tol: 1e-10, check_every: 10 };
        let sol = solve_lifted(&grid, &cfg).unwrap();
        let (_, opt) = enumerate_optimum(&grid).unwrap();
        prop_assert!((sol.primal_energy - opt).abs() < 1e-6, "{} vs {}", sol.primal_energy, opt);
        prop_assert!(sol.gap >= -1e-9);
    }

    #[test]
    fn lifting_never_worse_than_anchor(seed in prop::collection::vec(0.0..1.0f64, 4 * 16 * 5)) {
        use nmm_core::lifting::{solve_lifted_warm, PdhgState};
        let grid = LabelGrid::new(4, 4, LabelGrid::uniform_labels(0.0, 1.0, 5),
            seed[..80].to_vec(), vec![0.3; 16], TvNorm::Isotropic).unwrap();
        let anchor: Vec<usize> = seed[80..96].iter().map(|&v| (v * 4.99) as usize).collect();
        let cfg = LiftingConfig { labels: 5, max_iter: 40, ..LiftingConfig::default() };
        let mut st = PdhgState::new(16, 5);
        let sol = solve_lifted_warm(&grid, &cfg, &mut st, Some(&anchor)).unwrap();
        prop_assert!(sol.primal_energy <= grid.energy(&anchor));
        prop_assert!(st.is_layered());
    }
}
