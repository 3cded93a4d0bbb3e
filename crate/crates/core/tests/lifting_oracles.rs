use nmm_core::geometry::Geometry;
use nmm_core::lifting::{
    build_lifted_majorizer, convex_reference, mm_step_lifted, solve_lifted, LabelGrid, LiftingConfig,
};
use nmm_core::linalg::Operator;
use nmm_core::problem::{BoxDomain, CompositeProblem, InnerMap, Regularizer, ScalarFn, SeparableMap, SmoothOuter, TotalVariation, TvNorm};
use nmm_core::solver::{majorizer_value, mm_step};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tv_problem(h: usize, w: usize, f: Vec<f64>, alpha: f64, rho: ScalarFn<f64>) -> CompositeProblem<f64> {
    let n = h * w;
    CompositeProblem::new(
        SmoothOuter::least_squares(Operator::Identity(n), f).unwrap(),
        InnerMap::Separable(SeparableMap::uniform(n, rho)),
        Regularizer::TotalVariation(TotalVariation::new(h, w, alpha)),
        BoxDomain::uniform(n, 0.0, 2.0).unwrap(),
    )
    .unwrap()
}

#[test]
fn zero_data_unary_is_proximity() {
    let p = CompositeProblem::new(
        SmoothOuter::least_squares(Operator::Diagonal(vec![0.0; 2]), vec![0.0; 2]).unwrap(),
        InnerMap::Separable(SeparableMap::identity(2)),
        Regularizer::TotalVariation(TotalVariation::new(1, 2, 0.1)),
        BoxDomain::uniform(2, 0.0, 2.0).unwrap(),
    )
    .unwrap();
    let tau = 0.5;
    let uk = [0.4f64, 1.3];
    let grid = build_lifted_majorizer(&p, &Geometry::quadratic(), tau, &uk, 5).unwrap();
    for i in 0..2 {
        for (k, &l) in grid.labels().iter().enumerate() {
            let want = (l - uk[i]).powi(2) / (2.0 * tau);
            assert!((grid.unary(i, k) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn single_pixel_table_by_hand() {
    // ρ = exp, G = ½(v − 2)², h = ½v², τ = 0.5, u_k = 0, labels {0, 1, 2}.
    let p = tv_problem(1, 1, vec![2.0], 0.0, ScalarFn::exp());
    let grid = build_lifted_majorizer(&p, &Geometry::quadratic(), 0.5, &[0.0], 3).unwrap();
    for (k, l) in [0.0f64, 1.0, 2.0].into_iter().enumerate() {
        let r = l.exp();
        let want = (r - 1.0).powi(2) + (1.0 - 2.0) * r;
        assert!((grid.unary(0, k) - want).abs() < 1e-12);
    }
    // Discrete energy at a label equals the continuous majorizer there.
    let m = majorizer_value(&p, &Geometry::quadratic(), 0.5, &[0.0], &[1.0]).unwrap();
    assert!((grid.energy(&[1]) - m).abs() < 1e-12);
}

#[test]
fn zero_alpha_agrees_with_label_restricted_mm_step() {
    let f = vec![0.3, 1.7, 0.9, 1.1];
    let p = tv_problem(2, 2, f, 0.0, ScalarFn::identity());
    let uk = [1.0, 0.2, 0.5, 1.9];
    let cfg = LiftingConfig { labels: 21, ..LiftingConfig::default() };
    let step = mm_step_lifted(&p, &Geometry::quadratic(), 0.9, &uk, &cfg).unwrap();
    let grid = build_lifted_majorizer(&p, &Geometry::quadratic(), 0.9, &uk, 21).unwrap();
    assert_eq!(step.solution.labels, grid.argmin_unary());
    // with a separable zero regularizer the continuous step lands within a label spacing
    let sep = CompositeProblem::new(
        p.outer().clone(),
        p.inner().clone(),
        Regularizer::Zero,
        p.bounds().clone(),
    )
    .unwrap();
    let cont = mm_step(&sep, &Geometry::quadratic(), 0.9, &uk).unwrap();
    for i in 0..4 {
        assert!((step.solution.u[i] - cont[i]).abs() <= 0.05 + 1e-12);
    }
}

#[test]
fn constant_data_keeps_constant_image() {
    let p = tv_problem(3, 3, vec![1.3; 9], 0.2, ScalarFn::identity());
    let step = mm_step_lifted(&p, &Geometry::quadratic(), 0.9, &[0.5; 9], &LiftingConfig::default()).unwrap();
    assert!(step.u_next.iter().all(|&v| v == step.u_next[0]));
}

#[test]
fn toy_problems_do_not_increase_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let f: Vec<f64> = (0..16).map(|_| rng.random_range(-0.9..0.9)).collect();
        let p = tv_problem(4, 4, f, rng.random_range(0.0..0.3), ScalarFn::sin());
        let uk: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..2.0)).collect();
        let cfg = LiftingConfig { labels: 32, max_iter: 300, ..LiftingConfig::default() };
        let step = mm_step_lifted(&p, &Geometry::quadratic(), 0.99, &uk, &cfg).unwrap();
        let e = p.energy(&uk).unwrap();
        let grid = build_lifted_majorizer(&p, &Geometry::quadratic(), 0.99, &uk, 32).unwrap();
        let anchor_e = grid.energy(&grid.nearest_labels(&uk));
        assert!(step.solution.primal_energy <= anchor_e);
        // continuous guard: only a label-rounding loss may remain
        if step.majorizer <= e {
            assert!(p.energy(&step.u_next).unwrap() <= e + 1e-12);
        }
    }
}

#[test]
fn convex_unaries_match_reference_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..3 {
        let labels = LabelGrid::uniform_labels(0.0, 1.0, 24);
        let f: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..1.0)).collect();
        let unary: Vec<f64> = f
            .iter()
            .flat_map(|&fi| labels.iter().map(move |&l| (l - fi).powi(2)))
            .collect();
        let grid = LabelGrid::new(8, 8, labels, unary, vec![0.05; 64], TvNorm::Anisotropic).unwrap();
        let cfg = LiftingConfig { labels: 24, max_iter: 20_000, tol: 1e-10, check_every: 10 };
        let sol = solve_lifted(&grid, &cfg).unwrap();
        let (_, e_ref) = convex_reference(&grid, 8000);
        assert!(((sol.primal_energy - e_ref) / e_ref).abs() < 1e-4, "{} vs {e_ref}", sol.primal_energy);
    }
}
