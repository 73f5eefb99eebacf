use prestrain::field::DisplacementField;
use prestrain::grid::{build_grid, observed_order, Domain};
use prestrain::kirchhoff_functional::*;
use prestrain::quadratic_forms::Material;
use prestrain::strain_solver::solve_strain;
use prestrain::surface_geometry::{build_immersion, Director, Height, ImmersionFrame};
use prestrain::{Error, M2, V3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn flat(n: usize) -> ImmersionFrame {
    let grid = build_grid(Domain::unit_square(), n, n).unwrap();
    build_immersion(&grid, &Height::Flat, &Director::Normal).unwrap()
}

fn cap(n: usize, director: Director) -> ImmersionFrame {
    let grid = build_grid(Domain::centered(0.5), n, n).unwrap();
    build_immersion(&grid, &Height::SphereCap { radius: 2.0 }, &director).unwrap()
}

fn paraboloid(frame: &ImmersionFrame) -> DisplacementField {
    DisplacementField::vertical(frame.grid(), |x| 0.5 * (x[0] * x[0] + x[1] * x[1]))
}

fn random_field(frame: &ImmersionFrame, seed: u64) -> DisplacementField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
    DisplacementField::from_fn(frame.grid(), |x| {
        V3::new(
            c[0] * (2.0 * x[0]).sin() + c[1] * x[1] * x[1],
            c[2] * x[0] * x[1] + c[3] * (1.5 * x[1]).cos(),
            c[4] * (x[0] + c[5] * x[1]).sin() + c[6] * x[0] * x[0] * x[1] + c[7] * (c[8] * x[1]).exp(),
        )
    })
}

#[test]
fn flat_paraboloid_values() {
    let f = flat(65);
    let v = paraboloid(&f);
    let r = evaluate_i_beta(&v, &f, &Material::default()).unwrap();
    assert!((r.i_beta - 1.0 / 6.0).abs() < 1e-3, "{}", r.i_beta);
    assert!(r.constraint_ok && r.constraint_residual <= 1e-12);
    let r = evaluate_i_beta(&v, &f, &Material::lame(1.0, 1.0).unwrap()).unwrap();
    assert!((r.i_beta - 5.0 / 18.0).abs() < 1e-3, "{}", r.i_beta);
}

#[test]
fn flat_p_is_minus_slope() {
    let f = flat(17);
    let v = DisplacementField::vertical(f.grid(), |x| x[0] * x[0] * x[1] - 0.5 * x[1]);
    let p = p_from_v(&v, &f).unwrap();
    let dv = v.gradient(f.grid());
    for k in 0..f.len() {
        assert!((p[k] - V3::new(-dv[k][0][2], -dv[k][1][2], 0.0)).amax() < 1e-13);
    }
    let c = DisplacementField::from_fn(f.grid(), |_| V3::new(1.0, 2.0, 3.0));
    assert!(p_from_v(&c, &f).unwrap().iter().all(|p| p.norm() < 1e-13));
}

#[test]
fn flat_trig_bending_converges() {
    // v = sin x1 cos x2 on the unit square, μ = 1, λ = 0
    let a = (1.0 - (2.0f64).sin() / 2.0) / 2.0;
    let b = (1.0 + (2.0f64).sin() / 2.0) / 2.0;
    let exact = a * b / 3.0;
    let mut hs = vec![];
    let mut errs = vec![];
    for n in [17, 33, 65] {
        let f = flat(n);
        let v = DisplacementField::vertical(f.grid(), |x| x[0].sin() * x[1].cos());
        hs.push(f.grid().mesh_size());
        errs.push((evaluate_i_beta(&v, &f, &Material::default()).unwrap().i_beta - exact).abs());
    }
    assert!(observed_order(&hs, &errs) > 1.8, "{errs:?}");
}

#[test]
fn rigid_motions_cost_nothing() {
    let frames = [flat(17), cap(17, Director::Normal), cap(17, Director::constant(V3::z()))];
    for f in &frames {
        let v = DisplacementField::rigid(&f.surface, V3::new(0.3, -1.1, 0.7), V3::new(1.0, 0.0, -2.0));
        assert!(constraint_residual(&v, f) <= 1e-10);
        let r = evaluate_i_beta(&v, f, &Material::lame(1.0, 0.5).unwrap()).unwrap();
        assert!(r.i_beta.abs() <= 1e-10, "{}", r.i_beta);
        let p = p_from_v(&v, f).unwrap();
        for (pk, b0) in p.iter().zip(&f.b0) {
            assert!((pk - V3::new(0.3, -1.1, 0.7).cross(b0)).amax() < 1e-12);
        }
    }
}

#[test]
fn stretching_violates_the_constraint() {
    let f = cap(17, Director::Normal);
    let v = DisplacementField::new(f.surface.points.iter().map(|p| p.y0).collect(), prestrain::field::FieldTag::Analytic)
        .with_grad(f.surface.points.iter().map(|p| p.dy0).collect());
    let max_g = f.grid().interior_max(|k| f.point(k).g.amax());
    assert!((constraint_residual(&v, &f) - max_g).abs() < 1e-14);
    assert!(!evaluate_i_beta(&v, &f, &Material::default()).unwrap().constraint_ok);
}

#[test]
fn adjoint_gradient_matches_differences() {
    let f = cap(13, Director::constant(V3::new(0.1, 0.0, 1.0)));
    let mat = Material::lame(1.0, 0.4).unwrap();
    let v = random_field(&f, 1).sampled();
    let d = random_field(&f, 2).sampled();
    let w = 7.0;
    let g = penalized_gradient(&v, &f, &mat, w).unwrap();
    let j = |t: f64| {
        let x = DisplacementField::new(v.values.iter().zip(&d.values).map(|(a, b)| a + b * t).collect(), v.tag);
        let (b, p) = penalized_objective(&x, &f, &mat, w).unwrap();
        b + p
    };
    // the objective is quadratic, so the central difference is exact
    let fd = (j(1e-3) - j(-1e-3)) / 2e-3;
    let an: f64 = g.iter().zip(&d.values).map(|(a, b)| a.dot(b)).sum();
    assert!((fd - an).abs() <= 1e-8 * an.abs().max(1.0), "fd {fd} adjoint {an}");
}

#[test]
fn minimizer_stays_put_at_rigid_motion() {
    let f = flat(17);
    let v = DisplacementField::rigid(&f.surface, V3::new(0.2, 0.5, -0.4), V3::zeros()).sampled();
    let r = minimize_i_beta(&v, &f, &Material::default(), &MinimizeOptions::default()).unwrap();
    assert_eq!(r.trace.len(), 1);
    assert!(r.trace[0].i_beta + r.trace[0].penalty <= 1e-20);
    assert!(!r.stagnated);
}

#[test]
fn minimizer_on_flat_bending_keeps_feasibility() {
    let f = flat(17);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v = DisplacementField::vertical(f.grid(), |x| c[0] * (3.0 * x[0]).sin() * x[1] + c[1] * x[0] * x[0] + c[2] * (c[3] * x[1]).cos());
    let opts = MinimizeOptions { max_iters: 40, ..Default::default() };
    let r = minimize_i_beta(&v, &f, &Material::default(), &opts).unwrap();
    for w in r.trace.windows(2) {
        assert!(w[1].i_beta + w[1].penalty <= w[0].i_beta + w[0].penalty);
        assert!(w[1].penalty <= 1e-10);
    }
    assert!(r.trace.last().unwrap().i_beta < 0.5 * r.trace[0].i_beta);
    assert!(constraint_residual(&r.field, &f) <= 1e-10);
}

#[test]
fn minimizer_from_kernel_field_is_monotone() {
    let f = cap(17, Director::constant(V3::z()));
    let bc: Vec<f64> = (0..f.len()).map(|k| 0.2 + f.grid().point(k)[0]).collect();
    let sol = solve_strain(&vec![M2::zeros(); f.len()], &f.surface, Some(&bc)).unwrap();
    let v = DisplacementField::new(sol.y, prestrain::field::FieldTag::StrainSolver);
    let opts = MinimizeOptions { max_iters: 30, penalty_weight: 100.0, ..Default::default() };
    let r = minimize_i_beta(&v, &f, &Material::default(), &opts).unwrap();
    assert!(r.trace.len() > 1);
    for w in r.trace.windows(2) {
        assert!(w[1].i_beta + w[1].penalty <= w[0].i_beta + w[0].penalty);
    }
}

#[test]
fn shell_identity_on_flat_plate() {
    let mut hs = vec![];
    let mut defects = vec![];
    for n in [17, 33, 65] {
        let f = flat(n);
        let v = DisplacementField::vertical(f.grid(), |x| (x[0] + 0.5 * x[1]).sin() * x[1]);
        let r = shell_compare(&v, &f, 1e-10).unwrap();
        assert!(r.director_is_normal);
        assert!(r.max_discrepancy < 1e-12 + r.max_identity_defect);
        hs.push(f.grid().mesh_size());
        defects.push(r.max_identity_defect);
    }
    assert!(defects.iter().all(|d| *d < 1e-12) || observed_order(&hs, &defects) > 1.8, "{defects:?}");
}

#[test]
fn shell_forms_of_rigid_motion_vanish() {
    let f = cap(17, Director::constant(V3::z()));
    let v = DisplacementField::rigid(&f.surface, V3::new(1.0, 2.0, -0.5), V3::zeros());
    let r = shell_compare(&v, &f, 1e-10).unwrap();
    assert!(r.max_skew_defect < 1e-12);
    assert!(r.max_identity_defect < 1e-10 && r.max_discrepancy < 1e-10);
}

#[test]
fn shell_form_differs_for_tilted_director() {
    let f = cap(33, Director::constant(V3::z()));
    assert!(!f.b0.iter().zip(&f.surface.points).all(|(b, p)| (b - p.normal).amax() < 1e-12));
    let bc: Vec<f64> = (0..f.len()).map(|k| f.grid().point(k)[0] * f.grid().point(k)[1]).collect();
    let sol = solve_strain(&vec![M2::zeros(); f.len()], &f.surface, Some(&bc)).unwrap();
    let v = DisplacementField::new(sol.y, prestrain::field::FieldTag::StrainSolver);
    let r = shell_compare(&v, &f, 1e-2).unwrap();
    assert!(r.max_discrepancy > 100.0 * r.max_identity_defect, "{} vs {}", r.max_discrepancy, r.max_identity_defect);
}

#[test]
fn shell_compare_rejects_stretching() {
    let f = flat(9);
    let v = DisplacementField::from_fn(f.grid(), |x| V3::new(x[0], 0.0, 0.0));
    assert!(matches!(shell_compare(&v, &f, 1e-6), Err(Error::ConstraintViolation { .. })));
}

#[test]
fn penalty_weight_must_be_positive() {
    let f = flat(9);
    let v = DisplacementField::zeros(f.len());
    let opts = MinimizeOptions { penalty_weight: 0.0, ..Default::default() };
    assert!(matches!(minimize_i_beta(&v, &f, &Material::default(), &opts), Err(Error::Config(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn functional_is_a_nonnegative_quadratic(seed in 0u64..1000, alpha in -3.0f64..3.0) {
        let f = cap(9, Director::constant(V3::new(0.2, -0.1, 1.0)));
        let mat = Material::lame(1.0, 0.3).unwrap();
        let v = random_field(&f, seed);
        let i1 = evaluate_i_beta(&v, &f, &mat).unwrap().i_beta;
        let i2 = evaluate_i_beta(&v.scaled(alpha), &f, &mat).unwrap().i_beta;
        prop_assert!(i1 >= 0.0);
        prop_assert!((i2 - alpha * alpha * i1).abs() <= 1e-10 * (1.0 + i1 * alpha * alpha));
    }

    #[test]
    fn p_is_orthogonal_to_director(seed in 0u64..1000) {
        let f = cap(9, Director::constant(V3::new(-0.3, 0.1, 1.0)));
        let p = p_from_v(&random_field(&f, seed), &f).unwrap();
        for (p, b) in p.iter().zip(&f.b0) {
            prop_assert!(p.dot(b).abs() <= 1e-12);
        }
    }
}
