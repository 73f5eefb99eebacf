use prestrain::energy3d::*;
use prestrain::field::DisplacementField;
use prestrain::grid::{build_grid, observed_order, Domain};
use prestrain::quadratic_forms::Material;
use prestrain::recovery_builder::{d_h, recovery_for, IsometryExpansion};
use prestrain::scenario::Scenario;
use prestrain::surface_geometry::{build_immersion, Director, Height, ImmersionFrame};
use prestrain::{Error, V3};
use nalgebra::Rotation3;

fn flat(n: usize) -> ImmersionFrame {
    let grid = build_grid(Domain::unit_square(), n, n).unwrap();
    build_immersion(&grid, &Height::Flat, &Director::Normal).unwrap()
}

const HS: [f64; 5] = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0];

#[test]
fn gauss_legendre_is_exact_for_polynomials() {
    for n in 1..=8 {
        let (x, w) = gauss_legendre(n).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for deg in 0..(2 * n) {
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 * 0.5f64.powi(deg as i32 + 1) / (deg as f64 + 1.0) };
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((q - exact).abs() < 1e-14, "n {n} degree {deg}: {q} vs {exact}");
        }
    }
    assert!(gauss_legendre(0).is_err());
}

#[test]
fn identity_deformation_costs_nothing() {
    let f = flat(17);
    let z = DisplacementField::zeros(f.len());
    let mat = Material::default();
    let dh = d_h(&z, &f, &mat).unwrap();
    let def = recovery_for(&IsometryExpansion::first_order(z), &f, &dh, 0.01, 3.0).unwrap();
    assert_eq!(elastic_energy(&def, &f, &mat, &Quadrature::default()).unwrap().energy, 0.0);
}

#[test]
fn rigid_motions_on_every_scenario() {
    let mat = Material::lame(1.0, 0.5).unwrap();
    for s in Scenario::all() {
        let f = s.frame(33).unwrap();
        let e = IsometryExpansion::rotation(&f, V3::new(0.3, -0.7, 0.4), V3::new(0.0, 1.0, 2.0));
        let study = gamma_convergence_study(&f, &e, 3.0, &HS, &mat, &Quadrature::default()).unwrap();
        assert!(study.absolute && study.pass, "{}", s.id);
        assert!(study.rows.iter().all(|r| r.energy <= 1e-8), "{}", s.id);
    }
}

#[test]
fn cylinder_energy_converges_to_the_functional() {
    let f = flat(65);
    let e = IsometryExpansion::cylinder(&f, 1.0).unwrap();
    let mat = Material::default();
    let mut studies = vec![];
    for beta in [2.5, 3.0, 3.5] {
        let s = gamma_convergence_study(&f, &e, beta, &HS, &mat, &Quadrature::default()).unwrap();
        assert!((s.i_beta - 1.0 / 12.0).abs() < 1e-12);
        assert!(s.pass && !s.absolute, "beta {beta}: {:?}", s.rows);
        // the error decays like ε^2 = h^(β-2)
        assert!((s.fitted_order - (beta - 2.0)).abs() < 0.05, "beta {beta}: order {}", s.fitted_order);
        studies.push(s);
    }
    assert!(cross_beta_spread(&studies) < 1e-4);
}

#[test]
fn first_order_paraboloid_energy_blows_up() {
    // the paraboloid bending of a flat plate has no second-order extension, so
    // the ε^2 metric defect makes the energy grow like h^(β-4)
    let f = flat(33);
    let v = DisplacementField::vertical(f.grid(), |x| 0.5 * (x[0] * x[0] + x[1] * x[1]));
    let s = gamma_convergence_study(&f, &IsometryExpansion::first_order(v), 3.0, &HS, &Material::default(), &Quadrature::default()).unwrap();
    let energies: Vec<f64> = s.rows.iter().map(|r| r.energy).collect();
    assert!(!s.pass);
    assert!((observed_order(&HS[2..], &energies[2..]) + 1.0).abs() < 0.05, "{energies:?}");
}

#[test]
fn quadratic_surrogate_agrees_in_the_limit() {
    let f = flat(33);
    let e = IsometryExpansion::cylinder(&f, 1.0).unwrap();
    let mat = Material::lame(1.0, 0.5).unwrap();
    let dh = d_h(&e.v, &f, &mat).unwrap();
    let quad = Quadrature { model: EnergyModel::Quadratic, ..Default::default() };
    let gaps: Vec<f64> = HS
        .iter()
        .map(|&h| {
            let def = recovery_for(&e, &f, &dh, h, 3.0).unwrap();
            let full = elastic_energy(&def, &f, &mat, &Quadrature::default()).unwrap().energy;
            (full - elastic_energy(&def, &f, &mat, &quad).unwrap().energy).abs()
        })
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn thickness_quadrature_is_converged() {
    let f = flat(33);
    let e = IsometryExpansion::cylinder(&f, 1.0).unwrap();
    let mat = Material::lame(1.0, 1.0).unwrap();
    let dh = d_h(&e.v, &f, &mat).unwrap();
    for h in [1.0 / 16.0, 1.0 / 128.0] {
        let def = recovery_for(&e, &f, &dh, h, 3.0).unwrap();
        let four = elastic_energy(&def, &f, &mat, &Quadrature::default()).unwrap().energy;
        let eight = elastic_energy(&def, &f, &mat, &Quadrature { x3_points: 8, ..Default::default() }).unwrap().energy;
        assert!((four - eight).abs() < 1e-10 * four.max(1.0), "{four} vs {eight}");
    }
}

#[test]
fn energy_is_frame_indifferent() {
    let f = flat(17);
    let v = DisplacementField::vertical(f.grid(), |x| (x[0] * x[1]).sin());
    let mat = Material::lame(1.0, 1.0).unwrap();
    let dh = d_h(&v, &f, &mat).unwrap();
    let def = recovery_for(&IsometryExpansion::first_order(v), &f, &dh, 1.0 / 32.0, 3.0).unwrap();
    let r = Rotation3::new(V3::new(0.9, -0.4, 1.3)).into_inner();
    let mut rot = def.clone();
    for k in 0..def.len() {
        rot.u[k] = r * def.u[k];
        rot.b[k] = r * def.b[k];
        rot.d[k] = r * def.d[k];
        rot.dh[k] = r * def.dh[k];
        rot.du[k] = def.du[k].map(|x| r * x);
        rot.db[k] = def.db[k].map(|x| r * x);
        rot.dd[k] = def.dd[k].map(|x| r * x);
    }
    let a = elastic_energy(&def, &f, &mat, &Quadrature::default()).unwrap().energy;
    let b = elastic_energy(&rot, &f, &mat, &Quadrature::default()).unwrap().energy;
    assert!((a - b).abs() <= 1e-10 * a.max(1.0));
}

#[test]
fn non_finite_gradient_is_located() {
    let f = flat(9);
    let z = DisplacementField::zeros(f.len());
    let dh = d_h(&z, &f, &Material::default()).unwrap();
    let mut def = recovery_for(&IsometryExpansion::first_order(z), &f, &dh, 0.01, 3.0).unwrap();
    def.du[40][0] = V3::new(f64::NAN, 0.0, 0.0);
    match elastic_energy(&def, &f, &Material::default(), &Quadrature::default()) {
        Err(Error::NonFinite { node, x1, x2 }) => {
            assert_eq!(node, 40);
            assert_eq!([x1, x2], f.grid().point(40));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn study_rejects_unsorted_thicknesses() {
    let f = flat(9);
    let e = IsometryExpansion::first_order(DisplacementField::zeros(f.len()));
    let mat = Material::default();
    for hs in [vec![], vec![0.01, 0.02], vec![0.01, 0.01]] {
        assert!(matches!(gamma_convergence_study(&f, &e, 3.0, &hs, &mat, &Quadrature::default()), Err(Error::Config(_))));
    }
}

#[test]
fn pass_rule() {
    assert!(study_passes(&[0.3, 0.1, 0.04], false));
    assert!(!study_passes(&[0.3, 0.1, 0.06], false));
    assert!(!study_passes(&[0.01, 0.03, 0.04], false));
    // non-monotone only before the last three
    assert!(study_passes(&[0.01, 0.2, 0.1, 0.04], false));
    // wiggles below the floor are allowed
    assert!(study_passes(&[1e-9, 3e-9, 2e-9], true));
    assert!(!study_passes(&[1e-9, 3e-8, 2e-8], true));
    assert!(!study_passes(&[], true));
}
