use prestrain::grid::{build_grid, observed_order, Domain};
use prestrain::strain_solver::*;
use prestrain::surface_geometry::{sample_graph_immersion, Height, SurfaceFrame};
use prestrain::{Error, M2, V2, V3};

fn cap(n: usize) -> SurfaceFrame {
    let grid = build_grid(Domain::centered(0.5), n, n).unwrap();
    sample_graph_immersion(&grid, &Height::SphereCap { radius: 2.0 }).unwrap()
}

fn field(x: [f64; 2]) -> V3 {
    V3::new((x[0] + 0.2 * x[1]).sin(), x[0] * x[1] * x[1] + 0.3 * x[1].cos(), (0.4 * x[0]).exp() * x[1])
}

fn field_grad(x: [f64; 2]) -> [V3; 2] {
    let c = (x[0] + 0.2 * x[1]).cos();
    let e = (0.4 * x[0]).exp();
    [
        V3::new(c, x[1] * x[1], 0.4 * e * x[1]),
        V3::new(0.2 * c, 2.0 * x[0] * x[1] - 0.3 * x[1].sin(), e),
    ]
}

struct Manufactured {
    strain: Vec<M2>,
    v: Vec<f64>,
    u: Vec<V2>,
    y: Vec<V3>,
}

fn manufactured(s: &SurfaceFrame) -> Manufactured {
    let grad: Vec<[V3; 2]> = (0..s.grid.len()).map(|k| field_grad(s.grid.point(k))).collect();
    let strain = s
        .points
        .iter()
        .zip(&grad)
        .map(|(p, d)| {
            let m = M2::from_fn(|i, j| p.dy0[i].dot(&d[j]));
            0.5 * (m + m.transpose())
        })
        .collect();
    Manufactured {
        strain,
        v: rotation_scalar(s, &grad),
        u: normal_slope(s, &grad),
        y: (0..s.grid.len()).map(|k| field(s.grid.point(k))).collect(),
    }
}

#[test]
fn manufactured_solution_converges() {
    let mut hs = vec![];
    let (mut ev, mut eu, mut ey, mut res) = (vec![], vec![], vec![], vec![]);
    for n in [17, 33, 65] {
        let s = cap(n);
        let m = manufactured(&s);
        let solver = StrainSolver::new(&s).unwrap();
        let sol = solver.solve(&m.strain, Some(&m.v)).unwrap();
        hs.push(s.grid.mesh_size());
        ev.push(sol.v.iter().zip(&m.v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        eu.push(s.grid.interior_max(|k| (sol.u[k] - m.u[k]).amax()));
        let shift = m.y[0] - sol.y[0];
        ey.push(sol.y.iter().zip(&m.y).map(|(a, b)| (a + shift - b).amax()).fold(0.0, f64::max));
        res.push(sol.residual);
    }
    println!("v {ev:?}\nu {eu:?}\ny {ey:?}\nres {res:?}");
    assert!(observed_order(&hs, &ev) > 1.8, "v errors {ev:?}");
    assert!(observed_order(&hs, &eu) > 1.8, "u errors {eu:?}");
    assert!(observed_order(&hs, &ey) > 1.8, "y errors {ey:?}");
    assert!(observed_order(&hs, &res) > 1.8, "residuals {res:?}");
}

#[test]
fn rigid_field_round_trip() {
    let s = cap(33);
    let w = V3::new(0.4, -0.2, 0.9);
    let grad: Vec<[V3; 2]> = s.points.iter().map(|p| [w.cross(&p.dy0[0]), w.cross(&p.dy0[1])]).collect();
    let v = rotation_scalar(&s, &grad);
    let u = normal_slope(&s, &grad);
    let solver = StrainSolver::new(&s).unwrap();
    let zero = vec![M2::zeros(); s.grid.len()];
    let (y, _) = solver.reconstruct_y(&v, &u, &zero).unwrap();
    let target: Vec<V3> = s.points.iter().map(|p| w.cross(&p.y0)).collect();
    let shift = target[0] - y[0];
    let err = y.iter().zip(&target).map(|(a, b)| (a + shift - b).amax()).fold(0.0, f64::max);
    assert!(err < 1e-3, "{err}");
}

#[test]
fn kernel_from_boundary_data_is_an_isometry() {
    let mut hs = vec![];
    let mut res = vec![];
    for n in [17, 33, 65] {
        let s = cap(n);
        let bc: Vec<f64> = (0..s.grid.len()).map(|k| 0.3 + s.grid.point(k)[0] * s.grid.point(k)[1]).collect();
        let sol = solve_strain(&vec![M2::zeros(); s.grid.len()], &s, Some(&bc)).unwrap();
        assert!(sol.y.iter().any(|y| y.norm() > 1e-3));
        hs.push(s.grid.mesh_size());
        res.push(sol.residual);
    }
    assert!(observed_order(&hs, &res) > 1.8, "{res:?}");
}

#[test]
fn solver_is_linear() {
    let s = cap(17);
    let m = manufactured(&s);
    let solver = StrainSolver::new(&s).unwrap();
    let u2: Vec<M2> = s.points.iter().map(|p| p.g * (0.1 * p.x[0])).collect();
    let a = solver.solve(&m.strain, None).unwrap();
    let b = solver.solve(&u2, None).unwrap();
    let mix: Vec<M2> = m.strain.iter().zip(&u2).map(|(x, y)| x * 2.0 - y * 0.5).collect();
    let c = solver.solve(&mix, None).unwrap();
    for k in 0..s.grid.len() {
        assert!((c.v[k] - (2.0 * a.v[k] - 0.5 * b.v[k])).abs() < 1e-10);
        assert!((c.y[k] - (a.y[k] * 2.0 - b.y[k] * 0.5)).amax() < 1e-10);
    }
}

#[test]
fn multiple_of_metric_converges() {
    let mut hs = vec![];
    let mut res = vec![];
    for n in [17, 33, 65] {
        let s = cap(n);
        let strain: Vec<M2> = s.points.iter().map(|p| p.g * 0.05).collect();
        let sol = solve_strain(&strain, &s, None).unwrap();
        assert!(sol.y.iter().any(|y| y.norm() > 1e-4));
        hs.push(s.grid.mesh_size());
        res.push(sol.residual);
    }
    assert!(observed_order(&hs, &res) > 1.8, "{res:?}");
}

#[test]
fn saddle_is_not_elliptic() {
    let grid = build_grid(Domain::centered(0.5), 9, 9).unwrap();
    let s = sample_graph_immersion(&grid, &Height::Saddle).unwrap();
    let e = solve_strain(&vec![M2::zeros(); grid.len()], &s, None).unwrap_err();
    assert!(matches!(e, Error::NotElliptic(_)));
}
