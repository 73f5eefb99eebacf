use prestrain::energy3d::{gamma_convergence_study, EnergyModel, Quadrature};
use prestrain::field::DisplacementField;
use prestrain::grid::observed_order;
use prestrain::kirchhoff_functional::{
    bending_tensor, evaluate_i_beta, minimize_i_beta, shell_compare, MinimizeOptions, CONSTRAINT_TOLERANCE,
};
use prestrain::quadratic_forms::q2a;
use prestrain::recovery_builder::{
    d_h, expand_isometry, kh_diagnostic, kh_limit, limit_mismatch, recovery_for, verify_matching, vh_diagnostic, IsometryExpansion,
};
use prestrain::strain_solver::{rotation_scalar, StrainSolver};
use prestrain::surface_geometry::{riemann_flags, AdmissibilityTolerance, ImmersionFrame, SurfaceFrame};
use prestrain::{Error, Result, M2, V3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Config, DisplacementConfig, EnergyModelConfig, StrainConfig};
use crate::output::{num, Sink};

/// Skew tolerance of the shell comparison.
const SKEW_TOLERANCE: f64 = 1e-6;
/// `ε` at which the strain limit is extrapolated.
const LIMIT_EPS: f64 = 1e-3;

pub struct Run {
    pub config: Config,
    pub seed: u64,
    pub grid_refine: u32,
}

/// Exit status and one-line summary of a finished command.
pub struct Outcome {
    pub code: u8,
    pub summary: String,
}

impl Outcome {
    fn ok(summary: String) -> Self {
        Self { code: 0, summary }
    }
}

#[derive(Serialize)]
struct Meta<'a> {
    command: &'a str,
    scenario: &'a str,
    seed: u64,
    grid_refine: u32,
    resolution: usize,
}

impl Run {
    /// Grid sizes from the configured resolution through `grid_refine` halvings.
    fn resolutions(&self) -> Vec<usize> {
        (0..=self.grid_refine).map(|l| (self.config.resolution - 1) * (1 << l) + 1).collect()
    }

    fn finest(&self) -> usize {
        *self.resolutions().last().unwrap()
    }

    fn frame(&self, n: usize) -> Result<ImmersionFrame> {
        self.config.scenario()?.frame(n)
    }

    fn meta<'a>(&'a self, command: &'a str) -> Meta<'a> {
        Meta {
            command,
            scenario: &self.config.scenario,
            seed: self.seed,
            grid_refine: self.grid_refine,
            resolution: self.finest(),
        }
    }

    fn quadrature(&self) -> Quadrature {
        let q = self.config.quadrature;
        Quadrature {
            x3_points: q.x3_points,
            model: match q.model {
                EnergyModelConfig::Full => EnergyModel::Full,
                EnergyModelConfig::Quadratic => EnergyModel::Quadratic,
            },
        }
    }

    /// Isometry expansion of the configured displacement.
    fn expansion(&self, frame: &ImmersionFrame) -> Result<IsometryExpansion> {
        let grid = frame.grid();
        let order = self.config.order;
        let series = |v: DisplacementField| -> Result<IsometryExpansion> {
            if order == 1 {
                return Ok(IsometryExpansion::first_order(v));
            }
            let solver = StrainSolver::new(&frame.surface)?;
            expand_isometry(&v, frame, order, Some(&solver))
        };
        match &self.config.displacement {
            DisplacementConfig::Zero => series(DisplacementField::zeros(frame.len())),
            DisplacementConfig::Paraboloid { scale } => {
                let s = *scale;
                series(DisplacementField::vertical(grid, |x| 0.5 * s * (x[0] * x[0] + x[1] * x[1])))
            }
            DisplacementConfig::Cylinder { curvature } => IsometryExpansion::cylinder(frame, *curvature),
            DisplacementConfig::Rigid { w, c } => Ok(IsometryExpansion::rotation(frame, V3::from(*w), V3::from(*c))),
            DisplacementConfig::Kernel { boundary } => {
                let solver = StrainSolver::new(&frame.surface)?;
                let bc = boundary_values(&frame.surface, boundary);
                let v = solver.solve(&vec![M2::zeros(); frame.len()], Some(&bc))?.displacement();
                expand_isometry(&v, frame, order, Some(&solver))
            }
        }
    }
}

fn boundary_values(s: &SurfaceFrame, b: &[f64; 4]) -> Vec<f64> {
    s.points.iter().map(|p| b[0] + b[1] * p.x[0] + b[2] * p.x[1] + b[3] * p.x[0] * p.x[1]).collect()
}

fn require_admissible(frame: &ImmersionFrame) -> Result<()> {
    let r = riemann_flags(frame, AdmissibilityTolerance::default())?;
    if r.admissible {
        Ok(())
    } else {
        Err(Error::Metric(format!(
            "prestrain metric is not admissible: max |R| = {:.3e}, director strain = {:.3e}",
            r.max_abs_r, r.max_strain_residual
        )))
    }
}

fn require_isometry(v: &DisplacementField, frame: &ImmersionFrame) -> Result<()> {
    let r = prestrain::kirchhoff_functional::constraint_residual(v, frame);
    if r <= CONSTRAINT_TOLERANCE {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "displacement is not an infinitesimal isometry of this surface: constraint residual {r:.3e}"
        )))
    }
}

fn node_prefix(frame: &ImmersionFrame, k: usize) -> Vec<String> {
    let (i, j) = frame.grid().coords(k);
    let x = frame.grid().point(k);
    vec![i.to_string(), j.to_string(), num(x[0]), num(x[1])]
}

fn order_of(hs: &[f64], errs: &[f64]) -> Option<f64> {
    (hs.len() >= 2).then(|| observed_order(hs, errs)).filter(|o| o.is_finite())
}

#[derive(Serialize)]
struct GeometryLevel {
    n: usize,
    spacing: f64,
    max_abs_r: f64,
    max_strain_residual: f64,
    admissible: bool,
}

#[derive(Serialize)]
struct GeometryReport<'a> {
    #[serde(flatten)]
    meta: Meta<'a>,
    admissible: bool,
    max_abs_r: f64,
    curvature_threshold: f64,
    max_strain_residual: f64,
    levels: Vec<GeometryLevel>,
}

pub fn geometry(run: &Run, sink: &mut Sink) -> Result<Outcome> {
    let mut levels = vec![];
    let mut last = None;
    for n in run.resolutions() {
        let frame = run.frame(n)?;
        let r = riemann_flags(&frame, AdmissibilityTolerance::default())?;
        levels.push(GeometryLevel {
            n,
            spacing: frame.grid().mesh_size(),
            max_abs_r: r.max_abs_r,
            max_strain_residual: r.max_strain_residual,
            admissible: r.admissible,
        });
        last = Some((frame, r));
    }
    let (frame, r) = last.unwrap();
    let header = [
        "i", "j", "x1", "x2", "kappa", "g11", "g12", "g22", "b1", "b2", "b3", "r1212", "r1213", "r1223", "strain_residual",
    ];
    let rows = (0..frame.len()).map(|k| {
        let p = frame.point(k);
        let mut row = node_prefix(&frame, k);
        row.extend([p.kappa, p.g[(0, 0)], p.g[(0, 1)], p.g[(1, 1)]].map(num));
        row.extend(frame.b0[k].iter().map(|x| num(*x)));
        row.extend([r.r1212[k], r.r1213[k], r.r1223[k], r.strain_residual[k]].map(num));
        row
    });
    sink.csv("geometry.csv", &header, rows)?;
    sink.json(
        "geometry.json",
        &GeometryReport {
            meta: run.meta("geometry"),
            admissible: r.admissible,
            max_abs_r: r.max_abs_r,
            curvature_threshold: r.curvature_threshold,
            max_strain_residual: r.max_strain_residual,
            levels,
        },
    )?;
    let summary = format!("admissible: {} (max |R| {:.3e}, director strain {:.3e})", r.admissible, r.max_abs_r, r.max_strain_residual);
    Ok(Outcome { code: if r.admissible { 0 } else { 2 }, summary })
}

/// Smooth field whose strain drives the manufactured strain problem.
fn manufactured_gradient(x: [f64; 2]) -> [V3; 2] {
    let c = (x[0] + 0.2 * x[1]).cos();
    let e = (0.4 * x[0]).exp();
    [
        V3::new(c, x[1] * x[1], 0.4 * e * x[1]),
        V3::new(0.2 * c, 2.0 * x[0] * x[1] - 0.3 * x[1].sin(), e),
    ]
}

fn strain_problem(opt: &StrainConfig, s: &SurfaceFrame) -> (Vec<M2>, Option<Vec<f64>>) {
    match opt {
        StrainConfig::Zero { boundary } => (vec![M2::zeros(); s.len()], boundary.as_ref().map(|b| boundary_values(s, b))),
        StrainConfig::MetricMultiple { scale } => (s.points.iter().map(|p| p.g * *scale).collect(), None),
        StrainConfig::Manufactured => {
            let grad: Vec<[V3; 2]> = s.points.iter().map(|p| manufactured_gradient(p.x)).collect();
            let strain = s
                .points
                .iter()
                .zip(&grad)
                .map(|(p, d)| {
                    let m = M2::from_fn(|i, j| p.dy0[i].dot(&d[j]));
                    0.5 * (m + m.transpose())
                })
                .collect();
            (strain, Some(rotation_scalar(s, &grad)))
        }
    }
}

#[derive(Serialize)]
struct StrainLevel {
    n: usize,
    spacing: f64,
    residual: f64,
    integration_residual: f64,
}

#[derive(Serialize)]
struct StrainReport<'a> {
    #[serde(flatten)]
    meta: Meta<'a>,
    residual: f64,
    residual_order: Option<f64>,
    max_displacement: f64,
    levels: Vec<StrainLevel>,
}

pub fn strain(run: &Run, sink: &mut Sink) -> Result<Outcome> {
    let mut levels = vec![];
    let mut last = None;
    for n in run.resolutions() {
        let frame = run.frame(n)?;
        let s = frame.surface;
        let solver = StrainSolver::new(&s)?;
        let (u, bc) = strain_problem(&run.config.strain, &s);
        let sol = solver.solve(&u, bc.as_deref())?;
        levels.push(StrainLevel {
            n,
            spacing: s.grid.mesh_size(),
            residual: sol.residual,
            integration_residual: sol.integration_residual,
        });
        last = Some((s, sol));
    }
    let (s, sol) = last.unwrap();
    let hs: Vec<f64> = levels.iter().map(|l| l.spacing).collect();
    let res: Vec<f64> = levels.iter().map(|l| l.residual).collect();
    let header = ["i", "j", "x1", "x2", "v", "u1", "u2", "y1", "y2", "y3"];
    let rows = (0..s.len()).map(|k| {
        let (i, j) = s.grid.coords(k);
        let x = s.grid.point(k);
        let mut row = vec![i.to_string(), j.to_string(), num(x[0]), num(x[1]), num(sol.v[k])];
        row.extend(sol.u[k].iter().chain(sol.y[k].iter()).map(|x| num(*x)));
        row
    });
    sink.csv("strain.csv", &header, rows)?;
    let report = StrainReport {
        meta: run.meta("strain"),
        residual: sol.residual,
        residual_order: order_of(&hs, &res),
        max_displacement: sol.y.iter().map(|y| y.amax()).fold(0.0, f64::max),
        levels,
    };
    sink.json("strain.json", &report)?;
    let order = report.residual_order.map_or(String::new(), |o| format!(", observed order {o:.2}"));
    Ok(Outcome::ok(format!("strain residual {:.3e}{order}", report.residual)))
}

#[derive(Serialize)]
struct FunctionalLevel {
    n: usize,
    i_beta: f64,
    constraint_residual: f64,
}

#[derive(Serialize)]
struct ShellSummary {
    max_skew_defect: f64,
    max_identity_defect: f64,
    max_discrepancy: f64,
    director_is_normal: bool,
}

#[derive(Serialize)]
struct MinimizeSummary {
    iterations: usize,
    initial_i_beta: f64,
    final_i_beta: f64,
    final_constraint_residual: f64,
    stagnated: bool,
}

#[derive(Serialize)]
struct FunctionalReport<'a> {
    #[serde(flatten)]
    meta: Meta<'a>,
    mu: f64,
    lambda: f64,
    i_beta: f64,
    constraint_residual: f64,
    constraint_ok: bool,
    shell: Option<ShellSummary>,
    minimize: Option<MinimizeSummary>,
    levels: Vec<FunctionalLevel>,
}

/// Seeded smooth vertical perturbation vanishing on the boundary.
fn perturbation(frame: &ImmersionFrame, amplitude: f64, seed: u64) -> DisplacementField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coef: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
    let d = frame.grid().domain;
    let [l1, l2] = d.lengths();
    DisplacementField::vertical(frame.grid(), |x| {
        let (s, t) = ((x[0] - d.x1[0]) / l1, (x[1] - d.x2[0]) / l2);
        let mut acc = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                let pi = std::f64::consts::PI;
                acc += coef[3 * a + b] * ((a + 1) as f64 * pi * s).sin() * ((b + 1) as f64 * pi * t).sin();
            }
        }
        amplitude * acc
    })
}

pub fn functional(run: &Run, sink: &mut Sink) -> Result<Outcome> {
    let mat = run.config.material()?;
    let mut levels = vec![];
    let mut last = None;
    for n in run.resolutions() {
        let frame = run.frame(n)?;
        require_admissible(&frame)?;
        let exp = run.expansion(&frame)?;
        let value = evaluate_i_beta(&exp.v, &frame, &mat)?;
        levels.push(FunctionalLevel { n, i_beta: value.i_beta, constraint_residual: value.constraint_residual });
        last = Some((frame, exp.v, value));
    }
    let (frame, v, value) = last.unwrap();
    let m = bending_tensor(&v, &frame)?;
    let header = ["i", "j", "x1", "x2", "m11", "m12", "m22", "density"];
    let rows = (0..frame.len()).map(|k| {
        let mut row = node_prefix(&frame, k);
        let density = q2a(&m[k], &frame.metric.a[k], &mat).value / 24.0;
        row.extend([m[k][(0, 0)], m[k][(0, 1)], m[k][(1, 1)], density].map(num));
        row
    });
    sink.csv("functional.csv", &header, rows)?;
    let shell = shell_compare(&v, &frame, SKEW_TOLERANCE).ok().map(|r| ShellSummary {
        max_skew_defect: r.max_skew_defect,
        max_identity_defect: r.max_identity_defect,
        max_discrepancy: r.max_discrepancy,
        director_is_normal: r.director_is_normal,
    });
    let minimize = match run.config.minimize {
        None => None,
        Some(opt) => {
            let pert = perturbation(&frame, opt.perturbation, run.seed);
            let init = DisplacementField::new(
                v.values.iter().zip(&pert.values).map(|(a, b)| a + b).collect(),
                prestrain::field::FieldTag::Analytic,
            );
            let opts = MinimizeOptions { penalty_weight: opt.penalty_weight, max_iters: opt.max_iters, ..Default::default() };
            let res = minimize_i_beta(&init, &frame, &mat, &opts)?;
            sink.csv(
                "functional_trace.csv",
                &["iter", "i_beta", "penalty", "step"],
                res.trace.iter().map(|t| vec![t.iter.to_string(), num(t.i_beta), num(t.penalty), num(t.step)]),
            )?;
            let fin = evaluate_i_beta(&res.field, &frame, &mat)?;
            Some(MinimizeSummary {
                iterations: res.trace.len().saturating_sub(1),
                initial_i_beta: res.trace.first().map_or(f64::NAN, |t| t.i_beta),
                final_i_beta: fin.i_beta,
                final_constraint_residual: fin.constraint_residual,
                stagnated: res.stagnated,
            })
        }
    };
    sink.json(
        "functional.json",
        &FunctionalReport {
            meta: run.meta("functional"),
            mu: mat.mu,
            lambda: mat.lambda,
            i_beta: value.i_beta,
            constraint_residual: value.constraint_residual,
            constraint_ok: value.constraint_ok,
            shell,
            minimize,
            levels,
        },
    )?;
    Ok(Outcome::ok(format!(
        "I_beta = {:.10} (constraint residual {:.3e})",
        value.i_beta, value.constraint_residual
    )))
}

#[derive(Serialize)]
struct RecoverReport<'a> {
    #[serde(flatten)]
    meta: Meta<'a>,
    beta: f64,
    order: usize,
    matching_slope: f64,
    matching_passed: bool,
    strain_limit_mismatch: f64,
    warnings: Vec<String>,
}

pub fn recover(run: &Run, sink: &mut Sink) -> Result<Outcome> {
    let cfg = &run.config;
    let mat = cfg.material()?;
    let frame = run.frame(run.finest())?;
    require_admissible(&frame)?;
    let exp = run.expansion(&frame)?;
    require_isometry(&exp.v, &frame)?;
    let matching = verify_matching(&exp, &frame, &cfg.eps_list);
    sink.csv(
        "matching.csv",
        &["eps", "metric_defect"],
        matching.eps.iter().zip(&matching.defects).map(|(e, d)| vec![num(*e), num(*d)]),
    )?;
    let dh = d_h(&exp.v, &frame, &mat)?;
    let limit = kh_limit(&exp, &frame, &dh, LIMIT_EPS)?;
    let mismatch = limit_mismatch(&limit, &bending_tensor(&exp.v, &frame)?, &frame);
    let mut rows = vec![];
    let mut warnings = vec![];
    for &h in &cfg.h_list {
        let def = recovery_for(&exp, &frame, &dh, h, cfg.beta)?;
        if let Some(w) = &def.warning {
            warnings.push(w.clone());
        }
        let kh = kh_diagnostic(&def, &frame, &limit)?;
        let vh = vh_diagnostic(&def, &frame, &exp.v)?;
        rows.push(vec![num(h), num(def.eps), num(kh.deviation), num(kh.max_kh), num(kh.max_asymmetry), num(vh.deviation)]);
    }
    sink.csv("recover.csv", &["h", "eps", "kh_deviation", "max_kh", "max_asymmetry", "vh_deviation"], rows)?;
    sink.json(
        "recover.json",
        &RecoverReport {
            meta: run.meta("recover"),
            beta: cfg.beta,
            order: exp.order,
            matching_slope: matching.slope,
            matching_passed: matching.passed,
            strain_limit_mismatch: mismatch,
            warnings,
        },
    )?;
    Ok(Outcome::ok(format!(
        "matching slope {:.2} ({}), strain limit mismatch {mismatch:.3e}",
        matching.slope,
        if matching.passed { "ok" } else { "below order + 0.8" }
    )))
}

#[derive(Serialize)]
struct ConvergeReport<'a> {
    #[serde(flatten)]
    meta: Meta<'a>,
    beta: f64,
    mu: f64,
    lambda: f64,
    i_beta: f64,
    absolute: bool,
    fitted_order: f64,
    pass: bool,
    warnings: Vec<String>,
}

pub fn converge(run: &Run, sink: &mut Sink) -> Result<Outcome> {
    let cfg = &run.config;
    let mat = cfg.material()?;
    let frame = run.frame(run.finest())?;
    require_admissible(&frame)?;
    let exp = run.expansion(&frame)?;
    require_isometry(&exp.v, &frame)?;
    let study = gamma_convergence_study(&frame, &exp, cfg.beta, &cfg.h_list, &mat, &run.quadrature())?;
    sink.csv(
        "converge.csv",
        &["h", "e_h", "eps", "energy", "i_beta", "error"],
        study.rows.iter().map(|r| [r.h, r.e_h, r.eps, r.energy, r.i_beta, r.error].map(num).to_vec()),
    )?;
    sink.json(
        "converge.json",
        &ConvergeReport {
            meta: run.meta("converge"),
            beta: study.beta,
            mu: mat.mu,
            lambda: mat.lambda,
            i_beta: study.i_beta,
            absolute: study.absolute,
            fitted_order: study.fitted_order,
            pass: study.pass,
            warnings: study.warnings.clone(),
        },
    )?;
    let last = study.rows.last().map_or(f64::NAN, |r| r.error);
    Ok(Outcome::ok(format!(
        "{}: I_beta = {:.6}, final {} error {last:.3e}",
        if study.pass { "PASS" } else { "FAIL" },
        study.i_beta,
        if study.absolute { "absolute" } else { "relative" }
    )))
}
