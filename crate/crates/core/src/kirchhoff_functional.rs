//! The limiting bending functional of a prestrained plate, evaluated on
//! displacement fields of the mid-surface, and a penalty minimizer over
//! approximate infinitesimal isometries.

use crate::error::{Error, Result};
use crate::field::{DisplacementField, FieldTag};
use crate::par;
use crate::quadratic_forms::{q2a, q2a_matrix, voigt, Material};
use crate::surface_geometry::ImmersionFrame;
use crate::{M2, M3, V3};

/// Solves `<p, ∂_i y0> = -<∂_i V, b0>`, `<p, b0> = 0` at every node.
pub fn p_from_v(v: &DisplacementField, frame: &ImmersionFrame) -> Result<Vec<V3>> {
    p_from_grad(&v.gradient(frame.grid()), frame)
}

fn frame_inverses(frame: &ImmersionFrame) -> Result<Vec<M3>> {
    par::try_map_indexed(frame.len(), |k| {
        frame.q0[k].try_inverse().ok_or_else(|| {
            let x = frame.grid().point(k);
            Error::FrameDegenerate { node: k, x1: x[0], x2: x[1], reason: "singular frame Q0".into() }
        })
    })
}

fn p_from_grad(dv: &[[V3; 2]], frame: &ImmersionFrame) -> Result<Vec<V3>> {
    let inv = frame_inverses(frame)?;
    Ok(par::map_indexed(frame.len(), |k| {
        let b = &frame.b0[k];
        inv[k].transpose() * V3::new(-dv[k][0].dot(b), -dv[k][1].dot(b), 0.0)
    }))
}

fn strain_of(dv: &[[V3; 2]], frame: &ImmersionFrame) -> Vec<M2> {
    par::map_indexed(frame.len(), |k| {
        let p = frame.point(k);
        let m = M2::from_fn(|i, j| p.dy0[i].dot(&dv[k][j]));
        0.5 * (m + m.transpose())
    })
}

/// Max interior `|sym((∇y0)^T ∇V)|` (entrywise).
pub fn constraint_residual(v: &DisplacementField, frame: &ImmersionFrame) -> f64 {
    let s = strain_of(&v.gradient(frame.grid()), frame);
    frame.grid().interior_max(|k| s[k].amax())
}

/// `sym((∇y0)^T ∇p + (∇V)^T ∇b0)` at every node.
pub fn bending_tensor(v: &DisplacementField, frame: &ImmersionFrame) -> Result<Vec<M2>> {
    let dv = v.gradient(frame.grid());
    let p = p_from_grad(&dv, frame)?;
    Ok(bending_from(&dv, &p, frame).into_iter().map(|m| 0.5 * (m + m.transpose())).collect())
}

/// Unsymmetrized bending tensor from the gradient of `V` and the field `p`.
fn bending_from(dv: &[[V3; 2]], p: &[V3], frame: &ImmersionFrame) -> Vec<M2> {
    let dp = frame.grid().gradient(p);
    par::map_indexed(frame.len(), |k| {
        let y = &frame.point(k).dy0;
        M2::from_fn(|i, j| y[i].dot(&dp[k][j]) + dv[k][i].dot(&frame.db0[k][j]))
    })
}

/// Value of the bending functional together with the constraint check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FunctionalValue {
    pub i_beta: f64,
    pub constraint_residual: f64,
    /// False when the field is not an infinitesimal isometry within `tolerance`.
    pub constraint_ok: bool,
}

/// Default tolerance on the constraint residual for [`evaluate_i_beta`].
pub const CONSTRAINT_TOLERANCE: f64 = 1e-6;

/// `(1/24) ∫ Q2A(M, A)` by the trapezoid rule.
pub fn evaluate_i_beta(v: &DisplacementField, frame: &ImmersionFrame, mat: &Material) -> Result<FunctionalValue> {
    let m = bending_tensor(v, frame)?;
    let dens = par::map_indexed(frame.len(), |k| q2a(&m[k], &frame.metric.a[k], mat).value);
    let residual = constraint_residual(v, frame);
    Ok(FunctionalValue {
        i_beta: frame.grid().integrate(&dens) / 24.0,
        constraint_residual: residual,
        constraint_ok: residual <= CONSTRAINT_TOLERANCE,
    })
}

/// Settings of [`minimize_i_beta`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinimizeOptions {
    pub penalty_weight: f64,
    pub max_iters: usize,
    /// Stop once the gradient norm falls below this fraction of the initial one.
    pub gradient_tol: f64,
    /// ... or below this absolute value.
    pub gradient_abs_tol: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self { penalty_weight: 1e3, max_iters: 200, gradient_tol: 1e-10, gradient_abs_tol: 1e-12 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub i_beta: f64,
    pub penalty: f64,
    pub step: f64,
}

#[derive(Clone, Debug)]
pub struct MinimizeResult {
    pub field: DisplacementField,
    pub trace: Vec<TraceRow>,
    /// Set when the line search could not decrease the objective.
    pub stagnated: bool,
}

/// Discrete penalized objective `I(V) + w ∫ |sym((∇y0)^T ∇V)|^2` with its
/// exact gradient (adjoint of every grid stencil involved).
struct Objective<'a> {
    frame: &'a ImmersionFrame,
    inv: Vec<M3>,
    forms: Vec<M3>,
    weights: Vec<f64>,
    penalty_weight: f64,
}

impl<'a> Objective<'a> {
    fn new(frame: &'a ImmersionFrame, mat: &Material, penalty_weight: f64) -> Result<Self> {
        let grid = frame.grid();
        Ok(Self {
            frame,
            inv: frame_inverses(frame)?,
            forms: par::map_indexed(frame.len(), |k| q2a_matrix(&frame.metric.a[k], mat)),
            weights: (0..grid.len()).map(|k| grid.trapezoid_weight(k)).collect(),
            penalty_weight,
        })
    }

    fn terms(&self, v: &[V3]) -> (f64, f64) {
        let grid = self.frame.grid();
        let dv = grid.gradient(v);
        let p = par::map_indexed(v.len(), |k| {
            let b = &self.frame.b0[k];
            self.inv[k].transpose() * V3::new(-dv[k][0].dot(b), -dv[k][1].dot(b), 0.0)
        });
        let m = bending_from(&dv, &p, self.frame);
        let s = strain_of(&dv, self.frame);
        let bend: Vec<f64> = (0..v.len())
            .map(|k| {
                let x = voigt(&m[k]);
                self.weights[k] * (x.transpose() * self.forms[k] * x)[(0, 0)] / 24.0
            })
            .collect();
        let pen: Vec<f64> = (0..v.len()).map(|k| self.weights[k] * s[k].norm_squared()).collect();
        (par::pairwise_sum(&bend), self.penalty_weight * par::pairwise_sum(&pen))
    }

    fn gradient(&self, v: &[V3]) -> Vec<V3> {
        let grid = self.frame.grid();
        let n = v.len();
        let dv = grid.gradient(v);
        let p = par::map_indexed(n, |k| {
            let b = &self.frame.b0[k];
            self.inv[k].transpose() * V3::new(-dv[k][0].dot(b), -dv[k][1].dot(b), 0.0)
        });
        let m = bending_from(&dv, &p, self.frame);
        let s = strain_of(&dv, self.frame);
        // sensitivities of the bending density to M (full matrix)
        let gm: Vec<M2> = (0..n)
            .map(|k| {
                let g = self.forms[k] * voigt(&m[k]) * (2.0 * self.weights[k] / 24.0);
                M2::new(g[0], 0.5 * g[2], 0.5 * g[2], g[1])
            })
            .collect();
        let dp_bar: Vec<[V3; 2]> = (0..n)
            .map(|k| {
                let y = &self.frame.point(k).dy0;
                [0, 1].map(|j| y[0] * gm[k][(0, j)] + y[1] * gm[k][(1, j)])
            })
            .collect();
        let p_bar = grid.gradient_adjoint(&dp_bar, V3::zeros());
        let dv_bar: Vec<[V3; 2]> = (0..n)
            .map(|k| {
                let db = &self.frame.db0[k];
                let y = &self.frame.point(k).dy0;
                let rhs_bar = self.inv[k] * p_bar[k];
                let pen = s[k] * (2.0 * self.penalty_weight * self.weights[k]);
                [0, 1].map(|i| {
                    db[0] * gm[k][(i, 0)] + db[1] * gm[k][(i, 1)] - self.frame.b0[k] * rhs_bar[i]
                        + y[0] * pen[(0, i)]
                        + y[1] * pen[(1, i)]
                })
            })
            .collect();
        grid.gradient_adjoint(&dv_bar, V3::zeros())
    }
}

fn dot(a: &[V3], b: &[V3]) -> f64 {
    let terms: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.dot(y)).collect();
    par::pairwise_sum(&terms)
}

/// Penalized objective value `(I_beta, penalty)` of a field on the grid.
pub fn penalized_objective(v: &DisplacementField, frame: &ImmersionFrame, mat: &Material, penalty_weight: f64) -> Result<(f64, f64)> {
    Ok(Objective::new(frame, mat, penalty_weight)?.terms(&v.values))
}

/// Gradient of [`penalized_objective`] with respect to the node values.
pub fn penalized_gradient(v: &DisplacementField, frame: &ImmersionFrame, mat: &Material, penalty_weight: f64) -> Result<Vec<V3>> {
    Ok(Objective::new(frame, mat, penalty_weight)?.gradient(&v.values))
}

/// Minimizes `I(V) + w ‖sym((∇y0)^T ∇V)‖^2` from `init` by nonlinear conjugate
/// gradients (Polak-Ribière, restarted on loss of descent). Each step starts
/// from the exact minimizer along the search line and backtracks until the
/// Armijo condition holds; objective values never increase between accepted
/// iterates. All derivatives are taken on grid values.
pub fn minimize_i_beta(init: &DisplacementField, frame: &ImmersionFrame, mat: &Material, opts: &MinimizeOptions) -> Result<MinimizeResult> {
    if !(opts.penalty_weight > 0.0) {
        return Err(Error::Config("penalty weight must be positive".into()));
    }
    let obj = Objective::new(frame, mat, opts.penalty_weight)?;
    let mut v = init.values.clone();
    let (mut bend, mut pen) = obj.terms(&v);
    let mut trace = vec![TraceRow { iter: 0, i_beta: bend, penalty: pen, step: 0.0 }];
    let mut g = obj.gradient(&v);
    let g0 = dot(&g, &g).sqrt();
    let mut d: Vec<V3> = g.iter().map(|x| -x).collect();
    let mut stagnated = false;
    for iter in 1..=opts.max_iters {
        let gg = dot(&g, &g);
        if gg.sqrt() <= (opts.gradient_tol * g0).max(opts.gradient_abs_tol) {
            break;
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            d = g.iter().map(|x| -x).collect();
            slope = -gg;
        }
        // the objective is quadratic, so its gradient at d is the Hessian action
        let curv = dot(&d, &obj.gradient(&d));
        let mut step = if curv > 0.0 { -slope / curv } else { 1.0 };
        let f0 = bend + pen;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<V3> = v.iter().zip(&d).map(|(a, b)| a + b * step).collect();
            let (b, p) = obj.terms(&trial);
            if b + p <= f0 + 1e-4 * step * slope {
                accepted = Some((trial, b, p));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, b, p)) = accepted else {
            stagnated = true;
            break;
        };
        v = trial;
        bend = b;
        pen = p;
        trace.push(TraceRow { iter, i_beta: bend, penalty: pen, step });
        let g_new = obj.gradient(&v);
        let y: Vec<V3> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let beta = (dot(&g_new, &y) / gg).max(0.0);
        d = g_new.iter().zip(&d).map(|(gn, dd)| -gn + dd * beta).collect();
        g = g_new;
    }
    Ok(MinimizeResult { field: DisplacementField::new(v, FieldTag::Optimizer), trace, stagnated })
}

/// Comparison with the linear shell bending form.
#[derive(Clone, Debug)]
pub struct ShellReport {
    /// Skew field with `Ã ∂_i y0 = ∂_i V` and `Ã b0 = p`.
    pub a_tilde: Vec<M3>,
    pub max_skew_defect: f64,
    /// `sym <(∂_j Ã) b0, ∂_i y0>`.
    pub director_form: Vec<M2>,
    /// Max interior `|director_form - sym M|`; vanishes up to discretization.
    pub max_identity_defect: f64,
    /// `sym <(∂_j Ã) n, ∂_i y0> - sym M`, the gap to the shell form.
    pub discrepancy: Vec<M2>,
    pub max_discrepancy: f64,
    /// True when the director is the unit normal everywhere.
    pub director_is_normal: bool,
}

/// Builds `Ã` and compares the plate bending argument `sym M` with the shell
/// form taken along the normal. Fails when `Ã` is not skew within `skew_tol`.
pub fn shell_compare(v: &DisplacementField, frame: &ImmersionFrame, skew_tol: f64) -> Result<ShellReport> {
    let grid = frame.grid();
    let dv = v.gradient(grid);
    let p = p_from_grad(&dv, frame)?;
    let inv = frame_inverses(frame)?;
    let a_tilde: Vec<M3> = (0..frame.len()).map(|k| M3::from_columns(&[dv[k][0], dv[k][1], p[k]]) * inv[k]).collect();
    let max_skew_defect = grid.interior_max(|k| (a_tilde[k] + a_tilde[k].transpose()).amax());
    if !(max_skew_defect <= skew_tol) {
        return Err(Error::ConstraintViolation { defect: max_skew_defect, tolerance: skew_tol });
    }
    let m = bending_from(&dv, &p, frame);
    let da = grid.gradient(&a_tilde);
    let sym = |x: M2| 0.5 * (x + x.transpose());
    let director_form: Vec<M2> = (0..frame.len())
        .map(|k| {
            let y = &frame.point(k).dy0;
            sym(M2::from_fn(|i, j| (da[k][j] * frame.b0[k]).dot(&y[i])))
        })
        .collect();
    let discrepancy: Vec<M2> = (0..frame.len())
        .map(|k| {
            let pt = frame.point(k);
            sym(M2::from_fn(|i, j| (da[k][j] * pt.normal).dot(&pt.dy0[i]))) - sym(m[k])
        })
        .collect();
    let max_identity_defect = grid.interior_max(|k| (director_form[k] - sym(m[k])).amax());
    let max_discrepancy = grid.interior_max(|k| discrepancy[k].amax());
    let director_is_normal = frame.b0.iter().zip(&frame.surface.points).all(|(b, p)| (b - p.normal).amax() < 1e-12);
    Ok(ShellReport {
        a_tilde,
        max_skew_defect,
        director_form,
        max_identity_defect,
        discrepancy,
        max_discrepancy,
        director_is_normal,
    })
}
