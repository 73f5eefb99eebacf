//! Recovery sequences: higher-order isometries matched to an infinitesimal
//! isometry `V`, the perturbed director and the 3D deformations built from
//! them, plus the strain and average-displacement diagnostics.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Rotation3};

use crate::energy3d::gauss_legendre;
use crate::error::{Error, Result};
use crate::field::DisplacementField;
use crate::grid::observed_order;
use crate::kirchhoff_functional::bending_tensor;
use crate::par;
use crate::quadratic_forms::{q2a, Material};
use crate::strain_solver::StrainSolver;
use crate::surface_geometry::{completion_field, director_from, unit_normal, Height, ImmersionFrame};
use crate::{M2, M3, V3};

/// Beyond this `ε` the expansion of the director is not trusted.
pub const EPS_MAX: f64 = 0.2;

/// Node values and gradients of an exact isometry family at one `ε`.
pub type FamilyFn = dyn Fn(f64) -> (Vec<V3>, Vec<[V3; 2]>) + Send + Sync;

/// How `u_ε` is produced from `V`.
#[derive(Clone)]
pub enum MatchingPath {
    /// Truncated series `y0 + εV + Σ_{j≥2} ε^j w_j`.
    Series,
    /// `exp(εŴ) y0 + εc` for `V = W × y0 + c`.
    Rotation { w: V3, c: V3 },
    /// A known family of exact isometries with `V` as its `ε`-derivative at 0.
    Exact(Arc<FamilyFn>),
}

impl fmt::Debug for MatchingPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatchingPath::Series => f.write_str("Series"),
            MatchingPath::Rotation { w, c } => f.debug_struct("Rotation").field("w", w).field("c", c).finish(),
            MatchingPath::Exact(_) => f.write_str("Exact(..)"),
        }
    }
}

/// `ε`-independent data from which `u_ε` is evaluated.
#[derive(Clone, Debug)]
pub struct IsometryExpansion {
    pub order: usize,
    pub v: DisplacementField,
    /// `w_2, ..., w_m` of the series path.
    pub corrections: Vec<DisplacementField>,
    pub path: MatchingPath,
}

/// `u_ε` at one value of `ε`.
#[derive(Clone, Debug)]
pub struct MatchedIsometry {
    pub order: usize,
    pub eps: f64,
    pub corrections: Vec<DisplacementField>,
    pub values: Vec<V3>,
    pub grad: Vec<[V3; 2]>,
    /// Max `|(∇u_ε)^T ∇u_ε - g|` over all nodes.
    pub metric_defect: f64,
    /// True on the rotation and exact-family paths.
    pub exact: bool,
}

fn tangential_defect(grad: &[V3; 2], g: &M2) -> M2 {
    M2::from_fn(|i, j| grad[i].dot(&grad[j])) - g
}

fn max_defect(frame: &ImmersionFrame, grad: &[[V3; 2]]) -> f64 {
    let d = par::map_indexed(frame.len(), |k| tangential_defect(&grad[k], &frame.point(k).g).amax());
    d.into_iter().fold(0.0, f64::max)
}

impl IsometryExpansion {
    /// First-order expansion `y0 + εV`, no corrections.
    pub fn first_order(v: DisplacementField) -> Self {
        Self { order: 1, v, corrections: vec![], path: MatchingPath::Series }
    }

    /// Exact rotation path for `V = W × y0 + c`.
    pub fn rotation(frame: &ImmersionFrame, w: V3, c: V3) -> Self {
        let v = DisplacementField::rigid(&frame.surface, w, c);
        Self { order: 1, v, corrections: vec![], path: MatchingPath::Rotation { w, c } }
    }

    /// Bending of a flat plate onto a cylinder of curvature `k` about the
    /// `x2` axis: `u_ε = (sin(εk x1)/(εk), x2, (1 - cos(εk x1))/(εk))`, so that
    /// `V = (0, 0, k x1^2 / 2)`.
    pub fn cylinder(frame: &ImmersionFrame, k: f64) -> Result<Self> {
        if !matches!(frame.surface.height, Height::Flat) {
            return Err(Error::Config("the cylinder family needs the flat mid-surface".into()));
        }
        let grid = frame.grid().clone();
        let v = DisplacementField::vertical(&grid, |x| 0.5 * k * x[0] * x[0])
            .with_grad((0..grid.len()).map(|n| [V3::new(0.0, 0.0, k * grid.point(n)[0]), V3::zeros()]).collect());
        let family = move |eps: f64| {
            let a = eps * k;
            let pts: Vec<[f64; 2]> = (0..grid.len()).map(|n| grid.point(n)).collect();
            if a == 0.0 {
                let values = pts.iter().map(|x| V3::new(x[0], x[1], 0.0)).collect();
                return (values, vec![[V3::x(), V3::y()]; pts.len()]);
            }
            let values = pts.iter().map(|x| V3::new((a * x[0]).sin() / a, x[1], (1.0 - (a * x[0]).cos()) / a)).collect();
            let grad = pts.iter().map(|x| [V3::new((a * x[0]).cos(), 0.0, (a * x[0]).sin()), V3::y()]).collect();
            (values, grad)
        };
        Ok(Self { order: 1, v, corrections: vec![], path: MatchingPath::Exact(Arc::new(family)) })
    }

    fn gradients(&self, frame: &ImmersionFrame) -> (Vec<[V3; 2]>, Vec<Vec<[V3; 2]>>) {
        let grid = frame.grid();
        (self.v.gradient(grid), self.corrections.iter().map(|w| w.gradient(grid)).collect())
    }

    fn grad_at(&self, frame: &ImmersionFrame, dv: &[[V3; 2]], dw: &[Vec<[V3; 2]>], eps: f64) -> Vec<[V3; 2]> {
        par::map_indexed(frame.len(), |k| {
            let y = frame.point(k).dy0;
            [0, 1].map(|i| {
                let mut acc = y[i] + dv[k][i] * eps;
                let mut e = eps;
                for w in dw {
                    e *= eps;
                    acc += w[k][i] * e;
                }
                acc
            })
        })
    }

    /// Evaluates `u_ε` and its metric defect.
    pub fn at(&self, frame: &ImmersionFrame, eps: f64) -> MatchedIsometry {
        let exact = match &self.path {
            MatchingPath::Series => None,
            MatchingPath::Rotation { w, c } => {
                let r = Rotation3::new(w * eps).into_inner();
                let values = frame.surface.points.iter().map(|p| r * p.y0 + c * eps).collect();
                let grad = frame.surface.points.iter().map(|p| [r * p.dy0[0], r * p.dy0[1]]).collect();
                Some((values, grad))
            }
            MatchingPath::Exact(family) => Some(family(eps)),
        };
        if let Some((values, grad)) = exact {
            let metric_defect = max_defect(frame, &grad);
            return MatchedIsometry { order: self.order, eps, corrections: vec![], values, grad, metric_defect, exact: true };
        }
        let (dv, dw) = self.gradients(frame);
        let grad = self.grad_at(frame, &dv, &dw, eps);
        let values = par::map_indexed(frame.len(), |k| {
            let mut acc = frame.point(k).y0 + self.v.values[k] * eps;
            let mut e = eps;
            for w in &self.corrections {
                e *= eps;
                acc += w.values[k] * e;
            }
            acc
        });
        let metric_defect = max_defect(frame, &grad);
        MatchedIsometry {
            order: self.order,
            eps,
            corrections: self.corrections.clone(),
            values,
            grad,
            metric_defect,
            exact: false,
        }
    }

    /// Coefficient of `ε^i` in `(∇u_ε)^T ∇u_ε - g` for the current expansion,
    /// extracted from samples of the defect at `2(i-1)+1` symmetric values
    /// of `ε` (the defect is a polynomial of that degree).
    pub fn defect_coefficient(&self, frame: &ImmersionFrame, i: usize) -> Result<Vec<M2>> {
        if !matches!(self.path, MatchingPath::Series) {
            return Err(Error::Config("only the series path has a defect expansion".into()));
        }
        let degree = 2 * (self.corrections.len() + 1);
        if i > degree {
            return Ok(vec![M2::zeros(); frame.len()]);
        }
        let half = degree / 2;
        let ts: Vec<f64> = (0..=degree).map(|s| s as f64 - half as f64).collect();
        let vander = DMatrix::from_fn(ts.len(), ts.len(), |r, c| ts[r].powi(c as i32));
        let lu = vander.lu();
        let (dv, dw) = self.gradients(frame);
        let samples: Vec<Vec<M2>> = ts
            .iter()
            .map(|&t| {
                let grad = self.grad_at(frame, &dv, &dw, t);
                par::map_indexed(frame.len(), |k| tangential_defect(&grad[k], &frame.point(k).g))
            })
            .collect();
        let out = par::map_indexed(frame.len(), |k| {
            let mut m = M2::zeros();
            for a in 0..2 {
                for b in a..2 {
                    let rhs = DVector::from_iterator(ts.len(), samples.iter().map(|s| s[k][(a, b)]));
                    let coef = lu.solve(&rhs).expect("distinct sample points")[i];
                    m[(a, b)] = coef;
                    m[(b, a)] = coef;
                }
            }
            m
        });
        Ok(out)
    }
}

/// Builds the corrections `w_2..w_m`: stage `i` solves `sym((∇y0)^T ∇w_i) = -D_i / 2`
/// with `D_i` the order-`i` defect of the expansion so far.
pub fn expand_isometry(v: &DisplacementField, frame: &ImmersionFrame, m: usize, solver: Option<&StrainSolver>) -> Result<IsometryExpansion> {
    if m == 0 {
        return Err(Error::Config("matching order must be at least 1".into()));
    }
    let mut exp = IsometryExpansion::first_order(v.clone());
    exp.order = m;
    if m == 1 {
        return Ok(exp);
    }
    let solver = solver.ok_or_else(|| Error::Config(format!("order {m} matching needs a strain solver")))?;
    for i in 2..=m {
        let d = exp.defect_coefficient(frame, i)?;
        let strain: Vec<M2> = d.iter().map(|x| x * -0.5).collect();
        let sol = solver.solve(&strain, None)?;
        exp.corrections.push(sol.displacement());
    }
    Ok(exp)
}

/// `u_ε` of order `m` at one `ε`; orders above one need `solver`.
pub fn match_isometry(v: &DisplacementField, frame: &ImmersionFrame, m: usize, eps: f64, solver: Option<&StrainSolver>) -> Result<MatchedIsometry> {
    Ok(expand_isometry(v, frame, m, solver)?.at(frame, eps))
}

/// Defects of an expansion over an `ε` sweep and their log-log slope.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchingReport {
    pub eps: Vec<f64>,
    pub defects: Vec<f64>,
    pub slope: f64,
    pub passed: bool,
}

/// Fits the defect slope over `eps`; passes when it is at least `m + 0.8`.
pub fn verify_matching(exp: &IsometryExpansion, frame: &ImmersionFrame, eps: &[f64]) -> MatchingReport {
    let defects: Vec<f64> = eps.iter().map(|&e| exp.at(frame, e).metric_defect).collect();
    let slope = observed_order(eps, &defects);
    MatchingReport { eps: eps.to_vec(), defects, slope, passed: slope >= exp.order as f64 + 0.8 }
}

/// Perturbed director `b_ε` completing `∇u_ε` to the prestrain metric. For
/// order two and above the tangential block of `G` is replaced by
/// `(∇u_ε)^T ∇u_ε`, so the remaining defect does not leak into `b_ε`.
pub fn director_eps(matched: &MatchedIsometry, frame: &ImmersionFrame) -> Result<Vec<V3>> {
    let absorb = matched.order >= 2 && !matched.exact && matched.eps != 0.0;
    par::try_map_indexed(frame.len(), |k| {
        let du = &matched.grad[k];
        let x = frame.grid().point(k);
        if unit_normal(du).is_none() {
            return Err(Error::FrameDegenerate { node: k, x1: x[0], x2: x[1], reason: "tangent plane of u_eps is degenerate".into() });
        }
        let gi = if absorb {
            let mut g = frame.metric.g[k];
            let t = M2::from_fn(|i, j| du[i].dot(&du[j]));
            g.fixed_view_mut::<2, 2>(0, 0).copy_from(&t);
            g.try_inverse().ok_or_else(|| Error::Metric(format!("corrected metric is singular at node {k}")))?
        } else {
            frame.metric.ginv[k]
        };
        if !(gi[(2, 2)] > 0.0) {
            return Err(Error::Metric(format!("G^33 = {} is not positive at node {k}", gi[(2, 2)])));
        }
        Ok(director_from(du, &gi))
    })
}

/// `d_ε = -(Q_ε^T)^{-1} (<∂_1 b_ε, b_ε>, <∂_2 b_ε, b_ε>, 0)` with grid derivatives of `b_ε`.
pub fn d_eps(matched: &MatchedIsometry, b_eps: &[V3], frame: &ImmersionFrame) -> Result<Vec<V3>> {
    let db = frame.grid().gradient(b_eps);
    par::try_map_indexed(frame.len(), |k| {
        completion_field(&matched.grad[k], &b_eps[k], &db[k]).ok_or_else(|| {
            let x = frame.grid().point(k);
            Error::FrameDegenerate { node: k, x1: x[0], x2: x[1], reason: "Q_eps is singular".into() }
        })
    })
}

/// `d^h = (Q0^T)^{-1} c(M)`, with `c` the minimizing completion of the bending
/// tensor. Chosen independent of `h`.
pub fn d_h(v: &DisplacementField, frame: &ImmersionFrame, mat: &Material) -> Result<Vec<V3>> {
    let m = bending_tensor(v, frame)?;
    par::try_map_indexed(frame.len(), |k| {
        let c = q2a(&m[k], &frame.metric.a[k], mat).c;
        frame.q0[k].transpose().lu().solve(&c).ok_or_else(|| {
            let x = frame.grid().point(k);
            Error::FrameDegenerate { node: k, x1: x[0], x2: x[1], reason: "singular frame Q0".into() }
        })
    })
}

/// `ε = h^{β/2 - 1}`, the scaling that goes with `e^h = h^β`.
pub fn eps_for(h: f64, beta: f64) -> f64 {
    h.powf(beta / 2.0 - 1.0)
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 2.0 && beta < 4.0) {
        return Err(Error::Config(format!("beta must lie in (2, 4), got {beta}")));
    }
    Ok(())
}

/// `u^h(x', x3) = u_ε + x3 b_ε + (x3^2/2)(d_ε + ε d^h)` on nodes, with
/// physical thickness coordinate `x3 ∈ [-h/2, h/2]`.
#[derive(Clone, Debug)]
pub struct RecoveryDeformation {
    pub h: f64,
    pub beta: f64,
    pub eps: f64,
    pub e_h: f64,
    pub u: Vec<V3>,
    pub du: Vec<[V3; 2]>,
    pub b: Vec<V3>,
    pub db: Vec<[V3; 2]>,
    pub d: Vec<V3>,
    pub dh: Vec<V3>,
    /// Grid derivatives of `d_ε + ε d^h`.
    pub dd: Vec<[V3; 2]>,
    /// Set when `ε ≥ EPS_MAX`.
    pub warning: Option<String>,
}

impl RecoveryDeformation {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    fn second(&self, k: usize) -> V3 {
        self.d[k] + self.dh[k] * self.eps
    }

    pub fn position(&self, k: usize, x3: f64) -> V3 {
        self.u[k] + self.b[k] * x3 + self.second(k) * (0.5 * x3 * x3)
    }

    /// `∇u^h` at node `k` and height `x3`.
    pub fn gradient(&self, k: usize, x3: f64) -> M3 {
        let q = 0.5 * x3 * x3;
        M3::from_columns(&[
            self.du[k][0] + self.db[k][0] * x3 + self.dd[k][0] * q,
            self.du[k][1] + self.db[k][1] * x3 + self.dd[k][1] * q,
            self.b[k] + self.second(k) * x3,
        ])
    }
}

/// Assembles `u^h`. `matched.eps` must equal `h^{β/2-1}`.
pub fn build_uh(h: f64, beta: f64, matched: &MatchedIsometry, b_eps: &[V3], d_eps: &[V3], dh: &[V3], frame: &ImmersionFrame) -> Result<RecoveryDeformation> {
    check_beta(beta)?;
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::Config(format!("thickness must lie in (0, 1), got {h}")));
    }
    let eps = eps_for(h, beta);
    if (matched.eps - eps).abs() > 1e-12 * eps {
        return Err(Error::Config(format!("matched isometry built for eps = {}, but h = {h}, beta = {beta} needs {eps}", matched.eps)));
    }
    let n = frame.len();
    if b_eps.len() != n || d_eps.len() != n || dh.len() != n {
        return Err(Error::Input("component fields sampled on different grids".into()));
    }
    let grid = frame.grid();
    let second: Vec<V3> = d_eps.iter().zip(dh).map(|(d, x)| d + x * eps).collect();
    let warning = (eps >= EPS_MAX).then(|| format!("eps = {eps:.3} is outside the expansion regime (eps < {EPS_MAX})"));
    Ok(RecoveryDeformation {
        h,
        beta,
        eps,
        e_h: h.powf(beta),
        u: matched.values.clone(),
        du: matched.grad.clone(),
        b: b_eps.to_vec(),
        db: grid.gradient(b_eps),
        d: d_eps.to_vec(),
        dh: dh.to_vec(),
        dd: grid.gradient(&second),
        warning,
    })
}

/// Full recovery deformation for thickness `h` from an expansion and `d^h`.
pub fn recovery_for(exp: &IsometryExpansion, frame: &ImmersionFrame, dh: &[V3], h: f64, beta: f64) -> Result<RecoveryDeformation> {
    check_beta(beta)?;
    let matched = exp.at(frame, eps_for(h, beta));
    let b = director_eps(&matched, frame)?;
    let d = d_eps(&matched, &b, frame)?;
    build_uh(h, beta, &matched, &b, &d, dh, frame)
}

/// Number of thickness points used by the diagnostics.
pub const DIAGNOSTIC_POINTS: usize = 4;

/// Scaled strain `K^h / (2 sqrt(e^h))` at the thickness quadrature points and
/// its comparison with the limit `t L` (`t = x3/h`).
#[derive(Clone, Debug)]
pub struct GammaDiagnostics {
    /// Scaled thickness coordinates `t ∈ [-1/2, 1/2]`.
    pub t: Vec<f64>,
    /// `kh[k][q]` at node `k` and point `t[q]`.
    pub kh: Vec<Vec<M3>>,
    pub max_asymmetry: f64,
    pub max_kh: f64,
    /// Max `|K^h/(2 sqrt(e^h)) - t L|`.
    pub deviation: f64,
}

/// Evaluates `K^h = (∇u^h)^T ∇u^h - G` and compares its scaling with `limit`.
pub fn kh_diagnostic(def: &RecoveryDeformation, frame: &ImmersionFrame, limit: &[M3]) -> Result<GammaDiagnostics> {
    let (t, _) = gauss_legendre(DIAGNOSTIC_POINTS)?;
    let scale = 1.0 / (2.0 * def.e_h.sqrt());
    let kh: Vec<Vec<M3>> = par::map_indexed(def.len(), |k| {
        t.iter()
            .map(|&tq| {
                let f = def.gradient(k, def.h * tq);
                (f.transpose() * f - frame.metric.g[k]) * scale
            })
            .collect()
    });
    let mut max_asymmetry: f64 = 0.0;
    let mut max_kh: f64 = 0.0;
    let mut deviation: f64 = 0.0;
    for (k, row) in kh.iter().enumerate() {
        for (q, m) in row.iter().enumerate() {
            max_asymmetry = max_asymmetry.max((m - m.transpose()).amax());
            max_kh = max_kh.max(m.amax());
            deviation = deviation.max((m - limit[k] * t[q]).amax());
        }
    }
    Ok(GammaDiagnostics { t, kh, max_asymmetry, max_kh, deviation })
}

/// `sym(Q_ε^T [∂_1 b_ε | ∂_2 b_ε | d_ε + ε d^h]) / ε`, the coefficient of `t`
/// in `K^h / (2 sqrt(e^h))`.
fn linear_coefficient(exp: &IsometryExpansion, frame: &ImmersionFrame, dh: &[V3], eps: f64) -> Result<Vec<M3>> {
    let matched = exp.at(frame, eps);
    let b = director_eps(&matched, frame)?;
    let d = d_eps(&matched, &b, frame)?;
    let db = frame.grid().gradient(&b);
    Ok(par::map_indexed(frame.len(), |k| {
        let q = M3::from_columns(&[matched.grad[k][0], matched.grad[k][1], b[k]]);
        let bm = M3::from_columns(&[db[k][0], db[k][1], d[k] + dh[k] * eps]);
        let s = q.transpose() * bm;
        (s + s.transpose()) * (0.5 / eps)
    }))
}

/// `ε → 0` limit of the coefficient of `t` in `K^h / (2 sqrt(e^h))`: the even
/// part in `ε` from `±ε`, then one Richardson step in `ε^2` against `±ε/2`.
pub fn kh_limit(exp: &IsometryExpansion, frame: &ImmersionFrame, dh: &[V3], eps: f64) -> Result<Vec<M3>> {
    let even = |e: f64| -> Result<Vec<M3>> {
        let p = linear_coefficient(exp, frame, dh, e)?;
        let m = linear_coefficient(exp, frame, dh, -e)?;
        Ok(p.iter().zip(&m).map(|(a, b)| (a + b) * 0.5).collect())
    };
    let coarse = even(eps)?;
    let fine = even(0.5 * eps)?;
    Ok(fine.iter().zip(&coarse).map(|(f, c)| (f * 4.0 - c) / 3.0).collect())
}

/// Max interior `|tangential block of L - sym M|`.
pub fn limit_mismatch(limit: &[M3], bending: &[M2], frame: &ImmersionFrame) -> f64 {
    frame.grid().interior_max(|k| {
        let t: M2 = limit[k].fixed_view::<2, 2>(0, 0).into_owned();
        (t - bending[k]).amax()
    })
}

/// Scaled average displacement and its distance to `V`.
#[derive(Clone, Debug)]
pub struct VhReport {
    pub field: Vec<V3>,
    pub deviation: f64,
}

/// `V^h = (h / sqrt(e^h)) ∫ [u^h(x', h t) - y0 - h t b0] dt` by Gauss quadrature in `t`.
pub fn vh_diagnostic(def: &RecoveryDeformation, frame: &ImmersionFrame, v: &DisplacementField) -> Result<VhReport> {
    let (t, w) = gauss_legendre(DIAGNOSTIC_POINTS)?;
    let scale = def.h / def.e_h.sqrt();
    let field: Vec<V3> = par::map_indexed(def.len(), |k| {
        let p = frame.point(k);
        let mut acc = V3::zeros();
        for (tq, wq) in t.iter().zip(&w) {
            let x3 = def.h * tq;
            acc += (def.position(k, x3) - p.y0 - frame.b0[k] * x3) * *wq;
        }
        acc * scale
    });
    let deviation = field.iter().zip(&v.values).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
    Ok(VhReport { field, deviation })
}
