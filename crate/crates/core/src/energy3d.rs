//! Scaled elastic energy of recovery deformations and the thickness study
//! comparing it with the bending functional.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::field::DisplacementField;
use crate::grid::observed_order;
use crate::kirchhoff_functional::evaluate_i_beta;
use crate::par;
use crate::quadratic_forms::{density_w, q3, Material};
use crate::recovery_builder::{d_h, eps_for, recovery_for, IsometryExpansion, RecoveryDeformation, EPS_MAX};
use crate::surface_geometry::ImmersionFrame;
use crate::M3;

/// Gauss-Legendre nodes and weights on `[-1/2, 1/2]` (Golub-Welsch).
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 || n > 64 {
        return Err(Error::Config(format!("Gauss-Legendre order must be in 1..=64, got {n}")));
    }
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i.abs_diff(j) == 1 {
            let k = i.max(j) as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pts: Vec<(f64, f64)> = (0..n)
        .map(|i| (0.5 * eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    // symmetrize to remove eigensolver noise
    for i in 0..n / 2 {
        let (a, b) = (pts[i], pts[n - 1 - i]);
        let x = 0.5 * (b.0 - a.0);
        let w = 0.5 * (a.1 + b.1);
        pts[i] = (-x, w);
        pts[n - 1 - i] = (x, w);
    }
    if n % 2 == 1 {
        pts[n / 2].0 = 0.0;
    }
    Ok(pts.into_iter().unzip())
}

/// Energy density used in the thickness integral.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnergyModel {
    /// The stored energy `W` itself.
    Full,
    /// `Q3(E)/2` with `E = (F^T F - I)/2`, the small-strain surrogate.
    Quadratic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature {
    /// Gauss-Legendre points in the thickness direction.
    pub x3_points: usize,
    pub model: EnergyModel,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { x3_points: 4, model: EnergyModel::Full }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyResult {
    pub h: f64,
    pub beta: f64,
    pub e_h: f64,
    /// `(1/e^h) ∫∫ W(∇u^h A^{-1})` over the rescaled plate.
    pub energy: f64,
    pub x3_points: usize,
    pub model: EnergyModel,
}

/// Scaled energy of `def`: Gauss-Legendre in the thickness, trapezoid rule
/// on the mid-plane.
pub fn elastic_energy(def: &RecoveryDeformation, frame: &ImmersionFrame, mat: &Material, quad: &Quadrature) -> Result<EnergyResult> {
    let (t, w) = gauss_legendre(quad.x3_points)?;
    let grid = frame.grid();
    let dens = par::try_map_indexed(def.len(), |k| {
        let ainv = frame.metric.a[k].try_inverse().ok_or_else(|| Error::Metric(format!("A is singular at node {k}")))?;
        let mut acc = 0.0;
        for (tq, wq) in t.iter().zip(&w) {
            let f = def.gradient(k, def.h * tq) * ainv;
            let val = match quad.model {
                EnergyModel::Full => density_w(&f, mat).ok(),
                EnergyModel::Quadratic => Some(0.5 * q3(&((f.transpose() * f - M3::identity()) * 0.5), mat)),
            };
            match val {
                Some(v) if v.is_finite() => acc += wq * v,
                _ => {
                    let x = grid.point(k);
                    return Err(Error::NonFinite { node: k, x1: x[0], x2: x[1] });
                }
            }
        }
        Ok(acc)
    })?;
    Ok(EnergyResult {
        h: def.h,
        beta: def.beta,
        e_h: def.e_h,
        energy: grid.integrate(&dens) / def.e_h,
        x3_points: quad.x3_points,
        model: quad.model,
    })
}

/// Below this value of the bending functional the study compares absolute energies.
pub const ZERO_FUNCTIONAL: f64 = 1e-10;
/// Relative error allowed at the smallest thickness.
pub const PASS_REL_ERROR: f64 = 0.05;
/// Absolute energy allowed at the smallest thickness when the limit is zero.
pub const PASS_ABS_ENERGY: f64 = 1e-8;
/// Errors below this level count as converged in the monotonicity check.
pub const ERROR_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    pub h: f64,
    pub e_h: f64,
    pub eps: f64,
    pub energy: f64,
    pub i_beta: f64,
    /// Relative error, or the absolute energy when the limit is zero.
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GammaStudy {
    pub beta: f64,
    pub i_beta: f64,
    pub rows: Vec<StudyRow>,
    /// Log-log slope of the error against `h`.
    pub fitted_order: f64,
    /// True when errors are absolute energies (zero limit).
    pub absolute: bool,
    pub pass: bool,
    pub warnings: Vec<String>,
}

/// Decides PASS for an error sequence ordered by decreasing `h`.
pub fn study_passes(errors: &[f64], absolute: bool) -> bool {
    let Some(last) = errors.last() else { return false };
    let limit = if absolute { PASS_ABS_ENERGY } else { PASS_REL_ERROR };
    let tail = &errors[errors.len().saturating_sub(3)..];
    let monotone = tail.windows(2).all(|p| p[1] <= p[0] || p[1] <= ERROR_FLOOR);
    *last <= limit && monotone
}

/// Builds the recovery deformation for every `h` (decreasing), evaluates its
/// scaled energy and compares it with the bending functional of `exp.v`.
pub fn gamma_convergence_study(
    frame: &ImmersionFrame,
    exp: &IsometryExpansion,
    beta: f64,
    hs: &[f64],
    mat: &Material,
    quad: &Quadrature,
) -> Result<GammaStudy> {
    if hs.is_empty() || hs.windows(2).any(|p| !(p[1] < p[0])) {
        return Err(Error::Config("thickness list must be non-empty and strictly decreasing".into()));
    }
    let v: &DisplacementField = &exp.v;
    let i_beta = evaluate_i_beta(v, frame, mat)?.i_beta;
    let absolute = i_beta.abs() <= ZERO_FUNCTIONAL;
    let dh = d_h(v, frame, mat)?;
    let mut warnings = vec![];
    let mut rows = Vec::with_capacity(hs.len());
    for &h in hs {
        let eps = eps_for(h, beta);
        if eps >= EPS_MAX {
            warnings.push(format!("h = {h}: eps = {eps:.3} is outside the expansion regime"));
        }
        let def = recovery_for(exp, frame, &dh, h, beta)?;
        let e = elastic_energy(&def, frame, mat, quad)?;
        let error = if absolute { e.energy.abs() } else { (e.energy - i_beta).abs() / i_beta.abs() };
        rows.push(StudyRow { h, e_h: e.e_h, eps, energy: e.energy, i_beta, error });
    }
    let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
    Ok(GammaStudy {
        beta,
        i_beta,
        fitted_order: observed_order(hs, &errors),
        absolute,
        pass: study_passes(&errors, absolute),
        rows,
        warnings,
    })
}

/// Largest relative spread of the final energies of several studies.
pub fn cross_beta_spread(studies: &[GammaStudy]) -> f64 {
    let finals: Vec<f64> = studies.iter().filter_map(|s| s.rows.last().map(|r| r.energy)).collect();
    let (lo, hi) = finals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if finals.is_empty() {
        return 0.0;
    }
    let scale = finals.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        (hi - lo) / scale
    }
}
