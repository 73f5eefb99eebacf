//! Linear strain equations `sym((∇y0)^T ∇y) = U` on elliptic graph patches.
//!
//! The displacement is split into a rotation scalar `v` and a normal slope
//! field `u`. `v` solves a second-order elliptic equation in the metric of the
//! second fundamental form, `u` follows algebraically from `v` and `U`, and `y`
//! is integrated from the resulting gradient field by least squares.
//!
//! Vector fields such as `u` and `W` are stored with contravariant
//! coordinates.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::{DisplacementField, FieldTag};
use crate::grid::ParamGrid;
use crate::par;
use crate::sparse::SparseLu;
use crate::surface_geometry::SurfaceFrame;
use crate::tensor_calculus::{christoffel, covariant_derivative, ChristoffelField, Metric2Field, SurfaceTensorField};
use crate::{M2, V2, V3};

/// Result of a strain solve.
#[derive(Clone, Debug)]
pub struct StrainSolution {
    pub v: Vec<f64>,
    pub u: Vec<V2>,
    pub y: Vec<V3>,
    /// The gradient field `y` was integrated from. Its tangential part
    /// reproduces `U` exactly; grid differences of `y` match it to O(h^2).
    pub grad: Vec<[V3; 2]>,
    /// Max interior `|sym((∇y0)^T ∇y) - U|`.
    pub residual: f64,
    /// Max edge mismatch of the least-squares integration of `y`.
    pub integration_residual: f64,
}

impl StrainSolution {
    /// `y` as a displacement field carrying the solver gradient.
    pub fn displacement(&self) -> DisplacementField {
        DisplacementField::new(self.y.clone(), FieldTag::StrainSolver).with_grad(self.grad.clone())
    }
}

/// Rotation scalar `(<∂_2 y0, ∂_1 V> - <∂_1 y0, ∂_2 V>) / (2 sqrt(det g))` of a
/// displacement with gradient `grad`.
pub fn rotation_scalar(surface: &SurfaceFrame, grad: &[[V3; 2]]) -> Vec<f64> {
    surface
        .points
        .iter()
        .zip(grad)
        .map(|(p, d)| (p.dy0[1].dot(&d[0]) - p.dy0[0].dot(&d[1])) / (2.0 * p.g.determinant().sqrt()))
        .collect()
}

/// Normal slopes `g^{-1}(<n, ∂_1 V>, <n, ∂_2 V>)` of a displacement.
pub fn normal_slope(surface: &SurfaceFrame, grad: &[[V3; 2]]) -> Vec<V2> {
    surface
        .points
        .iter()
        .zip(grad)
        .map(|(p, d)| p.ginv() * V2::new(p.normal.dot(&d[0]), p.normal.dot(&d[1])))
        .collect()
}

/// `sym((∇y0)^T ∇y)` with grid differences of `y`.
pub fn chart_strain(surface: &SurfaceFrame, y: &[V3]) -> Vec<M2> {
    let dy = surface.grid.gradient(y);
    par::map_indexed(surface.len(), |k| {
        let p = &surface.points[k];
        let m = M2::from_fn(|i, j| p.dy0[i].dot(&dy[k][j]));
        0.5 * (m + m.transpose())
    })
}

/// Solver for one surface patch; both sparse systems are factored once.
pub struct StrainSolver<'a> {
    surface: &'a SurfaceFrame,
    metric: Metric2Field,
    gamma: ChristoffelField,
    lu_v: SparseLu,
    lu_y: SparseLu,
}

impl std::fmt::Debug for StrainSolver<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StrainSolver").field("nodes", &self.surface.len()).finish()
    }
}

/// Minimal Gauss curvature magnitude accepted as elliptic.
const KAPPA_FLOOR: f64 = 1e-10;

impl<'a> StrainSolver<'a> {
    pub fn new(surface: &'a SurfaceFrame) -> Result<Self> {
        let grid = &surface.grid;
        check_elliptic(surface)?;
        check_well_posed(surface)?;
        let metric = Metric2Field::first_fundamental(surface);
        let gamma = christoffel(&metric);
        let lu_v = SparseLu::factor(grid.len(), &v_operator(surface))?;
        let lu_y = SparseLu::factor(grid.len(), &edge_laplacian(grid))?;
        Ok(Self { surface, metric, gamma, lu_v, lu_y })
    }

    pub fn surface(&self) -> &SurfaceFrame {
        self.surface
    }

    fn grid(&self) -> &ParamGrid {
        &self.surface.grid
    }

    /// `W = g^{-1}(Λ(U) - ∂ tr_g U)` with `Λ_i = g^{jk} U_{ij;k}`.
    pub fn w_field(&self, u: &[M2]) -> Result<Vec<V2>> {
        let grid = self.grid();
        if u.len() != grid.len() {
            return Err(Error::Input("strain field and grid differ in size".into()));
        }
        let du = covariant_derivative(&SurfaceTensorField::matrix(u), grid, &self.gamma)?;
        let tr: Vec<f64> = u.iter().zip(&self.metric.ginv).map(|(m, gi)| (gi * m).trace()).collect();
        let dtr = grid.gradient(&tr);
        Ok(par::map_indexed(grid.len(), |k| {
            let gi = &self.metric.ginv[k];
            let lam = V2::from_fn(|i, _| {
                let mut s = 0.0;
                for j in 0..2 {
                    for l in 0..2 {
                        s += gi[(j, l)] * du.get(k, &[i, j, l]);
                    }
                }
                s
            });
            gi * (lam - V2::new(dtr[k][0], dtr[k][1]))
        }))
    }

    /// Source term `P(U)` of the `v` equation.
    pub fn assemble_p(&self, u: &[M2]) -> Result<Vec<f64>> {
        let grid = self.grid();
        let w = self.w_field(u)?;
        let z: Vec<V2> = w.iter().zip(&self.surface.points).map(|(w, p)| p.rot * w).collect();
        let dz = grid.gradient(&z);
        Ok(par::map_indexed(grid.len(), |k| {
            let p = &self.surface.points[k];
            let gam = &self.gamma.gamma[k];
            let gi = &self.metric.ginv[k];
            // DZ^a_k = ∂_k Z^a + Γ^a_kb Z^b
            let dzk = M2::from_fn(|a, c| dz[k][c][a] + (0..2).map(|b| gam[a][c][b] * z[k][b]).sum::<f64>());
            let turned = p.rot.transpose() * p.pi * p.rot;
            let t1 = (dzk * gi).component_mul(&turned).sum();
            let pinv = p.pi.try_inverse().expect("elliptic patch");
            let t2 = (p.g * z[k]).dot(&(pinv * V2::from(p.dkappa)));
            let qs = p.rot * gi * p.pi;
            let t3 = (qs.transpose() * u[k]).component_mul(gi).sum();
            t1 - t2 - p.kappa * t3
        }))
    }

    /// Solves the `v` equation with source `p` and Dirichlet data `bc`
    /// (read at boundary nodes only).
    pub fn solve_v(&self, p: &[f64], bc: &[f64]) -> Result<Vec<f64>> {
        let grid = self.grid();
        let rhs: Vec<f64> = (0..grid.len())
            .map(|k| if grid.is_boundary(k) { bc[k] } else { p[k] / self.surface.points[k].kappa })
            .collect();
        self.lu_v.solve(&rhs)
    }

    /// `u = -(1/κ) S (W + Q g^{-1} ∂v)`.
    pub fn recover_u(&self, v: &[f64], u: &[M2]) -> Result<Vec<V2>> {
        let w = self.w_field(u)?;
        Ok(self.recover_u_with(v, &w))
    }

    fn recover_u_with(&self, v: &[f64], w: &[V2]) -> Vec<V2> {
        let dv = self.grid().gradient(v);
        par::map_indexed(self.grid().len(), |k| {
            let p = &self.surface.points[k];
            let gi = &self.metric.ginv[k];
            let s = gi * p.pi;
            -(s * (w[k] + p.rot * (gi * V2::new(dv[k][0], dv[k][1])))) / p.kappa
        })
    }

    /// Prescribed gradient `∂_i y = (g^{-1}U)^a_i ∂_a y0 - v Q^a_i ∂_a y0 + (g u)_i n`.
    pub fn prescribed_gradient(&self, v: &[f64], u: &[V2], strain: &[M2]) -> Vec<[V3; 2]> {
        par::map_indexed(self.grid().len(), |k| {
            let p = &self.surface.points[k];
            let t = self.metric.ginv[k] * strain[k] - p.rot * v[k];
            let ul = p.g * u[k];
            [0, 1].map(|i| p.dy0[0] * t[(0, i)] + p.dy0[1] * t[(1, i)] + p.normal * ul[i])
        })
    }

    /// Integrates the prescribed gradient by least squares over grid edges,
    /// pinning `y` to 0 at node 0. Returns `y` and the integration residual.
    pub fn reconstruct_y(&self, v: &[f64], u: &[V2], strain: &[M2]) -> Result<(Vec<V3>, f64)> {
        let grid = self.grid();
        let gfield = self.prescribed_gradient(v, u, strain);
        let mut rhs = vec![vec![0.0; grid.len()]; 3];
        for (p, q, axis, h) in edges(grid) {
            let avg = (gfield[p][axis] + gfield[q][axis]) * (0.5 / h);
            for c in 0..3 {
                rhs[c][q] += avg[c];
                rhs[c][p] -= avg[c];
            }
        }
        for r in rhs.iter_mut() {
            r[0] = 0.0;
        }
        let cols = self.lu_y.solve_many(&rhs)?;
        let y: Vec<V3> = (0..grid.len()).map(|k| V3::new(cols[0][k], cols[1][k], cols[2][k])).collect();

        let mut residual: f64 = 0.0;
        for (p, q, axis, h) in edges(grid) {
            let mismatch = (y[q] - y[p]) / h - (gfield[p][axis] + gfield[q][axis]) * 0.5;
            residual = residual.max(mismatch.amax());
        }
        let threshold = integration_threshold(grid, &gfield);
        if !(residual <= threshold) {
            return Err(Error::Inconsistent { residual, threshold });
        }
        Ok((y, residual))
    }

    /// Max interior `|sym((∇y0)^T ∇y) - U|` (entrywise).
    pub fn strain_residual(&self, y: &[V3], strain: &[M2]) -> f64 {
        let s = chart_strain(self.surface, y);
        self.grid().interior_max(|k| (s[k] - strain[k]).amax())
    }

    /// Full pipeline for `U`; `bc` gives Dirichlet data for `v` (zero if `None`).
    pub fn solve(&self, strain: &[M2], bc: Option<&[f64]>) -> Result<StrainSolution> {
        let grid = self.grid();
        for (k, m) in strain.iter().enumerate() {
            if m.iter().any(|x| !x.is_finite()) {
                let x = grid.point(k);
                return Err(Error::NonFinite { node: k, x1: x[0], x2: x[1] });
            }
        }
        let zeros;
        let bc = match bc {
            Some(b) => b,
            None => {
                zeros = vec![0.0; grid.len()];
                &zeros
            }
        };
        let p = self.assemble_p(strain)?;
        let v = self.solve_v(&p, bc)?;
        let w = self.w_field(strain)?;
        let u = self.recover_u_with(&v, &w);
        let (y, integration_residual) = self.reconstruct_y(&v, &u, strain)?;
        let residual = self.strain_residual(&y, strain);
        let grad = self.prescribed_gradient(&v, &u, strain);
        Ok(StrainSolution { v, u, y, grad, residual, integration_residual })
    }

    /// [`StrainSolver::solve`] followed by defect-correction sweeps that solve
    /// again for the discrete strain mismatch, until the residual drops below
    /// `tol` or stops improving.
    pub fn solve_refined(&self, strain: &[M2], bc: Option<&[f64]>, max_sweeps: usize, tol: f64) -> Result<StrainSolution> {
        let mut best = self.solve(strain, bc)?;
        for _ in 0..max_sweeps {
            if best.residual <= tol {
                break;
            }
            let achieved = chart_strain(self.surface, &best.y);
            let defect: Vec<M2> = strain.iter().zip(&achieved).map(|(a, b)| a - b).collect();
            let corr = self.solve(&defect, None)?;
            let y: Vec<V3> = best.y.iter().zip(&corr.y).map(|(a, b)| a + b).collect();
            let residual = self.strain_residual(&y, strain);
            if !(residual < best.residual) {
                break;
            }
            best = StrainSolution {
                v: best.v.iter().zip(&corr.v).map(|(a, b)| a + b).collect(),
                u: best.u.iter().zip(&corr.u).map(|(a, b)| a + b).collect(),
                y,
                // the first gradient already reproduces `U` exactly
                grad: best.grad,
                residual,
                integration_residual: best.integration_residual.max(corr.integration_residual),
            };
        }
        Ok(best)
    }
}

/// One-shot convenience wrapper around [`StrainSolver`].
pub fn solve_strain(strain: &[M2], surface: &SurfaceFrame, bc: Option<&[f64]>) -> Result<StrainSolution> {
    StrainSolver::new(surface)?.solve(strain, bc)
}

fn check_elliptic(surface: &SurfaceFrame) -> Result<()> {
    let sign = surface.points[0].pi.trace().signum();
    for (k, p) in surface.points.iter().enumerate() {
        if !(p.kappa > KAPPA_FLOOR) || p.pi.trace() * sign <= 0.0 {
            return Err(Error::NotElliptic(format!(
                "Gauss curvature {:.3e} at node {k} ({:.4}, {:.4}); the solver needs a strictly convex patch",
                p.kappa, p.x[0], p.x[1]
            )));
        }
    }
    Ok(())
}

/// The zeroth-order term of the `v` equation has the unfavourable sign, so
/// the Dirichlet problem is uniquely solvable only when the patch is small
/// compared with the curvature radii. Checks a Poincaré-type lower bound for
/// the principal part against the largest reaction coefficient.
fn check_well_posed(surface: &SurfaceFrame) -> Result<()> {
    let grid = &surface.grid;
    let sign = surface.points[0].pi.trace().signum();
    let [l1, l2] = grid.domain.lengths();
    let mut min_eig = f64::INFINITY;
    let mut reaction: f64 = 0.0;
    let (mut dmin, mut dmax) = (f64::INFINITY, 0.0f64);
    for p in &surface.points {
        let pi = p.pi * sign;
        let inv = pi.try_inverse().expect("definite");
        min_eig = min_eig.min(inv.symmetric_eigenvalues().min());
        reaction = reaction.max((p.ginv() * pi).trace());
        let d = pi.determinant().sqrt();
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    let bound = min_eig * (dmin / dmax) * PI * PI * (1.0 / (l1 * l1) + 1.0 / (l2 * l2));
    if bound <= reaction {
        return Err(Error::IllPosed(format!(
            "principal-part bound {bound:.3e} does not dominate the reaction coefficient {reaction:.3e}; shrink the patch"
        )));
    }
    Ok(())
}

/// Triplets of the discrete `v` operator: interior rows
/// `Π^{ij} ∂_ij v + c^j ∂_j v + tr_g Π v`, Dirichlet rows on the boundary.
fn v_operator(surface: &SurfaceFrame) -> Vec<(usize, usize, f64)> {
    let grid = &surface.grid;
    let (h1, h2, n1) = (grid.h1, grid.h2, grid.n1);
    let rows = par::map_indexed(grid.len(), |k| {
        if grid.is_boundary(k) {
            return vec![(k, k, 1.0)];
        }
        let p = &surface.points[k];
        let a = p.pi.try_inverse().expect("elliptic patch");
        let gi = p.ginv();
        let dk = V2::from(p.dkappa);
        let mut c = V2::zeros();
        for i in 0..2 {
            let ad = a * p.dpi[i];
            let half_log = 0.5 * ad.trace();
            let dinv = ad * a;
            for j in 0..2 {
                c[j] += half_log * a[(i, j)] - dinv[(i, j)];
            }
        }
        let xi = 2.0 * (a * dk) - (gi * p.rot.transpose() * p.pi * p.rot * gi * dk) / p.kappa;
        c -= xi / (2.0 * p.kappa);
        let r = (gi * p.pi).trace();
        let (a11, a22, a12) = (a[(0, 0)] / (h1 * h1), a[(1, 1)] / (h2 * h2), 2.0 * a[(0, 1)] / (4.0 * h1 * h2));
        let (b1, b2) = (c[0] / (2.0 * h1), c[1] / (2.0 * h2));
        vec![
            (k, k, -2.0 * a11 - 2.0 * a22 + r),
            (k, k + 1, a11 + b1),
            (k, k - 1, a11 - b1),
            (k, k + n1, a22 + b2),
            (k, k - n1, a22 - b2),
            (k, k + n1 + 1, a12),
            (k, k - n1 - 1, a12),
            (k, k + n1 - 1, -a12),
            (k, k - n1 + 1, -a12),
        ]
    });
    rows.concat()
}

/// `(tail, head, axis, spacing)` for every grid edge.
fn edges(grid: &ParamGrid) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
    (0..grid.len()).flat_map(move |k| {
        let (i, j) = grid.coords(k);
        let e1 = (i + 1 < grid.n1).then_some((k, k + 1, 0, grid.h1));
        let e2 = (j + 1 < grid.n2).then_some((k, k + grid.n1, 1, grid.h2));
        e1.into_iter().chain(e2)
    })
}

/// Neumann graph Laplacian with `1/h^2` edge weights; row 0 pins the node.
fn edge_laplacian(grid: &ParamGrid) -> Vec<(usize, usize, f64)> {
    let mut t = vec![(0, 0, 1.0)];
    for (p, q, _, h) in edges(grid) {
        let w = 1.0 / (h * h);
        for (r, s, v) in [(p, p, w), (q, q, w), (p, q, -w), (q, p, -w)] {
            if r != 0 {
                t.push((r, s, v));
            }
        }
    }
    t
}

/// Residual allowed for an integrable field: ten times the largest second
/// difference of the field along its own direction, plus rounding slack.
fn integration_threshold(grid: &ParamGrid, gfield: &[[V3; 2]]) -> f64 {
    let mut curv: f64 = 0.0;
    let mut size: f64 = 0.0;
    for k in 0..grid.len() {
        let (i, j) = grid.coords(k);
        size = size.max(gfield[k][0].amax()).max(gfield[k][1].amax());
        if i > 0 && i + 1 < grid.n1 {
            curv = curv.max((gfield[k + 1][0] - gfield[k][0] * 2.0 + gfield[k - 1][0]).amax());
        }
        if j > 0 && j + 1 < grid.n2 {
            let n1 = grid.n1;
            curv = curv.max((gfield[k + n1][1] - gfield[k][1] * 2.0 + gfield[k - n1][1]).amax());
        }
    }
    10.0 * curv + 1e-10 * (1.0 + size)
}
