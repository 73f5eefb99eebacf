//! Coordinate tensor calculus on a sampled graph surface.
//!
//! Tensors carry covariant coordinate indices unless stated otherwise. Field
//! derivatives use the grid stencils; metric and frame derivatives come from
//! the analytic surface data.

use crate::error::{Error, Result};
use crate::grid::ParamGrid;
use crate::par;
use crate::surface_geometry::{christoffel_from, SurfaceFrame};
use crate::{M2, M3, V2, V3};

/// `gamma[m][i][j] = Γ^m_ij`.
pub type Christoffel = [[[f64; 2]; 2]; 2];

/// A 2x2 metric field with its inverse and first derivatives.
#[derive(Clone, Debug)]
pub struct Metric2Field {
    pub g: Vec<M2>,
    pub ginv: Vec<M2>,
    pub dg: Vec<[M2; 2]>,
}

impl Metric2Field {
    pub fn from_parts(g: Vec<M2>, dg: Vec<[M2; 2]>) -> Result<Self> {
        let ginv = g
            .iter()
            .enumerate()
            .map(|(k, m)| {
                m.try_inverse()
                    .filter(|i| i.iter().all(|v| v.is_finite()))
                    .ok_or_else(|| Error::Metric(format!("singular metric at node {k}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { g, ginv, dg })
    }

    /// Metric given only by samples; derivatives by grid differences.
    pub fn from_samples(grid: &ParamGrid, g: Vec<M2>) -> Result<Self> {
        let dg = grid.gradient(&g);
        Self::from_parts(g, dg)
    }

    /// First fundamental form with analytic derivatives.
    pub fn first_fundamental(surface: &SurfaceFrame) -> Self {
        let g = surface.points.iter().map(|p| p.g).collect();
        let dg = surface.points.iter().map(|p| p.dg).collect();
        Self::from_parts(g, dg).expect("graph metric is invertible")
    }

    /// Second fundamental form used as a metric (elliptic patches only).
    pub fn second_fundamental(surface: &SurfaceFrame) -> Result<Self> {
        let g = surface.points.iter().map(|p| p.pi).collect();
        let dg = surface.points.iter().map(|p| p.dpi).collect();
        Self::from_parts(g, dg)
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    /// Definite everywhere, with one sign throughout.
    pub fn is_definite(&self) -> bool {
        let s = self.g[0].trace().signum();
        self.g.iter().all(|m| m.determinant() > 0.0 && m.trace() * s > 0.0)
    }
}

#[derive(Clone, Debug)]
pub struct ChristoffelField {
    pub gamma: Vec<Christoffel>,
}

pub fn christoffel(metric: &Metric2Field) -> ChristoffelField {
    ChristoffelField {
        gamma: par::map_indexed(metric.len(), |k| christoffel_from(&metric.ginv[k], &metric.dg[k])),
    }
}

/// Components of an order-`k` covariant tensor field, `2^k` per node with the
/// last index running fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceTensorField {
    pub order: usize,
    pub data: Vec<f64>,
}

impl SurfaceTensorField {
    pub fn new(order: usize, data: Vec<f64>) -> Result<Self> {
        if order > 3 {
            return Err(Error::UnsupportedOrder(order));
        }
        if data.len() % (1 << order) != 0 {
            return Err(Error::Input(format!("{} components do not fit order {order}", data.len())));
        }
        Ok(Self { order, data })
    }

    pub fn scalar(v: &[f64]) -> Self {
        Self { order: 0, data: v.to_vec() }
    }

    pub fn covector(v: &[V2]) -> Self {
        Self { order: 1, data: v.iter().flat_map(|c| [c[0], c[1]]).collect() }
    }

    pub fn matrix(v: &[M2]) -> Self {
        Self {
            order: 2,
            data: v.iter().flat_map(|m| [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]).collect(),
        }
    }

    pub fn stride(&self) -> usize {
        1 << self.order
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.stride()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.data[k * self.stride()..(k + 1) * self.stride()]
    }

    pub fn get(&self, k: usize, idx: &[usize]) -> f64 {
        debug_assert_eq!(idx.len(), self.order);
        let off = idx.iter().fold(0, |acc, &i| 2 * acc + i);
        self.data[k * self.stride() + off]
    }

    pub fn as_matrix(&self, k: usize) -> M2 {
        assert_eq!(self.order, 2);
        let c = self.at(k);
        M2::new(c[0], c[1], c[2], c[3])
    }

    /// Slice of an order-3 tensor with the last index fixed.
    pub fn slice_last(&self, k: usize, m: usize) -> M2 {
        assert_eq!(self.order, 3);
        M2::from_fn(|i, j| self.get(k, &[i, j, m]))
    }
}

/// Levi-Civita covariant derivative; the new derivative index is appended last.
pub fn covariant_derivative(
    t: &SurfaceTensorField,
    grid: &ParamGrid,
    gamma: &ChristoffelField,
) -> Result<SurfaceTensorField> {
    if t.order > 2 {
        return Err(Error::UnsupportedOrder(t.order));
    }
    if t.len() != grid.len() {
        return Err(Error::Input("tensor field and grid differ in size".into()));
    }
    let s = t.stride();
    let comps: Vec<Vec<f64>> = (0..s).map(|c| (0..grid.len()).map(|k| t.data[k * s + c]).collect()).collect();
    let rows = par::map_indexed(grid.len(), |k| {
        let gm = &gamma.gamma[k];
        let mut out = vec![0.0; 2 * s];
        for c in 0..s {
            let idx: Vec<usize> = (0..t.order).map(|p| (c >> (t.order - 1 - p)) & 1).collect();
            for m in 0..2 {
                let mut v = grid.partial(&comps[c], k, m);
                for slot in 0..t.order {
                    for p in 0..2 {
                        let mut j = idx.clone();
                        j[slot] = p;
                        v -= gm[p][m][idx[slot]] * t.get(k, &j);
                    }
                }
                out[2 * c + m] = v;
            }
        }
        out
    });
    SurfaceTensorField::new(t.order + 1, rows.concat())
}

/// Quarter turn of tangent vectors given in coordinates.
pub fn rotate_q(x: &[V2], surface: &SurfaceFrame) -> Vec<V2> {
    x.iter().zip(&surface.points).map(|(v, p)| p.rot * v).collect()
}

fn check_symmetric(u: &[M2]) -> Result<()> {
    for (k, m) in u.iter().enumerate() {
        if (m[(0, 1)] - m[(1, 0)]).abs() > 1e-12 * (1.0 + m.abs().max()) {
            return Err(Error::Input(format!("tensor is not symmetric at node {k}")));
        }
    }
    Ok(())
}

/// Trace of the derivative of a symmetric 2-tensor, `g^{jk} U_{ij;k}`, returned
/// as a tangent vector (index raised with `g`).
pub fn lambda_field(u: &[M2], grid: &ParamGrid, metric: &Metric2Field, gamma: &ChristoffelField) -> Result<Vec<V2>> {
    check_symmetric(u)?;
    let du = covariant_derivative(&SurfaceTensorField::matrix(u), grid, gamma)?;
    Ok(par::map_indexed(grid.len(), |k| {
        let gi = &metric.ginv[k];
        let low = V2::from_fn(|i, _| {
            let mut s = 0.0;
            for j in 0..2 {
                for l in 0..2 {
                    s += gi[(j, l)] * du.get(k, &[i, j, l]);
                }
            }
            s
        });
        gi * low
    }))
}

/// Divergence-form Laplacian of `m` at interior nodes; boundary entries are 0.
///
/// Fails with [`Error::NotElliptic`] unless `m` is definite everywhere. A
/// negative definite `m` gives the negative of the Laplacian of `-m`.
pub fn laplace_beltrami(v: &[f64], grid: &ParamGrid, m: &Metric2Field) -> Result<Vec<f64>> {
    if !m.is_definite() {
        return Err(Error::NotElliptic("metric of the Laplacian is not definite".into()));
    }
    // flux coefficients sqrt(det m) m^{ij}
    let root: Vec<f64> = m.g.iter().map(|x| x.determinant().sqrt()).collect();
    let a: Vec<M2> = m.ginv.iter().zip(&root).map(|(gi, r)| gi * *r).collect();
    let (h1, h2, n1) = (grid.h1, grid.h2, grid.n1);
    Ok(par::map_indexed(grid.len(), |k| {
        if grid.is_boundary(k) {
            return 0.0;
        }
        let d2 = |q: usize| (v[q + n1] - v[q - n1]) / (2.0 * h2);
        let d1 = |q: usize| (v[q + 1] - v[q - 1]) / (2.0 * h1);
        let axx = |p: usize, q: usize| 0.5 * (a[p][(0, 0)] + a[q][(0, 0)]);
        let ayy = |p: usize, q: usize| 0.5 * (a[p][(1, 1)] + a[q][(1, 1)]);
        let f11 = (axx(k, k + 1) * (v[k + 1] - v[k]) - axx(k, k - 1) * (v[k] - v[k - 1])) / (h1 * h1);
        let f22 = (ayy(k, k + n1) * (v[k + n1] - v[k]) - ayy(k, k - n1) * (v[k] - v[k - n1])) / (h2 * h2);
        let f12 = (a[k + 1][(0, 1)] * d2(k + 1) - a[k - 1][(0, 1)] * d2(k - 1)) / (2.0 * h1);
        let f21 = (a[k + n1][(1, 0)] * d1(k + n1) - a[k - n1][(1, 0)] * d1(k - n1)) / (2.0 * h2);
        (f11 + f22 + f12 + f21) / root[k]
    }))
}

/// Both sides of the pullback identity for the strain of a displacement `V`:
/// the chart side `sym((∇y0)^T ∇V)` and the surface side
/// `sym D(V^T) + <V, n> Π`.
#[derive(Clone, Debug)]
pub struct PullbackStrain {
    pub chart: Vec<M2>,
    pub surface: Vec<M2>,
}

pub fn pullback_strain(v: &[V3], surface: &SurfaceFrame) -> PullbackStrain {
    let grid = &surface.grid;
    let dv = grid.gradient(v);
    let chart = par::map_indexed(grid.len(), |k| {
        let p = &surface.points[k];
        let m = M2::from_fn(|i, j| p.dy0[i].dot(&dv[k][j]));
        0.5 * (m + m.transpose())
    });
    let w: Vec<V2> = v
        .iter()
        .zip(&surface.points)
        .map(|(x, p)| V2::new(p.dy0[0].dot(x), p.dy0[1].dot(x)))
        .collect();
    let dw = grid.gradient(&w);
    let surf = par::map_indexed(grid.len(), |k| {
        let p = &surface.points[k];
        let gam = p.christoffel();
        let m = M2::from_fn(|i, j| {
            let mut s = 0.5 * (dw[k][j][i] + dw[k][i][j]);
            for q in 0..2 {
                s -= gam[q][i][j] * w[k][q];
            }
            s
        });
        m + p.pi * v[k].dot(&p.normal)
    });
    PullbackStrain { chart, surface: surf }
}

/// `∇f` as an ambient 3x3 map: `∇f(X, Y) = X^T M Y`, `∇_n f = 0`.
fn ambient_gradient(jf: &nalgebra::Matrix3x2<f64>, proj: &nalgebra::Matrix2x3<f64>) -> M3 {
    jf * proj
}

/// Pointwise residual of the covariant identity expressing the ambient
/// Hessian of a vector field through derivatives of its symmetrized gradient,
///
/// `∇²f(E_i,E_j,E_k) = ∇T(E_i,E_j,E_k) + ∇T(E_k,E_i,E_j) - ∇T(E_j,E_k,E_i)`,
/// `T = sym ∇f`,
///
/// maximised over `i, j, k`. The left side uses direct second-difference
/// stencils of `f` and analytic frame derivatives, the right side iterated
/// first differences of `T`, so the residual measures the consistency of the
/// two discretizations. Entries within two nodes of the boundary are 0.
pub fn covariant_identity_residual(f: &[V3], surface: &SurfaceFrame) -> Vec<f64> {
    let grid = &surface.grid;
    let df = grid.gradient(f);
    let proj: Vec<nalgebra::Matrix2x3<f64>> =
        surface.points.iter().map(|p| p.ginv() * p.dy0_matrix().transpose()).collect();
    let sym: Vec<M3> = (0..grid.len())
        .map(|k| {
            let m = ambient_gradient(&nalgebra::Matrix3x2::from_columns(&df[k]), &proj[k]);
            0.5 * (m + m.transpose())
        })
        .collect();
    let dsym = grid.gradient(&sym);
    par::map_indexed(grid.len(), |k| {
        let (i, j) = grid.coords(k);
        if i < 2 || j < 2 || i + 2 >= grid.n1 || j + 2 >= grid.n2 {
            return 0.0;
        }
        let p = &surface.points[k];
        let hess = grid.second_partials(f, k);
        let ginv = p.ginv();
        // ∂_m of the projector g^{-1} (∇y0)^T
        let dproj = [0, 1].map(|m| {
            let dginv = -ginv * p.dg[m] * ginv;
            let dyt = nalgebra::Matrix3x2::from_columns(&[p.d2y0[0][m], p.d2y0[1][m]]).transpose();
            dginv * p.dy0_matrix().transpose() + ginv * dyt
        });
        let jf = nalgebra::Matrix3x2::from_columns(&df[k]);
        let dm = [0, 1].map(|m| nalgebra::Matrix3x2::from_columns(&[hess[0][m], hess[1][m]]) * proj[k] + jf * dproj[m]);
        let e = p.frame_ambient();
        let along = |mats: &[M3; 2], c: usize| mats[0] * p.frame[c][0] + mats[1] * p.frame[c][1];
        let dsk = dsym[k];
        let mut worst: f64 = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    let lhs = e[a].dot(&(along(&dm, c) * e[b]));
                    let rhs = e[a].dot(&(along(&dsk, c) * e[b])) + e[c].dot(&(along(&dsk, b) * e[a]))
                        - e[b].dot(&(along(&dsk, a) * e[c]));
                    worst = worst.max((lhs - rhs).abs());
                }
            }
        }
        worst
    })
}

/// Max of [`covariant_identity_residual`].
pub fn max_covariant_identity_residual(f: &[V3], surface: &SurfaceFrame) -> f64 {
    covariant_identity_residual(f, surface).into_iter().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Domain};
    use crate::surface_geometry::{sample_graph_immersion, Height};

    #[test]
    fn polar_like_christoffels() {
        let grid = build_grid(Domain::new([1.0, 2.0], [0.0, 1.0]), 5, 5).unwrap();
        let g: Vec<M2> = (0..grid.len()).map(|k| M2::new(1.0, 0.0, 0.0, grid.point(k)[0].powi(2))).collect();
        let m = Metric2Field::from_samples(&grid, g).unwrap();
        let c = christoffel(&m);
        for k in 0..grid.len() {
            let x1 = grid.point(k)[0];
            assert!((c.gamma[k][1][0][1] - 1.0 / x1).abs() < 1e-12);
            assert!((c.gamma[k][1][1][0] - 1.0 / x1).abs() < 1e-12);
            assert!((c.gamma[k][0][1][1] + x1).abs() < 1e-12);
            assert!(c.gamma[k][0][0][0].abs() < 1e-12);
        }
    }

    #[test]
    fn order_four_is_rejected() {
        assert_eq!(SurfaceTensorField::new(4, vec![0.0; 16]), Err(Error::UnsupportedOrder(4)));
        let grid = build_grid(Domain::unit_square(), 3, 3).unwrap();
        let t = SurfaceTensorField::new(3, vec![0.0; 8 * 9]).unwrap();
        let m = Metric2Field::from_samples(&grid, vec![M2::identity(); 9]).unwrap();
        assert_eq!(covariant_derivative(&t, &grid, &christoffel(&m)), Err(Error::UnsupportedOrder(3)));
    }

    #[test]
    fn flat_single_slot_derivative() {
        let grid = build_grid(Domain::unit_square(), 5, 5).unwrap();
        let u: Vec<M2> = (0..grid.len()).map(|k| M2::new(grid.point(k)[0], 0.0, 0.0, 0.0)).collect();
        let m = Metric2Field::from_samples(&grid, vec![M2::identity(); grid.len()]).unwrap();
        let du = covariant_derivative(&SurfaceTensorField::matrix(&u), &grid, &christoffel(&m)).unwrap();
        for k in 0..grid.len() {
            for c in 0..8 {
                let expect = if c == 0 { 1.0 } else { 0.0 };
                assert!((du.at(k)[c] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn asymmetric_input_rejected() {
        let grid = build_grid(Domain::unit_square(), 3, 3).unwrap();
        let m = Metric2Field::from_samples(&grid, vec![M2::identity(); 9]).unwrap();
        let u = vec![M2::new(0.0, 1.0, 0.0, 0.0); 9];
        assert!(matches!(lambda_field(&u, &grid, &m, &christoffel(&m)), Err(Error::Input(_))));
    }

    #[test]
    fn flat_laplacian_of_paraboloid() {
        let grid = build_grid(Domain::unit_square(), 9, 9).unwrap();
        let v: Vec<f64> = (0..grid.len()).map(|k| grid.point(k)[0].powi(2) + grid.point(k)[1].powi(2)).collect();
        let m = Metric2Field::from_samples(&grid, vec![M2::identity(); grid.len()]).unwrap();
        let l = laplace_beltrami(&v, &grid, &m).unwrap();
        for k in grid.interior_nodes() {
            assert!((l[k] - 4.0).abs() < 1e-10);
        }
    }

    #[test]
    fn saddle_second_form_is_not_elliptic() {
        let grid = build_grid(Domain::centered(0.5), 5, 5).unwrap();
        let s = sample_graph_immersion(&grid, &Height::Saddle).unwrap();
        let pi = Metric2Field::second_fundamental(&s).unwrap();
        let v = vec![0.0; grid.len()];
        assert!(matches!(laplace_beltrami(&v, &grid, &pi), Err(Error::NotElliptic(_))));
    }
}
