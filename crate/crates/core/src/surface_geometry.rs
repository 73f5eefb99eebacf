//! Graph surfaces, their fundamental forms, prestrain metrics built from a
//! transversal director, and curvature admissibility of the resulting 3D metric.
//!
//! Sign conventions: the normal has a positive third component and the second
//! fundamental form is `Π_ij = <∂_i n, ∂_j y0> = -f_ij / W`, so a spherical cap
//! seen from above has positive definite `Π`.

use nalgebra::SymmetricEigen;

use crate::dual::Dual;
use crate::error::{Error, Result};
use crate::grid::ParamGrid;
use crate::par;
use crate::{M2, M3, V2, V3};

/// One term `coef * x1^p * x2^q` of a polynomial height.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Monomial {
    pub p: u32,
    pub q: u32,
    pub coef: f64,
}

/// Height function `f` of the graph immersion `y0 = (x1, x2, f)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Height {
    Flat,
    /// Upper hemisphere `sqrt(R^2 - x1^2 - x2^2)`.
    SphereCap { radius: f64 },
    /// `(x1^2 - x2^2) / 2`.
    Saddle,
    Polynomial(Vec<Monomial>),
}

/// Height value with all partial derivatives up to third order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HeightJet {
    pub f: f64,
    pub d1: [f64; 2],
    pub d2: [[f64; 2]; 2],
    pub d3: [[[f64; 2]; 2]; 2],
}

fn falling(p: u32, a: u32) -> f64 {
    (0..a).map(|t| (p - t) as f64).product()
}

fn powi(x: f64, e: u32) -> f64 {
    x.powi(e as i32)
}

impl Height {
    pub fn jet(&self, x: [f64; 2]) -> Result<HeightJet> {
        let [x1, x2] = x;
        match self {
            Height::Flat => Ok(HeightJet::default()),
            Height::Saddle => {
                let mut j = HeightJet {
                    f: 0.5 * (x1 * x1 - x2 * x2),
                    d1: [x1, -x2],
                    ..Default::default()
                };
                j.d2 = [[1.0, 0.0], [0.0, -1.0]];
                Ok(j)
            }
            Height::SphereCap { radius } => {
                let s = radius * radius - x1 * x1 - x2 * x2;
                if !(s > 0.0) {
                    return Err(Error::Input(format!(
                        "point ({x1}, {x2}) lies outside the sphere cap of radius {radius}"
                    )));
                }
                let f = s.sqrt();
                let (f3, f5) = (f * f * f, f * f * f * f * f);
                let xs = [x1, x2];
                let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                let mut j = HeightJet { f, ..Default::default() };
                for a in 0..2 {
                    j.d1[a] = -xs[a] / f;
                    for b in 0..2 {
                        j.d2[a][b] = -delta(a, b) / f - xs[a] * xs[b] / f3;
                        for c in 0..2 {
                            j.d3[a][b][c] = -(delta(a, b) * xs[c] + delta(a, c) * xs[b] + delta(b, c) * xs[a]) / f3
                                - 3.0 * xs[a] * xs[b] * xs[c] / f5;
                        }
                    }
                }
                Ok(j)
            }
            Height::Polynomial(terms) => {
                // partial derivative of order (a, b) of the whole polynomial
                let d = |a: u32, b: u32| -> f64 {
                    terms
                        .iter()
                        .filter(|t| t.p >= a && t.q >= b)
                        .map(|t| t.coef * falling(t.p, a) * falling(t.q, b) * powi(x1, t.p - a) * powi(x2, t.q - b))
                        .sum()
                };
                let mut j = HeightJet { f: d(0, 0), ..Default::default() };
                for a in 0..2 {
                    j.d1[a] = d((a == 0) as u32, (a == 1) as u32);
                    for b in 0..2 {
                        let n1 = (a == 0) as u32 + (b == 0) as u32;
                        j.d2[a][b] = d(n1, 2 - n1);
                        for c in 0..2 {
                            let m1 = n1 + (c == 0) as u32;
                            j.d3[a][b][c] = d(m1, 3 - m1);
                        }
                    }
                }
                Ok(j)
            }
        }
    }
}

/// Geometry of the graph surface at a single parameter point, with analytic
/// first derivatives of the frame quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfacePoint {
    pub x: [f64; 2],
    pub y0: V3,
    /// `dy0[i] = ∂_i y0`.
    pub dy0: [V3; 2],
    pub d2y0: [[V3; 2]; 2],
    pub d3y0: [[[V3; 2]; 2]; 2],
    pub normal: V3,
    pub dnormal: [V3; 2],
    pub g: M2,
    pub dg: [M2; 2],
    pub d2g: [[M2; 2]; 2],
    pub pi: M2,
    pub dpi: [M2; 2],
    pub kappa: f64,
    pub dkappa: [f64; 2],
    /// Coordinates of the orthonormal frame `E_a = frame[a]^i ∂_i y0`.
    pub frame: [V2; 2],
    /// `dframe[a][k] = ∂_k frame[a]`.
    pub dframe: [[V2; 2]; 2],
    /// Quarter turn `Q` acting on coordinate vectors, `Q E1 = -E2`, `Q E2 = E1`.
    pub rot: M2,
    pub drot: [M2; 2],
}

fn m2(a: [[f64; 2]; 2]) -> M2 {
    M2::new(a[0][0], a[0][1], a[1][0], a[1][1])
}

impl SurfacePoint {
    /// Evaluates the surface geometry from the height jet at `x`.
    pub fn from_jet(x: [f64; 2], jet: &HeightJet) -> SurfacePoint {
        let fa = [0, 1].map(|a| Dual::new(jet.d1[a], jet.d2[a]));
        let fab = [0, 1].map(|a| [0, 1].map(|b| Dual::new(jet.d2[a][b], jet.d3[a][b])));
        let zero = Dual::constant(0.0);

        let w = (fa[0] * fa[0] + fa[1] * fa[1] + 1.0).sqrt();
        let winv = w.recip();
        let n = [-fa[0] * winv, -fa[1] * winv, winv];
        let g = [0, 1].map(|a| [0, 1].map(|b| fa[a] * fa[b] + if a == b { 1.0 } else { 0.0 }));
        let pi = [0, 1].map(|a| [0, 1].map(|b| -fab[a][b] * winv));
        let det_g = g[0][0] * g[1][1] - g[0][1] * g[0][1];
        let det_pi = pi[0][0] * pi[1][1] - pi[0][1] * pi[0][1];
        let kappa = det_pi / det_g;

        let inv_s11 = g[0][0].sqrt().recip();
        let s = (g[0][0] / det_g).sqrt();
        let e1 = [inv_s11, zero];
        let e2 = [-(g[0][1] / g[0][0]) * s, s];
        let lower = |e: [Dual; 2]| [g[0][0] * e[0] + g[0][1] * e[1], g[1][0] * e[0] + g[1][1] * e[1]];
        let (ge1, ge2) = (lower(e1), lower(e2));
        let q = [0, 1].map(|a| [0, 1].map(|b| e1[a] * ge2[b] - e2[a] * ge1[b]));

        let val = |d: [[Dual; 2]; 2]| m2([[d[0][0].re, d[0][1].re], [d[1][0].re, d[1][1].re]]);
        let der = |d: [[Dual; 2]; 2], k: usize| {
            m2([[d[0][0].eps[k], d[0][1].eps[k]], [d[1][0].eps[k], d[1][1].eps[k]]])
        };

        let mut d2g = [[M2::zeros(); 2]; 2];
        for k in 0..2 {
            for l in 0..2 {
                d2g[k][l] = M2::from_fn(|a, b| {
                    jet.d3[a][k][l] * jet.d1[b]
                        + jet.d2[a][k] * jet.d2[b][l]
                        + jet.d2[a][l] * jet.d2[b][k]
                        + jet.d1[a] * jet.d3[b][k][l]
                });
            }
        }

        let t = |z: f64| V3::new(0.0, 0.0, z);
        SurfacePoint {
            x,
            y0: V3::new(x[0], x[1], jet.f),
            dy0: [V3::new(1.0, 0.0, jet.d1[0]), V3::new(0.0, 1.0, jet.d1[1])],
            d2y0: [0, 1].map(|a| [0, 1].map(|b| t(jet.d2[a][b]))),
            d3y0: [0, 1].map(|a| [0, 1].map(|b| [0, 1].map(|c| t(jet.d3[a][b][c])))),
            normal: V3::new(n[0].re, n[1].re, n[2].re),
            dnormal: [0, 1].map(|k| V3::new(n[0].eps[k], n[1].eps[k], n[2].eps[k])),
            g: val(g),
            dg: [der(g, 0), der(g, 1)],
            d2g,
            pi: val(pi),
            dpi: [der(pi, 0), der(pi, 1)],
            kappa: kappa.re,
            dkappa: kappa.eps,
            frame: [V2::new(e1[0].re, e1[1].re), V2::new(e2[0].re, e2[1].re)],
            dframe: [e1, e2].map(|e| [0, 1].map(|k| V2::new(e[0].eps[k], e[1].eps[k]))),
            rot: val(q),
            drot: [der(q, 0), der(q, 1)],
        }
    }

    /// `∇y0` as a 3x2 matrix.
    pub fn dy0_matrix(&self) -> nalgebra::Matrix3x2<f64> {
        nalgebra::Matrix3x2::from_columns(&self.dy0)
    }

    pub fn ginv(&self) -> M2 {
        self.g.try_inverse().expect("graph metric is positive definite")
    }

    /// Shape operator `g^{-1} Π` in coordinates.
    pub fn shape(&self) -> M2 {
        self.ginv() * self.pi
    }

    /// Mean curvature trace `tr_g Π`.
    pub fn mean_trace(&self) -> f64 {
        self.shape().trace()
    }

    /// Christoffel symbols `gamma[m][i][j] = Γ^m_ij` of `g`.
    pub fn christoffel(&self) -> [[[f64; 2]; 2]; 2] {
        christoffel_from(&self.ginv(), &self.dg)
    }

    /// Tangent vector with coordinates `c`.
    pub fn to_ambient(&self, c: &V2) -> V3 {
        self.dy0[0] * c[0] + self.dy0[1] * c[1]
    }

    /// Coordinates of the tangential part of `z`.
    pub fn tangent_coords(&self, z: &V3) -> V2 {
        self.ginv() * V2::new(self.dy0[0].dot(z), self.dy0[1].dot(z))
    }

    /// Ambient orthonormal frame vectors `E_1, E_2`.
    pub fn frame_ambient(&self) -> [V3; 2] {
        [self.to_ambient(&self.frame[0]), self.to_ambient(&self.frame[1])]
    }
}

/// `Γ^m_ij = ½ g^{mk}(∂_i g_kj + ∂_j g_ki − ∂_k g_ij)`.
pub fn christoffel_from(ginv: &M2, dg: &[M2; 2]) -> [[[f64; 2]; 2]; 2] {
    let mut out = [[[0.0; 2]; 2]; 2];
    for (m, om) in out.iter_mut().enumerate() {
        for (i, oi) in om.iter_mut().enumerate() {
            for (j, o) in oi.iter_mut().enumerate() {
                *o = (0..2)
                    .map(|k| 0.5 * ginv[(m, k)] * (dg[i][(k, j)] + dg[j][(k, i)] - dg[k][(i, j)]))
                    .sum();
            }
        }
    }
    out
}

/// The graph surface sampled on a grid.
#[derive(Clone, Debug)]
pub struct SurfaceFrame {
    pub grid: ParamGrid,
    pub height: Height,
    pub points: Vec<SurfacePoint>,
}

impl SurfaceFrame {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Samples `y0 = (x1, x2, f)` and its fundamental forms at every grid node.
pub fn sample_graph_immersion(grid: &ParamGrid, height: &Height) -> Result<SurfaceFrame> {
    let points = par::try_map_indexed(grid.len(), |k| {
        let x = grid.point(k);
        let p = SurfacePoint::from_jet(x, &height.jet(x)?);
        if !(p.kappa.is_finite() && p.y0.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite { node: k, x1: x[0], x2: x[1] });
        }
        Ok(p)
    })?;
    Ok(SurfaceFrame {
        grid: grid.clone(),
        height: height.clone(),
        points,
    })
}

/// Third frame column used to build a prestrain metric.
#[derive(Clone, Debug, PartialEq)]
pub enum Director {
    /// The unit normal; gives the product metric `diag(g, 1)`.
    Normal,
    /// `a(x) = base + x1 * d1 + x2 * d2`.
    Affine { base: V3, d1: V3, d2: V3 },
}

impl Director {
    pub fn constant(a: V3) -> Self {
        Director::Affine { base: a, d1: V3::zeros(), d2: V3::zeros() }
    }
}

/// Prestrain metric `G`, its square root and inverse at every node, with
/// optional analytic first and second derivatives.
#[derive(Clone, Debug)]
pub struct MetricField3 {
    pub g: Vec<M3>,
    pub a: Vec<M3>,
    pub ginv: Vec<M3>,
    pub dg: Option<Vec<[M3; 2]>>,
    pub d2g: Option<Vec<[[M3; 2]; 2]>>,
}

/// Symmetric square root through an eigendecomposition; errors when `g` is
/// not positive definite.
pub fn spd_sqrt(g: &M3) -> Result<M3> {
    let eig = SymmetricEigen::new(0.5 * (g + g.transpose()));
    let top = eig.eigenvalues.max().abs().max(1.0);
    if eig.eigenvalues.min() <= 1e-14 * top {
        return Err(Error::Metric(format!("metric not positive definite (eigenvalues {:?})", eig.eigenvalues.as_slice())));
    }
    let root = eig.eigenvalues.map(|l| l.max(1e-14).sqrt());
    let a = eig.eigenvectors * M3::from_diagonal(&root) * eig.eigenvectors.transpose();
    Ok(0.5 * (a + a.transpose()))
}

impl MetricField3 {
    pub fn from_values(g: Vec<M3>) -> Result<Self> {
        let mut a = Vec::with_capacity(g.len());
        let mut ginv = Vec::with_capacity(g.len());
        for gk in &g {
            if !gk.iter().all(|v| v.is_finite()) || (gk - gk.transpose()).abs().max() > 1e-12 * (1.0 + gk.abs().max()) {
                return Err(Error::Metric("metric must be finite and symmetric".into()));
            }
            a.push(spd_sqrt(gk)?);
            ginv.push(gk.try_inverse().ok_or_else(|| Error::Metric("singular metric".into()))?);
        }
        Ok(Self { g, a, ginv, dg: None, d2g: None })
    }

    pub fn with_derivatives(mut self, dg: Vec<[M3; 2]>, d2g: Vec<[[M3; 2]; 2]>) -> Self {
        self.dg = Some(dg);
        self.d2g = Some(d2g);
        self
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }
}

fn embed2(m: &M2, corner: f64) -> M3 {
    M3::new(m[(0, 0)], m[(0, 1)], 0.0, m[(1, 0)], m[(1, 1)], 0.0, 0.0, 0.0, corner)
}

/// `G = Q0^T Q0` with `Q0 = [∂_1 y0 | ∂_2 y0 | a]`.
pub fn prestrain_from_director(surface: &SurfaceFrame, director: &Director) -> Result<MetricField3> {
    let grid = &surface.grid;
    match director {
        Director::Normal => {
            let g = surface.points.iter().map(|p| embed2(&p.g, 1.0)).collect();
            let dg = surface.points.iter().map(|p| p.dg.map(|d| embed2(&d, 0.0))).collect();
            let d2g = surface.points.iter().map(|p| p.d2g.map(|r| r.map(|d| embed2(&d, 0.0)))).collect();
            Ok(MetricField3::from_values(g)?.with_derivatives(dg, d2g))
        }
        Director::Affine { base, d1, d2 } => {
            let rows = par::try_map_indexed(grid.len(), |k| {
                let p = &surface.points[k];
                let a = base + d1 * p.x[0] + d2 * p.x[1];
                if !(a.dot(&p.normal) > 1e-12 * a.norm().max(1e-300)) {
                    return Err(Error::FrameDegenerate {
                        node: k,
                        x1: p.x[0],
                        x2: p.x[1],
                        reason: "director is tangent to the surface or points below it".into(),
                    });
                }
                let q = M3::from_columns(&[p.dy0[0], p.dy0[1], a]);
                let da = [*d1, *d2];
                let dq = [0, 1].map(|k| M3::from_columns(&[p.d2y0[0][k], p.d2y0[1][k], da[k]]));
                let d2q = [0, 1].map(|k| [0, 1].map(|l| M3::from_columns(&[p.d3y0[0][k][l], p.d3y0[1][k][l], V3::zeros()])));
                let g = q.transpose() * q;
                let dg = [0, 1].map(|k| dq[k].transpose() * q + q.transpose() * dq[k]);
                let d2g = [0, 1].map(|k| {
                    [0, 1].map(|l| {
                        d2q[k][l].transpose() * q
                            + dq[k].transpose() * dq[l]
                            + dq[l].transpose() * dq[k]
                            + q.transpose() * d2q[k][l]
                    })
                });
                Ok((g, dg, d2g))
            })?;
            let mut g = Vec::with_capacity(rows.len());
            let mut dg = Vec::with_capacity(rows.len());
            let mut d2g = Vec::with_capacity(rows.len());
            for (a, b, c) in rows {
                g.push(a);
                dg.push(b);
                d2g.push(c);
            }
            Ok(MetricField3::from_values(g)?.with_derivatives(dg, d2g))
        }
    }
}

/// Director `b0 = -(G^13 ∂_1 y0 + G^23 ∂_2 y0)/G^33 + n/sqrt(G^33)` recovered
/// from the metric.
pub fn transversal_director(metric: &MetricField3, surface: &SurfaceFrame) -> Result<Vec<V3>> {
    par::try_map_indexed(surface.len(), |k| {
        let gi = &metric.ginv[k];
        let p = &surface.points[k];
        let g33 = gi[(2, 2)];
        if !(g33 > 0.0) {
            return Err(Error::Metric(format!("G^33 = {g33} is not positive at node {k}")));
        }
        Ok(director_from(&p.dy0, gi))
    })
}

/// Unit normal `∂_1 y × ∂_2 y / |∂_1 y × ∂_2 y|`, if the tangents span a plane.
pub fn unit_normal(dy: &[V3; 2]) -> Option<V3> {
    let c = dy[0].cross(&dy[1]);
    let n = c.norm();
    (n > 0.0 && n.is_finite()).then(|| c / n)
}

/// `-(G^13 ∂_1 y + G^23 ∂_2 y)/G^33 + n/sqrt(G^33)` for tangents `dy` and the
/// inverse metric `gi`. Callers check `G^33 > 0` and the tangents.
pub(crate) fn director_from(dy: &[V3; 2], gi: &M3) -> V3 {
    let g33 = gi[(2, 2)];
    let n = unit_normal(dy).unwrap_or_else(V3::zeros);
    -(dy[0] * gi[(0, 2)] + dy[1] * gi[(1, 2)]) / g33 + n / g33.sqrt()
}

/// Derivatives of the director and the field `d0` completing `B0`.
#[derive(Clone, Debug)]
pub struct MomentFields {
    pub db0: Vec<[V3; 2]>,
    pub d0: Vec<V3>,
}

/// Solves `Q^T d = -(<∂_1 b, b>, <∂_2 b, b>, 0)` with `Q = [∂_1 y | ∂_2 y | b]`.
pub fn completion_field(dy: &[V3; 2], b: &V3, db: &[V3; 2]) -> Option<V3> {
    let q = M3::from_columns(&[dy[0], dy[1], *b]);
    let rhs = V3::new(-db[0].dot(b), -db[1].dot(b), 0.0);
    q.transpose().lu().solve(&rhs)
}

/// `B0 e_i = ∂_i b0` by grid differences and `B0 e_3 = d0`.
pub fn moment_fields(surface: &SurfaceFrame, b0: &[V3]) -> Result<MomentFields> {
    let grid = &surface.grid;
    let db0 = grid.gradient(b0);
    let d0 = par::try_map_indexed(grid.len(), |k| {
        let p = &surface.points[k];
        completion_field(&p.dy0, &b0[k], &db0[k]).ok_or_else(|| Error::FrameDegenerate {
            node: k,
            x1: p.x[0],
            x2: p.x[1],
            reason: "frame [∂1y0 | ∂2y0 | b0] is singular".into(),
        })
    })?;
    Ok(MomentFields { db0, d0 })
}

/// Surface, prestrain metric, director and moment fields bundled together.
#[derive(Clone, Debug)]
pub struct ImmersionFrame {
    pub surface: SurfaceFrame,
    pub metric: MetricField3,
    pub b0: Vec<V3>,
    pub q0: Vec<M3>,
    pub db0: Vec<[V3; 2]>,
    pub d0: Vec<V3>,
}

impl ImmersionFrame {
    pub fn new(surface: SurfaceFrame, metric: MetricField3) -> Result<Self> {
        if metric.len() != surface.len() {
            return Err(Error::Input("metric and surface sampled on different grids".into()));
        }
        let b0 = transversal_director(&metric, &surface)?;
        let q0: Vec<M3> = surface
            .points
            .iter()
            .zip(&b0)
            .map(|(p, b)| M3::from_columns(&[p.dy0[0], p.dy0[1], *b]))
            .collect();
        for (k, q) in q0.iter().enumerate() {
            if !(q.determinant() > 0.0) {
                let x = surface.grid.point(k);
                return Err(Error::FrameDegenerate { node: k, x1: x[0], x2: x[1], reason: "det Q0 is not positive".into() });
            }
        }
        let MomentFields { db0, d0 } = moment_fields(&surface, &b0)?;
        Ok(Self { surface, metric, b0, q0, db0, d0 })
    }

    pub fn grid(&self) -> &ParamGrid {
        &self.surface.grid
    }

    pub fn len(&self) -> usize {
        self.b0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b0.is_empty()
    }

    pub fn point(&self, k: usize) -> &SurfacePoint {
        &self.surface.points[k]
    }

    /// `B0 = [∂_1 b0 | ∂_2 b0 | d0]`.
    pub fn b_matrix(&self, k: usize) -> M3 {
        M3::from_columns(&[self.db0[k][0], self.db0[k][1], self.d0[k]])
    }

    /// Pointwise `|sym((∇y0)^T ∇b0)|` (Frobenius).
    pub fn strain_residual(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let p = self.point(k);
                let m = M2::from_fn(|i, j| p.dy0[i].dot(&self.db0[k][j]));
                (0.5 * (m + m.transpose())).norm()
            })
            .collect()
    }
}

/// Samples the surface, builds the metric from `director` and completes the frame.
pub fn build_immersion(grid: &ParamGrid, height: &Height, director: &Director) -> Result<ImmersionFrame> {
    let surface = sample_graph_immersion(grid, height)?;
    let metric = prestrain_from_director(&surface, director)?;
    ImmersionFrame::new(surface, metric)
}

/// Thresholds for the admissibility verdict.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmissibilityTolerance {
    /// Relative to `1 + max |∂²G|`.
    pub curvature: f64,
    pub strain: f64,
}

impl Default for AdmissibilityTolerance {
    fn default() -> Self {
        Self { curvature: 1e-6, strain: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdmissibilityReport {
    pub r1212: Vec<f64>,
    pub r1213: Vec<f64>,
    pub r1223: Vec<f64>,
    pub max_abs_r: f64,
    pub curvature_threshold: f64,
    pub strain_residual: Vec<f64>,
    pub max_strain_residual: f64,
    pub admissible: bool,
}

fn metric_derivatives(grid: &ParamGrid, metric: &MetricField3) -> (Vec<[M3; 2]>, Vec<[[M3; 2]; 2]>) {
    match (&metric.dg, &metric.d2g) {
        (Some(dg), Some(d2g)) => (dg.clone(), d2g.clone()),
        _ => {
            let dg = grid.gradient(&metric.g);
            let d1: Vec<M3> = dg.iter().map(|d| d[0]).collect();
            let d2: Vec<M3> = dg.iter().map(|d| d[1]).collect();
            let (dd1, dd2) = (grid.gradient(&d1), grid.gradient(&d2));
            // nested differences are only first order next to the boundary
            let d2g = (0..grid.len())
                .map(|k| {
                    if !grid.is_boundary(k) {
                        return grid.second_partials(&metric.g, k);
                    }
                    let mixed = 0.5 * (dd1[k][1] + dd2[k][0]);
                    [[dd1[k][0], mixed], [mixed, dd2[k][1]]]
                })
                .collect();
            (dg, d2g)
        }
    }
}

/// Riemann components `(R_1212, R_1213, R_1223)` of the x3-independent metric
/// at one node, indices 1-based as in the usual notation.
pub fn riemann_at(ginv: &M3, dg: &[M3; 2], d2g: &[[M3; 2]; 2], g: &M3) -> [f64; 3] {
    let dd = |a: usize, b: usize| if a < 2 && b < 2 { d2g[a][b] } else { M3::zeros() };
    let dgs: [M3; 3] = [dg[0], dg[1], M3::zeros()];
    // Γ^m_ij
    let mut gam = [[[0.0; 3]; 3]; 3];
    for (m, gm) in gam.iter_mut().enumerate() {
        for (i, gi) in gm.iter_mut().enumerate() {
            for (j, gij) in gi.iter_mut().enumerate() {
                *gij = (0..3)
                    .map(|k| 0.5 * ginv[(m, k)] * (dgs[i][(k, j)] + dgs[j][(k, i)] - dgs[k][(i, j)]))
                    .sum();
            }
        }
    }
    let r = |a: usize, b: usize, c: usize, e: usize| {
        let second = 0.5 * (dd(b, c)[(a, e)] + dd(a, e)[(b, c)] - dd(a, c)[(b, e)] - dd(b, e)[(a, c)]);
        let mut quad = 0.0;
        for n in 0..3 {
            for p in 0..3 {
                quad += g[(n, p)] * (gam[n][b][c] * gam[p][a][e] - gam[n][b][e] * gam[p][a][c]);
            }
        }
        second + quad
    };
    [r(0, 1, 0, 1), r(0, 1, 0, 2), r(0, 1, 1, 2)]
}

/// Curvature of the prestrain metric together with the director strain
/// residual; maxima are taken over interior nodes.
pub fn riemann_flags(frame: &ImmersionFrame, tol: AdmissibilityTolerance) -> Result<AdmissibilityReport> {
    let grid = frame.grid();
    let metric = &frame.metric;
    for (k, gk) in metric.g.iter().enumerate() {
        if metric.ginv[k].iter().any(|v| !v.is_finite()) || !(gk.determinant() > 0.0) {
            return Err(Error::Metric(format!("metric not positive definite at node {k}")));
        }
    }
    let (dg, d2g) = metric_derivatives(grid, metric);
    let comps = par::map_indexed(grid.len(), |k| riemann_at(&metric.ginv[k], &dg[k], &d2g[k], &metric.g[k]));
    let scale = grid.interior_max(|k| d2g[k].iter().flatten().map(|m| m.abs().max()).fold(0.0, f64::max));
    let max_abs_r = grid.interior_max(|k| comps[k].iter().map(|c| c.abs()).fold(0.0, f64::max));
    let strain_residual = frame.strain_residual();
    let max_strain_residual = grid.interior_max(|k| strain_residual[k]);
    let curvature_threshold = tol.curvature * (1.0 + scale);
    Ok(AdmissibilityReport {
        r1212: comps.iter().map(|c| c[0]).collect(),
        r1213: comps.iter().map(|c| c[1]).collect(),
        r1223: comps.iter().map(|c| c[2]).collect(),
        max_abs_r,
        curvature_threshold,
        strain_residual,
        max_strain_residual,
        admissible: max_abs_r <= curvature_threshold && max_strain_residual <= tol.strain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Domain};

    fn sphere() -> Height {
        Height::SphereCap { radius: 2.0 }
    }

    #[test]
    fn polynomial_jet_matches_saddle() {
        let poly = Height::Polynomial(vec![
            Monomial { p: 2, q: 0, coef: 0.5 },
            Monomial { p: 0, q: 2, coef: -0.5 },
        ]);
        let x = [0.3, -0.7];
        assert_eq!(poly.jet(x).unwrap(), Height::Saddle.jet(x).unwrap());
    }

    #[test]
    fn polynomial_third_derivatives() {
        // f = x1^2 x2
        let poly = Height::Polynomial(vec![Monomial { p: 2, q: 1, coef: 1.0 }]);
        let j = poly.jet([2.0, 3.0]).unwrap();
        assert_eq!(j.f, 12.0);
        assert_eq!(j.d1, [12.0, 4.0]);
        assert_eq!(j.d2, [[6.0, 4.0], [4.0, 0.0]]);
        assert_eq!(j.d3[0][0][1], 2.0);
        assert_eq!(j.d3[1][0][0], 2.0);
        assert_eq!(j.d3[0][0][0], 0.0);
    }

    #[test]
    fn sphere_jet_against_differences() {
        let h = 1e-5;
        let x = [0.2, -0.3];
        let j = sphere().jet(x).unwrap();
        let jp = sphere().jet([x[0] + h, x[1]]).unwrap();
        let jm = sphere().jet([x[0] - h, x[1]]).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let fd = (jp.d2[a][b] - jm.d2[a][b]) / (2.0 * h);
                assert!((fd - j.d3[a][b][0]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn dual_derivatives_match_differences() {
        let x = [0.1, 0.25];
        let p = SurfacePoint::from_jet(x, &sphere().jet(x).unwrap());
        let h = 1e-6;
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let pp = SurfacePoint::from_jet(xp, &sphere().jet(xp).unwrap());
            let pm = SurfacePoint::from_jet(xm, &sphere().jet(xm).unwrap());
            assert!(((pp.kappa - pm.kappa) / (2.0 * h) - p.dkappa[k]).abs() < 1e-8);
            assert!(((pp.rot - pm.rot) / (2.0 * h) - p.drot[k]).abs().max() < 1e-8);
            assert!(((pp.pi - pm.pi) / (2.0 * h) - p.dpi[k]).abs().max() < 1e-8);
            assert!(((pp.normal - pm.normal) / (2.0 * h) - p.dnormal[k]).abs().max() < 1e-8);
            for a in 0..2 {
                assert!(((pp.frame[a] - pm.frame[a]) / (2.0 * h) - p.dframe[a][k]).abs().max() < 1e-8);
            }
            for l in 0..2 {
                assert!(((pp.dg[l] - pm.dg[l]) / (2.0 * h) - p.d2g[l][k]).abs().max() < 1e-7);
            }
        }
    }

    #[test]
    fn frame_is_orthonormal_and_rotation_quarter_turn() {
        let x = [0.3, 0.4];
        let p = SurfacePoint::from_jet(x, &Height::Saddle.jet(x).unwrap());
        let [e1, e2] = p.frame_ambient();
        assert!((e1.norm() - 1.0).abs() < 1e-14);
        assert!((e2.norm() - 1.0).abs() < 1e-14);
        assert!(e1.dot(&e2).abs() < 1e-14);
        assert!((e1.cross(&e2) - p.normal).norm() < 1e-14);
        assert!((p.rot * p.frame[0] + p.frame[1]).norm() < 1e-14);
        assert!((p.rot * p.frame[1] - p.frame[0]).norm() < 1e-14);
        assert!((p.rot * p.rot + M2::identity()).norm() < 1e-14);
    }

    #[test]
    fn sphere_curvature_and_mean_sign() {
        let grid = build_grid(Domain::centered(0.5), 9, 9).unwrap();
        let s = sample_graph_immersion(&grid, &sphere()).unwrap();
        for p in &s.points {
            assert!((p.kappa - 0.25).abs() < 1e-13);
            assert!(p.mean_trace() > 0.0);
            assert!(p.normal[2] > 0.0);
        }
    }

    #[test]
    fn saddle_curvature_closed_form() {
        let grid = build_grid(Domain::centered(0.5), 7, 7).unwrap();
        let s = sample_graph_immersion(&grid, &Height::Saddle).unwrap();
        for p in &s.points {
            let r = 1.0 + p.x[0] * p.x[0] + p.x[1] * p.x[1];
            assert!((p.kappa + 1.0 / (r * r)).abs() < 1e-14);
        }
    }

    #[test]
    fn sphere_outside_domain_rejected() {
        let grid = build_grid(Domain::centered(3.0), 5, 5).unwrap();
        assert!(matches!(sample_graph_immersion(&grid, &sphere()), Err(Error::Input(_))));
    }

    #[test]
    fn riemann_of_identity_is_exactly_zero() {
        let g = M3::identity();
        let r = riemann_at(&g, &[M3::zeros(); 2], &[[M3::zeros(); 2]; 2], &g);
        assert_eq!(r, [0.0; 3]);
    }

    #[test]
    fn polar_metric_curvature_vanishes() {
        // diag(1, x1^2, 1) is flat
        let x1: f64 = 1.7;
        let g = M3::from_diagonal(&V3::new(1.0, x1 * x1, 1.0));
        let ginv = g.try_inverse().unwrap();
        let dg = [M3::from_diagonal(&V3::new(0.0, 2.0 * x1, 0.0)), M3::zeros()];
        let d2g = [[M3::from_diagonal(&V3::new(0.0, 2.0, 0.0)), M3::zeros()], [M3::zeros(), M3::zeros()]];
        let r = riemann_at(&ginv, &dg, &d2g, &g);
        assert!(r.iter().all(|c| c.abs() < 1e-14), "{r:?}");
    }

    #[test]
    fn product_metric_curvature_sign() {
        let grid = build_grid(Domain::centered(0.5), 9, 9).unwrap();
        let surface = sample_graph_immersion(&grid, &sphere()).unwrap();
        let metric = prestrain_from_director(&surface, &Director::Normal).unwrap();
        for (k, p) in surface.points.iter().enumerate() {
            let dg = metric.dg.as_ref().unwrap();
            let d2g = metric.d2g.as_ref().unwrap();
            let r = riemann_at(&metric.ginv[k], &dg[k], &d2g[k], &metric.g[k]);
            let expect = p.kappa * p.g.determinant();
            assert!((r[0] - expect).abs() < 1e-12 * expect.abs().max(1.0), "{} vs {}", r[0], expect);
            assert!(r[1].abs() < 1e-13 && r[2].abs() < 1e-13);
        }
    }
}
