//! Rectangular parameter grids and the finite-difference stencils used on them.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Values that can be differenced on the grid (scalars, vectors, matrices).
pub trait GridValue: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Send + Sync {}

impl<T> GridValue for T where T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T> + Send + Sync {}

/// Axis-aligned rectangle `[x1.0, x1.1] x [x2.0, x2.1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub x1: [f64; 2],
    pub x2: [f64; 2],
}

impl Domain {
    pub const fn new(x1: [f64; 2], x2: [f64; 2]) -> Self {
        Self { x1, x2 }
    }

    pub const fn unit_square() -> Self {
        Self::new([0.0, 1.0], [0.0, 1.0])
    }

    pub const fn centered(half_width: f64) -> Self {
        Self::new([-half_width, half_width], [-half_width, half_width])
    }

    pub fn lengths(&self) -> [f64; 2] {
        [self.x1[1] - self.x1[0], self.x2[1] - self.x2[0]]
    }
}

/// Uniform tensor grid; node `k = j * n1 + i` sits at `(x1_i, x2_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrid {
    pub domain: Domain,
    pub n1: usize,
    pub n2: usize,
    pub h1: f64,
    pub h2: f64,
    boundary: Vec<bool>,
}

/// Builds a uniform grid with `n1 x n2` nodes over `domain`.
pub fn build_grid(domain: Domain, n1: usize, n2: usize) -> Result<ParamGrid> {
    if n1 < 3 || n2 < 3 {
        return Err(Error::Config(format!("grid needs at least 3 nodes per axis, got {n1}x{n2}")));
    }
    let [l1, l2] = domain.lengths();
    if !(l1.is_finite() && l2.is_finite()) || l1 <= 0.0 || l2 <= 0.0 {
        return Err(Error::Config(format!("degenerate domain {:?} x {:?}", domain.x1, domain.x2)));
    }
    let mut boundary = vec![false; n1 * n2];
    for j in 0..n2 {
        for i in 0..n1 {
            boundary[j * n1 + i] = i == 0 || j == 0 || i == n1 - 1 || j == n2 - 1;
        }
    }
    Ok(ParamGrid {
        domain,
        n1,
        n2,
        h1: l1 / (n1 - 1) as f64,
        h2: l2 / (n2 - 1) as f64,
        boundary,
    })
}

impl ParamGrid {
    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n1 + i
    }

    #[inline]
    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k % self.n1, k / self.n1)
    }

    #[inline]
    pub fn point(&self, k: usize) -> [f64; 2] {
        let (i, j) = self.coords(k);
        [
            self.domain.x1[0] + i as f64 * self.h1,
            self.domain.x2[0] + j as f64 * self.h2,
        ]
    }

    pub fn spacing(&self) -> [f64; 2] {
        [self.h1, self.h2]
    }

    /// Largest spacing, the `h` of refinement studies.
    pub fn mesh_size(&self) -> f64 {
        self.h1.max(self.h2)
    }

    #[inline]
    pub fn is_boundary(&self, k: usize) -> bool {
        self.boundary[k]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&k| !self.boundary[k])
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&k| self.boundary[k])
    }

    pub fn boundary_count(&self) -> usize {
        self.boundary.iter().filter(|b| **b).count()
    }

    /// Same domain with every cell split in two along both axes.
    pub fn refined(&self) -> ParamGrid {
        build_grid(self.domain, 2 * self.n1 - 1, 2 * self.n2 - 1).expect("refinement of a valid grid")
    }

    /// Product trapezoid weight of node `k`.
    pub fn trapezoid_weight(&self, k: usize) -> f64 {
        let (i, j) = self.coords(k);
        let w1 = if i == 0 || i == self.n1 - 1 { 0.5 } else { 1.0 };
        let w2 = if j == 0 || j == self.n2 - 1 { 0.5 } else { 1.0 };
        w1 * w2 * self.h1 * self.h2
    }

    /// Trapezoid rule over the grid with a fixed-order reduction.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.len());
        let weighted: Vec<f64> = values
            .iter()
            .enumerate()
            .map(|(k, v)| v * self.trapezoid_weight(k))
            .collect();
        par::pairwise_sum(&weighted)
    }

    /// Max of `f` over interior nodes (0 when there are none).
    pub fn interior_max(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.interior_nodes().map(f).fold(0.0, f64::max)
    }

    /// First-derivative stencil at node `k` along `axis`: central inside,
    /// second-order one-sided on the boundary.
    pub fn partial_stencil(&self, k: usize, axis: usize) -> [(usize, f64); 3] {
        let (i, j) = self.coords(k);
        let (pos, n, stride, h) = if axis == 0 {
            (i, self.n1, 1, self.h1)
        } else {
            (j, self.n2, self.n1, self.h2)
        };
        let c = 0.5 / h;
        if pos == 0 {
            [(k, -3.0 * c), (k + stride, 4.0 * c), (k + 2 * stride, -c)]
        } else if pos == n - 1 {
            [(k, 3.0 * c), (k - stride, -4.0 * c), (k - 2 * stride, c)]
        } else {
            [(k + stride, c), (k - stride, -c), (k, 0.0)]
        }
    }

    #[inline]
    pub fn partial<T: GridValue>(&self, f: &[T], k: usize, axis: usize) -> T {
        let s = self.partial_stencil(k, axis);
        f[s[0].0] * s[0].1 + f[s[1].0] * s[1].1 + f[s[2].0] * s[2].1
    }

    /// Both first partials at every node.
    pub fn gradient<T: GridValue>(&self, f: &[T]) -> Vec<[T; 2]> {
        assert_eq!(f.len(), self.len());
        par::map_indexed(self.len(), |k| [self.partial(f, k, 0), self.partial(f, k, 1)])
    }

    /// Transpose of [`ParamGrid::gradient`]: scatters per-node partial
    /// sensitivities back onto node values.
    pub fn gradient_adjoint<T: GridValue>(&self, adj: &[[T; 2]], zero: T) -> Vec<T> {
        assert_eq!(adj.len(), self.len());
        let mut out = vec![zero; self.len()];
        for (k, a) in adj.iter().enumerate() {
            for (axis, a_axis) in a.iter().enumerate() {
                for (m, c) in self.partial_stencil(k, axis) {
                    if c != 0.0 {
                        out[m] = out[m] + *a_axis * c;
                    }
                }
            }
        }
        out
    }

    /// Direct second-difference stencils at an interior node:
    /// `[[f_11, f_12], [f_21, f_22]]`.
    pub fn second_partials<T: GridValue>(&self, f: &[T], k: usize) -> [[T; 2]; 2] {
        debug_assert!(!self.is_boundary(k));
        let n1 = self.n1;
        let (h1, h2) = (self.h1, self.h2);
        let f11 = (f[k + 1] - f[k] * 2.0 + f[k - 1]) * (1.0 / (h1 * h1));
        let f22 = (f[k + n1] - f[k] * 2.0 + f[k - n1]) * (1.0 / (h2 * h2));
        let f12 = (f[k + n1 + 1] - f[k - n1 + 1] - f[k + n1 - 1] + f[k - n1 - 1]) * (0.25 / (h1 * h2));
        [[f11, f12], [f12, f22]]
    }
}

/// Least-squares slope of `log(err)` against `log(h)`; pairs with a
/// non-positive error are skipped.
pub fn observed_order(hs: &[f64], errs: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = hs
        .iter()
        .zip(errs)
        .filter(|(h, e)| **h > 0.0 && **e > 0.0)
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_grid() {
        let g = build_grid(Domain::unit_square(), 3, 3).unwrap();
        assert_eq!(g.spacing(), [0.5, 0.5]);
        assert_eq!(g.boundary_count(), 8);
        assert_eq!(g.interior_nodes().collect::<Vec<_>>(), vec![4]);
    }

    #[test]
    fn centered_65() {
        let g = build_grid(Domain::centered(0.5), 65, 65).unwrap();
        assert_eq!(g.h1, 1.0 / 64.0);
        assert_eq!(g.h2, 1.0 / 64.0);
    }

    #[test]
    fn rectangular_spacing() {
        let g = build_grid(Domain::new([0.0, 1.0], [0.0, 2.0]), 5, 9).unwrap();
        assert_eq!(g.spacing(), [0.25, 0.25]);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(matches!(build_grid(Domain::new([0.0, 0.0], [0.0, 1.0]), 5, 5), Err(Error::Config(_))));
        assert!(matches!(build_grid(Domain::unit_square(), 2, 5), Err(Error::Config(_))));
    }

    #[test]
    fn gradient_exact_on_quadratics() {
        let g = build_grid(Domain::new([-1.0, 2.0], [0.5, 1.5]), 7, 5).unwrap();
        let f: Vec<f64> = (0..g.len())
            .map(|k| {
                let [x, y] = g.point(k);
                x * x - 3.0 * x * y + 2.0 * y * y
            })
            .collect();
        for (k, d) in g.gradient(&f).iter().enumerate() {
            let [x, y] = g.point(k);
            assert!((d[0] - (2.0 * x - 3.0 * y)).abs() < 1e-12);
            assert!((d[1] - (-3.0 * x + 4.0 * y)).abs() < 1e-12);
        }
    }

    #[test]
    fn adjoint_is_transpose() {
        let g = build_grid(Domain::unit_square(), 5, 4).unwrap();
        let f: Vec<f64> = (0..g.len()).map(|k| (k as f64 * 0.37).sin()).collect();
        let a: Vec<[f64; 2]> = (0..g.len()).map(|k| [(k as f64).cos(), (k as f64 * 1.3).sin()]).collect();
        let gf = g.gradient(&f);
        let lhs: f64 = gf.iter().zip(&a).map(|(x, y)| x[0] * y[0] + x[1] * y[1]).sum();
        let gta = g.gradient_adjoint(&a, 0.0);
        let rhs: f64 = f.iter().zip(&gta).map(|(x, y)| x * y).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_integrates_bilinear_exactly() {
        let g = build_grid(Domain::new([0.0, 2.0], [1.0, 2.0]), 9, 5).unwrap();
        let f: Vec<f64> = (0..g.len()).map(|k| g.point(k)[0] * g.point(k)[1]).collect();
        assert!((g.integrate(&f) - 3.0).abs() < 1e-13);
    }

    #[test]
    fn order_fit() {
        let hs = [0.1, 0.05, 0.025];
        let es: Vec<f64> = hs.iter().map(|h| 3.0 * h * h).collect();
        assert!((observed_order(&hs, &es) - 2.0).abs() < 1e-12);
    }
}
