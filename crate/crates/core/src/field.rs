//! Displacement fields on the parameter grid.

use crate::grid::ParamGrid;
use crate::surface_geometry::SurfaceFrame;
use crate::V3;

/// Where a displacement field came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldTag {
    Analytic,
    StrainSolver,
    Optimizer,
}

/// An `R^3` displacement per node, optionally with exact first derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementField {
    pub values: Vec<V3>,
    /// `grad[k][i] = ∂_i V` at node `k` when known exactly.
    pub grad: Option<Vec<[V3; 2]>>,
    pub tag: FieldTag,
}

impl DisplacementField {
    pub fn new(values: Vec<V3>, tag: FieldTag) -> Self {
        Self { values, grad: None, tag }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![V3::zeros(); n], FieldTag::Analytic)
    }

    pub fn with_grad(mut self, grad: Vec<[V3; 2]>) -> Self {
        assert_eq!(grad.len(), self.values.len());
        self.grad = Some(grad);
        self
    }

    /// Samples `f` at the grid nodes.
    pub fn from_fn(grid: &ParamGrid, f: impl Fn([f64; 2]) -> V3) -> Self {
        Self::new((0..grid.len()).map(|k| f(grid.point(k))).collect(), FieldTag::Analytic)
    }

    /// Infinitesimal rigid motion `w × y0 + c` with its exact gradient.
    pub fn rigid(surface: &SurfaceFrame, w: V3, c: V3) -> Self {
        let values = surface.points.iter().map(|p| w.cross(&p.y0) + c).collect();
        let grad = surface.points.iter().map(|p| [w.cross(&p.dy0[0]), w.cross(&p.dy0[1])]).collect();
        Self::new(values, FieldTag::Analytic).with_grad(grad)
    }

    /// Out-of-plane field `(0, 0, v)`.
    pub fn vertical(grid: &ParamGrid, v: impl Fn([f64; 2]) -> f64) -> Self {
        Self::from_fn(grid, |x| V3::new(0.0, 0.0, v(x)))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Exact gradient if attached, grid differences otherwise.
    pub fn gradient(&self, grid: &ParamGrid) -> Vec<[V3; 2]> {
        match &self.grad {
            Some(g) => g.clone(),
            None => grid.gradient(&self.values),
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * a).collect(),
            grad: self.grad.as_ref().map(|g| g.iter().map(|d| [d[0] * a, d[1] * a]).collect()),
            tag: self.tag,
        }
    }

    /// Grid values only; drops any attached exact gradient.
    pub fn sampled(&self) -> Self {
        Self::new(self.values.clone(), self.tag)
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}
