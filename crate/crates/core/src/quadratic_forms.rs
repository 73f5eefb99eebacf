//! Stored-energy densities, their Hessian form at the identity and the planar
//! form obtained by relaxing the out-of-plane entries.

use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::{M2, M3, V3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DensityModel {
    /// `μ |E|^2 + (λ/2) (tr E)^2` with `E = (F^T F - I)/2` (Saint Venant-Kirchhoff).
    /// Frame indifferent, but it also vanishes on reflections, so it only
    /// bounds the distance to SO(3) near orientation-preserving matrices.
    IsotropicQuadratic,
    /// `μ Σ(σ_i - 1)^2 + (λ/2)(Σ(σ_i - 1))^2` over the signed singular values of
    /// `F`; equals `dist^2(F, SO(3))` when `μ = 1, λ = 0`.
    SquaredDistance,
}

/// Lamé pair and density family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Material {
    pub mu: f64,
    pub lambda: f64,
    pub model: DensityModel,
}

impl Default for Material {
    fn default() -> Self {
        Self { mu: 1.0, lambda: 0.0, model: DensityModel::SquaredDistance }
    }
}

impl Material {
    pub fn new(mu: f64, lambda: f64, model: DensityModel) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) || !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Config(format!("material needs mu > 0 and lambda >= 0, got mu={mu}, lambda={lambda}")));
        }
        Ok(Self { mu, lambda, model })
    }

    pub fn lame(mu: f64, lambda: f64) -> Result<Self> {
        Self::new(mu, lambda, DensityModel::SquaredDistance)
    }
}

/// Signed principal stretches minus one; the smallest stretch is negated
/// when `det F < 0`.
fn stretch_defects(f: &M3) -> V3 {
    let det = f.determinant();
    if det > 0.0 {
        // σ - 1 = e / (1 + sqrt(1 + e)) with e the eigenvalues of F^T F - I,
        // which stays accurate for small strains
        let e = SymmetricEigen::new(f.transpose() * f - M3::identity()).eigenvalues;
        e.map(|e| e / (1.0 + (1.0 + e).max(0.0).sqrt()))
    } else {
        let mut s = f.singular_values();
        let (imin, _) = s.argmin();
        s[imin] = -s[imin];
        s.map(|x| x - 1.0)
    }
}

/// Energy density `W(F)`.
pub fn density_w(f: &M3, mat: &Material) -> Result<f64> {
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite deformation gradient".into()));
    }
    Ok(match mat.model {
        DensityModel::IsotropicQuadratic => {
            let e = 0.5 * (f.transpose() * f - M3::identity());
            mat.mu * e.norm_squared() + 0.5 * mat.lambda * e.trace().powi(2)
        }
        DensityModel::SquaredDistance => {
            let d = stretch_defects(f);
            mat.mu * d.norm_squared() + 0.5 * mat.lambda * d.sum().powi(2)
        }
    })
}

/// `Q3(F) = 2μ|sym F|^2 + λ (tr F)^2`, the Hessian of `W` at the identity.
pub fn q3(f: &M3, mat: &Material) -> f64 {
    let s = 0.5 * (f + f.transpose());
    2.0 * mat.mu * s.norm_squared() + mat.lambda * f.trace().powi(2)
}

/// Polar form of [`q3`] on symmetric matrices.
fn q3_bilinear(x: &M3, y: &M3, mat: &Material) -> f64 {
    2.0 * mat.mu * x.component_mul(y).sum() + mat.lambda * x.trace() * y.trace()
}

/// Minimum of the relaxed form and the minimizing completion vector `c`, such
/// that `F* + sym(c ⊗ e3)` is the minimizing completion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelaxedForm {
    pub value: f64,
    pub c: V3,
}

fn embed(f2: &M2) -> M3 {
    let s = 0.5 * (f2 + f2.transpose());
    M3::new(s[(0, 0)], s[(0, 1)], 0.0, s[(1, 0)], s[(1, 1)], 0.0, 0.0, 0.0, 0.0)
}

/// Symmetric completion directions for `(s13, s23, s33)`.
fn completion_basis() -> [M3; 3] {
    let mut b = [M3::zeros(); 3];
    b[0][(0, 2)] = 1.0;
    b[0][(2, 0)] = 1.0;
    b[1][(1, 2)] = 1.0;
    b[1][(2, 1)] = 1.0;
    b[2][(2, 2)] = 1.0;
    b
}

/// Completion entries `(s13, s23, s33)` to the vector `c = (2 s13, 2 s23, s33)`.
fn to_c(s: &V3) -> V3 {
    V3::new(2.0 * s[0], 2.0 * s[1], s[2])
}

/// Evaluates `Q3(A^{-1} (F* + sym(c ⊗ e3)) A^{-1})`.
pub fn q2a_at(f2: &M2, ainv: &M3, c: &V3, mat: &Material) -> f64 {
    let b = completion_basis();
    let s = embed(f2) + b[0] * (0.5 * c[0]) + b[1] * (0.5 * c[1]) + b[2] * c[2];
    q3(&(ainv * s * ainv), mat)
}

/// Relaxed planar form `min Q3(A^{-1} F~ A^{-1})` over completions `F~` of `F2`.
pub fn q2a(f2: &M2, a: &M3, mat: &Material) -> RelaxedForm {
    let ainv = a.try_inverse().expect("A is positive definite");
    let b = completion_basis().map(|bi| ainv * bi * ainv);
    let s0 = ainv * embed(f2) * ainv;
    let normal = Matrix3::from_fn(|i, j| q3_bilinear(&b[i], &b[j], mat));
    let rhs = V3::from_fn(|i, _| -q3_bilinear(&b[i], &s0, mat));
    let t = normal
        .cholesky()
        .expect("normal equations are positive definite for mu > 0")
        .solve(&rhs);
    let opt = s0 + b[0] * t[0] + b[1] * t[1] + b[2] * t[2];
    RelaxedForm { value: q3(&opt, mat), c: to_c(&t) }
}

/// Dense-scan oracle for [`q2a`]: samples `(s13, s23, s33)` on a 33^3 lattice
/// over `[-half_width, half_width]^3`, then repeatedly rescans a lattice four
/// times finer around the best point until the spacing is below `step`.
/// Returns the smallest value seen and its completion vector.
pub fn q2a_bruteforce(f2: &M2, a: &M3, mat: &Material, half_width: f64, step: f64) -> RelaxedForm {
    let ainv = a.try_inverse().expect("A is positive definite");
    const N: i32 = 16;
    let eval = |s: &V3| q2a_at(f2, &ainv, &to_c(s), mat);
    let mut center = V3::zeros();
    let mut h = half_width / N as f64;
    let mut best = (f64::INFINITY, center);
    loop {
        for i in -N..=N {
            for j in -N..=N {
                for k in -N..=N {
                    let s = center + V3::new(i as f64, j as f64, k as f64) * h;
                    if s.iter().any(|x| x.abs() > half_width + 1e-12) {
                        continue;
                    }
                    let v = eval(&s);
                    if v < best.0 {
                        best = (v, s);
                    }
                }
            }
        }
        if h <= step {
            break;
        }
        center = best.1;
        h /= 4.0;
    }
    RelaxedForm { value: best.0, c: to_c(&best.1) }
}

/// Symmetric matrix `K` with `q2a(M) = m^T K m` for symmetric `M` and
/// `m = (M11, M22, M12)`.
pub fn q2a_matrix(a: &M3, mat: &Material) -> M3 {
    let basis = [M2::new(1.0, 0.0, 0.0, 0.0), M2::new(0.0, 0.0, 0.0, 1.0), M2::new(0.0, 1.0, 1.0, 0.0)];
    let diag = basis.map(|b| q2a(&b, a, mat).value);
    M3::from_fn(|i, j| {
        if i == j {
            diag[i]
        } else {
            0.5 * (q2a(&(basis[i] + basis[j]), a, mat).value - diag[i] - diag[j])
        }
    })
}

/// Linear map `m = (M11, M22, M12) -> c(M)` of the minimizing completion.
pub fn completion_matrix(a: &M3, mat: &Material) -> M3 {
    let basis = [M2::new(1.0, 0.0, 0.0, 0.0), M2::new(0.0, 0.0, 0.0, 1.0), M2::new(0.0, 1.0, 1.0, 0.0)];
    let cols = basis.map(|b| q2a(&b, a, mat).c);
    M3::from_columns(&cols)
}

/// `(M11, M22, M12)` of the symmetric part of `m`.
pub fn voigt(m: &M2) -> V3 {
    V3::new(m[(0, 0)], m[(1, 1)], 0.5 * (m[(0, 1)] + m[(1, 0)]))
}
