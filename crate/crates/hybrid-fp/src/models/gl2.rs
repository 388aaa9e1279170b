//! Left-invariant geodesics on `GL(2)` with impacts on `det A = 1`, in full
//! `(A, P)` coordinates, reduced `(ζ, q)` coordinates, and the 2-D `(q, C)`
//! slice.

use nalgebra::{DMatrix, Matrix2};
use rand::{Rng, RngCore};

use crate::error::Result;
use crate::reduction::{ReducedModel, ReducedSystem};
use crate::system::{DomainBox, HybridSystem, Preimages};

/// Reduced `GL(2)` system with state `(ζ₁, ζ₂, ζ₃, ζ₄, q)`, `ζ` row-major:
/// `ζ̇ = ζᵀζ − ζζᵀ`, `q̇ = (q+1) tr ζ`, guard `q = 0`, reset
/// `ζ ↦ (−ζ₄, ζ₂, ζ₃, −ζ₁)`, divergence `tr ζ`.
pub fn gl2_reduced() -> ReducedSystem {
    ReducedSystem::new("gl2", ReducedModel::gl2(), 50.0, (-1.0, 50.0)).expect("valid gl2 chart")
}

/// `C = tr ζ` and `D = ζ₃ − ζ₂`.
pub fn gl2_casimirs(z: &[f64]) -> (f64, f64) {
    (z[0] + z[3], z[2] - z[1])
}

/// `h = ½ tr(ζζᵀ)`.
pub fn gl2_energy(z: &[f64]) -> f64 {
    0.5 * z[..4].iter().map(|v| v * v).sum::<f64>()
}

/// Printed reset rule `(ζ₁, ζ₂, ζ₃, ζ₄) ↦ (−ζ₄, ζ₂, ζ₃, −ζ₁)`.
pub fn gl2_reset_rule(z: &[f64]) -> [f64; 4] {
    [-z[3], z[1], z[2], -z[0]]
}

fn mat(v: &[f64]) -> Matrix2<f64> {
    Matrix2::new(v[0], v[1], v[2], v[3])
}

fn flat(m: &Matrix2<f64>) -> [f64; 4] {
    [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]
}

/// Unreduced `GL(2)` system, state `(A, P)` both row-major, with
/// `H = ½ tr(ζζᵀ)`, `ζ = AᵀP`: `Ȧ = Aζ`, `Ṗ = −Pζᵀ`; guard `det A − 1`;
/// reset `P ↦ P − tr(ζ) A⁻ᵀ` (so `ζ ↦ ζ − tr(ζ) I`).
#[derive(Debug, Clone)]
pub struct Gl2Full {
    domain: DomainBox,
}

impl Default for Gl2Full {
    fn default() -> Self {
        Self::new()
    }
}

impl Gl2Full {
    pub fn new() -> Self {
        Self { domain: DomainBox::aperiodic(vec![-100.0; 8], vec![100.0; 8]).expect("valid box") }
    }

    /// `ζ = AᵀP`.
    pub fn zeta(x: &[f64]) -> [f64; 4] {
        flat(&(mat(&x[..4]).transpose() * mat(&x[4..8])))
    }

    /// Reduced coordinates `(ζ, det A − 1)`.
    pub fn project(x: &[f64]) -> Vec<f64> {
        let mut r = Self::zeta(x).to_vec();
        r.push(mat(&x[..4]).determinant() - 1.0);
        r
    }
}

impl HybridSystem for Gl2Full {
    fn name(&self) -> &str {
        "gl2-full"
    }
    fn dim(&self) -> usize {
        8
    }
    fn domain(&self) -> &DomainBox {
        &self.domain
    }
    fn vector_field(&self, x: &[f64], out: &mut [f64]) {
        let a = mat(&x[..4]);
        let p = mat(&x[4..8]);
        let z = a.transpose() * p;
        out[..4].copy_from_slice(&flat(&(a * z)));
        out[4..8].copy_from_slice(&flat(&(-p * z.transpose())));
    }
    fn guard_level(&self, x: &[f64]) -> f64 {
        mat(&x[..4]).determinant() - 1.0
    }
    fn guard_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![x[3], -x[2], -x[1], x[0], 0.0, 0.0, 0.0, 0.0])
    }
    fn guard_armed(&self, x: &[f64]) -> bool {
        let z = Self::zeta(x);
        z[0] + z[3] != 0.0
    }
    fn reset(&self, x: &[f64]) -> Vec<f64> {
        let a = mat(&x[..4]);
        let z = Self::zeta(x);
        let tr = z[0] + z[3];
        let ainv_t = a.try_inverse().map(|m| m.transpose()).unwrap_or_else(|| Matrix2::from_element(f64::NAN));
        let p = mat(&x[4..8]) - ainv_t * tr;
        let mut y = x[..4].to_vec();
        y.extend_from_slice(&flat(&p));
        y
    }
    fn image_level(&self, x: &[f64]) -> f64 {
        self.guard_level(x)
    }
    fn image_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.guard_gradient(x)
    }
    fn preimages(&self, y: &[f64]) -> Preimages {
        Preimages::Finite(vec![self.reset(y)])
    }
    fn divergence(&self, _x: &[f64]) -> Option<f64> {
        Some(0.0)
    }
    fn sample_guard(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let s = rng.gen_range(0.5..2.0);
        let mut x = vec![s, rng.gen_range(-0.5..0.5), 0.0, 1.0 / s];
        x.extend((0..4).map(|_| rng.gen_range(-1.0..1.0)));
        x[4] += 0.5;
        x
    }
}

/// The `(q, C)` system `q̇ = (q+1)C`, `Ċ = 0`; guard `q = 0` (both
/// directions), reset `C ↦ −C`. Solutions are `q(t) = (q₀+1)e^{Ct} − 1`.
#[derive(Debug, Clone)]
pub struct QcSystem {
    domain: DomainBox,
}

impl Default for QcSystem {
    fn default() -> Self {
        Self::new()
    }
}

impl QcSystem {
    pub fn new() -> Self {
        Self { domain: DomainBox::aperiodic(vec![-100.0, -20.0], vec![100.0, 20.0]).expect("valid box") }
    }

    /// Closed-form solution before any impact.
    pub fn closed_form(q0: f64, c: f64, t: f64) -> f64 {
        (q0 + 1.0) * (c * t).exp() - 1.0
    }
}

impl HybridSystem for QcSystem {
    fn name(&self) -> &str {
        "qc"
    }
    fn dim(&self) -> usize {
        2
    }
    fn domain(&self) -> &DomainBox {
        &self.domain
    }
    fn vector_field(&self, x: &[f64], out: &mut [f64]) {
        out[0] = (x[0] + 1.0) * x[1];
        out[1] = 0.0;
    }
    fn guard_level(&self, x: &[f64]) -> f64 {
        x[0]
    }
    fn guard_gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![1.0, 0.0])
    }
    fn guard_armed(&self, x: &[f64]) -> bool {
        x[1] != 0.0
    }
    fn reset(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0], -x[1]]
    }
    fn reset_jacobian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]))
    }
    fn image_level(&self, x: &[f64]) -> f64 {
        x[0]
    }
    fn image_gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![1.0, 0.0])
    }
    fn preimages(&self, y: &[f64]) -> Preimages {
        if y[1] != 0.0 {
            Preimages::Finite(vec![vec![y[0], -y[1]]])
        } else {
            Preimages::Finite(vec![])
        }
    }
    fn divergence(&self, x: &[f64]) -> Option<f64> {
        Some(x[1])
    }
    fn sample_guard(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let c = rng.gen_range(0.1..3.0) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        vec![0.0, c]
    }
}

/// Helper for tests and the CLI: builds the reduced model as a boxed system.
pub fn gl2_system() -> Result<Box<dyn HybridSystem>> {
    Ok(Box::new(gl2_reduced()))
}
