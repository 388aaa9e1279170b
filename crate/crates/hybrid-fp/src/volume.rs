//! Volume-form machinery: guard tangent frames, the augmented pushforward of
//! the reset, the hybrid Jacobian and the divergence with respect to `μ`.
//!
//! The hybrid Jacobian at a guard point `x` compares the flow-out volume
//! form `i_X μ` before and after the reset. With an orthonormal basis
//! `u¹…uⁿ⁻¹` of `ker ds_x`, the frame `B = [u¹ … uⁿ⁻¹, X(x)]` is mapped by
//! the augmented differential to `A = [Δ_*u¹ … Δ_*uⁿ⁻¹, X(Δ(x))]`, and
//!
//! ```text
//! 𝒥 = ρ(Δ(x)) · det A / (ρ(x) · det B).
//! ```
//!
//! Determinants are signed (LU with partial pivoting).

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_finite, Error, Result};
use crate::system::{
    check_state, decompose_tangent, dot, fd_step, field_continuous, guard_gradient, image_gradient, norm,
    numeric_gradient, HybridSystem, Preimages, TRANSVERSALITY_TOL,
};

/// Smallest admissible `|det B|`.
pub const SINGULAR_FRAME_TOL: f64 = 1e-14;

/// Hybrid Jacobian at one guard point with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianReport {
    /// Guard point at which the Jacobian was evaluated.
    pub x_guard: Vec<f64>,
    /// Signed hybrid Jacobian.
    pub jac: f64,
    /// Larger of the 2-norm condition numbers of the two frame matrices.
    pub cond: f64,
    /// Largest `|ds(uⁱ)|` over the guard basis.
    pub basis_residual: f64,
}

/// Orthonormal basis of `ker ds` at `x` from Gram–Schmidt on the standard
/// basis projected off the guard normal; the standard vector most aligned
/// with the normal is discarded.
pub fn guard_tangent_basis(sys: &dyn HybridSystem, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_state(sys, x)?;
    let grad = guard_gradient(sys, x);
    orthonormal_complement(&grad)
}

/// Orthonormal basis of the orthogonal complement of `g`.
pub(crate) fn orthonormal_complement(g: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = g.len();
    let gn = norm(g);
    if !(gn >= 1e-12) {
        return Err(Error::DegenerateGuard { norm: gn });
    }
    let nhat: Vec<f64> = g.iter().map(|v| v / gn).collect();
    let skip = (0..n)
        .max_by(|&a, &b| nhat[a].abs().partial_cmp(&nhat[b].abs()).unwrap())
        .unwrap();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n - 1);
    for k in (0..n).filter(|&k| k != skip) {
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        // Project twice for numerical orthogonality.
        for _ in 0..2 {
            let c = dot(&v, &nhat);
            v.iter_mut().zip(&nhat).for_each(|(a, b)| *a -= c * b);
            for u in &basis {
                let c = dot(&v, u);
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
            }
        }
        let vn = norm(&v);
        v.iter_mut().for_each(|a| *a /= vn);
        basis.push(v);
    }
    Ok(basis)
}

fn scale_of(sys: &dyn HybridSystem) -> f64 {
    let d = sys.domain();
    let n = sys.continuous_dim();
    (0..n).map(|i| d.extent(i).min(1e3)).sum::<f64>() / n as f64
}

/// Differential of the reset applied to `v`: analytic Jacobian if supplied,
/// else a central difference of `Δ` along `v`.
pub fn reset_differential(sys: &dyn HybridSystem, x: &[f64], v: &[f64]) -> Vec<f64> {
    if let Some(j) = sys.reset_jacobian(x) {
        return (j * DVector::from_column_slice(v)).as_slice().to_vec();
    }
    numeric_reset_differential(sys, x, v)
}

/// Central-difference reset differential along `v` (step scaled with the chart).
pub fn numeric_reset_differential(sys: &dyn HybridSystem, x: &[f64], v: &[f64]) -> Vec<f64> {
    let n = sys.continuous_dim();
    let vn = norm(v);
    if vn == 0.0 {
        return vec![0.0; n];
    }
    let eps = 1e-6 * scale_of(sys) / vn;
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for i in 0..n {
        xp[i] += eps * v[i];
        xm[i] -= eps * v[i];
    }
    let (dp, dm) = (sys.reset(&xp), sys.reset(&xm));
    (0..n).map(|i| (dp[i] - dm[i]) / (2.0 * eps)).collect()
}

/// Augmented pushforward of `v` at a guard point: decompose
/// `v = v_s + c·X(x)` and return `Δ_* v_s + c·X(Δ(x))`.
pub fn augmented_pushforward(sys: &dyn HybridSystem, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let (vs, c) = decompose_tangent(sys, x, v)?;
    let dv = reset_differential(sys, x, &vs);
    let y = sys.reset(x);
    let xpost = field_continuous(sys, |a, o| sys.field_post(a, o), &y);
    Ok(dv.iter().zip(&xpost).map(|(a, b)| a + c * b).collect())
}

fn columns(cols: &[Vec<f64>]) -> DMatrix<f64> {
    let n = cols[0].len();
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

fn condition(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let (mx, mn) = sv.iter().fold((0.0f64, f64::INFINITY), |(a, b), &s| (a.max(s), b.min(s)));
    if mn > 0.0 {
        mx / mn
    } else {
        f64::INFINITY
    }
}

/// Hybrid Jacobian at a guard point using the default tangent basis.
pub fn hybrid_jacobian(sys: &dyn HybridSystem, x: &[f64]) -> Result<JacobianReport> {
    let basis = guard_tangent_basis(sys, x)?;
    hybrid_jacobian_with_basis(sys, x, &basis)
}

/// Hybrid Jacobian from a caller-supplied basis of `ker ds_x`.
pub fn hybrid_jacobian_with_basis(sys: &dyn HybridSystem, x: &[f64], basis: &[Vec<f64>]) -> Result<JacobianReport> {
    check_state(sys, x)?;
    let n = sys.continuous_dim();
    if basis.len() + 1 != n {
        return Err(Error::DimensionMismatch { expected: n - 1, got: basis.len() });
    }
    let grad = guard_gradient(sys, x);
    let basis_residual = basis.iter().map(|u| dot(&grad, u).abs()).fold(0.0, f64::max);
    let xpre = field_continuous(sys, |a, o| sys.field_pre(a, o), x);
    let ds_x = dot(&grad, &xpre);
    if !(ds_x.abs() > TRANSVERSALITY_TOL * norm(&grad) * norm(&xpre)) {
        return Err(Error::TangentFlow { ds_x });
    }
    let y = sys.reset(x);
    let xpost = field_continuous(sys, |a, o| sys.field_post(a, o), &y);
    let mut bcols: Vec<Vec<f64>> = basis.to_vec();
    bcols.push(xpre);
    let mut acols: Vec<Vec<f64>> = basis.iter().map(|u| reset_differential(sys, x, u)).collect();
    acols.push(xpost);
    let (b, a) = (columns(&bcols), columns(&acols));
    let det_b = b.clone().lu().determinant();
    if !(det_b.abs() >= SINGULAR_FRAME_TOL) {
        return Err(Error::SingularFrame { det: det_b });
    }
    let det_a = a.clone().lu().determinant();
    let jac = sys.ref_density(&y) * det_a / (sys.ref_density(x) * det_b);
    if !jac.is_finite() {
        return Err(Error::NonFinite { what: "hybrid Jacobian".into() });
    }
    Ok(JacobianReport { x_guard: x.to_vec(), jac, cond: condition(&b).max(condition(&a)), basis_residual })
}

/// Hybrid Jacobian computed as a ratio of induced surface forms: the
/// interior product `i_X μ` is evaluated on the guard basis before the reset
/// and on its (plain, finite-difference) reset image after it. No flow
/// decomposition is involved, so this is an independent code path.
pub fn surface_form_jacobian(sys: &dyn HybridSystem, x: &[f64]) -> Result<f64> {
    let basis = guard_tangent_basis(sys, x)?;
    let y = sys.reset(x);
    let xpre = field_continuous(sys, |a, o| sys.field_pre(a, o), x);
    let xpost = field_continuous(sys, |a, o| sys.field_post(a, o), &y);
    let mut before = vec![xpre];
    before.extend(basis.iter().cloned());
    let mut after = vec![xpost];
    after.extend(basis.iter().map(|u| numeric_reset_differential(sys, x, u)));
    let db = columns(&before).lu().determinant();
    if !(db.abs() >= SINGULAR_FRAME_TOL) {
        return Err(Error::SingularFrame { det: db });
    }
    let da = columns(&after).lu().determinant();
    Ok(sys.ref_density(&y) * da / (sys.ref_density(x) * db))
}

/// Hybrid Jacobian of the inverse reset at `y ∈ Δ(S)`, built from the image
/// level, the (unique) preimage and the two one-sided fields. Multiplied by
/// the forward Jacobian at the preimage it should give one.
pub fn inverse_jacobian(sys: &dyn HybridSystem, y: &[f64]) -> Result<f64> {
    check_state(sys, y)?;
    let n = sys.continuous_dim();
    let pre = |p: &[f64]| -> Result<Vec<f64>> {
        match sys.preimages(p) {
            Preimages::Infinite => Err(Error::InfinitePreimage),
            Preimages::Finite(mut v) if v.len() == 1 => Ok(v.pop().unwrap()),
            Preimages::Finite(v) => Err(Error::Invalid(format!("expected one preimage, found {}", v.len()))),
        }
    };
    let z = pre(y)?;
    let basis = orthonormal_complement(&image_gradient(sys, y))?;
    let xpost = field_continuous(sys, |a, o| sys.field_post(a, o), y);
    let xpre = field_continuous(sys, |a, o| sys.field_pre(a, o), &z);
    let eps = 1e-6 * scale_of(sys);
    let mut bcols = basis.clone();
    bcols.push(xpost);
    let mut acols = Vec::with_capacity(n);
    for u in &basis {
        let mut yp = y.to_vec();
        let mut ym = y.to_vec();
        for i in 0..n {
            yp[i] += eps * u[i];
            ym[i] -= eps * u[i];
        }
        let (zp, zm) = (pre(&yp)?, pre(&ym)?);
        acols.push((0..n).map(|i| (zp[i] - zm[i]) / (2.0 * eps)).collect());
    }
    acols.push(xpre);
    let db = columns(&bcols).lu().determinant();
    if !(db.abs() >= SINGULAR_FRAME_TOL) {
        return Err(Error::SingularFrame { det: db });
    }
    let da = columns(&acols).lu().determinant();
    Ok(sys.ref_density(&z) * da / (sys.ref_density(y) * db))
}

/// Divergence of `X` with respect to `μ = ρ dx`: analytic when supplied,
/// otherwise [`numeric_divergence`].
pub fn divergence_mu(sys: &dyn HybridSystem, x: &[f64]) -> Result<f64> {
    check_state(sys, x)?;
    let d = match sys.divergence(x) {
        Some(d) => d,
        None => numeric_divergence(sys, x),
    };
    if d.is_finite() {
        Ok(d)
    } else {
        Err(Error::NonFinite { what: "divergence".into() })
    }
}

/// `(1/ρ) Σᵢ ∂(ρ Xⁱ)/∂xⁱ` by central differences (step `1e-5 · extent`).
pub fn numeric_divergence(sys: &dyn HybridSystem, x: &[f64]) -> f64 {
    let n = sys.continuous_dim();
    let mut y = x.to_vec();
    let mut f = vec![0.0; sys.dim()];
    let mut acc = 0.0;
    for i in 0..n {
        let h = fd_step(sys, i, 1e-5);
        y[i] = x[i] + h;
        sys.vector_field(&y, &mut f);
        let up = sys.ref_density(&y) * f[i];
        y[i] = x[i] - h;
        sys.vector_field(&y, &mut f);
        let dn = sys.ref_density(&y) * f[i];
        y[i] = x[i];
        acc += (up - dn) / (2.0 * h);
    }
    acc / sys.ref_density(x)
}

/// Numerical gradient of an arbitrary scalar over the continuous
/// coordinates, exposed for tests and diagnostics.
pub fn scalar_gradient(sys: &dyn HybridSystem, f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Result<Vec<f64>> {
    check_state(sys, x)?;
    let g = numeric_gradient(sys, f, x, 1e-6);
    ensure_finite(&g, "gradient")?;
    Ok(g)
}
