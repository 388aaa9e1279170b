//! Planar piecewise-linear spiral with a discontinuous field on the axes.

use nalgebra::DMatrix;
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::system::{DomainBox, HybridSystem, Preimages};

/// Counter-clockwise spiral with contraction rate `κ`, state `(x, y)`:
///
/// ```text
/// xy > 0:  X = (−κx − y/α,  αx − κy)
/// xy < 0:  X = (−κx − αy,   x/α − κy)
/// ```
///
/// The guard is `xy = 0` (always armed) with identity reset, so the only
/// hybrid effect is the switch of vector field. The hybrid Jacobian is `α²`
/// on both axes and `div X = −2κ`. A quadrant takes time `π/2`, and with
/// `α = e^{κπ/2}` the density
///
/// ```text
/// ρ̃(x, y) = e^{−2κτ},   tan τ = αx/y  (first quadrant),
/// ```
///
/// extended by `ρ̃(−y, x)`, `ρ̃(−x, −y)`, `ρ̃(y, −x)` to the fourth, third and
/// second quadrants, is invariant. The field is equivariant under the
/// quarter turn `(x, y) ↦ (−y, x)`.
#[derive(Debug, Clone)]
pub struct Filippov {
    pub alpha: f64,
    pub kappa: f64,
    domain: DomainBox,
}

/// Contraction rate for which `α = e^π` carries an invariant density.
pub const FILIPPOV_KAPPA: f64 = 2.0;

impl Filippov {
    /// Spiral with the default contraction rate.
    pub fn new(alpha: f64) -> Result<Self> {
        Self::with_kappa(alpha, FILIPPOV_KAPPA)
    }

    /// Spiral with explicit contraction rate `κ ≥ 0`.
    pub fn with_kappa(alpha: f64, kappa: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) || !(kappa >= 0.0) {
            return Err(Error::Invalid("filippov: need alpha > 0 and kappa >= 0".into()));
        }
        Ok(Self { alpha, kappa, domain: DomainBox::aperiodic(vec![-1e4, -1e4], vec![1e4, 1e4])? })
    }

    /// The value of `α` for which `ρ̃` is invariant.
    pub fn invariant_alpha(kappa: f64) -> f64 {
        (kappa * std::f64::consts::FRAC_PI_2).exp()
    }

    fn field_pos(&self, x: f64, y: f64, out: &mut [f64]) {
        out[0] = -self.kappa * x - y / self.alpha;
        out[1] = self.alpha * x - self.kappa * y;
    }

    fn field_neg(&self, x: f64, y: f64, out: &mut [f64]) {
        out[0] = -self.kappa * x - self.alpha * y;
        out[1] = x / self.alpha - self.kappa * y;
    }

    /// True when `(x, y)` is numerically on an axis; the returned flag
    /// tells whether it is the x-axis.
    fn on_axis(x: f64, y: f64) -> Option<bool> {
        if (x * y).abs() <= 1e-9 * (x * x + y * y) {
            Some(y.abs() <= x.abs())
        } else {
            None
        }
    }

    /// First-quadrant profile `e^{−2κτ}`, `τ = atan2(αx, y)`.
    fn profile(&self, x: f64, y: f64) -> f64 {
        (-2.0 * self.kappa * (self.alpha * x).atan2(y)).exp()
    }

    /// Quadrant-extended density `ρ̃`.
    pub fn invariant_density(&self, x: &[f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        if a >= 0.0 && b >= 0.0 {
            self.profile(a, b)
        } else if a >= 0.0 {
            self.profile(-b, a)
        } else if b < 0.0 {
            self.profile(-a, -b)
        } else {
            self.profile(b, -a)
        }
    }
}

impl HybridSystem for Filippov {
    fn name(&self) -> &str {
        "filippov"
    }
    fn dim(&self) -> usize {
        2
    }
    fn domain(&self) -> &DomainBox {
        &self.domain
    }
    fn vector_field(&self, x: &[f64], out: &mut [f64]) {
        if x[0] * x[1] >= 0.0 {
            self.field_pos(x[0], x[1], out)
        } else {
            self.field_neg(x[0], x[1], out)
        }
    }
    /// On the x-axis the flow arrives from an `xy < 0` quadrant, on the
    /// y-axis from an `xy > 0` quadrant.
    fn field_pre(&self, x: &[f64], out: &mut [f64]) {
        match Self::on_axis(x[0], x[1]) {
            Some(true) => self.field_neg(x[0], x[1], out),
            Some(false) => self.field_pos(x[0], x[1], out),
            None => self.vector_field(x, out),
        }
    }
    fn field_post(&self, x: &[f64], out: &mut [f64]) {
        match Self::on_axis(x[0], x[1]) {
            Some(true) => self.field_pos(x[0], x[1], out),
            Some(false) => self.field_neg(x[0], x[1], out),
            None => self.vector_field(x, out),
        }
    }
    fn guard_level(&self, x: &[f64]) -> f64 {
        x[0] * x[1]
    }
    fn guard_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![x[1], x[0]])
    }
    fn guard_armed(&self, _x: &[f64]) -> bool {
        true
    }
    fn reset(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
    fn reset_jacobian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(2, 2))
    }
    fn image_level(&self, x: &[f64]) -> f64 {
        x[0] * x[1]
    }
    fn image_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![x[1], x[0]])
    }
    fn preimages(&self, y: &[f64]) -> Preimages {
        Preimages::Finite(vec![y.to_vec()])
    }
    fn divergence(&self, _x: &[f64]) -> Option<f64> {
        Some(-2.0 * self.kappa)
    }
    fn sample_guard(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let r = rng.gen_range(0.05..5.0) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        if rng.gen::<bool>() {
            vec![r, 0.0]
        } else {
            vec![0.0, r]
        }
    }
}
