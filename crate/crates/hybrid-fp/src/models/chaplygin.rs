//! Chaplygin sleigh bouncing between two angular walls `θ = ±θ₀`.

use nalgebra::{DMatrix, Matrix4, Vector4};
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::system::{DomainBox, HybridSystem, Preimages};

/// Physical parameters shared by the sleigh models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SleighParams {
    /// Mass.
    pub m: f64,
    /// Distance from the contact point to the centre of mass.
    pub a: f64,
    /// Moment of inertia about the centre of mass.
    pub inertia: f64,
    /// Wall angle `θ₀ ∈ (0, π)`.
    pub theta0: f64,
}

impl Default for SleighParams {
    fn default() -> Self {
        Self { m: 1.0, a: 0.5, inertia: 1.0, theta0: std::f64::consts::FRAC_PI_4 }
    }
}

impl SleighParams {
    /// Checks positivity and `θ₀ ∈ (0, π)`.
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.a > 0.0 && self.inertia > 0.0) {
            return Err(Error::Invalid("sleigh: m, a and I must be positive".into()));
        }
        if !(self.theta0 > 0.0 && self.theta0 < std::f64::consts::PI) {
            return Err(Error::Invalid("sleigh: theta0 must lie in (0, pi)".into()));
        }
        Ok(())
    }

    /// `I + m a²`.
    pub fn j(&self) -> f64 {
        self.inertia + self.m * self.a * self.a
    }

    /// `m a / (I + m a²)`.
    pub fn k(&self) -> f64 {
        self.m * self.a / self.j()
    }

    /// Kinetic energy `½ m v² + ½ (I + m a²) ω²`.
    pub fn energy(&self, v: f64, omega: f64) -> f64 {
        0.5 * self.m * v * v + 0.5 * self.j() * omega * omega
    }
}

fn wall_level(theta: f64, theta0: f64) -> f64 {
    (theta - theta0) * (theta + theta0)
}

/// Reduced sleigh, state `(v, ω, θ)`:
/// `v̇ = aω²`, `ω̇ = −(ma/(I+ma²)) v ω`, `θ̇ = ω`; guard
/// `(θ−θ₀)(θ+θ₀) = 0` armed when `ωθ > 0`; reset `ω ↦ −ω`.
#[derive(Debug, Clone)]
pub struct Chaplygin3d {
    pub p: SleighParams,
    domain: DomainBox,
}

impl Chaplygin3d {
    pub fn new(p: SleighParams) -> Result<Self> {
        p.validate()?;
        let pi = std::f64::consts::PI;
        Ok(Self { p, domain: DomainBox::new(vec![-50.0, -50.0, -pi], vec![50.0, 50.0, pi], vec![false, false, true])? })
    }
}

impl HybridSystem for Chaplygin3d {
    fn name(&self) -> &str {
        "chaplygin3d"
    }
    fn dim(&self) -> usize {
        3
    }
    fn domain(&self) -> &DomainBox {
        &self.domain
    }
    fn vector_field(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.p.a * x[1] * x[1];
        out[1] = -self.p.k() * x[0] * x[1];
        out[2] = x[1];
    }
    fn guard_level(&self, x: &[f64]) -> f64 {
        wall_level(x[2], self.p.theta0)
    }
    fn guard_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0, 0.0, 2.0 * x[2]])
    }
    fn guard_armed(&self, x: &[f64]) -> bool {
        x[1] * x[2] > 0.0
    }
    fn reset(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0], -x[1], x[2]]
    }
    fn reset_jacobian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0, 1.0])))
    }
    fn image_level(&self, x: &[f64]) -> f64 {
        wall_level(x[2], self.p.theta0)
    }
    fn image_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0, 0.0, 2.0 * x[2]])
    }
    fn preimages(&self, y: &[f64]) -> Preimages {
        if y[1] * y[2] < 0.0 {
            Preimages::Finite(vec![vec![y[0], -y[1], y[2]]])
        } else {
            Preimages::Finite(vec![])
        }
    }
    fn divergence(&self, x: &[f64]) -> Option<f64> {
        Some(-self.p.k() * x[0])
    }
    fn sample_guard(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        vec![rng.gen_range(-2.0..2.0), side * rng.gen_range(0.1..2.0), side * self.p.theta0]
    }
}

/// Energy-reduced sleigh on two sheets, state `(v, θ, σ)` with `σ = ±1`:
/// `v̇ = a(C₁ − C₂v²)`, `θ̇ = σ √(C₁ − C₂v²)`, `C₁ = 2E/(I+ma²)`,
/// `C₂ = m/(I+ma²)`. Hitting a wall swaps the sheet. The chart is
/// `v ∈ [−v*, v*]`, `θ ∈ [−θ₀, θ₀]` with `v* = √(C₁/C₂)`.
#[derive(Debug, Clone)]
pub struct Chaplygin2d {
    pub p: SleighParams,
    pub energy: f64,
    domain: DomainBox,
}

impl Chaplygin2d {
    pub fn new(p: SleighParams, energy: f64) -> Result<Self> {
        p.validate()?;
        if !(energy > 0.0) {
            return Err(Error::Invalid("chaplygin2d: energy must be positive".into()));
        }
        let vs = (2.0 * energy / p.m).sqrt();
        let domain = DomainBox::aperiodic(vec![-vs, -p.theta0, -1.5], vec![vs, p.theta0, 1.5])?;
        Ok(Self { p, energy, domain })
    }

    /// `C₁ = 2E/(I+ma²)`.
    pub fn c1(&self) -> f64 {
        2.0 * self.energy / self.p.j()
    }

    /// `C₂ = m/(I+ma²)`.
    pub fn c2(&self) -> f64 {
        self.p.m / self.p.j()
    }

    /// Stable fixed point `v* = √(C₁/C₂)`.
    pub fn v_star(&self) -> f64 {
        (self.c1() / self.c2()).sqrt()
    }

    /// `v(t) = v* tanh(a C₂ v* t)` from `v(0) = 0`.
    pub fn v_closed_form(&self, t: f64) -> f64 {
        let vs = self.v_star();
        vs * (self.p.a * self.c2() * vs * t).tanh()
    }

    /// Angular speed `√(C₁ − C₂v²)` on the energy level.
    pub fn omega_abs(&self, v: f64) -> f64 {
        (self.c1() - self.c2() * v * v).max(0.0).sqrt()
    }

    /// Validated state `(v, θ, σ)`; `v` must lie in the energy disc.
    pub fn state(&self, v: f64, theta: f64, sigma: f64) -> Result<Vec<f64>> {
        if v.abs() > self.v_star() {
            return Err(Error::Domain(format!("|v| = {} exceeds v* = {}", v.abs(), self.v_star())));
        }
        if sigma != 1.0 && sigma != -1.0 {
            return Err(Error::Domain("sheet label must be +1 or -1".into()));
        }
        Ok(vec![v, theta, sigma])
    }
}

impl HybridSystem for Chaplygin2d {
    fn name(&self) -> &str {
        "chaplygin2d"
    }
    fn dim(&self) -> usize {
        3
    }
    fn continuous_dim(&self) -> usize {
        2
    }
    fn sheet_count(&self) -> usize {
        2
    }
    fn sheet_index(&self, x: &[f64]) -> usize {
        if x[2] > 0.0 {
            0
        } else {
            1
        }
    }
    fn sheet_value(&self, sheet: usize) -> f64 {
        if sheet == 0 {
            1.0
        } else {
            -1.0
        }
    }
    fn domain(&self) -> &DomainBox {
        &self.domain
    }
    fn vector_field(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.p.a * (self.c1() - self.c2() * x[0] * x[0]);
        out[1] = x[2] * self.omega_abs(x[0]);
        out[2] = 0.0;
    }
    fn guard_level(&self, x: &[f64]) -> f64 {
        wall_level(x[1], self.p.theta0)
    }
    fn guard_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0, 2.0 * x[1]])
    }
    fn guard_armed(&self, x: &[f64]) -> bool {
        x[2] * x[1] > 0.0
    }
    fn reset(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0], x[1], -x[2]]
    }
    fn reset_jacobian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(2, 2))
    }
    fn image_level(&self, x: &[f64]) -> f64 {
        wall_level(x[1], self.p.theta0)
    }
    fn image_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0, 2.0 * x[1]])
    }
    fn preimages(&self, y: &[f64]) -> Preimages {
        if y[2] * y[1] < 0.0 {
            Preimages::Finite(vec![vec![y[0], y[1], -y[2]]])
        } else {
            Preimages::Finite(vec![])
        }
    }
    fn divergence(&self, x: &[f64]) -> Option<f64> {
        Some(-2.0 * self.p.a * self.c2() * x[0])
    }
    fn sample_guard(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let vs = self.v_star();
        vec![rng.gen_range(-0.9 * vs..0.9 * vs), side * self.p.theta0, side]
    }
}

/// Unreduced sleigh with the knife-edge constraint `ẋ sinθ − ẏ cosθ = 0`,
/// state `(x, y, θ, ẋ, ẏ, θ̇)`; accelerations and the constraint force come
/// from the 4×4 Lagrange–d'Alembert system. Walls flip `θ̇`.
#[derive(Debug, Clone)]
pub struct ChaplyginFull {
    pub p: SleighParams,
    domain: DomainBox,
}

impl ChaplyginFull {
    pub fn new(p: SleighParams) -> Result<Self> {
        p.validate()?;
        let pi = std::f64::consts::PI;
        let domain = DomainBox::new(
            vec![-1e4, -1e4, -pi, -100.0, -100.0, -100.0],
            vec![1e4, 1e4, pi, 100.0, 100.0, 100.0],
            vec![false, false, true, false, false, false],
        )?;
        Ok(Self { p, domain })
    }

    /// Full state with the contact point at the origin matching reduced
    /// coordinates `(v, ω, θ)`.
    pub fn lift(&self, reduced: &[f64]) -> Vec<f64> {
        let (v, w, th) = (reduced[0], reduced[1], reduced[2]);
        vec![0.0, 0.0, th, v * th.cos(), v * th.sin(), w]
    }

    /// `(v, ω, θ)` with `v = ẋ cosθ + ẏ sinθ`.
    pub fn project(x: &[f64]) -> Vec<f64> {
        let th = x[2];
        vec![x[3] * th.cos() + x[4] * th.sin(), x[5], th]
    }

    /// Constraint residual `ẋ sinθ − ẏ cosθ`.
    pub fn constraint(x: &[f64]) -> f64 {
        x[3] * x[2].sin() - x[4] * x[2].cos()
    }
}

impl HybridSystem for ChaplyginFull {
    fn name(&self) -> &str {
        "chaplygin-full"
    }
    fn dim(&self) -> usize {
        6
    }
    fn domain(&self) -> &DomainBox {
        &self.domain
    }
    fn vector_field(&self, x: &[f64], out: &mut [f64]) {
        let SleighParams { m, a, inertia, .. } = self.p;
        let (s, c) = x[2].sin_cos();
        let (xd, yd, w) = (x[3], x[4], x[5]);
        // Unknowns (ẍ, ÿ, θ̈, λ).
        #[rustfmt::skip]
        let mat = Matrix4::new(
            m,       0.0,    -m * a * s,           s,
            0.0,     m,       m * a * c,          -c,
            -m * a * s, m * a * c, inertia + m * a * a, 0.0,
            -s,      c,       0.0,                 0.0,
        );
        let rhs = Vector4::new(m * a * c * w * w, m * a * s * w * w, 0.0, w * (xd * c + yd * s));
        let sol = mat.lu().solve(&rhs).unwrap_or_else(|| Vector4::from_element(f64::NAN));
        out[0] = xd;
        out[1] = yd;
        out[2] = w;
        out[3] = sol[0];
        out[4] = sol[1];
        out[5] = sol[2];
    }
    fn guard_level(&self, x: &[f64]) -> f64 {
        wall_level(x[2], self.p.theta0)
    }
    fn guard_armed(&self, x: &[f64]) -> bool {
        x[5] * x[2] > 0.0
    }
    fn reset(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        y[5] = -y[5];
        y
    }
    fn image_level(&self, x: &[f64]) -> f64 {
        wall_level(x[2], self.p.theta0)
    }
    fn preimages(&self, y: &[f64]) -> Preimages {
        if y[5] * y[2] < 0.0 {
            Preimages::Finite(vec![self.reset(y)])
        } else {
            Preimages::Finite(vec![])
        }
    }
    fn sample_guard(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let r = [rng.gen_range(-2.0..2.0), side * rng.gen_range(0.1..2.0), side * self.p.theta0];
        self.lift(&r)
    }
}
