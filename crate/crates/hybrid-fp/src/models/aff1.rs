//! Geodesics on the affine group `Aff(1)` with impacts on the right coset
//! `Σ = K g₀` of the non-normal subgroup `K = {(a, 0)}`.
//!
//! Group elements are `(a, b)` (the map `x ↦ ax + b`), momenta `(p_a, p_b)`,
//! and `ζ = a·(p_a, p_b)`. With `H = ½ a² (p_a² + p_b²)` the reduced flow is
//! `ζ̇ = (−ζ₂², ζ₁ζ₂)` and the quotient coordinate `q = b/a` obeys
//! `q̇ = ζ₂ − qζ₁`; the surface is `q = q₀ = b₀/a₀`.

use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::error::Result;
use crate::reduction::{Arming, LieAlgebraSpec, ReducedModel, ReducedSystem};
use crate::system::{DomainBox, HybridSystem, Preimages};

/// Jump law used at the impact surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aff1Jump {
    /// Corner conditions solved exactly: the momentum jump annihilates
    /// `TΣ`, so `ζ` is reflected across the line orthogonal to
    /// `n = (−b₀, a₀)`. The law depends only on `ζ`.
    Corner,
    /// `Δζ = (β, −b₀ a β / a₀)` with `β` fixed by energy conservation; the
    /// update depends on the group coordinate `a` at impact.
    ScaledByA,
}

fn reflect(z: &[f64], a0: f64, b0: f64) -> [f64; 2] {
    let (nx, ny) = (-b0, a0);
    let nn = nx * nx + ny * ny;
    let c = 2.0 * (z[0] * nx + z[1] * ny) / nn;
    [z[0] - c * nx, z[1] - c * ny]
}

fn scaled_jump(z: &[f64], a: f64, a0: f64, b0: f64) -> [f64; 2] {
    let d = [1.0, -b0 * a / a0];
    let beta = -2.0 * (z[0] * d[0] + z[1] * d[1]) / (d[0] * d[0] + d[1] * d[1]);
    [z[0] + beta * d[0], z[1] + beta * d[1]]
}

/// Full system on `T*Aff(1)`, state `(a, b, p_a, p_b)`.
#[derive(Debug, Clone)]
pub struct Aff1Full {
    pub a0: f64,
    pub b0: f64,
    pub jump: Aff1Jump,
    domain: DomainBox,
}

impl Aff1Full {
    pub fn new(a0: f64, b0: f64, jump: Aff1Jump) -> Result<Self> {
        Ok(Self { a0, b0, jump, domain: DomainBox::aperiodic(vec![1e-6, -1e3, -1e3, -1e3], vec![1e3; 4])? })
    }

    /// Reduced coordinates `(ζ₁, ζ₂, q)`.
    pub fn project(x: &[f64]) -> Vec<f64> {
        vec![x[0] * x[2], x[0] * x[3], x[1] / x[0]]
    }

    fn q_dot(x: &[f64]) -> f64 {
        let z = Self::project(x);
        z[1] - z[2] * z[0]
    }
}

impl HybridSystem for Aff1Full {
    fn name(&self) -> &str {
        "aff1-full"
    }
    fn dim(&self) -> usize {
        4
    }
    fn domain(&self) -> &DomainBox {
        &self.domain
    }
    fn vector_field(&self, x: &[f64], out: &mut [f64]) {
        let (a, pa, pb) = (x[0], x[2], x[3]);
        out[0] = a * a * pa;
        out[1] = a * a * pb;
        out[2] = -a * (pa * pa + pb * pb);
        out[3] = 0.0;
    }
    fn guard_level(&self, x: &[f64]) -> f64 {
        x[1] / x[0] - self.b0 / self.a0
    }
    fn guard_armed(&self, x: &[f64]) -> bool {
        Self::q_dot(x) > 0.0
    }
    fn reset(&self, x: &[f64]) -> Vec<f64> {
        let a = x[0];
        let z = [a * x[2], a * x[3]];
        let zp = match self.jump {
            Aff1Jump::Corner => reflect(&z, self.a0, self.b0),
            Aff1Jump::ScaledByA => scaled_jump(&z, a, self.a0, self.b0),
        };
        vec![x[0], x[1], zp[0] / a, zp[1] / a]
    }
    fn image_level(&self, x: &[f64]) -> f64 {
        self.guard_level(x)
    }
    fn preimages(&self, y: &[f64]) -> Preimages {
        match self.jump {
            Aff1Jump::Corner => {
                let z = self.reset(y);
                if self.guard_armed(&z) {
                    Preimages::Finite(vec![z])
                } else {
                    Preimages::Finite(vec![])
                }
            }
            Aff1Jump::ScaledByA => Preimages::Finite(vec![]),
        }
    }
    fn sample_guard(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        loop {
            let a = rng.gen_range(0.5..2.0);
            let x = vec![a, a * self.b0 / self.a0, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            if Self::q_dot(&x) > 0.1 {
                return x;
            }
        }
    }
}

/// Reduced `Aff(1)` system `(ζ₁, ζ₂, q)`. With [`Aff1Jump::ScaledByA`] the
/// unknown group coordinate is frozen at `a = a₀`, the only choice
/// available to a reduced model.
pub fn aff1_reduced(a0: f64, b0: f64, jump: Aff1Jump) -> ReducedSystem {
    let q0 = b0 / a0;
    let jump_fn: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync> = match jump {
        Aff1Jump::Corner => Arc::new(move |z| {
            let r = reflect(z, a0, b0);
            vec![r[0] - z[0], r[1] - z[1]]
        }),
        Aff1Jump::ScaledByA => Arc::new(move |z| {
            let r = scaled_jump(z, a0, a0, b0);
            vec![r[0] - z[0], r[1] - z[1]]
        }),
    };
    let inverse: Option<Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>> = match jump {
        Aff1Jump::Corner => Some(Arc::new(move |z| reflect(z, a0, b0).to_vec())),
        Aff1Jump::ScaledByA => Some(Arc::new(move |z| scaled_jump(z, a0, a0, b0).to_vec())),
    };
    let model = ReducedModel {
        algebra: LieAlgebraSpec::aff1(),
        hamiltonian: Arc::new(|z| 0.5 * (z[0] * z[0] + z[1] * z[1])),
        dh: Arc::new(|z| z.to_vec()),
        q_rhs: Arc::new(|q, z| z[1] - q[0] * z[0]),
        jump: jump_fn,
        reset: None,
        inverse_reset: inverse,
        casimirs: vec![],
        divergence: None,
        q_guard: q0,
        arming: Arming::Increasing,
    };
    ReducedSystem::new("aff1", model, 1e3, (-1e3, 1e3)).expect("valid aff1 chart")
}
