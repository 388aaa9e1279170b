//! Bouncing ball on the half line with (in)elastic impacts.

use nalgebra::DMatrix;
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::system::{DomainBox, HybridSystem, Preimages};

/// Ball of mass `m` under gravity `g`, state `(x, p)`:
/// `ẋ = p/m`, `ṗ = −m g`, guard `x = 0` armed for `p < 0`, reset
/// `p ↦ −c² p` (the inelastic impact law of a natural Hamiltonian on a flat
/// surface; `c = 1` is the elastic bounce). The hybrid Jacobian is `c⁴`.
#[derive(Debug, Clone)]
pub struct Ball {
    pub m: f64,
    pub g: f64,
    pub c: f64,
    name: &'static str,
    domain: DomainBox,
}

impl Ball {
    /// Validated constructor; `c ∈ (0, 1]`.
    pub fn new(m: f64, g: f64, c: f64) -> Result<Self> {
        if !(m > 0.0 && g > 0.0) {
            return Err(Error::Invalid("ball: m and g must be positive".into()));
        }
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::Invalid("ball: restitution c must lie in (0, 1]".into()));
        }
        let name = if c == 1.0 { "ball" } else { "ball-inelastic" };
        Ok(Self { m, g, c, name, domain: DomainBox::aperiodic(vec![0.0, -100.0], vec![100.0, 100.0])? })
    }

    /// Elastic ball.
    pub fn elastic(m: f64, g: f64) -> Self {
        Self::new(m, g, 1.0).expect("valid elastic ball")
    }

    /// Energy `p²/(2m) + m g x`.
    pub fn energy(&self, x: &[f64]) -> f64 {
        x[1] * x[1] / (2.0 * self.m) + self.m * self.g * x[0]
    }

    /// Impact times of the elastic ball released at rest from height `h`
    /// (first `count` of them).
    pub fn elastic_impact_times(&self, h: f64, count: usize) -> Vec<f64> {
        let t1 = (2.0 * h / self.g).sqrt();
        (0..count).map(|k| t1 * (2 * k + 1) as f64).collect()
    }

    /// Accumulation time of the impact sequence when released at rest from
    /// height `h` under the law `p ↦ −c² p`.
    pub fn zeno_time(&self, h: f64) -> f64 {
        let t1 = (2.0 * h / self.g).sqrt();
        let r = self.c * self.c;
        t1 * (1.0 + 2.0 * r / (1.0 - r))
    }
}

impl HybridSystem for Ball {
    fn name(&self) -> &str {
        self.name
    }
    fn dim(&self) -> usize {
        2
    }
    fn domain(&self) -> &DomainBox {
        &self.domain
    }
    fn vector_field(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[1] / self.m;
        out[1] = -self.m * self.g;
    }
    fn guard_level(&self, x: &[f64]) -> f64 {
        x[0]
    }
    fn guard_gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![1.0, 0.0])
    }
    fn guard_armed(&self, x: &[f64]) -> bool {
        x[1] < 0.0
    }
    fn reset(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0], -self.c * self.c * x[1]]
    }
    fn reset_jacobian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -self.c * self.c]))
    }
    fn image_level(&self, x: &[f64]) -> f64 {
        x[0]
    }
    fn image_gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![1.0, 0.0])
    }
    fn preimages(&self, y: &[f64]) -> Preimages {
        if y[1] > 0.0 {
            Preimages::Finite(vec![vec![y[0], -y[1] / (self.c * self.c)]])
        } else {
            Preimages::Finite(vec![])
        }
    }
    fn divergence(&self, _x: &[f64]) -> Option<f64> {
        Some(0.0)
    }
    fn sample_guard(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        vec![0.0, -rng.gen_range(0.05..5.0)]
    }
}
