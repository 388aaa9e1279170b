//! Hybrid Lie–Poisson reduction.
//!
//! A left-invariant impact system on `T*G` reduces to the coadjoint flow on
//! `𝔤*` plus one quotient coordinate `q` that detects the impact surface.
//! The coadjoint rate uses the index convention
//!
//! ```text
//! ζ̇_j = C[i][j][k] · (dh)ⁱ · ζ_k
//! ```
//!
//! which yields `ζ̇ = ζ × dh` for `so(3)` with `[u, v] = u × v`, and, for
//! `gl(n)` with the commutator `[A, B] = AB − BA` on row-major coordinates,
//! `ζ̇ = ζᵀζ − ζζᵀ` when `dh = ζ`.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::flow::{integrate, IntegratorConfig, Termination};
use crate::system::{DomainBox, HybridSystem, Preimages};

/// Structure constants `C[i][j][k]` of a Lie algebra: `[eᵢ, eⱼ] = C[i][j][k] eₖ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LieAlgebraSpec {
    pub dim: usize,
    /// Flattened `C[i][j][k]` at `(i·d + j)·d + k`.
    pub structure: Vec<f64>,
    pub names: Vec<String>,
}

/// Tolerance on antisymmetry and the Jacobi identity.
pub const JACOBI_TOL: f64 = 1e-10;

impl LieAlgebraSpec {
    /// Builds and validates an algebra from flattened structure constants.
    pub fn new(dim: usize, structure: Vec<f64>, names: Vec<String>) -> Result<Self> {
        if dim == 0 || structure.len() != dim * dim * dim {
            return Err(Error::Invalid(format!("need {} structure constants for dimension {dim}", dim * dim * dim)));
        }
        let names = if names.is_empty() { (0..dim).map(|i| format!("e{i}")).collect() } else { names };
        let spec = Self { dim, structure, names };
        let anti = spec.antisymmetry_residual();
        if anti > JACOBI_TOL {
            return Err(Error::Invalid(format!("structure constants not antisymmetric (residual {anti:e})")));
        }
        let jac = spec.jacobi_residual();
        if jac > JACOBI_TOL {
            return Err(Error::Invalid(format!("Jacobi identity violated (residual {jac:e})")));
        }
        Ok(spec)
    }

    /// `C[i][j][k]`.
    pub fn c(&self, i: usize, j: usize, k: usize) -> f64 {
        self.structure[(i * self.dim + j) * self.dim + k]
    }

    /// `max |C[i][j][k] + C[j][i][k]|`.
    pub fn antisymmetry_residual(&self) -> f64 {
        let d = self.dim;
        let mut r = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    r = r.max((self.c(i, j, k) + self.c(j, i, k)).abs());
                }
            }
        }
        r
    }

    /// Largest component of `[[eᵢ,eⱼ],eₖ] + [[eⱼ,eₖ],eᵢ] + [[eₖ,eᵢ],eⱼ]`.
    pub fn jacobi_residual(&self) -> f64 {
        let d = self.dim;
        let mut r = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let mut s = 0.0;
                        for m in 0..d {
                            s += self.c(i, j, m) * self.c(m, k, l)
                                + self.c(j, k, m) * self.c(m, i, l)
                                + self.c(k, i, m) * self.c(m, j, l);
                        }
                        r = r.max(s.abs());
                    }
                }
            }
        }
        r
    }

    /// `so(3)` with `[u, v] = u × v`: `C[i][j][k] = ε_ijk`.
    pub fn so3() -> Self {
        let mut c = vec![0.0; 27];
        for (i, j, k, s) in [(0, 1, 2, 1.0), (1, 2, 0, 1.0), (2, 0, 1, 1.0), (1, 0, 2, -1.0), (2, 1, 0, -1.0), (0, 2, 1, -1.0)] {
            c[(i * 3 + j) * 3 + k] = s;
        }
        Self::new(3, c, vec!["x".into(), "y".into(), "z".into()]).expect("so(3) constants are valid")
    }

    /// `gl(n)` in the basis `E_ab` (index `a·n + b`) with `[A, B] = AB − BA`.
    pub fn gl(n: usize) -> Self {
        let d = n * n;
        let mut c = vec![0.0; d * d * d];
        // [E_ab, E_cd] = δ_bc E_ad − δ_da E_cb
        for a in 0..n {
            for b in 0..n {
                for cc in 0..n {
                    for dd in 0..n {
                        let (i, j) = (a * n + b, cc * n + dd);
                        if b == cc {
                            c[(i * d + j) * d + a * n + dd] += 1.0;
                        }
                        if dd == a {
                            c[(i * d + j) * d + cc * n + b] -= 1.0;
                        }
                    }
                }
            }
        }
        let names = (0..d).map(|i| format!("E{}{}", i / n + 1, i % n + 1)).collect();
        Self::new(d, c, names).expect("gl(n) constants are valid")
    }

    /// `aff(1)` with `[e_a, e_b] = e_b` in the basis dual to `(a, b)`.
    pub fn aff1() -> Self {
        let mut c = vec![0.0; 8];
        c[(0 * 2 + 1) * 2 + 1] = 1.0;
        c[(1 * 2 + 0) * 2 + 1] = -1.0;
        Self::new(2, c, vec!["a".into(), "b".into()]).expect("aff(1) constants are valid")
    }

    /// Parses lines `i j k value` (zero-based indices; `#` comments). The
    /// dimension is one more than the largest index; unspecified constants
    /// are zero.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut dim = 0usize;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(Error::Parse(format!("line {}: expected `i j k value`", ln + 1)));
            }
            let idx = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)));
            let (i, j, k) = (idx(f[0])?, idx(f[1])?, idx(f[2])?);
            let v: f64 = f[3].parse().map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
            dim = dim.max(i + 1).max(j + 1).max(k + 1);
            entries.push((i, j, k, v));
        }
        if dim == 0 {
            return Err(Error::Parse("no structure constants found".into()));
        }
        let mut c = vec![0.0; dim * dim * dim];
        for (i, j, k, v) in entries {
            c[(i * dim + j) * dim + k] = v;
        }
        Self::new(dim, c, Vec::new())
    }

    /// Reads a structure-constant file (see [`LieAlgebraSpec::parse`]).
    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Coadjoint rate `ζ̇_j = C[i][j][k] dhⁱ ζ_k`.
pub fn coad_rate(alg: &LieAlgebraSpec, dh: &[f64], zeta: &[f64]) -> Vec<f64> {
    let d = alg.dim;
    let mut out = vec![0.0; d];
    for i in 0..d {
        if dh[i] == 0.0 {
            continue;
        }
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += alg.c(i, j, k) * zeta[k];
            }
            out[j] += dh[i] * s;
        }
    }
    out
}

/// `Δζ = −(2/n) tr(ζ) I` for a row-major `n × n` covector.
pub fn gl_jump(n: usize, zeta: &[f64]) -> Vec<f64> {
    assert_eq!(zeta.len(), n * n, "gl_jump expects an n×n matrix");
    let tr: f64 = (0..n).map(|i| zeta[i * n + i]).sum();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        out[i * n + i] = -2.0 / n as f64 * tr;
    }
    out
}

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VecFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type QFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Which guard crossings of the quotient coordinate trigger the jump.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arming {
    /// Every transverse crossing.
    Both,
    /// Only crossings with `q̇ > 0`.
    Increasing,
}

/// Reduced hybrid system on `𝔤* × (K\G)` (one quotient coordinate `q`).
#[derive(Clone)]
pub struct ReducedModel {
    pub algebra: LieAlgebraSpec,
    /// Reduced Hamiltonian `h(ζ)`.
    pub hamiltonian: ScalarFn,
    /// Differential `dh(ζ) ∈ 𝔤`.
    pub dh: VecFn,
    /// Quotient dynamics `q̇ = f(q, ζ)` (arguments `(q, ζ)`).
    pub q_rhs: QFn,
    /// Jump covector `Δζ(ζ)` applied on the impact surface.
    pub jump: VecFn,
    /// Closed form of the reset `ζ ↦ ζ + Δζ(ζ)`, when available; used
    /// instead of the sum so that exact identities survive rounding.
    pub reset: Option<VecFn>,
    /// Inverse of the reset `ζ ↦ ζ + Δζ(ζ)`, when available.
    pub inverse_reset: Option<VecFn>,
    /// Casimir functions of the algebra.
    pub casimirs: Vec<ScalarFn>,
    /// Analytic divergence of the reduced field, when available.
    pub divergence: Option<Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>>,
    /// Value of `q` on the impact surface.
    pub q_guard: f64,
    pub arming: Arming,
}

impl ReducedModel {
    /// `ζ̇` at `ζ`.
    pub fn coad_rhs(&self, zeta: &[f64]) -> Vec<f64> {
        coad_rate(&self.algebra, &(self.dh)(zeta), zeta)
    }

    /// `ζ ↦ ζ + Δζ(ζ)` (the closed form when one is supplied).
    pub fn reset_zeta(&self, zeta: &[f64]) -> Vec<f64> {
        match &self.reset {
            Some(r) => r(zeta),
            None => (self.jump)(zeta).iter().zip(zeta).map(|(a, b)| a + b).collect(),
        }
    }

    /// The `GL(2)` model: `h = ½ tr(ζζᵀ)`, `q = det A − 1`, `q̇ = (q+1) tr ζ`,
    /// jump `Δζ = −tr(ζ) I`, Casimirs `C = tr ζ` and `D = ζ₃ − ζ₂`.
    pub fn gl2() -> Self {
        let tr = |z: &[f64]| z[0] + z[3];
        Self {
            algebra: LieAlgebraSpec::gl(2),
            hamiltonian: Arc::new(|z| 0.5 * z.iter().map(|v| v * v).sum::<f64>()),
            dh: Arc::new(|z| z.to_vec()),
            q_rhs: Arc::new(move |q, z| (q[0] + 1.0) * tr(z)),
            jump: Arc::new(|z| gl_jump(2, z)),
            reset: Some(Arc::new(|z| vec![-z[3], z[1], z[2], -z[0]])),
            inverse_reset: Some(Arc::new(|z| vec![-z[3], z[1], z[2], -z[0]])),
            casimirs: vec![Arc::new(move |z| tr(z)), Arc::new(|z| z[2] - z[1])],
            divergence: Some(Arc::new(move |z, _q| tr(z))),
            q_guard: 0.0,
            arming: Arming::Both,
        }
    }

    /// Largest `|h(ζ + Δζ) − h(ζ)|` over the given samples.
    pub fn jump_energy_residual(&self, samples: &[Vec<f64>]) -> f64 {
        samples
            .iter()
            .map(|z| ((self.hamiltonian)(&self.reset_zeta(z)) - (self.hamiltonian)(z)).abs())
            .fold(0.0, f64::max)
    }
}

/// A [`ReducedModel`] viewed as a hybrid system with state `(ζ, q)`.
pub struct ReducedSystem {
    pub model: ReducedModel,
    name: String,
    domain: DomainBox,
    /// Half-width of the `ζ` box used when sampling guard points.
    pub sample_radius: f64,
}

impl ReducedSystem {
    /// Wraps a model; `zeta_bound` and `q_range` define the chart.
    pub fn new(name: &str, model: ReducedModel, zeta_bound: f64, q_range: (f64, f64)) -> Result<Self> {
        let d = model.algebra.dim;
        let mut lower = vec![-zeta_bound; d];
        let mut upper = vec![zeta_bound; d];
        lower.push(q_range.0);
        upper.push(q_range.1);
        Ok(Self { model, name: name.to_string(), domain: DomainBox::aperiodic(lower, upper)?, sample_radius: 2.0 })
    }

    fn q_dot(&self, x: &[f64]) -> f64 {
        let d = self.model.algebra.dim;
        (self.model.q_rhs)(&x[d..], &x[..d])
    }
}

impl HybridSystem for ReducedSystem {
    fn name(&self) -> &str {
        &self.name
    }
    fn dim(&self) -> usize {
        self.model.algebra.dim + 1
    }
    fn domain(&self) -> &DomainBox {
        &self.domain
    }
    fn vector_field(&self, x: &[f64], out: &mut [f64]) {
        let d = self.model.algebra.dim;
        let r = self.model.coad_rhs(&x[..d]);
        out[..d].copy_from_slice(&r);
        out[d] = self.q_dot(x);
    }
    fn guard_level(&self, x: &[f64]) -> f64 {
        x[self.model.algebra.dim] - self.model.q_guard
    }
    fn guard_gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        let mut g = vec![0.0; self.dim()];
        g[self.model.algebra.dim] = 1.0;
        Some(g)
    }
    fn guard_armed(&self, x: &[f64]) -> bool {
        let qd = self.q_dot(x);
        match self.model.arming {
            Arming::Both => qd != 0.0,
            Arming::Increasing => qd > 0.0,
        }
    }
    fn reset(&self, x: &[f64]) -> Vec<f64> {
        let d = self.model.algebra.dim;
        let mut y = self.model.reset_zeta(&x[..d]);
        y.push(x[d]);
        y
    }
    fn image_level(&self, x: &[f64]) -> f64 {
        self.guard_level(x)
    }
    fn image_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.guard_gradient(x)
    }
    fn preimages(&self, y: &[f64]) -> Preimages {
        let d = self.model.algebra.dim;
        match &self.model.inverse_reset {
            Some(inv) => {
                let mut z = inv(&y[..d]);
                z.push(y[d]);
                if self.guard_armed(&z) {
                    Preimages::Finite(vec![z])
                } else {
                    Preimages::Finite(vec![])
                }
            }
            None => Preimages::Finite(vec![]),
        }
    }
    fn divergence(&self, x: &[f64]) -> Option<f64> {
        let d = self.model.algebra.dim;
        self.model.divergence.as_ref().map(|f| f(&x[..d], x[d]))
    }
    fn sample_guard(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let d = self.model.algebra.dim;
        loop {
            let mut x: Vec<f64> = (0..d).map(|_| rng.gen_range(-self.sample_radius..self.sample_radius)).collect();
            x.push(self.model.q_guard);
            let qd = self.q_dot(&x);
            if qd.abs() > 0.1 && self.guard_armed(&x) {
                return x;
            }
        }
    }
}

/// Builds the 2-D `(q, C)` system `q̇ = (q+1)C`, `Ċ = 0`, guard `q = 0`,
/// reset `C ↦ −C`.
pub fn build_qc_system() -> crate::models::QcSystem {
    crate::models::QcSystem::new()
}

/// Comparison of a full system against its reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionReport {
    /// Largest ∞-norm difference between the projected full state and the
    /// reduced state over the checkpoints.
    pub max_mismatch: f64,
    /// Largest mismatch at checkpoints after the first reset (0 if none).
    pub post_impact_mismatch: f64,
    /// Reset times of the full system.
    pub impacts_full: Vec<f64>,
    /// Reset times of the reduced system.
    pub impacts_reduced: Vec<f64>,
    /// Largest pairwise reset-time difference (∞ when the counts differ).
    pub impact_time_mismatch: f64,
    /// Termination of the two runs.
    pub terminated: (Termination, Termination),
}

/// Integrates `full` from `x0_full` and `reduced` from `project(x0_full)`
/// over `[0, t_end]`, comparing `project(full)` with `reduced` at
/// `checkpoints` uniformly spaced times. Periodic axes of the reduced chart
/// are compared modulo their period.
pub fn verify_reduction(
    full: &dyn HybridSystem,
    project: &dyn Fn(&[f64]) -> Vec<f64>,
    reduced: &dyn HybridSystem,
    x0_full: &[f64],
    t_end: f64,
    checkpoints: usize,
    cfg: &IntegratorConfig,
) -> Result<ReductionReport> {
    let mut xf = x0_full.to_vec();
    let mut xr = project(x0_full);
    if xr.len() != reduced.dim() {
        return Err(Error::DimensionMismatch { expected: reduced.dim(), got: xr.len() });
    }
    let dom = reduced.domain();
    let diff = |a: &[f64], b: &[f64]| -> f64 {
        (0..a.len())
            .map(|i| {
                let mut d = (a[i] - b[i]).abs();
                if dom.periodic[i] {
                    let w = dom.extent(i);
                    d = d.rem_euclid(w);
                    d = d.min(w - d);
                }
                d
            })
            .fold(0.0, f64::max)
    };
    let k = checkpoints.max(1);
    let mut rep = ReductionReport {
        max_mismatch: diff(&project(&xf), &xr),
        post_impact_mismatch: 0.0,
        impacts_full: vec![],
        impacts_reduced: vec![],
        impact_time_mismatch: 0.0,
        terminated: (Termination::TimeReached, Termination::TimeReached),
    };
    for s in 0..k {
        let (ta, tb) = (t_end * s as f64 / k as f64, t_end * (s + 1) as f64 / k as f64);
        let tf = integrate(full, &xf, ta, tb, cfg)?;
        let tr = integrate(reduced, &xr, ta, tb, cfg)?;
        rep.impacts_full.extend(tf.impact_times());
        rep.impacts_reduced.extend(tr.impact_times());
        xf = tf.last().1.to_vec();
        xr = tr.last().1.to_vec();
        rep.terminated = (tf.terminated, tr.terminated);
        let m = diff(&project(&xf), &xr);
        rep.max_mismatch = rep.max_mismatch.max(m);
        if !rep.impacts_full.is_empty() || !rep.impacts_reduced.is_empty() {
            rep.post_impact_mismatch = rep.post_impact_mismatch.max(m);
        }
        if tf.terminated != Termination::TimeReached || tr.terminated != Termination::TimeReached {
            break;
        }
    }
    rep.impact_time_mismatch = if rep.impacts_full.len() == rep.impacts_reduced.len() {
        rep.impacts_full.iter().zip(&rep.impacts_reduced).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    Ok(rep)
}
