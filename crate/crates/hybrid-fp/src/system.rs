//! The hybrid-system abstraction and the primitive geometric queries.
//!
//! A hybrid system is a continuous flow `ẋ = X(x)` on a rectangular chart,
//! interrupted by a reset `x ↦ Δ(x)` whenever the state reaches the guard
//! `S = {s = 0, armed}`. The image `Δ(S)` is described by its own level
//! function `s_img`, and the reset is inverted on `Δ(S)` by a preimage
//! enumerator. A positive reference density `ρ` fixes the volume form
//! `μ = ρ dx` against which densities and divergences are measured.
//!
//! Models with several branches (for example the two-sheet energy surface
//! of the Chaplygin sleigh) append one discrete *sheet* coordinate after the
//! continuous ones; the sheet coordinate never flows and is ignored by every
//! volume computation.

use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_finite, Error, Result};

/// Relative transversality threshold `|ds(X)| / (‖ds‖·‖X‖)`.
pub const TRANSVERSALITY_TOL: f64 = 1e-12;

/// Rectangular computational chart with optional periodic axes.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub periodic: Vec<bool>,
}

impl DomainBox {
    /// Builds a box, checking `lower[i] < upper[i]` on every axis.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, periodic: Vec<bool>) -> Result<Self> {
        if lower.len() != upper.len() || lower.len() != periodic.len() || lower.is_empty() {
            return Err(Error::Invalid("box bounds and periodic flags must have equal, positive length".into()));
        }
        for i in 0..lower.len() {
            if !(lower[i].is_finite() && upper[i].is_finite() && lower[i] < upper[i]) {
                return Err(Error::Invalid(format!(
                    "box axis {i}: need finite lower < upper, got {} .. {}",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Self { lower, upper, periodic })
    }

    /// Box with no periodic axes.
    pub fn aperiodic(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = lower.len();
        Self::new(lower, upper, vec![false; n])
    }

    /// Number of axes.
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Extent `upper[i] − lower[i]`.
    pub fn extent(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    /// Product of the extents.
    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.extent(i)).product()
    }

    /// Maps periodic coordinates into `[lower, upper)`; other axes untouched.
    pub fn wrap(&self, x: &mut [f64]) {
        for i in 0..self.dim() {
            if self.periodic[i] {
                let (l, w) = (self.lower[i], self.extent(i));
                let mut y = (x[i] - l).rem_euclid(w);
                if y >= w {
                    y -= w;
                }
                x[i] = l + y;
            }
        }
    }

    /// True when every non-periodic coordinate lies within the box, allowing
    /// `slack · extent` of overshoot on each side.
    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        (0..self.dim()).all(|i| {
            self.periodic[i] || {
                let s = slack * self.extent(i);
                x[i] >= self.lower[i] - s && x[i] <= self.upper[i] + s
            }
        })
    }

    /// Clamps non-periodic coordinates into the box and wraps periodic ones.
    pub fn clamp(&self, x: &mut [f64]) {
        self.wrap(x);
        for i in 0..self.dim() {
            if !self.periodic[i] {
                x[i] = x[i].clamp(self.lower[i], self.upper[i]);
            }
        }
    }
}

/// Result of inverting the reset at a point of `Δ(S)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Preimages {
    /// Finitely many armed guard points mapping onto the query point; empty
    /// when the query point is not in `Δ(S)`.
    Finite(Vec<Vec<f64>>),
    /// The preimage set is unbounded; the transfer operator is undefined.
    Infinite,
}

/// A hybrid dynamical system `(M, S, Δ, X)` with reference density `ρ`.
///
/// All evaluators must be pure so that systems can be shared across threads.
pub trait HybridSystem: Send + Sync {
    /// Short identifier used in reports and output files.
    fn name(&self) -> &str;

    /// Total state dimension, including a trailing sheet coordinate if any.
    fn dim(&self) -> usize;

    /// Number of continuous coordinates (those that flow).
    fn continuous_dim(&self) -> usize {
        self.dim()
    }

    /// Number of sheets (branches) of the state space.
    fn sheet_count(&self) -> usize {
        1
    }

    /// Sheet index of a state.
    fn sheet_index(&self, _x: &[f64]) -> usize {
        0
    }

    /// Value of the sheet coordinate for a sheet index.
    fn sheet_value(&self, _sheet: usize) -> f64 {
        0.0
    }

    /// Chart on which the flow is defined; leaving a non-periodic side ends
    /// a trajectory.
    fn domain(&self) -> &DomainBox;

    /// Vector field `X(x)`; writes `dim()` components (zero on the sheet).
    fn vector_field(&self, x: &[f64], out: &mut [f64]);

    /// One-sided limit of `X` on the pre-reset side of the guard. Only
    /// differs from [`HybridSystem::vector_field`] for discontinuous fields.
    fn field_pre(&self, x: &[f64], out: &mut [f64]) {
        self.vector_field(x, out)
    }

    /// One-sided limit of `X` on the post-reset side of `Δ(S)`.
    fn field_post(&self, x: &[f64], out: &mut [f64]) {
        self.vector_field(x, out)
    }

    /// Guard level `s(x)`.
    fn guard_level(&self, x: &[f64]) -> f64;

    /// Analytic gradient of `s` over the continuous coordinates, if known.
    fn guard_gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Direction predicate: true when a zero crossing at `x` triggers a reset.
    fn guard_armed(&self, x: &[f64]) -> bool;

    /// Reset map `Δ`.
    fn reset(&self, x: &[f64]) -> Vec<f64>;

    /// Analytic Jacobian of `Δ` over the continuous coordinates, if known.
    fn reset_jacobian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }

    /// Level function vanishing on `Δ(S)`.
    fn image_level(&self, x: &[f64]) -> f64;

    /// Analytic gradient of `s_img`, if known.
    fn image_gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Preimages `Δ⁻¹({y})`: armed guard points mapping onto `y`.
    fn preimages(&self, y: &[f64]) -> Preimages;

    /// Reference density `ρ(x) > 0` defining `μ = ρ dx`.
    fn ref_density(&self, _x: &[f64]) -> f64 {
        1.0
    }

    /// Analytic divergence `div_μ X`, if known.
    fn divergence(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// Draws a random armed guard point (used by sampled invariant checks).
    fn sample_guard(&self, rng: &mut dyn RngCore) -> Vec<f64>;
}

/// Checks that `x` has the system's dimension and finite entries.
pub fn check_state(sys: &dyn HybridSystem, x: &[f64]) -> Result<()> {
    if x.len() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), got: x.len() });
    }
    ensure_finite(x, "state")
}

/// Evaluates the guard: returns `(s(x), armed(x))`.
pub fn eval_guard(sys: &dyn HybridSystem, x: &[f64]) -> Result<(f64, bool)> {
    check_state(sys, x)?;
    let s = sys.guard_level(x);
    if !s.is_finite() {
        return Err(Error::NonFinite { what: "guard level".into() });
    }
    Ok((s, sys.guard_armed(x)))
}

/// Central-difference step on axis `i`, scaled by the chart extent.
pub(crate) fn fd_step(sys: &dyn HybridSystem, i: usize, rel: f64) -> f64 {
    rel * sys.domain().extent(i).min(1e3)
}

/// Gradient of a scalar function over the continuous coordinates by central
/// differences with per-axis step `rel · extent`.
pub(crate) fn numeric_gradient(
    sys: &dyn HybridSystem,
    f: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    rel: f64,
) -> Vec<f64> {
    let n = sys.continuous_dim();
    let mut y = x.to_vec();
    (0..n)
        .map(|i| {
            let h = fd_step(sys, i, rel);
            y[i] = x[i] + h;
            let fp = f(&y);
            y[i] = x[i] - h;
            let fm = f(&y);
            y[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Gradient of the guard level over the continuous coordinates: analytic if
/// the model supplies it, else central differences (step `1e-6 · extent`).
pub fn guard_gradient(sys: &dyn HybridSystem, x: &[f64]) -> Vec<f64> {
    sys.guard_gradient(x)
        .unwrap_or_else(|| numeric_gradient(sys, &|y| sys.guard_level(y), x, 1e-6))
}

/// Gradient of the image level over the continuous coordinates.
pub fn image_gradient(sys: &dyn HybridSystem, x: &[f64]) -> Vec<f64> {
    sys.image_gradient(x)
        .unwrap_or_else(|| numeric_gradient(sys, &|y| sys.image_level(y), x, 1e-6))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Evaluates a field callback into a fresh vector truncated to the
/// continuous coordinates.
pub(crate) fn field_continuous(
    sys: &dyn HybridSystem,
    f: impl Fn(&[f64], &mut [f64]),
    x: &[f64],
) -> Vec<f64> {
    let mut out = vec![0.0; sys.dim()];
    f(x, &mut out);
    out.truncate(sys.continuous_dim());
    out
}

/// Splits a tangent vector at a guard point into a part tangent to the guard
/// and a multiple of the (pre-reset) vector field:
/// `v = tangential + flow_coeff · X(x)` with `ds(tangential) = 0`.
pub fn decompose_tangent(sys: &dyn HybridSystem, x: &[f64], v: &[f64]) -> Result<(Vec<f64>, f64)> {
    check_state(sys, x)?;
    let n = sys.continuous_dim();
    if v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.len() });
    }
    ensure_finite(v, "tangent vector")?;
    let ds = guard_gradient(sys, x);
    let xf = field_continuous(sys, |a, o| sys.field_pre(a, o), x);
    let ds_x = dot(&ds, &xf);
    let scale = norm(&ds) * norm(&xf);
    if !(ds_x.abs() > TRANSVERSALITY_TOL * scale) || scale == 0.0 {
        return Err(Error::TangentFlow { ds_x });
    }
    let c = dot(&ds, v) / ds_x;
    let tangential = v.iter().zip(&xf).map(|(vi, xi)| vi - c * xi).collect();
    Ok((tangential, c))
}

/// Outcome of the sampled construction-invariant check.
#[derive(Debug, Clone, Default)]
pub struct InvariantReport {
    /// Number of guard points sampled.
    pub samples: usize,
    /// Largest `|s_img(Δ(x))|` over sampled armed guard points.
    pub max_image_residual: f64,
    /// Largest `‖Δ(y) − Δ(x)‖` over preimages `y` of sampled images.
    pub max_preimage_residual: f64,
    /// Sampled images whose preimage list did not contain a point.
    pub missing_preimages: usize,
    /// Sampled resets after which the post-reset flow does not leave the
    /// guard neighbourhood (beating), i.e. violations of the no-beating
    /// separation between `S` and `Δ(S)`.
    pub beating: usize,
    /// Smallest reference density seen at sampled points.
    pub min_density: f64,
}

impl InvariantReport {
    /// True when all sampled invariants hold at `tol`.
    pub fn ok(&self, tol: f64) -> bool {
        self.max_image_residual < tol
            && self.max_preimage_residual < tol
            && self.missing_preimages == 0
            && self.beating == 0
            && self.min_density > 0.0
    }
}

/// Samples `count` armed guard points and checks the construction invariants:
/// the reset lands on its declared image, preimages invert the reset, the
/// post-reset flow moves off the guard (no beating), and `ρ > 0`.
///
/// The geometric separation of the closures of `S` and `Δ(S)` is not
/// decidable from samples; the direction-aware beating test stands in for it.
pub fn check_invariants(sys: &dyn HybridSystem, count: usize, seed: u64) -> InvariantReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = InvariantReport { samples: count, min_density: f64::INFINITY, ..Default::default() };
    let nudge = 1e-6;
    for _ in 0..count {
        let x = sys.sample_guard(&mut rng);
        let y = sys.reset(&x);
        rep.max_image_residual = rep.max_image_residual.max(sys.image_level(&y).abs());
        match sys.preimages(&y) {
            Preimages::Finite(pre) => {
                if pre.is_empty() {
                    rep.missing_preimages += 1;
                }
                for z in pre {
                    let r = sys.reset(&z);
                    let d = r.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    rep.max_preimage_residual = rep.max_preimage_residual.max(d);
                }
            }
            Preimages::Infinite => rep.missing_preimages += 1,
        }
        let mut xp = vec![0.0; sys.dim()];
        sys.field_post(&y, &mut xp);
        let moved: Vec<f64> = y.iter().zip(&xp).map(|(a, b)| a + nudge * b).collect();
        let (s0, s1) = (sys.guard_level(&y), sys.guard_level(&moved));
        let leaves = s1.abs() > s0.abs() && !(sys.guard_armed(&moved) && s1 * s0 < 0.0);
        if !leaves {
            rep.beating += 1;
        }
        rep.min_density = rep.min_density.min(sys.ref_density(&x)).min(sys.ref_density(&y));
        let mut probe = vec![0.0; sys.dim()];
        for (i, p) in probe.iter_mut().enumerate().take(sys.continuous_dim()) {
            let d = sys.domain();
            *p = rng.gen_range(d.lower[i]..d.upper[i]);
        }
        if sys.sheet_count() > 1 {
            let k = rng.gen_range(0..sys.sheet_count());
            probe[sys.continuous_dim()] = sys.sheet_value(k);
        }
        rep.min_density = rep.min_density.min(sys.ref_density(&probe));
    }
    rep
}
