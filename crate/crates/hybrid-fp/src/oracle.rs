//! Monte-Carlo reference for the density evolution: sample the initial
//! density, push every point through the hybrid flow, histogram the result
//! on the density grid.
//!
//! Each point draws from its own ChaCha stream (`seed`, stream = point
//! index), so clouds are identical for any thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{advance, IntegratorConfig, Termination};
use crate::grid::{DensityField, GridSpec};
use crate::system::HybridSystem;
use crate::transfer::DensityFn;

/// Attempts per point before sampling is declared stalled (an acceptance
/// rate below `1e-4`).
pub const MAX_ATTEMPTS_PER_POINT: usize = 10_000;

/// A sampled ensemble of states at a common time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleCloud {
    pub t: f64,
    pub points: Vec<Vec<f64>>,
    /// Points that stopped before reaching `t` (Zeno, left the chart,
    /// non-finite).
    pub dead: Vec<bool>,
}

impl EnsembleCloud {
    /// Number of points still alive.
    pub fn alive(&self) -> usize {
        self.dead.iter().filter(|d| !**d).count()
    }
}

/// Draws `n` points from `f0 · ρ` on the grid box by rejection against the
/// bound `bound ≥ f0 ρ`. Sheets are drawn uniformly.
pub fn sample(
    sys: &dyn HybridSystem,
    f0: &DensityFn,
    bound: f64,
    grid: &GridSpec,
    n: usize,
    seed: u64,
) -> Result<EnsembleCloud> {
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::Invalid("sampling bound must be positive".into()));
    }
    let d = grid.dim();
    let dom = &grid.domain;
    let pts: Result<Vec<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            for _ in 0..MAX_ATTEMPTS_PER_POINT {
                let mut x: Vec<f64> = (0..d).map(|k| rng.gen_range(dom.lower[k]..=dom.upper[k])).collect();
                if sys.sheet_count() > 1 {
                    x.push(sys.sheet_value(rng.gen_range(0..sys.sheet_count())));
                }
                let v = f0(&x) * sys.ref_density(&x);
                if v > bound * (1.0 + 1e-12) {
                    return Err(Error::DensityBound { value: v, bound });
                }
                if rng.gen::<f64>() * bound < v {
                    return Ok(x);
                }
            }
            Err(Error::SamplingStall { rate: 1.0 / MAX_ATTEMPTS_PER_POINT as f64 })
        })
        .collect();
    let points = pts?;
    let dead = vec![false; points.len()];
    Ok(EnsembleCloud { t: 0.0, points, dead })
}

/// Advances every live point from `cloud.t` to `t`.
pub fn push(sys: &dyn HybridSystem, cloud: &EnsembleCloud, t: f64, cfg: &IntegratorConfig) -> Result<EnsembleCloud> {
    if t < cloud.t {
        return Err(Error::Invalid("oracle push must move forward in time".into()));
    }
    let res: Vec<(Vec<f64>, bool)> = cloud
        .points
        .par_iter()
        .zip(cloud.dead.par_iter())
        .map(|(x, &dead)| {
            if dead {
                return (x.clone(), true);
            }
            match advance(sys, x, cloud.t, t, cfg) {
                Ok(end) if end.terminated == Termination::TimeReached => (end.x, false),
                Ok(end) => (end.x, true),
                Err(_) => (x.clone(), true),
            }
        })
        .collect();
    let (points, dead) = res.into_iter().unzip();
    Ok(EnsembleCloud { t, points, dead })
}

/// Histogram of live points on the dual cells of `grid`, normalised to a
/// density with respect to `ρ`: `count / (N_alive · wᵢ · ρᵢ)`.
pub fn histogram(sys: &dyn HybridSystem, cloud: &EnsembleCloud, grid: &GridSpec) -> Result<DensityField> {
    let idx: Vec<Option<usize>> = cloud
        .points
        .par_iter()
        .zip(cloud.dead.par_iter())
        .map(|(x, &dead)| {
            if dead {
                None
            } else {
                grid.cell_of(x, sys.sheet_index(x))
            }
        })
        .collect();
    let mut counts = vec![0u64; grid.len()];
    for i in idx.into_iter().flatten() {
        counts[i] += 1;
    }
    let alive = cloud.alive().max(1) as f64;
    let rho = grid.node_ref_density(sys);
    let vals: Vec<f64> =
        (0..grid.len()).map(|i| counts[i] as f64 / (alive * grid.weight(i) * rho[i])).collect();
    DensityField::new(grid.clone(), cloud.t, vals, &rho)
}

/// Distances between two fields on the same grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    /// `Σ wᵢ |aᵢ/m_a − bᵢ/m_b|` (each field normalised by its own mass).
    pub l1: f64,
    /// `max |aᵢ − bᵢ|` on raw values.
    pub linf: f64,
    pub mass_a: f64,
    pub mass_b: f64,
}

/// Compares two fields; grids must match exactly.
pub fn compare(a: &DensityField, b: &DensityField) -> Result<Comparison> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch("fields live on different grids".into()));
    }
    let norm = |m: f64| if m != 0.0 { 1.0 / m } else { 0.0 };
    let (na, nb) = (norm(a.mass), norm(b.mass));
    let mut l1 = 0.0;
    let mut linf: f64 = 0.0;
    for i in 0..a.values.len() {
        l1 += a.grid.weight(i) * (a.values[i] * na - b.values[i] * nb).abs();
        linf = linf.max((a.values[i] - b.values[i]).abs());
    }
    Ok(Comparison { l1, linf, mass_a: a.mass, mass_b: b.mass })
}
