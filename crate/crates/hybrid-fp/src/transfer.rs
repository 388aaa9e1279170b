//! Semi-Lagrangian solver for the hybrid Frobenius–Perron equation
//!
//! ```text
//! ∂u/∂t + du(X) = −u · div_μ X          away from Δ(S),
//! u(t⁺, x) = Σ_{y ∈ Δ⁻¹{x}} u(t⁻, y) / |𝒥(y)|   on Δ(S).
//! ```
//!
//! Each node is traced backward over one step: the characteristic is
//! integrated with RK4 sub-steps while the image level `s_img` is monitored;
//! a sign change is bisected, and if the located point lies in `Δ(S)` the
//! path branches into every preimage, each branch weighted by `1/|𝒥|`. The
//! divergence is integrated along the path by the trapezoid rule and enters
//! as `exp(−∫ div)`. New node values are interpolated at the feet.
//!
//! The system is autonomous and the step fixed, so the feet, weights and
//! interpolation stencils are computed once and reused every step.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{bisect_level, step_watching, Rk4};
use crate::grid::{DensityField, GridSpec};
use crate::system::{HybridSystem, Preimages};
use crate::volume::{hybrid_jacobian, numeric_divergence};

/// Initial density evaluator on full system states.
pub type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Interpolation at characteristic feet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Nearest,
    Multilinear,
}

/// Treatment of feet that leave the grid through a non-periodic side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Inflowing density is zero.
    ZeroInflow,
    /// The characteristic is followed back to `t = 0` and the initial
    /// density is evaluated there.
    FullBacktrack,
}

/// Solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub interpolation: Interpolation,
    pub boundary: Boundary,
    /// RK4 sub-steps per `dt` at which `s_img` is monitored.
    pub jump_detection_substeps: usize,
    /// Output times (nearest completed step is reported).
    pub snapshot_times: Vec<f64>,
    /// Resets allowed along one characteristic within one step.
    pub max_jumps_per_step: usize,
    /// Feet allowed per node.
    pub max_feet: usize,
    /// Backward nudge after a teleport through the reset.
    pub nudge: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 0.005,
            interpolation: Interpolation::Nearest,
            boundary: Boundary::ZeroInflow,
            jump_detection_substeps: 8,
            snapshot_times: vec![0.0],
            max_jumps_per_step: 50,
            max_feet: 16,
            nudge: 1e-9,
        }
    }
}

impl SolverConfig {
    /// Checks `dt > 0`, sorted snapshot times, positive sub-steps.
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Invalid("solver dt must be positive".into()));
        }
        if self.jump_detection_substeps == 0 {
            return Err(Error::Invalid("jump_detection_substeps must be positive".into()));
        }
        if self.snapshot_times.windows(2).any(|w| w[1] < w[0]) || self.snapshot_times.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::Invalid("snapshot times must be non-negative and sorted".into()));
        }
        if self.max_feet == 0 {
            return Err(Error::Invalid("max_feet must be positive".into()));
        }
        Ok(())
    }
}

/// End point of a backward characteristic branch.
#[derive(Debug, Clone, PartialEq)]
pub struct Foot {
    pub point: Vec<f64>,
    /// Product of `1/|𝒥|` over the resets undone on this branch.
    pub weight: f64,
    /// `∫ div_μ X dτ` along the branch.
    pub div_integral: f64,
}

fn div_at(sys: &dyn HybridSystem, x: &[f64]) -> f64 {
    sys.divergence(x).unwrap_or_else(|| numeric_divergence(sys, x))
}

/// Tolerance on `|s_img|` for treating a point as lying on `Δ(S)`.
const ON_IMAGE_TOL: f64 = 1e-12;

struct Branch {
    x: Vec<f64>,
    remaining: f64,
    weight: f64,
    div: f64,
    jumps: usize,
    may_jump_now: bool,
}

/// Traces `x` backward over `duration`, monitoring `s_img` every `h_sub`.
fn trace(sys: &dyn HybridSystem, x0: &[f64], duration: f64, h_sub: f64, cfg: &SolverConfig) -> Result<Vec<Foot>> {
    let n = sys.dim();
    let dom = sys.domain();
    let mut rk = Rk4::new(n);
    let mut y = vec![0.0; n];
    let mut xp = vec![0.0; n];
    let mut feet = Vec::new();
    let mut stack =
        vec![Branch { x: x0.to_vec(), remaining: duration, weight: 1.0, div: 0.0, jumps: 0, may_jump_now: true }];

    let preimages_of = |p: &[f64]| -> Result<Vec<Vec<f64>>> {
        match sys.preimages(p) {
            Preimages::Finite(v) => Ok(v),
            Preimages::Infinite => Err(Error::InfinitePreimage),
        }
    };

    while let Some(mut b) = stack.pop() {
        // Spawns the branches through the preimages of `yh`. Preimages where
        // the flow grazes the guard carry no flux and are skipped; returns
        // whether any branch was spawned.
        let mut spawn = |b: &Branch, pre: Vec<Vec<f64>>, stack: &mut Vec<Branch>| -> Result<bool> {
            if b.jumps + 1 > cfg.max_jumps_per_step {
                return Err(Error::ZenoLimit { impacts: b.jumps + 1 });
            }
            let mut any = false;
            for z in pre {
                let jac = match hybrid_jacobian(sys, &z) {
                    Ok(r) => r.jac,
                    Err(Error::TangentFlow { .. }) => continue,
                    Err(e) => return Err(e),
                };
                any = true;
                sys.field_pre(&z, &mut xp);
                let nudge = cfg.nudge.min(b.remaining);
                let mut zn: Vec<f64> = z.iter().zip(&xp).map(|(a, v)| a - nudge * v).collect();
                dom.wrap(&mut zn);
                let d = 0.5 * (div_at(sys, &z) + div_at(sys, &zn)) * nudge;
                stack.push(Branch {
                    x: zn,
                    remaining: b.remaining - nudge,
                    weight: b.weight / jac.abs(),
                    div: b.div + d,
                    jumps: b.jumps + 1,
                    may_jump_now: false,
                });
            }
            Ok(any)
        };

        if b.may_jump_now && b.remaining > 0.0 && sys.image_level(&b.x).abs() <= ON_IMAGE_TOL {
            let pre = preimages_of(&b.x)?;
            if !pre.is_empty() && spawn(&b, pre, &mut stack)? {
                continue;
            }
        }
        let mut jumped = false;
        let mut d_here = div_at(sys, &b.x);
        while b.remaining > 0.0 {
            let h = h_sub.min(b.remaining);
            let (h_neg, crossed) = step_watching(sys, &mut rk, &|p| sys.image_level(p), &b.x, -h, &mut y);
            let h = -h_neg;
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { what: "backward characteristic".into() });
            }
            if crossed {
                let (tau, yh) = bisect_level(sys, &mut rk, &|p| sys.image_level(p), &b.x, -h, 1e-12);
                let pre = preimages_of(&yh)?;
                if !pre.is_empty() {
                    let s = tau.abs();
                    let at_hit = Branch {
                        x: yh.clone(),
                        remaining: b.remaining - s,
                        weight: b.weight,
                        div: b.div + 0.5 * (d_here + div_at(sys, &yh)) * s,
                        jumps: b.jumps,
                        may_jump_now: false,
                    };
                    if spawn(&at_hit, pre, &mut stack)? {
                        jumped = true;
                        break;
                    }
                }
            }
            let d_next = div_at(sys, &y);
            b.div += 0.5 * (d_here + d_next) * h;
            d_here = d_next;
            b.x.copy_from_slice(&y);
            dom.wrap(&mut b.x);
            b.remaining = if h >= b.remaining { 0.0 } else { b.remaining - h };
        }
        if !jumped {
            feet.push(Foot { point: b.x, weight: b.weight, div_integral: b.div });
        }
        if feet.len() + stack.len() > cfg.max_feet {
            return Err(Error::TooManyFeet { count: feet.len() + stack.len(), cap: cfg.max_feet });
        }
    }
    Ok(feet)
}

/// Backward characteristic of one node over `dt` (`0 ≤ dt ≤ cfg.dt`).
pub fn backward_characteristic(sys: &dyn HybridSystem, x: &[f64], dt: f64, cfg: &SolverConfig) -> Result<Vec<Foot>> {
    crate::system::check_state(sys, x)?;
    if !(dt >= 0.0) || dt > cfg.dt * (1.0 + 1e-12) {
        return Err(Error::Invalid(format!("characteristic step {dt} outside [0, {}]", cfg.dt)));
    }
    if dt == 0.0 {
        return Ok(vec![Foot { point: x.to_vec(), weight: 1.0, div_integral: 0.0 }]);
    }
    trace(sys, x, dt, cfg.dt / cfg.jump_detection_substeps as f64, cfg)
}

/// Per-node update rule reused every step.
#[derive(Debug, Clone, Default)]
struct NodeRule {
    terms: Vec<(usize, f64)>,
    /// Feet outside the grid, followed back to `t = 0` when needed.
    backtrack: Vec<(Vec<f64>, f64)>,
}

/// Reusable solver: system, grid, settings and initial density.
pub struct TransferSolver<'a> {
    pub sys: &'a dyn HybridSystem,
    pub grid: GridSpec,
    pub cfg: SolverConfig,
    pub f0: DensityFn,
    rho: Vec<f64>,
    rules: Option<Vec<NodeRule>>,
}

impl<'a> TransferSolver<'a> {
    /// Checks that the grid matches the system's continuous coordinates and
    /// sheets.
    pub fn new(sys: &'a dyn HybridSystem, grid: GridSpec, cfg: SolverConfig, f0: DensityFn) -> Result<Self> {
        cfg.validate()?;
        if grid.dim() != sys.continuous_dim() {
            return Err(Error::GridMismatch(format!(
                "grid has {} axes, system has {} continuous coordinates",
                grid.dim(),
                sys.continuous_dim()
            )));
        }
        if grid.sheets != sys.sheet_count() {
            return Err(Error::GridMismatch(format!(
                "grid has {} sheets, system has {}",
                grid.sheets,
                sys.sheet_count()
            )));
        }
        let rho = grid.node_ref_density(sys);
        Ok(Self { sys, grid, cfg, f0, rho, rules: None })
    }

    /// `f0` sampled at the nodes, at `t = 0`.
    pub fn initial(&self) -> Result<DensityField> {
        let vals: Vec<f64> = (0..self.grid.len())
            .into_par_iter()
            .map(|i| (self.f0)(&self.grid.node_state(self.sys, i)))
            .collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "initial density".into() });
        }
        DensityField::new(self.grid.clone(), 0.0, vals, &self.rho)
    }

    fn build_rules(&self) -> Result<Vec<NodeRule>> {
        let sys = self.sys;
        let grid = &self.grid;
        let cfg = &self.cfg;
        (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let x = grid.node_state(sys, i);
                let feet = backward_characteristic(sys, &x, cfg.dt, cfg)?;
                let mut rule = NodeRule::default();
                for f in feet {
                    let coef = f.weight * (-f.div_integral).exp();
                    if grid.contains(&f.point, 1e-9) {
                        rule.terms.extend(self.stencil(&f.point).into_iter().map(|(j, w)| (j, w * coef)));
                    } else if cfg.boundary == Boundary::FullBacktrack {
                        rule.backtrack.push((f.point, coef));
                    }
                }
                Ok(rule)
            })
            .collect()
    }

    /// Interpolation stencil at a foot inside the grid. Densities jump
    /// across `Δ(S)`, so nodes on the other side of the image level from the
    /// foot are excluded and the remaining weights renormalised.
    fn stencil(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let sys = self.sys;
        let sheet = sys.sheet_index(x);
        let side = sys.image_level(x);
        let same_side = |j: usize| side * sys.image_level(&self.grid.node_state(sys, j)) >= 0.0;
        let mut cands = self.grid.multilinear(x, sheet);
        if self.cfg.interpolation == Interpolation::Nearest {
            let j = self.grid.nearest(x, sheet);
            if same_side(j) {
                return vec![(j, 1.0)];
            }
            cands.sort_by(|a, b| b.1.total_cmp(&a.1));
            return cands.into_iter().find(|&(j, _)| same_side(j)).map(|(j, _)| vec![(j, 1.0)]).unwrap_or_else(|| vec![(j, 1.0)]);
        }
        let kept: Vec<(usize, f64)> = cands.iter().copied().filter(|&(j, _)| same_side(j)).collect();
        let total: f64 = kept.iter().map(|t| t.1).sum();
        if kept.len() == cands.len() {
            cands
        } else if total > 0.0 {
            kept.into_iter().map(|(j, w)| (j, w / total)).collect()
        } else {
            vec![(self.grid.nearest(x, sheet), 1.0)]
        }
    }

    /// `P_t f0` at a point, by following its characteristic back to `t = 0`.
    pub fn backtrack_to_initial(&self, x: &[f64], t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok((self.f0)(x));
        }
        let feet = trace(self.sys, x, t, self.cfg.dt / self.cfg.jump_detection_substeps as f64, &self.cfg)?;
        Ok(feet.iter().map(|f| f.weight * (-f.div_integral).exp() * (self.f0)(&f.point)).sum())
    }

    /// Advances `u` by one step `dt`.
    pub fn step(&mut self, u: &DensityField) -> Result<DensityField> {
        if u.grid != self.grid {
            return Err(Error::GridMismatch("field and solver grids differ".into()));
        }
        if self.rules.is_none() {
            self.rules = Some(self.build_rules()?);
        }
        let rules = self.rules.as_ref().expect("rules built");
        let t_prev = u.t;
        let vals: Result<Vec<f64>> = rules
            .par_iter()
            .map(|r| {
                let mut v = 0.0;
                for &(j, w) in &r.terms {
                    v += w * u.values[j];
                }
                for (p, w) in &r.backtrack {
                    v += w * self.backtrack_to_initial(p, t_prev)?;
                }
                Ok(v)
            })
            .collect();
        let vals = vals?;
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "density".into() });
        }
        DensityField::new(self.grid.clone(), t_prev + self.cfg.dt, vals, &self.rho)
    }

    /// Runs to the last snapshot time and returns one field per requested
    /// snapshot (nearest completed step).
    pub fn evolve(&mut self) -> Result<Vec<DensityField>> {
        let dt = self.cfg.dt;
        let targets: Vec<usize> = self.cfg.snapshot_times.iter().map(|t| (t / dt).round() as usize).collect();
        let last = targets.iter().copied().max().unwrap_or(0);
        let mut u = self.initial()?;
        let mut out = Vec::with_capacity(targets.len());
        let mut k = 0usize;
        loop {
            for &tk in &targets {
                if tk == k {
                    let mut s = u.clone();
                    s.t = k as f64 * dt;
                    out.push(s);
                }
            }
            if k >= last {
                break;
            }
            let mut next = self.step(&u)?;
            k += 1;
            next.t = k as f64 * dt;
            u = next;
        }
        Ok(out)
    }
}

/// One solver step from scratch (no cached stencils).
pub fn step_density(sys: &dyn HybridSystem, u: &DensityField, cfg: &SolverConfig, f0: DensityFn) -> Result<DensityField> {
    let mut s = TransferSolver::new(sys, u.grid.clone(), cfg.clone(), f0)?;
    s.step(u)
}

/// Samples `f0` on `grid` and evolves it, returning the snapshots.
pub fn evolve(sys: &dyn HybridSystem, f0: DensityFn, grid: &GridSpec, cfg: &SolverConfig) -> Result<Vec<DensityField>> {
    TransferSolver::new(sys, grid.clone(), cfg.clone(), f0)?.evolve()
}
