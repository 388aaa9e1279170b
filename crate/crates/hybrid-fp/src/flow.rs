//! Event-located integration of the hybrid flow.
//!
//! Between resets the state follows the vector field under fixed-step RK4.
//! A sign change of the guard level across a step is located by bisection,
//! re-integrating a single RK4 sub-step from the start of the step; the
//! reset is applied at the pre-crossing end of the final bracket and the
//! state is nudged along the post-reset field so that it leaves the guard
//! neighbourhood before stepping resumes.

use crate::error::{Error, Result};
use crate::system::{check_state, HybridSystem, Preimages};

/// Integrator settings.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    /// Maximum RK4 step.
    pub dt_max: f64,
    /// Required `|s(x_hit)|` at a located crossing.
    pub impact_tol: f64,
    /// Maximum number of resets before the run is declared Zeno.
    pub max_impacts: usize,
    /// Two resets closer than this in time are declared Zeno.
    pub min_interevent_time: f64,
    /// Time advanced along the post-reset field after each reset.
    pub post_reset_nudge: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt_max: 1e-3,
            impact_tol: 1e-10,
            max_impacts: 50,
            min_interevent_time: 1e-9,
            post_reset_nudge: 1e-9,
        }
    }
}

impl IntegratorConfig {
    /// Checks `dt_max > 0`, `impact_tol > 0`, `max_impacts ≥ 1`.
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return Err(Error::Invalid("dt_max must be positive".into()));
        }
        if !(self.impact_tol > 0.0) {
            return Err(Error::Invalid("impact_tol must be positive".into()));
        }
        if self.max_impacts < 1 {
            return Err(Error::Invalid("max_impacts must be at least 1".into()));
        }
        if !(self.min_interevent_time >= 0.0) || !(self.post_reset_nudge >= 0.0) {
            return Err(Error::Invalid("min_interevent_time and post_reset_nudge must be non-negative".into()));
        }
        Ok(())
    }
}

/// Why a trajectory stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// The requested final time was reached.
    TimeReached,
    /// Too many resets, or two resets too close in time.
    ZenoLimit,
    /// The state left the chart through a non-periodic side.
    LeftDomain,
    /// A NaN or infinity appeared.
    NonFinite,
}

/// One reset: the located guard point and its image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactEvent {
    pub t: f64,
    pub x_pre: Vec<f64>,
    pub x_post: Vec<f64>,
}

/// A piecewise-smooth path with its reset events.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridTrajectory {
    /// Strictly increasing `(t, x)` samples.
    pub samples: Vec<(f64, Vec<f64>)>,
    /// Resets in time order.
    pub events: Vec<ImpactEvent>,
    /// Reason the integration stopped.
    pub terminated: Termination,
}

impl HybridTrajectory {
    /// Final sample.
    pub fn last(&self) -> (f64, &[f64]) {
        let (t, x) = self.samples.last().expect("trajectory has at least one sample");
        (*t, x)
    }

    /// Reset times.
    pub fn impact_times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.t).collect()
    }
}

/// End state of a run without recorded samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowEnd {
    pub t: f64,
    pub x: Vec<f64>,
    pub impacts: usize,
    pub terminated: Termination,
}

/// Reusable RK4 stage buffers.
pub(crate) struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub(crate) fn new(n: usize) -> Self {
        Self { k1: vec![0.0; n], k2: vec![0.0; n], k3: vec![0.0; n], k4: vec![0.0; n], tmp: vec![0.0; n] }
    }

    /// One classical RK4 step of (signed) size `h` from `x` into `out`.
    pub(crate) fn step(&mut self, sys: &dyn HybridSystem, x: &[f64], h: f64, out: &mut [f64]) {
        let n = x.len();
        sys.vector_field(x, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        sys.vector_field(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        sys.vector_field(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        sys.vector_field(&self.tmp, &mut self.k4);
        for i in 0..n {
            out[i] = x[i] + h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

impl Rk4 {
    /// RK4 step that also reports whether any intermediate stage point lies
    /// strictly on the other side of `level` from `x`.
    fn step_monitored(
        &mut self,
        sys: &dyn HybridSystem,
        x: &[f64],
        h: f64,
        out: &mut [f64],
        level: &dyn Fn(&[f64]) -> f64,
        s0: f64,
    ) -> bool {
        let n = x.len();
        let mut crossed = false;
        sys.vector_field(x, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        crossed |= level(&self.tmp) * s0 < 0.0;
        sys.vector_field(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        crossed |= level(&self.tmp) * s0 < 0.0;
        sys.vector_field(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        crossed |= level(&self.tmp) * s0 < 0.0;
        sys.vector_field(&self.tmp, &mut self.k4);
        for i in 0..n {
            out[i] = x[i] + h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        crossed
    }
}

/// Largest number of halvings applied to a step whose stages straddle a
/// level set while its end point does not.
const MAX_STEP_HALVINGS: usize = 6;

/// Takes one RK4 step of signed length at most `h` from `x` into `out`,
/// watching `level`. The vector field may be discontinuous across the level
/// set, in which case a step whose stages straddle it can land back on the
/// starting side and hide a crossing; such steps are halved until the stages
/// agree or the crossing shows up at the end point. Returns the step length
/// taken and whether the end point lies across the level set.
pub(crate) fn step_watching(
    sys: &dyn HybridSystem,
    rk: &mut Rk4,
    level: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    h: f64,
    out: &mut [f64],
) -> (f64, bool) {
    let s0 = level(x);
    let mut h = h;
    for k in 0..=MAX_STEP_HALVINGS {
        let stage_cross = rk.step_monitored(sys, x, h, out, level, s0);
        let sb = level(out);
        let crossed = s0 * sb < 0.0 || (sb == 0.0 && s0 != 0.0);
        if crossed || !stage_cross || k == MAX_STEP_HALVINGS {
            return (h, crossed);
        }
        h *= 0.5;
    }
    unreachable!("loop returns on its last iteration")
}

/// Bisects on the sub-step length `τ ∈ [0, h]` (signed `h` allowed) for a
/// sign change of `level` along single RK4 steps from `x`. Returns the
/// sub-step length and state at the end of the final bracket that lies on
/// the same side as `x`.
pub(crate) fn bisect_level(
    sys: &dyn HybridSystem,
    rk: &mut Rk4,
    level: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    h: f64,
    tol: f64,
) -> (f64, Vec<f64>) {
    let s0 = level(x);
    let mut lo = 0.0f64;
    let mut hi = h;
    let mut x_lo = x.to_vec();
    let mut y = vec![0.0; x.len()];
    let t_tol = 1e-13;
    for _ in 0..200 {
        let s_lo = level(&x_lo);
        if (hi - lo).abs() <= t_tol && s_lo.abs() < tol {
            break;
        }
        if (hi - lo).abs() <= f64::EPSILON * h.abs() {
            break;
        }
        let mid = 0.5 * (lo + hi);
        rk.step(sys, x, mid, &mut y);
        let sm = level(&y);
        if sm == 0.0 || sm.signum() != s0.signum() && s0 != 0.0 {
            hi = mid;
        } else {
            lo = mid;
            x_lo.copy_from_slice(&y);
        }
    }
    (lo, x_lo)
}

/// Locates a guard crossing between `x_before` (at `t_before`) and
/// `x_after` (at `t_after`) by bisection on re-integrated RK4 sub-steps.
/// Returns `(t_hit, x_hit)` with `x_hit` on the `x_before` side.
pub fn locate_crossing(
    sys: &dyn HybridSystem,
    x_before: &[f64],
    x_after: &[f64],
    t_before: f64,
    t_after: f64,
    impact_tol: f64,
) -> Result<(f64, Vec<f64>)> {
    check_state(sys, x_before)?;
    check_state(sys, x_after)?;
    let (sa, sb) = (sys.guard_level(x_before), sys.guard_level(x_after));
    if !(sa * sb < 0.0 || (sb == 0.0 && sa != 0.0)) || !(t_after > t_before) {
        return Err(Error::NoBracket);
    }
    let mut rk = Rk4::new(sys.dim());
    let (tau, xh) = bisect_level(sys, &mut rk, &|y| sys.guard_level(y), x_before, t_after - t_before, impact_tol);
    Ok((t_before + tau, xh))
}

fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Core forward driver; calls `on_sample` for every sample and `on_event`
/// for every reset.
fn drive(
    sys: &dyn HybridSystem,
    x0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    mut on_sample: impl FnMut(f64, &[f64]),
    mut on_event: impl FnMut(ImpactEvent),
) -> Result<FlowEnd> {
    check_state(sys, x0)?;
    cfg.validate()?;
    if !(t1 >= t0) {
        return Err(Error::Invalid(format!("integration interval [{t0}, {t1}] is reversed")));
    }
    let n = sys.dim();
    let dom = sys.domain();
    let slack = 1e-9;
    let mut rk = Rk4::new(n);
    let mut x = x0.to_vec();
    dom.wrap(&mut x);
    let mut t = t0;
    let mut y = vec![0.0; n];
    let mut xp = vec![0.0; n];
    let mut impacts = 0usize;
    let mut last_impact = f64::NEG_INFINITY;
    on_sample(t, &x);
    let end = |x: Vec<f64>, t: f64, impacts: usize, terminated| Ok(FlowEnd { t, x, impacts, terminated });

    // Applies a reset at (t_hit, x_hit); returns Some(termination) to stop.
    let mut apply_reset = |t_hit: f64,
                           x_hit: &[f64],
                           x: &mut Vec<f64>,
                           t: &mut f64,
                           impacts: &mut usize,
                           last_impact: &mut f64,
                           on_sample: &mut dyn FnMut(f64, &[f64])|
     -> Option<Termination> {
        if *impacts >= cfg.max_impacts || t_hit - *last_impact < cfg.min_interevent_time {
            x.copy_from_slice(x_hit);
            *t = t_hit;
            return Some(Termination::ZenoLimit);
        }
        let post = sys.reset(x_hit);
        if !all_finite(&post) {
            return Some(Termination::NonFinite);
        }
        on_event(ImpactEvent { t: t_hit, x_pre: x_hit.to_vec(), x_post: post.clone() });
        *impacts += 1;
        *last_impact = t_hit;
        if t_hit > *t {
            on_sample(t_hit, x_hit);
        }
        let dt = cfg.post_reset_nudge.min((t1 - t_hit).max(0.0));
        sys.field_post(&post, &mut xp);
        for i in 0..x.len() {
            x[i] = post[i] + dt * xp[i];
        }
        dom.wrap(x);
        *t = t_hit + dt;
        if dt > 0.0 {
            on_sample(*t, x);
        }
        None
    };

    if sys.guard_level(&x).abs() < cfg.impact_tol && sys.guard_armed(&x) {
        let xh = x.clone();
        if let Some(term) =
            apply_reset(t, &xh, &mut x, &mut t, &mut impacts, &mut last_impact, &mut on_sample)
        {
            return end(x, t, impacts, term);
        }
    }

    while t < t1 {
        let mut h = cfg.dt_max.min(t1 - t);
        if t1 - (t + h) < 1e-12 * cfg.dt_max {
            h = t1 - t;
        }
        let (h_taken, crossed) = step_watching(sys, &mut rk, &|z| sys.guard_level(z), &x, h, &mut y);
        let h = h_taken;
        if !all_finite(&y) {
            return end(x, t, impacts, Termination::NonFinite);
        }
        if crossed {
            let (tau, xh) = bisect_level(sys, &mut rk, &|z| sys.guard_level(z), &x, h, cfg.impact_tol);
            if sys.guard_armed(&xh) {
                if let Some(term) =
                    apply_reset(t + tau, &xh, &mut x, &mut t, &mut impacts, &mut last_impact, &mut on_sample)
                {
                    return end(x, t, impacts, term);
                }
                if !dom.contains(&x, slack) {
                    return end(x, t, impacts, Termination::LeftDomain);
                }
                continue;
            }
        }
        t = if h == t1 - t { t1 } else { t + h };
        x.copy_from_slice(&y);
        dom.wrap(&mut x);
        on_sample(t, &x);
        if !dom.contains(&x, slack) {
            return end(x, t, impacts, Termination::LeftDomain);
        }
    }
    end(x, t, impacts, Termination::TimeReached)
}

/// Integrates the hybrid flow from `(t0, x0)` to `t1`, recording samples at
/// every step end and around every reset.
pub fn integrate(
    sys: &dyn HybridSystem,
    x0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<HybridTrajectory> {
    let mut samples = Vec::new();
    let mut events = Vec::new();
    let fin = drive(sys, x0, t0, t1, cfg, |t, x| samples.push((t, x.to_vec())), |e| events.push(e))?;
    Ok(HybridTrajectory { samples, events, terminated: fin.terminated })
}

/// Same flow as [`integrate`] but keeps only the final state.
pub fn advance(sys: &dyn HybridSystem, x0: &[f64], t0: f64, t1: f64, cfg: &IntegratorConfig) -> Result<FlowEnd> {
    drive(sys, x0, t0, t1, cfg, |_, _| {}, |_| {})
}

/// Integrates backward in time from `(t0, x0)` down to `t1 < t0`. Crossings
/// of `Δ(S)` are undone through the unique preimage; a point with several
/// preimages is an error (branching is handled by the transfer module).
/// Samples are returned in decreasing time.
pub fn integrate_backward(
    sys: &dyn HybridSystem,
    x0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<HybridTrajectory> {
    check_state(sys, x0)?;
    cfg.validate()?;
    if !(t1 <= t0) {
        return Err(Error::Invalid("backward integration needs t1 <= t0".into()));
    }
    let n = sys.dim();
    let dom = sys.domain();
    let mut rk = Rk4::new(n);
    let mut x = x0.to_vec();
    let mut t = t0;
    let mut y = vec![0.0; n];
    let mut xp = vec![0.0; n];
    let mut samples = vec![(t, x.clone())];
    let mut events = Vec::new();
    let unique = |y: &[f64]| -> Result<Option<Vec<f64>>> {
        match sys.preimages(y) {
            Preimages::Infinite => Err(Error::InfinitePreimage),
            Preimages::Finite(v) if v.len() > 1 => {
                Err(Error::Invalid("backward flow reached a point with several preimages".into()))
            }
            Preimages::Finite(mut v) => Ok(v.pop()),
        }
    };
    let jump = |z: Vec<f64>, y: &[f64], t: f64, x: &mut Vec<f64>, xp: &mut Vec<f64>, events: &mut Vec<ImpactEvent>| {
        events.push(ImpactEvent { t, x_pre: z.clone(), x_post: y.to_vec() });
        sys.field_pre(&z, xp);
        for i in 0..n {
            x[i] = z[i] - cfg.post_reset_nudge * xp[i];
        }
        dom.wrap(x);
    };
    if sys.image_level(&x).abs() < cfg.impact_tol {
        if let Some(z) = unique(&x)? {
            let y0 = x.clone();
            jump(z, &y0, t, &mut x, &mut xp, &mut events);
            t -= cfg.post_reset_nudge;
        }
    }
    let mut terminated = Termination::TimeReached;
    while t > t1 {
        if events.len() > cfg.max_impacts {
            terminated = Termination::ZenoLimit;
            break;
        }
        let h = cfg.dt_max.min(t - t1);
        let (h_neg, crossed) = step_watching(sys, &mut rk, &|z| sys.image_level(z), &x, -h, &mut y);
        let h = -h_neg;
        if !all_finite(&y) {
            terminated = Termination::NonFinite;
            break;
        }
        if crossed {
            let (tau, yh) = bisect_level(sys, &mut rk, &|z| sys.image_level(z), &x, -h, cfg.impact_tol);
            if let Some(z) = unique(&yh)? {
                t += tau;
                samples.push((t, yh.clone()));
                jump(z, &yh, t, &mut x, &mut xp, &mut events);
                t -= cfg.post_reset_nudge;
                samples.push((t, x.clone()));
                continue;
            }
        }
        t -= h;
        if (t - t1).abs() < 1e-12 * cfg.dt_max {
            t = t1;
        }
        x.copy_from_slice(&y);
        dom.wrap(&mut x);
        samples.push((t, x.clone()));
        if !dom.contains(&x, 1e-9) {
            terminated = Termination::LeftDomain;
            break;
        }
    }
    Ok(HybridTrajectory { samples, events, terminated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Ball;

    #[test]
    fn zero_duration_returns_single_sample() {
        let ball = Ball::elastic(1.0, 1.0);
        let tr = integrate(&ball, &[1.0, 0.0], 0.0, 0.0, &IntegratorConfig::default()).unwrap();
        assert_eq!(tr.samples.len(), 1);
        assert!(tr.events.is_empty());
        assert_eq!(tr.terminated, Termination::TimeReached);
    }

    #[test]
    fn sample_times_strictly_increase() {
        let ball = Ball::elastic(1.0, 1.0);
        let tr = integrate(&ball, &[1.0, 0.0], 0.0, 6.0, &IntegratorConfig { dt_max: 0.01, ..Default::default() })
            .unwrap();
        assert!(tr.samples.windows(2).all(|w| w[1].0 > w[0].0));
        assert_eq!(tr.events.len(), 2);
    }

    #[test]
    fn reversed_interval_is_rejected() {
        let ball = Ball::elastic(1.0, 1.0);
        assert!(integrate(&ball, &[1.0, 0.0], 1.0, 0.0, &IntegratorConfig::default()).is_err());
    }

    #[test]
    fn backward_flow_undoes_an_impact() {
        let ball = Ball::elastic(1.0, 1.0);
        let cfg = IntegratorConfig { dt_max: 1e-3, ..Default::default() };
        let fwd = advance(&ball, &[1.0, 0.0], 0.0, 2.0, &cfg).unwrap();
        let back = integrate_backward(&ball, &fwd.x, 2.0, 0.0, &cfg).unwrap();
        let (_, x) = back.last();
        assert!((x[0] - 1.0).abs() < 1e-7 && x[1].abs() < 1e-7, "{x:?}");
        assert_eq!(back.events.len(), 1);
    }
}
