//! Acceptance suite: one line per criterion, `criterion N: PASS|FAIL ...`,
//! with indented `note:` lines for diagnostics. Tolerances are fixed by the
//! criteria; nothing is tuned to make a check pass. The test fails at the
//! end if any criterion failed.

use std::f64::consts::{PI, SQRT_2};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use hybrid_fp::models::{
    aff1_reduced, build, gl2_casimirs, gl2_energy, gl2_reduced, Aff1Full, Aff1Jump, Ball, Chaplygin2d, Chaplygin3d,
    ChaplyginFull, Filippov, Gl2Full, InitialDensity, ModelParams, QcSystem, SleighParams, FILIPPOV_KAPPA,
};
use hybrid_fp::oracle::{compare, histogram, push, sample, EnsembleCloud};
use hybrid_fp::reduction::verify_reduction;
use hybrid_fp::transfer::DensityFn;
use hybrid_fp::{
    advance, hybrid_jacobian, integrate, Boundary, DensityField, DomainBox, GridSpec, HybridSystem, IntegratorConfig,
    Interpolation, SolverConfig, Termination, TransferSolver,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Report {
    lines: Vec<String>,
    failed: Vec<usize>,
}

impl Report {
    fn criterion(&mut self, n: usize, pass: bool, summary: String) {
        let line = format!("criterion {n}: {} {summary}", if pass { "PASS" } else { "FAIL" });
        println!("{line}");
        self.lines.push(line);
        if !pass {
            self.failed.push(n);
        }
    }

    fn note(&mut self, text: String) {
        let line = format!("  note: {text}");
        println!("{line}");
        self.lines.push(line);
    }
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn ball_f0() -> DensityFn {
    Arc::new(|x: &[f64]| (-(x[0] - 1.0).powi(2) - x[1] * x[1]).exp())
}

fn ball_grid(n: usize) -> GridSpec {
    GridSpec::new(DomainBox::aperiodic(vec![0.0, -4.0], vec![5.0, 4.0]).unwrap(), vec![n, n], 1).unwrap()
}

fn ball_evolve(n: usize, dt: f64, interpolation: Interpolation, times: Vec<f64>) -> Vec<DensityField> {
    let ball = Ball::elastic(1.0, 1.0);
    let cfg = SolverConfig { dt, interpolation, snapshot_times: times, ..Default::default() };
    TransferSolver::new(&ball, ball_grid(n), cfg, ball_f0()).unwrap().evolve().unwrap()
}

/// Fraction of `ρ`-weighted mass with `‖(x, p)‖ < r`.
fn mass_fraction_inside(u: &DensityField, r: f64) -> f64 {
    let (mut inside, mut total) = (0.0, 0.0);
    for i in 0..u.grid.len() {
        let x = u.grid.node_coords(i);
        let m = u.grid.weight(i) * u.values[i];
        total += m;
        if x[0].hypot(x[1]) < r {
            inside += m;
        }
    }
    inside / total
}

fn cloud_fraction_inside(c: &EnsembleCloud, r: f64) -> f64 {
    let alive = c.alive() as f64;
    let n = c.points.iter().zip(&c.dead).filter(|(x, d)| !**d && x[0].hypot(x[1]) < r).count();
    n as f64 / alive
}

fn criterion_1(rep: &mut Report) {
    let t = Instant::now();
    let jac = |sys: &dyn HybridSystem, x: &[f64]| hybrid_jacobian(sys, x).map(|r| r.jac).unwrap_or(f64::NAN);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let gl2 = gl2_reduced();
    let gl2_x = gl2.sample_guard(&mut rng);
    let cases: Vec<(&str, f64, f64)> = vec![
        ("filippov alpha=2", jac(&Filippov::new(2.0).unwrap(), &[0.7, 0.0]), 4.0),
        ("filippov alpha=e^pi", jac(&Filippov::new(PI.exp()).unwrap(), &[0.0, 0.4]), (2.0 * PI).exp()),
        ("elastic ball", jac(&Ball::elastic(1.0, 1.0), &[0.0, -1.3]), 1.0),
        ("inelastic ball c=0.5", jac(&Ball::new(1.0, 1.0, 0.5).unwrap(), &[0.0, -1.3]), 0.0625),
        ("gl2", jac(&gl2, &gl2_x), -1.0),
    ];
    let elapsed = secs(t);
    let mut ok = elapsed < 1.0;
    let mut parts = Vec::new();
    for (name, got, want) in &cases {
        let good = (got - want).abs() <= 1e-6;
        ok &= good;
        parts.push(if good { format!("{name}={got:.9}") } else { format!("{name}={got:.9}(expected {want})") });
    }
    rep.criterion(1, ok, format!("{} [{elapsed:.3}s]", parts.join(" ")));
}

fn criterion_2(rep: &mut Report) {
    let t = Instant::now();
    let ball = Ball::elastic(1.0, 1.0);
    let cfg = IntegratorConfig { dt_max: 1e-4, ..Default::default() };
    let traj = integrate(&ball, &[1.0, 0.0], 0.0, 29.0, &cfg).unwrap();
    let times = traj.impact_times();
    let expected = ball.elastic_impact_times(1.0, 3);
    let time_err = expected.iter().zip(&times).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let e0 = ball.energy(&[1.0, 0.0]);
    let drift = traj.samples.iter().map(|(_, x)| (ball.energy(x) - e0).abs()).fold(0.0, f64::max);
    let elapsed = secs(t);
    let ok = times.len() >= 10 && time_err <= 1e-8 && drift < 1e-8 && elapsed < 1.0;
    rep.criterion(
        2,
        ok,
        format!("impacts={} first-three error={time_err:.2e} energy drift={drift:.2e} [{elapsed:.3}s]", times.len()),
    );
}

fn criterion_3(rep: &mut Report) {
    let ball = Ball::new(1.0, 1.0, 0.5).unwrap();
    let cfg = IntegratorConfig { dt_max: 1e-4, ..Default::default() };
    let traj = integrate(&ball, &[1.0, 0.0], 0.0, 5.0, &cfg).unwrap();
    let times = traj.impact_times();
    let last = times.last().copied().unwrap_or(f64::NAN);
    let target = 3.0 * SQRT_2;
    let exit = Command::new(env!("CARGO_BIN_EXE_hybridfp"))
        .args(["trajectory", "--model", "ball-inelastic", "--c", "0.5", "--x0", "1,0", "--T", "5"])
        .arg("--out")
        .arg(std::env::temp_dir().join("hybridfp-acceptance-3"))
        .output()
        .unwrap()
        .status
        .code();
    let ok = times.len() >= 40 && (last - target).abs() <= 1e-4 && exit == Some(2);
    rep.criterion(
        3,
        ok,
        format!(
            "impacts={} last impact={last:.10} target 3*sqrt(2)={target:.10} |diff|={:.3e} cli exit={exit:?}",
            times.len(),
            (last - target).abs()
        ),
    );
    let limit = ball.zeno_time(1.0);
    rep.note(format!(
        "with p -> -c^2 p the flight times shrink by c^2, so the impacts accumulate at sqrt(2)(1+2c^2/(1-c^2)) = {limit:.10}; |last - that| = {:.3e}; terminated {:?}",
        (last - limit).abs(),
        traj.terminated
    ));
    rep.note("flight time after k impacts is 2*sqrt(2)*c^(2k); beyond ~25 impacts it drops below the resolution of doubles near t=2.36, so 40 located impacts are not representable".into());
}

struct BallOracle {
    at1: EnsembleCloud,
    at5: EnsembleCloud,
}

fn ball_oracle() -> BallOracle {
    let ball = Ball::elastic(1.0, 1.0);
    let grid = ball_grid(200);
    let cloud = sample(&ball, &ball_f0(), 1.0, &grid, 1_000_000, 2024).unwrap();
    // RK4 integrates the ball's quadratic flights exactly; events are located by bisection.
    let cfg = IntegratorConfig { dt_max: 0.01, ..Default::default() };
    let at1 = push(&ball, &cloud, 1.0, &cfg).unwrap();
    let at5 = push(&ball, &at1, 5.0, &cfg).unwrap();
    BallOracle { at1, at5 }
}

fn criterion_4(rep: &mut Report, oracle: &BallOracle) {
    let t = Instant::now();
    let ball = Ball::elastic(1.0, 1.0);
    let snaps = ball_evolve(200, 0.005, Interpolation::Multilinear, vec![0.0, 1.0]);
    let h = histogram(&ball, &oracle.at1, &ball_grid(200)).unwrap();
    let c = compare(&snaps[1], &h).unwrap();
    let drift = (snaps[1].mass - snaps[0].mass).abs() / snaps[0].mass;
    let elapsed = secs(t);
    let ok = c.l1 <= 0.1 && drift <= 0.05 && elapsed < 300.0;
    rep.criterion(
        4,
        ok,
        format!(
            "multilinear 200^2 dt=0.005 t=1 N=1e6: l1={:.4} mass drift={:.3}% alive={} [{elapsed:.1}s solver+histogram]",
            c.l1,
            100.0 * drift,
            oracle.at1.alive()
        ),
    );
    let near = ball_evolve(200, 0.005, Interpolation::Nearest, vec![0.0, 1.0]);
    let cn = compare(&near[1], &h).unwrap();
    rep.note(format!(
        "nearest-neighbour interpolation at the same settings: l1={:.4} mass drift={:.3}% (a foot moves < half a cell per step, so nearest lookup freezes the density)",
        cn.l1,
        100.0 * (near[1].mass - near[0].mass).abs() / near[0].mass
    ));
    let h0 = {
        let c0 = sample(&ball, &ball_f0(), 1.0, &ball_grid(200), 1_000_000, 2024).unwrap();
        histogram(&ball, &c0, &ball_grid(200)).unwrap()
    };
    rep.note(format!("sampling noise floor at t=0 (same N and grid): l1={:.4}", compare(&snaps[0], &h0).unwrap().l1));
}

fn criterion_5(rep: &mut Report, oracle: &BallOracle) {
    let snaps = ball_evolve(200, 0.005, Interpolation::Multilinear, vec![5.0]);
    let pde = mass_fraction_inside(&snaps[0], 0.75);
    let mc = cloud_fraction_inside(&oracle.at5, 0.75);
    let agree = (pde - mc).abs() <= 0.10;
    let ok = pde >= 0.60 && agree;
    rep.criterion(
        5,
        ok,
        format!("t=5 mass inside |(x,p)|<0.75: pde={:.1}% (threshold 60%) oracle={:.1}% agreement within 10pp: {agree}", 100.0 * pde, 100.0 * mc),
    );
    let ball = Ball::elastic(1.0, 1.0);
    let h = histogram(&ball, &oracle.at5, &ball_grid(200)).unwrap();
    rep.note(format!("t=5 l1(pde, oracle)={:.4}; the elastic ball has no Zeno point, so mass keeps circulating rather than concentrating", compare(&snaps[0], &h).unwrap().l1));
}

fn relative_change(a: &DensityField, b: &DensityField) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..a.grid.len() {
        let w = a.grid.weight(i);
        num += w * (a.values[i] - b.values[i]).abs();
        den += w * a.values[i].abs();
    }
    num / den
}

fn filippov_change(alpha: f64, density_alpha: f64) -> f64 {
    let sys = Filippov::new(alpha).unwrap();
    let grid = GridSpec::new(DomainBox::aperiodic(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(), vec![400, 400], 1).unwrap();
    let f0 = InitialDensity::FilippovInvariant { kappa: FILIPPOV_KAPPA, alpha: density_alpha }.build(&sys).unwrap();
    let cfg = SolverConfig {
        dt: PI / 2.0,
        interpolation: Interpolation::Nearest,
        boundary: Boundary::FullBacktrack,
        jump_detection_substeps: 32,
        snapshot_times: vec![0.0, PI / 2.0],
        ..Default::default()
    };
    let snaps = TransferSolver::new(&sys, grid, cfg, f0).unwrap().evolve().unwrap();
    relative_change(&snaps[0], &snaps[1])
}

fn criterion_6(rep: &mut Report) {
    let t = Instant::now();
    let inv = filippov_change(PI.exp(), PI.exp());
    let control = filippov_change(2.0, 2.0);
    let ok = inv <= 0.05 && control > 0.20;
    rep.criterion(
        6,
        ok,
        format!("400^2 quarter turn: alpha=e^pi relative l1 change={:.4} (<=0.05); alpha=2 control={control:.3} (>0.2) [{:.1}s]", inv, secs(t)),
    );
    rep.note("one step of dt=pi/2 (32 monitored sub-steps), nearest interpolation, characteristics leaving the box followed back to t=0; contraction rate kappa=2 makes alpha=e^pi the invariant case".into());
}

fn criterion_7(rep: &mut Report) {
    let sys = gl2_reduced();
    let x0 = [0.3, 0.5, -0.2, 0.1, 0.5];
    let traj = integrate(&sys, &x0, 0.0, 1.0, &IntegratorConfig::default()).unwrap();
    let (c0, d0) = gl2_casimirs(&x0);
    let drift = traj
        .samples
        .iter()
        .map(|(_, x)| {
            let (c, d) = gl2_casimirs(x);
            (c - c0).abs().max((d - d0).abs())
        })
        .fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut h_err, mut trace_exact) = (0.0f64, true);
    for _ in 0..1000 {
        let mut z: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
        z.push(0.0);
        let y = sys.reset(&z);
        h_err = h_err.max((gl2_energy(&y) - gl2_energy(&z)).abs());
        trace_exact &= gl2_casimirs(&y).0 == -gl2_casimirs(&z).0;
    }
    let qc = QcSystem::new();
    let cfg = IntegratorConfig { dt_max: 1e-3, ..Default::default() };
    let (mut max_impacts, mut q_err) = (0usize, 0.0f64);
    for i in 0..100 {
        let q0 = -3.0 + 6.0 * (i as f64 + 0.5) / 100.0;
        let traj = integrate(&qc, &[q0, -2.0], 0.0, 1.0, &cfg).unwrap();
        max_impacts = max_impacts.max(traj.events.len());
        for (t, x) in &traj.samples {
            let expect = match traj.events.first() {
                Some(e) if *t > e.t => QcSystem::closed_form(e.x_post[0], e.x_post[1], t - e.t),
                _ => QcSystem::closed_form(q0, -2.0, *t),
            };
            q_err = q_err.max((x[0] - expect).abs());
        }
    }
    let ok = drift < 1e-10 && h_err <= 1e-12 && trace_exact && max_impacts <= 1 && q_err < 1e-8;
    rep.criterion(
        7,
        ok,
        format!("C,D drift over t=1: {drift:.2e}; jump |dh|<={h_err:.2e}; trace flips exactly: {trace_exact}; qc sweep max impacts={max_impacts}, q closed-form error={q_err:.2e}"),
    );
}

fn criterion_8(rep: &mut Report) {
    let cfg = IntegratorConfig { dt_max: 1e-4, impact_tol: 1e-12, ..Default::default() };
    let x0 = [1.2, 0.0, 0.0, 1.0, -0.5, 0.2, -0.1, -0.3];
    let gl2 = verify_reduction(&Gl2Full::new(), &Gl2Full::project, &gl2_reduced(), &x0, 1.0, 20, &cfg).unwrap();
    let p = SleighParams::default();
    let full = ChaplyginFull::new(p.clone()).unwrap();
    let sleigh =
        verify_reduction(&full, &ChaplyginFull::project, &Chaplygin3d::new(p).unwrap(), &full.lift(&[0.2, 1.0, 0.1]), 2.0, 20, &cfg)
            .unwrap();
    let aff = |jump| {
        verify_reduction(&Aff1Full::new(1.0, 0.5, jump).unwrap(), &Aff1Full::project, &aff1_reduced(1.0, 0.5, jump), &[2.0, 0.0, 0.1, 0.5], 2.0, 20, &cfg)
            .unwrap()
    };
    let (normal, scaled) = (aff(Aff1Jump::Corner), aff(Aff1Jump::ScaledByA));
    let ok = gl2.impacts_full.len() == 1
        && gl2.max_mismatch <= 1e-5
        && gl2.impact_time_mismatch <= 1e-6
        && sleigh.max_mismatch <= 1e-5
        && scaled.max_mismatch > 0.1;
    rep.criterion(
        8,
        ok,
        format!(
            "gl2 8D vs 5D: impacts={} mismatch={:.2e} impact-time diff={:.2e}; sleigh T=2 mismatch={:.2e}; aff1 group-dependent jump mismatch={:.3} (>0.1)",
            gl2.impacts_full.len(),
            gl2.max_mismatch,
            gl2.impact_time_mismatch,
            sleigh.max_mismatch,
            scaled.max_mismatch
        ),
    );
    rep.note(format!("aff1 with the group-independent jump reduces exactly: mismatch={:.2e}", normal.max_mismatch));
}

fn criterion_9(rep: &mut Report) {
    let sys = build("chaplygin2d", &ModelParams::default()).unwrap();
    let d = sys.domain();
    let grid = GridSpec::new(DomainBox::aperiodic(d.lower[..2].to_vec(), d.upper[..2].to_vec()).unwrap(), vec![200, 200], 2).unwrap();
    let f0 = InitialDensity::default_for("chaplygin2d", sys.as_ref()).build(sys.as_ref()).unwrap();
    let cfg = SolverConfig {
        dt: 0.01,
        interpolation: Interpolation::Multilinear,
        snapshot_times: vec![0.0, 1.0, 3.0],
        ..Default::default()
    };
    let snaps = TransferSolver::new(sys.as_ref(), grid, cfg, f0).unwrap().evolve().unwrap();
    let means: Vec<f64> = snaps
        .iter()
        .map(|u| {
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..u.grid.len() {
                let w = u.grid.weight(i) * u.values[i];
                num += w * u.grid.node_coords(i)[0];
                den += w;
            }
            num / den
        })
        .collect();
    let s = Chaplygin2d::new(SleighParams::default(), 1.0).unwrap();
    let traj = integrate(&s, &s.state(0.0, 0.0, 1.0).unwrap(), 0.0, 3.0, &IntegratorConfig::default()).unwrap();
    let v_err = traj.samples.iter().map(|(t, x)| (x[0] - s.v_closed_form(*t)).abs()).fold(0.0, f64::max);
    let ok = means[0] < means[1] && means[1] < means[2] && v_err <= 1e-8;
    rep.criterion(
        9,
        ok,
        format!(
            "mean v at t=0,1,3: {:.4}, {:.4}, {:.4} (v*={:.4}); closed-form v(t) error={v_err:.2e}",
            means[0],
            means[1],
            means[2],
            s.v_star()
        ),
    );
}

fn criterion_10(rep: &mut Report, oracle: &BallOracle) {
    let ball = Ball::elastic(1.0, 1.0);
    let err = |n: usize, dt: f64| {
        let snaps = ball_evolve(n, dt, Interpolation::Multilinear, vec![1.0]);
        let h = histogram(&ball, &oracle.at1, &ball_grid(n)).unwrap();
        compare(&snaps[0], &h).unwrap().l1
    };
    let (coarse, fine) = (err(50, 0.02), err(100, 0.01));
    let ratio = coarse / fine;

    let sys = gl2_reduced();
    let x0 = [0.3, 0.5, -0.2, 0.1, 0.5];
    let reference = advance(&sys, &x0, 0.0, 1.0, &IntegratorConfig { dt_max: 1e-4, ..Default::default() }).unwrap();
    let rk = |dt: f64| {
        let e = advance(&sys, &x0, 0.0, 1.0, &IntegratorConfig { dt_max: dt, ..Default::default() }).unwrap();
        assert_eq!(e.terminated, Termination::TimeReached);
        e.x.iter().zip(&reference.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let rk_ratios: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&dt| rk(dt) / rk(dt / 2.0)).collect();
    let rk_min = rk_ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let ok = ratio >= 1.3 && rk_min >= 8.0 && reference.impacts == 0;
    rep.criterion(
        10,
        ok,
        format!(
            "ball l1 vs oracle: 50^2/dt=0.02 {coarse:.4} -> 100^2/dt=0.01 {fine:.4}, ratio {ratio:.2} (>=1.3); RK4 error ratios per halving {:?} (>=8)",
            rk_ratios.iter().map(|r| format!("{r:.1}")).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn acceptance() {
    let mut rep = Report { lines: Vec::new(), failed: Vec::new() };
    criterion_1(&mut rep);
    criterion_2(&mut rep);
    criterion_3(&mut rep);
    let t = Instant::now();
    let oracle = ball_oracle();
    println!("  (shared ball oracle, N=1e6 pushed to t=1 and t=5: {:.1}s)", secs(t));
    criterion_4(&mut rep, &oracle);
    criterion_5(&mut rep, &oracle);
    criterion_6(&mut rep);
    criterion_7(&mut rep);
    criterion_8(&mut rep);
    criterion_9(&mut rep);
    criterion_10(&mut rep, &oracle);
    assert!(rep.failed.is_empty(), "failed criteria: {:?}\n{}", rep.failed, rep.lines.join("\n"));
}
