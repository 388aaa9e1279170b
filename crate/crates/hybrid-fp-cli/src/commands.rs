//! Subcommand implementations. Each returns the process exit code.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use hybrid_fp::io::{events_to_string, read_snapshot, snapshot_to_string, trajectory_to_string, Manifest};
use hybrid_fp::models::{aff1_reduced, Aff1Full, Aff1Jump, Chaplygin3d, ChaplyginFull, Gl2Full, SleighParams};
use hybrid_fp::oracle::{compare, histogram, push, sample};
use hybrid_fp::reduction::{verify_reduction, ReductionReport};
use hybrid_fp::volume::hybrid_jacobian;
use hybrid_fp::{integrate, Error, Termination, TransferSolver};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::CliError;

/// Exit code for a threshold failure.
pub const EXIT_THRESHOLD: u8 = 1;
/// Exit code for a Zeno run.
pub const EXIT_ZENO: u8 = 2;
/// Exit code for a run that left the chart.
pub const EXIT_DOMAIN: u8 = 3;

fn solver_err(e: Error) -> CliError {
    match e {
        Error::GridMismatch(m) => CliError::Grid(m),
        e => CliError::Solver(e),
    }
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("output directory {}: {e}", dir.display())))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    let p = dir.join(name);
    fs::write(&p, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", p.display())))
}

fn write_manifest(cfg: &RunConfig, command: &str, files: &[String], extra: &[(&str, String)]) -> Result<(), CliError> {
    let mut m: Manifest = cfg.to_manifest();
    m.set("outputs", "command", command);
    m.set("outputs", "files", files.join(","));
    for (k, v) in extra {
        m.set("outputs", k, v);
    }
    write(&cfg.out_dir, "manifest.txt", &m.render())
}

/// Simulates one trajectory and writes `trajectory.csv` and `events.csv`.
pub fn trajectory(cfg: &mut RunConfig) -> Result<u8, CliError> {
    let x0 = cfg.x0_or_default();
    let sys = cfg.sys.as_ref();
    if x0.len() != sys.dim() {
        return Err(CliError::Usage(format!("x0 has {} entries, model {} needs {}", x0.len(), cfg.model, sys.dim())));
    }
    cfg.x0 = Some(x0.clone());
    let traj = integrate(sys, &x0, 0.0, cfg.t_end, &cfg.integrator).map_err(|e| match e {
        Error::DimensionMismatch { .. } | Error::NonFinite { .. } | Error::Domain(_) => CliError::Usage(e.to_string()),
        e => CliError::Solver(e),
    })?;
    prepare_dir(&cfg.out_dir)?;
    write(&cfg.out_dir, "trajectory.csv", &trajectory_to_string(&traj))?;
    write(&cfg.out_dir, "events.csv", &events_to_string(&traj))?;
    let status = format!("{:?}", traj.terminated);
    write_manifest(
        cfg,
        "trajectory",
        &["trajectory.csv".into(), "events.csv".into()],
        &[("terminated", status.clone()), ("impacts", traj.events.len().to_string())],
    )?;
    let (t, x) = traj.last();
    println!("model {}  samples {}  impacts {}  terminated {status}", cfg.model, traj.samples.len(), traj.events.len());
    for (i, e) in traj.events.iter().enumerate() {
        println!("impact {:>4}  t = {:.12}", i + 1, e.t);
    }
    println!("final t = {t:.12}  x = {x:?}");
    Ok(match traj.terminated {
        Termination::TimeReached => 0,
        Termination::ZenoLimit => EXIT_ZENO,
        Termination::LeftDomain => EXIT_DOMAIN,
        Termination::NonFinite => return Err(CliError::Solver(Error::NonFinite { what: "trajectory".into() })),
    })
}

fn snapshot_name(prefix: &str, i: usize) -> String {
    format!("{prefix}_{i:04}.csv")
}

/// Evolves the initial density and writes one snapshot per requested time.
pub fn evolve(cfg: &RunConfig) -> Result<u8, CliError> {
    let f0 = cfg.density.build(cfg.sys.as_ref()).map_err(solver_err)?;
    let mut solver = TransferSolver::new(cfg.sys.as_ref(), cfg.grid.clone(), cfg.solver.clone(), f0).map_err(solver_err)?;
    let snaps = solver.evolve().map_err(solver_err)?;
    prepare_dir(&cfg.out_dir)?;
    let mut files = Vec::new();
    println!("{:>8}  {:>12}  {:>18}  file", "snapshot", "t", "mass");
    for (i, s) in snaps.iter().enumerate() {
        let name = snapshot_name("snapshot", i);
        write(&cfg.out_dir, &name, &snapshot_to_string(s, Some("pde")))?;
        println!("{i:>8}  {:>12.6}  {:>18.12e}  {name}", s.t, s.mass);
        files.push(name);
    }
    write_manifest(cfg, "evolve", &files, &[])?;
    Ok(0)
}

/// Runs the solver and the Monte-Carlo reference to the snapshot times and
/// compares them.
pub fn compare_run(cfg: &RunConfig) -> Result<u8, CliError> {
    let sys = cfg.sys.as_ref();
    let f0 = cfg.density.build(sys).map_err(solver_err)?;
    let mut solver = TransferSolver::new(sys, cfg.grid.clone(), cfg.solver.clone(), f0.clone()).map_err(solver_err)?;
    let snaps = solver.evolve().map_err(solver_err)?;
    let bound = cfg.density.bound(sys);
    let mut cloud = sample(sys, &f0, bound, &cfg.grid, cfg.oracle_n, cfg.oracle_seed).map_err(solver_err)?;
    let icfg = cfg.oracle_integrator();
    prepare_dir(&cfg.out_dir)?;
    let mut files = Vec::new();
    let mut table = format!(
        "{:>12}  {:>12}  {:>12}  {:>16}  {:>16}  {:>10}  {}\n",
        "t", "l1", "linf", "mass_pde", "mass_oracle", "alive", "status"
    );
    let mut all_ok = true;
    for (i, s) in snaps.iter().enumerate() {
        cloud = push(sys, &cloud, s.t, &icfg).map_err(solver_err)?;
        let h = histogram(sys, &cloud, &cfg.grid).map_err(solver_err)?;
        let c = compare(s, &h).map_err(solver_err)?;
        let ok = c.l1 <= cfg.threshold;
        all_ok &= ok;
        let _ = writeln!(
            table,
            "{:>12.6}  {:>12.6e}  {:>12.6e}  {:>16.10e}  {:>16.10e}  {:>10}  {}",
            s.t,
            c.l1,
            c.linf,
            c.mass_a,
            c.mass_b,
            cloud.alive(),
            if ok { "ok" } else { "FAIL" }
        );
        let (a, b) = (snapshot_name("snapshot", i), snapshot_name("oracle", i));
        write(&cfg.out_dir, &a, &snapshot_to_string(s, Some("pde")))?;
        write(&cfg.out_dir, &b, &snapshot_to_string(&h, Some("oracle")))?;
        files.push(a);
        files.push(b);
    }
    let _ = writeln!(table, "threshold {}  result {}", cfg.threshold, if all_ok { "PASS" } else { "FAIL" });
    write(&cfg.out_dir, "compare.txt", &table)?;
    files.push("compare.txt".into());
    write_manifest(cfg, "compare", &files, &[])?;
    print!("{table}");
    Ok(if all_ok { 0 } else { EXIT_THRESHOLD })
}

/// Compares two snapshot files.
pub fn compare_files(a: &Path, b: &Path, threshold: f64) -> Result<u8, CliError> {
    let read = |p: &Path| read_snapshot(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())));
    let ((fa, _), (fb, _)) = (read(a)?, read(b)?);
    let c = compare(&fa, &fb).map_err(solver_err)?;
    let ok = c.l1 <= threshold;
    println!("l1 {:.6e}  linf {:.6e}  mass_a {:.10e}  mass_b {:.10e}  threshold {threshold}  {}", c.l1, c.linf, c.mass_a, c.mass_b, if ok { "PASS" } else { "FAIL" });
    Ok(if ok { 0 } else { EXIT_THRESHOLD })
}

/// Prints hybrid Jacobians at sampled guard points (or at `x0`).
pub fn jacobian(cfg: &RunConfig) -> Result<u8, CliError> {
    let sys = cfg.sys.as_ref();
    let points: Vec<Vec<f64>> = match &cfg.x0 {
        Some(x) => vec![x.clone()],
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.oracle_seed);
            (0..cfg.count).map(|_| sys.sample_guard(&mut rng)).collect()
        }
    };
    let mut table = format!("{:<48}  {:>20}  {:>12}  {:>12}\n", "x_guard", "jac", "cond", "basis_res");
    for x in &points {
        let r = hybrid_jacobian(sys, x).map_err(|e| match e {
            Error::DimensionMismatch { .. } | Error::NonFinite { .. } => CliError::Usage(e.to_string()),
            e => CliError::Solver(e),
        })?;
        let xs: Vec<String> = r.x_guard.iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(table, "{:<48}  {:>20.12}  {:>12.4e}  {:>12.4e}", xs.join(","), r.jac, r.cond, r.basis_residual);
    }
    print!("{table}");
    Ok(0)
}

fn print_report(name: &str, rep: &ReductionReport, tol: f64) -> bool {
    let ok = rep.max_mismatch <= tol && rep.impact_time_mismatch <= tol;
    println!(
        "{name}: max_mismatch {:.3e}  post_impact {:.3e}  impacts {}/{}  impact_time_mismatch {:.3e}  tol {tol:e}  {}",
        rep.max_mismatch,
        rep.post_impact_mismatch,
        rep.impacts_full.len(),
        rep.impacts_reduced.len(),
        rep.impact_time_mismatch,
        if ok { "PASS" } else { "FAIL" }
    );
    ok
}

/// Integrates the unreduced system and its reduction side by side.
pub fn verify(cfg: &RunConfig) -> Result<u8, CliError> {
    let icfg = &cfg.integrator;
    let t = cfg.t_end;
    let check_len = |x: &[f64], n: usize| -> Result<(), CliError> {
        if x.len() == n {
            Ok(())
        } else {
            Err(CliError::Usage(format!("verify: x0 must be a full state with {n} entries")))
        }
    };
    let rep = match cfg.model.as_str() {
        "gl2" => {
            let full = Gl2Full::new();
            let x0 = cfg.x0.clone().unwrap_or_else(|| vec![1.2, 0.0, 0.0, 1.0, -0.5, 0.2, -0.1, -0.3]);
            check_len(&x0, 8)?;
            verify_reduction(&full, &Gl2Full::project, cfg.sys.as_ref(), &x0, t, 20, icfg)
        }
        "chaplygin3d" => {
            let p = SleighParams { m: cfg.params.m, a: cfg.params.a, inertia: cfg.params.inertia, theta0: cfg.params.theta0 };
            let full = ChaplyginFull::new(p.clone()).map_err(|e| CliError::Usage(e.to_string()))?;
            let x0 = cfg.x0.clone().unwrap_or_else(|| full.lift(&[0.2, 1.0, 0.1]));
            check_len(&x0, 6)?;
            let reduced = Chaplygin3d::new(p).map_err(|e| CliError::Usage(e.to_string()))?;
            verify_reduction(&full, &ChaplyginFull::project, &reduced, &x0, t, 20, icfg)
        }
        "aff1" | "aff1-scaled" => {
            let jump = if cfg.model == "aff1" { Aff1Jump::Corner } else { Aff1Jump::ScaledByA };
            let full = Aff1Full::new(1.0, 0.5, jump).map_err(|e| CliError::Usage(e.to_string()))?;
            let x0 = cfg.x0.clone().unwrap_or_else(|| vec![2.0, 0.0, 0.1, 0.5]);
            check_len(&x0, 4)?;
            verify_reduction(&full, &Aff1Full::project, &aff1_reduced(1.0, 0.5, jump), &x0, t, 20, icfg)
        }
        other => {
            return Err(CliError::Usage(format!(
                "verify: model {other} has no unreduced counterpart (use gl2, chaplygin3d, aff1 or aff1-scaled)"
            )))
        }
    }
    .map_err(solver_err)?;
    Ok(if print_report(&cfg.model, &rep, cfg.tol) { 0 } else { EXIT_THRESHOLD })
}
