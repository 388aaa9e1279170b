//! Run configuration: a `[section] key = value` document resolved against
//! model defaults into typed settings.
//!
//! Sources are layered: built-in defaults, then the `--config` file, then
//! `--set section.key=value` overrides, then the dedicated flags. The
//! resolved configuration is written back verbatim into every manifest, so a
//! manifest can be fed to `--config` to repeat a run.

use std::path::PathBuf;

use hybrid_fp::io::Manifest;
use hybrid_fp::models::{build, default_grid, InitialDensity, ModelParams};
use hybrid_fp::{Boundary, DomainBox, GridSpec, HybridSystem, IntegratorConfig, Interpolation, SolverConfig};

use crate::CliError;

/// Accepted keys per section (the `outputs` section of a manifest is
/// informational and ignored on input).
pub const KEYS: &[(&str, &[&str])] = &[
    ("model", &["id", "m", "g", "c", "alpha", "a", "I", "theta0", "E"]),
    ("grid", &["lower", "upper", "shape", "periodic"]),
    (
        "solver",
        &["dt", "interpolation", "boundary", "jump_detection_substeps", "snapshot_times", "max_jumps_per_step", "max_feet"],
    ),
    ("integrator", &["dt_max", "impact_tol", "max_impacts", "min_interevent_time", "post_reset_nudge"]),
    ("oracle", &["n_samples", "seed", "dt_max", "threshold"]),
    ("density", &["kind", "center", "scale", "kappa", "alpha"]),
    ("output", &["dir"]),
    ("run", &["x0", "T", "count", "tol"]),
];

/// Fully resolved settings for one invocation.
pub struct RunConfig {
    pub model: String,
    pub params: ModelParams,
    pub sys: Box<dyn HybridSystem>,
    pub grid: GridSpec,
    pub solver: SolverConfig,
    pub integrator: IntegratorConfig,
    pub oracle_n: usize,
    pub oracle_seed: u64,
    pub oracle_dt_max: f64,
    pub threshold: f64,
    pub density: InitialDensity,
    pub out_dir: PathBuf,
    /// Explicit initial state, if given.
    pub x0: Option<Vec<f64>>,
    pub t_end: f64,
    pub count: usize,
    pub tol: f64,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn num(sec: &str, key: &str, v: &str) -> Result<f64, CliError> {
    v.trim().parse::<f64>().map_err(|_| usage(format!("{sec}.{key}: '{v}' is not a number")))
}

fn int(sec: &str, key: &str, v: &str) -> Result<u64, CliError> {
    v.trim().parse::<u64>().map_err(|_| usage(format!("{sec}.{key}: '{v}' is not a non-negative integer")))
}

fn list(sec: &str, key: &str, v: &str) -> Result<Vec<f64>, CliError> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| num(sec, key, s)).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Rejects unknown sections and keys.
pub fn check_keys(doc: &Manifest) -> Result<(), CliError> {
    for (sec, kv) in &doc.sections {
        if sec == "outputs" {
            continue;
        }
        let allowed = KEYS
            .iter()
            .find(|(s, _)| s == sec)
            .ok_or_else(|| usage(format!("unknown section [{sec}]")))?
            .1;
        for (k, _) in kv {
            if !allowed.contains(&k.as_str()) {
                return Err(usage(format!("unknown key {sec}.{k}")));
            }
        }
    }
    Ok(())
}

/// Applies a `section.key=value` override.
pub fn apply_set(doc: &mut Manifest, spec: &str) -> Result<(), CliError> {
    let (path, value) = spec.split_once('=').ok_or_else(|| usage(format!("--set expects section.key=value, got '{spec}'")))?;
    let (sec, key) =
        path.trim().split_once('.').ok_or_else(|| usage(format!("--set expects section.key=value, got '{spec}'")))?;
    doc.set(sec, key, value.trim());
    Ok(())
}

fn default_x0(id: &str) -> Vec<f64> {
    match id {
        "ball" | "ball-inelastic" => vec![1.0, 0.0],
        "filippov" => vec![0.5, 0.5],
        "chaplygin3d" => vec![0.2, 1.0, 0.1],
        "chaplygin2d" => vec![0.0, 0.0, 1.0],
        "gl2" => vec![0.3, 0.5, -0.2, 0.1, 0.5],
        "qc" => vec![1.0, -2.0],
        _ => vec![0.2, 1.0, 0.0],
    }
}

impl RunConfig {
    /// Resolves a configuration document.
    pub fn resolve(doc: &Manifest) -> Result<Self, CliError> {
        check_keys(doc)?;
        let get = |s: &str, k: &str| doc.get(s, k);

        let model = get("model", "id").ok_or_else(|| usage("no model given (use --model or model.id)"))?.to_string();
        let mut params = ModelParams::default();
        for key in ["m", "g", "c", "alpha", "a", "I", "theta0", "E"] {
            if let Some(v) = get("model", key) {
                params.set(key, num("model", key, v)?).map_err(|e| usage(e.to_string()))?;
            }
        }
        let sys = build(&model, &params).map_err(|e| usage(e.to_string()))?;

        let (mut grid, boundary) = default_grid(&model, sys.as_ref()).map_err(|e| usage(e.to_string()))?;
        if ["lower", "upper", "shape", "periodic"].iter().any(|k| get("grid", k).is_some()) {
            let lower = match get("grid", "lower") {
                Some(v) => list("grid", "lower", v)?,
                None => grid.domain.lower.clone(),
            };
            let upper = match get("grid", "upper") {
                Some(v) => list("grid", "upper", v)?,
                None => grid.domain.upper.clone(),
            };
            let shape = match get("grid", "shape") {
                Some(v) => v.split(',').map(|s| int("grid", "shape", s).map(|n| n as usize)).collect::<Result<_, _>>()?,
                None => grid.shape.clone(),
            };
            let mut periodic = grid.domain.periodic.clone();
            if let Some(v) = get("grid", "periodic") {
                periodic = vec![false; lower.len()];
                for s in v.split(',').filter(|s| !s.trim().is_empty()) {
                    let i = int("grid", "periodic", s)? as usize;
                    *periodic.get_mut(i).ok_or_else(|| usage("grid.periodic: axis out of range"))? = true;
                }
            }
            if periodic.len() != lower.len() {
                periodic.resize(lower.len(), false);
            }
            let dom = DomainBox::new(lower, upper, periodic).map_err(|e| usage(format!("grid: {e}")))?;
            grid = GridSpec::new(dom, shape, grid.sheets).map_err(|e| usage(format!("grid: {e}")))?;
        }
        if grid.dim() != sys.continuous_dim() {
            return Err(usage(format!(
                "grid has {} axes but model {model} has {} continuous coordinates",
                grid.dim(),
                sys.continuous_dim()
            )));
        }

        let mut solver = SolverConfig { boundary, ..SolverConfig::default() };
        if let Some(v) = get("solver", "dt") {
            solver.dt = num("solver", "dt", v)?;
        }
        if let Some(v) = get("solver", "interpolation") {
            solver.interpolation = match v {
                "nearest" => Interpolation::Nearest,
                "multilinear" => Interpolation::Multilinear,
                _ => return Err(usage(format!("solver.interpolation: '{v}' (expected nearest or multilinear)"))),
            };
        }
        if let Some(v) = get("solver", "boundary") {
            solver.boundary = match v {
                "zero_inflow" => Boundary::ZeroInflow,
                "full_backtrack" => Boundary::FullBacktrack,
                _ => return Err(usage(format!("solver.boundary: '{v}' (expected zero_inflow or full_backtrack)"))),
            };
        }
        if let Some(v) = get("solver", "jump_detection_substeps") {
            solver.jump_detection_substeps = int("solver", "jump_detection_substeps", v)? as usize;
        }
        if let Some(v) = get("solver", "max_jumps_per_step") {
            solver.max_jumps_per_step = int("solver", "max_jumps_per_step", v)? as usize;
        }
        if let Some(v) = get("solver", "max_feet") {
            solver.max_feet = int("solver", "max_feet", v)? as usize;
        }
        let t_given = get("run", "T").map(|v| num("run", "T", v)).transpose()?;
        if let Some(t) = t_given {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(usage("run.T must be non-negative"));
            }
        }
        let t_end = match get("solver", "snapshot_times") {
            Some(v) => {
                solver.snapshot_times = list("solver", "snapshot_times", v)?;
                if solver.snapshot_times.is_empty() {
                    return Err(usage("solver.snapshot_times is empty"));
                }
                let last = solver.snapshot_times.iter().copied().fold(0.0, f64::max);
                match t_given {
                    Some(t) if last > t => return Err(usage("solver.snapshot_times extend beyond run.T")),
                    Some(t) => t,
                    None => last,
                }
            }
            None => {
                let t = t_given.unwrap_or(1.0);
                solver.snapshot_times = if t > 0.0 { vec![0.0, t] } else { vec![0.0] };
                t
            }
        };
        solver.validate().map_err(|e| usage(format!("solver: {e}")))?;

        let mut integrator = IntegratorConfig::default();
        for key in ["dt_max", "impact_tol", "min_interevent_time", "post_reset_nudge"] {
            if let Some(v) = get("integrator", key) {
                let x = num("integrator", key, v)?;
                match key {
                    "dt_max" => integrator.dt_max = x,
                    "impact_tol" => integrator.impact_tol = x,
                    "min_interevent_time" => integrator.min_interevent_time = x,
                    _ => integrator.post_reset_nudge = x,
                }
            }
        }
        if let Some(v) = get("integrator", "max_impacts") {
            integrator.max_impacts = int("integrator", "max_impacts", v)? as usize;
        }
        integrator.validate().map_err(|e| usage(format!("integrator: {e}")))?;

        let oracle_n = get("oracle", "n_samples").map(|v| int("oracle", "n_samples", v)).transpose()?.unwrap_or(100_000) as usize;
        if oracle_n == 0 {
            return Err(usage("oracle.n_samples must be at least 1"));
        }
        let oracle_seed = get("oracle", "seed").map(|v| int("oracle", "seed", v)).transpose()?.unwrap_or(0);
        let oracle_dt_max = get("oracle", "dt_max").map(|v| num("oracle", "dt_max", v)).transpose()?.unwrap_or(0.01);
        if !(oracle_dt_max > 0.0) {
            return Err(usage("oracle.dt_max must be positive"));
        }
        let threshold = get("oracle", "threshold").map(|v| num("oracle", "threshold", v)).transpose()?.unwrap_or(0.1);

        let density = resolve_density(doc, &model, sys.as_ref())?;
        density.build(sys.as_ref()).map_err(|e| usage(format!("density: {e}")))?;

        let out_dir = PathBuf::from(get("output", "dir").unwrap_or("hybridfp-out"));
        let x0 = get("run", "x0").map(|v| list("run", "x0", v)).transpose()?;
        let count = get("run", "count").map(|v| int("run", "count", v)).transpose()?.unwrap_or(5) as usize;
        let tol = get("run", "tol").map(|v| num("run", "tol", v)).transpose()?.unwrap_or(1e-5);

        Ok(Self {
            model,
            params,
            sys,
            grid,
            solver,
            integrator,
            oracle_n,
            oracle_seed,
            oracle_dt_max,
            threshold,
            density,
            out_dir,
            x0,
            t_end,
            count,
            tol,
        })
    }

    /// Initial state for trajectory runs (explicit or the model default).
    pub fn x0_or_default(&self) -> Vec<f64> {
        self.x0.clone().unwrap_or_else(|| default_x0(&self.model))
    }

    /// Integrator settings for the Monte-Carlo reference.
    pub fn oracle_integrator(&self) -> IntegratorConfig {
        IntegratorConfig { dt_max: self.oracle_dt_max, ..self.integrator.clone() }
    }

    /// The resolved configuration as a document.
    pub fn to_manifest(&self) -> Manifest {
        let mut m = Manifest::default();
        let p = &self.params;
        m.set("model", "id", &self.model);
        m.set("model", "m", p.m);
        m.set("model", "g", p.g);
        if let Some(c) = p.c {
            m.set("model", "c", c);
        }
        if let Some(a) = p.alpha {
            m.set("model", "alpha", a);
        }
        m.set("model", "a", p.a);
        m.set("model", "I", p.inertia);
        m.set("model", "theta0", p.theta0);
        m.set("model", "E", p.energy);

        let d = &self.grid.domain;
        m.set("grid", "lower", join(&d.lower));
        m.set("grid", "upper", join(&d.upper));
        m.set("grid", "shape", join(&self.grid.shape));
        let periodic: Vec<usize> = (0..d.dim()).filter(|&i| d.periodic[i]).collect();
        m.set("grid", "periodic", join(&periodic));

        let s = &self.solver;
        m.set("solver", "dt", s.dt);
        m.set(
            "solver",
            "interpolation",
            match s.interpolation {
                Interpolation::Nearest => "nearest",
                Interpolation::Multilinear => "multilinear",
            },
        );
        m.set(
            "solver",
            "boundary",
            match s.boundary {
                Boundary::ZeroInflow => "zero_inflow",
                Boundary::FullBacktrack => "full_backtrack",
            },
        );
        m.set("solver", "jump_detection_substeps", s.jump_detection_substeps);
        m.set("solver", "snapshot_times", join(&s.snapshot_times));
        m.set("solver", "max_jumps_per_step", s.max_jumps_per_step);
        m.set("solver", "max_feet", s.max_feet);

        let c = &self.integrator;
        m.set("integrator", "dt_max", c.dt_max);
        m.set("integrator", "impact_tol", c.impact_tol);
        m.set("integrator", "max_impacts", c.max_impacts);
        m.set("integrator", "min_interevent_time", c.min_interevent_time);
        m.set("integrator", "post_reset_nudge", c.post_reset_nudge);

        m.set("oracle", "n_samples", self.oracle_n);
        m.set("oracle", "seed", self.oracle_seed);
        m.set("oracle", "dt_max", self.oracle_dt_max);
        m.set("oracle", "threshold", self.threshold);

        match &self.density {
            InitialDensity::Gaussian { center, scale } => {
                m.set("density", "kind", "gaussian");
                m.set("density", "center", join(center));
                m.set("density", "scale", join(scale));
            }
            InitialDensity::Uniform => m.set("density", "kind", "uniform"),
            InitialDensity::FilippovInvariant { kappa, alpha } => {
                m.set("density", "kind", "filippov");
                m.set("density", "kappa", kappa);
                m.set("density", "alpha", alpha);
            }
        }

        m.set("output", "dir", self.out_dir.display());
        if let Some(x0) = &self.x0 {
            m.set("run", "x0", join(x0));
        }
        m.set("run", "T", self.t_end);
        m.set("run", "count", self.count);
        m.set("run", "tol", self.tol);
        m
    }
}

fn resolve_density(doc: &Manifest, model: &str, sys: &dyn HybridSystem) -> Result<InitialDensity, CliError> {
    let n = sys.continuous_dim();
    let mut d = InitialDensity::default_for(model, sys);
    if let Some(kind) = doc.get("density", "kind") {
        d = match (kind, &d) {
            ("gaussian", InitialDensity::Gaussian { .. }) => d.clone(),
            ("gaussian", _) => InitialDensity::Gaussian { center: vec![0.0; n], scale: vec![0.3; n] },
            ("uniform", _) => InitialDensity::Uniform,
            ("filippov", InitialDensity::FilippovInvariant { .. }) => d.clone(),
            ("filippov", _) => {
                let f = hybrid_fp::models::FILIPPOV_KAPPA;
                InitialDensity::FilippovInvariant { kappa: f, alpha: hybrid_fp::models::Filippov::invariant_alpha(f) }
            }
            _ => return Err(usage(format!("density.kind: '{kind}' (expected gaussian, uniform or filippov)"))),
        };
    }
    match &mut d {
        InitialDensity::Gaussian { center, scale } => {
            if let Some(v) = doc.get("density", "center") {
                *center = list("density", "center", v)?;
            }
            if let Some(v) = doc.get("density", "scale") {
                *scale = list("density", "scale", v)?;
            }
            if doc.get("density", "kappa").is_some() || doc.get("density", "alpha").is_some() {
                return Err(usage("density.kappa/alpha only apply to kind = filippov"));
            }
        }
        InitialDensity::FilippovInvariant { kappa, alpha } => {
            if let Some(v) = doc.get("density", "kappa") {
                *kappa = num("density", "kappa", v)?;
            }
            if let Some(v) = doc.get("density", "alpha") {
                *alpha = num("density", "alpha", v)?;
            }
            if doc.get("density", "center").is_some() || doc.get("density", "scale").is_some() {
                return Err(usage("density.center/scale only apply to kind = gaussian"));
            }
        }
        InitialDensity::Uniform => {
            if ["center", "scale", "kappa", "alpha"].iter().any(|k| doc.get("density", k).is_some()) {
                return Err(usage("a uniform density takes no parameters"));
            }
        }
    }
    Ok(d)
}
