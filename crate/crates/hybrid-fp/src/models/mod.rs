//! Reference hybrid systems and a registry that builds them by identifier.

mod aff1;
mod ball;
mod chaplygin;
mod filippov;
mod gl2;

use std::f64::consts::PI;
use std::sync::Arc;

pub use aff1::{aff1_reduced, Aff1Full, Aff1Jump};
pub use ball::Ball;
pub use chaplygin::{Chaplygin2d, Chaplygin3d, ChaplyginFull, SleighParams};
pub use filippov::{Filippov, FILIPPOV_KAPPA};
pub use gl2::{gl2_casimirs, gl2_energy, gl2_reduced, gl2_reset_rule, gl2_system, Gl2Full, QcSystem};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::system::{DomainBox, HybridSystem};
use crate::transfer::{Boundary, DensityFn};

/// Identifiers accepted by [`build`].
pub const MODEL_IDS: [&str; 9] = [
    "ball",
    "ball-inelastic",
    "filippov",
    "chaplygin3d",
    "chaplygin2d",
    "gl2",
    "qc",
    "aff1",
    "aff1-scaled",
];

/// Physical parameters for the registry; unused ones are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub m: f64,
    pub g: f64,
    /// Restitution; `None` means the model default (1 for `ball`, 0.5 for
    /// `ball-inelastic`).
    pub c: Option<f64>,
    /// Filippov slope; `None` means the invariant value `e^{κπ/2}`.
    pub alpha: Option<f64>,
    pub a: f64,
    pub inertia: f64,
    pub theta0: f64,
    pub energy: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        let s = SleighParams::default();
        Self { m: 1.0, g: 1.0, c: None, alpha: None, a: s.a, inertia: s.inertia, theta0: s.theta0, energy: 1.0 }
    }
}

impl ModelParams {
    /// Sets one parameter by its configuration key (`m`, `g`, `c`, `alpha`,
    /// `a`, `I`, `theta0`, `E`).
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::Invalid(format!("parameter {key} must be finite")));
        }
        match key {
            "m" => self.m = value,
            "g" => self.g = value,
            "c" => self.c = Some(value),
            "alpha" => self.alpha = Some(value),
            "a" => self.a = value,
            "I" => self.inertia = value,
            "theta0" => self.theta0 = value,
            "E" => self.energy = value,
            _ => return Err(Error::Invalid(format!("unknown model parameter {key}"))),
        }
        Ok(())
    }

    fn sleigh(&self) -> SleighParams {
        SleighParams { m: self.m, a: self.a, inertia: self.inertia, theta0: self.theta0 }
    }
}

/// Builds a model by identifier.
pub fn build(id: &str, p: &ModelParams) -> Result<Box<dyn HybridSystem>> {
    Ok(match id {
        "ball" => Box::new(Ball::new(p.m, p.g, p.c.unwrap_or(1.0))?),
        "ball-inelastic" => Box::new(Ball::new(p.m, p.g, p.c.unwrap_or(0.5))?),
        "filippov" => Box::new(Filippov::new(p.alpha.unwrap_or(Filippov::invariant_alpha(FILIPPOV_KAPPA)))?),
        "chaplygin3d" => Box::new(Chaplygin3d::new(p.sleigh())?),
        "chaplygin2d" => Box::new(Chaplygin2d::new(p.sleigh(), p.energy)?),
        "gl2" => Box::new(gl2_reduced()),
        "qc" => Box::new(QcSystem::new()),
        "aff1" => Box::new(aff1_reduced(1.0, 0.5, Aff1Jump::Corner)),
        "aff1-scaled" => Box::new(aff1_reduced(1.0, 0.5, Aff1Jump::ScaledByA)),
        _ => return Err(Error::Invalid(format!("unknown model '{id}'; known: {}", MODEL_IDS.join(", ")))),
    })
}

/// Default density grid and boundary treatment for a model.
pub fn default_grid(id: &str, sys: &dyn HybridSystem) -> Result<(GridSpec, Boundary)> {
    let zero = Boundary::ZeroInflow;
    Ok(match id {
        "ball" | "ball-inelastic" => {
            (GridSpec::new(DomainBox::aperiodic(vec![0.0, -4.0], vec![5.0, 4.0])?, vec![200, 200], 1)?, zero)
        }
        "filippov" => (
            GridSpec::new(DomainBox::aperiodic(vec![-1.0, -1.0], vec![1.0, 1.0])?, vec![200, 200], 1)?,
            Boundary::FullBacktrack,
        ),
        "chaplygin2d" => {
            let d = sys.domain();
            let b = DomainBox::aperiodic(d.lower[..2].to_vec(), d.upper[..2].to_vec())?;
            (GridSpec::new(b, vec![200, 200], 2)?, zero)
        }
        "chaplygin3d" => (
            GridSpec::new(DomainBox::new(vec![-3.0, -3.0, -PI], vec![3.0, 3.0, PI], vec![false, false, true])?, vec![40, 40, 40], 1)?,
            zero,
        ),
        "gl2" => (GridSpec::new(DomainBox::aperiodic(vec![-2.0; 4].into_iter().chain([-0.9]).collect(), vec![2.0; 5])?, vec![8; 5], 1)?, zero),
        "qc" => (GridSpec::new(DomainBox::aperiodic(vec![-3.0, -3.0], vec![3.0, 3.0])?, vec![200, 200], 1)?, zero),
        "aff1" | "aff1-scaled" => (
            GridSpec::new(DomainBox::aperiodic(vec![-2.0, -2.0, -1.5], vec![2.0, 2.0, 2.5])?, vec![40, 40, 40], 1)?,
            zero,
        ),
        _ => return Err(Error::Invalid(format!("unknown model '{id}'"))),
    })
}

/// Built-in initial densities.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialDensity {
    /// `exp(−½ Σ ((xᵢ − cᵢ)/sᵢ)²)` over the continuous coordinates, split
    /// evenly across sheets.
    Gaussian { center: Vec<f64>, scale: Vec<f64> },
    /// Constant 1 (split evenly across sheets).
    Uniform,
    /// The Filippov invariant density `ρ̃`.
    FilippovInvariant { kappa: f64, alpha: f64 },
}

impl InitialDensity {
    /// Default initial density for a model.
    pub fn default_for(id: &str, sys: &dyn HybridSystem) -> Self {
        let n = sys.continuous_dim();
        match id {
            "ball" | "ball-inelastic" => {
                Self::Gaussian { center: vec![1.0, 0.0], scale: vec![std::f64::consts::FRAC_1_SQRT_2; 2] }
            }
            "filippov" => Self::FilippovInvariant { kappa: FILIPPOV_KAPPA, alpha: Filippov::invariant_alpha(FILIPPOV_KAPPA) },
            "chaplygin2d" => Self::Gaussian { center: vec![0.0, 0.0], scale: vec![std::f64::consts::FRAC_1_SQRT_2; 2] },
            _ => Self::Gaussian { center: vec![0.0; n], scale: vec![0.3; n] },
        }
    }

    /// Evaluator on full states of `sys`.
    pub fn build(&self, sys: &dyn HybridSystem) -> Result<DensityFn> {
        let n = sys.continuous_dim();
        let sheets = sys.sheet_count() as f64;
        match self {
            Self::Gaussian { center, scale } => {
                if center.len() != n || scale.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: center.len().min(scale.len()) });
                }
                if scale.iter().any(|s| !(*s > 0.0)) {
                    return Err(Error::Invalid("gaussian scale must be positive".into()));
                }
                let (c, s) = (center.clone(), scale.clone());
                Ok(Arc::new(move |x: &[f64]| {
                    let q: f64 = (0..n).map(|i| ((x[i] - c[i]) / s[i]).powi(2)).sum();
                    (-0.5 * q).exp() / sheets
                }))
            }
            Self::Uniform => Ok(Arc::new(move |_x: &[f64]| 1.0 / sheets)),
            Self::FilippovInvariant { kappa, alpha } => {
                let f = Filippov::with_kappa(*alpha, *kappa)?;
                Ok(Arc::new(move |x: &[f64]| f.invariant_density(x)))
            }
        }
    }

    /// Upper bound on the density (for rejection sampling).
    pub fn bound(&self, sys: &dyn HybridSystem) -> f64 {
        match self {
            Self::Gaussian { .. } | Self::Uniform => 1.0 / sys.sheet_count() as f64,
            Self::FilippovInvariant { .. } => 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_registered_id_builds() {
        for id in MODEL_IDS {
            let sys = build(id, &ModelParams::default()).unwrap();
            assert!(sys.dim() >= 2, "{id}");
            let (grid, _) = default_grid(id, sys.as_ref()).unwrap();
            assert_eq!(grid.dim(), sys.continuous_dim(), "{id}");
            assert_eq!(grid.sheets, sys.sheet_count(), "{id}");
            InitialDensity::default_for(id, sys.as_ref()).build(sys.as_ref()).unwrap();
        }
    }

    #[test]
    fn unknown_ids_and_keys_are_rejected() {
        assert!(build("pendulum", &ModelParams::default()).is_err());
        assert!(ModelParams::default().set("mass", 1.0).is_err());
        assert!(ModelParams::default().set("m", f64::NAN).is_err());
    }

    #[test]
    fn invalid_physical_parameters_are_rejected() {
        let mut p = ModelParams::default();
        p.set("c", 1.5).unwrap();
        assert!(build("ball", &p).is_err());
        let mut p = ModelParams::default();
        p.set("theta0", 4.0).unwrap();
        assert!(build("chaplygin3d", &p).is_err());
        let mut p = ModelParams::default();
        p.set("alpha", -1.0).unwrap();
        assert!(build("filippov", &p).is_err());
    }

    #[test]
    fn split_density_integrates_over_sheets() {
        let sys = build("chaplygin2d", &ModelParams::default()).unwrap();
        let f = InitialDensity::Uniform.build(sys.as_ref()).unwrap();
        assert_eq!(f(&[0.0, 0.0, 1.0]) + f(&[0.0, 0.0, -1.0]), 1.0);
    }
}
