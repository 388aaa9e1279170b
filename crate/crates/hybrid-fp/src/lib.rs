//! Density transport for hybrid dynamical systems.
//!
//! A hybrid system flows along a vector field `X` until it meets a guard
//! surface `S`, where a reset map `Δ` sends it elsewhere. This crate
//! provides:
//!
//! * [`flow`]: event-detecting RK4 integration with Zeno detection;
//! * [`volume`]: the hybrid Jacobian `𝒥` measuring how the reset combined
//!   with the flow distorts volume, and the divergence of `X`;
//! * [`transfer`]: a semi-Lagrangian solver for the hybrid
//!   Frobenius–Perron (density transport) equation on a grid;
//! * [`reduction`]: Lie–Poisson reduction of impact systems on Lie groups
//!   and a checker that compares full and reduced trajectories;
//! * [`oracle`]: a Monte-Carlo ensemble reference for the density;
//! * [`models`]: bouncing ball, a Filippov spiral, the Chaplygin sleigh,
//!   `GL(2)` and `Aff(1)` geodesics with impacts;
//! * [`io`]: snapshot, trajectory and manifest files.

pub mod error;
pub mod flow;
pub mod grid;
pub mod io;
pub mod models;
pub mod oracle;
pub mod reduction;
pub mod system;
pub mod transfer;
pub mod volume;

pub use error::{Error, Result};
pub use flow::{advance, integrate, integrate_backward, IntegratorConfig, Termination};
pub use grid::{DensityField, GridSpec};
pub use system::{DomainBox, HybridSystem, Preimages};
pub use transfer::{Boundary, Interpolation, SolverConfig, TransferSolver};
pub use volume::{hybrid_jacobian, JacobianReport};
