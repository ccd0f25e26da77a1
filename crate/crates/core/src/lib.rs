//! Continuation-method suboptimal model predictive control for nonlinear
//! time-varying plants, and tooling to certify contraction of the resulting
//! closed loop with a hierarchical metric.
//!
//! The pieces, bottom up:
//!
//! * [`ocp`]: horizon cost `V`, residual `ζ = ∇_U V` (discrete adjoint) and
//!   its Jacobians.
//! * [`continuation`]: the update `U̇ = H⁻¹b` and the closed loop
//!   `ṡ = φ(s, t)`.
//! * [`oracle`]: the exact optimum `U*(x, t)` by Newton iteration.
//! * [`contraction`]: the metric `M = M_P + κM_Q`, the operator `L`, mesh
//!   certificates and the block-decomposition check.
//! * [`benchmark`]: the reference 4-state example.

pub mod benchmark;
pub mod continuation;
pub mod contraction;
pub mod error;
pub mod integrate;
pub mod linalg;
pub mod ocp;
pub mod oracle;
pub mod plant;
pub mod trajectory;

pub use continuation::{AugmentedState, ClosedLoop, CubicDecay, LinearDecay, VirtualDynamics};
pub use error::{Error, Result};
pub use ocp::{CostModel, DiscreteDynamics, OcpSpec, QuadraticCost};
pub use plant::Plant;
pub use trajectory::TrajectoryRecord;
