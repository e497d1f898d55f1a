//! Motion synthesis on top of a learned model: regression, shared control,
//! planning and linear-quadratic controllers.

mod gmr;
mod plan;
mod riccati;

pub use gmr::{gmr, gmr_with_responsibilities, shared_control_step, Mixture};
pub use plan::{plan_autonomous, StepwiseReference};
pub use riccati::{care_residual, lqr_infinite, lqt_finite, tracking_weight, DoubleIntegrator, Lqr, LqtSolution};
