//! Distribution-matching model-predictive control for a unicycle robot
//! moving among uncertain dynamic obstacles.
//!
//! Uncertainty is carried only as weighted particle sets. For every
//! candidate control on a fixed `(v, ω)` grid the planner propagates the
//! robot particles, evaluates the velocity-obstacle collision cone and the
//! corridor distances per particle, and scores the resulting empirical
//! distributions against a collision-free *desired* distribution using the
//! maximum mean discrepancy under a polynomial kernel. Raising the kernel
//! degree matches more moments; with a moderate collision weight this gives
//! wider clearance, while very large weights can reverse the trend.
//!
//! Module map:
//!
//! | module | contents |
//! |--------|----------|
//! | [`sampling`] | seeded non-parametric noise, weighted sample sets |
//! | [`kinematics`] | robot / obstacle particle beliefs and their propagation |
//! | [`constraints`] | collision cone, corridor distances, empirical η |
//! | [`rkhs`] | polynomial Gram matrices and MMD |
//! | [`desired`] | nominal control and desired constraint distributions |
//! | [`planner`] | control grid, tracking cost, MMD-augmented step |
//! | [`baselines`] | Gaussian-approximation chance-constraint planners |
//! | [`harness`] | scenarios, closed-loop simulation, metrics and logs |

pub mod baselines;
pub mod constraints;
pub mod desired;
mod error;
pub mod harness;
pub mod kinematics;
pub mod planner;
pub mod rkhs;
pub mod sampling;

pub use error::{Error, Result};

/// Planar vector used for positions and velocities.
pub type Vec2 = nalgebra::Vector2<f64>;
