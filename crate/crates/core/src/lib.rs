//! Mobility-aware downlink resource allocation for indoor visible-light
//! networks.
//!
//! - [`channel`]: line-of-sight gains, SINR and achievable rates
//! - [`mobility`]: random-waypoint users and position prediction
//! - [`solver`]: look-ahead proportional-fair relaxation solver
//! - [`oracle`]: exhaustive search over assignments
//! - [`convexity`]: monomial convexity conditions and a numeric Hessian check
//! - [`sim`]: the service-time simulation loop and reference scenarios
//! - [`verify`]: self-checks behind the CLI's `verify` command

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod convexity;
pub mod error;
pub mod geometry;
pub mod mobility;
pub mod oracle;
pub mod problem;
pub mod sim;
pub mod solver;
pub mod verify;

pub use channel::{ApLayout, InterferencePolicy, PhyParams, RateTensor};
pub use error::{Error, Result};
pub use geometry::Point;
pub use mobility::{MobilityParams, Room, UserState};
pub use problem::{AllocationSolution, Diagnostics, ProblemInstance};
pub use solver::{MvrSolver, SolverConfig};
pub use sim::{run, MetricsRecord, ScenarioConfig, Simulation};
