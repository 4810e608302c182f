//! Pontryagin gradient optimization of the control ramp.

pub mod adjoint;
pub mod cost;
pub mod optimize;

pub use adjoint::{
    control_gradient, hamiltonian_bias_derivative, integrate_adjoint_backward, project_to_nodes, terminal_adjoint,
    AdjointState,
};
pub use cost::{simpson_mean, total_cost, trapezoid_mean, CostBreakdown, CostWeights};
pub use optimize::*;
