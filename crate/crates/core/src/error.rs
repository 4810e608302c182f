use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({:.3e}, {:.3e}, {:.3e}) m lies on a wire segment", .point[0], .point[1], .point[2])]
    SingularGeometry { point: [f64; 3] },

    #[error("invalid chip geometry: {0}")]
    InvalidGeometry(String),

    #[error("no field minimum bracketed along the chip normal at B = {bias_gauss:.4} G")]
    TrapNotFound { bias_gauss: f64 },

    #[error("unstable trap at B = {bias_gauss:.4} G: Hessian eigenvalues {eigenvalues:?} not all positive")]
    UnstableTrap { bias_gauss: f64, eigenvalues: [f64; 3] },

    #[error("trap characterization failed at B = {bias_gauss:.4} G: {source}")]
    MapSample {
        bias_gauss: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("bias field {bias_gauss:.6} G outside map range [{min_gauss:.4}, {max_gauss:.4}] G{}", node_suffix(.node, .time))]
    OutOfRange { bias_gauss: f64, min_gauss: f64, max_gauss: f64, node: Option<usize>, time: Option<f64> },

    #[error("{}:{line}: {message}", .path.display())]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("STA ramp infeasible: no bracketed bias root at node {node} (t = {time:.6e} s)")]
    InfeasibleSta { node: usize, time: f64 },

    #[error("condensate collapse (scaling factor <= 0) at t = {time:.6e} s")]
    Collapse { time: f64 },

    #[error("adjoint diverged at t = {time:.6e} s")]
    DivergingAdjoint { time: f64 },

    #[error("numerical instability: {0}")]
    NumericalInstability(String),

    #[error("did not converge: {0}")]
    NotConverged(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn node_suffix(node: &Option<usize>, time: &Option<f64>) -> String {
    match (node, time) {
        (Some(n), Some(t)) => format!(" at node {n} (t = {t:.6e} s)"),
        (Some(n), None) => format!(" at node {n}"),
        _ => String::new(),
    }
}

impl Error {
    /// Process exit code: 2 for usage/config/input problems, 1 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::InvalidInput(_)
            | Error::Config(_)
            | Error::InvalidGeometry(_)
            | Error::Io(_)
            | Error::OutOfRange { .. } => 2,
            _ => 1,
        }
    }
}
