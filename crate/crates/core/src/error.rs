use nalgebra::DVector;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("{}{what} has dimension {got}, expected {expected}", agent.map(|i| format!("agent {i}: ")).unwrap_or_default())]
    DimensionMismatch {
        agent: Option<usize>,
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("agent index {0} out of range")]
    AgentIndex(usize),

    #[error("uncertainty set `{set}` is unbounded along direction {direction:?}")]
    Unbounded { set: String, direction: Vec<f64> },

    #[error("infeasible: {what} (best achievable slack {slack:.3e})")]
    Infeasible { what: String, slack: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("projection did not converge after {sweeps} sweeps (residual {residual:.3e})")]
    ProjectionNotConverged {
        sweeps: usize,
        residual: f64,
        last: DVector<f64>,
    },

    #[error("graph is not connected")]
    Disconnected,

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("LP solver failed: {0}")]
    Lp(String),
}
