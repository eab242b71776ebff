//! Reference instance: five agents on a shared resource with interval
//! uncertainty on every contribution and on the capacity.

use nalgebra::{DMatrix, DVector};

use crate::graph::CommGraph;
use crate::model::{
    Agent, AgentCost, Polytope, QuadraticCost, UncertainConstraint, UncertainGame, UncertaintySets,
};
use crate::solver::{SolverParams, StepProfile};

pub const AGENT_DIM: usize = 2;
pub const LOWER: f64 = -5.0;
pub const UPPER: f64 = 15.0;
pub const RESOURCE: f64 = 75.0;
pub const LOCAL_RADIUS: f64 = 1.0;
pub const GLOBAL_RADIUS: f64 = 10.0;

/// The reference game with neighbor-averaged interaction terms over `graph`.
pub fn reference_game(graph: &CommGraph) -> UncertainGame {
    reference_game_with(graph, RESOURCE, true)
}

/// Same game with capacity `resource`; `uncertain = false` keeps the
/// uncertainty sets but zeroes every perturbation.
pub fn reference_game_with(graph: &CommGraph, resource: f64, uncertain: bool) -> UncertainGame {
    let n = graph.num_nodes();
    let agents = (0..n)
        .map(|i| {
            let nb = graph.neighbors(i);
            let weight = 1.0 / nb.len() as f64;
            let alpha = 10.0 * i as f64;
            let mut cost = QuadraticCost::new(
                DMatrix::identity(AGENT_DIM, AGENT_DIM),
                DVector::from_element(AGENT_DIM, -alpha),
            );
            for &j in nb {
                cost = cost.with_cross(j, DMatrix::identity(AGENT_DIM, AGENT_DIM) * weight);
            }
            Agent {
                dim: AGENT_DIM,
                cost: AgentCost::Quadratic(cost),
                local_set: Polytope::from_bounds(&[LOWER; AGENT_DIM], &[UPPER; AGENT_DIM])
                    .expect("finite bounds"),
            }
        })
        .collect();
    let u = UncertaintySets {
        local: vec![Polytope::interval(-LOCAL_RADIUS, LOCAL_RADIUS); n],
        global: Polytope::interval(-GLOBAL_RADIUS, GLOBAL_RADIUS),
    };
    let nominal = vec![DVector::from_element(AGENT_DIM, 1.0); n];
    let row = if uncertain {
        UncertainConstraint {
            nominal,
            perturbation: vec![DMatrix::from_element(AGENT_DIM, 1, 1.0); n],
            resource,
            resource_perturbation: DVector::from_element(1, 1.0),
        }
    } else {
        UncertainConstraint::nominal_only(nominal, resource, &u)
    };
    UncertainGame::new(agents, vec![row], u).expect("reference instance is well formed")
}

/// Solver settings for the reference instance. A residual of `1e-6` only
/// bounds the coupled-row violation by about `1e-6 / γ_min ≈ 1e-4`, so the
/// run continues to `1e-9`, where feasibility and multiplier consensus hold
/// well inside `1e-6`.
pub fn reference_params() -> SolverParams {
    SolverParams {
        sigma_bar: 0.5,
        fraction: 0.99,
        step_profile: StepProfile::EvenlySpaced,
        tolerance: 1e-9,
        max_iterations: 50_000,
        ..SolverParams::default()
    }
}
