//! Certificates for a computed equilibrium that do not trust the solver:
//! robust feasibility by vertex enumeration, per-agent best responses on the
//! re-dualized single-agent problem, and a KKT residual of the stacked point.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Projector};
use crate::model::{Polytope, UncertainConstraint, UncertainGame, UncertaintySets};
use crate::operators::{Layout, StackedPoint};
use crate::robustify::{dualize_constraint, CanonicalGame};
use crate::solver::ConsensusGaps;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Allowed worst-case violation of a robust row.
    pub feasibility_tolerance: f64,
    /// Allowed violation of `x_i ∈ Ω_i`.
    pub membership_tolerance: f64,
    /// Stopping displacement of the best-response projected gradient.
    pub best_response_tolerance: f64,
    pub best_response_max_iterations: usize,
    /// Largest best-response gap accepted as an equilibrium.
    pub max_best_response_gap: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            feasibility_tolerance: 1e-6,
            membership_tolerance: 1e-8,
            best_response_tolerance: 1e-8,
            best_response_max_iterations: 200_000,
            max_best_response_gap: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowCheck {
    pub row: usize,
    pub max_lhs: f64,
    pub min_rhs: f64,
    pub slack: f64,
    /// Maximizing `δ_i` per agent.
    pub local_vertex: Vec<Vec<f64>>,
    /// Minimizing `δ`.
    pub global_vertex: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub rows: Vec<RowCheck>,
    /// Violation of `x_i ∈ Ω_i` per agent.
    pub membership: Vec<f64>,
    pub feasible: bool,
}

impl FeasibilityReport {
    pub fn min_slack(&self) -> f64 {
        self.rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min)
    }

    /// The row with the most negative slack, if any row is violated.
    pub fn violation(&self, tol: f64) -> Option<&RowCheck> {
        self.rows
            .iter()
            .filter(|r| r.slack < -tol)
            .min_by(|a, b| a.slack.total_cmp(&b.slack))
    }
}

fn split_blocks(game: &UncertainGame, x: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    if x.len() != game.dim() {
        return Err(Error::DimensionMismatch {
            agent: None,
            what: "collective strategy",
            expected: game.dim(),
            got: x.len(),
        });
    }
    Ok((0..game.num_agents())
        .map(|i| game.block(x, i).into_owned())
        .collect())
}

/// Worst case of every robust row over the vertices of the uncertainty sets,
/// plus membership of each block in its local set. Uses no dual variables.
pub fn check_robust_feasibility(
    game: &UncertainGame,
    x: &DVector<f64>,
    cfg: &VerifyConfig,
) -> Result<FeasibilityReport> {
    let blocks = split_blocks(game, x)?;
    let mut rows = Vec::with_capacity(game.coupling().len());
    for (k, c) in game.coupling().iter().enumerate() {
        let wc = geometry::worst_case_value(c, game.uncertainty(), &blocks)?;
        rows.push(RowCheck {
            row: k,
            max_lhs: wc.max_lhs,
            min_rhs: wc.min_rhs,
            slack: wc.slack(),
            local_vertex: wc
                .local_maximizers
                .iter()
                .map(|v| v.iter().copied().collect())
                .collect(),
            global_vertex: wc.global_minimizer.iter().copied().collect(),
        });
    }
    let membership: Vec<f64> = game
        .agents()
        .iter()
        .zip(&blocks)
        .map(|(a, xi)| a.local_set.violation(xi))
        .collect();
    let feasible = rows.iter().all(|r| r.slack >= -cfg.feasibility_tolerance)
        && membership.iter().all(|&v| v <= cfg.membership_tolerance);
    Ok(FeasibilityReport {
        rows,
        membership,
        feasible,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    pub agent: usize,
    /// `J_i(x★) − J_i(best, x★_{-i})`
    pub gap: f64,
    pub current_cost: f64,
    pub best_cost: f64,
    pub best: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Agent `i`'s robust feasible set with the others fixed at `x`, over
/// `(x_i, y^1, z^1, …, y^K, z^K)`: each row is rewritten as a one-agent robust
/// row whose capacity absorbs the others' worst case, then dualized again.
///
/// A violation of at most `slack_tol` at `x` is absorbed into the capacity so
/// that `x_i` itself stays admissible; a larger one is an error.
fn best_response_set(
    game: &UncertainGame,
    i: usize,
    x: &[DVector<f64>],
    slack_tol: f64,
) -> Result<Polytope> {
    let u = game.uncertainty();
    let omega = &game.agent(i)?.local_set;
    let n_i = omega.dim();
    let mut parts: Vec<Polytope> = vec![omega.clone()];
    let mut rows = Vec::with_capacity(game.coupling().len());
    let single = UncertaintySets {
        local: vec![u.local[i].clone()],
        global: u.global.clone(),
    };
    for c in game.coupling() {
        let full = dualize_constraint(c, u)?;
        let mut others = 0.0;
        for (j, xj) in x.iter().enumerate().filter(|&(j, _)| j != i) {
            others += c.nominal[j].dot(xj) + full.local_dual_value(j, xj)?.0;
        }
        let (resource_dual, _) = full.global_dual_value()?;
        let capacity = c.resource - resource_dual - others;
        let own = c.nominal[i].dot(&x[i]) + full.local_dual_value(i, &x[i])?.0;
        if own - capacity > slack_tol {
            return Err(Error::Infeasible {
                what: format!("agent {i}: given point violates a robust row"),
                slack: capacity - own,
            });
        }
        let one = UncertainConstraint {
            nominal: vec![c.nominal[i].clone()],
            perturbation: vec![c.perturbation[i].clone()],
            resource: c.resource - others + (own - capacity).max(0.0),
            resource_perturbation: c.resource_perturbation.clone(),
        };
        let dual = dualize_constraint(&one, &single)?;
        let m = dual.agents[0].cost.len();
        let l = dual.global.cost.len();
        parts.push(Polytope::orthant(m));
        parts.push(Polytope::with_equalities(
            -DMatrix::identity(l, l),
            DVector::zeros(l),
            dual.global.equality.clone(),
            dual.global.rhs.clone(),
        )?);
        rows.push(dual);
    }
    let base = Polytope::product(&parts.iter().collect::<Vec<_>>());
    let dim = base.dim();

    // couple x_i with each (y^k, z^k)
    let k_rows = rows.len();
    let mut a = DMatrix::zeros(base.num_inequalities() + k_rows, dim);
    let mut b = DVector::zeros(base.num_inequalities() + k_rows);
    a.rows_mut(0, base.num_inequalities()).copy_from(base.a());
    b.rows_mut(0, base.num_inequalities()).copy_from(base.b());
    let eq_extra: usize = rows.iter().map(|d| d.agents[0].equality.nrows()).sum();
    let mut aeq = DMatrix::zeros(base.num_equalities() + eq_extra, dim);
    let mut beq = DVector::zeros(base.num_equalities() + eq_extra);
    aeq.rows_mut(0, base.num_equalities()).copy_from(base.aeq());
    beq.rows_mut(0, base.num_equalities()).copy_from(base.beq());

    let mut off = n_i;
    let mut eq_row = base.num_equalities();
    for (k, dual) in rows.iter().enumerate() {
        let ag = &dual.agents[0];
        let m = ag.cost.len();
        let l = dual.global.cost.len();
        let r = base.num_inequalities() + k;
        a.view_mut((r, 0), (1, n_i))
            .copy_from(&dual.nominal[0].transpose());
        a.view_mut((r, off), (1, m)).copy_from(&ag.cost.transpose());
        a.view_mut((r, off + m), (1, l))
            .copy_from(&dual.global.cost.transpose());
        b[r] = dual.resource;
        let rows_eq = ag.equality.nrows();
        aeq.view_mut((eq_row, 0), (rows_eq, n_i))
            .copy_from(&ag.equality.columns(0, n_i));
        aeq.view_mut((eq_row, off), (rows_eq, m))
            .copy_from(&ag.equality.columns(n_i, m));
        eq_row += rows_eq;
        off += m + l;
    }
    Polytope::with_equalities(a, b, aeq, beq)
}

/// Gap between agent `i`'s cost at `x` and its best robust response to
/// `x_{-i}`, computed by projected gradient on the re-dualized set.
pub fn best_response_gap(
    game: &UncertainGame,
    x: &DVector<f64>,
    i: usize,
    cfg: &VerifyConfig,
) -> Result<BestResponse> {
    let blocks = split_blocks(game, x)?;
    if i >= game.num_agents() {
        return Err(Error::AgentIndex(i));
    }
    let set = best_response_set(game, i, &blocks, cfg.feasibility_tolerance)?;
    let projector = Projector::new(&set).map_err(|e| match e {
        Error::Infeasible { slack, .. } => Error::Infeasible {
            what: format!("agent {i}: best-response set is empty at the given point"),
            slack,
        },
        e => e,
    })?;
    let n_i = blocks[i].len();
    let step = 1.0 / game.pseudo_gradient_lipschitz()?.max(f64::EPSILON);

    let mut trial = x.clone();
    let offset = game.offset(i);
    let mut v = DVector::zeros(set.dim());
    v.rows_mut(0, n_i).copy_from(&blocks[i]);
    v = projector.project(&v)?;

    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.best_response_max_iterations {
        iterations += 1;
        trial.rows_mut(offset, n_i).copy_from(&v.rows(0, n_i));
        let g = game.partial_gradient(i, &trial)?;
        let mut next = v.clone();
        next.rows_mut(0, n_i).axpy(-step, &g, 1.0);
        let next = projector.project(&next)?;
        let moved = (&next - &v).norm();
        v = next;
        if moved <= cfg.best_response_tolerance {
            converged = true;
            break;
        }
    }
    trial.rows_mut(offset, n_i).copy_from(&v.rows(0, n_i));
    let current_cost = game.cost(i, x)?;
    let best_cost = game.cost(i, &trial)?;
    Ok(BestResponse {
        agent: i,
        gap: current_cost - best_cost,
        current_cost,
        best_cost,
        best: v.rows(0, n_i).iter().copied().collect(),
        iterations,
        converged,
    })
}

pub fn best_response_gaps(
    game: &UncertainGame,
    x: &DVector<f64>,
    cfg: &VerifyConfig,
) -> Result<Vec<BestResponse>> {
    (0..game.num_agents())
        .map(|i| best_response_gap(game, x, i, cfg))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `max_i ‖w_i − P_{W_i}(w_i − (F̃_i + S_iᵀλ_i + R_iᵀμ_i))‖`
    pub stationarity: f64,
    /// `|λ̄ᵀ(Σ S_i w_i − s)|` with `λ̄` the mean multiplier.
    pub complementarity: f64,
    /// Coupled-row excess, consensus residual `‖Σ R_i w_i‖`, local-set
    /// violation and negative multipliers.
    pub primal: f64,
    /// Largest pairwise disagreement of the `λ_i` and `μ_i` copies.
    pub consensus: f64,
    pub max: f64,
}

pub fn kkt_residual(cg: &CanonicalGame, pt: &StackedPoint) -> Result<KktReport> {
    let layout = Layout::of(cg);
    if pt.len() != layout.total_dim() || pt.w.len() != layout.w_dim() {
        return Err(Error::DimensionMismatch {
            agent: None,
            what: "stacked point",
            expected: layout.total_dim(),
            got: pt.len(),
        });
    }
    let n = layout.num_agents();
    let x = cg.extract_x(&pt.w);
    let mut stationarity: f64 = 0.0;
    let mut coupled = -cg.s().clone();
    let mut consensus_rows = DVector::zeros(layout.c_eq());
    let mut set_violation: f64 = 0.0;
    let mut lambda_mean = DVector::zeros(layout.c_in());
    for i in 0..n {
        let w_i = pt.w.rows_range(layout.w_range(i)).into_owned();
        let lambda_i = pt.lambda.rows_range(layout.in_range(i));
        let mu_i = pt.mu.rows_range(layout.eq_range(i));
        let (s_i, r_i) = (cg.s_block(i), cg.r_block(i));

        let mut g = s_i.tr_mul(&lambda_i) + r_i.tr_mul(&mu_i);
        let grad = cg.game().partial_gradient(i, &x)?;
        let mut head = g.rows_mut(0, grad.len());
        head += &grad;
        let proj = cg.projector(i).project(&(&w_i - &g))?;
        stationarity = stationarity.max((&w_i - proj).norm());

        coupled += s_i * &w_i;
        consensus_rows += r_i * &w_i;
        set_violation = set_violation.max(cg.local_set(i).violation(&w_i));
        lambda_mean += lambda_i;
    }
    lambda_mean /= n as f64;
    let excess = coupled.map(|v| v.max(0.0)).norm();
    let negative = pt.lambda.iter().fold(0.0f64, |m, &v| m.max(-v));
    let primal = excess
        .max(consensus_rows.norm())
        .max(set_violation)
        .max(negative);
    let complementarity = lambda_mean.dot(&coupled).abs();
    let gaps = ConsensusGaps::of(cg, pt);
    let consensus = gaps.lambda.max(gaps.mu);
    Ok(KktReport {
        stationarity,
        complementarity,
        primal,
        consensus,
        max: stationarity.max(complementarity).max(primal).max(consensus),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationSummary {
    pub feasibility: FeasibilityReport,
    pub best_responses: Vec<BestResponse>,
    pub max_gap: f64,
    pub passed: bool,
}

/// Robust feasibility and every agent's best-response gap at `x`.
pub fn verify_equilibrium(
    game: &UncertainGame,
    x: &DVector<f64>,
    cfg: &VerifyConfig,
) -> Result<VerificationSummary> {
    let feasibility = check_robust_feasibility(game, x, cfg)?;
    let best_responses = best_response_gaps(game, x, cfg)?;
    let max_gap = best_responses
        .iter()
        .map(|b| b.gap)
        .fold(f64::NEG_INFINITY, f64::max);
    let passed = feasibility.feasible
        && best_responses
            .iter()
            .all(|b| b.converged && b.gap <= cfg.max_best_response_gap);
    Ok(VerificationSummary {
        feasibility,
        best_responses,
        max_gap,
        passed,
    })
}
