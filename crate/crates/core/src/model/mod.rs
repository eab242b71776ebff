//! Uncertain generalized Nash games: agents with convex costs, local
//! polyhedral sets, and linear coupling constraints whose coefficients and
//! resource vary affinely over polyhedral uncertainty sets.

mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

pub use validate::{validate_game, Assumption, AssumptionCheck, ValidationReport};

/// `{x | A x ≤ b, Aeq x = beq}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
    aeq: DMatrix<f64>,
    beq: DVector<f64>,
}

impl Polytope {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let dim = a.ncols();
        Self::with_equalities(a, b, DMatrix::zeros(0, dim), DVector::zeros(0))
    }

    pub fn with_equalities(
        a: DMatrix<f64>,
        b: DVector<f64>,
        aeq: DMatrix<f64>,
        beq: DVector<f64>,
    ) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::DimensionMismatch {
                agent: None,
                what: "inequality right-hand side",
                expected: a.nrows(),
                got: b.len(),
            });
        }
        if aeq.nrows() != beq.len() {
            return Err(Error::DimensionMismatch {
                agent: None,
                what: "equality right-hand side",
                expected: aeq.nrows(),
                got: beq.len(),
            });
        }
        if aeq.ncols() != a.ncols() {
            return Err(Error::DimensionMismatch {
                agent: None,
                what: "equality matrix columns",
                expected: a.ncols(),
                got: aeq.ncols(),
            });
        }
        Ok(Self { a, b, aeq, beq })
    }

    /// Coordinate bounds; infinite bounds produce no row.
    pub fn from_bounds(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                agent: None,
                what: "upper bounds",
                expected: lower.len(),
                got: upper.len(),
            });
        }
        let n = lower.len();
        let mut rows: Vec<(usize, f64, f64)> = Vec::new();
        for k in 0..n {
            if upper[k].is_finite() {
                rows.push((k, 1.0, upper[k]));
            }
            if lower[k].is_finite() {
                rows.push((k, -1.0, -lower[k]));
            }
        }
        let mut a = DMatrix::zeros(rows.len(), n);
        let mut b = DVector::zeros(rows.len());
        for (r, &(k, s, rhs)) in rows.iter().enumerate() {
            a[(r, k)] = s;
            b[r] = rhs;
        }
        Self::new(a, b)
    }

    pub fn interval(lower: f64, upper: f64) -> Self {
        Self::from_bounds(&[lower], &[upper]).expect("scalar bounds")
    }

    pub fn orthant(dim: usize) -> Self {
        Self::from_bounds(&vec![0.0; dim], &vec![f64::INFINITY; dim]).expect("orthant")
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn aeq(&self) -> &DMatrix<f64> {
        &self.aeq
    }

    pub fn beq(&self) -> &DVector<f64> {
        &self.beq
    }

    pub fn num_inequalities(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_equalities(&self) -> usize {
        self.aeq.nrows()
    }

    /// Largest constraint violation at `x` (zero when feasible).
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let mut v: f64 = 0.0;
        if self.a.nrows() > 0 {
            let r = &self.a * x - &self.b;
            v = v.max(r.max());
        }
        if self.aeq.nrows() > 0 {
            let r = &self.aeq * x - &self.beq;
            v = v.max(r.amax());
        }
        v.max(0.0)
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.dim() && self.violation(x) <= tol
    }

    /// Cartesian product, variables concatenated in order.
    pub fn product(parts: &[&Polytope]) -> Polytope {
        let a = linalg::block_diag(&parts.iter().map(|p| p.a.clone()).collect::<Vec<_>>());
        let aeq = linalg::block_diag(&parts.iter().map(|p| p.aeq.clone()).collect::<Vec<_>>());
        let b = concat(parts.iter().map(|p| &p.b));
        let beq = concat(parts.iter().map(|p| &p.beq));
        // block_diag of 0-row blocks loses no columns
        Polytope { a, b, aeq, beq }
    }
}

fn concat<'a>(vs: impl Iterator<Item = &'a DVector<f64>>) -> DVector<f64> {
    let all: Vec<f64> = vs.flat_map(|v| v.iter().copied()).collect();
    DVector::from_vec(all)
}

/// Primitive uncertainty sets: one local polytope `Δ_i` per agent and a
/// global polytope `Δ` for the shared resource.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySets {
    pub local: Vec<Polytope>,
    pub global: Polytope,
}

/// One robust coupling row:
/// `Σ_i (a_i0 + P_i δ_i)ᵀ x_i ≤ b0 + qᵀ δ` for all admissible `δ_i, δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertainConstraint {
    pub nominal: Vec<DVector<f64>>,
    pub perturbation: Vec<DMatrix<f64>>,
    pub resource: f64,
    pub resource_perturbation: DVector<f64>,
}

impl UncertainConstraint {
    /// A constraint with zero uncertainty of the given shapes.
    pub fn nominal_only(nominal: Vec<DVector<f64>>, resource: f64, u: &UncertaintySets) -> Self {
        let perturbation = nominal
            .iter()
            .zip(&u.local)
            .map(|(a, d)| DMatrix::zeros(a.len(), d.dim()))
            .collect();
        Self {
            nominal,
            perturbation,
            resource,
            resource_perturbation: DVector::zeros(u.global.dim()),
        }
    }
}

/// `J_i = ½ x_iᵀ Q_i x_i + Σ_j x_iᵀ R_ij x_j + c_iᵀ x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost {
    pub hessian: DMatrix<f64>,
    pub cross: BTreeMap<usize, DMatrix<f64>>,
    pub linear: DVector<f64>,
}

impl QuadraticCost {
    pub fn new(hessian: DMatrix<f64>, linear: DVector<f64>) -> Self {
        Self {
            hessian,
            cross: BTreeMap::new(),
            linear,
        }
    }

    pub fn with_cross(mut self, agent: usize, block: DMatrix<f64>) -> Self {
        self.cross.insert(agent, block);
        self
    }
}

pub type GradientFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type ValueFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

/// Opaque cost given by oracles on the collective strategy.
#[derive(Clone)]
pub struct OracleCost {
    /// Partial gradient in the agent's own variable.
    pub gradient: GradientFn,
    pub value: Option<ValueFn>,
}

impl fmt::Debug for OracleCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OracleCost")
            .field("value", &self.value.is_some())
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum AgentCost {
    Quadratic(QuadraticCost),
    Oracle(OracleCost),
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub dim: usize,
    pub cost: AgentCost,
    pub local_set: Polytope,
}

#[derive(Debug, Clone)]
pub struct UncertainGame {
    agents: Vec<Agent>,
    coupling: Vec<UncertainConstraint>,
    uncertainty: UncertaintySets,
    offsets: Vec<usize>,
    /// Required when any cost is an oracle.
    lipschitz_bound: Option<f64>,
}

impl UncertainGame {
    pub fn new(
        agents: Vec<Agent>,
        coupling: Vec<UncertainConstraint>,
        uncertainty: UncertaintySets,
    ) -> Result<Self> {
        let n_agents = agents.len();
        if n_agents == 0 {
            return Err(Error::InvalidParameter("game has no agents".into()));
        }
        if uncertainty.local.len() != n_agents {
            return Err(Error::DimensionMismatch {
                agent: None,
                what: "local uncertainty set count",
                expected: n_agents,
                got: uncertainty.local.len(),
            });
        }
        let mut offsets = Vec::with_capacity(n_agents + 1);
        offsets.push(0);
        for (i, agent) in agents.iter().enumerate() {
            offsets.push(offsets[i] + agent.dim);
            if agent.local_set.dim() != agent.dim {
                return Err(Error::DimensionMismatch {
                    agent: Some(i),
                    what: "local set",
                    expected: agent.dim,
                    got: agent.local_set.dim(),
                });
            }
            if let AgentCost::Quadratic(q) = &agent.cost {
                check_shape(i, "cost Hessian", &q.hessian, agent.dim, agent.dim)?;
                if q.linear.len() != agent.dim {
                    return Err(Error::DimensionMismatch {
                        agent: Some(i),
                        what: "cost linear term",
                        expected: agent.dim,
                        got: q.linear.len(),
                    });
                }
                for (&j, block) in &q.cross {
                    let other = agents.get(j).ok_or(Error::AgentIndex(j))?;
                    if j == i {
                        return Err(Error::InvalidParameter(format!(
                            "agent {i}: cross term refers to itself"
                        )));
                    }
                    check_shape(i, "cross block", block, agent.dim, other.dim)?;
                }
            }
        }
        for c in &coupling {
            if c.nominal.len() != n_agents || c.perturbation.len() != n_agents {
                return Err(Error::DimensionMismatch {
                    agent: None,
                    what: "coupling constraint agent count",
                    expected: n_agents,
                    got: c.nominal.len().min(c.perturbation.len()),
                });
            }
            for (i, agent) in agents.iter().enumerate() {
                if c.nominal[i].len() != agent.dim {
                    return Err(Error::DimensionMismatch {
                        agent: Some(i),
                        what: "nominal coupling row",
                        expected: agent.dim,
                        got: c.nominal[i].len(),
                    });
                }
                check_shape(
                    i,
                    "perturbation map",
                    &c.perturbation[i],
                    agent.dim,
                    uncertainty.local[i].dim(),
                )?;
            }
            if c.resource_perturbation.len() != uncertainty.global.dim() {
                return Err(Error::DimensionMismatch {
                    agent: None,
                    what: "resource perturbation",
                    expected: uncertainty.global.dim(),
                    got: c.resource_perturbation.len(),
                });
            }
        }
        Ok(Self {
            agents,
            coupling,
            uncertainty,
            offsets,
            lipschitz_bound: None,
        })
    }

    /// Lipschitz bound of the pseudo-gradient for oracle costs.
    pub fn with_lipschitz_bound(mut self, bound: f64) -> Self {
        self.lipschitz_bound = Some(bound);
        self
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn agent(&self, i: usize) -> Result<&Agent> {
        self.agents.get(i).ok_or(Error::AgentIndex(i))
    }

    pub fn coupling(&self) -> &[UncertainConstraint] {
        &self.coupling
    }

    pub fn uncertainty(&self) -> &UncertaintySets {
        &self.uncertainty
    }

    /// Total strategy dimension `n = Σ n_i`.
    pub fn dim(&self) -> usize {
        self.offsets[self.agents.len()]
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn block<'a>(&self, x: &'a DVector<f64>, i: usize) -> nalgebra::DVectorView<'a, f64> {
        x.rows(self.offsets[i], self.agents[i].dim)
    }

    pub(crate) fn check_collective(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() == self.dim() {
            return Ok(());
        }
        let agent = (0..self.num_agents())
            .find(|&i| self.offsets[i + 1] > x.len())
            .unwrap_or(self.num_agents() - 1);
        Err(Error::DimensionMismatch {
            agent: Some(agent),
            what: "collective strategy",
            expected: self.dim(),
            got: x.len(),
        })
    }

    /// Partial gradient of agent `i`'s cost in its own variable.
    pub fn partial_gradient(&self, i: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_collective(x)?;
        let agent = self.agent(i)?;
        match &agent.cost {
            AgentCost::Quadratic(q) => {
                let mut g = &q.hessian * self.block(x, i) + &q.linear;
                for (&j, r) in &q.cross {
                    g += r * self.block(x, j);
                }
                Ok(g)
            }
            AgentCost::Oracle(o) => {
                let g = (o.gradient)(x);
                if g.len() != agent.dim {
                    return Err(Error::DimensionMismatch {
                        agent: Some(i),
                        what: "gradient oracle output",
                        expected: agent.dim,
                        got: g.len(),
                    });
                }
                Ok(g)
            }
        }
    }

    /// `F(x) = col(∇_{x_i} J_i(x_i, x_{-i}))`.
    pub fn pseudo_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_collective(x)?;
        let mut out = DVector::zeros(self.dim());
        for i in 0..self.num_agents() {
            let g = self.partial_gradient(i, x)?;
            out.rows_mut(self.offsets[i], self.agents[i].dim)
                .copy_from(&g);
        }
        Ok(out)
    }

    pub fn cost(&self, i: usize, x: &DVector<f64>) -> Result<f64> {
        self.check_collective(x)?;
        let agent = self.agent(i)?;
        match &agent.cost {
            AgentCost::Quadratic(q) => {
                let xi = self.block(x, i);
                let mut v = 0.5 * xi.dot(&(&q.hessian * xi)) + q.linear.dot(&xi);
                for (&j, r) in &q.cross {
                    v += xi.dot(&(r * self.block(x, j)));
                }
                Ok(v)
            }
            AgentCost::Oracle(o) => match &o.value {
                Some(f) => Ok(f(x)),
                None => Err(Error::Unsupported(format!(
                    "agent {i}: cost has no value oracle"
                ))),
            },
        }
    }

    pub fn is_quadratic(&self) -> bool {
        self.agents
            .iter()
            .all(|a| matches!(a.cost, AgentCost::Quadratic(_)))
    }

    /// `(M, c)` with `F(x) = M x + c`, when every cost is quadratic.
    pub fn game_matrix(&self) -> Option<(DMatrix<f64>, DVector<f64>)> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        let mut c = DVector::zeros(n);
        for (i, agent) in self.agents.iter().enumerate() {
            let AgentCost::Quadratic(q) = &agent.cost else {
                return None;
            };
            let oi = self.offsets[i];
            m.view_mut((oi, oi), (agent.dim, agent.dim))
                .copy_from(&q.hessian);
            for (&j, r) in &q.cross {
                m.view_mut((oi, self.offsets[j]), (agent.dim, self.agents[j].dim))
                    .copy_from(r);
            }
            c.rows_mut(oi, agent.dim).copy_from(&q.linear);
        }
        Some((m, c))
    }

    /// `ℓ_F`: spectral norm of the game matrix, or the supplied bound for
    /// oracle costs.
    pub fn pseudo_gradient_lipschitz(&self) -> Result<f64> {
        if let Some(b) = self.lipschitz_bound {
            return Ok(b);
        }
        match self.game_matrix() {
            Some((m, _)) => Ok(linalg::spectral_norm(&m)),
            None => Err(Error::InvalidParameter(
                "oracle costs require an explicit pseudo-gradient Lipschitz bound".into(),
            )),
        }
    }
}

fn check_shape(
    agent: usize,
    what: &'static str,
    m: &DMatrix<f64>,
    rows: usize,
    cols: usize,
) -> Result<()> {
    if m.nrows() != rows {
        return Err(Error::DimensionMismatch {
            agent: Some(agent),
            what,
            expected: rows,
            got: m.nrows(),
        });
    }
    if m.ncols() != cols {
        return Err(Error::DimensionMismatch {
            agent: Some(agent),
            what,
            expected: cols,
            got: m.ncols(),
        });
    }
    Ok(())
}
