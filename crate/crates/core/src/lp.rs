//! Thin dense wrapper over `minilp` for the small linear programs that show
//! up in validation (feasibility, boundedness) and in the dual side of the
//! robust reformulation.

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(&self) -> Option<(&[f64], f64)> {
        match self {
            LpOutcome::Optimal { x, objective } => Some((x, *objective)),
            _ => None,
        }
    }
}

/// Minimization LP with box-bounded variables and sparse rows.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    cost: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    rows: Vec<(Vec<(usize, f64)>, Sense, f64)>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.cost.push(cost);
        self.bounds.push((lower, upper));
        self.cost.len() - 1
    }

    pub fn add_vars(&mut self, count: usize, lower: f64, upper: f64) -> usize {
        let first = self.cost.len();
        for _ in 0..count {
            self.add_var(0.0, lower, upper);
        }
        first
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.cost[var] = cost;
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn add_row(&mut self, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        let terms = terms.into_iter().filter(|(_, c)| *c != 0.0).collect();
        self.rows.push((terms, sense, rhs));
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        let mut problem = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<_> = self
            .cost
            .iter()
            .zip(&self.bounds)
            .map(|(&c, &b)| problem.add_var(c, b))
            .collect();
        for (terms, sense, rhs) in &self.rows {
            let op = match sense {
                Sense::Le => ComparisonOp::Le,
                Sense::Ge => ComparisonOp::Ge,
                Sense::Eq => ComparisonOp::Eq,
            };
            if terms.is_empty() {
                let ok = match sense {
                    Sense::Le => 0.0 <= *rhs,
                    Sense::Ge => 0.0 >= *rhs,
                    Sense::Eq => *rhs == 0.0,
                };
                if !ok {
                    return Ok(LpOutcome::Infeasible);
                }
                continue;
            }
            let expr: Vec<_> = terms.iter().map(|&(j, c)| (vars[j], c)).collect();
            problem.add_constraint(expr.as_slice(), op, *rhs);
        }
        match problem.solve() {
            Ok(sol) => Ok(LpOutcome::Optimal {
                x: vars.iter().map(|&v| *sol.var_value(v)).collect(),
                objective: sol.objective(),
            }),
            Err(minilp::Error::Infeasible) => Ok(LpOutcome::Infeasible),
            Err(minilp::Error::Unbounded) => Ok(LpOutcome::Unbounded),
        }
    }

    /// Solve, treating anything but an optimum as an error.
    pub fn solve_optimal(&self, what: &str) -> Result<(Vec<f64>, f64)> {
        match self.solve()? {
            LpOutcome::Optimal { x, objective } => Ok((x, objective)),
            LpOutcome::Infeasible => Err(Error::Lp(format!("{what}: infeasible"))),
            LpOutcome::Unbounded => Err(Error::Lp(format!("{what}: unbounded"))),
        }
    }
}
