//! Robust counterpart of the uncertain coupling rows by LP duality, and its
//! lowering onto a communication graph.
//!
//! For one robust row the worst case of agent `i`'s contribution,
//! `max_{D_i δ_i ≤ d_i} δ_iᵀ P_iᵀ x_i`, equals
//! `min {d_iᵀ y_i | D_iᵀ y_i = P_iᵀ x_i, y_i ≥ 0}`, and the worst resource
//! `min_{D δ ≤ d} qᵀ δ` equals `−min {dᵀ z | Dᵀ z = −q, z ≥ 0}`. Dropping the
//! minimizations leaves the deterministic coupled inequality
//! `Σ a_i0ᵀ x_i + Σ d_iᵀ y_i + dᵀ z ≤ b0` over `(x, y, z)`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{self, Projector};
use crate::graph::CommGraph;
use crate::linalg;
use crate::lp::{LinearProgram, Sense};
use crate::model::{Polytope, UncertainConstraint, UncertainGame, UncertaintySets};

/// Dual data of one agent for one robust row.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentDual {
    /// `[P_iᵀ, −D_iᵀ]` acting on `(x_i, y_i)`; right-hand side zero.
    pub equality: DMatrix<f64>,
    /// `d_i`, the coefficient of `y_i` in the coupled inequality.
    pub cost: DVector<f64>,
}

/// Dual data of the shared resource for one robust row.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalDual {
    /// `Dᵀ` acting on `z`.
    pub equality: DMatrix<f64>,
    /// `−q`
    pub rhs: DVector<f64>,
    /// `d`
    pub cost: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintDual {
    pub nominal: Vec<DVector<f64>>,
    pub resource: f64,
    pub agents: Vec<AgentDual>,
    pub global: GlobalDual,
}

pub fn dualize_constraint(c: &UncertainConstraint, u: &UncertaintySets) -> Result<ConstraintDual> {
    if c.perturbation.len() != u.local.len() || c.nominal.len() != u.local.len() {
        return Err(Error::DimensionMismatch {
            agent: None,
            what: "agent count of robust row",
            expected: u.local.len(),
            got: c.perturbation.len(),
        });
    }
    let mut agents = Vec::with_capacity(u.local.len());
    for (i, (p, d)) in c.perturbation.iter().zip(&u.local).enumerate() {
        if p.ncols() != d.dim() || p.nrows() != c.nominal[i].len() {
            return Err(Error::DimensionMismatch {
                agent: Some(i),
                what: "perturbation map",
                expected: d.dim(),
                got: p.ncols(),
            });
        }
        let (n_i, m_i) = (p.nrows(), d.num_inequalities());
        let mut equality = DMatrix::zeros(d.dim(), n_i + m_i);
        equality.columns_mut(0, n_i).copy_from(&p.transpose());
        equality
            .columns_mut(n_i, m_i)
            .copy_from(&(-d.a().transpose()));
        agents.push(AgentDual {
            equality,
            cost: d.b().clone(),
        });
    }
    if c.resource_perturbation.len() != u.global.dim() {
        return Err(Error::DimensionMismatch {
            agent: None,
            what: "resource perturbation",
            expected: u.global.dim(),
            got: c.resource_perturbation.len(),
        });
    }
    Ok(ConstraintDual {
        nominal: c.nominal.clone(),
        resource: c.resource,
        agents,
        global: GlobalDual {
            equality: u.global.a().transpose(),
            rhs: -&c.resource_perturbation,
            cost: u.global.b().clone(),
        },
    })
}

impl ConstraintDual {
    /// `min {d_iᵀ y | D_iᵀ y = P_iᵀ x_i, y ≥ 0}` and a minimizer.
    pub fn local_dual_value(&self, i: usize, x_i: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let dual = self.agents.get(i).ok_or(Error::AgentIndex(i))?;
        let n_i = self.nominal[i].len();
        if x_i.len() != n_i {
            return Err(Error::DimensionMismatch {
                agent: Some(i),
                what: "strategy block",
                expected: n_i,
                got: x_i.len(),
            });
        }
        let m_i = dual.cost.len();
        let rhs = -(dual.equality.columns(0, n_i) * x_i);
        let neg_dt = dual.equality.columns(n_i, m_i).into_owned();
        solve_dual_lp(&neg_dt, &rhs, &dual.cost, "local dual")
    }

    /// `min {dᵀ z | Dᵀ z = −q, z ≥ 0}` and a minimizer.
    pub fn global_dual_value(&self) -> Result<(f64, DVector<f64>)> {
        solve_dual_lp(
            &self.global.equality,
            &self.global.rhs,
            &self.global.cost,
            "global dual",
        )
    }
}

fn solve_dual_lp(
    m: &DMatrix<f64>,
    rhs: &DVector<f64>,
    cost: &DVector<f64>,
    what: &str,
) -> Result<(f64, DVector<f64>)> {
    let mut lp = LinearProgram::new();
    let first = lp.add_vars(cost.len(), 0.0, f64::INFINITY);
    for (k, &c) in cost.iter().enumerate() {
        lp.set_cost(first + k, c);
    }
    geometry::add_rows(&mut lp, first, m, rhs, Sense::Eq);
    let (x, obj) = lp.solve_optimal(what)?;
    Ok((obj, DVector::from_vec(x)))
}

/// Deterministic extended game with a single shared `z` per robust row.
///
/// Agent `i` owns `(x_i, y_i^1, …, y_i^K)`; the shared block is
/// `(z^1, …, z^K)`.
#[derive(Debug, Clone)]
pub struct ExtendedGame {
    game: UncertainGame,
    duals: Vec<ConstraintDual>,
    local_sets: Vec<Polytope>,
    shared_set: Polytope,
    /// Row `k` restricted to agent `i`'s block.
    agent_rows: Vec<DMatrix<f64>>,
    /// Row `k` restricted to the shared block.
    shared_rows: DMatrix<f64>,
    rhs: DVector<f64>,
}

pub fn build_extended_game(game: &UncertainGame) -> Result<ExtendedGame> {
    let u = game.uncertainty();
    let duals = game
        .coupling()
        .iter()
        .map(|c| dualize_constraint(c, u))
        .collect::<Result<Vec<_>>>()?;
    let k = duals.len();
    let l = u.global.num_inequalities();

    let mut local_sets = Vec::with_capacity(game.num_agents());
    let mut agent_rows = Vec::with_capacity(game.num_agents());
    for (i, agent) in game.agents().iter().enumerate() {
        let n_i = agent.dim;
        let m_i = u.local[i].num_inequalities();
        let p_i = u.local[i].dim();
        let dim = n_i + k * m_i;
        let mut set_parts: Vec<&Polytope> = vec![&agent.local_set];
        let orthant = Polytope::orthant(m_i);
        for _ in 0..k {
            set_parts.push(&orthant);
        }
        let base = Polytope::product(&set_parts);
        // P_iᵀ x_i − D_iᵀ y_i^k = 0, appended to the equalities of Ω_i
        let mut aeq = DMatrix::zeros(base.num_equalities() + k * p_i, dim);
        let mut beq = DVector::zeros(aeq.nrows());
        aeq.rows_mut(0, base.num_equalities()).copy_from(base.aeq());
        beq.rows_mut(0, base.num_equalities()).copy_from(base.beq());
        let mut rows = DMatrix::zeros(k, dim);
        for (kk, dual) in duals.iter().enumerate() {
            let eq = &dual.agents[i].equality;
            let r0 = base.num_equalities() + kk * p_i;
            aeq.view_mut((r0, 0), (p_i, n_i))
                .copy_from(&eq.columns(0, n_i));
            aeq.view_mut((r0, n_i + kk * m_i), (p_i, m_i))
                .copy_from(&eq.columns(n_i, m_i));
            rows.view_mut((kk, 0), (1, n_i))
                .copy_from(&dual.nominal[i].transpose());
            rows.view_mut((kk, n_i + kk * m_i), (1, m_i))
                .copy_from(&dual.agents[i].cost.transpose());
        }
        local_sets.push(Polytope::with_equalities(
            base.a().clone(),
            base.b().clone(),
            aeq,
            beq,
        )?);
        agent_rows.push(rows);
    }

    let p = u.global.dim();
    let mut z_a = DMatrix::zeros(k * l, k * l);
    z_a.fill_with_identity();
    z_a = -z_a;
    let mut z_aeq = DMatrix::zeros(k * p, k * l);
    let mut z_beq = DVector::zeros(k * p);
    let mut shared_rows = DMatrix::zeros(k, k * l);
    for (kk, dual) in duals.iter().enumerate() {
        z_aeq
            .view_mut((kk * p, kk * l), (p, l))
            .copy_from(&dual.global.equality);
        z_beq.rows_mut(kk * p, p).copy_from(&dual.global.rhs);
        shared_rows
            .view_mut((kk, kk * l), (1, l))
            .copy_from(&dual.global.cost.transpose());
    }
    let shared_set = Polytope::with_equalities(z_a, DVector::zeros(k * l), z_aeq, z_beq)?;
    if geometry::certify_nonempty(&shared_set)?.is_none() {
        return Err(Error::Infeasible {
            what: "robustification infeasible: {z ≥ 0 | Dᵀz = −q} is empty".into(),
            slack: f64::NEG_INFINITY,
        });
    }
    for (i, set) in local_sets.iter().enumerate() {
        if geometry::certify_nonempty(set)?.is_none() {
            return Err(Error::Infeasible {
                what: format!("agent {i}: local set of the extended game is empty"),
                slack: f64::NEG_INFINITY,
            });
        }
    }
    let rhs = DVector::from_iterator(k, duals.iter().map(|d| d.resource));
    Ok(ExtendedGame {
        game: game.clone(),
        duals,
        local_sets,
        shared_set,
        agent_rows,
        shared_rows,
        rhs,
    })
}

impl ExtendedGame {
    pub fn game(&self) -> &UncertainGame {
        &self.game
    }

    pub fn duals(&self) -> &[ConstraintDual] {
        &self.duals
    }

    pub fn num_agents(&self) -> usize {
        self.game.num_agents()
    }

    pub fn num_constraints(&self) -> usize {
        self.duals.len()
    }

    /// `m_i`: rows of `D_i`.
    pub fn local_dual_dim(&self, i: usize) -> usize {
        self.game.uncertainty().local[i].num_inequalities()
    }

    /// `l`: rows of `D`.
    pub fn global_dual_dim(&self) -> usize {
        self.game.uncertainty().global.num_inequalities()
    }

    /// Dimension of `(x_i, y_i)`.
    pub fn agent_dim(&self, i: usize) -> usize {
        self.game.agents()[i].dim + self.num_constraints() * self.local_dual_dim(i)
    }

    pub fn shared_dim(&self) -> usize {
        self.num_constraints() * self.global_dual_dim()
    }

    /// `Ω_i × {y_i ≥ 0} ∩ {P_iᵀ x_i = D_iᵀ y_i}`.
    pub fn local_set(&self, i: usize) -> &Polytope {
        &self.local_sets[i]
    }

    /// `{z ≥ 0 | Dᵀ z = −q}`.
    pub fn shared_set(&self) -> &Polytope {
        &self.shared_set
    }

    pub fn agent_rows(&self, i: usize) -> &DMatrix<f64> {
        &self.agent_rows[i]
    }

    pub fn shared_rows(&self) -> &DMatrix<f64> {
        &self.shared_rows
    }

    /// `b0` per robust row.
    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    /// Value of the coupled rows `Σ_i a_i0ᵀx_i + Σ_i d_iᵀy_i + dᵀz` for
    /// agent blocks `(x_i, y_i)` and shared `z`.
    pub fn coupled_lhs(&self, blocks: &[DVector<f64>], z: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.shared_rows * z;
        for (i, b) in blocks.iter().enumerate() {
            out += &self.agent_rows[i] * b;
        }
        out
    }

    /// Worst-case row values at `x` computed on the dual side:
    /// `(Σ_i a_i0ᵀx_i + min d_iᵀ y_i,  b0 − min dᵀ z)` for row `k`.
    pub fn dual_worst_case(&self, k: usize, x: &[DVector<f64>]) -> Result<(f64, f64)> {
        let dual = &self.duals[k];
        let mut lhs = 0.0;
        for (i, xi) in x.iter().enumerate() {
            lhs += dual.nominal[i].dot(xi) + dual.local_dual_value(i, xi)?.0;
        }
        let rhs = dual.resource - dual.global_dual_value()?.0;
        Ok((lhs, rhs))
    }
}

/// Extended game lowered onto a graph: `w_i = (x_i, y_i, z_i)` with a local
/// copy `z_i` of the shared block, coupling inequality blocks `S_i`, and
/// consensus equalities `Σ_i R_i w_i = 0` encoding `(L ⊗ I) z = 0`.
#[derive(Debug, Clone)]
pub struct CanonicalGame {
    extended: ExtendedGame,
    graph: CommGraph,
    eta: Vec<usize>,
    w_offsets: Vec<usize>,
    local_sets: Vec<Polytope>,
    projectors: Vec<Projector>,
    s_blocks: Vec<DMatrix<f64>>,
    s: DVector<f64>,
    r_blocks: Vec<DMatrix<f64>>,
}

pub fn to_canonical(eg: &ExtendedGame, g: &CommGraph) -> Result<CanonicalGame> {
    let n_agents = eg.num_agents();
    if g.num_nodes() != n_agents {
        return Err(Error::InvalidGraph(format!(
            "graph has {} nodes but the game has {n_agents} agents",
            g.num_nodes()
        )));
    }
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    let shared = eg.shared_dim();
    let c_eq = n_agents * shared;
    let weight = 1.0 / n_agents as f64;

    let mut eta = Vec::with_capacity(n_agents);
    let mut w_offsets = vec![0];
    let mut local_sets = Vec::with_capacity(n_agents);
    let mut projectors = Vec::with_capacity(n_agents);
    let mut s_blocks = Vec::with_capacity(n_agents);
    let mut r_blocks = Vec::with_capacity(n_agents);
    for i in 0..n_agents {
        let own = eg.agent_dim(i);
        let eta_i = own + shared;
        eta.push(eta_i);
        w_offsets.push(w_offsets[i] + eta_i);

        let set = Polytope::product(&[eg.local_set(i), eg.shared_set()]);
        projectors.push(Projector::new(&set)?);
        local_sets.push(set);

        let mut s_i = DMatrix::zeros(eg.num_constraints(), eta_i);
        s_i.columns_mut(0, own).copy_from(eg.agent_rows(i));
        s_i.columns_mut(own, shared)
            .copy_from(&(eg.shared_rows() * weight));
        s_blocks.push(s_i);

        let mut r_i = DMatrix::zeros(c_eq, eta_i);
        for j in 0..n_agents {
            let l_ji = g.laplacian()[(j, i)];
            if l_ji != 0.0 {
                for k in 0..shared {
                    r_i[(j * shared + k, own + k)] = l_ji;
                }
            }
        }
        r_blocks.push(r_i);
    }
    Ok(CanonicalGame {
        extended: eg.clone(),
        graph: g.clone(),
        eta,
        w_offsets,
        local_sets,
        projectors,
        s_blocks,
        s: eg.rhs().clone(),
        r_blocks,
    })
}

impl CanonicalGame {
    pub fn extended(&self) -> &ExtendedGame {
        &self.extended
    }

    pub fn game(&self) -> &UncertainGame {
        self.extended.game()
    }

    pub fn graph(&self) -> &CommGraph {
        &self.graph
    }

    pub fn num_agents(&self) -> usize {
        self.eta.len()
    }

    /// `η_i`
    pub fn eta(&self, i: usize) -> usize {
        self.eta[i]
    }

    pub fn w_dim(&self) -> usize {
        self.w_offsets[self.num_agents()]
    }

    pub fn w_offset(&self, i: usize) -> usize {
        self.w_offsets[i]
    }

    /// `c_in`: coupled inequality rows.
    pub fn c_in(&self) -> usize {
        self.s.len()
    }

    /// `c_eq = N · (shared block size)`: consensus rows.
    pub fn c_eq(&self) -> usize {
        self.num_agents() * self.extended.shared_dim()
    }

    pub fn x_range(&self, i: usize) -> Range<usize> {
        0..self.game().agents()[i].dim
    }

    /// Dual block `y_i^k` inside `w_i`.
    pub fn y_range(&self, i: usize, k: usize) -> Range<usize> {
        let m_i = self.extended.local_dual_dim(i);
        let start = self.game().agents()[i].dim + k * m_i;
        start..start + m_i
    }

    /// Local copy `z_i^k` inside `w_i`.
    pub fn z_range(&self, i: usize, k: usize) -> Range<usize> {
        let l = self.extended.global_dual_dim();
        let start = self.extended.agent_dim(i) + k * l;
        start..start + l
    }

    /// All of `z_i` inside `w_i`.
    pub fn z_block(&self, i: usize) -> Range<usize> {
        let start = self.extended.agent_dim(i);
        start..self.eta[i]
    }

    /// `W_i`
    pub fn local_set(&self, i: usize) -> &Polytope {
        &self.local_sets[i]
    }

    pub fn projector(&self, i: usize) -> &Projector {
        &self.projectors[i]
    }

    pub fn s_block(&self, i: usize) -> &DMatrix<f64> {
        &self.s_blocks[i]
    }

    /// `s = b0`, the right-hand side of the coupled rows.
    pub fn s(&self) -> &DVector<f64> {
        &self.s
    }

    /// Agent share `s_i = s / N`, so that `Σ_i s_i = s`.
    pub fn s_share(&self) -> DVector<f64> {
        &self.s / self.num_agents() as f64
    }

    pub fn r_block(&self, i: usize) -> &DMatrix<f64> {
        &self.r_blocks[i]
    }

    /// `S̄ = diag(S_i)`
    pub fn s_bar(&self) -> DMatrix<f64> {
        linalg::block_diag(&self.s_blocks)
    }

    /// `R̂ = diag(R_i)`
    pub fn r_hat(&self) -> DMatrix<f64> {
        linalg::block_diag(&self.r_blocks)
    }

    /// Collective strategy `x` from a stacked `w`.
    pub fn extract_x(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut x = Vec::with_capacity(self.game().dim());
        for i in 0..self.num_agents() {
            let off = self.w_offsets[i];
            x.extend(w.rows(off, self.game().agents()[i].dim).iter().copied());
        }
        DVector::from_vec(x)
    }

    /// `F̃(w) = col(∇_{x_i} J_i, 0, 0)`.
    pub fn extended_pseudo_gradient(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        let x = self.extract_x(w);
        let mut out = DVector::zeros(self.w_dim());
        for i in 0..self.num_agents() {
            let g = self.game().partial_gradient(i, &x)?;
            out.rows_mut(self.w_offsets[i], g.len()).copy_from(&g);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Topology;
    use crate::instances::{reference_game, reference_game_with};
    use crate::model::{Agent, AgentCost, QuadraticCost};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_vec(x.to_vec())
    }

    fn ring() -> CommGraph {
        CommGraph::new(Topology::Ring, 5).unwrap()
    }

    fn interval_sets(n: usize, local: f64, global: f64) -> UncertaintySets {
        UncertaintySets {
            local: vec![Polytope::interval(-local, local); n],
            global: Polytope::interval(-global, global),
        }
    }

    #[test]
    fn interval_dual_block() {
        let u = interval_sets(1, 1.0, 10.0);
        let c = UncertainConstraint {
            nominal: vec![v(&[0.0, 0.0])],
            perturbation: vec![DMatrix::from_row_slice(2, 1, &[1.0, 1.0])],
            resource: 0.0,
            resource_perturbation: v(&[1.0]),
        };
        let dual = dualize_constraint(&c, &u).unwrap();
        // [P_iᵀ, −D_iᵀ] = [1 1 | −1 1]
        assert_eq!(
            dual.agents[0].equality,
            DMatrix::from_row_slice(1, 4, &[1.0, 1.0, -1.0, 1.0])
        );
        assert_eq!(dual.agents[0].cost, v(&[1.0, 1.0]));
        let (val, y) = dual.local_dual_value(0, &v(&[3.0, 4.0])).unwrap();
        assert!((val - 7.0).abs() < 1e-12);
        assert!((y[0] - y[1] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn zero_perturbation_gives_zero_contribution() {
        let u = interval_sets(1, 1.0, 1.0);
        let c = UncertainConstraint::nominal_only(vec![v(&[1.0, 1.0])], 1.0, &u);
        let dual = dualize_constraint(&c, &u).unwrap();
        let (val, y) = dual.local_dual_value(0, &v(&[3.0, -2.0])).unwrap();
        assert_eq!(val, 0.0);
        assert_eq!(y, v(&[0.0, 0.0]));
    }

    #[test]
    fn global_worst_resource() {
        let game = reference_game(&ring());
        let dual = dualize_constraint(&game.coupling()[0], game.uncertainty()).unwrap();
        let (val, z) = dual.global_dual_value().unwrap();
        assert!((val - 10.0).abs() < 1e-12);
        assert!((z - v(&[0.0, 1.0])).amax() < 1e-12);
        assert!((dual.resource - val - 65.0).abs() < 1e-12);
    }

    #[test]
    fn reference_dimensions() {
        let game = reference_game(&ring());
        let eg = build_extended_game(&game).unwrap();
        // (x_i, y_i) plus the shared z
        assert_eq!(eg.agent_dim(0) + eg.shared_dim(), 6);
        let cg = to_canonical(&eg, &ring()).unwrap();
        assert_eq!(cg.c_eq(), 10);
        assert_eq!(cg.c_in(), 1);
        for i in 0..5 {
            assert_eq!(cg.eta(i), 6);
            // W_i: Ω_i, y ≥ 0, z ≥ 0; equalities P_iᵀx − D_iᵀy = 0 and Dᵀz = −q
            assert_eq!(cg.local_set(i).num_equalities(), 2);
        }
    }

    #[test]
    fn no_uncertainty_recovers_nominal_row() {
        let g = ring();
        let game = reference_game_with(&g, 75.0, false);
        let eg = build_extended_game(&game).unwrap();
        let x: Vec<_> = (0..5).map(|i| v(&[i as f64, 1.0])).collect();
        let (lhs, rhs) = eg.dual_worst_case(0, &x).unwrap();
        let nominal: f64 = x.iter().map(|xi| xi.sum()).sum();
        assert_eq!(lhs, nominal);
        assert_eq!(rhs, 75.0);
    }

    #[test]
    fn two_robust_rows() {
        let u = interval_sets(2, 1.0, 1.0);
        let agents = (0..2)
            .map(|_| Agent {
                dim: 1,
                cost: AgentCost::Quadratic(QuadraticCost::new(DMatrix::identity(1, 1), v(&[0.0]))),
                local_set: Polytope::interval(-1.0, 1.0),
            })
            .collect();
        let row = |b: f64| UncertainConstraint {
            nominal: vec![v(&[1.0]), v(&[1.0])],
            perturbation: vec![DMatrix::from_element(1, 1, 0.5); 2],
            resource: b,
            resource_perturbation: v(&[0.1]),
        };
        let game = UncertainGame::new(agents, vec![row(1.0), row(2.0)], u).unwrap();
        let eg = build_extended_game(&game).unwrap();
        assert_eq!(eg.num_constraints(), 2);
        let g = CommGraph::new(Topology::Path, 2).unwrap();
        let cg = to_canonical(&eg, &g).unwrap();
        assert_eq!(cg.c_in(), 2);
        // separate y and z blocks per row
        assert_eq!(cg.eta(0), 1 + 2 * 2 + 2 * 2);
        assert_eq!(cg.c_eq(), 2 * 4);
    }

    #[test]
    fn path_two_consensus_rows() {
        let u = interval_sets(2, 1.0, 1.0);
        let agents = (0..2)
            .map(|_| Agent {
                dim: 1,
                cost: AgentCost::Quadratic(QuadraticCost::new(DMatrix::identity(1, 1), v(&[0.0]))),
                local_set: Polytope::interval(-1.0, 1.0),
            })
            .collect();
        // global set with a single row: l = 1
        let global = Polytope::new(DMatrix::from_element(1, 1, 1.0), v(&[1.0])).unwrap();
        let u = UncertaintySets {
            local: u.local,
            global,
        };
        let c = UncertainConstraint {
            nominal: vec![v(&[1.0]), v(&[1.0])],
            perturbation: vec![DMatrix::zeros(1, 1); 2],
            resource: 1.0,
            resource_perturbation: v(&[0.0]),
        };
        let game = UncertainGame::new(agents, vec![c], u).unwrap();
        let eg = build_extended_game(&game).unwrap();
        let g = CommGraph::new(Topology::Path, 2).unwrap();
        let cg = to_canonical(&eg, &g).unwrap();
        let z0 = cg.z_block(0).start;
        let r0 = cg.r_block(0);
        assert_eq!(
            r0.column(z0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, -1.0]
        );
        let z1 = cg.z_block(1).start;
        assert_eq!(
            cg.r_block(1).column(z1).iter().copied().collect::<Vec<_>>(),
            vec![-1.0, 1.0]
        );
    }

    #[test]
    fn consensus_recovers_shared_inequality() {
        let g = ring();
        let game = reference_game(&g);
        let eg = build_extended_game(&game).unwrap();
        let cg = to_canonical(&eg, &g).unwrap();
        let z = v(&[0.3, 1.3]);
        let mut blocks = Vec::new();
        let mut total = DVector::zeros(1);
        for i in 0..5 {
            let own = DVector::from_fn(eg.agent_dim(i), |k, _| (i + k) as f64 * 0.7);
            let mut w = DVector::zeros(cg.eta(i));
            w.rows_mut(0, own.len()).copy_from(&own);
            w.rows_mut(cg.z_block(i).start, 2).copy_from(&z);
            total += cg.s_block(i) * &w;
            blocks.push(own);
        }
        let direct = eg.coupled_lhs(&blocks, &z);
        assert!((total - direct).amax() < 1e-12);
    }

    #[test]
    fn infeasible_shared_dual_reported() {
        // D = [1] (δ ≤ 1 only): Dᵀz = −q with z ≥ 0 has no solution for q = 1
        let mut u = interval_sets(1, 1.0, 1.0);
        u.global = Polytope::new(DMatrix::from_element(1, 1, 1.0), v(&[1.0])).unwrap();
        let agent = Agent {
            dim: 1,
            cost: AgentCost::Quadratic(QuadraticCost::new(DMatrix::identity(1, 1), v(&[0.0]))),
            local_set: Polytope::interval(-1.0, 1.0),
        };
        let c = UncertainConstraint {
            nominal: vec![v(&[1.0])],
            perturbation: vec![DMatrix::zeros(1, 1)],
            resource: 1.0,
            resource_perturbation: v(&[1.0]),
        };
        let game = UncertainGame::new(vec![agent], vec![c], u).unwrap();
        assert!(matches!(
            build_extended_game(&game),
            Err(Error::Infeasible { .. })
        ));
    }
}
