//! Relaxed-inertial preconditioned forward-backward-forward iteration over a
//! communication graph, its Tseng special case, and a centralized reference
//! solver on the shared-`z` extended game.
//!
//! One round of the distributed method, per agent `i`, reading a snapshot of
//! the previous round only:
//!
//! ```text
//! Z_k = W_k + σ_k (W_k − W_{k−1})
//! Y_k = J_B(Z_k − Φ⁻¹ A(Z_k))
//! W_{k+1} = (1 − ρ_k) Z_k + ρ_k (Y_k − Φ⁻¹ (A(Y_k) − A(Z_k)))
//! ```

use std::collections::BTreeSet;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Projector;
use crate::linalg;
use crate::operators::{
    AgentBlock, ExtendedOperator, Layout, Preconditioner, ResidualNorm, StackedPoint,
};
use crate::robustify::{CanonicalGame, ExtendedGame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Ripfbf,
    Tseng,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Ripfbf => "ripfbf",
            Mode::Tseng => "tseng",
        }
    }
}

/// Numerator of the relaxation schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoRule {
    /// `2(1 − σ̄)²`
    #[default]
    Conservative,
    /// `2(1 − σ̄²)`
    Loose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepProfile {
    /// Every step `fraction / ℓ_A`.
    Uniform,
    /// Agent `i` uses `fraction · (N − i) / N`, largest for the first agent.
    #[default]
    EvenlySpaced,
}

/// How `(σ_k, ρ_k)` are produced.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Schedule {
    /// `σ_k = σ̄(1 − 1/(k+1))` and `ρ_k` from [`RhoRule`].
    #[default]
    Standard,
    /// Fixed values, e.g. `σ = 0, ρ = 1`.
    Constant { sigma: f64, rho: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitialPoint {
    /// `w` projected from 0, all multipliers and auxiliaries 0.
    #[default]
    Zero,
    /// `w` and `μ` uniform in `[−scale, scale]` (then projected), `λ` uniform
    /// in `[0, scale]`, `ν = χ = 0`.
    Random { seed: u64, scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    pub sigma_bar: f64,
    pub fraction: f64,
    pub step_profile: StepProfile,
    pub rho_rule: RhoRule,
    pub schedule: Schedule,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub mode: Mode,
    pub residual_norm: ResidualNorm,
    pub initial: InitialPoint,
    /// Keeps every iterate so the Lyapunov trace can be evaluated against the
    /// final one.
    pub track_lyapunov: bool,
    /// Measures wall-clock time per iteration; off gives zeros.
    pub timing: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            sigma_bar: 0.5,
            fraction: 0.99,
            step_profile: StepProfile::EvenlySpaced,
            rho_rule: RhoRule::Conservative,
            schedule: Schedule::Standard,
            max_iterations: 50_000,
            tolerance: 1e-6,
            mode: Mode::Ripfbf,
            residual_norm: ResidualNorm::Euclidean,
            initial: InitialPoint::Zero,
            track_lyapunov: true,
            timing: true,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.sigma_bar) {
            return Err(Error::InvalidParameter(format!(
                "σ̄ = {} violates 0 ≤ σ̄ < 1 required for convergence",
                self.sigma_bar
            )));
        }
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "step fraction {} must lie in (0, 1) so that steps stay below 1/ℓ_A",
                self.fraction
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance {} must be positive",
                self.tolerance
            )));
        }
        if let Schedule::Constant { sigma, rho } = self.schedule {
            if !(0.0..1.0).contains(&sigma) || !(rho > 0.0 && rho <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "constant schedule needs 0 ≤ σ < 1 and 0 < ρ ≤ 1, got σ = {sigma}, ρ = {rho}"
                )));
            }
        }
        Ok(())
    }

    pub fn preconditioner(&self, layout: &Layout, ell_a: f64) -> Result<Preconditioner> {
        match self.step_profile {
            StepProfile::Uniform => Preconditioner::uniform(layout, ell_a, self.fraction),
            StepProfile::EvenlySpaced => {
                Preconditioner::evenly_spaced(layout, ell_a, self.fraction)
            }
        }
    }
}

/// `(σ_k, ρ_k)` for iteration `k`.
pub fn schedule_params(params: &SolverParams, ell_phi: f64, k: usize) -> Result<(f64, f64)> {
    if params.mode == Mode::Tseng {
        return Ok((0.0, 1.0));
    }
    let (sigma, rho) = match params.schedule {
        Schedule::Constant { sigma, rho } => (sigma, rho),
        Schedule::Standard => {
            if !(ell_phi > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "ℓ_Φ = {ell_phi} must be positive"
                )));
            }
            let sb = params.sigma_bar;
            let sigma = sb * (1.0 - 1.0 / (k as f64 + 1.0));
            let numerator = match params.rho_rule {
                RhoRule::Conservative => 2.0 * (1.0 - sb).powi(2),
                RhoRule::Loose => 2.0 * (1.0 - sb * sb),
            };
            let rho = numerator / ((1.0 + ell_phi) * (2.0 * sigma * sigma - sigma + 1.0));
            (sigma, rho)
        }
    };
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "ρ_{k} = {rho} outside (0, 1] for σ̄ = {}, σ_k = {sigma}, ℓ_Φ = {ell_phi}",
            params.sigma_bar
        )));
    }
    Ok((sigma, rho))
}

/// Per-agent record of whose dual and auxiliary variables were read.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MessageLog {
    pub sources: Vec<BTreeSet<usize>>,
    pub counts: Vec<u64>,
}

impl MessageLog {
    pub fn new(n: usize) -> Self {
        Self {
            sources: vec![BTreeSet::new(); n],
            counts: vec![0; n],
        }
    }

    fn record(&mut self, reader: usize, source: usize) {
        self.sources[reader].insert(source);
        self.counts[reader] += 1;
    }

    /// True when every agent read only from its graph neighbors.
    pub fn is_local(&self, cg: &CanonicalGame) -> bool {
        self.sources
            .iter()
            .enumerate()
            .all(|(i, s)| s.iter().all(|j| cg.graph().neighbors(i).contains(j)))
    }
}

/// `Z_k = W_k + σ_k (W_k − W_{k−1})`.
pub fn step_inertial(w: &StackedPoint, w_prev: &StackedPoint, sigma: f64) -> StackedPoint {
    w.zip_map(w_prev, |a, b| a + sigma * (a - b))
}

/// Output of the forward-backward step; `a_z = A(Z_k)` is kept for the
/// correction in the relaxed step.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardBackward {
    pub y: StackedPoint,
    pub a_z: StackedPoint,
}

/// `Y_k = J_B(Z_k − Φ⁻¹ A(Z_k))`, computed agent by agent in `order`.
pub fn step_forward_backward(
    op: &ExtendedOperator<'_>,
    phi: &Preconditioner,
    z: &StackedPoint,
    order: &[usize],
    log: Option<&mut MessageLog>,
) -> Result<ForwardBackward> {
    let layout = op.layout();
    let a_z = agent_forward_all(op, &layout, z, order, log)?;
    let mut y = z.clone();
    for &i in order {
        let zi = AgentBlock::of(&layout, z, i);
        let step = phi.apply_inverse_agent(&layout, i, &AgentBlock::of(&layout, &a_z, i));
        let moved = AgentBlock {
            w: &zi.w - &step.w,
            nu: &zi.nu - &step.nu,
            lambda: &zi.lambda - &step.lambda,
            chi: &zi.chi - &step.chi,
            mu: &zi.mu - &step.mu,
        };
        op.agent_resolvent(i, moved)?.write_into(&layout, &mut y, i);
    }
    Ok(ForwardBackward { y, a_z })
}

/// `W_{k+1} = (1 − ρ) Z + ρ (Y − Φ⁻¹ (A(Y) − A(Z)))`.
pub fn step_relax(
    op: &ExtendedOperator<'_>,
    phi: &Preconditioner,
    z: &StackedPoint,
    fb: &ForwardBackward,
    rho: f64,
    order: &[usize],
    log: Option<&mut MessageLog>,
) -> Result<StackedPoint> {
    let layout = op.layout();
    let a_y = agent_forward_all(op, &layout, &fb.y, order, log)?;
    Ok(relaxed_point(z, &fb.y, &a_y, &fb.a_z, phi.steps(), rho))
}

/// The relaxed combination given both operator values and the step sizes.
pub fn relaxed_point(
    z: &StackedPoint,
    y: &StackedPoint,
    a_y: &StackedPoint,
    a_z: &StackedPoint,
    steps: &StackedPoint,
    rho: f64,
) -> StackedPoint {
    let correction = steps.zip_map(&a_y.sub(a_z), |s, d| s * d);
    let v = y.sub(&correction);
    z.zip_map(&v, |zk, vk| (1.0 - rho) * zk + rho * vk)
}

fn agent_forward_all(
    op: &ExtendedOperator<'_>,
    layout: &Layout,
    pt: &StackedPoint,
    order: &[usize],
    mut log: Option<&mut MessageLog>,
) -> Result<StackedPoint> {
    let x = op.game().extract_x(&pt.w);
    let mut out = StackedPoint::zeros(layout);
    for &i in order {
        let block = match log.as_deref_mut() {
            Some(log) => op.agent_forward(layout, i, pt, &x, &mut |j| log.record(i, j))?,
            None => op.agent_forward(layout, i, pt, &x, &mut |_| {})?,
        };
        block.write_into(layout, &mut out, i);
    }
    Ok(out)
}

/// Tseng's forward-backward-forward update, written out on its own.
pub fn step_tseng(
    op: &ExtendedOperator<'_>,
    phi: &Preconditioner,
    w: &StackedPoint,
) -> Result<StackedPoint> {
    let a_w = op.eval_a(w)?;
    let y = op.resolvent_b(&w.sub(&phi.apply_inverse(&a_w)))?;
    let a_y = op.eval_a(&y)?;
    Ok(y.sub(&phi.apply_inverse(&a_y.sub(&a_w))))
}

/// `H_k = ‖W_k − ω‖²_Φ − σ_k ‖W_{k−1} − ω‖²_Φ + (2σ_k² − σ_k + 1) ‖W_k − W_{k−1}‖²_Φ`.
pub fn lyapunov_value(
    w: &StackedPoint,
    w_prev: &StackedPoint,
    sigma: f64,
    omega: &StackedPoint,
    phi: &Preconditioner,
) -> f64 {
    phi.norm_squared(&w.sub(omega)) - sigma * phi.norm_squared(&w_prev.sub(omega))
        + (2.0 * sigma * sigma - sigma + 1.0) * phi.norm_squared(&w.sub(w_prev))
}

/// Largest pairwise disagreement between agents' copies.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConsensusGaps {
    pub z: f64,
    pub lambda: f64,
    pub mu: f64,
}

impl ConsensusGaps {
    pub fn of(cg: &CanonicalGame, pt: &StackedPoint) -> Self {
        let layout = Layout::of(cg);
        let n = layout.num_agents();
        let z: Vec<DVector<f64>> = (0..n)
            .map(|i| {
                let off = layout.w_range(i).start;
                let r = cg.z_block(i);
                pt.w.rows(off + r.start, r.len()).into_owned()
            })
            .collect();
        let lambda: Vec<_> = (0..n)
            .map(|i| pt.lambda.rows_range(layout.in_range(i)).into_owned())
            .collect();
        let mu: Vec<_> = (0..n)
            .map(|i| pt.mu.rows_range(layout.eq_range(i)).into_owned())
            .collect();
        Self {
            z: max_pairwise(&z),
            lambda: max_pairwise(&lambda),
            mu: max_pairwise(&mu),
        }
    }

    pub fn max(&self) -> f64 {
        self.z.max(self.lambda).max(self.mu)
    }
}

fn max_pairwise(v: &[DVector<f64>]) -> f64 {
    let mut gap: f64 = 0.0;
    for (a, va) in v.iter().enumerate() {
        for vb in &v[a + 1..] {
            gap = gap.max((va - vb).norm());
        }
    }
    gap
}

/// Everything a distributed run produces.
#[derive(Debug, Clone)]
pub struct DistributedRun {
    pub mode: Mode,
    pub converged: bool,
    pub iterations: usize,
    /// Residual of `W_{k+1}` after each iteration.
    pub residuals: Vec<f64>,
    /// `H_k` against the final iterate; empty unless tracking was enabled.
    pub lyapunov: Vec<f64>,
    pub wall_ms: Vec<f64>,
    /// Collective strategy after each iteration.
    pub x_trace: Vec<DVector<f64>>,
    pub sigma: Vec<f64>,
    pub rho: Vec<f64>,
    pub initial_residual: f64,
    pub final_point: StackedPoint,
    pub x: DVector<f64>,
    pub consensus: ConsensusGaps,
    pub messages: MessageLog,
    pub ell_a: f64,
    pub ell_phi: f64,
    pub preconditioner: Preconditioner,
}

impl DistributedRun {
    pub fn final_residual(&self) -> f64 {
        self.residuals
            .last()
            .copied()
            .unwrap_or(self.initial_residual)
    }
}

pub fn initial_point(cg: &CanonicalGame, init: InitialPoint) -> Result<StackedPoint> {
    let layout = Layout::of(cg);
    let op = ExtendedOperator::new(cg);
    let mut pt = StackedPoint::zeros(&layout);
    if let InitialPoint::Random { seed, scale } = init {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |lo: f64, hi: f64| if hi > lo { rng.gen_range(lo..hi) } else { lo };
        pt.w.apply(|v| *v = draw(-scale, scale));
        pt.lambda.apply(|v| *v = draw(0.0, scale));
        pt.mu.apply(|v| *v = draw(-scale, scale));
    }
    op.resolvent_b(&pt)
}

/// Runs the distributed iteration on a lowered game until the natural
/// residual drops below the tolerance or the iteration budget is spent.
pub fn run_distributed(cg: &CanonicalGame, params: &SolverParams) -> Result<DistributedRun> {
    params.validate()?;
    let op = ExtendedOperator::new(cg);
    let layout = op.layout();
    let ell_f = cg.game().pseudo_gradient_lipschitz()?;
    let ell_a = op.lipschitz_bound(ell_f);
    let phi = params.preconditioner(&layout, ell_a)?;
    let order: Vec<usize> = (0..layout.num_agents()).collect();
    let mut messages = MessageLog::new(layout.num_agents());

    let mut w = initial_point(cg, params.initial)?;
    let mut w_prev = w.clone();
    let initial_residual = op.natural_residual(&phi, &w, params.residual_norm)?;
    let mut residuals = Vec::new();
    let mut wall_ms = Vec::new();
    let mut x_trace = Vec::new();
    let mut sigmas = Vec::new();
    let mut rhos = Vec::new();
    let mut history = Vec::new();
    if params.track_lyapunov {
        history.push(w.clone());
    }
    let mut converged = initial_residual < params.tolerance;
    let mut k = 0;
    while !converged && k < params.max_iterations {
        let start = params.timing.then(Instant::now);
        let (sigma, rho) = schedule_params(params, phi.ell_phi(), k)?;
        let next = match params.mode {
            Mode::Tseng => {
                // the same neighbor reads as a distributed round
                agent_forward_all(&op, &layout, &w, &order, Some(&mut messages))?;
                step_tseng(&op, &phi, &w)?
            }
            Mode::Ripfbf => {
                let z = step_inertial(&w, &w_prev, sigma);
                let fb = step_forward_backward(&op, &phi, &z, &order, Some(&mut messages))?;
                step_relax(&op, &phi, &z, &fb, rho, &order, Some(&mut messages))?
            }
        };
        w_prev = std::mem::replace(&mut w, next);
        let r = op.natural_residual(&phi, &w, params.residual_norm)?;
        if !r.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "iteration diverged at k = {k}"
            )));
        }
        residuals.push(r);
        sigmas.push(sigma);
        rhos.push(rho);
        x_trace.push(cg.extract_x(&w.w));
        wall_ms.push(start.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3));
        if params.track_lyapunov {
            history.push(w.clone());
        }
        converged = r < params.tolerance;
        k += 1;
    }

    // H_k for k = 1, …, iterations, with ω the final iterate
    let lyapunov = if params.track_lyapunov {
        (1..history.len())
            .map(|k| {
                let sigma = schedule_params(params, phi.ell_phi(), k)
                    .map(|s| s.0)
                    .unwrap_or(0.0);
                lyapunov_value(&history[k], &history[k - 1], sigma, &w, &phi)
            })
            .collect()
    } else {
        Vec::new()
    };

    Ok(DistributedRun {
        mode: params.mode,
        converged,
        iterations: k,
        residuals,
        lyapunov,
        wall_ms,
        x_trace,
        sigma: sigmas,
        rho: rhos,
        initial_residual,
        x: cg.extract_x(&w.w),
        consensus: ConsensusGaps::of(cg, &w),
        final_point: w,
        messages,
        ell_a,
        ell_phi: phi.ell_phi(),
        preconditioner: phi,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CentralizedParams {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Step as a fraction of `1/ℓ`.
    pub fraction: f64,
}

impl Default for CentralizedParams {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 2_000_000,
            fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CentralizedSolution {
    pub x: DVector<f64>,
    /// `(x_i, y_i)` per agent.
    pub blocks: Vec<DVector<f64>>,
    pub z: DVector<f64>,
    pub lambda: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Tseng's method on the shared-`z` primal-dual operator
/// `(u, z, λ) ↦ (F̃(u) + Cᵤᵀλ, C_zᵀλ, b0 − Cᵤu − C_z z)` with projections onto
/// the local sets, the shared set and the nonnegative orthant.
pub fn run_centralized(
    eg: &ExtendedGame,
    params: &CentralizedParams,
) -> Result<CentralizedSolution> {
    let n = eg.num_agents();
    let k = eg.num_constraints();
    let dims: Vec<usize> = (0..n).map(|i| eg.agent_dim(i)).collect();
    let mut offsets = vec![0];
    for d in &dims {
        offsets.push(offsets.last().unwrap() + d);
    }
    let nu = offsets[n];
    let nz = eg.shared_dim();
    let total = nu + nz + k;
    let projectors: Vec<Projector> = (0..n)
        .map(|i| Projector::new(eg.local_set(i)))
        .collect::<Result<_>>()?;
    let shared = Projector::new(eg.shared_set())?;

    let mut coupling = nalgebra::DMatrix::zeros(k, nu + nz);
    for i in 0..n {
        coupling
            .view_mut((0, offsets[i]), (k, dims[i]))
            .copy_from(eg.agent_rows(i));
    }
    coupling
        .view_mut((0, nu), (k, nz))
        .copy_from(eg.shared_rows());
    let ell = eg.game().pseudo_gradient_lipschitz()? + linalg::spectral_norm(&coupling);
    let step = params.fraction / ell.max(f64::EPSILON);
    let x_of = |v: &DVector<f64>| {
        let mut x = Vec::new();
        for i in 0..n {
            x.extend(
                v.rows(offsets[i], eg.game().agents()[i].dim)
                    .iter()
                    .copied(),
            );
        }
        DVector::from_vec(x)
    };
    let operator = |v: &DVector<f64>| -> Result<DVector<f64>> {
        let x = x_of(v);
        let lambda = v.rows(nu + nz, k);
        let mut out = DVector::zeros(total);
        let mut primal = coupling.tr_mul(&lambda);
        for i in 0..n {
            let g = eg.game().partial_gradient(i, &x)?;
            let mut head = primal.rows_mut(offsets[i], g.len());
            head += &g;
        }
        out.rows_mut(0, nu + nz).copy_from(&primal);
        let slack = eg.rhs() - &coupling * v.rows(0, nu + nz);
        out.rows_mut(nu + nz, k).copy_from(&slack);
        Ok(out)
    };
    let project = |v: &DVector<f64>| -> Result<DVector<f64>> {
        let mut out = v.clone();
        for i in 0..n {
            let p = projectors[i].project(&v.rows(offsets[i], dims[i]).into_owned())?;
            out.rows_mut(offsets[i], dims[i]).copy_from(&p);
        }
        let pz = shared.project(&v.rows(nu, nz).into_owned())?;
        out.rows_mut(nu, nz).copy_from(&pz);
        for j in 0..k {
            out[nu + nz + j] = out[nu + nz + j].max(0.0);
        }
        Ok(out)
    };

    let mut v = project(&DVector::zeros(total))?;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < params.max_iterations {
        let fv = operator(&v)?;
        let y = project(&(&v - step * &fv))?;
        residual = (&v - &y).norm();
        if residual < params.tolerance {
            break;
        }
        let fy = operator(&y)?;
        v = &y - step * (fy - fv);
        iterations += 1;
    }
    let blocks = (0..n)
        .map(|i| v.rows(offsets[i], dims[i]).into_owned())
        .collect();
    Ok(CentralizedSolution {
        x: x_of(&v),
        blocks,
        z: v.rows(nu, nz).into_owned(),
        lambda: v.rows(nu + nz, k).into_owned(),
        residual,
        iterations,
        converged: residual < params.tolerance,
    })
}
