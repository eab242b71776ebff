//! Forward map `A = A1 + A2`, resolvent of `B`, preconditioner and natural
//! residual on the stacked primal-dual space `(w, ν, λ, χ, μ)`.
//!
//! The single-valued part of the extended operator is
//!
//! ```text
//!  w  [  0    0   S̄ᵀ   0   R̂ᵀ ]        F̃(w)
//!  ν  [  0    0   L̄    0   0  ]         0
//!  λ  [ −S̄  −L̄   L̄    0   0  ] Z  +    s̄
//!  χ  [  0    0   0    0   L̂  ]         0
//!  μ  [ −R̂   0   0   −L̂   L̂  ]         0
//! ```
//!
//! The diagonal Laplacian blocks on `λ` and `μ` are positive semidefinite, so
//! they are booked in `A1` together with `F̃` and `s̄`; what remains in `A2` is
//! exactly skew. The sum `A = A1 + A2` is the same either way.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::robustify::CanonicalGame;

/// Block sizes of the stacked space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    eta: Vec<usize>,
    w_offsets: Vec<usize>,
    c_in: usize,
    c_eq: usize,
}

impl Layout {
    pub fn new(eta: Vec<usize>, c_in: usize, c_eq: usize) -> Self {
        let mut w_offsets = vec![0];
        for e in &eta {
            w_offsets.push(w_offsets.last().unwrap() + e);
        }
        Self {
            eta,
            w_offsets,
            c_in,
            c_eq,
        }
    }

    pub fn of(cg: &CanonicalGame) -> Self {
        Self::new(
            (0..cg.num_agents()).map(|i| cg.eta(i)).collect(),
            cg.c_in(),
            cg.c_eq(),
        )
    }

    pub fn num_agents(&self) -> usize {
        self.eta.len()
    }

    pub fn eta(&self, i: usize) -> usize {
        self.eta[i]
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn c_eq(&self) -> usize {
        self.c_eq
    }

    pub fn w_dim(&self) -> usize {
        *self.w_offsets.last().unwrap()
    }

    pub fn w_range(&self, i: usize) -> Range<usize> {
        self.w_offsets[i]..self.w_offsets[i + 1]
    }

    /// Range of agent `i`'s `ν_i` or `λ_i`.
    pub fn in_range(&self, i: usize) -> Range<usize> {
        i * self.c_in..(i + 1) * self.c_in
    }

    /// Range of agent `i`'s `χ_i` or `μ_i`.
    pub fn eq_range(&self, i: usize) -> Range<usize> {
        i * self.c_eq..(i + 1) * self.c_eq
    }

    pub fn total_dim(&self) -> usize {
        self.w_dim() + 2 * self.num_agents() * (self.c_in + self.c_eq)
    }
}

/// A point `(w, ν, λ, χ, μ)` of the stacked space.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedPoint {
    pub w: DVector<f64>,
    pub nu: DVector<f64>,
    pub lambda: DVector<f64>,
    pub chi: DVector<f64>,
    pub mu: DVector<f64>,
}

impl StackedPoint {
    pub fn zeros(layout: &Layout) -> Self {
        let n = layout.num_agents();
        Self {
            w: DVector::zeros(layout.w_dim()),
            nu: DVector::zeros(n * layout.c_in),
            lambda: DVector::zeros(n * layout.c_in),
            chi: DVector::zeros(n * layout.c_eq),
            mu: DVector::zeros(n * layout.c_eq),
        }
    }

    pub fn from_element(layout: &Layout, value: f64) -> Self {
        Self::zeros(layout).map(|_| value)
    }

    pub fn from_flat(layout: &Layout, v: &DVector<f64>) -> Result<Self> {
        if v.len() != layout.total_dim() {
            return Err(Error::DimensionMismatch {
                agent: None,
                what: "stacked point",
                expected: layout.total_dim(),
                got: v.len(),
            });
        }
        let n = layout.num_agents();
        let mut at = 0;
        let mut take = |len: usize| {
            let out = v.rows(at, len).into_owned();
            at += len;
            out
        };
        Ok(Self {
            w: take(layout.w_dim()),
            nu: take(n * layout.c_in),
            lambda: take(n * layout.c_in),
            chi: take(n * layout.c_eq),
            mu: take(n * layout.c_eq),
        })
    }

    pub fn to_flat(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.blocks().into_iter().flat_map(|b| b.iter().copied()),
        )
    }

    pub fn len(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn blocks(&self) -> [&DVector<f64>; 5] {
        [&self.w, &self.nu, &self.lambda, &self.chi, &self.mu]
    }

    fn blocks_mut(&mut self) -> [&mut DVector<f64>; 5] {
        [
            &mut self.w,
            &mut self.nu,
            &mut self.lambda,
            &mut self.chi,
            &mut self.mu,
        ]
    }

    pub fn map(mut self, f: impl Fn(f64) -> f64) -> Self {
        for b in self.blocks_mut() {
            b.apply(|v| *v = f(*v));
        }
        self
    }

    /// Entrywise `f(self, other)`.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = self.clone();
        for (o, b) in out.blocks_mut().into_iter().zip(other.blocks()) {
            o.zip_apply(b, |x, y| *x = f(*x, y));
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    /// `self + t · other`
    pub fn axpy(&self, t: f64, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + t * b)
    }

    pub fn scale(&self, t: f64) -> Self {
        self.clone().map(|v| t * v)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.blocks()
            .iter()
            .zip(other.blocks())
            .map(|(a, b)| a.dot(b))
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn amax(&self) -> f64 {
        self.blocks().iter().map(|b| b.amax()).fold(0.0, f64::max)
    }
}

/// Agent `i`'s slice of a stacked vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentBlock {
    pub w: DVector<f64>,
    pub nu: DVector<f64>,
    pub lambda: DVector<f64>,
    pub chi: DVector<f64>,
    pub mu: DVector<f64>,
}

impl AgentBlock {
    pub fn of(layout: &Layout, pt: &StackedPoint, i: usize) -> Self {
        let (w, r_in, r_eq) = (layout.w_range(i), layout.in_range(i), layout.eq_range(i));
        Self {
            w: pt.w.rows_range(w).into_owned(),
            nu: pt.nu.rows_range(r_in.clone()).into_owned(),
            lambda: pt.lambda.rows_range(r_in).into_owned(),
            chi: pt.chi.rows_range(r_eq.clone()).into_owned(),
            mu: pt.mu.rows_range(r_eq).into_owned(),
        }
    }

    pub fn write_into(&self, layout: &Layout, pt: &mut StackedPoint, i: usize) {
        let (w, r_in, r_eq) = (layout.w_range(i), layout.in_range(i), layout.eq_range(i));
        pt.w.rows_range_mut(w).copy_from(&self.w);
        pt.nu.rows_range_mut(r_in.clone()).copy_from(&self.nu);
        pt.lambda.rows_range_mut(r_in).copy_from(&self.lambda);
        pt.chi.rows_range_mut(r_eq.clone()).copy_from(&self.chi);
        pt.mu.rows_range_mut(r_eq).copy_from(&self.mu);
    }
}

/// The operator pair `(A, B)` of a lowered game.
#[derive(Debug, Clone, Copy)]
pub struct ExtendedOperator<'a> {
    cg: &'a CanonicalGame,
}

/// Agent `i`'s share of the linear part, split into the skew blocks and the
/// Laplacian diagonal blocks on `λ` and `μ`.
struct LinearParts {
    skew: AgentBlock,
    lap_lambda: DVector<f64>,
    lap_mu: DVector<f64>,
}

impl<'a> ExtendedOperator<'a> {
    pub fn new(cg: &'a CanonicalGame) -> Self {
        Self { cg }
    }

    pub fn game(&self) -> &'a CanonicalGame {
        self.cg
    }

    pub fn layout(&self) -> Layout {
        Layout::of(self.cg)
    }

    fn check(&self, layout: &Layout, pt: &StackedPoint) -> Result<()> {
        const NAMES: [&str; 5] = [
            "stacked w block",
            "stacked ν block",
            "stacked λ block",
            "stacked χ block",
            "stacked μ block",
        ];
        let zero = StackedPoint::zeros(layout);
        for ((what, a), b) in NAMES.into_iter().zip(pt.blocks()).zip(zero.blocks()) {
            if a.len() != b.len() {
                return Err(Error::DimensionMismatch {
                    agent: None,
                    what,
                    expected: b.len(),
                    got: a.len(),
                });
            }
        }
        Ok(())
    }

    /// Agent `i`'s block of `A(pt)` given the collective strategy `x`
    /// extracted from `pt.w`. Every read of another agent's `ν, λ, χ, μ` is
    /// reported through `read`.
    pub fn agent_forward(
        &self,
        layout: &Layout,
        i: usize,
        pt: &StackedPoint,
        x: &DVector<f64>,
        read: &mut dyn FnMut(usize),
    ) -> Result<AgentBlock> {
        let LinearParts {
            mut skew,
            lap_lambda,
            lap_mu,
        } = self.linear_parts(layout, i, pt, read);
        let grad = self.cg.game().partial_gradient(i, x)?;
        let mut head = skew.w.rows_mut(0, grad.len());
        head += &grad;
        skew.lambda += self.cg.s_share() + lap_lambda;
        skew.mu += lap_mu;
        Ok(skew)
    }

    fn linear_parts(
        &self,
        layout: &Layout,
        i: usize,
        pt: &StackedPoint,
        read: &mut dyn FnMut(usize),
    ) -> LinearParts {
        let g = self.cg.graph();
        let (r_in, r_eq) = (layout.in_range(i), layout.eq_range(i));
        let lambda_i = pt.lambda.rows_range(r_in.clone());
        let nu_i = pt.nu.rows_range(r_in.clone());
        let mu_i = pt.mu.rows_range(r_eq.clone());
        let chi_i = pt.chi.rows_range(r_eq.clone());
        let w_i = pt.w.rows_range(layout.w_range(i));

        // (L ⊗ I) v restricted to row block i: Σ_{j ∈ N_i} (v_i − v_j)
        let mut lap_lambda = DVector::zeros(layout.c_in);
        let mut lap_nu = DVector::zeros(layout.c_in);
        let mut lap_mu = DVector::zeros(layout.c_eq);
        let mut lap_chi = DVector::zeros(layout.c_eq);
        for &j in g.neighbors(i) {
            read(j);
            let (j_in, j_eq) = (layout.in_range(j), layout.eq_range(j));
            lap_lambda += lambda_i - pt.lambda.rows_range(j_in.clone());
            lap_nu += nu_i - pt.nu.rows_range(j_in);
            lap_mu += mu_i - pt.mu.rows_range(j_eq.clone());
            lap_chi += chi_i - pt.chi.rows_range(j_eq);
        }

        let s_i = self.cg.s_block(i);
        let r_i = self.cg.r_block(i);
        let skew = AgentBlock {
            w: s_i.tr_mul(&lambda_i) + r_i.tr_mul(&mu_i),
            nu: lap_lambda.clone(),
            lambda: -(s_i * w_i) - lap_nu,
            chi: lap_mu.clone(),
            mu: -(r_i * w_i) - lap_chi,
        };
        LinearParts {
            skew,
            lap_lambda,
            lap_mu,
        }
    }

    /// `A(pt) = A1(pt) + A2 · pt`.
    pub fn eval_a(&self, pt: &StackedPoint) -> Result<StackedPoint> {
        let layout = self.layout();
        self.check(&layout, pt)?;
        let x = self.cg.extract_x(&pt.w);
        let mut out = StackedPoint::zeros(&layout);
        for i in 0..layout.num_agents() {
            self.agent_forward(&layout, i, pt, &x, &mut |_| {})?
                .write_into(&layout, &mut out, i);
        }
        Ok(out)
    }

    /// `A1(pt) = (F̃(w), 0, s̄ + L̄λ, 0, L̂μ)`.
    pub fn eval_a1(&self, pt: &StackedPoint) -> Result<StackedPoint> {
        Ok(self.eval_a(pt)?.sub(&self.eval_a2(pt)?))
    }

    /// `A2 · pt`, the skew part.
    pub fn eval_a2(&self, pt: &StackedPoint) -> Result<StackedPoint> {
        let layout = self.layout();
        self.check(&layout, pt)?;
        let mut out = StackedPoint::zeros(&layout);
        for i in 0..layout.num_agents() {
            self.linear_parts(&layout, i, pt, &mut |_| {})
                .skew
                .write_into(&layout, &mut out, i);
        }
        Ok(out)
    }

    /// Dense skew `A2` assembled from `S̄`, `R̂`, `L̄`, `L̂` in stacked
    /// coordinates.
    pub fn assemble_a2(&self) -> DMatrix<f64> {
        let (m, _) = self.assemble_linear_parts();
        m
    }

    /// Dense linear part of `A`: `A2` plus the Laplacian diagonal blocks.
    pub fn assemble_linear(&self) -> DMatrix<f64> {
        let (skew, diagonal) = self.assemble_linear_parts();
        skew + diagonal
    }

    fn assemble_linear_parts(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let layout = self.layout();
        let n = layout.num_agents();
        let (nw, ni, ne) = (layout.w_dim(), n * layout.c_in, n * layout.c_eq);
        let s_bar = self.cg.s_bar();
        let r_hat = self.cg.r_hat();
        let l_bar = self.cg.graph().kron_laplacian(layout.c_in);
        let l_hat = self.cg.graph().kron_laplacian(layout.c_eq);
        let (w0, nu0, la0, chi0, mu0) = (0, nw, nw + ni, nw + 2 * ni, nw + 2 * ni + ne);
        let mut m = DMatrix::zeros(layout.total_dim(), layout.total_dim());
        m.view_mut((w0, la0), (nw, ni))
            .copy_from(&s_bar.transpose());
        m.view_mut((w0, mu0), (nw, ne))
            .copy_from(&r_hat.transpose());
        m.view_mut((nu0, la0), (ni, ni)).copy_from(&l_bar);
        m.view_mut((la0, w0), (ni, nw)).copy_from(&(-&s_bar));
        m.view_mut((la0, nu0), (ni, ni)).copy_from(&(-&l_bar));
        m.view_mut((chi0, mu0), (ne, ne)).copy_from(&l_hat);
        m.view_mut((mu0, w0), (ne, nw)).copy_from(&(-&r_hat));
        m.view_mut((mu0, chi0), (ne, ne)).copy_from(&(-&l_hat));
        let mut d = DMatrix::zeros(layout.total_dim(), layout.total_dim());
        d.view_mut((la0, la0), (ni, ni)).copy_from(&l_bar);
        d.view_mut((mu0, mu0), (ne, ne)).copy_from(&l_hat);
        (m, d)
    }

    /// Agent `i`'s part of the resolvent: `w_i` onto `W_i`, `λ_i` onto the
    /// nonnegative orthant, everything else unchanged.
    pub fn agent_resolvent(&self, i: usize, block: AgentBlock) -> Result<AgentBlock> {
        let w = self.cg.projector(i).project(&block.w)?;
        Ok(AgentBlock {
            w,
            lambda: block.lambda.map(|v| v.max(0.0)),
            ..block
        })
    }

    pub fn resolvent_b(&self, pt: &StackedPoint) -> Result<StackedPoint> {
        let layout = self.layout();
        self.check(&layout, pt)?;
        let mut out = pt.clone();
        for i in 0..layout.num_agents() {
            self.agent_resolvent(i, AgentBlock::of(&layout, pt, i))?
                .write_into(&layout, &mut out, i);
        }
        Ok(out)
    }

    /// `ℓ_F + 4κ + |S̄| + |R̂|`.
    pub fn lipschitz_bound(&self, ell_f: f64) -> f64 {
        lipschitz_bound(self.cg, ell_f)
    }

    /// `pt − J_B(pt − Φ⁻¹ A(pt))`.
    pub fn fixed_point_displacement(
        &self,
        phi: &Preconditioner,
        pt: &StackedPoint,
    ) -> Result<StackedPoint> {
        let a = self.eval_a(pt)?;
        let fb = self.resolvent_b(&pt.sub(&phi.apply_inverse(&a)))?;
        Ok(pt.sub(&fb))
    }

    pub fn natural_residual(
        &self,
        phi: &Preconditioner,
        pt: &StackedPoint,
        norm: ResidualNorm,
    ) -> Result<f64> {
        let d = self.fixed_point_displacement(phi, pt)?;
        Ok(match norm {
            ResidualNorm::Euclidean => d.norm(),
            ResidualNorm::Preconditioned => phi.norm(&d),
        })
    }
}

pub fn eval_a(cg: &CanonicalGame, pt: &StackedPoint) -> Result<StackedPoint> {
    ExtendedOperator::new(cg).eval_a(pt)
}

pub fn resolvent_b(cg: &CanonicalGame, pt: &StackedPoint) -> Result<StackedPoint> {
    ExtendedOperator::new(cg).resolvent_b(pt)
}

pub fn lipschitz_bound(cg: &CanonicalGame, ell_f: f64) -> f64 {
    ell_f
        + 4.0 * cg.graph().kappa()
        + linalg::spectral_norm(&cg.s_bar())
        + linalg::spectral_norm(&cg.r_hat())
}

pub fn natural_residual(
    cg: &CanonicalGame,
    phi: &Preconditioner,
    pt: &StackedPoint,
) -> Result<f64> {
    ExtendedOperator::new(cg).natural_residual(phi, pt, ResidualNorm::Euclidean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualNorm {
    #[default]
    Euclidean,
    Preconditioned,
}

/// Diagonal `Φ = diag(α⁻¹, β⁻¹, γ⁻¹, τ⁻¹, θ⁻¹)`, stored as step sizes laid out
/// like a stacked point (α on `w`, β on `ν`, γ on `λ`, τ on `χ`, θ on `μ`).
#[derive(Debug, Clone, PartialEq)]
pub struct Preconditioner {
    steps: StackedPoint,
    ell_a: f64,
    lambda_min: f64,
    ell_phi: f64,
}

/// Builds the uniform preconditioner with every step `fraction / ℓ_A`.
pub fn build_preconditioner(layout: &Layout, ell_a: f64, fraction: f64) -> Result<Preconditioner> {
    Preconditioner::uniform(layout, ell_a, fraction)
}

impl Preconditioner {
    pub fn uniform(layout: &Layout, ell_a: f64, fraction: f64) -> Result<Self> {
        check_fraction(fraction)?;
        Self::from_steps(
            ell_a,
            StackedPoint::from_element(layout, fraction / check_ell(ell_a)?),
        )
    }

    /// Agent `i` uses step `fractions[i] / ℓ_A` on all of its blocks.
    pub fn per_agent(layout: &Layout, ell_a: f64, fractions: &[f64]) -> Result<Self> {
        if fractions.len() != layout.num_agents() {
            return Err(Error::DimensionMismatch {
                agent: None,
                what: "per-agent step fractions",
                expected: layout.num_agents(),
                got: fractions.len(),
            });
        }
        check_ell(ell_a)?;
        for &f in fractions {
            check_fraction(f)?;
        }
        let mut steps = StackedPoint::zeros(layout);
        for (i, f) in fractions.iter().enumerate() {
            let s = f / ell_a;
            steps.w.rows_range_mut(layout.w_range(i)).fill(s);
            for b in [&mut steps.nu, &mut steps.lambda] {
                b.rows_range_mut(layout.in_range(i)).fill(s);
            }
            for b in [&mut steps.chi, &mut steps.mu] {
                b.rows_range_mut(layout.eq_range(i)).fill(s);
            }
        }
        Self::from_steps(ell_a, steps)
    }

    /// Fractions `fraction · (N − i) / N` for agents `i = 0, …, N−1`.
    pub fn evenly_spaced(layout: &Layout, ell_a: f64, fraction: f64) -> Result<Self> {
        check_fraction(fraction)?;
        let n = layout.num_agents();
        let fractions: Vec<f64> = (0..n)
            .map(|i| fraction * (n - i) as f64 / n as f64)
            .collect();
        Self::per_agent(layout, ell_a, &fractions)
    }

    /// Arbitrary positive steps; the largest must stay below `1/ℓ_A`.
    pub fn from_steps(ell_a: f64, steps: StackedPoint) -> Result<Self> {
        check_ell(ell_a)?;
        let mut max_step: f64 = 0.0;
        for b in steps.blocks() {
            for &s in b.iter() {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "step size {s} is not strictly positive"
                    )));
                }
                max_step = max_step.max(s);
            }
        }
        if max_step == 0.0 {
            return Err(Error::InvalidParameter("empty preconditioner".into()));
        }
        let lambda_min = 1.0 / max_step;
        let ell_phi = ell_a / lambda_min;
        if ell_phi >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "largest step {max_step} must be below 1/ℓ_A = {}",
                1.0 / ell_a
            )));
        }
        Ok(Self {
            steps,
            ell_a,
            lambda_min,
            ell_phi,
        })
    }

    pub fn steps(&self) -> &StackedPoint {
        &self.steps
    }

    pub fn ell_a(&self) -> f64 {
        self.ell_a
    }

    /// Smallest eigenvalue of `Φ`, i.e. the reciprocal of the largest step.
    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    /// `ℓ_Φ = ℓ_A / λ_min(Φ)`, the Lipschitz constant of `Φ⁻¹A` in the
    /// `Φ`-norm.
    pub fn ell_phi(&self) -> f64 {
        self.ell_phi
    }

    /// `Φ⁻¹ v`
    pub fn apply_inverse(&self, v: &StackedPoint) -> StackedPoint {
        self.steps.zip_map(v, |s, x| s * x)
    }

    /// `Φ⁻¹ v` on agent `i`'s block.
    pub fn apply_inverse_agent(&self, layout: &Layout, i: usize, v: &AgentBlock) -> AgentBlock {
        let s = AgentBlock::of(layout, &self.steps, i);
        AgentBlock {
            w: s.w.component_mul(&v.w),
            nu: s.nu.component_mul(&v.nu),
            lambda: s.lambda.component_mul(&v.lambda),
            chi: s.chi.component_mul(&v.chi),
            mu: s.mu.component_mul(&v.mu),
        }
    }

    /// `‖v‖²_Φ = Σ v² / step`.
    pub fn norm_squared(&self, v: &StackedPoint) -> f64 {
        self.steps
            .blocks()
            .iter()
            .zip(v.blocks())
            .map(|(s, x)| s.iter().zip(x.iter()).map(|(s, x)| x * x / s).sum::<f64>())
            .sum()
    }

    pub fn norm(&self, v: &StackedPoint) -> f64 {
        self.norm_squared(v).sqrt()
    }

    /// Dense diagonal `Φ`.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.steps.to_flat().map(|s| 1.0 / s))
    }
}

fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "step fraction {fraction} must lie in (0, 1)"
        )))
    }
}

fn check_ell(ell_a: f64) -> Result<f64> {
    if ell_a > 0.0 && ell_a.is_finite() {
        Ok(ell_a)
    } else {
        Err(Error::InvalidParameter(format!(
            "ℓ_A = {ell_a} must be positive"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{CommGraph, Topology};
    use crate::instances::reference_game;
    use crate::robustify::{build_extended_game, to_canonical};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn canonical(t: Topology) -> CanonicalGame {
        let g = CommGraph::new(t, 5).unwrap();
        let eg = build_extended_game(&reference_game(&g)).unwrap();
        to_canonical(&eg, &g).unwrap()
    }

    fn random_point(layout: &Layout, rng: &mut ChaCha8Rng, scale: f64) -> StackedPoint {
        let flat = DVector::from_fn(layout.total_dim(), |_, _| rng.gen_range(-scale..scale));
        StackedPoint::from_flat(layout, &flat).unwrap()
    }

    #[test]
    fn value_at_origin() {
        let cg = canonical(Topology::Ring);
        let op = ExtendedOperator::new(&cg);
        let layout = op.layout();
        let a = op.eval_a(&StackedPoint::zeros(&layout)).unwrap();
        let grad = cg.game().pseudo_gradient(&DVector::zeros(10)).unwrap();
        for i in 0..5 {
            let w = a.w.rows_range(layout.w_range(i));
            assert_eq!(w.rows(0, 2), grad.rows(2 * i, 2));
            assert!(w.rows(2, 4).iter().all(|&v| v == 0.0));
            assert_eq!(a.lambda[i], 15.0);
        }
        assert_eq!(a.nu.amax(), 0.0);
        assert_eq!(a.mu.amax(), 0.0);
    }

    #[test]
    fn matches_dense_assembly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for t in [Topology::Ring, Topology::Star, Topology::Complete] {
            let cg = canonical(t);
            let op = ExtendedOperator::new(&cg);
            let layout = op.layout();
            let skew = op.assemble_a2();
            let linear = op.assemble_linear();
            let offset = op.eval_a(&StackedPoint::zeros(&layout)).unwrap();
            for _ in 0..5 {
                let u = random_point(&layout, &mut rng, 3.0);
                let direct = op.eval_a2(&u).unwrap().to_flat();
                assert!((direct - &skew * u.to_flat()).amax() < 1e-12);
                // the game is quadratic, so A is affine
                let a = op.eval_a(&u).unwrap().sub(&offset).to_flat();
                let mut expected = &linear * u.to_flat();
                let x = cg.extract_x(&u.w);
                let (m, _) = cg.game().game_matrix().unwrap();
                let fx = &m * x;
                for i in 0..5 {
                    let r = layout.w_range(i);
                    for k in 0..2 {
                        expected[r.start + k] += fx[2 * i + k];
                    }
                }
                assert!((a - expected).amax() < 1e-10);
            }
        }
    }

    #[test]
    fn a2_is_skew_and_remainder_monotone() {
        let cg = canonical(Topology::Ring);
        let op = ExtendedOperator::new(&cg);
        let m = op.assemble_a2();
        assert_eq!((&m + m.transpose()).amax(), 0.0);
        let diagonal = op.assemble_linear() - &m;
        assert_eq!(diagonal, diagonal.transpose());
        assert!(linalg::min_sym_eigenvalue(&diagonal) > -1e-12);
        assert!(diagonal.amax() > 0.0);
    }

    #[test]
    fn laplacian_blocks_vanish_at_consensus() {
        let cg = canonical(Topology::Ring);
        let op = ExtendedOperator::new(&cg);
        let layout = op.layout();
        let mut pt = StackedPoint::zeros(&layout);
        pt.lambda.fill(2.5);
        pt.nu.fill(-1.0);
        pt.mu = DVector::from_fn(pt.mu.len(), |k, _| (k % layout.c_eq()) as f64);
        let a2 = op.eval_a2(&pt).unwrap();
        assert_eq!(a2.nu.amax(), 0.0);
        assert_eq!(a2.chi.amax(), 0.0);
        let a1 = op.eval_a1(&pt).unwrap();
        assert!((a1.lambda.map(|v| v - 15.0)).amax() < 1e-12);
        assert!(a1.mu.amax() < 1e-12);
    }

    #[test]
    fn resolvent_projects_only_w_and_lambda() {
        let cg = canonical(Topology::Ring);
        let op = ExtendedOperator::new(&cg);
        let layout = op.layout();
        let mut pt = StackedPoint::zeros(&layout);
        pt.lambda[0] = -1.0;
        pt.lambda[1] = 2.0;
        pt.nu.fill(-3.0);
        pt.mu.fill(-4.0);
        pt.chi.fill(-5.0);
        let out = op.resolvent_b(&pt).unwrap();
        assert_eq!(
            out.lambda.rows(0, 2).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 2.0]
        );
        assert_eq!(out.nu, pt.nu);
        assert_eq!(out.mu, pt.mu);
        assert_eq!(out.chi, pt.chi);
        // nearest point of {z ≥ 0, z_1 − z_2 = −1} to the origin
        let z = out.w.rows_range(layout.w_range(0)).rows(4, 2).into_owned();
        assert!((z - DVector::from_vec(vec![0.0, 1.0])).amax() < 1e-9);
    }

    #[test]
    fn resolvent_fixes_feasible_points() {
        let cg = canonical(Topology::Ring);
        let op = ExtendedOperator::new(&cg);
        let layout = op.layout();
        let mut pt = StackedPoint::zeros(&layout);
        for i in 0..5 {
            // x = (1, 2), y = (3, 0), z = (0, 1)
            let w = DVector::from_vec(vec![1.0, 2.0, 3.0, 0.0, 0.0, 1.0]);
            pt.w.rows_range_mut(layout.w_range(i)).copy_from(&w);
        }
        pt.lambda.fill(0.7);
        assert_eq!(op.resolvent_b(&pt).unwrap(), pt);
    }

    #[test]
    fn lipschitz_bound_path_two() {
        use crate::model::{
            Agent, AgentCost, Polytope, QuadraticCost, UncertainConstraint, UncertainGame,
            UncertaintySets,
        };
        let u = UncertaintySets {
            local: vec![Polytope::interval(-1.0, 1.0); 2],
            global: Polytope::interval(-1.0, 1.0),
        };
        let agents = (0..2)
            .map(|_| Agent {
                dim: 1,
                cost: AgentCost::Quadratic(QuadraticCost::new(
                    DMatrix::zeros(1, 1),
                    DVector::zeros(1),
                )),
                local_set: Polytope::interval(-1.0, 1.0),
            })
            .collect();
        // all data zero: S̄ = 0 apart from the dual costs, which we also zero
        let c =
            UncertainConstraint::nominal_only(vec![DVector::zeros(1), DVector::zeros(1)], 1.0, &u);
        let game = UncertainGame::new(agents, vec![c], u).unwrap();
        let g = CommGraph::new(Topology::Path, 2).unwrap();
        let eg = build_extended_game(&game).unwrap();
        let cg = to_canonical(&eg, &g).unwrap();
        let bound = lipschitz_bound(&cg, 0.0);
        let expected =
            8.0 + linalg::spectral_norm(&cg.s_bar()) + linalg::spectral_norm(&cg.r_hat());
        assert!((bound - expected).abs() < 1e-12);
    }

    #[test]
    fn preconditioner_uniform() {
        let cg = canonical(Topology::Ring);
        let layout = Layout::of(&cg);
        let phi = build_preconditioner(&layout, 10.0, 0.5).unwrap();
        assert!(phi
            .steps()
            .blocks()
            .iter()
            .all(|b| b.iter().all(|&s| s == 0.05)));
        let eig = linalg::sym_eigenvalues(&phi.matrix());
        assert!((eig[0] - phi.lambda_min()).abs() < 1e-9);
        assert!((phi.lambda_min() - 20.0).abs() < 1e-12);
        assert!((phi.ell_phi() - 0.5).abs() < 1e-12);
        assert!(build_preconditioner(&layout, 10.0, 1.0).is_err());
        assert!(build_preconditioner(&layout, 10.0, 0.0).is_err());
    }

    #[test]
    fn preconditioner_heterogeneous() {
        let layout = Layout::new(vec![1, 1], 1, 2);
        let mut steps = StackedPoint::from_element(&layout, 0.01);
        steps.w[0] = 0.05;
        let phi = Preconditioner::from_steps(10.0, steps.clone()).unwrap();
        assert!((phi.lambda_min() - 20.0).abs() < 1e-12);
        assert!((phi.ell_phi() - 10.0 / 20.0).abs() < 1e-12);
        steps.nu[1] = -0.01;
        assert!(Preconditioner::from_steps(10.0, steps).is_err());
        let even = Preconditioner::evenly_spaced(&layout, 10.0, 0.5).unwrap();
        assert_eq!(even.steps().w[0], 0.05);
        assert_eq!(even.steps().w[1], 0.025);
    }

    #[test]
    fn certificates_on_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cg = canonical(Topology::Ring);
        let op = ExtendedOperator::new(&cg);
        let layout = op.layout();
        let ell_f = cg.game().pseudo_gradient_lipschitz().unwrap();
        let ell = op.lipschitz_bound(ell_f);
        for _ in 0..200 {
            let u = random_point(&layout, &mut rng, 10.0);
            let v = random_point(&layout, &mut rng, 10.0);
            let (au, av) = (op.eval_a(&u).unwrap(), op.eval_a(&v).unwrap());
            let (da, d) = (au.sub(&av), u.sub(&v));
            assert!(da.norm() <= ell * d.norm());
            assert!(da.dot(&d) >= -1e-10);
            let a2 = op.eval_a2(&u).unwrap();
            assert!(a2.dot(&u).abs() <= 1e-12 * u.dot(&u));
        }
    }

    #[test]
    fn residual_vanishes_at_fixed_points_only() {
        let cg = canonical(Topology::Ring);
        let op = ExtendedOperator::new(&cg);
        let layout = op.layout();
        let ell = op.lipschitz_bound(cg.game().pseudo_gradient_lipschitz().unwrap());
        let phi = build_preconditioner(&layout, ell, 0.5).unwrap();
        let r0 = op
            .natural_residual(&phi, &StackedPoint::zeros(&layout), ResidualNorm::Euclidean)
            .unwrap();
        assert!(r0 > 0.0);
        let rp = op
            .natural_residual(
                &phi,
                &StackedPoint::zeros(&layout),
                ResidualNorm::Preconditioned,
            )
            .unwrap();
        assert!(rp > r0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let cg = canonical(Topology::Ring);
        let op = ExtendedOperator::new(&cg);
        let mut pt = StackedPoint::zeros(&op.layout());
        pt.mu = DVector::zeros(3);
        assert!(matches!(
            op.eval_a(&pt),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
