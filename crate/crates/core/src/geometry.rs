//! Euclidean projection onto polytopes, vertex enumeration for small
//! polytopes, and exact worst-case evaluation of robust constraints.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, AffineProjector};
use crate::lp::{LinearProgram, LpOutcome, Sense};
use crate::model::{Polytope, UncertainConstraint, UncertaintySets};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const MAX_SWEEPS: usize = 100_000;

/// Largest polytope accepted by [`enumerate_vertices`].
pub const MAX_VERTEX_DIM: usize = 6;
pub const MAX_VERTEX_ROWS: usize = 16;

#[derive(Debug, Clone)]
pub struct ProjectionProblem {
    pub target: Polytope,
    pub point: DVector<f64>,
    pub tolerance: f64,
}

pub fn project_polytope(problem: &ProjectionProblem) -> Result<DVector<f64>> {
    Projector::new(&problem.target)?
        .with_tolerance(problem.tolerance)
        .project(&problem.point)
}

#[derive(Debug, Clone)]
struct Halfspace {
    normal: DVector<f64>,
    offset: f64,
    norm_sq: f64,
}

#[derive(Debug, Clone)]
enum Shape {
    /// Only coordinate bounds: componentwise clamp.
    Box,
    /// Only equalities: least-squares correction.
    Affine,
    /// Dykstra over the bound block, each general halfspace and the affine part.
    General,
}

/// Projection onto a fixed nonempty polytope. Construction classifies the
/// rows once and certifies nonemptiness with an LP.
#[derive(Debug, Clone)]
pub struct Projector {
    polytope: Polytope,
    lower: DVector<f64>,
    upper: DVector<f64>,
    has_bounds: bool,
    halfspaces: Vec<Halfspace>,
    affine: Option<AffineProjector>,
    shape: Shape,
    tolerance: f64,
    max_sweeps: usize,
    polish: bool,
}

impl Projector {
    pub fn new(polytope: &Polytope) -> Result<Self> {
        if certify_nonempty(polytope)?.is_none() {
            return Err(Error::Infeasible {
                what: "projection target is empty".into(),
                slack: f64::NEG_INFINITY,
            });
        }
        Ok(Self::new_unchecked(polytope))
    }

    /// Skips the nonemptiness certificate; for targets already known to be
    /// feasible.
    pub fn new_unchecked(polytope: &Polytope) -> Self {
        let n = polytope.dim();
        let mut lower = DVector::from_element(n, f64::NEG_INFINITY);
        let mut upper = DVector::from_element(n, f64::INFINITY);
        let mut has_bounds = false;
        let mut halfspaces = Vec::new();
        let a = polytope.a();
        for r in 0..a.nrows() {
            let row = a.row(r);
            let nz: Vec<usize> = (0..n).filter(|&k| row[k] != 0.0).collect();
            let rhs = polytope.b()[r];
            if nz.len() == 1 {
                let k = nz[0];
                let c = row[k];
                has_bounds = true;
                if c > 0.0 {
                    upper[k] = upper[k].min(rhs / c);
                } else {
                    lower[k] = lower[k].max(rhs / c);
                }
            } else if nz.is_empty() {
                // 0ᵀx ≤ b: vacuous once nonemptiness is certified
            } else {
                let normal = row.transpose();
                let norm_sq = normal.norm_squared();
                halfspaces.push(Halfspace {
                    normal,
                    offset: rhs,
                    norm_sq,
                });
            }
        }
        let affine = (polytope.num_equalities() > 0)
            .then(|| AffineProjector::new(polytope.aeq().clone(), polytope.beq().clone()));
        let shape = match (halfspaces.is_empty(), affine.is_some()) {
            (true, false) => Shape::Box,
            (true, true) if !has_bounds => Shape::Affine,
            _ => Shape::General,
        };
        Self {
            polytope: polytope.clone(),
            lower,
            upper,
            has_bounds,
            halfspaces,
            affine,
            shape,
            tolerance: DEFAULT_TOLERANCE,
            max_sweeps: MAX_SWEEPS,
            polish: true,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_sweeps(mut self, sweeps: usize) -> Self {
        self.max_sweeps = sweeps;
        self
    }

    /// Disable the active-set polish so the result comes from plain Dykstra.
    pub fn without_polish(mut self) -> Self {
        self.polish = false;
        self
    }

    pub fn polytope(&self) -> &Polytope {
        &self.polytope
    }

    pub fn dim(&self) -> usize {
        self.polytope.dim()
    }

    pub fn project(&self, point: &DVector<f64>) -> Result<DVector<f64>> {
        if point.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                agent: None,
                what: "projection point",
                expected: self.dim(),
                got: point.len(),
            });
        }
        match self.shape {
            Shape::Box => Ok(self.clamp(point)),
            Shape::Affine => Ok(self.affine.as_ref().expect("affine shape").project(point)),
            Shape::General => {
                if self.polytope.violation(point) == 0.0 {
                    return Ok(point.clone());
                }
                self.dykstra(point)
            }
        }
    }

    fn clamp(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(x.len(), |k, _| x[k].max(self.lower[k]).min(self.upper[k]))
    }

    fn dykstra(&self, point: &DVector<f64>) -> Result<DVector<f64>> {
        let n = point.len();
        let scale = 1.0 + point.amax();
        let mut x = point.clone();
        let mut box_inc = DVector::zeros(n);
        let mut half_inc = vec![0.0; self.halfspaces.len()];
        let mut affine_inc = DVector::zeros(n);
        let mut next_polish = 1;
        let mut change = f64::INFINITY;

        for sweep in 1..=self.max_sweeps {
            let prev = x.clone();
            // x can sit still for many sweeps while the increments drain, so
            // their movement counts toward convergence too
            let mut inc_moved = 0.0;
            if self.has_bounds {
                let y = &x + &box_inc;
                x = self.clamp(&y);
                let next = y - &x;
                inc_moved += (&next - &box_inc).norm_squared();
                box_inc = next;
            }
            for (h, inc) in self.halfspaces.iter().zip(half_inc.iter_mut()) {
                // y = x + inc·a, then project y onto {aᵀy ≤ b}
                let ay = h.normal.dot(&x) + *inc * h.norm_sq;
                let excess = (ay - h.offset).max(0.0) / h.norm_sq;
                // x_new = y - excess·a, new increment = excess
                x.axpy(*inc - excess, &h.normal, 1.0);
                inc_moved += (*inc - excess).powi(2) * h.norm_sq;
                *inc = excess;
            }
            if let Some(aff) = &self.affine {
                let y = &x + &affine_inc;
                x = aff.project(&y);
                let next = y - &x;
                inc_moved += (&next - &affine_inc).norm_squared();
                affine_inc = next;
            }
            change = ((&x - &prev).norm_squared() + inc_moved).sqrt();

            if self.polish && sweep == next_polish {
                next_polish *= 2;
                if let Some(exact) =
                    self.polish_active_set(point, &x, change.max(1e-9) * 10.0 * scale)
                {
                    return Ok(exact);
                }
            }
            if change < self.tolerance / 10.0 && self.polytope.violation(&x) <= self.tolerance {
                if self.polish {
                    if let Some(exact) = self.polish_active_set(point, &x, 1e-7 * scale) {
                        return Ok(exact);
                    }
                }
                return Ok(x);
            }
        }
        Err(Error::ProjectionNotConverged {
            sweeps: self.max_sweeps,
            residual: change,
            last: x,
        })
    }

    /// Guess the active set from an approximate projection, solve the
    /// equality-constrained projection on it and accept it only if the KKT
    /// conditions (feasibility, nonnegative multipliers, tight active rows)
    /// hold. Rows with negative multipliers are dropped one at a time, which
    /// also sorts out redundant rows at degenerate vertices.
    fn polish_active_set(
        &self,
        point: &DVector<f64>,
        approx: &DVector<f64>,
        eps: f64,
    ) -> Option<DVector<f64>> {
        let a = self.polytope.a();
        let b = self.polytope.b();
        let mut active: Vec<usize> = (0..a.nrows())
            .filter(|&r| a.row(r).dot(&approx.transpose()) - b[r] >= -eps)
            .collect();
        let n_eq = self.polytope.num_equalities();
        let scale = 1.0 + point.amax();
        let tight = 1e-12 * scale;
        loop {
            let rows = active.len() + n_eq;
            if rows == 0 {
                return None;
            }
            let mut m = DMatrix::zeros(rows, point.len());
            let mut r = DVector::zeros(rows);
            for (k, &row) in active.iter().enumerate() {
                m.row_mut(k).copy_from(&a.row(row));
                r[k] = b[row];
            }
            if n_eq > 0 {
                m.rows_mut(active.len(), n_eq)
                    .copy_from(self.polytope.aeq());
                r.rows_mut(active.len(), n_eq)
                    .copy_from(self.polytope.beq());
            }
            let gram = &m * m.transpose();
            let mult = linalg::pseudo_inverse(&gram) * (&m * point - &r);
            let candidate = point - m.transpose() * &mult;
            // an over-determined guess leaves rows it claims active slack
            if (&m * &candidate - &r).amax() > 1e-9 * scale {
                return None;
            }
            let worst = (0..active.len())
                .filter(|&k| mult[k] < -tight)
                .min_by(|&i, &j| mult[i].total_cmp(&mult[j]));
            match worst {
                Some(k) => {
                    active.remove(k);
                }
                None => {
                    return (self.polytope.violation(&candidate) <= tight).then_some(candidate);
                }
            }
        }
    }
}

/// A feasible point of the polytope, or `None` when it is empty.
pub fn certify_nonempty(p: &Polytope) -> Result<Option<DVector<f64>>> {
    let n = p.dim();
    let mut lp = LinearProgram::new();
    let first = lp.add_vars(n, f64::NEG_INFINITY, f64::INFINITY);
    add_rows(&mut lp, first, p.a(), p.b(), Sense::Le);
    add_rows(&mut lp, first, p.aeq(), p.beq(), Sense::Eq);
    Ok(match lp.solve()? {
        LpOutcome::Optimal { x, .. } => Some(DVector::from_vec(x[first..first + n].to_vec())),
        LpOutcome::Infeasible => None,
        LpOutcome::Unbounded => unreachable!("zero objective cannot be unbounded"),
    })
}

/// A nonzero recession direction `r` (`A r ≤ 0`, `Aeq r = 0`), normalized to
/// the unit box, or `None` when the polytope is bounded.
pub fn recession_direction(p: &Polytope) -> Result<Option<DVector<f64>>> {
    let n = p.dim();
    let zeros = DVector::zeros(p.num_inequalities());
    let zeros_eq = DVector::zeros(p.num_equalities());
    for k in 0..n {
        for sign in [1.0, -1.0] {
            let mut lp = LinearProgram::new();
            let first = lp.add_vars(n, -1.0, 1.0);
            lp.set_cost(first + k, -sign);
            add_rows(&mut lp, first, p.a(), &zeros, Sense::Le);
            add_rows(&mut lp, first, p.aeq(), &zeros_eq, Sense::Eq);
            let (x, obj) = lp.solve_optimal("recession cone")?;
            if -obj > 1e-9 {
                return Ok(Some(DVector::from_vec(x)));
            }
        }
    }
    Ok(None)
}

pub(crate) fn add_rows(
    lp: &mut LinearProgram,
    first: usize,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    sense: Sense,
) {
    for r in 0..a.nrows() {
        let terms = (0..a.ncols()).map(|k| (first + k, a[(r, k)])).collect();
        lp.add_row(terms, sense, b[r]);
    }
}

/// All vertices (basic feasible solutions) of a small polytope.
pub fn enumerate_vertices(p: &Polytope) -> Result<Vec<DVector<f64>>> {
    let n = p.dim();
    let rows = p.num_inequalities() + p.num_equalities();
    if n > MAX_VERTEX_DIM || rows > MAX_VERTEX_ROWS {
        return Err(Error::Unsupported(format!(
            "vertex enumeration limited to dim ≤ {MAX_VERTEX_DIM} and ≤ {MAX_VERTEX_ROWS} rows (got dim {n}, {rows} rows)"
        )));
    }
    let eq_rank = linalg::rank(p.aeq());
    let Some(k) = n.checked_sub(eq_rank) else {
        return Ok(Vec::new());
    };
    let scale = 1.0
        + p.b()
            .iter()
            .chain(p.beq().iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
    let feas_tol = 1e-9 * scale;

    let mut vertices: Vec<DVector<f64>> = Vec::new();
    for subset in combinations(p.num_inequalities(), k) {
        let m_rows = subset.len() + p.num_equalities();
        let mut m = DMatrix::zeros(m_rows, n);
        let mut r = DVector::zeros(m_rows);
        for (row, &s) in subset.iter().enumerate() {
            m.row_mut(row).copy_from(&p.a().row(s));
            r[row] = p.b()[s];
        }
        if p.num_equalities() > 0 {
            m.rows_mut(subset.len(), p.num_equalities())
                .copy_from(p.aeq());
            r.rows_mut(subset.len(), p.num_equalities())
                .copy_from(p.beq());
        }
        if n > 0 && linalg::rank(&m) < n {
            continue;
        }
        let v = if n == 0 {
            DVector::zeros(0)
        } else {
            linalg::pseudo_inverse(&m) * &r
        };
        if (&m * &v - &r).amax() > feas_tol || p.violation(&v) > feas_tol {
            continue;
        }
        if !vertices.iter().any(|w| (w - &v).amax() <= 1e-9) {
            vertices.push(v);
        }
    }
    Ok(vertices)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= n {
        rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

/// Exact worst case of one robust row at `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    /// `Σ_i max_{δ_i ∈ Δ_i} (a_i0 + P_i δ_i)ᵀ x_i`
    pub max_lhs: f64,
    /// `b0 + min_{δ ∈ Δ} qᵀ δ`
    pub min_rhs: f64,
    pub local_maximizers: Vec<DVector<f64>>,
    pub global_minimizer: DVector<f64>,
}

impl WorstCase {
    pub fn slack(&self) -> f64 {
        self.min_rhs - self.max_lhs
    }
}

pub fn worst_case_value(
    c: &UncertainConstraint,
    u: &UncertaintySets,
    x: &[DVector<f64>],
) -> Result<WorstCase> {
    if x.len() != c.nominal.len() {
        return Err(Error::DimensionMismatch {
            agent: None,
            what: "agent blocks",
            expected: c.nominal.len(),
            got: x.len(),
        });
    }
    let mut max_lhs = 0.0;
    let mut local_maximizers = Vec::with_capacity(x.len());
    for (i, xi) in x.iter().enumerate() {
        if xi.len() != c.nominal[i].len() {
            return Err(Error::DimensionMismatch {
                agent: Some(i),
                what: "strategy block",
                expected: c.nominal[i].len(),
                got: xi.len(),
            });
        }
        let direction = c.perturbation[i].transpose() * xi;
        let (best, arg) = extreme_vertex(&u.local[i], &direction, true)?;
        max_lhs += c.nominal[i].dot(xi) + best;
        local_maximizers.push(arg);
    }
    let (best, global_minimizer) = extreme_vertex(&u.global, &c.resource_perturbation, false)?;
    Ok(WorstCase {
        max_lhs,
        min_rhs: c.resource + best,
        local_maximizers,
        global_minimizer,
    })
}

fn extreme_vertex(
    p: &Polytope,
    direction: &DVector<f64>,
    maximize: bool,
) -> Result<(f64, DVector<f64>)> {
    let vertices = enumerate_vertices(p)?;
    let mut best: Option<(f64, DVector<f64>)> = None;
    for v in vertices {
        let val = direction.dot(&v);
        let better = match &best {
            None => true,
            Some((b, _)) => (maximize && val > *b) || (!maximize && val < *b),
        };
        if better {
            best = Some((val, v));
        }
    }
    best.ok_or_else(|| Error::Infeasible {
        what: "uncertainty set has no vertices".into(),
        slack: f64::NEG_INFINITY,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rgne_testkit::{active_set_projection, random_polytope};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_vec(x.to_vec())
    }

    fn simplex2() -> Polytope {
        Polytope::with_equalities(
            -DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            v(&[1.0]),
        )
        .unwrap()
    }

    #[test]
    fn box_clamp() {
        let p = Polytope::from_bounds(&[-5.0, -5.0], &[15.0, 15.0]).unwrap();
        let x = Projector::new(&p)
            .unwrap()
            .project(&v(&[20.0, -7.0]))
            .unwrap();
        assert_eq!(x, v(&[15.0, -5.0]));
    }

    #[test]
    fn orthant() {
        let x = Projector::new(&Polytope::orthant(2))
            .unwrap()
            .project(&v(&[-1.0, 2.0]))
            .unwrap();
        assert_eq!(x, v(&[0.0, 2.0]));
    }

    #[test]
    fn simplex_projection_matches_oracle() {
        let p = simplex2();
        let x = Projector::new(&p)
            .unwrap()
            .project(&v(&[1.0, 1.0]))
            .unwrap();
        assert!((x - v(&[0.5, 0.5])).amax() < 1e-12);
        let oracle =
            active_set_projection(p.a(), p.b(), p.aeq(), p.beq(), &v(&[1.0, 1.0])).unwrap();
        assert!((oracle - v(&[0.5, 0.5])).amax() < 1e-12);
        // a point whose projection is a vertex
        let x = Projector::new(&p)
            .unwrap()
            .project(&v(&[3.0, -1.0]))
            .unwrap();
        assert!((x - v(&[1.0, 0.0])).amax() < 1e-12);
    }

    #[test]
    fn plain_dykstra_converges_to_the_projection() {
        let p = simplex2();
        let proj = Projector::new(&p).unwrap().without_polish();
        let x = proj.project(&v(&[3.0, -1.0])).unwrap();
        assert!((x - v(&[1.0, 0.0])).amax() < 1e-8);
    }

    #[test]
    fn empty_target_rejected() {
        let p = Polytope::from_bounds(&[1.0], &[0.0]).unwrap();
        assert!(matches!(Projector::new(&p), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn nonconvergence_reports_last_iterate() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
        let p = Polytope::new(a, v(&[0.0, 0.0])).unwrap();
        let proj = Projector::new(&p)
            .unwrap()
            .without_polish()
            .with_max_sweeps(1)
            .with_tolerance(1e-300);
        match proj.project(&v(&[5.0, 1.0])) {
            Err(Error::ProjectionNotConverged { last, .. }) => assert_eq!(last.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dykstra_agrees_with_active_set_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 60 {
            let (a, b, aeq, beq, point) = random_polytope(&mut rng, 4, 6, 1);
            let p =
                Polytope::with_equalities(a.clone(), b.clone(), aeq.clone(), beq.clone()).unwrap();
            let Ok(proj) = Projector::new(&p) else {
                continue;
            };
            let x = proj.project(&point).unwrap();
            let oracle = active_set_projection(&a, &b, &aeq, &beq, &point).unwrap();
            assert!((x - oracle).amax() < 1e-7);
            checked += 1;
        }
    }

    #[test]
    fn vertices_of_intervals_and_triangle() {
        let mut vs = enumerate_vertices(&Polytope::interval(-1.0, 1.0)).unwrap();
        vs.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(vs, vec![v(&[-1.0]), v(&[1.0])]);

        let mut vs = enumerate_vertices(&Polytope::interval(-10.0, 10.0)).unwrap();
        vs.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(vs, vec![v(&[-10.0]), v(&[10.0])]);

        let tri = Polytope::new(
            DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]),
            v(&[0.0, 0.0, 1.0]),
        )
        .unwrap();
        let vs = enumerate_vertices(&tri).unwrap();
        assert_eq!(vs.len(), 3);
        for want in [v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[0.0, 1.0])] {
            assert!(vs.iter().any(|w| (w - &want).amax() < 1e-12));
        }
    }

    #[test]
    fn vertex_enumeration_scale_limit() {
        let p = Polytope::from_bounds(&[0.0; 7], &[1.0; 7]).unwrap();
        assert!(matches!(enumerate_vertices(&p), Err(Error::Unsupported(_))));
    }

    #[test]
    fn recession_direction_of_line() {
        let line = Polytope::new(DMatrix::zeros(1, 1), v(&[1.0])).unwrap();
        let r = recession_direction(&line).unwrap().expect("unbounded");
        assert!(r[0].abs() > 0.5);
        assert!(recession_direction(&Polytope::interval(-1.0, 1.0))
            .unwrap()
            .is_none());
    }

    #[test]
    fn worst_case_without_uncertainty_is_nominal() {
        let u = UncertaintySets {
            local: vec![Polytope::interval(-1.0, 1.0); 2],
            global: Polytope::interval(-1.0, 1.0),
        };
        let c = UncertainConstraint::nominal_only(vec![v(&[1.0, 2.0]), v(&[3.0])], 4.0, &u);
        let wc = worst_case_value(&c, &u, &[v(&[1.0, 1.0]), v(&[2.0])]).unwrap();
        assert_eq!(wc.max_lhs, 9.0);
        assert_eq!(wc.min_rhs, 4.0);
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_variational(
            seed in 0u64..10_000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b, aeq, beq, point) = random_polytope(&mut rng, 3, 5, 1);
            let p = Polytope::with_equalities(a, b, aeq, beq).unwrap();
            if let Ok(proj) = Projector::new(&p) {
                let x = proj.project(&point).unwrap();
                let again = proj.project(&x).unwrap();
                prop_assert!((&again - &x).amax() <= 1e-12 * (1.0 + x.amax()));
                if let Ok(vertices) = enumerate_vertices(&p) {
                    for y in vertices {
                        let ip = (&point - &x).dot(&(&y - &x));
                        prop_assert!(ip <= 1e-8 * (1.0 + point.norm_squared()));
                    }
                }
            }
        }
    }
}
