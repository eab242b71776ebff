//! Brute-force reference computations for tests. Nothing here calls into
//! the `rgne` crate, so every check built on these stays independent of the
//! implementation it validates.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Exact projection onto `{A x ≤ b, Aeq x = beq}` by enumerating every
/// subset of inequality rows: project onto the affine hull of the subset and
/// keep the nearest feasible candidate. Exponential in the row count.
pub fn active_set_projection(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    aeq: &DMatrix<f64>,
    beq: &DVector<f64>,
    point: &DVector<f64>,
) -> Option<DVector<f64>> {
    let m = a.nrows();
    assert!(m <= 20, "oracle is exponential in the number of rows");
    let n = point.len();
    let scale = 1.0 + b.amax().max(beq.amax()).max(point.amax());
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << m) {
        let rows: Vec<usize> = (0..m).filter(|r| mask & (1 << r) != 0).collect();
        let k = rows.len() + aeq.nrows();
        let candidate = if k == 0 {
            point.clone()
        } else {
            let mut mm = DMatrix::zeros(k, n);
            let mut rr = DVector::zeros(k);
            for (i, &r) in rows.iter().enumerate() {
                mm.row_mut(i).copy_from(&a.row(r));
                rr[i] = b[r];
            }
            for e in 0..aeq.nrows() {
                mm.row_mut(rows.len() + e).copy_from(&aeq.row(e));
                rr[rows.len() + e] = beq[e];
            }
            // minimum-norm correction onto {mm x = rr}
            let gram = &mm * mm.transpose();
            let svd = gram.svd(true, true);
            let tol = 1e-12 * svd.singular_values.max().max(1.0);
            let pinv = svd.pseudo_inverse(tol).ok()?;
            let c = point - mm.transpose() * (pinv * (&mm * point - &rr));
            if (&mm * &c - &rr).amax() > 1e-9 * scale {
                continue;
            }
            c
        };
        let viol_in = if m > 0 { (a * &candidate - b).max() } else { 0.0 };
        let viol_eq = if aeq.nrows() > 0 { (aeq * &candidate - beq).amax() } else { 0.0 };
        if viol_in > 1e-9 * scale || viol_eq > 1e-9 * scale {
            continue;
        }
        let d = (&candidate - point).norm_squared();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, candidate));
        }
    }
    best.map(|(_, x)| x)
}

/// Random polytope with a known interior point: dimension in `1..=max_dim`,
/// up to `max_ineq` inequality rows and up to `max_eq` equality rows, plus a
/// point to project drawn from a wider region.
#[allow(clippy::type_complexity)]
pub fn random_polytope<R: Rng>(
    rng: &mut R,
    max_dim: usize,
    max_ineq: usize,
    max_eq: usize,
) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let n = rng.gen_range(1..=max_dim);
    let m = rng.gen_range(1..=max_ineq);
    let e = rng.gen_range(0..=max_eq.min(n.saturating_sub(1)));
    let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
    let b = &a * &x0 + DVector::from_fn(m, |_, _| rng.gen_range(0.05..1.0));
    let aeq = DMatrix::from_fn(e, n, |_, _| rng.gen_range(-1.0..1.0));
    let beq = &aeq * &x0;
    let point = DVector::from_fn(n, |_, _| rng.gen_range(-4.0..4.0));
    (a, b, aeq, beq, point)
}

/// Central finite-difference gradient.
pub fn finite_difference_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |k, _| {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[k] += h;
        minus[k] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    })
}

/// Largest singular value by power iteration on `mᵀm`.
pub fn power_iteration_norm(m: &DMatrix<f64>, iterations: usize) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(m.ncols(), |k, _| 1.0 + 0.1 * k as f64);
    v /= v.norm();
    let mut est = 0.0;
    for _ in 0..iterations {
        let w = m.transpose() * (m * &v);
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        est = nw.sqrt();
        v = w / nw;
    }
    est
}

/// Every combination picking one element from each list.
pub fn cartesian_product<T: Clone>(lists: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = vec![Vec::new()];
    for list in lists {
        let mut next = Vec::with_capacity(out.len() * list.len());
        for prefix in &out {
            for item in list {
                let mut p = prefix.clone();
                p.push(item.clone());
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Endpoints of the interval `{δ | D δ ≤ d}` for a 1-D polytope.
pub fn interval_endpoints(d_matrix: &DMatrix<f64>, d: &DVector<f64>) -> (f64, f64) {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for r in 0..d_matrix.nrows() {
        let c = d_matrix[(r, 0)];
        if c > 0.0 {
            hi = hi.min(d[r] / c);
        } else if c < 0.0 {
            lo = lo.max(d[r] / c);
        }
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_on_simplex() {
        let a = -DMatrix::<f64>::identity(2, 2);
        let b = DVector::zeros(2);
        let aeq = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let beq = DVector::from_vec(vec![1.0]);
        let x = active_set_projection(&a, &b, &aeq, &beq, &DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn product_count() {
        let p = cartesian_product(&[vec![1, 2], vec![3, 4], vec![5]]);
        assert_eq!(p.len(), 4);
    }
}
