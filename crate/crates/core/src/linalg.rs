//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Largest singular value. Zero for empty matrices.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().max()
}

/// Eigenvalues of the symmetric part `(m + mᵀ)/2`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Orthogonal projector data for `{x | m x = r}` built on the pseudo-inverse,
/// so rank-deficient equality systems are accepted.
#[derive(Debug, Clone)]
pub struct AffineProjector {
    m: DMatrix<f64>,
    r: DVector<f64>,
    /// `mᵀ (m mᵀ)⁺`
    correction: DMatrix<f64>,
}

impl AffineProjector {
    pub fn new(m: DMatrix<f64>, r: DVector<f64>) -> Self {
        let gram = &m * m.transpose();
        let pinv = pseudo_inverse(&gram);
        let correction = m.transpose() * pinv;
        Self { m, r, correction }
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.m.nrows() == 0 {
            return x.clone();
        }
        let defect = &self.m * x - &self.r;
        x - &self.correction * defect
    }

    pub fn residual(&self, x: &DVector<f64>) -> f64 {
        if self.m.nrows() == 0 {
            return 0.0;
        }
        (&self.m * x - &self.r).amax()
    }
}

pub fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(1.0);
    svd.pseudo_inverse(tol)
        .expect("svd computed with both factors")
}

/// Numerical rank via singular values.
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let tol = 1e-10 * sv.max().max(1.0);
    sv.iter().filter(|&&s| s > tol).count()
}

pub fn kronecker_identity(m: &DMatrix<f64>, block: usize) -> DMatrix<f64> {
    m.kronecker(&DMatrix::identity(block, block))
}

/// Block-diagonal stack of the given matrices.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_projection_rank_deficient() {
        // two copies of x + y = 1
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        let r = DVector::from_vec(vec![1.0, 2.0]);
        let p = AffineProjector::new(m, r);
        let x = p.project(&DVector::from_vec(vec![1.0, 1.0]));
        assert!((x[0] - 0.5).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn norms() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -4.0]);
        assert!((spectral_norm(&m) - 4.0).abs() < 1e-12);
        assert!((min_sym_eigenvalue(&m) + 4.0).abs() < 1e-12);
        assert_eq!(spectral_norm(&DMatrix::zeros(0, 3)), 0.0);
    }
}
