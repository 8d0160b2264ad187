//! Minimum-norm solves against constraint Jacobians.
//!
//! Both the zero-phase search and the descent solve an underdetermined
//! system `J d = b` (plus one extra row) for its minimum-norm solution. The
//! pair-constraint Jacobian has only two nonzero blocks per row, so it is
//! kept in block form and its Gram matrix is assembled ion by ion.

use nalgebra::{Cholesky, DMatrix, DVector};

/// Relative Tikhonov shift applied to the Gram matrix. Directions whose
/// squared singular value falls below this fraction of the largest are
/// treated as null, which plays the role of a pseudo-inverse cutoff.
pub const GRAM_RIDGE: f64 = 1e-13;

/// Constraint Jacobian for pairwise forms over a stacked per-ion vector.
/// Row `c` has `left[c]` in the block of ion `pairs[c].0` and `right[c]` in
/// the block of ion `pairs[c].1`.
#[derive(Debug, Clone)]
pub struct PairJacobian {
    pub n_ions: usize,
    pub block: usize,
    pub pairs: Vec<(usize, usize)>,
    pub left: Vec<DVector<f64>>,
    pub right: Vec<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub enum Jacobian {
    Dense(DMatrix<f64>),
    Pairs(PairJacobian),
}

impl Jacobian {
    pub fn rows(&self) -> usize {
        match self {
            Jacobian::Dense(m) => m.nrows(),
            Jacobian::Pairs(p) => p.pairs.len(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Jacobian::Dense(m) => m.ncols(),
            Jacobian::Pairs(p) => p.n_ions * p.block,
        }
    }

    pub fn mul(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Jacobian::Dense(m) => m * v,
            Jacobian::Pairs(p) => {
                let k = p.block;
                DVector::from_iterator(
                    p.pairs.len(),
                    p.pairs.iter().enumerate().map(|(c, &(n, m))| {
                        p.left[c].dot(&v.rows(n * k, k)) + p.right[c].dot(&v.rows(m * k, k))
                    }),
                )
            }
        }
    }

    pub fn tr_mul(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            Jacobian::Dense(m) => m.tr_mul(y),
            Jacobian::Pairs(p) => {
                let k = p.block;
                let mut out = DVector::zeros(p.n_ions * k);
                for (c, &(n, m)) in p.pairs.iter().enumerate() {
                    out.rows_mut(n * k, k).axpy(y[c], &p.left[c], 1.0);
                    out.rows_mut(m * k, k).axpy(y[c], &p.right[c], 1.0);
                }
                out
            }
        }
    }

    pub fn gram(&self) -> DMatrix<f64> {
        match self {
            Jacobian::Dense(m) => m * m.transpose(),
            Jacobian::Pairs(p) => {
                let rows = p.pairs.len();
                let mut touching: Vec<Vec<(usize, &DVector<f64>)>> = vec![Vec::new(); p.n_ions];
                for (c, &(n, m)) in p.pairs.iter().enumerate() {
                    touching[n].push((c, &p.left[c]));
                    touching[m].push((c, &p.right[c]));
                }
                let mut g = DMatrix::zeros(rows, rows);
                for entries in &touching {
                    for (i, &(ci, vi)) in entries.iter().enumerate() {
                        for &(cj, vj) in &entries[i..] {
                            let d = vi.dot(vj);
                            g[(ci, cj)] += d;
                            if ci != cj {
                                g[(cj, ci)] += d;
                            }
                        }
                    }
                }
                g
            }
        }
    }
}

/// Minimum-norm `d` with `J d = rhs[..P]` and, when `extra` is given,
/// `extra . d = rhs[P]`.
pub fn min_norm_solve(jac: &Jacobian, extra: Option<&DVector<f64>>, rhs: &DVector<f64>) -> DVector<f64> {
    let p = jac.rows();
    let dim = p + usize::from(extra.is_some());
    assert_eq!(rhs.len(), dim, "rhs length must match constraint rows");
    let mut gram = DMatrix::zeros(dim, dim);
    gram.view_mut((0, 0), (p, p)).copy_from(&jac.gram());
    if let Some(a) = extra {
        let ja = jac.mul(a);
        for c in 0..p {
            gram[(c, p)] = ja[c];
            gram[(p, c)] = ja[c];
        }
        gram[(p, p)] = a.dot(a);
    }
    let y = gram_solve(&gram, rhs);
    let mut d = jac.tr_mul(&y.rows(0, p).into_owned());
    if let Some(a) = extra {
        d.axpy(y[p], a, 1.0);
    }
    d
}

/// Solves `G y = b` for a positive semidefinite Gram matrix with a relative
/// ridge and one step of iterative refinement.
pub fn gram_solve(gram: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = gram.nrows();
    let scale = (0..n).map(|i| gram[(i, i)]).fold(0.0_f64, f64::max);
    if n == 0 || scale <= 0.0 || !scale.is_finite() {
        return DVector::zeros(n);
    }
    let mut ridge = GRAM_RIDGE * scale;
    for _ in 0..8 {
        let mut shifted = gram.clone();
        for i in 0..n {
            shifted[(i, i)] += ridge;
        }
        if let Some(chol) = Cholesky::new(shifted) {
            let mut y = chol.solve(b);
            let resid = b - gram * &y;
            y += chol.solve(&resid);
            return y;
        }
        ridge *= 100.0;
    }
    // Not reachable for a finite Gram matrix; fall back to an SVD solve.
    let svd = gram.clone().svd(true, true);
    svd.solve(b, 1e-12 * scale).unwrap_or_else(|_| DVector::zeros(n))
}

/// Null space of `m` (as orthonormal columns) using singular values below
/// `rel_tol * sigma_max` as zero. Returns `(basis, rank)`.
pub fn null_space(m: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, usize) {
    let cols = m.ncols();
    if m.iter().all(|&v| v == 0.0) {
        return (DMatrix::identity(cols, cols), 0);
    }
    // Pad to at least square so the SVD returns a complete right basis.
    let rows = m.nrows().max(cols);
    let mut padded = DMatrix::zeros(rows, cols);
    padded.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sigma = &svd.singular_values;
    let smax = sigma.iter().cloned().fold(0.0_f64, f64::max);
    let keep: Vec<usize> = (0..sigma.len()).filter(|&i| sigma[i] <= rel_tol * smax).collect();
    let rank = cols - keep.len();
    let mut basis = DMatrix::zeros(cols, keep.len());
    for (col, &i) in keep.iter().enumerate() {
        basis.set_column(col, &v_t.row(i).transpose());
    }
    (basis, rank)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_jacobian_matches_dense() {
        let k = 3;
        let pairs = vec![(0, 1), (0, 2), (1, 2)];
        let left: Vec<_> = (0..3).map(|c| DVector::from_fn(k, |i, _| (c * 7 + i) as f64 * 0.3 - 1.0)).collect();
        let right: Vec<_> = (0..3).map(|c| DVector::from_fn(k, |i, _| ((c + 2) * (i + 1)) as f64 * 0.1)).collect();
        let pj = PairJacobian { n_ions: 3, block: k, pairs: pairs.clone(), left: left.clone(), right: right.clone() };
        let mut dense = DMatrix::zeros(3, 3 * k);
        for (c, &(n, m)) in pairs.iter().enumerate() {
            dense.view_mut((c, n * k), (1, k)).copy_from(&left[c].transpose());
            dense.view_mut((c, m * k), (1, k)).copy_from(&right[c].transpose());
        }
        let jp = Jacobian::Pairs(pj);
        let jd = Jacobian::Dense(dense);
        assert!((jp.gram() - jd.gram()).abs().max() < 1e-14);
        let v = DVector::from_fn(3 * k, |i, _| (i as f64).sin());
        assert!((jp.mul(&v) - jd.mul(&v)).abs().max() < 1e-14);
        let y = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        assert!((jp.tr_mul(&y) - jd.tr_mul(&y)).abs().max() < 1e-14);
    }

    #[test]
    fn min_norm_solution_is_in_row_space() {
        let j = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 0.0, -1.0, 0.0, 1.0, 1.0, 1.0]);
        let a = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let rhs = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let jac = Jacobian::Dense(j.clone());
        let d = min_norm_solve(&jac, Some(&a), &rhs);
        assert!(((&j * &d) - rhs.rows(0, 2)).abs().max() < 1e-12);
        assert!((a.dot(&d) - 0.5).abs() < 1e-12);
        // d must be orthogonal to the null space of [J; a]
        let mut full = DMatrix::zeros(3, 4);
        full.view_mut((0, 0), (2, 4)).copy_from(&j);
        full.set_row(2, &a.transpose());
        let (ns, rank) = null_space(&full, 1e-12);
        assert_eq!(rank, 3);
        assert!((ns.tr_mul(&d)).abs().max() < 1e-12);
    }

    #[test]
    fn null_space_of_zero_is_identity_sized() {
        let (b, rank) = null_space(&DMatrix::zeros(2, 5), 1e-9);
        assert_eq!(rank, 0);
        assert_eq!(b.ncols(), 5);
        assert!((b.tr_mul(&b) - DMatrix::identity(5, 5)).abs().max() < 1e-14);
    }
}
