//! Small dense linear-algebra kernels shared across the crate.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Thin QR: returns `(Q, R)` with `Q` of size `m x min(m, k)`.
pub(crate) fn thin_qr(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    a.clone().qr().unpack()
}

/// Thin SVD `A = U diag(s) V^T` of an `m x k` matrix with `m >= k`.
/// Singular values are returned sorted in descending order.
pub(crate) fn thin_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (m, k) = a.shape();
    debug_assert!(m >= k);
    // For tall matrices, reduce through QR first so the iterative part runs
    // on a k x k factor.
    if m > 2 * k {
        let (q, r) = thin_qr(a);
        let (ur, s, v) = svd_sorted(&r);
        (q * ur, s, v)
    } else {
        svd_sorted(a)
    }
}

fn svd_sorted(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let k = a.ncols();
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("SVD requested with U");
    let vt = svd.v_t.expect("SVD requested with V^T");
    let s = svd.singular_values;

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).expect("singular values are finite"));

    let mut u_s = DMatrix::zeros(u.nrows(), k);
    let mut v_s = DMatrix::zeros(vt.ncols(), k);
    let mut s_s = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        u_s.set_column(dst, &u.column(src));
        v_s.set_column(dst, &vt.row(src).transpose());
        s_s[dst] = s[src];
    }
    (u_s, s_s, v_s)
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// descending order. Returns `(values, vectors)` with eigenvectors in columns.
pub(crate) fn sym_eigen_desc(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let ee = a.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        ee.eigenvalues[j]
            .partial_cmp(&ee.eigenvalues[i])
            .expect("eigenvalues are finite")
    });
    let mut vals = DVector::zeros(n);
    let mut vecs = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vals[dst] = ee.eigenvalues[src];
        vecs.set_column(dst, &ee.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Inverse square root of a symmetric positive definite `k x k` matrix.
/// Eigenvalues are floored at `floor` to guard against round-off at extreme
/// scales; no regularization beyond that.
pub(crate) fn invsqrt_spd(a: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_desc(a);
    let inv_sqrt = DVector::from_iterator(vals.len(), vals.iter().map(|&l| 1.0 / l.max(floor).sqrt()));
    &vecs * DMatrix::from_diagonal(&inv_sqrt) * vecs.transpose()
}

/// Orthonormal completion of `V in St(n, k)`: an `n x (n - k)` matrix whose
/// columns complete `V` to an orthonormal basis of `R^n`. Dense; intended for
/// desk-scale use (tests and sampling helpers).
pub(crate) fn orthonormal_completion(v: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = v.shape();
    let p = DMatrix::identity(n, n) - v * v.transpose();
    let (_, vecs) = sym_eigen_desc(&p);
    vecs.columns(0, n - k).into_owned()
}

pub(crate) fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, nrows: usize, ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(nrows, ncols, |_, _| rng.sample(StandardNormal))
}

/// Sample uniformly from the Stiefel manifold `St(n, k)` by QR of a Gaussian
/// matrix, with the sign fix that makes the distribution Haar.
pub(crate) fn random_stiefel<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, n, k);
    let (mut q, r) = thin_qr(&g);
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Returns `mat` with column `j` scaled by `s[j]`.
pub(crate) fn scale_columns(mat: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    let mut out = mat.clone();
    for j in 0..out.ncols() {
        out.column_mut(j).scale_mut(s[j]);
    }
    out
}

/// Returns `mat` with column `j` divided by `s[j]`.
pub(crate) fn divide_columns(mat: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    let mut out = mat.clone();
    for j in 0..out.ncols() {
        out.column_mut(j).unscale_mut(s[j]);
    }
    out
}

/// Returns `mat` with row `i` scaled by `s[i]`.
pub(crate) fn scale_rows_vec(mat: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    let mut out = mat.clone();
    for i in 0..out.nrows() {
        for j in 0..out.ncols() {
            out[(i, j)] *= s[i];
        }
    }
    out
}

/// Orthonormality residual `|Q^T Q - I|_F`.
pub(crate) fn orth_residual(q: &DMatrix<f64>) -> f64 {
    let k = q.ncols();
    (q.transpose() * q - DMatrix::identity(k, k)).norm()
}
