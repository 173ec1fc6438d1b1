//! Concrete cost models: masked matrix completion and a dense quadratic test
//! cost, plus the synthetic problem generator and its file container.
//!
//! The completion cost is `f(X) = 0.5 |(X - A) o Mask|_F^2` with gradient
//! `(X - A) o Mask` and Hessian `Xdot -> Xdot o Mask`. Both stay sparse when
//! the mask is sparse; all products below sweep the mask entries once,
//! costing `O(nnz * r)`.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::{CostModel, DenseCost, FactoredMatrix};
use crate::error::{Error, Result};
use crate::geometry::AmbientOps;
use crate::linalg;

/// Sorted, deduplicated set of observed positions, stored as parallel
/// row/column index arrays in row-major order for a cache-friendly sweep.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseMask {
    m: usize,
    n: usize,
    rows: Vec<u64>,
    cols: Vec<u64>,
}

impl SparseMask {
    /// Builds a mask from arbitrary `(i, j)` pairs: validates bounds, sorts
    /// row-major, removes duplicates.
    pub fn from_entries(m: usize, n: usize, mut entries: Vec<(u64, u64)>) -> Result<Self> {
        for &(i, j) in &entries {
            if i >= m as u64 || j >= n as u64 {
                return Err(Error::MaskIndexOutOfRange { i, j, m, n });
            }
        }
        entries.sort_unstable();
        entries.dedup();
        let rows = entries.iter().map(|&(i, _)| i).collect();
        let cols = entries.iter().map(|&(_, j)| j).collect();
        Ok(Self { m, n, rows, cols })
    }

    /// Every position of an `m x n` matrix.
    pub fn full(m: usize, n: usize) -> Self {
        let mut rows = Vec::with_capacity(m * n);
        let mut cols = Vec::with_capacity(m * n);
        for i in 0..m as u64 {
            for j in 0..n as u64 {
                rows.push(i);
                cols.push(j);
            }
        }
        Self { m, n, rows, cols }
    }

    pub fn nnz(&self) -> usize {
        self.rows.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .zip(&self.cols)
            .map(|(&i, &j)| (i as usize, j as usize))
    }
}

/// How the non-zero singular values of the target matrix are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SvSpec {
    /// Uniform in `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// `sigma_i = rho^(i-1)`, `i = 1..=r_star`.
    ExpDecay { rho: f64 },
}

impl SvSpec {
    fn sample<R: Rng + ?Sized>(&self, r_star: usize, rng: &mut R) -> DVector<f64> {
        match *self {
            SvSpec::Uniform { lo, hi } => {
                let mut vals: Vec<f64> =
                    (0..r_star).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
                vals.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
                DVector::from_vec(vals)
            }
            SvSpec::ExpDecay { rho } => {
                DVector::from_fn(r_star, |i, _| rho.powi(i as i32))
            }
        }
    }
}

/// Provenance of a generated problem (kept for reproducibility and written to
/// the file container).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMeta {
    pub r_star: usize,
    pub r: usize,
    pub oversampling: f64,
    pub sv_spec: SvSpec,
    pub seed: u64,
}

/// A masked matrix-completion instance: observe `A` at the mask positions,
/// fit a bounded-rank `X` by minimizing `0.5 |(X - A) o Mask|_F^2`.
#[derive(Clone, Debug)]
pub struct CompletionProblem {
    mask: SparseMask,
    observed: Vec<f64>,
    pub meta: Option<GeneratorMeta>,
}

impl CompletionProblem {
    pub fn new(mask: SparseMask, observed: Vec<f64>) -> Result<Self> {
        if observed.len() != mask.nnz() {
            return Err(Error::ObservationMismatch { observed: observed.len(), nnz: mask.nnz() });
        }
        Ok(Self { mask, observed, meta: None })
    }

    pub fn mask(&self) -> &SparseMask {
        &self.mask
    }

    pub fn observed(&self) -> &[f64] {
        &self.observed
    }

    /// Generates a synthetic instance. The target is `A = U_A Sigma_A V_A^T`
    /// with factors uniform on their Stiefel manifolds and singular values
    /// drawn per `sv_spec`; the mask holds `round(oversampling * (m + n - r) r)`
    /// positions sampled uniformly without replacement. Note the count uses
    /// the optimization rank `r`, not `r_star`.
    pub fn generate(
        m: usize,
        n: usize,
        r_star: usize,
        r: usize,
        oversampling: f64,
        sv_spec: SvSpec,
        seed: u64,
    ) -> Result<Self> {
        let cells = m * n;
        let nnz = (oversampling * ((m + n - r) * r) as f64).round() as usize;
        if nnz > cells {
            return Err(Error::OversampleTooLarge { nnz, cells });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u_a = linalg::random_stiefel(&mut rng, m, r_star);
        let v_a = linalg::random_stiefel(&mut rng, n, r_star);
        let sigma_a = sv_spec.sample(r_star, &mut rng);

        // Uniform sample without replacement over the (row-major) linear
        // indices, via a sparse Fisher-Yates shuffle.
        let mut swapped: HashMap<u64, u64> = HashMap::with_capacity(nnz);
        let cells = cells as u64;
        let mut entries = Vec::with_capacity(nnz);
        for t in 0..nnz as u64 {
            let j = rng.random_range(t..cells);
            let vt = *swapped.get(&t).unwrap_or(&t);
            let vj = *swapped.get(&j).unwrap_or(&j);
            swapped.insert(j, vt);
            let idx = vj;
            entries.push((idx / n as u64, idx % n as u64));
        }
        let mask = SparseMask::from_entries(m, n, entries)?;
        debug_assert_eq!(mask.nnz(), nnz);

        let u_scaled = linalg::scale_columns(&u_a, &sigma_a);
        let observed: Vec<f64> = mask
            .entries()
            .map(|(i, j)| u_scaled.row(i).dot(&v_a.row(j)))
            .collect();

        let mut problem = Self::new(mask, observed)?;
        problem.meta = Some(GeneratorMeta { r_star, r, oversampling, sv_spec, seed });
        Ok(problem)
    }

    /// Values of the factored matrix at the mask positions.
    fn masked_values(&self, x: &FactoredMatrix) -> Vec<f64> {
        let mut vals = vec![0.0f64; self.mask.nnz()];
        for (a, b) in &x.terms {
            let k = a.ncols();
            for (e, (i, j)) in self.mask.entries().enumerate() {
                let mut acc = 0.0;
                for c in 0..k {
                    acc += a[(i, c)] * b[(j, c)];
                }
                vals[e] += acc;
            }
        }
        vals
    }

    /// Masked residual `(X - A) o Mask` as entry values.
    fn residual_values(&self, x: &FactoredMatrix) -> Vec<f64> {
        let mut vals = self.masked_values(x);
        for (v, a) in vals.iter_mut().zip(&self.observed) {
            *v -= a;
        }
        vals
    }

    /// `R * w` for the sparse matrix with values `vals` at the mask entries.
    fn sparse_times(&self, vals: &[f64], w: &DMatrix<f64>) -> DMatrix<f64> {
        let k = w.ncols();
        let mut out = DMatrix::zeros(self.mask.m, k);
        for (e, (i, j)) in self.mask.entries().enumerate() {
            let r = vals[e];
            for c in 0..k {
                out[(i, c)] += r * w[(j, c)];
            }
        }
        out
    }

    /// `R^T * b`.
    fn sparse_t_times(&self, vals: &[f64], b: &DMatrix<f64>) -> DMatrix<f64> {
        let k = b.ncols();
        let mut out = DMatrix::zeros(self.mask.n, k);
        for (e, (i, j)) in self.mask.entries().enumerate() {
            let r = vals[e];
            for c in 0..k {
                out[(j, c)] += r * b[(i, c)];
            }
        }
        out
    }

    /// The gradient at `x` as a structured ambient element `(Y, 0)`: `Y` is
    /// the sparse masked residual, applied through its products and never
    /// materialized densely.
    pub fn gradient_ambient_ops<'a>(&'a self, x: &FactoredMatrix) -> SparseResidualOps<'a> {
        SparseResidualOps { problem: self, vals: self.residual_values(x) }
    }
}

/// Structured `(Y, Z) = ((X - A) o Mask, 0)` exposing only the products the
/// tangent projection needs.
pub struct SparseResidualOps<'a> {
    problem: &'a CompletionProblem,
    vals: Vec<f64>,
}

impl AmbientOps for SparseResidualOps<'_> {
    fn y_times(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        self.problem.sparse_times(&self.vals, a)
    }

    fn yt_times(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.problem.sparse_t_times(&self.vals, b)
    }

    fn z_times(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.problem.mask.n, a.ncols())
    }
}

impl CostModel for CompletionProblem {
    fn dims(&self) -> (usize, usize) {
        self.mask.shape()
    }

    fn value(&self, x: &FactoredMatrix) -> f64 {
        0.5 * self.residual_values(x).iter().map(|r| r * r).sum::<f64>()
    }

    fn grad_right(&self, x: &FactoredMatrix, a: &DMatrix<f64>) -> DMatrix<f64> {
        self.sparse_times(&self.residual_values(x), a)
    }

    fn grad_left(&self, x: &FactoredMatrix, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.sparse_t_times(&self.residual_values(x), b)
    }

    fn hess_right(
        &self,
        _x: &FactoredMatrix,
        xdot: &FactoredMatrix,
        a: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        self.sparse_times(&self.masked_values(xdot), a)
    }

    fn hess_left(
        &self,
        _x: &FactoredMatrix,
        xdot: &FactoredMatrix,
        b: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        self.sparse_t_times(&self.masked_values(xdot), b)
    }

    fn hess_op_norm(&self, _x: &FactoredMatrix) -> f64 {
        // The Hessian is the orthogonal projection onto the mask support.
        if self.mask.nnz() > 0 {
            1.0
        } else {
            0.0
        }
    }
}

impl DenseCost for CompletionProblem {
    fn grad_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let (m, n) = self.mask.shape();
        let mut out = DMatrix::zeros(m, n);
        for (e, (i, j)) in self.mask.entries().enumerate() {
            out[(i, j)] = x[(i, j)] - self.observed[e];
        }
        out
    }

    fn hess_apply_dense(&self, _x: &DMatrix<f64>, xdot: &DMatrix<f64>) -> DMatrix<f64> {
        let (m, n) = self.mask.shape();
        let mut out = DMatrix::zeros(m, n);
        for (i, j) in self.mask.entries() {
            out[(i, j)] = xdot[(i, j)];
        }
        out
    }
}

/// Dense quadratic test cost `f(X) = 0.5 |X - A|_F^2`, with gradient `X - A`
/// and identity Hessian. Desk scale: the target is held densely.
#[derive(Clone, Debug)]
pub struct QuadraticCost {
    target: DMatrix<f64>,
}

impl QuadraticCost {
    pub fn new(target: DMatrix<f64>) -> Self {
        Self { target }
    }

    pub fn target(&self) -> &DMatrix<f64> {
        &self.target
    }
}

impl CostModel for QuadraticCost {
    fn dims(&self) -> (usize, usize) {
        self.target.shape()
    }

    fn value(&self, x: &FactoredMatrix) -> f64 {
        0.5 * (x.to_dense() - &self.target).norm_squared()
    }

    fn grad_right(&self, x: &FactoredMatrix, a: &DMatrix<f64>) -> DMatrix<f64> {
        x.times(a) - &self.target * a
    }

    fn grad_left(&self, x: &FactoredMatrix, b: &DMatrix<f64>) -> DMatrix<f64> {
        x.t_times(b) - self.target.transpose() * b
    }

    fn hess_right(
        &self,
        _x: &FactoredMatrix,
        xdot: &FactoredMatrix,
        a: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        xdot.times(a)
    }

    fn hess_left(
        &self,
        _x: &FactoredMatrix,
        xdot: &FactoredMatrix,
        b: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        xdot.t_times(b)
    }

    fn hess_op_norm(&self, _x: &FactoredMatrix) -> f64 {
        1.0
    }
}

impl DenseCost for QuadraticCost {
    fn grad_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x - &self.target
    }

    fn hess_apply_dense(&self, _x: &DMatrix<f64>, xdot: &DMatrix<f64>) -> DMatrix<f64> {
        xdot.clone()
    }
}

const PROBLEM_FORMAT: &str = "completion-problem/v1";

/// On-disk container for a completion problem. JSON with self-describing
/// fields; `f64` values round-trip exactly through the shortest-decimal
/// encoding.
#[derive(Serialize, Deserialize)]
struct ProblemFile {
    format: String,
    m: usize,
    n: usize,
    mask: Vec<(u64, u64)>,
    observed: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<GeneratorMeta>,
}

impl CompletionProblem {
    pub fn to_json(&self) -> Result<String> {
        let file = ProblemFile {
            format: PROBLEM_FORMAT.to_string(),
            m: self.mask.m,
            n: self.mask.n,
            mask: self.mask.rows.iter().copied().zip(self.mask.cols.iter().copied()).collect(),
            observed: self.observed.clone(),
            meta: self.meta.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProblemFile = serde_json::from_str(text)?;
        if file.format != PROBLEM_FORMAT {
            return Err(Error::UnknownFormat(file.format));
        }
        let mask = SparseMask::from_entries(file.m, file.n, file.mask)?;
        let mut problem = Self::new(mask, file.observed)?;
        problem.meta = file.meta;
        Ok(problem)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{self, ManifoldDims};
    use approx::assert_relative_eq;

    fn factored_point(m: usize, n: usize, r: usize, seed: u64) -> FactoredMatrix {
        let pt = manifold::random_point_in(ManifoldDims::new(m, n, r).unwrap(), (0.5, 1.5), seed);
        FactoredMatrix::from_point(&pt)
    }

    #[test]
    fn value_vanishes_on_the_target() {
        let pt = manifold::random_point_in(ManifoldDims::new(8, 7, 2).unwrap(), (0.5, 1.5), 1);
        let x = FactoredMatrix::from_point(&pt);
        let dense = pt.to_dense().0;
        let mask = SparseMask::from_entries(8, 7, vec![(0, 0), (3, 2), (7, 6)]).unwrap();
        let observed: Vec<f64> =
            mask.entries().map(|(i, j)| dense[(i, j)]).collect();
        let problem = CompletionProblem::new(mask, observed).unwrap();
        assert_eq!(problem.value(&x), 0.0);
        assert_eq!(problem.grad_right(&x, &DMatrix::identity(7, 7)).norm(), 0.0);
    }

    #[test]
    fn full_mask_matches_dense_cost() {
        let x = factored_point(6, 5, 2, 2);
        let target = factored_point(6, 5, 2, 3).to_dense();
        let mask = SparseMask::full(6, 5);
        let observed: Vec<f64> = mask.entries().map(|(i, j)| target[(i, j)]).collect();
        let problem = CompletionProblem::new(mask, observed).unwrap();
        let dense_value = 0.5 * (x.to_dense() - &target).norm_squared();
        assert_relative_eq!(problem.value(&x), dense_value, epsilon = 1e-12 * (1.0 + dense_value));

        // Gradient products match the dense residual.
        let w = DMatrix::identity(5, 5);
        let dense_grad = x.to_dense() - &target;
        assert!((problem.grad_right(&x, &w) - &dense_grad).norm() <= 1e-12 * dense_grad.norm());
    }

    #[test]
    fn single_entry_arithmetic() {
        let mask = SparseMask::from_entries(2, 2, vec![(0, 0)]).unwrap();
        let problem = CompletionProblem::new(mask, vec![1.0]).unwrap();
        // X with x00 = 2.
        let x = FactoredMatrix::from_term(
            DMatrix::from_column_slice(2, 1, &[2.0, 0.0]),
            DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
        );
        assert_eq!(problem.value(&x), 0.5);
    }

    #[test]
    fn hessian_quadratic_form_equals_masked_sum_of_squares() {
        let m = 7;
        let n = 6;
        let mask = SparseMask::from_entries(
            m,
            n,
            vec![(0, 1), (2, 3), (4, 0), (6, 5), (3, 3)],
        )
        .unwrap();
        let observed = vec![0.0; mask.nnz()];
        let problem = CompletionProblem::new(mask, observed).unwrap();
        let x = factored_point(m, n, 2, 5);
        let xdot = factored_point(m, n, 2, 6);
        // <Xdot, hess f[Xdot]> must equal the masked sum of squared entries.
        let hd = problem.hess_right(&x, &xdot, &DMatrix::identity(n, n));
        let quad = hd.dot(&xdot.to_dense());
        let dense = xdot.to_dense();
        let direct: f64 = problem.mask.entries().map(|(i, j)| dense[(i, j)].powi(2)).sum();
        assert_relative_eq!(quad, direct, epsilon = 1e-12 * (1.0 + direct));
    }

    #[test]
    fn grad_products_are_adjoint() {
        let m = 9;
        let n = 8;
        let problem =
            CompletionProblem::generate(m, n, 2, 3, 1.2, SvSpec::Uniform { lo: 0.5, hi: 1.0 }, 4)
                .unwrap();
        let x = factored_point(m, n, 3, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let a = linalg::gaussian_matrix(&mut rng, n, 2);
            let b = linalg::gaussian_matrix(&mut rng, m, 2);
            let lhs = b.dot(&problem.grad_right(&x, &a));
            let rhs = problem.grad_left(&x, &b).dot(&a);
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn generator_counts_and_reproducibility() {
        // nnz = oversampling * (m + n - r) * r.
        let p =
            CompletionProblem::generate(100, 100, 10, 10, 5.0, SvSpec::Uniform { lo: 0.5, hi: 1.0 }, 0)
                .unwrap();
        assert_eq!(p.mask().nnz(), 9500);
        let (m, n) = p.mask().shape();
        for (i, j) in p.mask().entries() {
            assert!(i < m && j < n);
        }
        // Sorted row-major without duplicates.
        let entries: Vec<(usize, usize)> = p.mask().entries().collect();
        for w in entries.windows(2) {
            assert!(w[0] < w[1]);
        }

        let q =
            CompletionProblem::generate(100, 100, 10, 10, 5.0, SvSpec::Uniform { lo: 0.5, hi: 1.0 }, 0)
                .unwrap();
        assert_eq!(p.mask(), q.mask());
        assert_eq!(p.observed(), q.observed());

        let err = CompletionProblem::generate(
            10,
            10,
            2,
            5,
            10.0,
            SvSpec::Uniform { lo: 0.5, hi: 1.0 },
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::OversampleTooLarge { .. }));
    }

    #[test]
    fn expdecay_singular_values() {
        let p = CompletionProblem::generate(
            60,
            60,
            20,
            20,
            1.5,
            SvSpec::ExpDecay { rho: 0.9 },
            3,
        )
        .unwrap();
        let meta = p.meta.as_ref().unwrap();
        assert_eq!(meta.sv_spec, SvSpec::ExpDecay { rho: 0.9 });
        // Reconstruct the sampled values through a fresh generator stream.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let _ = linalg::random_stiefel(&mut rng, 60, 20);
        let _ = linalg::random_stiefel(&mut rng, 60, 20);
        let sigma = SvSpec::ExpDecay { rho: 0.9 }.sample(20, &mut rng);
        for i in 0..20 {
            assert_relative_eq!(sigma[i], 0.9f64.powi(i as i32), epsilon = 1e-15);
        }
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let p =
            CompletionProblem::generate(30, 25, 3, 4, 3.0, SvSpec::ExpDecay { rho: 0.9 }, 11)
                .unwrap();
        let text = p.to_json().unwrap();
        let q = CompletionProblem::from_json(&text).unwrap();
        assert_eq!(p.mask(), q.mask());
        assert_eq!(p.observed(), q.observed());
        assert_eq!(p.meta, q.meta);

        let bad = CompletionProblem::from_json("{\"format\":\"nope\",\"m\":1,\"n\":1,\"mask\":[],\"observed\":[]}");
        assert!(matches!(bad.unwrap_err(), Error::UnknownFormat(_)));
    }
}
