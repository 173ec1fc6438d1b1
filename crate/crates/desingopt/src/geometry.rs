//! The metric family, norms, and orthogonal projection onto tangent spaces.
//!
//! The embedding space carries the inner product
//! `<(Y1, Z1), (Y2, Z2)> = <Y1, Y2> + alpha <Z1, Z2>` for a parameter
//! `alpha > 0`. Restricted to tangent vectors `(K, Vp)` it reduces to
//! `<K1, K2> + <Vp1, Vp2 S>` where `S = 2 alpha I + Sigma^2` is diagonal, so
//! inner products cost `O((m + n) r)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg;
use crate::manifold::{AmbientVector, ManifoldPoint, MetricParam, TangentVector};

/// The diagonal weight `S = 2 alpha I + Sigma^2` applied to the `Vp` block.
/// Every entry is at least `2 alpha > 0`, so `S` is always invertible and its
/// inverse is applied as a reciprocal of a length-`r` vector; no `r x r`
/// matrix is ever formed or factored.
#[derive(Clone, Debug)]
pub struct SFactor {
    diag: DVector<f64>,
}

impl SFactor {
    pub fn diag(&self) -> &DVector<f64> {
        &self.diag
    }

    /// `mat * S` (scales column `j` by `S_j`).
    pub fn apply_columns(&self, mat: &DMatrix<f64>) -> DMatrix<f64> {
        linalg::scale_columns(mat, &self.diag)
    }

    /// `mat * S^{-1}` (divides column `j` by `S_j`).
    pub fn apply_inv_columns(&self, mat: &DMatrix<f64>) -> DMatrix<f64> {
        linalg::divide_columns(mat, &self.diag)
    }
}

/// Computes `S = 2 alpha I + Sigma^2` at a point.
pub fn sfactor(pt: &ManifoldPoint, metric: MetricParam) -> SFactor {
    let two_alpha = 2.0 * metric.alpha();
    let diag = DVector::from_iterator(
        pt.sigma().len(),
        pt.sigma().iter().map(|&s| two_alpha + s * s),
    );
    SFactor { diag }
}

/// Inner product of two tangent vectors at `pt`:
/// `<K1, K2> + sum_j S_j <Vp1[:, j], Vp2[:, j]>`.
pub fn inner(pt: &ManifoldPoint, t1: &TangentVector, t2: &TangentVector, metric: MetricParam) -> f64 {
    let s = sfactor(pt, metric);
    let mut acc = t1.k.dot(&t2.k);
    for j in 0..s.diag.len() {
        acc += s.diag[j] * t1.vp.column(j).dot(&t2.vp.column(j));
    }
    acc
}

/// Norm induced by [`inner`].
pub fn norm(pt: &ManifoldPoint, t: &TangentVector, metric: MetricParam) -> f64 {
    inner(pt, t, t, metric).max(0.0).sqrt()
}

/// Access to an ambient element `(Y, Z)` through the three products the
/// tangent projection needs. Structured gradients (sparse residuals, low-rank
/// terms) implement this without ever materializing `Y` densely; the dense
/// [`AmbientVector`] implementation exists for desk-scale use.
pub trait AmbientOps {
    /// `Y * a` for an `n x k` block.
    fn y_times(&self, a: &DMatrix<f64>) -> DMatrix<f64>;
    /// `Y^T * b` for an `m x k` block.
    fn yt_times(&self, b: &DMatrix<f64>) -> DMatrix<f64>;
    /// `Z * a` for an `n x k` block.
    fn z_times(&self, a: &DMatrix<f64>) -> DMatrix<f64>;
}

impl AmbientOps for AmbientVector {
    fn y_times(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        &self.y * a
    }

    fn yt_times(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.y.transpose() * b
    }

    fn z_times(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        &self.z * a
    }
}

/// Orthogonal projection of an ambient element onto the tangent space at
/// `pt`, in the metric `alpha`. The representation of the projection is
///
/// ```text
/// K  = Y V,
/// Vp = P (Y^T U Sigma - 2 alpha Z V) S^{-1}.
/// ```
///
/// `P w` is computed as `w - V (V^T w)`. Idempotent and self-adjoint with
/// respect to the metric.
pub fn project(pt: &ManifoldPoint, amb: &impl AmbientOps, metric: MetricParam) -> TangentVector {
    let s = sfactor(pt, metric);
    let k = amb.y_times(pt.v());
    let mut w = linalg::scale_columns(&amb.yt_times(pt.u()), pt.sigma());
    w -= 2.0 * metric.alpha() * amb.z_times(pt.v());
    let w = pt.apply_projector(&w);
    TangentVector { k, vp: s.apply_inv_columns(&w) }
}

/// Inner product of two dense ambient elements: `<Y1, Y2> + alpha <Z1, Z2>`.
pub fn ambient_inner(a: &AmbientVector, b: &AmbientVector, metric: MetricParam) -> f64 {
    a.y.dot(&b.y) + metric.alpha() * a.z.dot(&b.z)
}

/// Norm induced by [`ambient_inner`].
pub fn ambient_norm(a: &AmbientVector, metric: MetricParam) -> f64 {
    ambient_inner(a, a, metric).max(0.0).sqrt()
}

/// Samples a random element of the normal space at `pt`. The normal space is
/// parameterized by matrices `(A, B, C, D, E)` with `C = C^T`, `E = E^T` and
/// the coupling `Sigma A = 2 alpha D`:
///
/// ```text
/// G = U A Vperp^T + Uperp B Vperp^T,
/// H = V C V^T + Vperp D^T V^T + V D Vperp^T + Vperp E Vperp^T.
/// ```
///
/// `D` is drawn freely; `A` is recovered through the pseudo-inverse of
/// `Sigma`, so rows with a vanishing singular value force the corresponding
/// rows of both `A` and `D` to zero. Dense; desk scale only.
pub fn normal_basis_sample(pt: &ManifoldPoint, metric: MetricParam, seed: u64) -> AmbientVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_normal(pt, metric, &mut rng)
}

/// See [`normal_basis_sample`]; this variant uses a caller-provided generator.
pub fn sample_normal<R: Rng + ?Sized>(
    pt: &ManifoldPoint,
    metric: MetricParam,
    rng: &mut R,
) -> AmbientVector {
    let dims = pt.dims();
    let (m, n, r) = (dims.m, dims.n, dims.r);
    let u_perp = linalg::orthonormal_completion(pt.u());
    let v_perp = linalg::orthonormal_completion(pt.v());
    let two_alpha = 2.0 * metric.alpha();

    let d_raw = linalg::gaussian_matrix(rng, r, n - r);
    let sigma_floor = 1e-12 * (1.0 + pt.sigma()[0]);
    let mut a = DMatrix::zeros(r, n - r);
    let mut d = DMatrix::zeros(r, n - r);
    for i in 0..r {
        let s = pt.sigma()[i];
        if s > sigma_floor {
            for j in 0..(n - r) {
                a[(i, j)] = two_alpha * d_raw[(i, j)] / s;
                d[(i, j)] = d_raw[(i, j)];
            }
        }
    }

    let b = linalg::gaussian_matrix(rng, m - r, n - r);
    let c_raw = linalg::gaussian_matrix(rng, r, r);
    let c = (&c_raw + c_raw.transpose()) * 0.5;
    let e_raw = linalg::gaussian_matrix(rng, n - r, n - r);
    let e = (&e_raw + e_raw.transpose()) * 0.5;

    let g = pt.u() * &a * v_perp.transpose() + &u_perp * &b * v_perp.transpose();
    let h = pt.v() * &c * pt.v().transpose()
        + &v_perp * d.transpose() * pt.v().transpose()
        + pt.v() * &d * v_perp.transpose()
        + &v_perp * &e * v_perp.transpose();
    AmbientVector { y: g, z: h }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{self, ManifoldDims};
    use approx::assert_relative_eq;
    use rand_chacha::ChaCha8Rng;

    fn metric(alpha: f64) -> MetricParam {
        MetricParam::new(alpha).unwrap()
    }

    fn point(m: usize, n: usize, r: usize, seed: u64) -> ManifoldPoint {
        manifold::random_point_in(ManifoldDims::new(m, n, r).unwrap(), (0.0, 2.0), seed)
    }

    #[test]
    fn sfactor_values() {
        let dims = ManifoldDims::new(4, 4, 2).unwrap();
        let mut pt = manifold::random_point(dims, 0);
        // Rebuild with prescribed sigma.
        pt = ManifoldPoint::from_factors(
            pt.u().clone(),
            DVector::from_vec(vec![2.0, 1.0]),
            pt.v().clone(),
        )
        .unwrap();
        let s = sfactor(&pt, metric(0.5));
        assert_eq!(s.diag().as_slice(), &[5.0, 2.0]);

        let pt0 = ManifoldPoint::from_factors(
            pt.u().clone(),
            DVector::from_vec(vec![0.0, 0.0]),
            pt.v().clone(),
        )
        .unwrap();
        let s0 = sfactor(&pt0, metric(1.0));
        assert_eq!(s0.diag().as_slice(), &[2.0, 2.0]);

        let dims1 = ManifoldDims::new(3, 3, 1).unwrap();
        let pt1 = manifold::random_point(dims1, 1);
        let pt1 = ManifoldPoint::from_factors(
            pt1.u().clone(),
            DVector::from_vec(vec![1.0]),
            pt1.v().clone(),
        )
        .unwrap();
        let s1 = sfactor(&pt1, metric(0.05));
        assert_relative_eq!(s1.diag()[0], 1.1, epsilon = 1e-15);
    }

    #[test]
    fn inner_trivial_cases() {
        let pt = point(3, 3, 1, 2);
        let pt = ManifoldPoint::from_factors(
            pt.u().clone(),
            DVector::from_vec(vec![1.0]),
            pt.v().clone(),
        )
        .unwrap();
        // K = e11 only.
        let mut k = DMatrix::zeros(3, 1);
        k[(0, 0)] = 1.0;
        let t = TangentVector { k, vp: DMatrix::zeros(3, 1) };
        assert_relative_eq!(inner(&pt, &t, &t, metric(0.5)), 1.0, epsilon = 1e-15);
        assert_relative_eq!(norm(&pt, &t, metric(0.5)), 1.0, epsilon = 1e-15);

        // K = 0, Vp a unit column orthogonal to V, Sigma = [1], alpha = 1/2
        // gives S = [2].
        let u_col = linalg::orthonormal_completion(pt.v()).column(0).into_owned();
        let t2 = TangentVector {
            k: DMatrix::zeros(3, 1),
            vp: DMatrix::from_column_slice(3, 1, u_col.as_slice()),
        };
        assert_relative_eq!(inner(&pt, &t2, &t2, metric(0.5)), 2.0, epsilon = 1e-14);

        let zero = TangentVector::zero(&pt);
        assert_eq!(norm(&pt, &zero, metric(0.5)), 0.0);
    }

    #[test]
    fn inner_matches_ambient_oracle() {
        let pt = point(8, 7, 3, 4);
        for alpha in [0.05, 0.5, 5.0] {
            let met = metric(alpha);
            for seed in 0..5 {
                let t1 = manifold::random_tangent(&pt, met, 100 + seed);
                let t2 = manifold::random_tangent(&pt, met, 200 + seed);
                let a1 = manifold::tangent_to_ambient(&pt, &t1);
                let a2 = manifold::tangent_to_ambient(&pt, &t2);
                let lhs = inner(&pt, &t1, &t2, met);
                let rhs = ambient_inner(&a1, &a2, met);
                assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs().max(rhs.abs())));
                let nl = norm(&pt, &t1, met);
                let nr = ambient_norm(&a1, met);
                assert!((nl - nr).abs() <= 1e-12 * (1.0 + nr));
            }
        }
    }

    #[test]
    fn projection_is_identity_on_tangent_images() {
        let pt = point(9, 8, 3, 6);
        let met = metric(0.5);
        let t = manifold::random_tangent(&pt, met, 31);
        let amb = manifold::tangent_to_ambient(&pt, &t);
        let back = project(&pt, &amb, met);
        assert!((&back.k - &t.k).norm() <= 1e-12 * (1.0 + t.k.norm()));
        assert!((&back.vp - &t.vp).norm() <= 1e-12 * (1.0 + t.vp.norm()));
    }

    #[test]
    fn normal_samples_project_to_zero_and_are_orthogonal() {
        let pt = point(8, 7, 2, 8);
        for alpha in [0.05, 0.5, 5.0] {
            let met = metric(alpha);
            let nrm = normal_basis_sample(&pt, met, 99);
            let proj = project(&pt, &nrm, met);
            let scale = ambient_norm(&nrm, met);
            assert!(norm(&pt, &proj, met) <= 1e-12 * (1.0 + scale));
            for seed in 0..50 {
                let t = manifold::random_tangent(&pt, met, 500 + seed);
                let amb = manifold::tangent_to_ambient(&pt, &t);
                let ip = ambient_inner(&amb, &nrm, met);
                assert!(ip.abs() <= 1e-12 * (1.0 + scale * ambient_norm(&amb, met)));
            }
        }
    }

    #[test]
    fn normal_sample_with_zero_sigma_forces_a_zero() {
        let dims = ManifoldDims::new(7, 6, 2).unwrap();
        let base = manifold::random_point(dims, 3);
        let pt = ManifoldPoint::from_factors(
            base.u().clone(),
            DVector::from_vec(vec![0.0, 0.0]),
            base.v().clone(),
        )
        .unwrap();
        let met = metric(0.5);
        let nrm = normal_basis_sample(&pt, met, 7);
        // A = U^T G Vperp must vanish when Sigma = 0.
        let v_perp = linalg::orthonormal_completion(pt.v());
        let a = pt.u().transpose() * &nrm.y * &v_perp;
        assert!(a.norm() <= 1e-14);
        // And the sample is still normal.
        let proj = project(&pt, &nrm, met);
        assert!(norm(&pt, &proj, met) <= 1e-12 * (1.0 + ambient_norm(&nrm, met)));
    }

    #[test]
    fn projection_is_idempotent_and_pythagorean() {
        let pt = point(8, 8, 2, 10);
        let met = metric(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let y = linalg::gaussian_matrix(&mut rng, 8, 8);
            let z_raw = linalg::gaussian_matrix(&mut rng, 8, 8);
            let z = (&z_raw + z_raw.transpose()) * 0.5;
            let amb = AmbientVector::new(y, z).unwrap();
            let t = project(&pt, &amb, met);
            let t2 = project(&pt, &manifold::tangent_to_ambient(&pt, &t), met);
            assert!((&t2.k - &t.k).norm() <= 1e-12 * (1.0 + t.k.norm()));
            assert!((&t2.vp - &t.vp).norm() <= 1e-12 * (1.0 + t.vp.norm()));

            // |amb|^2 = |proj|^2 + |amb - proj|^2.
            let timg = manifold::tangent_to_ambient(&pt, &t);
            let resid = AmbientVector {
                y: &amb.y - &timg.y,
                z: &amb.z - &timg.z,
            };
            let lhs = ambient_norm(&amb, met).powi(2);
            let rhs = norm(&pt, &t, met).powi(2) + ambient_norm(&resid, met).powi(2);
            assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs));
        }
    }
}
