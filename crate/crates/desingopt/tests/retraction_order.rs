//! Retraction order checks: base-point axiom, first-order Taylor slopes for
//! all three retractions, and the second-difference acceleration oracle that
//! separates the second-order retractions from the Q-factor one.

use desingopt::checks;
use desingopt::manifold::{self, ManifoldDims, MetricParam};
use desingopt::retraction::{intrinsic_acceleration_residual, RetractionKind};

const KINDS: [RetractionKind; 3] = [
    RetractionKind::QFactor,
    RetractionKind::MetricProjection,
    RetractionKind::Polar,
];

#[test]
fn base_point_axiom_and_first_order_slopes() {
    let dims = ManifoldDims::new(10, 9, 2).unwrap();
    let metric = MetricParam::new(0.5).unwrap();
    for seed in 0..5 {
        let pt = manifold::random_point_in(dims, (0.0, 2.0), seed);
        let t = manifold::random_tangent(&pt, metric, 100 + seed);
        for kind in KINDS {
            let zero = checks::retraction_zero_residual(&pt, &t, metric, kind);
            assert!(zero <= 1e-12, "{kind}: |R(0) - pt| = {zero:.3e}");
            let slope = checks::retraction_first_order_slope(&pt, &t, metric, kind)
                .expect("enough usable grid points");
            assert!(slope >= 1.9, "{kind}: first-order slope {slope:.3}");
        }
    }
}

#[test]
fn second_order_retractions_have_vanishing_acceleration() {
    let dims = ManifoldDims::new(9, 8, 2).unwrap();
    let metric = MetricParam::new(0.5).unwrap();
    for seed in 0..25 {
        let pt = manifold::random_point_in(dims, (0.2, 2.0), seed);
        let t = manifold::random_tangent(&pt, metric, 500 + seed);
        let t = t.scaled(if seed % 2 == 0 { 1.0 } else { 1.7 });
        let bound = {
            let nrm = desingopt::geometry::norm(&pt, &t, metric);
            1e-5 * (1.0 + nrm * nrm)
        };
        for kind in [RetractionKind::Polar, RetractionKind::MetricProjection] {
            let res = intrinsic_acceleration_residual(&pt, &t, metric, kind);
            assert!(res <= bound, "{kind} seed {seed}: residual {res:.3e} > {bound:.3e}");
        }
    }
}

#[test]
fn qfactor_acceleration_does_not_vanish() {
    // The Q-factor retraction is first order only: with K != 0 and a
    // non-trivial Vp its initial acceleration has a tangent component.
    let dims = ManifoldDims::new(9, 8, 2).unwrap();
    let metric = MetricParam::new(0.5).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let pt = manifold::random_point_in(dims, (0.5, 2.0), seed);
        let t = manifold::random_tangent(&pt, metric, 900 + seed);
        let res = intrinsic_acceleration_residual(&pt, &t, metric, RetractionKind::QFactor);
        worst = worst.max(res);
    }
    assert!(worst > 1e-3, "largest Q-factor acceleration residual {worst:.3e}");
}
