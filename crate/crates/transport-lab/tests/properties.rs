//! Property-based invariants over randomized inputs.

use proptest::prelude::*;
use transport_lab::drift::DriftField;
use transport_lab::geometry::{Classification, Domain};
use transport_lab::pt;
use transport_lab::solver::{BoundaryDatum, InitialDatum, TransportProblem};
use transport_lab::stochastic::{
    covariation_with_brownian, ito_integral, stratonovich_integral, AdaptedSamplePath,
    BrownianPath,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // projection/distance/classification consistency on the disk
    #[test]
    fn disk_projection_consistency(r in 0.0f64..0.98, theta in 0.0f64..std::f64::consts::TAU) {
        let disk = Domain::disk([0.0, 0.0], 1.0);
        let x = [r * theta.cos(), r * theta.sin(), 0.0];
        prop_assert_eq!(disk.contains(x), Classification::Interior);
        let bp = disk.boundary_project(x).unwrap();
        let dist = disk.distance_to_boundary(x).unwrap();
        prop_assert!((pt::dist(bp.position, x) - dist).abs() < 1e-9);
        prop_assert!((pt::norm(bp.normal) - 1.0).abs() < 1e-12);
        prop_assert!(disk.phi(bp.position).abs() <= disk.boundary_tol());
    }

    // discrete Stratonovich = Itô + covariation/2, for arbitrary seeds,
    // steps and cut times
    #[test]
    fn conversion_identity(seed in 0u64..1000, idx in 0u64..50, cut in 0.05f64..1.0) {
        let path = BrownianPath::sample(seed, idx, 1.0, 0.02, 1).unwrap();
        let x = AdaptedSamplePath::new(
            0.02,
            (0..=50).map(|k| (path.node(k)[0] * 1.3 - 0.2).cos()).collect(),
        );
        let s = stratonovich_integral(&x, &path, 0, cut).unwrap();
        let i = ito_integral(&x, &path, 0, cut).unwrap();
        let c = covariation_with_brownian(&x, &path, 0, cut).unwrap();
        prop_assert!((s - i - 0.5 * c).abs() < 1e-12);
    }

    // ordering of the data induces pathwise ordering of solutions
    #[test]
    fn solver_monotonicity(lo in -1.0f64..1.0, gap in 0.0f64..1.0, seed in 0u64..200) {
        let make = |c: f64| {
            TransportProblem::new(
                Domain::interval(0.0, 1.0),
                DriftField::constant(1, &[1.0]),
                0.5,
                InitialDatum::Constant { value: c },
                BoundaryDatum::Constant { value: c - 0.1 },
                true,
            )
            .unwrap()
        };
        let a = make(lo);
        let b = make(lo + gap);
        let path = a.driving_path(seed, 0, 0.01).unwrap();
        let va = a.evaluate_pathwise(&path, 0.5, [0.5, 0.0, 0.0]).unwrap();
        let vb = b.evaluate_pathwise(&path, 0.5, [0.5, 0.0, 0.0]).unwrap();
        prop_assert!(va <= vb + 1e-15);
    }

    // flux parts are complementary for random directions and fields
    #[test]
    fn flux_jordan_decomposition(theta in 0.0f64..std::f64::consts::TAU, vx in -2.0f64..2.0, vy in -2.0f64..2.0) {
        let disk = Domain::disk([0.0, 0.0], 1.0);
        let bp = disk
            .boundary_project([0.9 * theta.cos(), 0.9 * theta.sin(), 0.0])
            .unwrap();
        let field = DriftField::constant(2, &[vx, vy]);
        let f = field.flux_decomposition(0.0, &bp);
        prop_assert!((f.flux - (f.positive_part - f.negative_part)).abs() < 1e-12);
        prop_assert!(f.positive_part >= 0.0 && f.negative_part >= 0.0);
        prop_assert!(f.positive_part * f.negative_part == 0.0);
        prop_assert_eq!(f.influx, f.flux < 0.0);
    }
}
