mod common;

use num_complex::Complex64;

use common::{coupled_standard, TorusOracle, GOLDEN, SILVER};
use pkam::diagnostics::{run_suite, SuiteOptions, Thresholds};
use pkam::diophantine::Frequency;
use pkam::fourier::{TorusEmbedding, Truncation};
use pkam::geometry::PresymplecticStructure;
use pkam::io::{torus_from_json, torus_to_json};
use pkam::models::{CoupledStandardFamily, FroeschleFamily, MapFamily};
use pkam::newton::{invariance_error, solve, SolveConfig};
use pkam::Error;

fn freq2() -> Frequency {
    Frequency::new(vec![GOLDEN, SILVER], None, 50).unwrap()
}

fn flat(radius: usize) -> TorusEmbedding {
    TorusEmbedding::flat(1, 1, Truncation::new(vec![radius, radius]), &[GOLDEN], 0.0).unwrap()
}

#[test]
fn twist_reduction_converges_with_only_the_drift_parameter() {
    let f = CoupledStandardFamily::new(0.25, 0.1, SILVER);
    let config = SolveConfig {
        parameter_mask: vec![false, false, true],
        ..SolveConfig::default()
    };
    let sol = solve(&flat(32), &[0.0; 3], &f, &PresymplecticStructure::standard(1, 1), &freq2(), &config).unwrap();
    assert!(sol.log.final_error <= 1e-12);
    assert_eq!(sol.lambda[0], 0.0);
    assert_eq!(sol.lambda[1], 0.0);
    assert!(sol.log.reports.iter().all(|r| r.action_average <= 1e-6 * r.err_before.max(1e-12)));

    // the same torus solves the map directly
    let oracle = TorusOracle::new(&sol.torus);
    for theta in [[0.1, 0.2], [0.77, 0.31], [0.5, 0.95]] {
        let image = coupled_standard(&oracle.eval(&theta), &sol.lambda, 0.25, 0.1, SILVER);
        let ahead = oracle.eval(&[theta[0] + GOLDEN, theta[1] + SILVER]);
        for (a, b) in image.iter().zip(&ahead) {
            assert!((a - b).abs() <= 1e-11);
        }
    }
}

/// With all parameters active, `lambda_x` and the mean action trade off and
/// the limit depends on the start; the twist-reduced solve pins both.
#[test]
fn perturbed_start_reaches_the_same_torus_up_to_phase() {
    let f = CoupledStandardFamily::new(0.2, 0.1, SILVER);
    let s = PresymplecticStructure::standard(1, 1);
    let config = SolveConfig {
        parameter_mask: vec![false, false, true],
        ..SolveConfig::default()
    };
    let base = solve(&flat(32), &[0.0; 3], &f, &s, &freq2(), &config).unwrap();
    let mut start = flat(32);
    start.periodic_mut().set_coeff(1, &[0, 1], Complex64::new(1e-3, 0.0));
    start.periodic_mut().set_coeff(1, &[0, -1], Complex64::new(1e-3, 0.0));
    start.periodic_mut().set_coeff(0, &[1, 0], Complex64::new(0.0, -2e-3));
    start.periodic_mut().set_coeff(0, &[-1, 0], Complex64::new(0.0, 2e-3));
    let other = solve(&start, &[0.0; 3], &f, &s, &freq2(), &config)
        .map_err(|e| e.to_string())
        .unwrap();
    assert!(other.log.final_error <= 1e-12);
    let frame = pkam::reducibility::TangentFrame::build(&base.torus, &s, &base.torus.truncation().padded_grid()).unwrap();
    let al = pkam::uniqueness::align_phase(&base.torus, &other.torus, &frame, &Default::default())
        .map_err(|e| e.to_string())
        .unwrap();
    assert!(al.residual() <= 1e-10, "residual {}", al.residual());
    for (a, b) in base.lambda.iter().zip(&other.lambda) {
        assert!((a - b).abs() <= 1e-10);
    }
}

#[test]
fn froeschle_torus_with_two_actions_is_certified() {
    let omega = vec![GOLDEN, SILVER, 0.324_717_957_244_746];
    let freq = Frequency::new(omega.clone(), None, 30).unwrap();
    let f = FroeschleFamily::new(0.05, 0.04, 0.01, 0.05, omega[2]);
    let s = PresymplecticStructure::standard(2, 1);
    let k = TorusEmbedding::flat(2, 1, Truncation::new(vec![8, 8, 8]), &omega[..2], 0.0).unwrap();
    let config = SolveConfig {
        target_error: 1e-11,
        ..SolveConfig::default()
    };
    let sol = solve(&k, &[0.0; 5], &f, &s, &freq, &config).unwrap();
    assert!(sol.log.final_error <= 1e-11);
    let active: Vec<usize> = (0..f.param_dim()).collect();
    let options = SuiteOptions {
        samples: 100,
        orbit_length: 100,
        flux_points: 64,
        presymplectic_samples: 100,
        seed: 1,
    };
    let report = run_suite(&sol.torus, &f, &sol.lambda, &s, &omega, &active, &options).unwrap();
    let thresholds = Thresholds {
        off_grid: 1e-9,
        ..Thresholds::default()
    };
    assert!(report.failures(&thresholds, true).is_empty(), "{:?}", report.failures(&thresholds, true));
    assert!(report.nondegeneracy.full_rank());
}

#[test]
fn stored_solution_keeps_its_invariance_error() {
    let f = CoupledStandardFamily::new(0.2, 0.1, SILVER);
    let sol = solve(&flat(24), &[0.0; 3], &f, &PresymplecticStructure::standard(1, 1), &freq2(), &SolveConfig::default()).unwrap();
    let text = torus_to_json(&sol.torus, Some(&sol.lambda), Some(&[GOLDEN, SILVER])).unwrap();
    let back = torus_from_json(&text).unwrap();
    let lambda = back.lambda.unwrap();
    assert_eq!(lambda, sol.lambda);
    let dims = back.torus.truncation().padded_grid();
    let before = invariance_error(&sol.torus, &f, &sol.lambda, &[GOLDEN, SILVER], &dims).unwrap();
    let after = invariance_error(&back.torus, &f, &lambda, &[GOLDEN, SILVER], &dims).unwrap();
    assert_eq!(before.norm, after.norm);
}

#[test]
fn strong_coupling_past_breakdown_does_not_converge() {
    let f = CoupledStandardFamily::new(1.2, 0.1, SILVER);
    let config = SolveConfig {
        max_iterations: 8,
        ..SolveConfig::default()
    };
    match solve(&flat(32), &[0.0; 3], &f, &PresymplecticStructure::standard(1, 1), &freq2(), &config) {
        Err(Error::NoConvergence { best, .. }) => assert!(best.error_norm > 1e-12),
        other => panic!("expected NoConvergence, got {:?}", other.map(|s| s.log.final_error)),
    }
}

#[test]
fn mismatched_parameter_vector_is_rejected() {
    let f = CoupledStandardFamily::new(0.2, 0.1, SILVER);
    let err = solve(&flat(8), &[0.0; 2], &f, &PresymplecticStructure::standard(1, 1), &freq2(), &SolveConfig::default());
    assert!(matches!(err, Err(Error::DimensionMismatch(_))));
}
