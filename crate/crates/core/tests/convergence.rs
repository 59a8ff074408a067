use spectral_ns::convergence::{
    combined_study, spatial_study, temporal_study, CombinedStudy, ErrorNorm, Flag, SpatialStudy, StudyKind,
    TemporalStudy,
};
use spectral_ns::{l2_norm_sq, make_initial_condition, DealiasRule, GridSpec, InitialConditionSpec, PhysicsParams};

fn rk4_factor(z: f64) -> f64 {
    1.0 + z + z * z / 2.0 + z * z * z / 6.0 + z * z * z * z / 24.0
}

#[test]
fn temporal_error_matches_stability_polynomial_on_stokes_flow() {
    let nu = 1.0;
    let t_final = 0.5;
    let dts = vec![0.1, 0.05, 0.025];
    let study = TemporalStudy {
        ic: InitialConditionSpec::taylor_green(1.0),
        params: PhysicsParams::viscous_only(nu).unwrap(),
        n_points: 8,
        dealias: DealiasRule::TwoThirds,
        t_final,
        dts: dts.clone(),
        reference_refinement: 8,
        norm: ErrorNorm::L2,
        order: 4,
    };
    let report = temporal_study(&study).unwrap();
    assert_eq!(report.kind, StudyKind::Temporal);

    // every Taylor-Green mode sits on the |k|² = 3 shell
    let grid = GridSpec::new(8, DealiasRule::TwoThirds).unwrap();
    let norm0 = l2_norm_sq(&make_initial_condition(&study.ic, grid).unwrap()).sqrt();
    let amplification = |dt: f64| rk4_factor(-3.0 * nu * dt).powi((t_final / dt).round() as i32);
    let reference = amplification(dts[2] / 8.0);
    for (sample, dt) in report.samples.iter().zip(&dts) {
        let expected = (amplification(*dt) - reference).abs() * norm0;
        let rel = (sample.error - expected).abs() / expected;
        assert!(rel < 5e-4, "dt {dt}: {} vs {expected}", sample.error);
    }
    let rate = report.fitted_rate.unwrap();
    assert!((rate - 4.0).abs() < 0.3, "{rate}");
    assert!(report.flags.is_empty(), "{:?}", report.flags);
}

#[test]
fn temporal_schedule_must_halve() {
    let study = TemporalStudy {
        ic: InitialConditionSpec::taylor_green(1.0),
        params: PhysicsParams::viscous_only(0.1).unwrap(),
        n_points: 8,
        dealias: DealiasRule::TwoThirds,
        t_final: 0.1,
        dts: vec![0.02, 0.01, 0.004],
        reference_refinement: 8,
        norm: ErrorNorm::L2,
        order: 4,
    };
    assert!(temporal_study(&study).is_err());
}

fn combined(pairs: Vec<(usize, f64)>, reference: (usize, f64)) -> CombinedStudy {
    CombinedStudy {
        ic: InitialConditionSpec::random_analytic(1.0, 2.0, 3),
        params: PhysicsParams::new(0.1, spectral_ns::ForcingSpec::none()).unwrap(),
        t_final: 0.02,
        pairs,
        reference,
        dealias: DealiasRule::TwoThirds,
        norm: ErrorNorm::L2,
        order: 4,
    }
}

#[test]
fn combined_study_decreases_and_self_reference_is_exact() {
    let study = combined(vec![(8, 4e-3), (16, 2e-3), (20, 1e-3), (32, 2.5e-4)], (32, 2.5e-4));
    let report = combined_study(&study).unwrap();
    let errors: Vec<f64> = report.samples.iter().map(|s| s.error).collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    assert_eq!(errors[3], 0.0);
    assert!(!report.flags.contains(&Flag::NonMonotone));
    assert!(report.samples[..3].iter().all(|s| s.dominant.is_some()));
    let model = report.model.as_ref().expect("two-term model");
    assert!(model.spatial_coeff >= 0.0 && model.temporal_coeff >= 0.0);

    let again = combined_study(&study).unwrap();
    assert_eq!(report.to_text(), again.to_text());
    assert_eq!(report.samples_csv(), again.samples_csv());
}

#[test]
fn combined_study_without_spread_skips_the_fit() {
    let study = combined(vec![(16, 1e-3), (16, 1e-3), (16, 1e-3)], (32, 2.5e-4));
    let report = combined_study(&study).unwrap();
    assert!(report.model.is_none());
    assert!(report.notes.iter().any(|n| n.contains("zero spread")), "{:?}", report.notes);
    let e = report.samples[0].error;
    assert!(report.samples.iter().all(|s| s.error == e));
}

#[test]
fn spatial_study_on_stokes_flow_is_exact_on_every_grid() {
    let study = SpatialStudy {
        ic: InitialConditionSpec::taylor_green(1.0),
        params: PhysicsParams::viscous_only(0.1).unwrap(),
        t_final: 0.05,
        dt: 1e-2,
        grids: vec![8, 12, 16],
        reference_n: 32,
        dealias: DealiasRule::TwoThirds,
        norm: ErrorNorm::Linf,
    };
    let report = spatial_study(&study).unwrap();
    for s in &report.samples {
        assert!(s.error < 1e-13, "{}: {}", s.n_points, s.error);
    }
    assert!(!report.flags.contains(&Flag::NonSpectralBehavior));

    let mut short = study.clone();
    short.reference_n = 16;
    assert!(spatial_study(&short).is_err(), "reference below 4x coarsest");
}
