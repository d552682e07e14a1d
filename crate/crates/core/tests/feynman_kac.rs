use transdiff::feynman_kac::{
    compare_with_reference, estimate_u, estimate_u_at_times, local_time_identification, CaseDescriptor, InitialData,
    Profile,
};
use transdiff::sde::{LocalTimeMode, Scheme, Simulator};
use transdiff::{CoefficientField, InterfaceGeometry, SimConfig};

fn line() -> InterfaceGeometry<1> {
    InterfaceGeometry::hyperplane([1.0], 0.0).unwrap()
}

/// Heat flow of `exp(-(y-c)²/(2w²))` with diffusivity `eps`.
fn gaussian_heat(c: f64, w: f64, eps: f64, t: f64, x: f64) -> f64 {
    let s2 = w * w + 2.0 * eps * t;
    (w * w / s2).sqrt() * (-(x - c) * (x - c) / (2.0 * s2)).exp()
}

#[test]
fn matches_gaussian_convolution_when_the_interface_is_invisible() {
    let bump = Profile::GaussianBump { center: 0.3, width: 0.4, amplitude: 1.0 };
    let eps = 1.5;
    let cfg = SimConfig::new(1e-3, 0.25, 0.5, 100_000, 51);
    let field1 = CoefficientField::<1>::diagonal(eps, eps).unwrap();
    let run = estimate_u_at_times(&[-0.2], &[0.1, 0.5], &InitialData::along_first_axis(bump), &field1, &line(), &cfg).unwrap();
    for (e, t) in run.estimates.iter().zip([0.1, 0.5]) {
        let exact = gaussian_heat(0.3, 0.4, eps, t, -0.2);
        assert!((e.mean - exact).abs() <= e.confidence_radius, "t {t}: {} vs {exact}", e.mean);
    }
    let field2 = CoefficientField::<2>::diagonal(eps, eps).unwrap();
    let circle = InterfaceGeometry::sphere([0.0, 0.0], 1.0).unwrap();
    let cfg2 = SimConfig::new(1e-3, 0.25, 0.5, 40_000, 52);
    let e = estimate_u(&[0.9, 0.2], 0.5, &InitialData::along_first_axis(bump), &field2, &circle, &cfg2).unwrap();
    let exact = gaussian_heat(0.3, 0.4, eps, 0.5, 0.9);
    assert!((e.mean - exact).abs() <= e.confidence_radius, "{} vs {exact}", e.mean);
}

#[test]
fn line_case_matches_the_finite_volume_reference() {
    let case = CaseDescriptor::Line {
        eps_plus: 1.0,
        eps_minus: 4.0,
        u0: Profile::SmoothStep { width: 0.1 },
        probes: vec![0.5],
        times: vec![0.5],
        half_width: 12.0,
        cells: 2400,
    };
    let cfg = SimConfig::new(1e-3, 0.2, 0.5, 40_000, 53);
    let r = compare_with_reference::<1>(&case, &cfg, 0.01).unwrap();
    assert!(r.pass, "{r:#?}");
}

#[test]
fn radial_case_matches_the_radial_reference() {
    let case = CaseDescriptor::Radial {
        dimension: 2,
        radius: 1.0,
        eps_inside: 1.0,
        eps_outside: 3.0,
        u0: Profile::GaussianBump { center: 0.0, width: 0.8, amplitude: 1.0 },
        probes: vec![0.0, 0.5, 1.0, 1.5],
        times: vec![0.25, 0.5],
        outer_radius: 10.0,
        cells: 2000,
    };
    let cfg = SimConfig::new(2e-3, 0.3, 0.5, 20_000, 54);
    let r = compare_with_reference::<2>(&case, &cfg, 0.02).unwrap();
    assert!(r.pass, "{r:#?}");
    assert_eq!(r.probes.len(), 8);
}

#[test]
fn equal_coefficients_pass_with_either_scheme() {
    let case = CaseDescriptor::Line {
        eps_plus: 2.0,
        eps_minus: 2.0,
        u0: Profile::SmoothStep { width: 0.2 },
        probes: vec![-0.3, 0.0, 0.4],
        times: vec![0.3],
        half_width: 12.0,
        cells: 2400,
    };
    for scheme in [Scheme::LayerSkew, Scheme::NaiveEulerOccupation] {
        let cfg = SimConfig::new(1e-3, 0.2, 0.3, 20_000, 55).with_scheme(scheme);
        let r = compare_with_reference::<1>(&case, &cfg, 0.01).unwrap();
        assert!(r.pass, "{scheme:?}: {r:#?}");
    }
}

#[test]
fn tiny_time_recovers_the_initial_value() {
    let field = CoefficientField::<1>::diagonal(1.0, 4.0).unwrap();
    let profile = Profile::SmoothStep { width: 0.1 };
    let u0 = InitialData::along_first_axis(profile);
    let t = 1e-6;
    let cfg = SimConfig::new(1e-3, 0.2, t, 20_000, 56);
    for x in [-0.05, 0.0, 0.02, 0.3] {
        let e = estimate_u(&[x], t, &u0, &field, &line(), &cfg).unwrap();
        let reach = 6.0 * (2.0 * 4.0 * t).sqrt();
        let slack = e.confidence_radius + (u0.modulus)(reach);
        assert!((e.mean - profile.eval(x)).abs() <= slack, "x {x}: {} vs {}", e.mean, profile.eval(x));
    }
}

#[test]
fn standard_error_shrinks_like_the_square_root_of_the_path_count() {
    let field = CoefficientField::<1>::diagonal(1.0, 4.0).unwrap();
    let u0 = InitialData::along_first_axis(Profile::SmoothStep { width: 0.1 });
    let se = |n: usize| {
        let cfg = SimConfig::new(1e-3, 0.2, 0.2, n, 57);
        estimate_u(&[0.1], 0.2, &u0, &field, &line(), &cfg).unwrap().std_error
    };
    let ratio = se(10_000) / se(20_000);
    assert!((ratio / 2f64.sqrt() - 1.0).abs() <= 0.2, "{ratio}");
}

#[test]
fn estimates_inherit_positivity_and_bounds() {
    let field = CoefficientField::<1>::diagonal(1.0, 4.0).unwrap();
    let cfg = SimConfig::new(1e-3, 0.2, 0.4, 2_000, 58);
    let bump = Profile::GaussianBump { center: -0.5, width: 0.3, amplitude: 0.7 };
    for x in [-1.0, -0.1, 0.0, 0.8] {
        let e = estimate_u(&[x], 0.4, &InitialData::along_first_axis(bump), &field, &line(), &cfg).unwrap();
        assert!(e.mean >= 0.0 && e.mean <= 0.7);
    }
}

#[test]
fn local_time_modes_agree_on_the_line() {
    let field = CoefficientField::<1>::diagonal(1.0, 4.0).unwrap();
    let cfg = SimConfig::new(2.5e-4, 0.1, 1.0, 5_000, 59);
    let r = local_time_identification(&[0.0], &field, &line(), &cfg, &[0.1], None).unwrap();
    assert!(r.max_relative_difference <= 0.10, "{r:#?}");
    assert_eq!(r.levels[0].support_violations, 0);
}

#[test]
fn local_time_mode_does_not_move_isotropic_paths() {
    let field = CoefficientField::<1>::diagonal(2.0, 2.0).unwrap();
    let geom = line();
    let terminals = |mode| {
        let cfg = SimConfig::new(1e-3, 0.2, 0.5, 2_000, 60).with_local_time_mode(mode);
        let s = Simulator::new(&field, &geom, &cfg).unwrap().simulate_ensemble(&[0.05]).unwrap();
        (s.terminals, s.k.mean)
    };
    let (a, ka) = terminals(LocalTimeMode::SkewStep);
    let (b, kb) = terminals(LocalTimeMode::Occupation);
    assert_eq!(a, b);
    assert!(ka > 0.0 && kb > 0.0);
}

#[test]
fn distant_start_sees_almost_no_local_time() {
    let field = CoefficientField::<1>::diagonal(1.0, 4.0).unwrap();
    let cfg = SimConfig::new(1e-3, 0.2, 0.5, 4_000, 61);
    let near = local_time_identification(&[0.0], &field, &line(), &cfg, &[0.2], None).unwrap();
    let far_start = 6.0 * (2.0 * 4.0 * 0.5f64).sqrt();
    let far = local_time_identification(&[-far_start], &field, &line(), &cfg, &[0.2], None).unwrap();
    assert!(far.levels[0].skew_step.mean <= 1e-3 * near.levels[0].skew_step.mean);
}
