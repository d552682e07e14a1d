use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use transdiff::geometry::Side;
use transdiff::linalg;
use transdiff::quad::{self, Tolerance};
use transdiff::sde::{LocalTimeMode, Scheme, Simulator};
use transdiff::stats::{ks_one_sample, ks_two_sample, normal_cdf, MeanVar};
use transdiff::{CoefficientField, InterfaceGeometry, SimConfig, Skew1DModel};

fn gaussian2(rng: &mut ChaCha8Rng) -> [f64; 2] {
    [StandardNormal.sample(rng), StandardNormal.sample(rng)]
}

fn plane2() -> InterfaceGeometry<2> {
    InterfaceGeometry::hyperplane([1.0, 0.0], 0.0).unwrap()
}

fn point() -> InterfaceGeometry<1> {
    InterfaceGeometry::hyperplane([1.0], 0.0).unwrap()
}

#[test]
fn euler_increment_covariance() {
    let field = CoefficientField::<2>::diagonal(1.5, 0.5).unwrap();
    let geom = plane2();
    let cfg = SimConfig::new(1e-2, 0.4, 1.0, 1, 0);
    let sim = Simulator::new(&field, &geom, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = [5.0, 0.0];
    let dt = 1e-2;
    let (mut xx, mut yy, mut xy) = (MeanVar::default(), MeanVar::default(), MeanVar::default());
    let n = 1_000_000;
    for _ in 0..n {
        let y = sim.euler_step(&x, Side::Plus, dt, &gaussian2(&mut rng)).unwrap();
        let d = linalg::sub(&y, &x);
        xx.push(d[0] * d[0]);
        yy.push(d[1] * d[1]);
        xy.push(d[0] * d[1]);
    }
    let var = 2.0 * 1.5 * dt;
    assert!((xx.mean - var).abs() <= 3.0 * xx.std_error(), "{} vs {var}", xx.mean);
    assert!((yy.mean - var).abs() <= 3.0 * yy.std_error(), "{} vs {var}", yy.mean);
    assert!(xy.mean.abs() <= 3.0 * xy.std_error(), "{}", xy.mean);
}

#[test]
fn euler_increment_mean_follows_the_divergence_drift() {
    let a = |x: &[f64; 2]| linalg::scaled_identity(1.0 + x[0] * x[0]);
    let field = CoefficientField::new(a, a, 1.0, 10.0)
        .unwrap()
        .with_divergence(Arc::new(|x: &[f64; 2]| [2.0 * x[0], 0.0]), Arc::new(|x: &[f64; 2]| [2.0 * x[0], 0.0]));
    let geom = InterfaceGeometry::hyperplane([1.0, 0.0], -5.0).unwrap();
    let cfg = SimConfig::new(1e-3, 0.4, 1.0, 1, 0);
    let sim = Simulator::new(&field, &geom, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut m0, mut m1) = (MeanVar::default(), MeanVar::default());
    for _ in 0..10_000_000 {
        let y = sim.euler_step(&[1.0, 0.0], Side::Plus, 1e-3, &gaussian2(&mut rng)).unwrap();
        m0.push(y[0] - 1.0);
        m1.push(y[1]);
    }
    assert!((m0.mean - 2e-3).abs() <= 3.0 * m0.std_error(), "{} ± {}", m0.mean, m0.std_error());
    assert!(m1.mean.abs() <= 3.0 * m1.std_error());
}

#[test]
fn layer_step_equals_euler_without_a_jump() {
    let field = CoefficientField::<2>::diagonal(1.0, 1.0).unwrap();
    let geom = plane2();
    let cfg = SimConfig::new(1e-2, 0.4, 1.0, 1, 0);
    let sim = Simulator::new(&field, &geom, &cfg).unwrap();
    let x = [0.05, 0.3];
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let layer: Vec<[f64; 2]> = (0..n).map(|_| sim.layer_step(&x, 1e-2, &mut rng).unwrap().position).collect();
    let euler: Vec<[f64; 2]> = (0..n).map(|_| sim.euler_step(&x, Side::Plus, 1e-2, &gaussian2(&mut rng)).unwrap()).collect();
    for k in 0..2 {
        let a: Vec<f64> = layer.iter().map(|p| p[k]).collect();
        let b: Vec<f64> = euler.iter().map(|p| p[k]).collect();
        let ks = ks_two_sample(&a, &b);
        assert!(ks.passes(0.01), "coordinate {k}: {ks:?}");
    }
}

#[test]
fn layer_step_sign_frequency_matches_crossing_probability() {
    let field = CoefficientField::<2>::diagonal(1.0, 4.0).unwrap();
    let geom = plane2();
    let cfg = SimConfig::new(1e-3, 0.1, 1.0, 1, 0);
    let sim = Simulator::new(&field, &geom, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let plus: MeanVar = (0..1_000_000)
        .map(|_| f64::from(u8::from(sim.layer_step(&[0.0, 1.0], 1e-3, &mut rng).unwrap().position[0] > 0.0)))
        .collect();
    let q = Skew1DModel::new(1.0, 4.0).unwrap().crossing_probability(1e-3, 0.0).unwrap();
    assert!((plus.mean - q).abs() <= 3.0 * plus.std_error(), "{} vs {q}", plus.mean);
}

#[test]
fn enlarged_layer_far_start_has_no_local_time() {
    let field = CoefficientField::<2>::diagonal(1.0, 4.0).unwrap();
    let geom = plane2();
    let cfg = SimConfig::new(1e-4, 2.0, 1.0, 1, 0);
    let sim = Simulator::new(&field, &geom, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..1_000_000 {
        let s = sim.layer_step(&[-1.0, 0.0], 1e-4, &mut rng).unwrap();
        assert_eq!(s.dk_skew_step, 0.0);
    }
}

#[test]
fn terminal_law_is_gaussian_when_the_interface_is_invisible() {
    let field = CoefficientField::<2>::diagonal(1.0, 1.0).unwrap();
    let geom = plane2();
    let cfg = SimConfig::new(1e-2, 0.35, 1.0, 100_000, 21);
    let sim = Simulator::new(&field, &geom, &cfg).unwrap();
    let x0 = [0.1, -0.3];
    let s = sim.simulate_ensemble(&x0).unwrap();
    for k in 0..2 {
        let v: Vec<f64> = s.terminals.iter().map(|p| p[k]).collect();
        let ks = ks_one_sample(&v, |y| normal_cdf((y - x0[k]) / 2f64.sqrt()));
        assert!(ks.passes(0.01), "coordinate {k}: {ks:?}");
    }
}

#[test]
fn unreachable_interface_accumulates_nothing() {
    let field = CoefficientField::<2>::diagonal(1.0, 4.0).unwrap();
    let geom = InterfaceGeometry::sphere([0.0, 0.0], 1.0).unwrap();
    let cfg = SimConfig::new(1e-2, 0.65, 1.0, 10_000, 22);
    let sim = Simulator::new(&field, &geom, &cfg).unwrap();
    // bounding radius 1 plus 6 √(2ΛT)
    let s = sim.simulate_ensemble(&[1.0 + 6.0 * 8f64.sqrt() + 0.5, 0.0]).unwrap();
    assert!(s.paths_with_positive_k as f64 / s.n_paths as f64 <= 1e-4);
    assert_eq!(s.layer_steps, 0);
}

#[test]
fn occupation_times_add_up_and_k_is_monotone() {
    let field = CoefficientField::<2>::diagonal(1.0, 4.0).unwrap();
    let geom = InterfaceGeometry::sphere([0.0, 0.0], 1.0).unwrap();
    for mode in [LocalTimeMode::SkewStep, LocalTimeMode::Occupation] {
        let mut cfg = SimConfig::new(1e-3, 0.2, 0.7, 200, 23).with_local_time_mode(mode);
        cfg.record_positions = true;
        let sim = Simulator::new(&field, &geom, &cfg).unwrap();
        let trs = sim.run_paths(&[0.9, 0.0], |_, tr| tr).unwrap();
        for tr in &trs {
            let total = tr.occupation_plus + tr.occupation_minus + tr.occupation_layer;
            assert!((total - 0.7).abs() <= 1e-12 * 0.7, "{total}");
            assert_eq!(tr.support_violations, 0);
            assert_eq!(tr.monotonicity_violations, 0);
            assert!(tr.positions.windows(2).all(|w| w[1].2 >= w[0].2 && w[1].0 > w[0].0));
            assert_eq!(tr.positions.last().unwrap().0, 0.7);
            // increments only on layer steps
            for w in tr.positions.windows(2) {
                if w[1].2 > w[0].2 {
                    let rho = geom.signed_distance(&[w[0].1[0], w[0].1[1]]).unwrap();
                    assert!(rho.abs() <= 0.2);
                }
            }
        }
    }
}

#[test]
fn empty_ensemble_is_not_an_error() {
    let field = CoefficientField::<1>::diagonal(1.0, 4.0).unwrap();
    let cfg = SimConfig::new(1e-3, 0.1, 1.0, 0, 1);
    let geom = point();
    let s = Simulator::new(&field, &geom, &cfg).unwrap().simulate_ensemble(&[0.0]).unwrap();
    assert_eq!(s.n_paths, 0);
    assert_eq!(s.k.count, 0);
}

#[test]
fn ensembles_are_reproducible_and_schedule_independent() {
    let field = CoefficientField::<2>::diagonal(1.0, 4.0).unwrap();
    let geom = InterfaceGeometry::sphere([0.0, 0.0], 1.0).unwrap();
    let cfg = SimConfig::new(1e-3, 0.2, 0.3, 300, 99);
    let sim = Simulator::new(&field, &geom, &cfg).unwrap();
    let a = sim.simulate_ensemble(&[0.8, 0.1]).unwrap();
    let b = sim.simulate_ensemble(&[0.8, 0.1]).unwrap();
    assert_eq!(a, b);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let c = pool.install(|| sim.simulate_ensemble(&[0.8, 0.1]).unwrap());
    assert_eq!(a, c);
    let single = sim.simulate_path(&[0.8, 0.1], 17).unwrap();
    assert_eq!(single.terminal, a.terminals[17]);
}

fn expected_k_by_quadrature(m: &Skew1DModel, x: f64, t: f64) -> f64 {
    let tol = Tolerance { abs: 1e-12, rel: 1e-10, max_intervals: 4000 };
    2.0 * quad::integrate(|s: f64| if s == 0.0 { 0.0 } else { m.transition_density(s, x, 0.0).unwrap() }, 0.0, t, tol).unwrap()
}

#[test]
fn expected_k_matches_occupation_density() {
    let (ep, em) = (1.0, 4.0);
    let field = CoefficientField::<1>::diagonal(ep, em).unwrap();
    let geom = point();
    let m = Skew1DModel::new(ep, em).unwrap();
    let t = 0.5;
    let closed_form = 4.0 * (t / std::f64::consts::PI).sqrt() / (ep.sqrt() + em.sqrt());
    assert!((expected_k_by_quadrature(&m, 0.0, t) - closed_form).abs() < 1e-8);
    for x0 in [0.0, 0.3, -0.5] {
        let exact = expected_k_by_quadrature(&m, x0, t);
        for mode in [LocalTimeMode::SkewStep, LocalTimeMode::Occupation] {
            let cfg = SimConfig::new(1e-3, 0.2, t, 20_000, 31).with_local_time_mode(mode);
            let s = Simulator::new(&field, &geom, &cfg).unwrap().simulate_ensemble(&[x0]).unwrap();
            let rel = (s.k.mean - exact).abs() / exact;
            assert!(rel <= 0.10, "x0 {x0} {mode:?}: {} vs {exact}", s.k.mean);
        }
    }
}

#[test]
fn expected_k_is_cauchy_as_the_layer_shrinks() {
    let field = CoefficientField::<1>::diagonal(1.0, 4.0).unwrap();
    let geom = point();
    let means: Vec<f64> = [0.4, 0.2, 0.1]
        .iter()
        .map(|&h| {
            let cfg = SimConfig::new(2.5e-4, h, 0.5, 8_000, 32);
            Simulator::new(&field, &geom, &cfg).unwrap().simulate_ensemble(&[0.1]).unwrap().k.mean
        })
        .collect();
    for w in means.windows(2) {
        assert!((w[0] - w[1]).abs() <= 0.05 * w[1], "{means:?}");
    }
}

#[test]
fn equal_coefficients_layer_and_naive_schemes_agree_in_law() {
    let field = CoefficientField::<1>::diagonal(2.0, 2.0).unwrap();
    let geom = point();
    let run = |scheme, seed| {
        let cfg = SimConfig::new(1e-2, 0.45, 1.0, 50_000, seed).with_scheme(scheme);
        let s = Simulator::new(&field, &geom, &cfg).unwrap().simulate_ensemble(&[0.2]).unwrap();
        s.terminals.iter().map(|p| p[0]).collect::<Vec<f64>>()
    };
    let a = run(Scheme::LayerSkew, 41);
    let b = run(Scheme::NaiveEulerOccupation, 42);
    let ks = ks_two_sample(&a, &b);
    assert!(ks.passes(0.01), "{ks:?}");
}

/// `∫ f(x) E^x[g(X_t)] dx = ∫ g(x) E^x[f(X_t)] dx` on a midpoint grid, with
/// both sides estimated from the same paths so the difference has its own SE.
#[test]
fn process_is_symmetric_with_respect_to_lebesgue_measure() {
    let bump = |c: f64, w: f64| move |x: f64| if (x - c).abs() < w { (1.0 - ((x - c) / w).powi(2)).powi(2) } else { 0.0 };
    let f = bump(-0.6, 0.8);
    let g = bump(0.5, 0.9);
    let field = CoefficientField::<1>::diagonal(1.0, 4.0).unwrap();
    let geom = point();
    let (lo, hi, nodes) = (-1.6, 1.6, 64);
    let dx = (hi - lo) / nodes as f64;
    let (mut total, mut var) = (0.0, 0.0);
    for i in 0..nodes {
        let x = lo + (i as f64 + 0.5) * dx;
        let cfg = SimConfig::new(5e-3, 0.45, 0.3, 2_000, 1000 + i as u64);
        let sim = Simulator::new(&field, &geom, &cfg).unwrap();
        let node: MeanVar = sim
            .run_paths(&[x], |_, tr| f(x) * g(tr.terminal[0]) - g(x) * f(tr.terminal[0]))
            .unwrap()
            .into_iter()
            .collect();
        total += dx * node.mean;
        var += dx * dx * node.variance() / node.count as f64;
    }
    let se = var.sqrt();
    assert!(se > 0.0);
    assert!(total.abs() <= 3.0 * se, "{total} ± {se}");
}
