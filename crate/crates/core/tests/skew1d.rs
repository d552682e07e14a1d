use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use transdiff::pde::{aronson_min_constant, Boundary, DiscreteOperator, Grid1D};
use transdiff::quad::{self, Tolerance};
use transdiff::stats::{ks_one_sample, normal_cdf, MeanVar};
use transdiff::Skew1DModel;

const TIMES: [f64; 3] = [0.1, 0.5, 2.0];
const STARTS: [f64; 5] = [-2.0, -0.1, 0.0, 0.1, 2.0];
const RATIOS: [f64; 4] = [1.0, 0.25, 4.0, 100.0];

fn models() -> Vec<Skew1DModel> {
    RATIOS.iter().map(|&r| Skew1DModel::new(r, 1.0).unwrap()).collect()
}

fn tight() -> Tolerance {
    Tolerance { abs: 1e-13, rel: 1e-12, max_intervals: 8000 }
}

fn mass(m: &Skew1DModel, t: f64, x: f64) -> f64 {
    let reach = 40.0 * (m.eps_plus().max(m.eps_minus()) * t).sqrt() + 10.0 * x.abs();
    let mut breaks = vec![-reach, -x.abs() * 10.0 - 1e-3, 0.0, x.abs() * 10.0 + 1e-3, reach];
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quad::integrate_panels(|y| m.transition_density(t, x, y).unwrap(), &breaks, tight()).unwrap()
}

#[test]
fn density_is_normalized() {
    for m in models() {
        for &t in &TIMES {
            for &x in &STARTS {
                let total = mass(&m, t, x);
                assert!((total - 1.0).abs() <= 1e-8, "eps+ {} t {t} x {x}: {total}", m.eps_plus());
            }
        }
    }
}

#[test]
fn density_is_symmetric() {
    let ys = [-3.0, -0.7, -0.05, 0.0, 0.05, 0.4, 1.5];
    for m in models() {
        for &t in &TIMES {
            for &x in &STARTS {
                for &y in &ys {
                    let a = m.transition_density(t, x, y).unwrap();
                    let b = m.transition_density(t, y, x).unwrap();
                    assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()), "{t} {x} {y}: {a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn density_is_continuous_at_the_interface() {
    for m in models() {
        for &t in &TIMES {
            for &x in &STARTS {
                let up = m.transition_density(t, x, 1e-300).unwrap();
                let down = m.transition_density(t, x, -1e-300).unwrap();
                assert!((up - down).abs() <= 1e-10 * up, "{t} {x}: {up} vs {down}");
            }
        }
    }
}

#[test]
fn flux_is_continuous_at_the_interface() {
    // second-order one-sided differences
    let d = 1e-5;
    for m in models() {
        for &t in &TIMES {
            for &x in &STARTS {
                let p = |y: f64| m.transition_density(t, x, y).unwrap();
                let p0 = p(0.0);
                let right = (-3.0 * p0 + 4.0 * p(d) - p(2.0 * d)) / (2.0 * d);
                let left = (3.0 * p0 - 4.0 * p(-d) + p(-2.0 * d)) / (2.0 * d);
                let (fr, fl) = (m.eps_plus() * right, m.eps_minus() * left);
                let scale = fr.abs().max(fl.abs()).max(p0 * m.eps_plus().max(m.eps_minus()) / t.sqrt());
                assert!((fr - fl).abs() <= 1e-6 * scale, "eps+ {} t {t} x {x}: {fr} vs {fl}", m.eps_plus());
            }
        }
    }
}

#[test]
fn chapman_kolmogorov() {
    let m = Skew1DModel::new(1.0, 4.0).unwrap();
    let (s, t, x, y) = (0.3, 0.7, 0.5, -1.0);
    let f = |z: f64| m.transition_density(s, x, z).unwrap() * m.transition_density(t, z, y).unwrap();
    let breaks = [-30.0, -5.0, -1.0, 0.0, 0.5, 5.0, 30.0];
    let lhs = quad::integrate_panels(f, &breaks, tight()).unwrap();
    let rhs = m.transition_density(s + t, x, y).unwrap();
    assert!((lhs - rhs).abs() <= 1e-6, "{lhs} vs {rhs}");
}

#[test]
fn equal_coefficients_reduce_to_the_heat_kernel() {
    let m = Skew1DModel::new(1.7, 1.7).unwrap();
    for &t in &TIMES {
        for &x in &STARTS {
            for y in [-1.0, 0.0, 0.3] {
                let g = (-(x - y) * (x - y) / (4.0 * 1.7 * t)).exp() / (4.0 * std::f64::consts::PI * 1.7 * t).sqrt();
                assert!((m.transition_density(t, x, y).unwrap() - g).abs() <= 1e-15);
            }
        }
    }
}

/// Crank-Nicolson solve on 2^14 cells from a point mass at 0, split between
/// the two adjacent cells in proportion to their diffusivities.
fn fv_density_from_origin(eps_plus: f64, eps_minus: f64, t: f64) -> (Vec<f64>, Vec<f64>) {
    let n = 1 << 14;
    let grid = Grid1D::uniform(-20.0, 20.0, n, Some(0.0), Boundary::Neumann).unwrap();
    let op = DiscreteOperator::assemble_1d(eps_plus, eps_minus, grid).unwrap();
    let e = op.grid().interface_edge().unwrap();
    let mut u0 = vec![0.0; n];
    let w = eps_plus / (eps_plus + eps_minus);
    u0[e] = w / op.volumes()[e];
    u0[e - 1] = (1.0 - w) / op.volumes()[e - 1];
    let u = op.solve_crank_nicolson(&u0, t, 1e-4).unwrap();
    (op.centers().to_vec(), u)
}

#[test]
fn density_matches_finite_volume_oracle() {
    let m = Skew1DModel::new(1.0, 4.0).unwrap();
    let (centers, u) = fv_density_from_origin(1.0, 4.0, 0.5);
    let mut worst = 0.0f64;
    for (c, v) in centers.iter().zip(&u) {
        worst = worst.max((m.transition_density(0.5, 0.0, *c).unwrap() - v).abs());
    }
    assert!(worst <= 1e-3, "sup distance {worst}");
}

#[test]
fn crossing_probability_matches_finite_volume_mass() {
    let m = Skew1DModel::new(1.0, 4.0).unwrap();
    let (centers, u) = fv_density_from_origin(1.0, 4.0, 1.0);
    let h = 40.0 / (1 << 14) as f64;
    let fv: f64 = centers.iter().zip(&u).filter(|(c, _)| **c > 0.0).map(|(_, v)| v * h).sum();
    let q = m.crossing_probability(1.0, 0.0).unwrap();
    assert!((q - fv).abs() <= 1e-4, "{q} vs {fv}");
}

#[test]
fn crossing_probability_from_origin_is_time_independent() {
    for m in models() {
        let q0 = m.crossing_probability(0.1, 0.0).unwrap();
        for t in [0.5, 2.0, 17.0] {
            assert!((m.crossing_probability(t, 0.0).unwrap() - q0).abs() <= 1e-8);
        }
    }
}

#[test]
fn aronson_sandwich_has_finite_constant() {
    let ys: Vec<f64> = (-40..=40).map(|k| k as f64 * 0.1).collect();
    for m in models() {
        let mut fitted = 1.0f64;
        for &t in &TIMES {
            for &x in &STARTS {
                for &y in &ys {
                    let p = m.transition_density(t, x, y).unwrap();
                    fitted = fitted.max(aronson_min_constant(p * t.sqrt(), (x - y) * (x - y) / t));
                }
            }
        }
        assert!(fitted.is_finite() && fitted >= 1.0, "eps+ {}: {fitted}", m.eps_plus());
    }
}

/// CDF of the image density, written out with the normal CDF.
fn image_cdf(eps_plus: f64, eps_minus: f64, t: f64, x: f64, y: f64) -> f64 {
    if x < 0.0 {
        return 1.0 - image_cdf(eps_minus, eps_plus, t, -x, -y);
    }
    let (sp, sm) = (eps_plus.sqrt(), eps_minus.sqrt());
    let beta = (sp - sm) / (sp + sm);
    let kappa = 1.0 - beta;
    let (s_plus, s_minus) = ((2.0 * eps_plus * t).sqrt(), (2.0 * eps_minus * t).sqrt());
    let shift = x * sm / sp;
    let below = |z: f64| kappa * normal_cdf((z - shift) / s_minus);
    if y < 0.0 {
        below(y)
    } else {
        below(0.0)
            + (normal_cdf((y - x) / s_plus) - normal_cdf(-x / s_plus))
            + beta * (normal_cdf((y + x) / s_plus) - normal_cdf(x / s_plus))
    }
}

#[test]
fn image_cdf_agrees_with_quadrature() {
    let m = Skew1DModel::new(1.0, 4.0).unwrap();
    for x in [-0.4, 0.0, 0.3] {
        for y in [-1.0, -0.01, 0.2, 1.3] {
            let mut breaks: Vec<f64> = [-40.0, x, 0.0].into_iter().filter(|v| *v < y).collect();
            breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
            breaks.push(y);
            let q = quad::integrate_panels(|z| m.transition_density(0.5, x, z).unwrap(), &breaks, tight()).unwrap();
            assert!((q - image_cdf(1.0, 4.0, 0.5, x, y)).abs() < 1e-10, "x {x} y {y}");
        }
    }
}

#[test]
fn sampler_one_sided_frequency_matches_quadrature() {
    let m = Skew1DModel::new(1.0, 4.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 1_000_000;
    let above: MeanVar = (0..n).map(|_| f64::from(u8::from(m.sample_step(0.0, 1.0, &mut rng).y > 0.0))).collect();
    let q = m.crossing_probability(1.0, 0.0).unwrap();
    assert!((above.mean - q).abs() <= 3.0 * above.std_error(), "{} vs {q}", above.mean);
}

#[test]
fn sampler_reduces_to_gaussian_for_equal_coefficients() {
    let m = Skew1DModel::new(1.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ys: Vec<f64> = (0..1_000_000).map(|_| m.sample_step(0.0, 1.0, &mut rng).y).collect();
    let ks = ks_one_sample(&ys, |y| normal_cdf(y / 2f64.sqrt()));
    assert!(ks.passes(0.01), "{ks:?}");
}

#[test]
fn sampler_law_matches_image_density_off_the_interface() {
    for (ep, em, x, dt) in [(1.0, 4.0, 0.3, 0.5), (1.0, 4.0, -0.2, 0.1), (100.0, 1.0, 0.05, 0.02)] {
        let m = Skew1DModel::new(ep, em).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ys: Vec<f64> = (0..200_000).map(|_| m.sample_step(x, dt, &mut rng).y).collect();
        let ks = ks_one_sample(&ys, |y| image_cdf(ep, em, dt, x, y));
        assert!(ks.passes(0.01), "({ep}, {em}, {x}, {dt}): {ks:?}");
    }
}

#[test]
fn sampled_local_time_has_the_occupation_density_mean() {
    // E[ΔL]/ε₋ = 2 ∫_0^dt p(s, x, 0) ds
    let m = Skew1DModel::new(1.0, 4.0).unwrap();
    for x in [0.3, -0.5] {
        let dt = 0.5;
        let exact = 2.0
            * quad::integrate(|s: f64| if s == 0.0 { 0.0 } else { m.transition_density(s, x, 0.0).unwrap() }, 0.0, dt, tight())
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let k: MeanVar = (0..400_000).map(|_| m.pcaf_increment(m.sample_step(x, dt, &mut rng).local_time)).collect();
        assert!((k.mean - exact).abs() <= 3.5 * k.std_error(), "x {x}: {} vs {exact}", k.mean);
    }
}

#[test]
fn far_from_interface_no_local_time() {
    let m = Skew1DModel::new(1.0, 4.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    assert!((0..1_000_000).all(|_| m.sample_step(5.0, 1e-4, &mut rng).local_time == 0.0));
}
