//! Monte Carlo estimates of `u(t, x) = E^x[u0(X_t)]` and their comparison
//! with the finite-volume references, plus the two-estimator study of the
//! boundary functional `K`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientField;
use crate::error::{Error, Result};
use crate::geometry::InterfaceGeometry;
use crate::linalg::{self, Vector};
use crate::pde::{Boundary, DiscreteOperator, Grid1D};
use crate::scalar::Scalar;
use crate::sde::{LocalTimeMode, Scheme, SimConfig, Simulator};
use crate::stats::MeanVar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    /// `3 · std_error`.
    pub confidence_radius: f64,
}

impl MCEstimate {
    pub fn from_stats(mv: &MeanVar) -> Self {
        let se = mv.std_error();
        Self { mean: mv.mean, std_error: se, n_paths: mv.count as usize, confidence_radius: 3.0 * se }
    }
}

/// Initial data as a function of one coordinate: the line coordinate in 1D,
/// the radius for radial cases, or the first component otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Constant { value: f64 },
    /// `½ (1 + tanh(y / width))`.
    SmoothStep { width: f64 },
    /// `1{y > 0}`.
    Step,
    /// `amplitude · exp(-(y - center)² / (2 width²))`.
    GaussianBump { center: f64, width: f64, amplitude: f64 },
}

impl Profile {
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            Profile::Constant { value } => value,
            Profile::SmoothStep { width } => 0.5 * (1.0 + (y / width).tanh()),
            Profile::Step => f64::from(u8::from(y > 0.0)),
            Profile::GaussianBump { center, width, amplitude } => {
                let z = (y - center) / width;
                amplitude * (-0.5 * z * z).exp()
            }
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match *self {
            Profile::Constant { value } => value.abs(),
            Profile::SmoothStep { .. } | Profile::Step => 1.0,
            Profile::GaussianBump { amplitude, .. } => amplitude.abs(),
        }
    }

    /// Bound on `|u0(y) - u0(y')|` for `|y - y'| <= delta`.
    pub fn modulus(&self, delta: f64) -> f64 {
        match *self {
            Profile::Constant { .. } => 0.0,
            Profile::SmoothStep { width } => (0.5 * delta / width).min(1.0),
            Profile::Step => 1.0,
            Profile::GaussianBump { width, amplitude, .. } => {
                // Lipschitz constant e^{-1/2} / width
                (amplitude.abs() * (-0.5f64).exp() / width * delta).min(amplitude.abs())
            }
        }
    }
}

/// A bounded function on `ℝᵈ` with its sup norm and modulus of continuity.
#[derive(Clone)]
pub struct InitialData<S: Scalar, const D: usize> {
    pub f: Arc<dyn Fn(&Vector<S, D>) -> f64 + Send + Sync>,
    pub sup_norm: f64,
    pub modulus: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl<S: Scalar, const D: usize> InitialData<S, D> {
    /// `u0(x) = profile(x₁)`.
    pub fn along_first_axis(profile: Profile) -> Self {
        Self {
            f: Arc::new(move |x: &Vector<S, D>| profile.eval(x[0].as_f64())),
            sup_norm: profile.sup_norm(),
            modulus: Arc::new(move |d| profile.modulus(d)),
        }
    }

    /// `u0(x) = profile(|x - center|)`.
    pub fn radial(profile: Profile, center: Vector<S, D>) -> Self {
        Self {
            f: Arc::new(move |x: &Vector<S, D>| profile.eval(linalg::norm(&linalg::sub(x, &center)).as_f64())),
            sup_norm: profile.sup_norm(),
            modulus: Arc::new(move |d| profile.modulus(d)),
        }
    }
}

/// Estimates at several times from one ensemble, with the path diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct FkRun {
    pub times: Vec<f64>,
    pub estimates: Vec<MCEstimate>,
    pub support_violations: u64,
    pub monotonicity_violations: u64,
    pub layer_steps: u64,
    pub steps: u64,
}

/// `E^x[u0(X_t)]` at every `t` in `times`; the config horizon is replaced by `max(times)`.
pub fn estimate_u_at_times<S: Scalar, const D: usize>(
    x: &Vector<S, D>,
    times: &[S],
    u0: &InitialData<S, D>,
    field: &CoefficientField<S, D>,
    geom: &InterfaceGeometry<S, D>,
    config: &SimConfig<S>,
) -> Result<FkRun> {
    if times.is_empty() {
        return Err(Error::Contract("no estimation times".into()));
    }
    let horizon = times.iter().copied().fold(S::zero(), S::max);
    let mut cfg = config.clone();
    cfg.horizon = horizon;
    cfg.observation_times = times.to_vec();
    cfg.record_positions = false;
    let sim = Simulator::new(field, geom, &cfg)?;
    let mut order: Vec<S> = times.iter().copied().filter(|&t| t < horizon).collect();
    order.sort_by(|a, b| a.partial_cmp(b).unwrap());
    order.dedup();
    let per_path = sim.run_paths(x, |_, tr| {
        let values: Vec<f64> = tr.snapshots.iter().chain(std::iter::once(&tr.terminal)).map(|p| (u0.f)(p)).collect();
        (values, tr.support_violations, tr.monotonicity_violations, tr.layer_steps, tr.steps)
    })?;
    let mut stats = vec![MeanVar::default(); order.len() + 1];
    let mut run = FkRun {
        times: times.iter().map(|t| t.as_f64()).collect(),
        estimates: Vec::new(),
        support_violations: 0,
        monotonicity_violations: 0,
        layer_steps: 0,
        steps: 0,
    };
    for (values, sv, mv, ls, st) in &per_path {
        for (s, v) in stats.iter_mut().zip(values) {
            s.push(*v);
        }
        run.support_violations += sv;
        run.monotonicity_violations += mv;
        run.layer_steps += ls;
        run.steps += st;
    }
    for &t in times {
        let idx = if t >= horizon { order.len() } else { order.iter().position(|&o| o == t).unwrap_or(order.len()) };
        run.estimates.push(MCEstimate::from_stats(&stats[idx]));
    }
    Ok(run)
}

pub fn estimate_u<S: Scalar, const D: usize>(
    x: &Vector<S, D>,
    t: S,
    u0: &InitialData<S, D>,
    field: &CoefficientField<S, D>,
    geom: &InterfaceGeometry<S, D>,
    config: &SimConfig<S>,
) -> Result<MCEstimate> {
    if !(t > S::zero()) || t > config.horizon {
        return Err(Error::Contract(format!("estimation time {t} outside (0, horizon = {}]", config.horizon)));
    }
    Ok(estimate_u_at_times(x, &[t], u0, field, geom, config)?.estimates[0])
}

/// Problems with a one-dimensional finite-volume reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CaseDescriptor {
    /// Interface at 0, `ε₊` on `y > 0`.
    Line {
        eps_plus: f64,
        eps_minus: f64,
        u0: Profile,
        probes: Vec<f64>,
        times: Vec<f64>,
        /// Reference domain `[-half_width, half_width]`.
        half_width: f64,
        cells: usize,
    },
    /// Sphere of `radius` centered at the origin of `ℝ^dimension`, `ε_inside` inside.
    Radial {
        dimension: usize,
        radius: f64,
        eps_inside: f64,
        eps_outside: f64,
        u0: Profile,
        probes: Vec<f64>,
        times: Vec<f64>,
        outer_radius: f64,
        cells: usize,
    },
}

impl CaseDescriptor {
    pub fn times(&self) -> &[f64] {
        match self {
            CaseDescriptor::Line { times, .. } | CaseDescriptor::Radial { times, .. } => times,
        }
    }

    pub fn probes(&self) -> &[f64] {
        match self {
            CaseDescriptor::Line { probes, .. } | CaseDescriptor::Radial { probes, .. } => probes,
        }
    }

    pub fn profile(&self) -> Profile {
        match self {
            CaseDescriptor::Line { u0, .. } | CaseDescriptor::Radial { u0, .. } => *u0,
        }
    }

    /// Assembled reference operator (not decomposed).
    pub fn reference_operator(&self) -> Result<DiscreteOperator<f64>> {
        match *self {
            CaseDescriptor::Line { eps_plus, eps_minus, half_width, cells, .. } => {
                let g = Grid1D::uniform(-half_width, half_width, cells, Some(0.0), Boundary::Neumann)?;
                DiscreteOperator::assemble_1d(eps_plus, eps_minus, g)
            }
            CaseDescriptor::Radial { dimension, radius, eps_inside, eps_outside, outer_radius, cells, .. } => {
                let g = Grid1D::uniform(0.0, outer_radius, cells, Some(radius), Boundary::Neumann)?;
                DiscreteOperator::assemble_radial(eps_inside, eps_outside, radius, dimension, g)
            }
        }
    }

    /// Finite-volume values `u(t, probe)` indexed `[time][probe]`.
    pub fn reference_values(&self, dt_max: f64) -> Result<Vec<Vec<f64>>> {
        let op = self.reference_operator()?;
        let u0: Vec<f64> = op.centers().iter().map(|&c| self.profile().eval(c)).collect();
        let mut out = Vec::new();
        for &t in self.times() {
            let u = op.solve_crank_nicolson(&u0, t, dt_max)?;
            out.push(self.probes().iter().map(|&p| op.interpolate(&u, p)).collect::<Result<Vec<_>>>()?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeComparison {
    pub probe: f64,
    pub t: f64,
    pub mc: MCEstimate,
    pub reference: f64,
    pub discrepancy: f64,
    /// `max(3·SE, bias_budget · ‖u0‖∞)`.
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub probes: Vec<ProbeComparison>,
    pub bias_budget: f64,
    /// `Σ max(0, |MC - FV| - 3·SE)` over probes.
    pub systematic_part: f64,
    pub support_violations: u64,
    pub monotonicity_violations: u64,
    pub pass: bool,
}

/// Start point at distance `r` from the origin along the first axis.
fn probe_point<const D: usize>(r: f64) -> Vector<f64, D> {
    let mut x = [0.0; D];
    x[0] = r;
    x
}

/// Runs MC at every probe of `case` and compares to the finite-volume reference.
pub fn compare_with_reference<const D: usize>(
    case: &CaseDescriptor,
    config: &SimConfig<f64>,
    bias_budget: f64,
) -> Result<ComparisonReport> {
    let (field, geom, u0) = case_model::<D>(case)?;
    let reference = case.reference_values(1e-4)?;
    let times = case.times();
    let mut probes = Vec::new();
    let (mut sv, mut mv) = (0, 0);
    for (pi, &p) in case.probes().iter().enumerate() {
        let run = estimate_u_at_times(&probe_point::<D>(p), times, &u0, &field, &geom, config)?;
        sv += run.support_violations;
        mv += run.monotonicity_violations;
        for (ti, &t) in times.iter().enumerate() {
            let mc = run.estimates[ti];
            let r = reference[ti][pi];
            let discrepancy = (mc.mean - r).abs();
            let tolerance = mc.confidence_radius.max(bias_budget * u0.sup_norm);
            probes.push(ProbeComparison { probe: p, t, mc, reference: r, discrepancy, tolerance, pass: discrepancy <= tolerance });
        }
    }
    let systematic_part = probes.iter().map(|p| (p.discrepancy - p.mc.confidence_radius).max(0.0)).sum();
    let pass = probes.iter().all(|p| p.pass) && sv == 0 && mv == 0;
    Ok(ComparisonReport { probes, bias_budget, systematic_part, support_violations: sv, monotonicity_violations: mv, pass })
}

/// Field, geometry and initial data matching a reducible case in dimension `D`.
pub fn case_model<const D: usize>(
    case: &CaseDescriptor,
) -> Result<(CoefficientField<f64, D>, InterfaceGeometry<f64, D>, InitialData<f64, D>)> {
    match *case {
        CaseDescriptor::Line { eps_plus, eps_minus, u0, .. } => {
            if D != 1 {
                return Err(Error::Unsupported(format!("line case needs d = 1, got d = {D}")));
            }
            let mut n = [0.0; D];
            n[0] = 1.0;
            Ok((
                CoefficientField::diagonal(eps_plus, eps_minus)?,
                InterfaceGeometry::hyperplane(n, 0.0)?,
                InitialData::along_first_axis(u0),
            ))
        }
        CaseDescriptor::Radial { dimension, radius, eps_inside, eps_outside, u0, .. } => {
            if dimension != D {
                return Err(Error::Unsupported(format!("radial case of dimension {dimension} run with d = {D}")));
            }
            Ok((
                CoefficientField::diagonal(eps_inside, eps_outside)?,
                InterfaceGeometry::sphere([0.0; D], radius)?,
                InitialData::radial(u0, [0.0; D]),
            ))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RichardsonReport {
    pub coarse: ComparisonReport,
    pub fine: ComparisonReport,
    /// The systematic part did not grow when `dt` was halved.
    pub shrinking: bool,
}

/// Compares at `dt` and `dt/2` with the same seed.
pub fn richardson_check<const D: usize>(
    case: &CaseDescriptor,
    config: &SimConfig<f64>,
    bias_budget: f64,
) -> Result<RichardsonReport> {
    let coarse = compare_with_reference::<D>(case, config, bias_budget)?;
    let mut half = config.clone();
    half.dt_bulk *= 0.5;
    let fine = compare_with_reference::<D>(case, &half, bias_budget)?;
    let shrinking = fine.systematic_part <= coarse.systematic_part;
    Ok(RichardsonReport { coarse, fine, shrinking })
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalTimeLevel {
    pub layer_halfwidth: f64,
    pub skew_step: MCEstimate,
    pub occupation: MCEstimate,
    /// `|skew - occupation| / skew`.
    pub relative_difference: f64,
    pub paths_with_positive_k: usize,
    pub support_violations: u64,
    pub monotonicity_violations: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalTimeReport {
    pub levels: Vec<LocalTimeLevel>,
    /// Finite-volume value of `E[K_T]` when a 1D reference is available.
    pub reference: Option<f64>,
    /// Relative change of each estimator between consecutive layer widths.
    pub skew_step_trend: Vec<f64>,
    pub occupation_trend: Vec<f64>,
    /// Largest `relative_difference` over the layer widths.
    pub max_relative_difference: f64,
}

/// Estimates `E[K_T]` with both local-time readings on the same paths, at each layer width.
pub fn local_time_identification<const D: usize>(
    x0: &Vector<f64, D>,
    field: &CoefficientField<f64, D>,
    geom: &InterfaceGeometry<f64, D>,
    config: &SimConfig<f64>,
    layer_halfwidths: &[f64],
    reference: Option<f64>,
) -> Result<LocalTimeReport> {
    if field.diagonal_constants().is_none() {
        return Err(Error::Unsupported("local-time identification needs a diagonal coefficient".into()));
    }
    let mut levels = Vec::new();
    for &h in layer_halfwidths {
        let mut cfg = config.clone();
        cfg.layer_halfwidth = h;
        cfg.scheme = Scheme::LayerSkew;
        cfg.local_time_mode = LocalTimeMode::SkewStep;
        let sim = Simulator::new(field, geom, &cfg)?;
        let s = sim.simulate_ensemble(x0)?;
        let skew = MCEstimate::from_stats(&s.k_skew_step);
        let occ = MCEstimate::from_stats(&s.k_occupation);
        levels.push(LocalTimeLevel {
            layer_halfwidth: h,
            skew_step: skew,
            occupation: occ,
            relative_difference: (skew.mean - occ.mean).abs() / skew.mean.abs().max(f64::MIN_POSITIVE),
            paths_with_positive_k: s.paths_with_positive_k,
            support_violations: s.support_violations,
            monotonicity_violations: s.monotonicity_violations,
        });
    }
    let trend = |get: &dyn Fn(&LocalTimeLevel) -> f64| -> Vec<f64> {
        levels.windows(2).map(|w| (get(&w[1]) - get(&w[0])).abs() / get(&w[0]).abs().max(f64::MIN_POSITIVE)).collect()
    };
    let skew_step_trend = trend(&|l| l.skew_step.mean);
    let occupation_trend = trend(&|l| l.occupation.mean);
    let max_relative_difference = levels.iter().map(|l| l.relative_difference).fold(0.0, f64::max);
    Ok(LocalTimeReport { levels, reference, skew_step_trend, occupation_trend, max_relative_difference })
}

/// `E^x[K_T]` for the 1D model from the finite-volume spectral route.
pub fn reference_expected_pcaf_1d(eps_plus: f64, eps_minus: f64, x0: f64, horizon: f64, half_width: f64, cells: usize) -> Result<f64> {
    let g = Grid1D::uniform(-half_width, half_width, cells, Some(0.0), Boundary::Neumann)?;
    DiscreteOperator::assemble_1d(eps_plus, eps_minus, g)?.decompose()?.expected_pcaf(x0, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_line() -> (CoefficientField<f64, 1>, InterfaceGeometry<f64, 1>) {
        (CoefficientField::diagonal(1.0, 4.0).unwrap(), InterfaceGeometry::hyperplane([1.0], 0.0).unwrap())
    }

    #[test]
    fn constant_initial_data_is_exact() {
        let (field, geom) = unit_line();
        let cfg = SimConfig::new(1e-3, 0.2, 0.5, 200, 1);
        let u0 = InitialData::along_first_axis(Profile::Constant { value: 1.0 });
        let e = estimate_u(&[0.3], 0.5, &u0, &field, &geom, &cfg).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.std_error, 0.0);
        assert_eq!(e.confidence_radius, 0.0);
    }

    #[test]
    fn estimates_respect_bounds_of_initial_data() {
        let (field, geom) = unit_line();
        let cfg = SimConfig::new(1e-3, 0.2, 0.5, 500, 2);
        let u0 = InitialData::along_first_axis(Profile::SmoothStep { width: 0.1 });
        let run = estimate_u_at_times(&[0.0], &[0.1, 0.5], &u0, &field, &geom, &cfg).unwrap();
        for e in &run.estimates {
            assert!(e.mean >= 0.0 && e.mean <= 1.0);
        }
        assert_eq!(run.support_violations, 0);
    }

    #[test]
    fn time_outside_horizon_is_rejected() {
        let (field, geom) = unit_line();
        let cfg = SimConfig::new(1e-3, 0.2, 0.5, 10, 1);
        let u0 = InitialData::along_first_axis(Profile::Step);
        assert!(estimate_u(&[0.0], 0.7, &u0, &field, &geom, &cfg).is_err());
    }

    #[test]
    fn profiles() {
        assert_eq!(Profile::SmoothStep { width: 0.1 }.eval(0.0), 0.5);
        assert_eq!(Profile::Step.eval(0.0), 0.0);
        assert_eq!(Profile::GaussianBump { center: 1.0, width: 0.5, amplitude: 2.0 }.eval(1.0), 2.0);
        assert!(Profile::SmoothStep { width: 0.1 }.modulus(1e-3) <= 5e-3);
    }

    #[test]
    fn line_case_needs_dimension_one() {
        let case = CaseDescriptor::Line {
            eps_plus: 1.0,
            eps_minus: 4.0,
            u0: Profile::Step,
            probes: vec![0.0],
            times: vec![0.1],
            half_width: 10.0,
            cells: 64,
        };
        assert!(matches!(case_model::<2>(&case), Err(Error::Unsupported(_))));
    }
}
