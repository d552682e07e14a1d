//! Path simulation of the transmission diffusion.
//!
//! Away from `Γ` the SDE is integrated by Euler-Maruyama with the one-sided
//! coefficients. Inside the layer `|ρ_s| <= h` the position is split at its
//! projection on `Γ`: the normal coordinate takes an exact skew step with the
//! frozen normal diffusivities `ν·a±ν`, the tangential part takes an Euler
//! step on the side where the normal coordinate lands, and the boundary
//! functional `K` is accumulated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientField;
use crate::error::{Error, Result};
use crate::geometry::{region_of, InterfaceGeometry, Region, Side};
use crate::linalg::{self, Vector};
use crate::scalar::Scalar;
use crate::skew1d::Skew1DModel;
use crate::stats::MeanVar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    LayerSkew,
    NaiveEulerOccupation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalTimeMode {
    SkewStep,
    Occupation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig<S> {
    pub dt_bulk: S,
    pub layer_halfwidth: S,
    pub horizon: S,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub local_time_mode: LocalTimeMode,
    /// Extra times in `(0, horizon)` at which the state is recorded.
    #[serde(default)]
    pub observation_times: Vec<S>,
    /// Keep the full `(t, x, K)` trace of every path.
    #[serde(default)]
    pub record_positions: bool,
}

impl<S: Scalar> SimConfig<S> {
    pub fn new(dt_bulk: S, layer_halfwidth: S, horizon: S, n_paths: usize, seed: u64) -> Self {
        Self {
            dt_bulk,
            layer_halfwidth,
            horizon,
            n_paths,
            seed,
            scheme: Scheme::LayerSkew,
            local_time_mode: LocalTimeMode::SkewStep,
            observation_times: Vec::new(),
            record_positions: false,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        if scheme == Scheme::NaiveEulerOccupation {
            self.local_time_mode = LocalTimeMode::Occupation;
        }
        self
    }

    pub fn with_local_time_mode(mut self, mode: LocalTimeMode) -> Self {
        self.local_time_mode = mode;
        self
    }

    pub fn with_observation_times(mut self, times: Vec<S>) -> Self {
        self.observation_times = times;
        self
    }

    /// Hard errors, then a list of warnings (currently: layer narrower than `3√(Λ dt)`).
    pub fn validate(&self, big_lambda: S) -> Result<Vec<String>> {
        let positive = |name: &str, v: S| {
            if v > S::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("dt_bulk", self.dt_bulk)?;
        positive("layer_halfwidth", self.layer_halfwidth)?;
        positive("horizon", self.horizon)?;
        if self.scheme == Scheme::NaiveEulerOccupation && self.local_time_mode == LocalTimeMode::SkewStep {
            return Err(Error::Config(
                "local_time_mode skew_step needs the layer_skew scheme; the naive scheme only supports occupation".into(),
            ));
        }
        for &t in &self.observation_times {
            if !(t > S::zero() && t <= self.horizon) {
                return Err(Error::Config(format!("observation time {t} outside (0, horizon = {}]", self.horizon)));
            }
        }
        let mut warnings = Vec::new();
        let min_h = S::c(3.0) * (big_lambda * self.dt_bulk).sqrt();
        if self.layer_halfwidth < min_h {
            warnings.push(format!(
                "layer_halfwidth {} is below 3 sqrt(Lambda dt) = {}; bulk steps may jump across the layer",
                self.layer_halfwidth, min_h
            ));
        }
        Ok(warnings)
    }

    /// Sorted distinct stopping times ending with the horizon.
    fn stops(&self) -> Vec<S> {
        let mut v: Vec<S> = self.observation_times.iter().copied().filter(|&t| t < self.horizon).collect();
        v.push(self.horizon);
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory<S, const D: usize> {
    /// `(t, x, K)` samples when tracing is enabled; empty otherwise.
    pub positions: Vec<(S, Vec<S>, S)>,
    /// `K` in the configured local-time mode.
    pub k: S,
    /// `K` from the exact skew-step increments (zero for the naive scheme).
    pub k_skew_step: S,
    /// `K` from the occupation estimator.
    pub k_occupation: S,
    pub occupation_plus: S,
    pub occupation_minus: S,
    pub occupation_layer: S,
    #[serde(skip)]
    pub terminal: Vector<S, D>,
    /// States at the configured observation times, in increasing time order.
    #[serde(skip)]
    pub snapshots: Vec<Vector<S, D>>,
    pub steps: u64,
    pub layer_steps: u64,
    /// Steps with a positive `K` increment that were not classified `LAYER`.
    pub support_violations: u64,
    /// Steps whose `K` increment was negative or not finite.
    pub monotonicity_violations: u64,
}

/// Result of one layer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerStep<S, const D: usize> {
    pub position: Vector<S, D>,
    pub dk_skew_step: S,
    pub dk_occupation: S,
}

pub struct Simulator<'a, S: Scalar, const D: usize> {
    field: &'a CoefficientField<S, D>,
    geom: &'a InterfaceGeometry<S, D>,
    config: &'a SimConfig<S>,
    diagonal_model: Option<Skew1DModel<S>>,
    warnings: Vec<String>,
}

#[inline]
fn normals<S: Scalar, const D: usize>(rng: &mut ChaCha8Rng) -> Vector<S, D> {
    std::array::from_fn(|_| {
        let v: f64 = StandardNormal.sample(rng);
        S::c(v)
    })
}

impl<'a, S: Scalar, const D: usize> Simulator<'a, S, D> {
    pub fn new(field: &'a CoefficientField<S, D>, geom: &'a InterfaceGeometry<S, D>, config: &'a SimConfig<S>) -> Result<Self> {
        let warnings = config.validate(field.big_lambda())?;
        let diagonal_model = match field.diagonal_constants() {
            Some((ep, em)) => Some(Skew1DModel::new(ep, em)?),
            None => None,
        };
        Ok(Self { field, geom, config, diagonal_model, warnings })
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn config(&self) -> &SimConfig<S> {
        self.config
    }

    /// Random stream of path `index`: ChaCha8 keyed by the seed, one stream per path.
    pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        rng
    }

    /// `X' = X + b dt + σ √dt ξ` with the coefficients of `side`.
    pub fn euler_step(&self, x: &Vector<S, D>, side: Side, dt: S, xi: &Vector<S, D>) -> Result<Vector<S, D>> {
        let b = self.field.divergence_drift(x, side);
        let sigma = self.field.sigma(x, side)?;
        let noise = linalg::matvec(&sigma, xi);
        let sq = dt.sqrt();
        Ok(std::array::from_fn(|k| x[k] + b[k] * dt + noise[k] * sq))
    }

    /// Occupation reading of `dK` for a step started at signed distance `rho`:
    /// `dt 1{|ρ| < h} 2 e_side / (h (e₊ + e₋))`.
    #[inline]
    pub fn occupation_increment(rho: S, h: S, dt: S, e_plus: S, e_minus: S) -> S {
        if rho.abs() >= h {
            return S::zero();
        }
        let e_side = if rho >= S::zero() { e_plus } else { e_minus };
        dt * S::c(2.0) * e_side / (h * (e_plus + e_minus))
    }

    /// Layer step from `x` with one normal, two uniforms, and a `D`-vector of normals.
    pub fn layer_step_with_variates(
        &self,
        x: &Vector<S, D>,
        dt: S,
        xi_normal: S,
        u1: S,
        u2: S,
        xi: &Vector<S, D>,
    ) -> Result<LayerStep<S, D>> {
        let proj = self.geom.closest(x)?;
        let (p, nu, n) = (proj.point, proj.normal, proj.signed_distance);
        let (e_plus, e_minus) = self.field.normal_diffusivities(&p, &nu);
        let model = match self.diagonal_model {
            Some(m) => m,
            None => Skew1DModel::new(e_plus, e_minus)?,
        };
        let step = model.step_from_variates(n, dt, xi_normal, u1, u2);
        let dk_skew = step.local_time / e_minus;
        let dk_occ = Self::occupation_increment(n, self.config.layer_halfwidth, dt, e_plus, e_minus);
        let side = Side::of_signed(step.y);

        let mut out = linalg::axpy(&p, step.y, &nu);
        if D > 1 || step.y != S::zero() {
            // Drift (on the landing side; none exactly on Γ) and tangential noise.
            let b = if step.y == S::zero() { linalg::zero() } else { self.field.divergence_drift(&p, side) };
            let sigma = self.field.sigma(&p, side)?;
            let noise = linalg::matvec(&sigma, xi);
            let sq = dt.sqrt();
            let w: Vector<S, D> = std::array::from_fn(|k| b[k] * dt + noise[k] * sq);
            let wn = linalg::dot(&w, &nu);
            let tangential = linalg::axpy(&w, -wn, &nu);
            out = linalg::add(&out, &tangential);
            out = linalg::axpy(&out, linalg::dot(&b, &nu) * dt, &nu);
        }
        let dk = match self.config.local_time_mode {
            LocalTimeMode::SkewStep => dk_skew,
            LocalTimeMode::Occupation => dk_occ,
        };
        if D > 1 && dk > S::zero() && self.field.diagonal_constants().is_none() {
            // Tangential part of ½(γ₊ - γ₋) dK; the normal part is in the skew step.
            let (gp, gm) = self.field.conormal_at_projection(&p, &nu);
            let jump = linalg::sub(&gp, &gm);
            let jn = linalg::dot(&jump, &nu);
            let jt = linalg::axpy(&jump, -jn, &nu);
            out = linalg::axpy(&out, S::c(0.5) * dk, &jt);
        }
        Ok(LayerStep { position: out, dk_skew_step: dk_skew, dk_occupation: dk_occ })
    }

    pub fn layer_step(&self, x: &Vector<S, D>, dt: S, rng: &mut ChaCha8Rng) -> Result<LayerStep<S, D>> {
        let xi_n: f64 = StandardNormal.sample(rng);
        let u1: f64 = Open01.sample(rng);
        let u2: f64 = Open01.sample(rng);
        let xi = normals::<S, D>(rng);
        self.layer_step_with_variates(x, dt, S::c(xi_n), S::c(u1), S::c(u2), &xi)
    }

    pub fn simulate_path(&self, x0: &Vector<S, D>, path_index: u64) -> Result<Trajectory<S, D>> {
        let cfg = self.config;
        let mut rng = Self::path_rng(cfg.seed, path_index);
        let h = cfg.layer_halfwidth;
        let stops = cfg.stops();
        let mut x = *x0;
        let mut t = S::zero();
        let mut tr = Trajectory {
            positions: Vec::new(),
            k: S::zero(),
            k_skew_step: S::zero(),
            k_occupation: S::zero(),
            occupation_plus: S::zero(),
            occupation_minus: S::zero(),
            occupation_layer: S::zero(),
            terminal: x,
            snapshots: Vec::with_capacity(stops.len().saturating_sub(1)),
            steps: 0,
            layer_steps: 0,
            support_violations: 0,
            monotonicity_violations: 0,
        };
        if cfg.record_positions {
            tr.positions.push((t, x.to_vec(), S::zero()));
        }
        for (si, &stop) in stops.iter().enumerate() {
            let span = stop - t;
            let n_steps = ((span / cfg.dt_bulk) - S::c(1e-9)).ceil().max(S::zero()).to_usize().unwrap_or(0);
            let n_steps = n_steps.max(usize::from(span > S::zero()));
            for k in 0..n_steps {
                let dt = if k + 1 == n_steps { stop - t } else { cfg.dt_bulk };
                if !(dt > S::zero()) {
                    break;
                }
                let proj = self.geom.closest(&x)?;
                let rho = proj.signed_distance;
                let region = region_of(rho, h);
                let (dk, dk_skew, dk_occ);
                match (cfg.scheme, region) {
                    (Scheme::LayerSkew, Region::Layer) => {
                        let s = self.layer_step(&x, dt, &mut rng)?;
                        x = s.position;
                        dk_skew = s.dk_skew_step;
                        dk_occ = s.dk_occupation;
                        dk = match cfg.local_time_mode {
                            LocalTimeMode::SkewStep => dk_skew,
                            LocalTimeMode::Occupation => dk_occ,
                        };
                    }
                    (Scheme::NaiveEulerOccupation, Region::Layer) => {
                        let side = Side::of_signed(rho);
                        let (ep, em) = self.field.normal_diffusivities(&proj.point, &proj.normal);
                        let xi = normals::<S, D>(&mut rng);
                        x = self.euler_step(&x, side, dt, &xi)?;
                        dk_skew = S::zero();
                        dk_occ = Self::occupation_increment(rho, h, dt, ep, em);
                        dk = dk_occ;
                    }
                    (_, bulk) => {
                        let side = if bulk == Region::PlusBulk { Side::Plus } else { Side::Minus };
                        let xi = normals::<S, D>(&mut rng);
                        x = self.euler_step(&x, side, dt, &xi)?;
                        dk_skew = S::zero();
                        dk_occ = S::zero();
                        dk = S::zero();
                    }
                }
                match region {
                    Region::PlusBulk => tr.occupation_plus = tr.occupation_plus + dt,
                    Region::MinusBulk => tr.occupation_minus = tr.occupation_minus + dt,
                    Region::Layer => {
                        tr.occupation_layer = tr.occupation_layer + dt;
                        tr.layer_steps += 1;
                    }
                }
                if !(dk >= S::zero()) || !dk.is_finite() {
                    tr.monotonicity_violations += 1;
                }
                if dk > S::zero() && region != Region::Layer {
                    tr.support_violations += 1;
                }
                tr.k = tr.k + dk;
                tr.k_skew_step = tr.k_skew_step + dk_skew;
                tr.k_occupation = tr.k_occupation + dk_occ;
                tr.steps += 1;
                t = if k + 1 == n_steps { stop } else { t + dt };
                if cfg.record_positions {
                    tr.positions.push((t, x.to_vec(), tr.k));
                }
            }
            t = stop;
            if si + 1 < stops.len() {
                tr.snapshots.push(x);
            }
        }
        tr.terminal = x;
        Ok(tr)
    }

    /// Runs `config.n_paths` paths in parallel; results are in path order.
    pub fn run_paths<T, F>(&self, x0: &Vector<S, D>, per_path: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64, Trajectory<S, D>) -> T + Sync + Send,
    {
        let results: Vec<std::result::Result<T, (u64, String)>> = (0..self.config.n_paths as u64)
            .into_par_iter()
            .map(|i| self.simulate_path(x0, i).map(|tr| per_path(i, tr)).map_err(|e| (i, e.to_string())))
            .collect();
        let mut out = Vec::with_capacity(results.len());
        let mut failures = Vec::new();
        for r in results {
            match r {
                Ok(v) => out.push(v),
                Err(f) => failures.push(f),
            }
        }
        if failures.is_empty() {
            Ok(out)
        } else {
            Err(Error::Paths(failures))
        }
    }

    pub fn simulate_ensemble(&self, x0: &Vector<S, D>) -> Result<EnsembleSummary<S, D>> {
        let trajectories = self.run_paths(x0, |_, mut tr| {
            tr.positions.clear();
            tr
        })?;
        Ok(EnsembleSummary::from_trajectories(&trajectories))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary<S, const D: usize> {
    pub n_paths: usize,
    #[serde(skip)]
    pub terminals: Vec<Vector<S, D>>,
    pub terminal_mean: Vec<f64>,
    pub k: MeanVar,
    pub k_skew_step: MeanVar,
    pub k_occupation: MeanVar,
    pub occupation_plus: MeanVar,
    pub occupation_minus: MeanVar,
    pub occupation_layer: MeanVar,
    pub paths_with_positive_k: usize,
    pub support_violations: u64,
    pub monotonicity_violations: u64,
    pub layer_steps: u64,
    pub steps: u64,
}

impl<S: Scalar, const D: usize> EnsembleSummary<S, D> {
    pub fn from_trajectories(trs: &[Trajectory<S, D>]) -> Self {
        let mut s = Self {
            n_paths: trs.len(),
            terminals: Vec::with_capacity(trs.len()),
            terminal_mean: vec![0.0; D],
            k: MeanVar::default(),
            k_skew_step: MeanVar::default(),
            k_occupation: MeanVar::default(),
            occupation_plus: MeanVar::default(),
            occupation_minus: MeanVar::default(),
            occupation_layer: MeanVar::default(),
            paths_with_positive_k: 0,
            support_violations: 0,
            monotonicity_violations: 0,
            layer_steps: 0,
            steps: 0,
        };
        for tr in trs {
            s.terminals.push(tr.terminal);
            s.k.push(tr.k.as_f64());
            s.k_skew_step.push(tr.k_skew_step.as_f64());
            s.k_occupation.push(tr.k_occupation.as_f64());
            s.occupation_plus.push(tr.occupation_plus.as_f64());
            s.occupation_minus.push(tr.occupation_minus.as_f64());
            s.occupation_layer.push(tr.occupation_layer.as_f64());
            s.paths_with_positive_k += usize::from(tr.k > S::zero());
            s.support_violations += tr.support_violations;
            s.monotonicity_violations += tr.monotonicity_violations;
            s.layer_steps += tr.layer_steps;
            s.steps += tr.steps;
        }
        for (k, m) in s.terminal_mean.iter_mut().enumerate() {
            let mv: MeanVar = trs.iter().map(|tr| tr.terminal[k].as_f64()).collect();
            *m = mv.mean;
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> InterfaceGeometry<f64, 1> {
        InterfaceGeometry::hyperplane([1.0], 0.0).unwrap()
    }

    #[test]
    fn naive_scheme_rejects_skew_step_mode() {
        let cfg = SimConfig::new(1e-3, 0.2, 1.0, 10, 1)
            .with_scheme(Scheme::NaiveEulerOccupation)
            .with_local_time_mode(LocalTimeMode::SkewStep);
        assert!(matches!(cfg.validate(1.0), Err(Error::Config(_))));
    }

    #[test]
    fn narrow_layer_warns() {
        let cfg = SimConfig::new(1e-2, 0.05, 1.0, 10, 1);
        assert_eq!(cfg.validate(1.0).unwrap().len(), 1);
        let cfg = SimConfig::new(1e-4, 0.05, 1.0, 10, 1);
        assert!(cfg.validate(1.0).unwrap().is_empty());
    }

    #[test]
    fn zero_noise_euler_is_explicit_euler() {
        let a = |x: &[f64; 2]| linalg::scaled_identity(1.0 + x[0] * x[0]);
        let field = CoefficientField::new(a, a, 1.0, 10.0)
            .unwrap()
            .with_divergence(std::sync::Arc::new(|x: &[f64; 2]| [2.0 * x[0], 0.0]), std::sync::Arc::new(|x: &[f64; 2]| [2.0 * x[0], 0.0]));
        let geom = InterfaceGeometry::hyperplane([1.0, 0.0], -10.0).unwrap();
        let cfg = SimConfig::new(1e-2, 0.1, 1.0, 1, 0);
        let sim = Simulator::new(&field, &geom, &cfg).unwrap();
        let mut x = [1.0, 0.5];
        let mut y = x;
        for _ in 0..50 {
            x = sim.euler_step(&x, Side::Plus, 1e-2, &[0.0, 0.0]).unwrap();
            y = [y[0] + 2.0 * y[0] * 1e-2, y[1]];
        }
        assert_eq!(x, y);
    }

    #[test]
    fn occupation_sums_to_horizon_and_k_is_supported_on_layer() {
        let field = CoefficientField::<f64, 1>::diagonal(1.0, 4.0).unwrap();
        let geom = line();
        let cfg = SimConfig::new(1e-3, 0.2, 0.7, 50, 42).with_observation_times(vec![0.25, 0.5]);
        let sim = Simulator::new(&field, &geom, &cfg).unwrap();
        for i in 0..50 {
            let tr = sim.simulate_path(&[0.1], i).unwrap();
            let total = tr.occupation_plus + tr.occupation_minus + tr.occupation_layer;
            assert!((total - 0.7).abs() <= 1e-12 * 0.7, "{total}");
            assert_eq!(tr.support_violations, 0);
            assert_eq!(tr.monotonicity_violations, 0);
            assert_eq!(tr.snapshots.len(), 2);
        }
    }

    #[test]
    fn same_seed_same_path_different_index_different_path() {
        let field = CoefficientField::<f64, 2>::diagonal(1.0, 3.0).unwrap();
        let geom = InterfaceGeometry::sphere([0.0, 0.0], 1.0).unwrap();
        let cfg = SimConfig::new(1e-3, 0.1, 0.1, 4, 7);
        let sim = Simulator::new(&field, &geom, &cfg).unwrap();
        let a = sim.simulate_path(&[0.95, 0.0], 3).unwrap();
        let b = sim.simulate_path(&[0.95, 0.0], 3).unwrap();
        let c = sim.simulate_path(&[0.95, 0.0], 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.terminal, c.terminal);
    }

    #[test]
    fn k_trace_is_nondecreasing() {
        let field = CoefficientField::<f64, 1>::diagonal(1.0, 4.0).unwrap();
        let geom = line();
        let mut cfg = SimConfig::new(1e-3, 0.2, 0.5, 1, 9);
        cfg.record_positions = true;
        let sim = Simulator::new(&field, &geom, &cfg).unwrap();
        let tr = sim.simulate_path(&[0.0], 0).unwrap();
        assert_eq!(tr.positions.len(), 501);
        assert!(tr.positions.windows(2).all(|w| w[1].2 >= w[0].2));
        assert!(tr.k > 0.0);
    }

    #[test]
    fn empty_ensemble() {
        let field = CoefficientField::<f64, 1>::diagonal(1.0, 4.0).unwrap();
        let geom = line();
        let cfg = SimConfig::new(1e-3, 0.2, 0.5, 0, 9);
        let s = Simulator::new(&field, &geom, &cfg).unwrap().simulate_ensemble(&[0.0]).unwrap();
        assert_eq!(s.n_paths, 0);
        assert_eq!(s.k.count, 0);
    }
}
