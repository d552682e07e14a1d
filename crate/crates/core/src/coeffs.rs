//! Coefficient matrix `a(x)` of the divergence-form operator, given as two
//! one-sided smooth extensions `a₊`, `a₋` glued along the interface.
//!
//! The diffusion matrix of the associated SDE is the symmetric positive square
//! root `σ` of `2a`, and the drift is the row divergence `b_k = Σ_j ∂_j a_kj`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{InterfaceGeometry, Side};
use crate::linalg::{self, Matrix, Vector};
use crate::scalar::Scalar;

pub type MatrixField<S, const D: usize> = Arc<dyn Fn(&Vector<S, D>) -> Matrix<S, D> + Send + Sync>;
pub type DriftField<S, const D: usize> = Arc<dyn Fn(&Vector<S, D>) -> Vector<S, D> + Send + Sync>;

#[derive(Clone)]
pub struct CoefficientField<S: Scalar, const D: usize> {
    a_plus: MatrixField<S, D>,
    a_minus: MatrixField<S, D>,
    a_plus_div: Option<DriftField<S, D>>,
    a_minus_div: Option<DriftField<S, D>>,
    lambda: S,
    big_lambda: S,
    diagonal: Option<(S, S)>,
}

impl<S: Scalar, const D: usize> fmt::Debug for CoefficientField<S, D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("lambda", &self.lambda)
            .field("Lambda", &self.big_lambda)
            .field("diagonal", &self.diagonal)
            .field("analytic_divergence", &(self.a_plus_div.is_some(), self.a_minus_div.is_some()))
            .finish()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EllipticityOffender {
    pub point: Vec<f64>,
    pub side: Side,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EllipticityReport {
    pub pass: bool,
    pub lambda: f64,
    pub big_lambda: f64,
    pub observed_min: f64,
    pub observed_max: f64,
    pub max_asymmetry: f64,
    pub samples: usize,
    /// Evaluations outside `[λ(1-1e-9), Λ(1+1e-9)]`, worst first (at most 16).
    pub offenders: Vec<EllipticityOffender>,
}

fn check_bounds<S: Scalar>(lambda: S, big_lambda: S) -> Result<()> {
    if !(lambda > S::zero()) || !(big_lambda >= lambda) || !big_lambda.is_finite() {
        return Err(Error::Coefficient(format!(
            "ellipticity and boundedness require 0 < lambda <= Lambda < inf, got lambda = {lambda}, Lambda = {big_lambda}"
        )));
    }
    Ok(())
}

impl<S: Scalar, const D: usize> CoefficientField<S, D> {
    /// Piecewise-constant isotropic coefficient `a = ε± I`.
    pub fn diagonal(eps_plus: S, eps_minus: S) -> Result<Self> {
        for (name, v) in [("eps_plus", eps_plus), ("eps_minus", eps_minus)] {
            if !(v > S::zero()) || !v.is_finite() {
                return Err(Error::Coefficient(format!(
                    "{name} = {v} violates uniform ellipticity and boundedness (need 0 < {name} < inf)"
                )));
            }
        }
        let (ap, am) = (linalg::scaled_identity::<S, D>(eps_plus), linalg::scaled_identity::<S, D>(eps_minus));
        let zero: DriftField<S, D> = Arc::new(|_| linalg::zero());
        Ok(Self {
            a_plus: Arc::new(move |_| ap),
            a_minus: Arc::new(move |_| am),
            a_plus_div: Some(zero.clone()),
            a_minus_div: Some(zero),
            lambda: eps_plus.min(eps_minus),
            big_lambda: eps_plus.max(eps_minus),
            diagonal: Some((eps_plus, eps_minus)),
        })
    }

    /// General one-sided extensions with declared ellipticity constants.
    /// Drifts fall back to central finite differences until supplied.
    pub fn new(
        a_plus: impl Fn(&Vector<S, D>) -> Matrix<S, D> + Send + Sync + 'static,
        a_minus: impl Fn(&Vector<S, D>) -> Matrix<S, D> + Send + Sync + 'static,
        lambda: S,
        big_lambda: S,
    ) -> Result<Self> {
        check_bounds(lambda, big_lambda)?;
        Ok(Self {
            a_plus: Arc::new(a_plus),
            a_minus: Arc::new(a_minus),
            a_plus_div: None,
            a_minus_div: None,
            lambda,
            big_lambda,
            diagonal: None,
        })
    }

    /// Constant (possibly anisotropic) matrices on each side.
    pub fn constant(a_plus: Matrix<S, D>, a_minus: Matrix<S, D>, lambda: S, big_lambda: S) -> Result<Self> {
        let zero: DriftField<S, D> = Arc::new(|_| linalg::zero());
        Ok(Self::new(move |_| a_plus, move |_| a_minus, lambda, big_lambda)?
            .with_divergence(zero.clone(), zero))
    }

    pub fn with_divergence(mut self, plus: DriftField<S, D>, minus: DriftField<S, D>) -> Self {
        self.a_plus_div = Some(plus);
        self.a_minus_div = Some(minus);
        self
    }

    /// Drops analytic divergence closures (finite differences are used instead).
    pub fn without_divergence(mut self) -> Self {
        if self.diagonal.is_none() {
            self.a_plus_div = None;
            self.a_minus_div = None;
        }
        self
    }

    pub fn lambda(&self) -> S {
        self.lambda
    }

    pub fn big_lambda(&self) -> S {
        self.big_lambda
    }

    pub fn diagonal_constants(&self) -> Option<(S, S)> {
        self.diagonal
    }

    #[inline]
    pub fn a(&self, x: &Vector<S, D>, side: Side) -> Matrix<S, D> {
        match side {
            Side::Plus => (self.a_plus)(x),
            Side::Minus => (self.a_minus)(x),
        }
    }

    /// Symmetric positive square root of `2 a±(x)`.
    pub fn sigma(&self, x: &Vector<S, D>, side: Side) -> Result<Matrix<S, D>> {
        if let Some((ep, em)) = self.diagonal {
            let eps = if side == Side::Plus { ep } else { em };
            return Ok(linalg::scaled_identity((S::c(2.0) * eps).sqrt()));
        }
        let a = self.a(x, side);
        let (w, q) = linalg::sym_eigen(&a);
        let floor = -S::c(1e-12) * self.big_lambda;
        if let Some(bad) = w.iter().find(|&&v| !(v > floor)) {
            return Err(Error::Coefficient(format!(
                "a at {:?} ({side:?}) is not positive definite (eigenvalue {bad})",
                x.iter().map(|v| v.as_f64()).collect::<Vec<_>>()
            )));
        }
        let roots: Vector<S, D> = std::array::from_fn(|i| (S::c(2.0) * w[i].max(S::zero())).sqrt());
        Ok(linalg::reassemble(&roots, &q))
    }

    /// Default finite-difference step `1e-5 (1 + |x|)`.
    pub fn default_fd_step(x: &Vector<S, D>) -> S {
        S::c(1e-5) * (S::one() + linalg::norm(x))
    }

    /// Row divergence `b_k = Σ_j ∂_j a_kj` of the extension on `side`.
    pub fn divergence_drift(&self, x: &Vector<S, D>, side: Side) -> Vector<S, D> {
        let analytic = match side {
            Side::Plus => &self.a_plus_div,
            Side::Minus => &self.a_minus_div,
        };
        match analytic {
            Some(b) => b(x),
            None => self.fd_divergence(x, side, Self::default_fd_step(x)),
        }
    }

    /// Central-difference divergence with step `h`.
    pub fn fd_divergence(&self, x: &Vector<S, D>, side: Side, h: S) -> Vector<S, D> {
        let mut b = linalg::zero::<S, D>();
        let two_h = S::c(2.0) * h;
        for j in 0..D {
            let mut xp = *x;
            let mut xm = *x;
            xp[j] = xp[j] + h;
            xm[j] = xm[j] - h;
            let ap = self.a(&xp, side);
            let am = self.a(&xm, side);
            for (k, bk) in b.iter_mut().enumerate() {
                *bk = *bk + (ap[k][j] - am[k][j]) / two_h;
            }
        }
        b
    }

    /// Co-normals `γ± = a±(x) ν(x)` at a point of `Γ`.
    pub fn conormal(
        &self,
        geom: &InterfaceGeometry<S, D>,
        x: &Vector<S, D>,
        tolerance: S,
    ) -> Result<(Vector<S, D>, Vector<S, D>)> {
        let p = geom.closest(x)?;
        if p.signed_distance.abs() > tolerance {
            return Err(Error::Contract(format!(
                "conormal requested off the interface (distance {})",
                p.signed_distance.abs()
            )));
        }
        Ok(self.conormal_at_projection(&p.point, &p.normal))
    }

    #[inline]
    pub fn conormal_at_projection(&self, point: &Vector<S, D>, normal: &Vector<S, D>) -> (Vector<S, D>, Vector<S, D>) {
        if let Some((ep, em)) = self.diagonal {
            return (linalg::scale(normal, ep), linalg::scale(normal, em));
        }
        (
            linalg::matvec(&self.a(point, Side::Plus), normal),
            linalg::matvec(&self.a(point, Side::Minus), normal),
        )
    }

    /// One-dimensional diffusivities `ν·a±ν` seen by the normal coordinate.
    #[inline]
    pub fn normal_diffusivities(&self, point: &Vector<S, D>, normal: &Vector<S, D>) -> (S, S) {
        if let Some(d) = self.diagonal {
            return d;
        }
        let (gp, gm) = self.conormal_at_projection(point, normal);
        (linalg::dot(normal, &gp), linalg::dot(normal, &gm))
    }

    pub fn audit_ellipticity(&self, sample_points: &[Vector<S, D>]) -> Result<EllipticityReport> {
        if sample_points.is_empty() {
            return Err(Error::Contract("ellipticity audit needs at least one sample point".into()));
        }
        let lo = self.lambda.as_f64() * (1.0 - 1e-9);
        let hi = self.big_lambda.as_f64() * (1.0 + 1e-9);
        let mut offenders = Vec::new();
        let (mut observed_min, mut observed_max, mut max_asym) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
        for x in sample_points {
            for side in [Side::Plus, Side::Minus] {
                let a = self.a(x, side);
                max_asym = max_asym.max(linalg::asymmetry(&a).as_f64());
                let (w, _) = linalg::sym_eigen(&a);
                let mn = w.iter().fold(f64::INFINITY, |m, v| m.min(v.as_f64()));
                let mx = w.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
                observed_min = observed_min.min(mn);
                observed_max = observed_max.max(mx);
                if mn < lo || mx > hi {
                    offenders.push(EllipticityOffender {
                        point: x.iter().map(|v| v.as_f64()).collect(),
                        side,
                        min_eigenvalue: mn,
                        max_eigenvalue: mx,
                    });
                }
            }
        }
        let badness = |o: &EllipticityOffender| (lo - o.min_eigenvalue).max(o.max_eigenvalue - hi);
        offenders.sort_by(|a, b| badness(b).partial_cmp(&badness(a)).unwrap());
        let symmetric = max_asym <= 1e-12 * self.big_lambda.as_f64();
        let pass = offenders.is_empty() && symmetric;
        offenders.truncate(16);
        Ok(EllipticityReport {
            pass,
            lambda: self.lambda.as_f64(),
            big_lambda: self.big_lambda.as_f64(),
            observed_min,
            observed_max,
            max_asymmetry: max_asym,
            samples: sample_points.len(),
            offenders,
        })
    }

    /// Overrides the declared constants (used to audit deliberate misdeclarations).
    pub fn with_declared_bounds(mut self, lambda: S, big_lambda: S) -> Result<Self> {
        check_bounds(lambda, big_lambda)?;
        self.lambda = lambda;
        self.big_lambda = big_lambda;
        Ok(self)
    }
}
