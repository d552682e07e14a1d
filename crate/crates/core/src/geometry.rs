//! Transmission interface `Γ = {φ = 0}` splitting space into `D₊ = {φ > 0}`
//! and `D₋ = {φ < 0}`.
//!
//! Distances are signed (positive in `D₊`); the unsigned distance to `Γ` is
//! the absolute value. Normals point into `D₊`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Vector};
use crate::scalar::Scalar;

/// Which side of the interface a point (or a coefficient branch) belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    /// Points on `Γ` are attributed to `D₊`, whose closure contains `Γ`.
    #[inline]
    pub fn of_signed<S: Scalar>(rho: S) -> Side {
        if rho >= S::zero() {
            Side::Plus
        } else {
            Side::Minus
        }
    }
}

/// Scheme-selection classification of a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Region {
    PlusBulk,
    MinusBulk,
    Layer,
}

pub type ScalarField<S, const D: usize> = Arc<dyn Fn(&Vector<S, D>) -> S + Send + Sync>;
pub type VectorField<S, const D: usize> = Arc<dyn Fn(&Vector<S, D>) -> Vector<S, D> + Send + Sync>;

/// User-supplied level set with its analytic gradient.
#[derive(Clone)]
pub struct LevelSet<S: Scalar, const D: usize> {
    pub phi: ScalarField<S, D>,
    pub grad: VectorField<S, D>,
    /// Absolute tolerance on the orthogonality residual of the projection.
    pub tolerance: S,
    pub max_iterations: usize,
}

#[derive(Clone)]
pub enum InterfaceKind<S: Scalar, const D: usize> {
    /// `Γ = {n·x = offset}`, `D₊ = {n·x > offset}`; `normal` is unit length.
    Hyperplane { offset: S, normal: Vector<S, D> },
    /// `Γ = {|x - center| = radius}`; `D₊` is the interior unless `plus_inside` is false.
    Sphere { center: Vector<S, D>, radius: S, plus_inside: bool },
    Generic(LevelSet<S, D>),
}

impl<S: Scalar, const D: usize> fmt::Debug for InterfaceKind<S, D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InterfaceKind::Hyperplane { offset, normal } => {
                f.debug_struct("Hyperplane").field("offset", offset).field("normal", normal).finish()
            }
            InterfaceKind::Sphere { center, radius, plus_inside } => f
                .debug_struct("Sphere")
                .field("center", center)
                .field("radius", radius)
                .field("plus_inside", plus_inside)
                .finish(),
            InterfaceKind::Generic(ls) => f
                .debug_struct("Generic")
                .field("tolerance", &ls.tolerance)
                .field("max_iterations", &ls.max_iterations)
                .finish_non_exhaustive(),
        }
    }
}

/// Closest point of `Γ` to a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection<S: Scalar, const D: usize> {
    pub point: Vector<S, D>,
    /// Unit normal at `point`, pointing into `D₊`.
    pub normal: Vector<S, D>,
    pub signed_distance: S,
}

#[derive(Debug, Clone)]
pub struct InterfaceGeometry<S: Scalar, const D: usize> {
    kind: InterfaceKind<S, D>,
    bounding_radius: S,
}

fn geometry_error<S: Scalar, const D: usize>(x: &Vector<S, D>, reason: impl Into<String>) -> Error {
    Error::Geometry { point: x.iter().map(|v| v.as_f64()).collect(), reason: reason.into() }
}

impl<S: Scalar, const D: usize> InterfaceGeometry<S, D> {
    pub fn hyperplane(normal: Vector<S, D>, offset: S) -> Result<Self> {
        let len = linalg::norm(&normal);
        if !(len > S::zero()) || !len.is_finite() {
            return Err(Error::Contract("hyperplane normal must be nonzero and finite".into()));
        }
        let normal = linalg::scale(&normal, S::one() / len);
        // Γ is a point in 1D; in higher dimensions the hyperplane is unbounded.
        let bounding_radius = if D == 1 { offset.abs() } else { S::infinity() };
        Ok(Self { kind: InterfaceKind::Hyperplane { offset, normal }, bounding_radius })
    }

    /// Sphere with `D₊` the interior.
    pub fn sphere(center: Vector<S, D>, radius: S) -> Result<Self> {
        Self::sphere_oriented(center, radius, true)
    }

    pub fn sphere_oriented(center: Vector<S, D>, radius: S, plus_inside: bool) -> Result<Self> {
        if !(radius > S::zero()) || !radius.is_finite() {
            return Err(Error::Contract(format!("sphere radius must be positive, got {radius}")));
        }
        let bounding_radius = linalg::norm(&center) + radius;
        Ok(Self { kind: InterfaceKind::Sphere { center, radius, plus_inside }, bounding_radius })
    }

    /// Level-set interface evaluated through the iterative closest-point projection.
    /// The projection tolerance defaults to `1e-10 * bounding_radius`.
    pub fn generic(
        phi: impl Fn(&Vector<S, D>) -> S + Send + Sync + 'static,
        grad: impl Fn(&Vector<S, D>) -> Vector<S, D> + Send + Sync + 'static,
        bounding_radius: S,
    ) -> Result<Self> {
        if !(bounding_radius > S::zero()) || !bounding_radius.is_finite() {
            return Err(Error::Contract("generic interface needs a finite positive bounding radius".into()));
        }
        let tolerance = (S::c(1e-10) * bounding_radius).max(S::epsilon() * S::c(16.0) * bounding_radius);
        Ok(Self {
            kind: InterfaceKind::Generic(LevelSet {
                phi: Arc::new(phi),
                grad: Arc::new(grad),
                tolerance,
                max_iterations: 50,
            }),
            bounding_radius,
        })
    }

    pub fn with_projection_tolerance(mut self, tol: S) -> Self {
        if let InterfaceKind::Generic(ls) = &mut self.kind {
            ls.tolerance = tol;
        }
        self
    }

    pub fn kind(&self) -> &InterfaceKind<S, D> {
        &self.kind
    }

    pub fn bounding_radius(&self) -> S {
        self.bounding_radius
    }

    pub fn levelset(&self, x: &Vector<S, D>) -> S {
        match &self.kind {
            InterfaceKind::Hyperplane { offset, normal } => linalg::dot(normal, x) - *offset,
            InterfaceKind::Sphere { center, radius, plus_inside } => {
                let r = linalg::norm(&linalg::sub(x, center));
                if *plus_inside {
                    *radius - r
                } else {
                    r - *radius
                }
            }
            InterfaceKind::Generic(ls) => (ls.phi)(x),
        }
    }

    pub fn levelset_gradient(&self, x: &Vector<S, D>) -> Vector<S, D> {
        match &self.kind {
            InterfaceKind::Hyperplane { normal, .. } => *normal,
            InterfaceKind::Sphere { center, plus_inside, .. } => {
                let v = linalg::sub(x, center);
                let r = linalg::norm(&v);
                if r == S::zero() {
                    return linalg::zero();
                }
                let s = if *plus_inside { -S::one() / r } else { S::one() / r };
                linalg::scale(&v, s)
            }
            InterfaceKind::Generic(ls) => (ls.grad)(x),
        }
    }

    /// Side of `x` from the sign of the level set.
    pub fn side(&self, x: &Vector<S, D>) -> Side {
        Side::of_signed(self.levelset(x))
    }

    /// Closest point on `Γ`, its normal, and the signed distance.
    pub fn closest(&self, x: &Vector<S, D>) -> Result<Projection<S, D>> {
        match &self.kind {
            InterfaceKind::Hyperplane { offset, normal } => {
                let s = linalg::dot(normal, x) - *offset;
                Ok(Projection { point: linalg::axpy(x, -s, normal), normal: *normal, signed_distance: s })
            }
            InterfaceKind::Sphere { center, radius, plus_inside } => {
                let v = linalg::sub(x, center);
                let r = linalg::norm(&v);
                // At the center every boundary point is closest; pick the first axis.
                let dir = if r > S::zero() {
                    linalg::scale(&v, S::one() / r)
                } else {
                    let mut e = linalg::zero::<S, D>();
                    e[0] = S::one();
                    e
                };
                let point = linalg::axpy(center, *radius, &dir);
                let (normal, sd) = if *plus_inside {
                    (linalg::scale(&dir, -S::one()), *radius - r)
                } else {
                    (dir, r - *radius)
                };
                Ok(Projection { point, normal, signed_distance: sd })
            }
            InterfaceKind::Generic(ls) => self.closest_generic(ls, x),
        }
    }

    fn newton_onto(&self, ls: &LevelSet<S, D>, start: &Vector<S, D>, budget: &mut usize) -> Result<Vector<S, D>> {
        let mut y = *start;
        let tiny = ls.tolerance * S::c(1e-3);
        loop {
            let f = (ls.phi)(&y);
            let g = (ls.grad)(&y);
            let g2 = linalg::dot(&g, &g);
            if !(g2 > S::zero()) || !g2.is_finite() {
                return Err(geometry_error(start, "level-set gradient vanishes during projection"));
            }
            let step = f / g2;
            if (f.abs() / g2.sqrt()) <= tiny {
                return Ok(y);
            }
            if *budget == 0 {
                return Err(geometry_error(start, "projection did not converge within the iteration budget"));
            }
            *budget -= 1;
            y = linalg::axpy(&y, -step, &g);
        }
    }

    fn closest_generic(&self, ls: &LevelSet<S, D>, x: &Vector<S, D>) -> Result<Projection<S, D>> {
        let mut budget = ls.max_iterations;
        let mut y = self.newton_onto(ls, x, &mut budget)?;
        loop {
            let g = (ls.grad)(&y);
            let n = linalg::scale(&g, S::one() / linalg::norm(&g));
            let r = linalg::sub(x, &y);
            let tangential = linalg::axpy(&r, -linalg::dot(&r, &n), &n);
            if linalg::norm(&tangential) <= ls.tolerance {
                let phi_x = (ls.phi)(x);
                let dist = linalg::norm(&r);
                let sd = if phi_x >= S::zero() { dist } else { -dist };
                return Ok(Projection { point: y, normal: n, signed_distance: sd });
            }
            if budget == 0 {
                return Err(geometry_error(x, "closest-point iteration did not converge"));
            }
            budget -= 1;
            let foot = linalg::add(&y, &tangential);
            y = self.newton_onto(ls, &foot, &mut budget)?;
        }
    }

    pub fn signed_distance(&self, x: &Vector<S, D>) -> Result<S> {
        Ok(self.closest(x)?.signed_distance)
    }

    pub fn project(&self, x: &Vector<S, D>) -> Result<Vector<S, D>> {
        Ok(self.closest(x)?.point)
    }

    /// Unit normal at the projection of `x`, for `x` within `layer_tolerance` of `Γ`.
    pub fn normal_at(&self, x: &Vector<S, D>, layer_tolerance: S) -> Result<Vector<S, D>> {
        let p = self.closest(x)?;
        if p.signed_distance.abs() > layer_tolerance {
            return Err(Error::Contract(format!(
                "normal requested at distance {} from the interface (layer tolerance {})",
                p.signed_distance.abs(),
                layer_tolerance
            )));
        }
        Ok(p.normal)
    }

    pub fn classify(&self, x: &Vector<S, D>, layer_halfwidth: S) -> Result<Region> {
        Ok(region_of(self.signed_distance(x)?, layer_halfwidth))
    }
}

/// `LAYER` iff `|ρ_s| <= h`, otherwise the side of `ρ_s`.
#[inline]
pub fn region_of<S: Scalar>(signed_distance: S, layer_halfwidth: S) -> Region {
    if signed_distance.abs() <= layer_halfwidth {
        Region::Layer
    } else if signed_distance > S::zero() {
        Region::PlusBulk
    } else {
        Region::MinusBulk
    }
}
