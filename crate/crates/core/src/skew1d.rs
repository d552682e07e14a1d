//! One-dimensional transmission diffusion with generator `(ε u')'`,
//! `ε = ε₊` on `y > 0` and `ε₋` on `y < 0`.
//!
//! The transition density is a method-of-images combination of heat kernels
//! `g_ε(t, u) = exp(-u²/(4εt)) / √(4πεt)`. For a start point on the `+` side,
//!
//! ```text
//! y > 0:  g₊(t, y - x) + β g₊(t, y + x)
//! y < 0:  κ g₋(t, y - x √(ε₋/ε₊))
//! ```
//!
//! and symmetrically for a start on the `-` side. `β` and `κ` are fixed by
//! continuity of the density and of the flux `ε ∂_y p` at the origin.

use rand::Rng;
use rand_distr::{Distribution, Open01, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::Side;
use crate::quad::{self, Tolerance};
use crate::scalar::Scalar;

/// Reflection and transmission weights for a start point on one side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageCoefficients<S> {
    pub reflection: S,
    pub transmission: S,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Skew1DModel<S: Scalar> {
    eps_plus: S,
    eps_minus: S,
    from_plus: ImageCoefficients<S>,
    from_minus: ImageCoefficients<S>,
}

/// Outcome of one exact step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewStep<S> {
    pub y: S,
    /// Right local time at 0 of the distance process accrued during the step.
    pub local_time: S,
    /// Whether the step touched the origin.
    pub hit: bool,
}

/// Solves continuity `(1 + β)/√e_s = κ/√e_o` and flux `1 - β = κ`, where
/// `e_s` is the diffusivity on the start side and `e_o` on the other.
fn image_coefficients<S: Scalar>(e_same: S, e_other: S) -> ImageCoefficients<S> {
    // [ 1/√e_s  -1/√e_o ] [β]   [ -1/√e_s ]
    // [   1        1    ] [κ] = [    1    ]
    let (a11, a12, a21, a22) = (S::one() / e_same.sqrt(), -S::one() / e_other.sqrt(), S::one(), S::one());
    let (r1, r2) = (-S::one() / e_same.sqrt(), S::one());
    let det = a11 * a22 - a12 * a21;
    ImageCoefficients { reflection: (r1 * a22 - a12 * r2) / det, transmission: (a11 * r2 - a21 * r1) / det }
}

#[inline]
fn heat_kernel<S: Scalar>(eps: S, t: S, u: S) -> S {
    let four_et = S::c(4.0) * eps * t;
    (-u * u / four_et).exp() / (S::pi() * four_et).sqrt()
}

impl<S: Scalar> Skew1DModel<S> {
    pub fn new(eps_plus: S, eps_minus: S) -> Result<Self> {
        for (name, v) in [("eps_plus", eps_plus), ("eps_minus", eps_minus)] {
            if !(v > S::zero()) || !v.is_finite() {
                return Err(Error::Coefficient(format!(
                    "{name} = {v} violates uniform ellipticity and boundedness (need 0 < {name} < inf)"
                )));
            }
        }
        Ok(Self {
            eps_plus,
            eps_minus,
            from_plus: image_coefficients(eps_plus, eps_minus),
            from_minus: image_coefficients(eps_minus, eps_plus),
        })
    }

    pub fn eps_plus(&self) -> S {
        self.eps_plus
    }

    pub fn eps_minus(&self) -> S {
        self.eps_minus
    }

    pub fn image_coefficients(&self, start: Side) -> ImageCoefficients<S> {
        match start {
            Side::Plus => self.from_plus,
            Side::Minus => self.from_minus,
        }
    }

    #[inline]
    fn eps(&self, side: Side) -> S {
        match side {
            Side::Plus => self.eps_plus,
            Side::Minus => self.eps_minus,
        }
    }

    /// Probability that an excursion from the origin is positive, `√ε₊/(√ε₊ + √ε₋)`.
    pub fn skewness(&self) -> S {
        let (sp, sm) = (self.eps_plus.sqrt(), self.eps_minus.sqrt());
        sp / (sp + sm)
    }

    pub fn transition_density(&self, t: S, x: S, y: S) -> Result<S> {
        if !(t > S::zero()) {
            return Err(Error::Domain(format!("transition density needs t > 0, got {t}")));
        }
        Ok(self.density_unchecked(t, x, y))
    }

    #[inline]
    pub(crate) fn density_unchecked(&self, t: S, x: S, y: S) -> S {
        // Reduce to a start on the `+` side by reflecting space.
        let side = Side::of_signed(x);
        let (xs, ys) = if side == Side::Plus { (x, y) } else { (-x, -y) };
        let other = if side == Side::Plus { Side::Minus } else { Side::Plus };
        let (e_s, e_o) = (self.eps(side), self.eps(other));
        let c = self.image_coefficients(side);
        if ys >= S::zero() {
            heat_kernel(e_s, t, ys - xs) + c.reflection * heat_kernel(e_s, t, ys + xs)
        } else {
            c.transmission * heat_kernel(e_o, t, ys - xs * (e_o / e_s).sqrt())
        }
    }

    /// `∫_0^∞ p(t, x, y) dy` by adaptive quadrature.
    pub fn crossing_probability(&self, t: S, x: S) -> Result<S> {
        if !(t > S::zero()) {
            return Err(Error::Domain(format!("crossing probability needs t > 0, got {t}")));
        }
        let tol = Tolerance { abs: 1e-13, rel: 1e-12, max_intervals: 4000 };
        let scale = |eps: S| S::c(40.0) * (eps * t).sqrt();
        if x >= S::zero() {
            // Integrate the far side, whose mass is small, and complement.
            let far = x * (self.eps_minus / self.eps_plus).sqrt();
            let lo = -far - scale(self.eps_minus);
            let breaks = [lo, (lo - far) * S::c(0.5), -far, -far * S::c(0.5), S::zero()];
            let breaks = sorted_distinct(&breaks);
            let minus = quad::integrate_panels(|y| self.density_unchecked(t, x, y), &breaks, tol)?;
            Ok(S::one() - minus)
        } else {
            let far = -x * (self.eps_plus / self.eps_minus).sqrt();
            let hi = far + scale(self.eps_plus);
            let breaks = sorted_distinct(&[S::zero(), far * S::c(0.5), far, (far + hi) * S::c(0.5), hi]);
            quad::integrate_panels(|y| self.density_unchecked(t, x, y), &breaks, tol)
        }
    }

    /// Exact draw of `(y, dL)` after time `dt` from `x`.
    pub fn sample_step<R: Rng + ?Sized>(&self, x: S, dt: S, rng: &mut R) -> SkewStep<S> {
        let xi: f64 = StandardNormal.sample(rng);
        let u1: f64 = Open01.sample(rng);
        let u2: f64 = Open01.sample(rng);
        self.step_from_variates(x, dt, S::c(xi), S::c(u1), S::c(u2))
    }

    /// Deterministic step map from one standard normal and two uniforms in (0, 1).
    ///
    /// `Z = x/√ε(side)` is a skew Brownian motion with `d⟨Z⟩ = 2 dt` and
    /// skewness `α`. Its modulus is a reflected Brownian motion, sampled
    /// exactly together with its boundary increment `ℓ` (the bridge hits 0
    /// with probability `2/(1 + exp(2ab/τ))`, `τ = 2dt`). Each excursion
    /// straddling the end time is positive with probability `α`.
    pub fn step_from_variates(&self, x: S, dt: S, xi: S, u1: S, u2: S) -> SkewStep<S> {
        let (sp, sm) = (self.eps_plus.sqrt(), self.eps_minus.sqrt());
        let start_side = Side::of_signed(x);
        let z0 = x / if start_side == Side::Plus { sp } else { sm };
        let tau = S::c(2.0) * dt;
        let a = z0.abs();
        let b = (a + tau.sqrt() * xi).abs();
        let p_hit = if a == S::zero() {
            S::one()
        } else {
            let e = S::c(2.0) * a * b / tau;
            // 2 / (1 + e^e) without overflow
            if e > S::c(700.0) {
                S::zero()
            } else {
                S::c(2.0) / (S::one() + e.exp())
            }
        };
        let hit = u1 < p_hit;
        let (ell, side) = if hit {
            let v = u1 / p_hit;
            let s = a + b;
            let m = -S::c(2.0) * tau * v.ln();
            let ell = m / ((s * s + m).sqrt() + s);
            let side = if u2 < sp / (sp + sm) { Side::Plus } else { Side::Minus };
            (ell, side)
        } else {
            (S::zero(), start_side)
        };
        let y = match side {
            Side::Plus => b * sp,
            Side::Minus => -b * sm,
        };
        SkewStep { y, local_time: self.eps_minus * S::c(2.0) * ell / (sp + sm), hit }
    }

    /// `ΔK = ΔL/ε₋` for a local-time increment `ΔL`.
    pub fn pcaf_increment(&self, local_time: S) -> S {
        local_time / self.eps_minus
    }
}

fn sorted_distinct<S: Scalar>(v: &[S]) -> Vec<S> {
    let mut out = v.to_vec();
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup();
    out
}
