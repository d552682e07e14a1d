//! Globally adaptive Gauss-Kronrod (7/15) quadrature on finite intervals.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 1e-12, rel: 1e-10, max_intervals: 4000 }
    }
}

impl Tolerance {
    pub fn abs(abs: f64) -> Self {
        Self { abs, rel: 0.0, ..Self::default() }
    }
}

fn kronrod<S: Scalar, F: Fn(S) -> S>(f: &F, a: S, b: S) -> (S, S) {
    let half = (b - a) * S::c(0.5);
    let mid = (a + b) * S::c(0.5);
    let fc = f(mid);
    let mut k = fc * S::c(WGK[7]);
    let mut g = fc * S::c(WG[3]);
    for j in 0..7 {
        let dx = half * S::c(XGK[j]);
        let sum = f(mid - dx) + f(mid + dx);
        k = k + sum * S::c(WGK[j]);
        if j % 2 == 1 {
            g = g + sum * S::c(WG[j / 2]);
        }
    }
    (k * half, ((k - g) * half).abs())
}

/// Integrates `f` over `[a, b]` until the summed error estimate is below
/// `max(tol.abs, tol.rel * |I|)`.
pub fn integrate<S: Scalar, F: Fn(S) -> S>(f: F, a: S, b: S, tol: Tolerance) -> Result<S> {
    if a == b {
        return Ok(S::zero());
    }
    let mut pieces = vec![{
        let (v, e) = kronrod(&f, a, b);
        (a, b, v, e)
    }];
    loop {
        let total: S = pieces.iter().map(|p| p.2).sum();
        let err: S = pieces.iter().map(|p| p.3).sum();
        let target = S::c(tol.abs).max(S::c(tol.rel) * total.abs());
        if err <= target {
            return Ok(total);
        }
        if pieces.len() >= tol.max_intervals {
            return Err(Error::Quadrature { a: a.as_f64(), b: b.as_f64(), error: err.as_f64() });
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .fold((0, S::neg_infinity()), |(wi, we), (i, p)| if p.3 > we { (i, p.3) } else { (wi, we) });
        let (lo, hi, _, _) = pieces.swap_remove(worst);
        let mid = (lo + hi) * S::c(0.5);
        if mid <= lo || mid >= hi {
            return Err(Error::Quadrature { a: a.as_f64(), b: b.as_f64(), error: err.as_f64() });
        }
        let (v1, e1) = kronrod(&f, lo, mid);
        let (v2, e2) = kronrod(&f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
}

/// Integrates over consecutive breakpoints, each panel adaptively.
pub fn integrate_panels<S: Scalar, F: Fn(S) -> S>(f: F, breaks: &[S], tol: Tolerance) -> Result<S> {
    let mut total = S::zero();
    for w in breaks.windows(2) {
        total = total + integrate(&f, w[0], w[1], tol)?;
    }
    Ok(total)
}
