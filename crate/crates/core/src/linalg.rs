//! Small dense helpers: fixed-size vectors and matrices in `D` dimensions,
//! a Jacobi eigensolver for the coefficient matrices, and the tridiagonal
//! kernels (QL eigensolver, Thomas solve) used by the finite-volume operators.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type Vector<S, const D: usize> = [S; D];
pub type Matrix<S, const D: usize> = [[S; D]; D];

#[inline]
pub fn zero<S: Scalar, const D: usize>() -> Vector<S, D> {
    [S::zero(); D]
}

#[inline]
pub fn identity<S: Scalar, const D: usize>() -> Matrix<S, D> {
    let mut m = [[S::zero(); D]; D];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = S::one();
    }
    m
}

#[inline]
pub fn scaled_identity<S: Scalar, const D: usize>(s: S) -> Matrix<S, D> {
    let mut m = identity::<S, D>();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = s;
    }
    m
}

#[inline]
pub fn dot<S: Scalar, const D: usize>(a: &Vector<S, D>, b: &Vector<S, D>) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm<S: Scalar, const D: usize>(a: &Vector<S, D>) -> S {
    dot(a, a).sqrt()
}

#[inline]
pub fn add<S: Scalar, const D: usize>(a: &Vector<S, D>, b: &Vector<S, D>) -> Vector<S, D> {
    std::array::from_fn(|i| a[i] + b[i])
}

#[inline]
pub fn sub<S: Scalar, const D: usize>(a: &Vector<S, D>, b: &Vector<S, D>) -> Vector<S, D> {
    std::array::from_fn(|i| a[i] - b[i])
}

#[inline]
pub fn scale<S: Scalar, const D: usize>(a: &Vector<S, D>, s: S) -> Vector<S, D> {
    std::array::from_fn(|i| a[i] * s)
}

/// `a + s * b`
#[inline]
pub fn axpy<S: Scalar, const D: usize>(a: &Vector<S, D>, s: S, b: &Vector<S, D>) -> Vector<S, D> {
    std::array::from_fn(|i| a[i] + s * b[i])
}

#[inline]
pub fn matvec<S: Scalar, const D: usize>(m: &Matrix<S, D>, v: &Vector<S, D>) -> Vector<S, D> {
    std::array::from_fn(|i| dot(&m[i], v))
}

pub fn matmul<S: Scalar, const D: usize>(a: &Matrix<S, D>, b: &Matrix<S, D>) -> Matrix<S, D> {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..D).fold(S::zero(), |acc, k| acc + a[i][k] * b[k][j])))
}

pub fn transpose<S: Scalar, const D: usize>(a: &Matrix<S, D>) -> Matrix<S, D> {
    std::array::from_fn(|i| std::array::from_fn(|j| a[j][i]))
}

/// Max-entry norm.
pub fn max_abs<S: Scalar, const D: usize>(a: &Matrix<S, D>) -> S {
    a.iter().flatten().fold(S::zero(), |m, &x| m.max(x.abs()))
}

/// Largest entry of `a - a^T` in absolute value.
pub fn asymmetry<S: Scalar, const D: usize>(a: &Matrix<S, D>) -> S {
    let mut worst = S::zero();
    for i in 0..D {
        for j in 0..i {
            worst = worst.max((a[i][j] - a[j][i]).abs());
        }
    }
    worst
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues (unsorted) and the orthogonal matrix whose columns are
/// the eigenvectors, so that `a = q diag(w) q^T`.
pub fn sym_eigen<S: Scalar, const D: usize>(a: &Matrix<S, D>) -> (Vector<S, D>, Matrix<S, D>) {
    let mut m = *a;
    let mut q = identity::<S, D>();
    let scale = max_abs(a).max(S::min_positive_value());
    let two = S::c(2.0);
    for _sweep in 0..64 {
        let mut off = S::zero();
        for i in 0..D {
            for j in 0..i {
                off = off + m[i][j] * m[i][j];
            }
        }
        if off.sqrt() <= S::epsilon() * S::c(1e-2) * scale {
            break;
        }
        for p in 0..D {
            for r in (p + 1)..D {
                if m[p][r] == S::zero() {
                    continue;
                }
                let theta = (m[r][r] - m[p][p]) / (two * m[p][r]);
                let t = theta.signum() / (theta.abs() + (theta * theta + S::one()).sqrt());
                let c = S::one() / (t * t + S::one()).sqrt();
                let s = t * c;
                for k in 0..D {
                    let mkp = m[k][p];
                    let mkr = m[k][r];
                    m[k][p] = c * mkp - s * mkr;
                    m[k][r] = s * mkp + c * mkr;
                }
                for k in 0..D {
                    let mpk = m[p][k];
                    let mrk = m[r][k];
                    m[p][k] = c * mpk - s * mrk;
                    m[r][k] = s * mpk + c * mrk;
                }
                for row in q.iter_mut() {
                    let qp = row[p];
                    let qr = row[r];
                    row[p] = c * qp - s * qr;
                    row[r] = s * qp + c * qr;
                }
            }
        }
    }
    (std::array::from_fn(|i| m[i][i]), q)
}

/// `q diag(w) q^T`
pub fn reassemble<S: Scalar, const D: usize>(w: &Vector<S, D>, q: &Matrix<S, D>) -> Matrix<S, D> {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..D).fold(S::zero(), |acc, k| acc + q[i][k] * w[k] * q[j][k])))
}

/// Symmetric tridiagonal eigenproblem by implicit QL with Wilkinson-type
/// shifts. `diag` has length `n`, `off[i]` couples rows `i` and `i + 1`.
///
/// Eigenvalues are returned ascending; eigenvectors are orthonormal and
/// stored column-major (`vectors[k * n + i]` is component `i` of vector `k`).
pub fn tridiagonal_eigen<S: Scalar>(diag: &[S], off: &[S]) -> Result<(Vec<S>, Vec<S>)> {
    let n = diag.len();
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    if off.len() + 1 != n {
        return Err(Error::Contract(format!(
            "tridiagonal: {} diagonal entries need {} off-diagonal entries, got {}",
            n,
            n - 1,
            off.len()
        )));
    }
    let mut d = diag.to_vec();
    let mut e = vec![S::zero(); n];
    e[..n - 1].copy_from_slice(off);
    let mut z = vec![S::zero(); n * n];
    for k in 0..n {
        z[k * n + k] = S::one();
    }
    let two = S::c(2.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= S::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return Err(Error::Contract(format!("tridiagonal QL failed to converge at index {l}")));
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(S::one());
            let sign_r = if g >= S::zero() { r.abs() } else { -r.abs() };
            g = d[m] - d[l] + e[l] / (g + sign_r);
            let (mut s, mut c, mut p) = (S::one(), S::one(), S::zero());
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == S::zero() {
                    d[i + 1] = d[i + 1] - p;
                    e[m] = S::zero();
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let (left, right) = z.split_at_mut((i + 1) * n);
                let zi = &mut left[i * n..];
                let zi1 = &mut right[..n];
                for k in 0..n {
                    let fz = zi1[k];
                    zi1[k] = s * zi[k] + c * fz;
                    zi[k] = c * zi[k] - s * fz;
                }
            }
            if underflow {
                continue;
            }
            d[l] = d[l] - p;
            e[l] = g;
            e[m] = S::zero();
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&k| d[k]).collect();
    let mut vectors = Vec::with_capacity(n * n);
    for &k in &order {
        vectors.extend_from_slice(&z[k * n..(k + 1) * n]);
    }
    Ok((values, vectors))
}

/// Solves a tridiagonal system `sub[i] x[i-1] + diag[i] x[i] + sup[i] x[i+1] = rhs[i]`.
/// `sub[0]` and `sup[n-1]` are ignored.
pub fn thomas_solve<S: Scalar>(sub: &[S], diag: &[S], sup: &[S], rhs: &[S]) -> Vec<S> {
    let n = diag.len();
    let mut c = vec![S::zero(); n];
    let mut x = vec![S::zero(); n];
    if n == 0 {
        return x;
    }
    let mut beta = diag[0];
    x[0] = rhs[0] / beta;
    for i in 1..n {
        c[i] = sup[i - 1] / beta;
        beta = diag[i] - sub[i] * c[i];
        x[i] = (rhs[i] - sub[i] * x[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] = x[i] - c[i + 1] * next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_reassembles_spd_matrix() {
        let a: [[f64; 3]; 3] = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let (w, q) = sym_eigen(&a);
        let back = reassemble(&w, &q);
        for i in 0..3 {
            for j in 0..3 {
                assert!((back[i][j] - a[i][j]).abs() < 1e-13);
            }
        }
        let qtq = matmul(&transpose(&q), &q);
        assert!((qtq[0][0] - 1.0).abs() < 1e-13 && qtq[0][1].abs() < 1e-13);
    }

    #[test]
    fn tridiagonal_matches_known_laplacian_spectrum() {
        // Dirichlet 1D Laplacian: eigenvalues 2 - 2 cos(k pi / (n + 1)).
        let n = 40;
        let diag = vec![2.0; n];
        let off = vec![-1.0; n - 1];
        let (w, v) = tridiagonal_eigen(&diag, &off).unwrap();
        for (k, wk) in w.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((wk - exact).abs() < 1e-12, "{k}: {wk} vs {exact}");
        }
        // orthonormal columns
        let col = |k: usize| &v[k * n..(k + 1) * n];
        let d01: f64 = col(0).iter().zip(col(1)).map(|(a, b)| a * b).sum();
        let d00: f64 = col(0).iter().map(|a| a * a).sum();
        assert!(d01.abs() < 1e-12 && (d00 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn thomas_solves_diagonally_dominant_system() {
        let sub = [0.0, -1.0, -1.0, -1.0];
        let diag = [4.0, 4.0, 4.0, 4.0];
        let sup = [-1.0, -1.0, -1.0, 0.0];
        let x = [1.0, -2.0, 3.0, 0.5];
        let rhs: Vec<f64> = (0..4)
            .map(|i| {
                diag[i] * x[i]
                    + if i > 0 { sub[i] * x[i - 1] } else { 0.0 }
                    + if i < 3 { sup[i] * x[i + 1] } else { 0.0 }
            })
            .collect();
        let got = thomas_solve(&sub, &diag, &sup, &rhs);
        for i in 0..4 {
            assert!((got[i] - x[i]).abs() < 1e-14);
        }
    }
}
