//! Finite-volume references for the transmission problem `∂_t u = ∇·(ε∇u)`
//! in one dimension and for radially symmetric data in `d` dimensions, and a
//! discrete spectral toolkit built on the symmetric eigendecomposition of the
//! assembled operator.
//!
//! The operator is `A_h = -V⁻¹ S` with `V` the cell volumes and `S` the
//! symmetric stiffness matrix whose edge conductances are the distance-weighted
//! harmonic means `area / (h_i/(2ε_i) + h_{i+1}/(2ε_{i+1}))`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::Serialize;

use crate::coeffs::CoefficientField;
use crate::error::{Error, Result};
use crate::geometry::{InterfaceGeometry, InterfaceKind};
use crate::linalg;
use crate::quad::{self, Tolerance};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Boundary {
    Neumann,
    DirichletZero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D<S> {
    edges: Vec<S>,
    interface: Option<S>,
    interface_edge: Option<usize>,
    boundary: Boundary,
}

impl<S: Scalar> Grid1D<S> {
    pub const MIN_CELLS: usize = 16;

    /// Grid from explicit edges; `interface`, if given, must equal one of them.
    pub fn from_edges(edges: Vec<S>, interface: Option<S>, boundary: Boundary) -> Result<Self> {
        if edges.len() < Self::MIN_CELLS + 1 {
            return Err(Error::Assembly(format!(
                "grid needs at least {} cells, got {}",
                Self::MIN_CELLS,
                edges.len().saturating_sub(1)
            )));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) || edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::Assembly("grid edges must be finite and strictly increasing".into()));
        }
        let interface_edge = match interface {
            None => None,
            Some(x) => match edges.iter().position(|&e| e == x) {
                Some(i) => Some(i),
                None => {
                    return Err(Error::Assembly(format!("interface coordinate {x} does not coincide with a cell edge")))
                }
            },
        };
        Ok(Self { edges, interface, interface_edge, boundary })
    }

    /// `n` equal cells on `[lo, hi]`; the edge nearest the interface is pinned
    /// to it when it is within rounding distance.
    pub fn uniform(lo: S, hi: S, n: usize, interface: Option<S>, boundary: Boundary) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::Assembly(format!("empty grid interval [{lo}, {hi}]")));
        }
        let h = (hi - lo) / S::of_usize(n.max(1));
        let mut edges: Vec<S> = (0..=n).map(|i| lo + h * S::of_usize(i)).collect();
        edges[n] = hi;
        if let Some(x) = interface {
            let (k, dist) = edges
                .iter()
                .enumerate()
                .map(|(k, &e)| (k, (e - x).abs()))
                .fold((0, S::infinity()), |acc, c| if c.1 < acc.1 { c } else { acc });
            if dist <= S::c(1e-9) * h {
                edges[k] = x;
            }
        }
        Self::from_edges(edges, interface, boundary)
    }

    pub fn edges(&self) -> &[S] {
        &self.edges
    }

    pub fn n_cells(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn centers(&self) -> Vec<S> {
        self.edges.windows(2).map(|w| (w[0] + w[1]) * S::c(0.5)).collect()
    }

    pub fn widths(&self) -> Vec<S> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn interface(&self) -> Option<S> {
        self.interface
    }

    pub fn interface_edge(&self) -> Option<usize> {
        self.interface_edge
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn lo(&self) -> S {
        self.edges[0]
    }

    pub fn hi(&self) -> S {
        self.edges[self.edges.len() - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Layout {
    Line,
    Radial { dimension: usize },
}

/// Eigenpairs of `-A_h`: `γ_k` ascending and `V`-orthonormal `e_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectral<S> {
    pub values: Vec<S>,
    vectors: Vec<S>,
    n: usize,
}

impl<S: Scalar> Spectral<S> {
    #[inline]
    pub fn vector(&self, k: usize) -> &[S] {
        &self.vectors[k * self.n..(k + 1) * self.n]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperator<S> {
    layout: Layout,
    grid: Grid1D<S>,
    volumes: Vec<S>,
    centers: Vec<S>,
    cell_eps: Vec<S>,
    /// `conductance[e]` couples cells `e-1` and `e`; entries 0 and `n` are boundary edges.
    conductance: Vec<S>,
    /// Center-to-center distance of edge `e` (half a cell at the boundary).
    edge_distance: Vec<S>,
    edge_area: Vec<S>,
    spectrum: Option<Spectral<S>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OperatorInvariants {
    pub symmetry_defect: f64,
    pub operator_norm: f64,
    pub max_row_sum: Option<f64>,
    pub min_eigenvalue: Option<f64>,
    pub pass: bool,
}

fn half_resistance<S: Scalar>(width: S, eps: S) -> S {
    width / (S::c(2.0) * eps)
}

impl<S: Scalar> DiscreteOperator<S> {
    fn build(layout: Layout, grid: Grid1D<S>, cell_eps: Vec<S>) -> Self {
        let n = grid.n_cells();
        let edges = grid.edges().to_vec();
        let widths = grid.widths();
        let centers = grid.centers();
        let area = |r: S| match layout {
            Layout::Line => S::one(),
            Layout::Radial { dimension } => r.powi(dimension as i32 - 1),
        };
        let volumes: Vec<S> = match layout {
            Layout::Line => widths.clone(),
            Layout::Radial { dimension } => {
                let d = dimension as i32;
                edges.windows(2).map(|w| (w[1].powi(d) - w[0].powi(d)) / S::of_usize(dimension)).collect()
            }
        };
        let mut conductance = vec![S::zero(); n + 1];
        let mut edge_distance = vec![S::zero(); n + 1];
        let mut edge_area = vec![S::zero(); n + 1];
        for e in 0..=n {
            edge_area[e] = area(edges[e]);
            if e == 0 || e == n {
                let i = if e == 0 { 0 } else { n - 1 };
                edge_distance[e] = widths[i] * S::c(0.5);
                if grid.boundary() == Boundary::DirichletZero {
                    conductance[e] = edge_area[e] / half_resistance(widths[i], cell_eps[i]);
                }
            } else {
                edge_distance[e] = centers[e] - centers[e - 1];
                let r = half_resistance(widths[e - 1], cell_eps[e - 1]) + half_resistance(widths[e], cell_eps[e]);
                conductance[e] = edge_area[e] / r;
            }
        }
        Self { layout, grid, volumes, centers, cell_eps, conductance, edge_distance, edge_area, spectrum: None }
    }

    /// Line operator with `ε₊` on cells right of the interface and `ε₋` left of it.
    pub fn assemble_1d(eps_plus: S, eps_minus: S, grid: Grid1D<S>) -> Result<Self> {
        check_eps(eps_plus, eps_minus)?;
        let x0 = grid
            .interface()
            .ok_or_else(|| Error::Assembly("1D transmission grid needs an interface coordinate".into()))?;
        let eps = grid.centers().iter().map(|&c| if c > x0 { eps_plus } else { eps_minus }).collect();
        Ok(Self::build(Layout::Line, grid, eps))
    }

    /// Radial reduction `r^{1-d} (r^{d-1} ε u')'` on `[0, R_max]` with the
    /// interface at `radius`, which must be a grid edge.
    pub fn assemble_radial(eps_inside: S, eps_outside: S, radius: S, dimension: usize, grid: Grid1D<S>) -> Result<Self> {
        check_eps(eps_inside, eps_outside)?;
        if dimension == 0 {
            return Err(Error::Assembly("radial assembly needs dimension >= 1".into()));
        }
        if grid.lo() != S::zero() {
            return Err(Error::Assembly("radial grid must start at r = 0".into()));
        }
        if grid.interface() != Some(radius) {
            return Err(Error::Assembly(format!("radial grid interface must be the sphere radius {radius}")));
        }
        let eps = grid.centers().iter().map(|&c| if c < radius { eps_inside } else { eps_outside }).collect();
        Ok(Self::build(Layout::Radial { dimension }, grid, eps))
    }

    /// Radial operator for a diagonal field on a sphere interface centered at the origin.
    pub fn assemble_radial_from<const D: usize>(
        field: &CoefficientField<S, D>,
        geom: &InterfaceGeometry<S, D>,
        grid: Grid1D<S>,
    ) -> Result<Self> {
        let (ep, em) = field.diagonal_constants().ok_or_else(|| {
            Error::Unsupported("radial reference needs a diagonal (piecewise-constant isotropic) coefficient".into())
        })?;
        match geom.kind() {
            InterfaceKind::Sphere { center, radius, plus_inside } => {
                if center.iter().any(|c| *c != S::zero()) {
                    return Err(Error::Unsupported("radial reference needs a sphere centered at the origin".into()));
                }
                let (inside, outside) = if *plus_inside { (ep, em) } else { (em, ep) };
                Self::assemble_radial(inside, outside, *radius, D, grid)
            }
            _ => Err(Error::Unsupported("radial reference needs a sphere interface".into())),
        }
    }

    pub fn n(&self) -> usize {
        self.volumes.len()
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn grid(&self) -> &Grid1D<S> {
        &self.grid
    }

    pub fn volumes(&self) -> &[S] {
        &self.volumes
    }

    pub fn centers(&self) -> &[S] {
        &self.centers
    }

    pub fn cell_eps(&self) -> &[S] {
        &self.cell_eps
    }

    pub fn min_eps(&self) -> S {
        self.cell_eps.iter().copied().fold(S::infinity(), S::min)
    }

    pub fn max_eps(&self) -> S {
        self.cell_eps.iter().copied().fold(S::zero(), S::max)
    }

    /// Conductance of interior edge `e` (between cells `e-1` and `e`), times
    /// the center distance, divided by the edge area: the effective diffusivity.
    pub fn edge_diffusivity(&self, e: usize) -> S {
        self.conductance[e] * self.edge_distance[e] / self.edge_area[e]
    }

    /// Rows of `A_h` as `(sub, diag, sup)`.
    pub fn tridiagonal(&self) -> (Vec<S>, Vec<S>, Vec<S>) {
        let n = self.n();
        let mut sub = vec![S::zero(); n];
        let mut diag = vec![S::zero(); n];
        let mut sup = vec![S::zero(); n];
        for i in 0..n {
            let (cl, cr) = (self.conductance[i], self.conductance[i + 1]);
            let v = self.volumes[i];
            diag[i] = -(cl + cr) / v;
            if i > 0 {
                sub[i] = cl / v;
            }
            if i + 1 < n {
                sup[i] = cr / v;
            }
        }
        (sub, diag, sup)
    }

    /// `A_h u`.
    pub fn apply(&self, u: &[S]) -> Vec<S> {
        let n = self.n();
        (0..n)
            .map(|i| {
                let left = if i > 0 { u[i - 1] } else { S::zero() };
                let right = if i + 1 < n { u[i + 1] } else { S::zero() };
                let fl = self.conductance[i] * (u[i] - left);
                let fr = self.conductance[i + 1] * (right - u[i]);
                (fr - fl) / self.volumes[i]
            })
            .collect()
    }

    /// Volume-weighted inner product.
    pub fn inner(&self, u: &[S], v: &[S]) -> S {
        self.volumes.iter().zip(u).zip(v).map(|((&w, &a), &b)| w * a * b).sum()
    }

    pub fn norm(&self, u: &[S]) -> S {
        self.inner(u, u).sqrt()
    }

    /// Discrete Dirichlet form from edge sums, `Σ_e c_e Δu Δv`.
    pub fn energy(&self, u: &[S], v: &[S]) -> S {
        let n = self.n();
        let mut acc = S::zero();
        for e in 0..=n {
            let (du, dv) = if e == 0 {
                (u[0], v[0])
            } else if e == n {
                (u[n - 1], v[n - 1])
            } else {
                (u[e] - u[e - 1], v[e] - v[e - 1])
            };
            acc = acc + self.conductance[e] * du * dv;
        }
        acc
    }

    /// `‖∇_h u‖²` over interior edges, each weighted by area times center distance.
    pub fn gradient_norm_sq(&self, u: &[S]) -> S {
        (1..self.n())
            .map(|e| {
                let g = (u[e] - u[e - 1]) / self.edge_distance[e];
                self.edge_area[e] * self.edge_distance[e] * g * g
            })
            .sum()
    }

    /// Largest `λ` with `λ ‖∇_h u‖² <= 𝓔_h(u, u)` for all `u`.
    pub fn discrete_ellipticity(&self) -> S {
        (1..self.n()).map(|e| self.edge_diffusivity(e)).fold(S::infinity(), S::min)
    }

    pub fn invariants(&self) -> OperatorInvariants {
        let (sub, diag, sup) = self.tridiagonal();
        let n = self.n();
        let mut norm = 0.0f64;
        let mut defect = 0.0f64;
        let mut row = 0.0f64;
        for i in 0..n {
            let r = sub[i].abs() + diag[i].abs() + sup[i].abs();
            norm = norm.max(r.as_f64());
            if i + 1 < n {
                let a = self.volumes[i] * sup[i];
                let b = self.volumes[i + 1] * sub[i + 1];
                defect = defect.max((a - b).abs().as_f64());
            }
            row = row.max((sub[i] + diag[i] + sup[i]).abs().as_f64());
        }
        let vnorm = (0..n)
            .map(|i| (self.volumes[i] * (sub[i].abs() + diag[i].abs() + sup[i].abs())).as_f64())
            .fold(0.0, f64::max);
        let neumann = self.grid.boundary() == Boundary::Neumann;
        let min_eig = self.spectrum.as_ref().map(|s| s.values[0].as_f64());
        let max_row_sum = neumann.then_some(row);
        let pass = defect <= 1e-12 * vnorm
            && max_row_sum.is_none_or(|r| r <= 1e-12 * norm)
            && min_eig.is_none_or(|m| m >= -1e-10 * norm);
        OperatorInvariants {
            symmetry_defect: defect / vnorm.max(f64::MIN_POSITIVE),
            operator_norm: norm,
            max_row_sum,
            min_eigenvalue: min_eig,
            pass,
        }
    }

    /// Computes and stores the eigendecomposition (dense, `n <= 4096`).
    pub fn decompose(mut self) -> Result<Self> {
        let n = self.n();
        if n > 4096 {
            return Err(Error::Unsupported(format!("eigendecomposition limited to n <= 4096 cells, got {n}")));
        }
        let sq: Vec<S> = self.volumes.iter().map(|v| v.sqrt()).collect();
        let diag: Vec<S> =
            (0..n).map(|i| (self.conductance[i] + self.conductance[i + 1]) / self.volumes[i]).collect();
        let off: Vec<S> = (0..n - 1).map(|i| -self.conductance[i + 1] / (sq[i] * sq[i + 1])).collect();
        let (values, mut vectors) = linalg::tridiagonal_eigen(&diag, &off)?;
        for k in 0..n {
            for i in 0..n {
                vectors[k * n + i] = vectors[k * n + i] / sq[i];
            }
        }
        self.spectrum = Some(Spectral { values, vectors, n });
        Ok(self)
    }

    pub fn spectrum(&self) -> Result<&Spectral<S>> {
        self.spectrum
            .as_ref()
            .ok_or_else(|| Error::Contract("eigendecomposition not available; call decompose()".into()))
    }

    /// `(u, e_k)` for all `k`.
    pub fn spectral_coefficients(&self, u: &[S]) -> Result<Vec<S>> {
        let sp = self.spectrum()?;
        Ok((0..self.n()).map(|k| self.inner(u, sp.vector(k))).collect())
    }

    /// `Σ_k w_k e_k`.
    pub fn synthesize(&self, weights: &[S]) -> Result<Vec<S>> {
        let sp = self.spectrum()?;
        let n = self.n();
        let mut out = vec![S::zero(); n];
        for (k, &w) in weights.iter().enumerate() {
            if w == S::zero() {
                continue;
            }
            for (o, &e) in out.iter_mut().zip(sp.vector(k)) {
                *o = *o + w * e;
            }
        }
        Ok(out)
    }

    /// `u(t) = e^{t A_h} u0`: spectral when decomposed, Crank-Nicolson otherwise.
    pub fn solve_parabolic(&self, u0: &[S], t: S) -> Result<Vec<S>> {
        self.check_time(u0, t)?;
        if t == S::zero() {
            return Ok(u0.to_vec());
        }
        match &self.spectrum {
            Some(sp) => {
                let c = self.spectral_coefficients(u0)?;
                let w: Vec<S> = c.iter().zip(&sp.values).map(|(&ck, &g)| ck * (-g * t).exp()).collect();
                self.synthesize(&w)
            }
            None => self.solve_crank_nicolson(u0, t, S::c(1e-3).min(t / S::c(50.0))),
        }
    }

    fn check_time(&self, u0: &[S], t: S) -> Result<()> {
        if !(t >= S::zero()) || !t.is_finite() {
            return Err(Error::Domain(format!("parabolic solve needs t >= 0, got {t}")));
        }
        if u0.len() != self.n() {
            return Err(Error::Contract(format!("initial data has {} values for {} cells", u0.len(), self.n())));
        }
        Ok(())
    }

    /// Crank-Nicolson with at most `dt_max` per step, started by four
    /// backward-Euler quarter steps to damp non-smooth data.
    pub fn solve_crank_nicolson(&self, u0: &[S], t: S, dt_max: S) -> Result<Vec<S>> {
        self.check_time(u0, t)?;
        if t == S::zero() {
            return Ok(u0.to_vec());
        }
        if !(dt_max > S::zero()) {
            return Err(Error::Domain(format!("time step must be positive, got {dt_max}")));
        }
        let steps = (t / dt_max).ceil().to_usize().unwrap_or(1).max(1);
        let dt = t / S::of_usize(steps);
        let (sub, diag, sup) = self.tridiagonal();
        let n = self.n();
        let implicit = |theta: S, u: &[S]| -> Vec<S> {
            // (I - θ A) x = u
            let d: Vec<S> = diag.iter().map(|&a| S::one() - theta * a).collect();
            let l: Vec<S> = sub.iter().map(|&a| -theta * a).collect();
            let r: Vec<S> = sup.iter().map(|&a| -theta * a).collect();
            linalg::thomas_solve(&l, &d, &r, u)
        };
        let mut u = u0.to_vec();
        let startup = steps.min(1);
        let quarter = dt * S::c(0.25);
        for _ in 0..(4 * startup) {
            u = implicit(quarter, &u);
        }
        let half = dt * S::c(0.5);
        let d: Vec<S> = diag.iter().map(|&a| S::one() - half * a).collect();
        let l: Vec<S> = sub.iter().map(|&a| -half * a).collect();
        let r: Vec<S> = sup.iter().map(|&a| -half * a).collect();
        let mut rhs = vec![S::zero(); n];
        for _ in startup..steps {
            let au = self.apply(&u);
            for i in 0..n {
                rhs[i] = u[i] + half * au[i];
            }
            u = linalg::thomas_solve(&l, &d, &r, &rhs);
        }
        Ok(u)
    }

    /// Flux-consistent value at the interface edge from the two adjacent cells.
    pub fn interface_value(&self, u: &[S]) -> Result<S> {
        let e = self
            .grid
            .interface_edge()
            .filter(|&e| e > 0 && e < self.n())
            .ok_or_else(|| Error::Contract("interface edge is not interior to the grid".into()))?;
        let widths = self.grid.widths();
        let cl = self.cell_eps[e - 1] / (widths[e - 1] * S::c(0.5));
        let cr = self.cell_eps[e] / (widths[e] * S::c(0.5));
        Ok((cl * u[e - 1] + cr * u[e]) / (cl + cr))
    }

    /// Piecewise-linear interpolation through cell centers, with the interface
    /// value as an extra node and flat extension beyond the outer centers.
    pub fn interpolate(&self, u: &[S], x: S) -> Result<S> {
        let mut nodes: Vec<(S, S)> = self.centers.iter().copied().zip(u.iter().copied()).collect();
        if let (Some(e), Some(x0)) = (self.grid.interface_edge(), self.grid.interface()) {
            if e > 0 && e < self.n() {
                nodes.insert(e, (x0, self.interface_value(u)?));
            }
        }
        if x <= nodes[0].0 {
            return Ok(nodes[0].1);
        }
        if x >= nodes[nodes.len() - 1].0 {
            return Ok(nodes[nodes.len() - 1].1);
        }
        let k = nodes.partition_point(|p| p.0 <= x);
        let (a, b) = (nodes[k - 1], nodes[k]);
        let w = (x - a.0) / (b.0 - a.0);
        Ok(a.1 + w * (b.1 - a.1))
    }

    /// Discrete kernel `p_h(t, x_i, x_j) = Σ_k e^{-γ_k t} e_k(i) e_k(j)`.
    pub fn kernel(&self, t: S, i: usize, j: usize) -> Result<S> {
        let sp = self.spectrum()?;
        let n = self.n();
        Ok((0..n).map(|k| (-sp.values[k] * t).exp() * sp.vectors[k * n + i] * sp.vectors[k * n + j]).sum())
    }

    /// `E^x[K_T] = 2 ∫_0^T p(s, x, Γ) ds` evaluated mode by mode, with point
    /// values at `x` and on `Γ` taken by [`Self::interpolate`].
    pub fn expected_pcaf(&self, x: S, horizon: S) -> Result<S> {
        let sp = self.spectrum()?;
        let mut acc = S::zero();
        for k in 0..self.n() {
            let g = sp.values[k];
            let w = if g.abs() * horizon < S::c(1e-12) { horizon } else { -(-g * horizon).exp_m1() / g };
            let ek = sp.vector(k);
            acc = acc + w * self.interpolate(ek, x)? * self.interface_value(ek)?;
        }
        Ok(S::c(2.0) * acc)
    }
}

fn check_eps<S: Scalar>(a: S, b: S) -> Result<()> {
    for v in [a, b] {
        if !(v > S::zero()) || !v.is_finite() {
            return Err(Error::Coefficient(format!(
                "diffusivity {v} violates uniform ellipticity and boundedness (need 0 < eps < inf)"
            )));
        }
    }
    Ok(())
}

/// One-sided quadratic reconstructions of `u'` at the interface edge from the
/// three nearest cell centers on each side; returns `|ε₊ u'₊ - ε₋ u'₋|`.
pub fn transmission_residual<S: Scalar>(u: &[S], grid: &Grid1D<S>, eps_plus: S, eps_minus: S) -> Result<S> {
    let e = grid.interface_edge().ok_or_else(|| Error::Reconstruction("grid has no interface edge".into()))?;
    let x0 = grid.interface().unwrap_or(S::zero());
    let n = grid.n_cells();
    if u.len() != n {
        return Err(Error::Contract(format!("{} values for {} cells", u.len(), n)));
    }
    if e < 3 || n - e < 3 {
        return Err(Error::Reconstruction(format!(
            "need at least 3 cells on each side of the interface, have {} and {}",
            e,
            n - e
        )));
    }
    let c = grid.centers();
    // derivative at x0 of the quadratic through three nodes
    let slope = |idx: [usize; 3]| {
        let (xa, xb, xc) = (c[idx[0]], c[idx[1]], c[idx[2]]);
        let (ya, yb, yc) = (u[idx[0]], u[idx[1]], u[idx[2]]);
        let la = ((x0 - xb) + (x0 - xc)) / ((xa - xb) * (xa - xc));
        let lb = ((x0 - xa) + (x0 - xc)) / ((xb - xa) * (xb - xc));
        let lc = ((x0 - xa) + (x0 - xb)) / ((xc - xa) * (xc - xb));
        ya * la + yb * lb + yc * lc
    };
    let right = slope([e, e + 1, e + 2]);
    let left = slope([e - 1, e - 2, e - 3]);
    Ok((eps_plus * right - eps_minus * left).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Check {
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `value <= tolerance`.
    pub fn at_most(value: f64, tolerance: f64) -> Self {
        Self { value, tolerance, pass: value <= tolerance }
    }

    /// Passes when `value >= tolerance` (a lower bound, e.g. a margin).
    pub fn at_least(value: f64, tolerance: f64) -> Self {
        Self { value, tolerance, pass: value >= tolerance }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SemigroupOptions {
    /// Declared ellipticity constant; defaults to the smallest cell diffusivity.
    pub lambda: Option<f64>,
    pub n_pairs: usize,
    pub seed: u64,
    /// Times for the fundamental estimate and the derivative identity.
    pub s_grid: Vec<f64>,
    /// Times for symmetry and the integrated identity.
    pub t_list: Vec<f64>,
}

impl Default for SemigroupOptions {
    fn default() -> Self {
        let s_grid = (0..=12).map(|k| 10f64.powf(-3.0 + k as f64 / 3.0)).collect();
        Self { lambda: None, n_pairs: 20, seed: 2024, s_grid, t_list: vec![0.01, 1.0] }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SemigroupReport {
    pub lambda_declared: f64,
    pub lambda_discrete: f64,
    /// `max |(T_t f, g) - (f, T_t g)| / (‖f‖‖g‖)`, also over `𝓔(T_t f, g) - 𝓔(f, T_t g)`.
    pub symmetry: Check,
    /// Smallest margin of `‖f‖/√(λs) - ‖∇_h T_s f‖` and of the ellipticity link
    /// `𝓔_h(u, u) - λ ‖∇_h u‖²` (normalized), must be nonnegative.
    pub fundamental_margin: Check,
    pub direct_margin: f64,
    pub ellipticity_link_margin: f64,
    pub energy_decay_margin: f64,
    /// `max |(T_t f, g) - (f, g) + ∫_0^t 𝓔(T_s f, g) ds|`.
    pub integrated_residual: Check,
    /// Largest excess of `|D_δ(T_s f, g) + 𝓔(T_s f, g)|` over its truncation bound.
    pub derivative_excess: Check,
    pub pairs: usize,
    pub pass: bool,
}

/// Seeded pairs of random cell functions with unit `V`-norm.
pub fn random_pairs<S: Scalar>(op: &DiscreteOperator<S>, n_pairs: usize, seed: u64) -> Vec<(Vec<S>, Vec<S>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new(-1.0f64, 1.0).expect("valid range");
    let mut draw = || {
        let v: Vec<S> = (0..op.n()).map(|_| S::c(dist.sample(&mut rng))).collect();
        let nv = op.norm(&v);
        v.into_iter().map(|x| x / nv).collect::<Vec<S>>()
    };
    (0..n_pairs).map(|_| (draw(), draw())).collect()
}

pub fn semigroup_identity_suite(op: &DiscreteOperator<f64>, opts: &SemigroupOptions) -> Result<SemigroupReport> {
    let pairs = random_pairs(op, opts.n_pairs, opts.seed);
    semigroup_identity_suite_with(op, opts, &pairs)
}

/// Runs the identity checks on caller-supplied pairs.
pub fn semigroup_identity_suite_with(
    op: &DiscreteOperator<f64>,
    opts: &SemigroupOptions,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<SemigroupReport> {
    let sp = op.spectrum()?;
    let n = op.n();
    let lambda = opts.lambda.unwrap_or_else(|| op.min_eps());
    let lambda_h = op.discrete_ellipticity();
    let gammas = &sp.values;
    // h_k = 𝓔_h(e_k, ·) is formed from edge sums, independently of γ_k.
    let mut sym = 0.0f64;
    let mut direct = f64::INFINITY;
    let mut link = lambda_h - lambda;
    let mut decay = f64::INFINITY;
    let mut integ = 0.0f64;
    let mut deriv = f64::NEG_INFINITY;
    for (f, g) in pairs {
        let (nf, ng) = (op.norm(f), op.norm(g));
        let fk = op.spectral_coefficients(f)?;
        let gk = op.spectral_coefficients(g)?;
        let hk: Vec<f64> = (0..n).map(|k| op.energy(sp.vector(k), g)).collect();
        let pairing = |s: f64| -> f64 { (0..n).map(|k| (-gammas[k] * s).exp() * fk[k] * gk[k]).sum() };
        let energy_of = |s: f64| -> f64 { (0..n).map(|k| (-gammas[k] * s).exp() * fk[k] * hk[k]).sum() };

        for &t in &opts.t_list {
            let decay_w = |c: &[f64]| -> Vec<f64> { c.iter().zip(gammas).map(|(&a, &gm)| a * (-gm * t).exp()).collect() };
            let tf = op.synthesize(&decay_w(&fk))?;
            let tg = op.synthesize(&decay_w(&gk))?;
            let scale = nf * ng;
            sym = sym.max((op.inner(&tf, g) - op.inner(f, &tg)).abs() / scale);
            let e_scale = op.energy(&tf, &tf).sqrt() * op.energy(g, g).sqrt() + op.energy(f, f).sqrt() * op.energy(&tg, &tg).sqrt();
            sym = sym.max((op.energy(&tf, g) - op.energy(f, &tg)).abs() / e_scale.max(f64::MIN_POSITIVE));

            let mut breaks = vec![0.0];
            breaks.extend((0..=48).rev().map(|k| t * 2f64.powi(-k)));
            let tol = Tolerance { abs: 1e-12, rel: 1e-13, max_intervals: 2000 };
            let integral = quad::integrate_panels(energy_of, &breaks, tol)?;
            integ = integ.max((op.inner(&tf, g) - op.inner(f, g) + integral).abs());
        }

        for &s in &opts.s_grid {
            let w: Vec<f64> = fk.iter().zip(gammas).map(|(&a, &gm)| a * (-gm * s).exp()).collect();
            let u = op.synthesize(&w)?;
            let grad = op.gradient_norm_sq(&u).sqrt();
            let bound = nf / (lambda * s).sqrt();
            direct = direct.min((bound - grad) / bound);
            let energy = op.energy(&u, &u);
            let gsq = op.gradient_norm_sq(&u);
            if gsq > 0.0 {
                link = link.min((energy - lambda * gsq) / energy.max(f64::MIN_POSITIVE));
            }
            decay = decay.min((nf * nf / s - energy) / (nf * nf / s));

            let ds = 1e-2 * s;
            let fd = (pairing(s + ds) - pairing(s - ds)) / (2.0 * ds);
            let e = energy_of(s);
            let bound: f64 = (0..n)
                .map(|k| gammas[k].max(0.0).powi(3) * (-gammas[k] * (s - ds)).exp() * (fk[k] * gk[k]).abs())
                .sum::<f64>()
                * ds
                * ds
                / 6.0;
            let roundoff = 1e-13 * (nf * ng) / ds + 1e-12 * e.abs();
            deriv = deriv.max((fd + e).abs() - bound - roundoff);
        }
    }
    let fundamental = direct.min(link).min(decay);
    let symmetry = Check::at_most(sym, 1e-10);
    let fundamental_margin = Check::at_least(fundamental, 0.0);
    let integrated_residual = Check::at_most(integ, 1e-8);
    let derivative_excess = Check::at_most(deriv.max(0.0), 0.0);
    let pass = symmetry.pass && fundamental_margin.pass && integrated_residual.pass && derivative_excess.pass;
    Ok(SemigroupReport {
        lambda_declared: lambda,
        lambda_discrete: lambda_h,
        symmetry,
        fundamental_margin,
        direct_margin: direct,
        ellipticity_link_margin: link,
        energy_decay_margin: decay,
        integrated_residual,
        derivative_excess,
        pairs: pairs.len(),
        pass,
    })
}

/// Smallest `M >= 1` with `e^{-Mz}/M <= q <= M e^{-z/M}`, where
/// `q = p √t` and `z = r²/t`. Infinite when no finite `M` works.
pub fn aronson_min_constant(q: f64, z: f64) -> f64 {
    if !(q > 0.0) || !q.is_finite() {
        return f64::INFINITY;
    }
    let upper_ok = |m: f64| q <= m * (-z / m).exp();
    let lower_ok = |m: f64| (-m * z).exp() / m <= q;
    let smallest = |ok: &dyn Fn(f64) -> bool| -> f64 {
        if ok(1.0) {
            return 1.0;
        }
        let mut hi = 2.0;
        while !ok(hi) {
            hi *= 2.0;
            if hi > 1e15 {
                return f64::INFINITY;
            }
        }
        let mut lo = hi / 2.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    smallest(&upper_ok).max(smallest(&lower_ok))
}

#[derive(Debug, Clone, Serialize)]
pub struct AronsonRow {
    pub t: f64,
    pub fitted_m: f64,
    pub min_kernel: f64,
    pub max_symmetry_defect: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AronsonReport {
    pub rows: Vec<AronsonRow>,
    /// `max M / min M` across times, at most 2.
    pub stability: Check,
    pub finite: bool,
    pub positive: bool,
    pub pass: bool,
}

/// Fits the smallest Aronson constant over interior cells (the middle half of
/// the domain) and pairs with `|x - y| <= 3√t`.
pub fn discrete_density_aronson(op: &DiscreteOperator<f64>, t_list: &[f64]) -> Result<AronsonReport> {
    let sp = op.spectrum()?;
    let grid = op.grid();
    let (lo, hi) = (grid.lo(), grid.hi());
    let quarter = (hi - lo) / 4.0;
    let lambda_max = op.max_eps();
    if t_list.is_empty() {
        return Err(Error::Contract("aronson check needs at least one time".into()));
    }
    for &t in t_list {
        if !(t > 0.0) || (2.0 * lambda_max * t).sqrt() > quarter {
            return Err(Error::Contract(format!(
                "t = {t}: sqrt(2 Lambda t) = {:.4} exceeds a quarter of the domain ({quarter:.4}); boundary pollution",
                (2.0 * lambda_max * t).sqrt()
            )));
        }
    }
    let centers = op.centers();
    let interior: Vec<usize> = (0..op.n()).filter(|&i| centers[i] >= lo + quarter && centers[i] <= hi - quarter).collect();
    let n = op.n();
    let mut rows = Vec::new();
    for &t in t_list {
        let w: Vec<f64> = sp.values.iter().map(|g| (-g * t).exp()).collect();
        let active: Vec<usize> = (0..n).filter(|&k| w[k] > 1e-300).collect();
        let window = 3.0 * t.sqrt();
        let mut m = 1.0f64;
        let mut min_p = f64::INFINITY;
        let mut sym = 0.0f64;
        let mut count = 0;
        let vols = op.volumes();
        for &i in &interior {
            for &j in &interior {
                let r = centers[i] - centers[j];
                if r.abs() > window {
                    continue;
                }
                let p: f64 = active.iter().map(|&k| w[k] * sp.vectors[k * n + i] * sp.vectors[k * n + j]).sum();
                if j > i && (j - i) % 37 == 0 {
                    let pt: f64 = active.iter().map(|&k| w[k] * sp.vectors[k * n + j] * sp.vectors[k * n + i]).sum();
                    // matrix entries of e^{tA}: M_ij = p_ij V_j, and V M is symmetric
                    let a = vols[i] * p * vols[j];
                    let b = vols[j] * pt * vols[i];
                    sym = sym.max((a - b).abs() / a.abs().max(f64::MIN_POSITIVE));
                }
                min_p = min_p.min(p);
                m = m.max(aronson_min_constant(p * t.sqrt(), r * r / t));
                count += 1;
            }
        }
        rows.push(AronsonRow { t, fitted_m: m, min_kernel: min_p, max_symmetry_defect: sym, pairs: count });
    }
    let finite = rows.iter().all(|r| r.fitted_m.is_finite() && r.fitted_m >= 1.0);
    let positive = rows.iter().all(|r| r.min_kernel > 0.0);
    let mmax = rows.iter().map(|r| r.fitted_m).fold(0.0, f64::max);
    let mmin = rows.iter().map(|r| r.fitted_m).fold(f64::INFINITY, f64::min);
    let stability = Check::at_most(mmax / mmin, 2.0);
    let pass = finite && positive && stability.pass;
    Ok(AronsonReport { rows, stability, finite, positive, pass })
}
