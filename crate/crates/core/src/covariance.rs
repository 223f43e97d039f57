//! The free lattice propagator and its continuum reference kernels.
//!
//! `C` is the kernel of `(-Δ_lat + m²)^{-1}` acting on functions over the lattice
//! with volume element `a^d`, i.e. the matrix inverse divided by `a^d`. With
//! this normalization `C(x, y)` approximates the continuum Schwinger function
//! `S(x - y)` directly, the N-space product is the Riemann sum
//! `a^{2d} Σ f(x) C(x, y) g(y)`, and the Gaussian field with covariance `C` has
//! density `exp(-½ a^d Σ φ (-Δ_lat + m²) φ)`.
//!
//! Fourier conventions follow `f(x) = ∫ e^{ipx} f̃(p) dp` with the `(2π)^{-d}`
//! on the forward transform, so `S(x) = (2π)^{-d} ∫ e^{ipx} / (p² + m²) dp`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{Boundary, LatticeGeometry};
use crate::quadrature;

/// Sites above which dense matrices are refused.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stencil {
    NearestNeighbor,
    /// Adds `weight * (2φ(x) - φ(x + 2e) - φ(x - 2e)) / a²` per axis. Couples
    /// sites across a one-site-thick plane, so it breaks the Markov property.
    NextNearestNeighbor { weight: f64 },
}

/// Real orthonormal eigenbasis of the 1D lattice Laplacian on one axis.
#[derive(Clone, Debug)]
pub struct AxisModes {
    /// Column `k` is mode `k`.
    pub basis: DMatrix<f64>,
    /// Eigenvalue of `-Δ` along this axis for each mode.
    pub eigenvalues: Vec<f64>,
    /// Lattice momentum of each mode (`|k|` for periodic pairs).
    pub momenta: Vec<f64>,
}

impl AxisModes {
    fn new(n: usize, spacing: f64, boundary: Boundary) -> Self {
        let a2 = spacing * spacing;
        let mut basis = DMatrix::zeros(n, n);
        let mut eigenvalues = Vec::with_capacity(n);
        let mut momenta = Vec::with_capacity(n);
        match boundary {
            Boundary::Periodic => {
                let nf = n as f64;
                let mut col = 0;
                for j in 0..=n / 2 {
                    let k = 2.0 * PI * j as f64 / (nf * spacing);
                    let lam = 4.0 / a2 * (PI * j as f64 / nf).sin().powi(2);
                    if j == 0 || 2 * j == n {
                        for x in 0..n {
                            basis[(x, col)] = (k * spacing * x as f64).cos() / nf.sqrt();
                        }
                        eigenvalues.push(lam);
                        momenta.push(k);
                        col += 1;
                    } else {
                        for x in 0..n {
                            let ph = k * spacing * x as f64;
                            basis[(x, col)] = (2.0 / nf).sqrt() * ph.cos();
                            basis[(x, col + 1)] = (2.0 / nf).sqrt() * ph.sin();
                        }
                        eigenvalues.extend([lam, lam]);
                        momenta.extend([k, k]);
                        col += 2;
                    }
                }
            }
            Boundary::Dirichlet => {
                let np1 = (n + 1) as f64;
                for j in 1..=n {
                    for x in 0..n {
                        basis[(x, j - 1)] =
                            (2.0 / np1).sqrt() * (PI * j as f64 * (x + 1) as f64 / np1).sin();
                    }
                    eigenvalues.push(4.0 / a2 * (PI * j as f64 / (2.0 * np1)).sin().powi(2));
                    momenta.push(PI * j as f64 / (np1 * spacing));
                }
            }
        }
        AxisModes { basis, eigenvalues, momenta }
    }
}

enum Backend {
    Spectral {
        axes: Vec<AxisModes>,
        /// Per-axis forward/inverse FFT for periodic lattices.
        ffts: Option<Vec<(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>>,
        /// `(-Δ_lat + m²)` eigenvalue on the FFT grid (periodic) or the
        /// product sine basis (Dirichlet), row-major.
        spectrum: Vec<f64>,
    },
    Dense {
        /// Orthonormal eigenvectors of `-Δ + m²`, one per column.
        eigenvectors: DMatrix<f64>,
        spectrum: Vec<f64>,
    },
}

pub struct CovarianceOperator {
    geometry: LatticeGeometry,
    mass: f64,
    stencil: Stencil,
    backend: Backend,
}

impl std::fmt::Debug for CovarianceOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CovarianceOperator")
            .field("geometry", &self.geometry)
            .field("mass", &self.mass)
            .field("stencil", &self.stencil)
            .finish()
    }
}

impl CovarianceOperator {
    pub fn new(geometry: &LatticeGeometry, mass: f64) -> Result<Self> {
        Self::with_stencil(geometry, mass, Stencil::NearestNeighbor)
    }

    pub fn with_stencil(geometry: &LatticeGeometry, mass: f64, stencil: Stencil) -> Result<Self> {
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::InvalidParameter(format!("mass must be positive, got {mass}")));
        }
        let mut op = CovarianceOperator {
            geometry: geometry.clone(),
            mass,
            stencil,
            backend: Backend::Dense { eigenvectors: DMatrix::zeros(0, 0), spectrum: vec![] },
        };
        op.backend = match stencil {
            Stencil::NearestNeighbor => op.spectral_backend(),
            Stencil::NextNearestNeighbor { .. } => op.dense_backend()?,
        };
        Ok(op)
    }

    fn spectral_backend(&self) -> Backend {
        let g = &self.geometry;
        let axes: Vec<AxisModes> = g
            .extents()
            .iter()
            .map(|&n| AxisModes::new(n, g.spacing(), g.boundary()))
            .collect();
        let m2 = self.mass * self.mass;
        let a2 = g.spacing() * g.spacing();
        let ffts = (g.boundary() == Boundary::Periodic).then(|| {
            let mut planner = FftPlanner::new();
            g.extents()
                .iter()
                .map(|&n| (planner.plan_fft_forward(n), planner.plan_fft_inverse(n)))
                .collect()
        });
        let spectrum = (0..g.num_sites())
            .map(|s| {
                let c = g.coords(s);
                let lap: f64 = c
                    .iter()
                    .zip(g.extents())
                    .enumerate()
                    .map(|(axis, (&k, &n))| match g.boundary() {
                        Boundary::Periodic => 4.0 / a2 * (PI * k as f64 / n as f64).sin().powi(2),
                        Boundary::Dirichlet => axes[axis].eigenvalues[k],
                    })
                    .sum();
                lap + m2
            })
            .collect();
        Backend::Spectral { axes, ffts, spectrum }
    }

    fn dense_backend(&self) -> Result<Backend> {
        let n = self.geometry.num_sites();
        if n > DENSE_LIMIT {
            return Err(Error::Budget(format!("dense covariance with {n} sites")));
        }
        let mut q = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = self.apply_operator(&e);
            for i in 0..n {
                q[(i, j)] = col[i];
            }
        }
        let eig = nalgebra::SymmetricEigen::new(q);
        if let Some(bad) = eig.eigenvalues.iter().find(|&&l| l <= 0.0) {
            return Err(Error::Numerical(format!("non-positive stencil eigenvalue {bad}")));
        }
        Ok(Backend::Dense {
            spectrum: eig.eigenvalues.iter().copied().collect(),
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn geometry(&self) -> &LatticeGeometry {
        &self.geometry
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn stencil(&self) -> Stencil {
        self.stencil
    }

    pub fn num_sites(&self) -> usize {
        self.geometry.num_sites()
    }

    /// Eigenvalues of `-Δ_lat + m²`, unordered for the spectral backend.
    pub fn operator_spectrum(&self) -> &[f64] {
        match &self.backend {
            Backend::Spectral { spectrum, .. } | Backend::Dense { spectrum, .. } => spectrum,
        }
    }

    pub fn axis_modes(&self, axis: usize) -> Option<&AxisModes> {
        match &self.backend {
            Backend::Spectral { axes, .. } => axes.get(axis),
            Backend::Dense { .. } => None,
        }
    }

    /// `(-Δ_lat + m²) v` straight from the stencil.
    pub fn apply_operator(&self, v: &[f64]) -> Vec<f64> {
        let g = &self.geometry;
        let a2 = g.spacing() * g.spacing();
        let m2 = self.mass * self.mass;
        let val = |s: Option<usize>| s.map_or(0.0, |s| v[s]);
        (0..g.num_sites())
            .map(|x| {
                let mut out = m2 * v[x];
                for axis in 0..g.dim() {
                    let fwd = g.neighbor(x, axis, true);
                    let bwd = g.neighbor(x, axis, false);
                    out += (2.0 * v[x] - val(fwd) - val(bwd)) / a2;
                    if let Stencil::NextNearestNeighbor { weight } = self.stencil {
                        let fwd2 = fwd.and_then(|y| g.neighbor(y, axis, true));
                        let bwd2 = bwd.and_then(|y| g.neighbor(y, axis, false));
                        out += weight * (2.0 * v[x] - val(fwd2) - val(bwd2)) / a2;
                    }
                }
                out
            })
            .collect()
    }

    /// `C v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let vol = self.geometry.cell_volume();
        self.apply_spectral(v, |lam| 1.0 / (lam * vol))
    }

    /// `C^{1/2} v`.
    pub fn apply_sqrt(&self, v: &[f64]) -> Vec<f64> {
        let vol = self.geometry.cell_volume();
        self.apply_spectral(v, |lam| 1.0 / (lam * vol).sqrt())
    }

    /// `F(-Δ_lat + m²) v` for a spectral function `F`.
    pub fn apply_spectral(&self, v: &[f64], func: impl Fn(f64) -> f64) -> Vec<f64> {
        assert_eq!(v.len(), self.num_sites(), "vector length must match the lattice");
        match &self.backend {
            Backend::Spectral { ffts: Some(ffts), spectrum, .. } => {
                let mut buf: Vec<Complex<f64>> = v.iter().map(|&x| Complex::new(x, 0.0)).collect();
                for (axis, (fwd, _)) in ffts.iter().enumerate() {
                    self.for_each_line(&mut buf, axis, |line| fwd.process(line));
                }
                for (z, &lam) in buf.iter_mut().zip(spectrum) {
                    *z *= func(lam);
                }
                for (axis, (_, inv)) in ffts.iter().enumerate() {
                    self.for_each_line(&mut buf, axis, |line| inv.process(line));
                }
                let norm = self.num_sites() as f64;
                buf.iter().map(|z| z.re / norm).collect()
            }
            Backend::Spectral { axes, ffts: None, spectrum } => {
                let mut buf = v.to_vec();
                for (axis, modes) in axes.iter().enumerate() {
                    self.transform_axis(&mut buf, axis, &modes.basis, true);
                }
                for (z, &lam) in buf.iter_mut().zip(spectrum) {
                    *z *= func(lam);
                }
                for (axis, modes) in axes.iter().enumerate() {
                    self.transform_axis(&mut buf, axis, &modes.basis, false);
                }
                buf
            }
            Backend::Dense { eigenvectors, spectrum } => {
                let x = DMatrix::from_column_slice(v.len(), 1, v);
                let mut coef = eigenvectors.tr_mul(&x);
                for (c, &lam) in coef.iter_mut().zip(spectrum) {
                    *c *= func(lam);
                }
                (eigenvectors * coef).iter().copied().collect()
            }
        }
    }

    fn for_each_line<T: Copy + Default>(&self, buf: &mut [T], axis: usize, mut f: impl FnMut(&mut [T])) {
        let g = &self.geometry;
        let n = g.extent(axis);
        let stride: usize = g.extents()[axis + 1..].iter().product();
        let block = stride * n;
        let mut line = vec![T::default(); n];
        for base in (0..buf.len()).step_by(block) {
            for off in 0..stride {
                let start = base + off;
                for (i, l) in line.iter_mut().enumerate() {
                    *l = buf[start + i * stride];
                }
                f(&mut line);
                for (i, l) in line.iter().enumerate() {
                    buf[start + i * stride] = *l;
                }
            }
        }
    }

    /// Multiply every line along `axis` by `basisᵀ` (forward) or `basis`.
    fn transform_axis(&self, buf: &mut [f64], axis: usize, basis: &DMatrix<f64>, forward: bool) {
        let n = basis.nrows();
        let mut tmp = vec![0.0; n];
        self.for_each_line(buf, axis, |line| {
            for (k, t) in tmp.iter_mut().enumerate() {
                *t = (0..n)
                    .map(|x| if forward { basis[(x, k)] } else { basis[(k, x)] } * line[x])
                    .sum();
            }
            line.copy_from_slice(&tmp);
        });
    }

    /// Column `C(·, y)`.
    pub fn column(&self, y: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.num_sites()];
        e[y] = 1.0;
        self.apply(&e)
    }

    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.column(y)[x]
    }

    /// The full matrix of `C`, for lattices up to [`DENSE_LIMIT`] sites.
    pub fn dense(&self) -> Result<DMatrix<f64>> {
        let n = self.num_sites();
        if n > DENSE_LIMIT {
            return Err(Error::Budget(format!("dense covariance with {n} sites")));
        }
        let mut m = DMatrix::zeros(n, n);
        for y in 0..n {
            let col = self.column(y);
            for x in 0..n {
                m[(x, y)] = col[x];
            }
        }
        Ok(m.symmetrize())
    }

    /// Per-site variances `C(x, x)`.
    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.num_sites();
        if self.geometry.boundary() == Boundary::Periodic && self.stencil == Stencil::NearestNeighbor {
            return vec![self.entry(0, 0); n];
        }
        if let Backend::Spectral { axes, .. } = &self.backend {
            // Σ_k Π_i basis_i(x_i, k_i)² / (λ_k a^d)
            let vol = self.geometry.cell_volume();
            let spectrum = self.operator_spectrum();
            let g = &self.geometry;
            return (0..n)
                .map(|x| {
                    let cx = g.coords(x);
                    (0..n)
                        .map(|k| {
                            let ck = g.coords(k);
                            let w: f64 = (0..g.dim())
                                .map(|i| axes[i].basis[(cx[i], ck[i])].powi(2))
                                .product();
                            w / (spectrum[k] * vol)
                        })
                        .sum()
                })
                .collect();
        }
        (0..n).map(|x| self.entry(x, x)).collect()
    }
}

trait Symmetrize {
    fn symmetrize(self) -> Self;
}

impl Symmetrize for DMatrix<f64> {
    fn symmetrize(self) -> Self {
        let t = self.transpose();
        (self + t) * 0.5
    }
}

/// `⟨f, g⟩_N = a^{2d} Σ_{x,y} f(x) C(x, y) g(y)`.
pub fn n_inner_product(cov: &CovarianceOperator, f: &[f64], g: &[f64]) -> Result<f64> {
    cov.geometry().check_len(f.len())?;
    cov.geometry().check_len(g.len())?;
    let cg = cov.apply(g);
    let vol = cov.geometry().cell_volume();
    Ok(vol * vol * f.iter().zip(&cg).map(|(a, b)| a * b).sum::<f64>())
}

/// `∫ e^{ipx} / (p² + M²) dp = (π / M) e^{-M x}` for `x >= 0`.
pub fn magic_formula(x: f64, big_m: f64) -> Result<f64> {
    if !(x >= 0.0) || !(big_m > 0.0) {
        return Err(Error::InvalidParameter(format!("need x >= 0 and M > 0, got ({x}, {big_m})")));
    }
    Ok(PI / big_m * (-big_m * x).exp())
}

/// The left side of [`magic_formula`] by direct numerical integration.
pub fn magic_formula_quadrature(x: f64, big_m: f64) -> Result<f64> {
    if !(x >= 0.0) || !(big_m > 0.0) {
        return Err(Error::InvalidParameter(format!("need x >= 0 and M > 0, got ({x}, {big_m})")));
    }
    let m2 = big_m * big_m;
    let g = |p: f64| 1.0 / (p * p + m2);
    if x == 0.0 {
        return Ok(2.0 * quadrature::integrate_to_infinity(g, 0.0, 1e-15, 1e-13)?);
    }
    // ∫_0^P cos(px) g(p) dp period by period, then the tail by repeated
    // integration by parts; the remainder is below 24 / (P^5 x^4).
    let period = 2.0 * PI / x;
    let cutoff = (50.0 * big_m).max(2000.0 / x);
    let n_periods = (cutoff / period).ceil() as usize;
    let cutoff = n_periods as f64 * period;
    let mut body = 0.0;
    for k in 0..n_periods {
        let lo = k as f64 * period;
        body += quadrature::integrate(|p| (p * x).cos() * g(p), lo, lo + period, 1e-16, 1e-13)?;
    }
    let p = cutoff;
    let d = p * p + m2;
    let g0 = 1.0 / d;
    let g1 = -2.0 * p / (d * d);
    let g2 = (6.0 * p * p - 2.0 * m2) / (d * d * d);
    let g3 = 24.0 * p * (m2 - p * p) / (d * d * d * d);
    let (s, c) = (p * x).sin_cos();
    let tail = -s * g0 / x - c * g1 / (x * x) + s * g2 / x.powi(3) + c * g3 / x.powi(4);
    Ok(2.0 * (body + tail))
}

/// Continuum two-point Schwinger function `S(x)` in one or two dimensions.
///
/// 1D: `e^{-m|x|} / (2m)`. 2D: `K_0(m r) / (2π)` with
/// `K_0(z) = ∫_0^∞ e^{-z cosh t} dt` evaluated by adaptive quadrature.
pub fn continuum_schwinger(x: &[f64], mass: f64) -> Result<f64> {
    if !(mass > 0.0) {
        return Err(Error::InvalidParameter(format!("mass must be positive, got {mass}")));
    }
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    match x.len() {
        1 => Ok((-mass * r).exp() / (2.0 * mass)),
        2 => {
            if r == 0.0 {
                return Err(Error::InvalidParameter(
                    "two-dimensional kernel is singular at x = 0".into(),
                ));
            }
            Ok(bessel_k0(mass * r)? / (2.0 * PI))
        }
        d => Err(Error::InvalidParameter(format!("continuum kernel for dim {d} not provided"))),
    }
}

fn bessel_k0(z: f64) -> Result<f64> {
    // e^{-z} ∫ e^{-z (cosh t - 1)} dt; the integrand is below e^{-60} past t_max
    let t_max = (1.0 + 60.0 / z).acosh();
    let scaled = quadrature::integrate(|t| (-z * (t.cosh() - 1.0)).exp(), 0.0, t_max, 1e-300, 1e-12)?;
    Ok((-z).exp() * scaled)
}

/// Exponential decay rate of the 2D continuum kernel on `[r_min, r_max]`.
#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    /// Fitted `μ` in `log S = c - μ r + β log r`.
    pub rate: f64,
    /// Fitted power-law exponent `β` of the prefactor.
    pub power: f64,
    /// Plain least-squares slope of `log S` against `r`.
    pub naive_slope: f64,
}

pub fn continuum_decay_fit(mass: f64, r_min: f64, r_max: f64, points: usize) -> Result<DecayFit> {
    if points < 3 || !(r_max > r_min) || !(r_min > 0.0) {
        return Err(Error::InvalidParameter("need r_max > r_min > 0 and >= 3 points".into()));
    }
    let mut rows = Vec::with_capacity(points);
    for i in 0..points {
        let r = r_min + (r_max - r_min) * i as f64 / (points - 1) as f64;
        rows.push((r, continuum_schwinger(&[r, 0.0], mass)?.ln()));
    }
    let n = rows.len();
    let x = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => -rows[i].0,
        _ => rows[i].0.ln(),
    });
    let y = DMatrix::from_fn(n, 1, |i, _| rows[i].1);
    let coef = x
        .clone()
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let mean_r = rows.iter().map(|r| r.0).sum::<f64>() / n as f64;
    let mean_y = rows.iter().map(|r| r.1).sum::<f64>() / n as f64;
    let sxy: f64 = rows.iter().map(|r| (r.0 - mean_r) * (r.1 - mean_y)).sum();
    let sxx: f64 = rows.iter().map(|r| (r.0 - mean_r).powi(2)).sum();
    Ok(DecayFit { rate: coef[1], power: coef[2], naive_slope: sxy / sxx })
}

#[derive(Clone, Debug, Serialize)]
pub struct RefinementRow {
    pub spacing: f64,
    pub lattice: f64,
    pub continuum: f64,
    pub error: f64,
}

/// Lattice kernel `C(x, 0)` against the continuum `S(x)` at a fixed physical
/// separation along axis 0, for a decreasing list of spacings.
pub fn lattice_vs_continuum_refinement(
    mass: f64,
    physical_extent: f64,
    separation: f64,
    dim: usize,
    spacings: &[f64],
) -> Result<Vec<RefinementRow>> {
    if spacings.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter("spacings must be strictly decreasing".into()));
    }
    if dim == 2 && separation == 0.0 {
        return Err(Error::InvalidParameter(
            "two-dimensional kernel is singular at x = 0".into(),
        ));
    }
    let commensurate = |len: f64, a: f64| -> Result<usize> {
        let n = len / a;
        if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::InvalidParameter(format!("{len} is not a multiple of spacing {a}")));
        }
        Ok(n.round() as usize)
    };
    let mut x = vec![0.0; dim];
    x[0] = separation;
    let continuum = continuum_schwinger(&x, mass)?;
    spacings
        .iter()
        .map(|&a| {
            let n = commensurate(physical_extent, a)?;
            let steps = commensurate(separation, a)?;
            let geometry = LatticeGeometry::new(dim, &vec![n; dim], a, Boundary::Periodic)?;
            let cov = CovarianceOperator::new(&geometry, mass)?;
            let mut target = vec![0; dim];
            target[0] = steps;
            let lattice = cov.column(0)[geometry.index(&target)];
            Ok(RefinementRow { spacing: a, lattice, continuum, error: (lattice - continuum).abs() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Boundary;
    use rand::{Rng, SeedableRng};

    fn geom(dim: usize, ext: &[usize], a: f64, b: Boundary) -> LatticeGeometry {
        LatticeGeometry::new(dim, ext, a, b).unwrap()
    }

    #[test]
    fn dirichlet_three_sites_matches_direct_inverse() {
        let c = CovarianceOperator::new(&geom(1, &[3], 1.0, Boundary::Dirichlet), 1.0).unwrap();
        // inverse of tridiag(-1, 3, -1)
        let expect = [
            [8.0 / 21.0, 1.0 / 7.0, 1.0 / 21.0],
            [1.0 / 7.0, 3.0 / 7.0, 1.0 / 7.0],
            [1.0 / 21.0, 1.0 / 7.0, 8.0 / 21.0],
        ];
        let d = c.dense().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((d[(i, j)] - expect[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn ring_is_translation_invariant() {
        let c = CovarianceOperator::new(&geom(1, &[8], 1.0, Boundary::Periodic), 1.0).unwrap();
        let d = c.dense().unwrap();
        for x in 0..8 {
            assert!((d[(x, x)] - d[(0, 0)]).abs() < 1e-14);
            for y in 0..8 {
                assert!((d[(x, y)] - d[(y, x)]).abs() < 1e-15);
                assert!((d[(x, y)] - d[((x + 3) % 8, (y + 3) % 8)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn smallest_eigenvalue_is_mass_squared() {
        let c = CovarianceOperator::new(&geom(2, &[4, 4], 1.0, Boundary::Periodic), 0.7).unwrap();
        let min = c.operator_spectrum().iter().copied().fold(f64::INFINITY, f64::min);
        assert!((min - 0.49).abs() < 1e-15);
    }

    #[test]
    fn covariance_inverts_the_stencil() {
        for (ext, b, a) in [
            (vec![16, 16], Boundary::Periodic, 1.0),
            (vec![16, 16], Boundary::Dirichlet, 1.0),
            (vec![6, 10], Boundary::Dirichlet, 0.5),
            (vec![12], Boundary::Periodic, 0.25),
        ] {
            let g = geom(ext.len(), &ext, a, b);
            let c = CovarianceOperator::new(&g, 1.3).unwrap();
            let vol = g.cell_volume();
            for x in (0..g.num_sites()).step_by(7) {
                let r = c.apply_operator(&c.column(x));
                for (y, v) in r.iter().enumerate() {
                    let expect = if y == x { 1.0 / vol } else { 0.0 };
                    assert!((v - expect).abs() * vol < 1e-10, "{ext:?} {b:?}");
                }
            }
        }
    }

    #[test]
    fn sqrt_squares_to_covariance() {
        let g = geom(2, &[5, 6], 0.5, Boundary::Dirichlet);
        let c = CovarianceOperator::new(&g, 1.0).unwrap();
        let v: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let a = c.apply_sqrt(&c.apply_sqrt(&v));
        let b = c.apply(&v);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn diagonal_matches_columns() {
        let g = geom(2, &[4, 5], 1.0, Boundary::Dirichlet);
        let c = CovarianceOperator::new(&g, 0.8).unwrap();
        let d = c.diagonal();
        for x in 0..20 {
            assert!((d[x] - c.entry(x, x)).abs() < 1e-14);
        }
    }

    #[test]
    fn positive_definite_on_random_vectors() {
        let g = geom(2, &[6, 6], 1.0, Boundary::Periodic);
        let c = CovarianceOperator::new(&g, 1.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let f: Vec<f64> = (0..36).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!(n_inner_product(&c, &f, &f).unwrap() > 0.0);
        }
    }

    #[test]
    fn n_product_of_unit_vectors() {
        let g = geom(2, &[4, 4], 0.5, Boundary::Dirichlet);
        let c = CovarianceOperator::new(&g, 1.0).unwrap();
        let mut ex = vec![0.0; 16];
        let mut ey = vec![0.0; 16];
        ex[5] = 1.0;
        ey[10] = 1.0;
        let v = n_inner_product(&c, &ex, &ey).unwrap();
        assert!((v - 0.5f64.powi(4) * c.entry(5, 10)).abs() < 1e-15);
        let other = CovarianceOperator::new(&geom(1, &[4], 1.0, Boundary::Periodic), 1.0).unwrap();
        assert!(n_inner_product(&other, &ex, &ey).is_err());
    }

    #[test]
    fn isometries_preserve_covariance() {
        use crate::lattice::IsometryElement;
        let g = geom(2, &[8, 8], 1.0, Boundary::Periodic);
        let c = CovarianceOperator::new(&g, 0.9).unwrap();
        let d = c.dense().unwrap();
        let elements = [
            IsometryElement::Translation { axis: 0, offset: 3 },
            IsometryElement::Translation { axis: 1, offset: -5 },
            IsometryElement::Reflection { axis: 0, plane: 2 },
            IsometryElement::Reflection { axis: 1, plane: 7 },
        ];
        for el in &elements {
            for x in 0..64 {
                let gx = g.map_site(el, x).unwrap();
                for y in 0..64 {
                    let gy = g.map_site(el, y).unwrap();
                    assert!((d[(gx, gy)] - d[(x, y)]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn clustering_is_log_convex_decreasing() {
        let g = geom(1, &[64], 1.0, Boundary::Periodic);
        let c = CovarianceOperator::new(&g, 0.5).unwrap();
        let col = c.column(0);
        let logs: Vec<f64> = col[..=32].iter().map(|v| v.ln()).collect();
        assert!(logs.windows(2).all(|w| w[1] < w[0]));
        // second differences non-negative, up to rounding near the midpoint
        assert!(logs.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] > -1e-9));
    }

    #[test]
    fn magic_formula_values() {
        assert!((magic_formula(0.0, 1.0).unwrap() - PI).abs() < 1e-15);
        assert!((magic_formula(1.0, 1.0).unwrap() - PI * (-1.0f64).exp()).abs() < 1e-15);
        let q = magic_formula_quadrature(0.7, 2.3).unwrap();
        assert!((q - magic_formula(0.7, 2.3).unwrap()).abs() < 1e-8);
        assert!(magic_formula(-1.0, 1.0).is_err());
    }

    #[test]
    fn continuum_kernels() {
        let s = continuum_schwinger(&[2.0], 1.0).unwrap();
        assert!((s - (-2.0f64).exp() / 2.0).abs() < 1e-16);
        assert!(continuum_schwinger(&[0.0, 0.0], 1.0).is_err());
        // K_0(1) = 0.42102443824070833
        let k = continuum_schwinger(&[1.0, 0.0], 1.0).unwrap() * 2.0 * PI;
        assert!((k - 0.421_024_438_240_708_3).abs() < 1e-12);
        let sym = continuum_schwinger(&[-0.6, 0.8], 1.0).unwrap();
        assert!((sym - continuum_schwinger(&[0.6, -0.8], 1.0).unwrap()).abs() < 1e-15);
        assert!(sym > 0.0);
    }

    #[test]
    fn decay_rate_fit() {
        let fit = continuum_decay_fit(1.0, 5.0, 10.0, 51).unwrap();
        assert!((fit.rate - 1.0).abs() < 0.05, "{fit:?}");
        assert!((fit.power + 0.5).abs() < 0.05);
        // the plain slope carries the r^{-1/2} prefactor
        assert!((fit.naive_slope + 1.0662).abs() < 1e-3);
    }

    #[test]
    fn refinement_1d() {
        let rows = lattice_vs_continuum_refinement(1.0, 40.0, 2.0, 1, &[0.5, 0.25, 0.125]).unwrap();
        // closed-form infinite-lattice values: a e^{-μ n} / (2 sinh μ), cosh μ = 1 + a²/2
        let expect_err = [6.762_521_9e-4, 1.743_604_7e-4, 4.393_724_2e-5];
        for (row, e) in rows.iter().zip(expect_err) {
            assert!((row.error - e).abs() < 1e-10, "{row:?}");
        }
        assert!(rows.windows(2).all(|w| w[1].error < w[0].error));
        assert!(lattice_vs_continuum_refinement(1.0, 40.0, 2.0, 1, &[0.5, 0.5]).is_err());
        assert!(lattice_vs_continuum_refinement(1.0, 40.0, 2.0, 1, &[0.3]).is_err());
        assert!(lattice_vs_continuum_refinement(1.0, 8.0, 0.0, 2, &[0.5]).is_err());
    }

    #[test]
    fn next_nearest_stencil_is_dense_and_positive() {
        let g = geom(1, &[9], 1.0, Boundary::Dirichlet);
        let c = CovarianceOperator::with_stencil(&g, 1.0, Stencil::NextNearestNeighbor { weight: 0.5 })
            .unwrap();
        let r = c.apply_operator(&c.column(4));
        for (y, v) in r.iter().enumerate() {
            assert!((v - if y == 4 { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
        let s = c.apply_sqrt(&c.apply_sqrt(&[1.0; 9]));
        let d = c.apply(&[1.0; 9]);
        for (a, b) in s.iter().zip(&d) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
