//! Transfer matrices of the 2D lattice model on a strip of `n_s` spatial
//! sites, ground states, the Feynman–Kac–Nelson factorization, rectangle
//! amplitudes in both orientations, and the ground-state energy density.
//!
//! One time slice carries
//! `V(φ) = ½ φᵀ(L_s + a²m²)φ + a² Σ_x :P(φ_x):_{c_x}` and neighboring slices
//! couple through `½|φ - φ'|²`, so
//! `T(φ, φ') = exp(-½V(φ) - ½|φ - φ'|² - ½V(φ'))`. Field values live on a
//! Gauss–Hermite grid per site (scaled to the site variance), and the
//! matrix stored is `√W T √W` with the grid's Lebesgue weights `W`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interaction::InteractionPolynomial;
use crate::lattice::Boundary;
use crate::quadrature::GaussHermite;

pub const MAX_DIM: usize = 4096;
pub const MIN_NODES: usize = 8;
pub const DEFAULT_NODES: usize = 16;
const DENSE_EIGEN_LIMIT: usize = 512;
const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 100_000;
/// Total sites allowed in the monolithic path-integral oracle.
pub const PATH_ORACLE_MAX_SITES: usize = 6;

#[derive(Clone, Debug, Serialize)]
pub struct StripSpec {
    pub n_s: usize,
    pub mass: f64,
    pub spacing: f64,
    pub boundary: Boundary,
    pub nodes: usize,
}

impl StripSpec {
    pub fn new(n_s: usize, mass: f64, spacing: f64) -> Self {
        StripSpec { n_s, mass, spacing, boundary: Boundary::Dirichlet, nodes: DEFAULT_NODES }
    }

    fn validate(&self) -> Result<usize> {
        if self.n_s == 0 {
            return Err(Error::InvalidParameter("strip needs at least one site".into()));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) || !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need positive mass and spacing, got ({}, {})",
                self.mass, self.spacing
            )));
        }
        if self.nodes < MIN_NODES {
            return Err(Error::InvalidParameter(format!(
                "{} nodes per site is too few; need at least {MIN_NODES}",
                self.nodes
            )));
        }
        grid_dim(self.nodes, self.n_s)
    }
}

fn grid_dim(nodes: usize, sites: usize) -> Result<usize> {
    nodes
        .checked_pow(sites as u32)
        .filter(|&d| d <= MAX_DIM)
        .ok_or_else(|| Error::Budget(format!("{nodes}^{sites} grid points exceed {MAX_DIM}")))
}

/// `L_s + a²m²` on a line of `n` sites (graph Laplacian with ghost links
/// under Dirichlet, wrapped under periodic).
fn slice_operator(n: usize, a2m2: f64, boundary: Boundary) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(n, n);
    for i in 0..n {
        q[(i, i)] += a2m2;
        for j in [i as isize - 1, i as isize + 1] {
            let nb = match boundary {
                Boundary::Dirichlet if j < 0 || j >= n as isize => None,
                Boundary::Dirichlet => Some(j as usize),
                Boundary::Periodic => Some(j.rem_euclid(n as isize) as usize),
            };
            q[(i, i)] += 1.0;
            if let Some(k) = nb {
                q[(i, k)] -= 1.0;
            }
        }
    }
    q
}

/// Equal-time variance of each strip site under the free transfer
/// dynamics: `Σ_k v_k(x)² / (2 sinh θ_k)` with `cosh θ_k = 1 + b_k/2`.
pub fn strip_variances(n_s: usize, mass: f64, spacing: f64, boundary: Boundary) -> Vec<f64> {
    let eig = SymmetricEigen::new(slice_operator(n_s, (spacing * mass).powi(2), boundary));
    (0..n_s)
        .map(|x| {
            (0..n_s)
                .map(|k| {
                    let theta = (1.0 + eig.eigenvalues[k] / 2.0).acosh();
                    eig.eigenvectors[(x, k)].powi(2) / (2.0 * theta.sinh())
                })
                .sum()
        })
        .collect()
}

/// Tensor grid over the sites of one slice.
#[derive(Clone, Debug)]
struct SliceGrid {
    nodes: Vec<Vec<f64>>,
    log_weights: Vec<Vec<f64>>,
    per_site: usize,
}

impl SliceGrid {
    fn new(variances: &[f64], per_site: usize) -> Self {
        let gh = GaussHermite::new(per_site);
        let (nodes, log_weights) = variances
            .iter()
            .map(|&c| {
                let (x, w) = gh.lebesgue(c);
                (x, w.iter().map(|v| v.ln()).collect())
            })
            .unzip();
        SliceGrid { nodes, log_weights, per_site }
    }

    fn sites(&self) -> usize {
        self.nodes.len()
    }

    fn dim(&self) -> usize {
        self.per_site.pow(self.sites() as u32)
    }

    /// Site 0 is the most significant digit.
    fn point(&self, mut idx: usize, out: &mut [f64]) -> f64 {
        let mut lw = 0.0;
        for s in (0..self.sites()).rev() {
            let d = idx % self.per_site;
            idx /= self.per_site;
            out[s] = self.nodes[s][d];
            lw += self.log_weights[s][d];
        }
        lw
    }

    fn points(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        (0..self.dim())
            .map(|i| {
                let mut p = vec![0.0; self.sites()];
                let lw = self.point(i, &mut p);
                (p, lw)
            })
            .unzip()
    }
}

/// `V` at every grid point of a slice with per-site Wick tables.
fn slice_potential(
    points: &[Vec<f64>],
    op: &DMatrix<f64>,
    wick: &[Vec<f64>],
    a2: f64,
) -> Vec<f64> {
    points
        .iter()
        .map(|p| {
            let v = DVector::from_column_slice(p);
            let gauss = 0.5 * v.dot(&(op * &v));
            let inter: f64 = p
                .iter()
                .zip(wick)
                .map(|(&x, w)| w.iter().rev().fold(0.0, |acc, &c| acc * x + c))
                .sum();
            gauss + a2 * inter
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// `√W T √W` for a homogeneous strip.
#[derive(Clone, Debug)]
pub struct TransferMatrix {
    pub spec: StripSpec,
    pub polynomial: InteractionPolynomial,
    /// Wick constants `c_x` per strip site.
    pub variances: Vec<f64>,
    pub matrix: DMatrix<f64>,
    points: Vec<Vec<f64>>,
    log_weights: Vec<f64>,
    potential: Vec<f64>,
}

pub fn build_transfer(
    n_s: usize,
    mass: f64,
    spacing: f64,
    polynomial: &InteractionPolynomial,
    nodes: usize,
) -> Result<TransferMatrix> {
    build_transfer_with(&StripSpec { nodes, ..StripSpec::new(n_s, mass, spacing) }, polynomial)
}

pub fn build_transfer_with(spec: &StripSpec, polynomial: &InteractionPolynomial) -> Result<TransferMatrix> {
    let dim = spec.validate()?;
    let variances = strip_variances(spec.n_s, spec.mass, spec.spacing, spec.boundary);
    let grid = SliceGrid::new(&variances, spec.nodes);
    let (points, log_weights) = grid.points();
    let op = slice_operator(spec.n_s, (spec.spacing * spec.mass).powi(2), spec.boundary);
    let wick: Vec<Vec<f64>> = variances.iter().map(|&c| polynomial.wick_ordered(c)).collect::<Result<_>>()?;
    let potential = slice_potential(&points, &op, &wick, spec.spacing * spec.spacing);
    let half: Vec<f64> = (0..dim).map(|i| 0.5 * log_weights[i] - 0.5 * potential[i]).collect();
    let mut matrix = DMatrix::zeros(dim, dim);
    matrix.as_mut_slice().par_chunks_mut(dim).enumerate().for_each(|(j, col)| {
        for (i, v) in col.iter_mut().enumerate() {
            *v = (half[i] + half[j] - 0.5 * sq_dist(&points[i], &points[j])).exp();
        }
    });
    // exact symmetry regardless of summation order in sq_dist
    for j in 0..dim {
        for i in 0..j {
            matrix[(j, i)] = matrix[(i, j)];
        }
    }
    Ok(TransferMatrix {
        spec: spec.clone(),
        polynomial: polynomial.clone(),
        variances,
        matrix,
        points,
        log_weights,
        potential,
    })
}

impl TransferMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Field values of grid point `i`.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    /// `√W` per grid point.
    pub fn sqrt_weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| (0.5 * l).exp()).collect()
    }

    /// The same strip with `P ≡ 0`, on the same grid.
    pub fn free(&self) -> Result<TransferMatrix> {
        build_transfer_with(&self.spec, &InteractionPolynomial::zero())
    }

    pub fn symmetry_defect(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).amax()
    }

    pub fn min_entry(&self) -> f64 {
        self.matrix.min()
    }
}

/// Dominant eigenpair `(λ₀, v₀, λ₁)` with `v₀ > 0`, `|v₀| = 1`.
fn dominant(m: &DMatrix<f64>) -> Result<(f64, DVector<f64>, f64)> {
    let n = m.nrows();
    if n <= DENSE_EIGEN_LIMIT {
        let eig = SymmetricEigen::new(m.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut v = eig.eigenvectors.column(order[0]).into_owned();
        if v.sum() < 0.0 {
            v = -v;
        }
        let second = if n > 1 { eig.eigenvalues[order[1]] } else { 0.0 };
        return Ok((eig.eigenvalues[order[0]], v, second));
    }
    let (l0, v) = power_iteration(m, None)?;
    let (l1, _) = power_iteration(m, Some(&v))?;
    Ok((l0, v, l1))
}

/// Power iteration; with `deflate`, iterates orthogonally to that vector.
fn power_iteration(m: &DMatrix<f64>, deflate: Option<&DVector<f64>>) -> Result<(f64, DVector<f64>)> {
    let n = m.nrows();
    let mut v = match deflate {
        None => DVector::from_element(n, 1.0 / (n as f64).sqrt()),
        // alternating start has a component along the second mode
        Some(_) => DVector::from_fn(n, |i, _| ((i as f64) * 0.7 + 0.3).sin()),
    };
    let project = |v: &mut DVector<f64>| {
        if let Some(d) = deflate {
            let c = d.dot(v);
            v.axpy(-c, d, 1.0);
        }
    };
    project(&mut v);
    v.normalize_mut();
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let mut w = m * &v;
        project(&mut w);
        let new_lambda = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return Ok((0.0, v));
        }
        w /= norm;
        let change = (&w - &v).amax();
        v = w;
        if change < POWER_TOL && (new_lambda - lambda).abs() <= POWER_TOL * new_lambda.abs() {
            if v.sum() < 0.0 {
                v = -v;
            }
            return Ok((new_lambda, v));
        }
        lambda = new_lambda;
    }
    if deflate.is_some() {
        // subdominant estimate only feeds the reported gap
        return Ok((lambda, v));
    }
    Err(Error::Numerical("power iteration did not converge".into()))
}

#[derive(Clone, Debug, Serialize)]
pub struct GroundState {
    /// `E_ℓ = -log(ρ / ρ_free) / a`.
    pub energy: f64,
    pub rho: f64,
    pub rho_free: f64,
    /// `-log(λ₁/λ₀) / a` of the interacting matrix.
    pub gap: f64,
    /// `Ω_ℓ / Ω₀` on the grid: an element of `L²(dμ₀)`.
    pub omega: Vec<f64>,
    pub norm_l1: f64,
    pub norm_l2: f64,
    /// `⟨Ω_ℓ, Ω₀⟩`.
    pub overlap: f64,
    pub min_component: f64,
    #[serde(skip)]
    free_vector: Vec<f64>,
}

pub fn ground_state(tm: &TransferMatrix) -> Result<GroundState> {
    let (rho, v, second) = dominant(&tm.matrix)?;
    let (rho_free, v0) = if tm.polynomial.is_zero() {
        (rho, v.clone())
    } else {
        let (r, v0, _) = dominant(&tm.free()?.matrix)?;
        (r, v0)
    };
    if v.iter().any(|&x| x <= 0.0) || v0.iter().any(|&x| x <= 0.0) {
        return Err(Error::Numerical("dominant eigenvector is not strictly positive".into()));
    }
    let a = tm.spec.spacing;
    let omega: Vec<f64> = v.iter().zip(v0.iter()).map(|(x, y)| x / y).collect();
    let overlap = v.dot(&v0);
    Ok(GroundState {
        energy: -(rho / rho_free).ln() / a,
        rho,
        rho_free,
        gap: -(second / rho).ln() / a,
        min_component: omega.iter().copied().fold(f64::INFINITY, f64::min),
        norm_l2: v.norm(),
        norm_l1: overlap,
        overlap,
        omega,
        free_vector: v0.iter().copied().collect(),
    })
}

/// `‖e^{-tH_ℓ}‖₂,₂` for `t = steps·a`, from the spectrum of the explicit
/// matrix power, set against `e^{-tE_ℓ}`.
#[derive(Clone, Debug, Serialize)]
pub struct SemigroupNorm {
    pub steps: usize,
    pub norm: f64,
    pub predicted: f64,
    pub relative_defect: f64,
    /// `⟨Ω₀, e^{-tH_ℓ} Ω₀⟩`.
    pub vacuum_amplitude: f64,
    /// `⟨Ω₀, e^{-tH_ℓ} Ω₀⟩ ≤ e^{-tE_ℓ}`.
    pub envelope_ok: bool,
}

pub fn semigroup_norm(tm: &TransferMatrix, gs: &GroundState, steps: usize) -> Result<SemigroupNorm> {
    let m = &tm.matrix / gs.rho_free;
    let norm = if tm.dim() <= DENSE_EIGEN_LIMIT {
        let mut p = DMatrix::identity(tm.dim(), tm.dim());
        for _ in 0..steps {
            p = &p * &m;
        }
        let p = (&p + p.transpose()) * 0.5;
        SymmetricEigen::new(p).eigenvalues.amax()
    } else {
        // ‖Mⁿ‖ = ‖M‖ⁿ for symmetric M, estimated by iterating on M²
        let (l, _) = power_iteration(&(&m * &m), None)?;
        l.sqrt().powi(steps as i32)
    };
    let predicted = (-(steps as f64) * tm.spec.spacing * gs.energy).exp();
    let mut w = DVector::from_column_slice(&gs.free_vector);
    for _ in 0..steps {
        w = &m * w;
    }
    let vacuum_amplitude = DVector::from_column_slice(&gs.free_vector).dot(&w);
    Ok(SemigroupNorm {
        steps,
        norm,
        predicted,
        relative_defect: (norm - predicted).abs() / predicted,
        vacuum_amplitude,
        envelope_ok: vacuum_amplitude <= predicted * (1.0 + 1e-12),
    })
}

/// `Tr T^n` on the grid: the periodic-time partition function.
pub fn trace_power(tm: &TransferMatrix, n: usize) -> Result<f64> {
    if tm.dim() > DENSE_EIGEN_LIMIT {
        return Err(Error::Budget(format!("trace mode needs dimension <= {DENSE_EIGEN_LIMIT}")));
    }
    let eig = SymmetricEigen::new(tm.matrix.clone());
    Ok(eig.eigenvalues.iter().map(|l| l.powi(n as i32)).sum())
}

#[derive(Clone, Debug, Serialize)]
pub struct FknReport {
    pub n_s: usize,
    pub n_t: usize,
    pub transfer: f64,
    pub path_integral: f64,
    pub residual: f64,
}

/// `⟨u, T^{n_t} v⟩` two ways: as a matrix power, and as one sum of
/// `e^{-S(path)}` over every path `φ_0 … φ_{n_t}` on the grid, with
/// `S = ½V(φ_0) + Σ_{0<k<n_t} V(φ_k) + ½V(φ_{n_t}) + Σ_k ½|φ_k - φ_{k+1}|²`.
pub fn fkn_check(tm: &TransferMatrix, n_t: usize, u: &[f64], v: &[f64]) -> Result<FknReport> {
    let dim = tm.dim();
    if u.len() != dim || v.len() != dim {
        return Err(Error::GeometryMismatch { expected: dim, got: u.len().min(v.len()) });
    }
    let sites = tm.spec.n_s * (n_t + 1);
    if sites > PATH_ORACLE_MAX_SITES {
        return Err(Error::Budget(format!(
            "path oracle over {sites} sites exceeds {PATH_ORACLE_MAX_SITES}"
        )));
    }
    let sw = tm.sqrt_weights();
    let mut w = DVector::from_iterator(dim, v.iter().zip(&sw).map(|(x, s)| x * s));
    for _ in 0..n_t {
        w = &tm.matrix * w;
    }
    let transfer: f64 = u.iter().zip(&sw).zip(w.iter()).map(|((x, s), y)| x * s * y).sum();

    let lw = &tm.log_weights;
    let pot = &tm.potential;
    let pts = &tm.points;
    let path_integral: f64 = (0..dim)
        .into_par_iter()
        .map(|i0| {
            let mut total = 0.0;
            let mut idx = vec![0usize; n_t + 1];
            idx[0] = i0;
            let inner = dim.pow(n_t as u32);
            for code in 0..inner {
                let mut c = code;
                for k in 1..=n_t {
                    idx[k] = c % dim;
                    c /= dim;
                }
                let mut s = 0.0;
                let mut log_w = 0.0;
                for k in 0..=n_t {
                    log_w += lw[idx[k]];
                    if n_t > 0 {
                        let f = if k == 0 || k == n_t { 0.5 } else { 1.0 };
                        s += f * pot[idx[k]];
                    }
                    if k < n_t {
                        s += 0.5 * sq_dist(&pts[idx[k]], &pts[idx[k + 1]]);
                    }
                }
                total += u[idx[0]] * v[idx[n_t]] * (log_w - s).exp();
            }
            total
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .sum();
    Ok(FknReport {
        n_s: tm.spec.n_s,
        n_t,
        transfer,
        path_integral,
        residual: (transfer - path_integral).abs() / path_integral.abs(),
    })
}

/// Default FKN test functions: the free ground state on the grid (as a
/// function of `φ`) and a positive non-Gaussian bump.
pub fn fkn_default_vectors(tm: &TransferMatrix) -> (Vec<f64>, Vec<f64>) {
    let u: Vec<f64> = tm
        .points
        .iter()
        .map(|p| p.iter().zip(&tm.variances).map(|(x, c)| (-x * x / (4.0 * c)).exp()).product())
        .collect();
    let v: Vec<f64> = tm
        .points
        .iter()
        .map(|p| (1.0 + 0.3 * p[0] * p[0]) * (-0.25 * p.iter().map(|x| x * x).sum::<f64>()).exp())
        .collect();
    (u, v)
}

/// Amplitude of an `ell × t` rectangle with the field pinned to zero on
/// all four sides, computed slice by slice with time running along the
/// second direction.
#[derive(Clone, Debug, Serialize)]
pub struct RectangleAmplitude {
    pub ell: usize,
    pub t: usize,
    pub raw: f64,
    pub free: f64,
    /// `raw / free = E_μ e^{U}` over the rectangle.
    pub ratio: f64,
}

/// `(L + a²m²)⁻¹` of the Dirichlet rectangle, sites indexed `x·t + y`.
pub fn rectangle_covariance(ell: usize, t: usize, mass: f64, spacing: f64) -> Result<DMatrix<f64>> {
    let n = ell * t;
    let a2m2 = (spacing * mass).powi(2);
    let mut q = DMatrix::zeros(n, n);
    for x in 0..ell {
        for y in 0..t {
            let i = x * t + y;
            q[(i, i)] = 4.0 + a2m2;
            if x + 1 < ell {
                q[(i, i + t)] = -1.0;
                q[(i + t, i)] = -1.0;
            }
            if y + 1 < t {
                q[(i, i + 1)] = -1.0;
                q[(i + 1, i)] = -1.0;
            }
        }
    }
    q.try_inverse().ok_or_else(|| Error::Numerical("rectangle operator is singular".into()))
}

/// Per-site Wick constants and slice-by-slice evaluation of one orientation.
/// `variance(x, y)` is the site variance at spatial `x`, time `y`.
fn oriented_amplitude(
    n_s: usize,
    n_t: usize,
    mass: f64,
    spacing: f64,
    polynomial: &InteractionPolynomial,
    nodes: usize,
    variance: &dyn Fn(usize, usize) -> f64,
) -> Result<f64> {
    grid_dim(nodes, n_s)?;
    let op = slice_operator(n_s, (spacing * mass).powi(2), Boundary::Dirichlet);
    let a2 = spacing * spacing;
    let slices: Vec<(Vec<Vec<f64>>, Vec<f64>)> = (0..n_t)
        .map(|y| {
            let c: Vec<f64> = (0..n_s).map(|x| variance(x, y)).collect();
            let grid = SliceGrid::new(&c, nodes);
            let (pts, lw) = grid.points();
            let wick: Vec<Vec<f64>> = c.iter().map(|&cx| polynomial.wick_ordered(cx)).collect::<Result<_>>()?;
            let pot = slice_potential(&pts, &op, &wick, a2);
            // log of W e^{-V} per point
            let local: Vec<f64> = lw.iter().zip(&pot).map(|(l, v)| l - v).collect();
            Ok((pts, local))
        })
        .collect::<Result<_>>()?;
    // ghost time links at both ends contribute ½|φ|²
    let edge = |p: &[f64]| 0.5 * p.iter().map(|x| x * x).sum::<f64>();
    let (p0, l0) = &slices[0];
    let mut f: Vec<f64> = p0.iter().zip(l0).map(|(p, l)| l - edge(p)).collect();
    let mut log_scale = 0.0;
    for k in 1..n_t {
        let shift = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        log_scale += shift;
        let prev: Vec<f64> = f.iter().map(|x| (x - shift).exp()).collect();
        let (pp, _) = &slices[k - 1];
        let (pk, lk) = &slices[k];
        f = pk
            .par_iter()
            .zip(lk.par_iter())
            .map(|(q, l)| {
                let s: f64 = pp.iter().zip(&prev).map(|(p, w)| w * (-0.5 * sq_dist(p, q)).exp()).sum();
                l + s.ln()
            })
            .collect();
    }
    let (pl, _) = &slices[n_t - 1];
    let shift = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = f.iter().zip(pl).map(|(x, p)| (x - shift - edge(p)).exp()).sum();
    Ok((log_scale + shift + total.ln()).exp())
}

pub fn rectangle_amplitude(
    ell: usize,
    t: usize,
    mass: f64,
    spacing: f64,
    polynomial: &InteractionPolynomial,
    nodes: usize,
) -> Result<RectangleAmplitude> {
    rectangle_amplitude_oriented(ell, t, mass, spacing, polynomial, nodes, false)
}

/// `transposed`: time runs along the first direction instead.
fn rectangle_amplitude_oriented(
    ell: usize,
    t: usize,
    mass: f64,
    spacing: f64,
    polynomial: &InteractionPolynomial,
    nodes: usize,
    transposed: bool,
) -> Result<RectangleAmplitude> {
    if ell == 0 || t == 0 {
        return Err(Error::InvalidParameter("rectangle sides must be positive".into()));
    }
    if nodes < MIN_NODES {
        return Err(Error::InvalidParameter(format!("need at least {MIN_NODES} nodes")));
    }
    let g = rectangle_covariance(ell, t, mass, spacing)?;
    let var = |x: usize, y: usize| g[(x * t + y, x * t + y)];
    let run = |p: &InteractionPolynomial| {
        if transposed {
            oriented_amplitude(t, ell, mass, spacing, p, nodes, &|y, x| var(x, y))
        } else {
            oriented_amplitude(ell, t, mass, spacing, p, nodes, &var)
        }
    };
    let raw = run(polynomial)?;
    let free = run(&InteractionPolynomial::zero())?;
    Ok(RectangleAmplitude { ell, t, raw, free, ratio: raw / free })
}

#[derive(Clone, Debug, Serialize)]
pub struct NelsonReport {
    pub ell: usize,
    pub t: usize,
    /// Time along the second direction.
    pub z_lt: RectangleAmplitude,
    /// Time along the first direction.
    pub z_tl: RectangleAmplitude,
    /// Relative difference of the normalized amplitudes.
    pub residual: f64,
    /// Relative difference of the raw amplitudes.
    pub raw_residual: f64,
}

/// Same rectangle, time axis along either direction.
pub fn nelson_symmetry_check(
    ell: usize,
    t: usize,
    mass: f64,
    spacing_space: f64,
    spacing_time: f64,
    polynomial: &InteractionPolynomial,
    nodes: usize,
) -> Result<NelsonReport> {
    if spacing_space != spacing_time {
        return Err(Error::InvalidParameter(format!(
            "the rectangle swap needs a square discretization, got spacings {spacing_space} and {spacing_time}"
        )));
    }
    let z_lt = rectangle_amplitude_oriented(ell, t, mass, spacing_space, polynomial, nodes, false)?;
    let z_tl = if ell == t {
        z_lt.clone()
    } else {
        rectangle_amplitude_oriented(ell, t, mass, spacing_space, polynomial, nodes, true)?
    };
    Ok(NelsonReport {
        ell,
        t,
        residual: (z_lt.ratio - z_tl.ratio).abs() / z_lt.ratio.abs(),
        raw_residual: (z_lt.raw - z_tl.raw).abs() / z_lt.raw.abs(),
        z_lt,
        z_tl,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyDensityRow {
    pub ell: usize,
    pub nodes: usize,
    pub energy: f64,
    /// `E_ℓ / (ℓ a)`.
    pub alpha: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyDensityScan {
    pub rows: Vec<EnergyDensityRow>,
    /// `|α_{ℓ+1} - α_ℓ|` between consecutive rows.
    pub differences: Vec<f64>,
    pub differences_shrinking: bool,
}

pub fn energy_density_scan(
    ells: &[usize],
    mass: f64,
    spacing: f64,
    polynomial: &InteractionPolynomial,
    nodes: usize,
) -> Result<EnergyDensityScan> {
    let mut rows = Vec::with_capacity(ells.len());
    for &ell in ells {
        let tm = build_transfer(ell, mass, spacing, polynomial, nodes)?;
        let gs = ground_state(&tm)?;
        rows.push(EnergyDensityRow { ell, nodes, energy: gs.energy, alpha: gs.energy / (ell as f64 * spacing) });
    }
    let differences: Vec<f64> = rows.windows(2).map(|w| (w[1].alpha - w[0].alpha).abs()).collect();
    let differences_shrinking = differences.windows(2).all(|d| d[1] < d[0]);
    Ok(EnergyDensityScan { rows, differences, differences_shrinking })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quartic(l: f64) -> InteractionPolynomial {
        InteractionPolynomial::quartic(l).unwrap()
    }

    #[test]
    fn strip_variance_matches_long_lattice() {
        // equal-time variance of a strip = middle of a very long Dirichlet rectangle
        let c = strip_variances(2, 1.0, 1.0, Boundary::Dirichlet);
        let g = rectangle_covariance(2, 61, 1.0, 1.0).unwrap();
        assert!((c[0] - g[(30, 30)]).abs() < 1e-12, "{c:?} vs {}", g[(30, 30)]);
        let single = strip_variances(1, 1.0, 1.0, Boundary::Dirichlet)[0];
        // n_s = 1: b = 2 + m²
        let theta = (1.0f64 + 3.0 / 2.0).acosh();
        assert!((single - 1.0 / (2.0 * theta.sinh())).abs() < 1e-15);
    }

    #[test]
    fn free_single_site_spectrum_is_geometric() {
        let tm = build_transfer(1, 1.0, 1.0, &InteractionPolynomial::zero(), 40).unwrap();
        let b = 2.0 + 1.0;
        let alpha = 1.0 + b / 2.0;
        let gamma = (alpha * alpha - 1.0f64).sqrt();
        let rho0 = (2.0 * std::f64::consts::PI / (alpha + gamma)).sqrt();
        let r = 1.0 / (alpha + gamma);
        let mut ev: Vec<f64> = SymmetricEigen::new(tm.matrix.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        for k in 0..5 {
            let expect = rho0 * r.powi(k as i32);
            assert!((ev[k] - expect).abs() < 1e-10 * rho0, "k={k}: {} vs {expect}", ev[k]);
        }
    }

    #[test]
    fn matrix_structure() {
        let tm = build_transfer(2, 1.0, 1.0, &quartic(0.1), 10).unwrap();
        assert_eq!(tm.dim(), 100);
        assert!(tm.symmetry_defect() <= 1e-12);
        assert!(tm.min_entry() > 0.0);
        assert!(build_transfer(2, 1.0, 1.0, &quartic(0.1), 7).is_err());
        assert!(matches!(build_transfer(3, 1.0, 1.0, &quartic(0.1), 17), Err(Error::Budget(_))));
    }

    #[test]
    fn ground_state_claims() {
        for n_s in [1, 2] {
            let tm = build_transfer(n_s, 1.0, 1.0, &quartic(0.1), DEFAULT_NODES).unwrap();
            let gs = ground_state(&tm).unwrap();
            assert!(gs.energy < 0.0, "{}", gs.energy);
            assert!(gs.min_component > 0.0);
            assert!((gs.norm_l2 - 1.0).abs() < 1e-12);
            assert!(gs.norm_l1 < 1.0 && gs.overlap < 1.0);
            assert!(gs.gap > 0.0);
            let sn = semigroup_norm(&tm, &gs, 3).unwrap();
            assert!(sn.relative_defect < 1e-10, "{sn:?}");
            assert!(sn.envelope_ok);
        }
        let free = build_transfer(2, 1.0, 1.0, &InteractionPolynomial::zero(), DEFAULT_NODES).unwrap();
        let gs = ground_state(&free).unwrap();
        assert_eq!(gs.energy, 0.0);
        assert!(gs.omega.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn power_iteration_matches_dense() {
        let tm = build_transfer(1, 1.0, 1.0, &quartic(0.1), 64).unwrap();
        let (l_dense, v_dense, l1_dense) = dominant(&tm.matrix).unwrap();
        let (l_pow, v_pow) = power_iteration(&tm.matrix, None).unwrap();
        let (l1_pow, _) = power_iteration(&tm.matrix, Some(&v_pow)).unwrap();
        assert!((l_dense - l_pow).abs() < 1e-12 * l_dense);
        assert!((v_dense - v_pow).amax() < 1e-10);
        assert!((l1_dense - l1_pow).abs() < 1e-8 * l_dense);
    }

    #[test]
    fn fkn_small_cases() {
        for (n_s, n_t, lambda, tol) in [(1, 0, 0.0, 1e-14), (1, 3, 0.0, 1e-10), (2, 2, 0.1, 1e-8), (1, 4, 0.1, 1e-8)] {
            let p = if lambda == 0.0 { InteractionPolynomial::zero() } else { quartic(lambda) };
            let tm = build_transfer(n_s, 1.0, 1.0, &p, 8).unwrap();
            let (u, v) = fkn_default_vectors(&tm);
            let r = fkn_check(&tm, n_t, &u, &v).unwrap();
            assert!(r.residual <= tol, "{r:?}");
        }
        let tm = build_transfer(2, 1.0, 1.0, &quartic(0.1), 8).unwrap();
        let (u, v) = fkn_default_vectors(&tm);
        assert!(matches!(fkn_check(&tm, 3, &u, &v), Err(Error::Budget(_))));
    }

    #[test]
    fn nelson_rectangles() {
        for p in [InteractionPolynomial::zero(), quartic(0.1)] {
            let r = nelson_symmetry_check(2, 3, 1.0, 1.0, 1.0, &p, 12).unwrap();
            assert!(r.residual <= 1e-10, "{r:?}");
            assert!(r.raw_residual <= 1e-10, "{r:?}");
        }
        let same = nelson_symmetry_check(2, 2, 1.0, 1.0, 1.0, &quartic(0.1), 12).unwrap();
        assert_eq!(same.residual, 0.0);
        assert!(nelson_symmetry_check(2, 3, 1.0, 1.0, 0.5, &quartic(0.1), 12).is_err());
    }

    #[test]
    fn rectangle_ratio_is_a_free_expectation() {
        use crate::covariance::CovarianceOperator;
        use crate::interaction::{partition_function_quadrature, WickAction};
        use crate::lattice::LatticeGeometry;
        let amp = rectangle_amplitude(2, 3, 1.0, 1.0, &quartic(0.1), 24).unwrap();
        let g = LatticeGeometry::new(2, &[2, 3], 1.0, Boundary::Dirichlet).unwrap();
        let cov = CovarianceOperator::new(&g, 1.0).unwrap();
        let act = WickAction::full(&cov, &quartic(0.1)).unwrap();
        let q = partition_function_quadrature(&cov, &act).unwrap();
        assert!((amp.ratio - q.value).abs() < 1e-6 * q.value, "{} vs {}", amp.ratio, q.value);
    }

    #[test]
    fn energy_density_zero_polynomial() {
        let scan = energy_density_scan(&[1, 2], 1.0, 1.0, &InteractionPolynomial::zero(), 12).unwrap();
        assert!(scan.rows.iter().all(|r| r.alpha == 0.0));
    }
}
