//! One-particle Euclidean structure: N-orthogonal projections onto regions,
//! the pre-Markov identity `e_A e_B = e_σ`, time-slice injections `j_t`, and
//! the dilation semigroup `p(t) = j_0^* u(t) j_0`.
//!
//! The time axis is always the last lattice axis; a time slice is the set of
//! sites with a fixed last coordinate, ordered by spatial index.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::covariance::{n_inner_product, CovarianceOperator, DENSE_LIMIT};
use crate::error::{Error, Result};
use crate::lattice::{Boundary, FieldConfiguration, IsometryElement, Region};
use crate::rng::{self, domain};

const MAX_CONDITION: f64 = 1e12;
const CG_TOLERANCE: f64 = 1e-12;

enum Solver {
    Dense(Cholesky<f64, Dyn>),
    ConjugateGradient,
}

/// `e_A`: the ⟨·,·⟩_N-orthogonal projection onto vectors supported in `A`.
pub struct NProjection<'a> {
    cov: &'a CovarianceOperator,
    region: Region,
    solver: Solver,
}

/// Restriction of `C` to `rows × cols`.
fn sub_block(cov: &CovarianceOperator, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows.len(), cols.len());
    for (j, &y) in cols.iter().enumerate() {
        let col = cov.column(y);
        for (i, &x) in rows.iter().enumerate() {
            m[(i, j)] = col[x];
        }
    }
    m
}

fn cholesky_checked(block: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(block)
        .ok_or_else(|| Error::Numerical(format!("{what} restricted covariance is not positive definite")))?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    let cond = (hi / lo).powi(2);
    if !(cond < MAX_CONDITION) {
        return Err(Error::Numerical(format!("{what} restricted system condition ~{cond:e}")));
    }
    Ok(chol)
}

impl<'a> NProjection<'a> {
    pub fn new(cov: &'a CovarianceOperator, region: &Region) -> Result<Self> {
        if region.is_empty() {
            return Err(Error::InvalidParameter("projection onto an empty region".into()));
        }
        cov.geometry().check_len(region.lattice_size())?;
        let solver = if cov.num_sites() <= DENSE_LIMIT {
            let block = sub_block(cov, region.sites(), region.sites());
            Solver::Dense(cholesky_checked(block, "region")?)
        } else {
            Solver::ConjugateGradient
        };
        Ok(NProjection { cov, region: region.clone(), solver })
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    /// `e_A f`: the `g` supported in `A` with `(C g)|_A = (C f)|_A`.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.cov.geometry().check_len(f.len())?;
        let cf = self.cov.apply(f);
        let rhs: Vec<f64> = self.region.sites().iter().map(|&x| cf[x]).collect();
        let g_a = match &self.solver {
            Solver::Dense(chol) => chol.solve(&DVector::from_vec(rhs)).iter().copied().collect(),
            Solver::ConjugateGradient => self.cg_solve(&rhs)?,
        };
        let mut out = vec![0.0; f.len()];
        for (&x, v) in self.region.sites().iter().zip(g_a) {
            out[x] = v;
        }
        Ok(out)
    }

    fn cg_solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let sites = self.region.sites();
        let n = self.cov.num_sites();
        let apply_block = |v: &[f64]| -> Vec<f64> {
            let mut full = vec![0.0; n];
            for (&x, &vx) in sites.iter().zip(v) {
                full[x] = vx;
            }
            let cf = self.cov.apply(&full);
            sites.iter().map(|&x| cf[x]).collect()
        };
        conjugate_gradient(apply_block, rhs, CG_TOLERANCE, 10 * rhs.len() + 100)
    }
}

/// Solves `K x = b` for symmetric positive definite `K` given as a closure.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; b.len()];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        if rr.sqrt() <= rel_tol * bnorm {
            return Ok(x);
        }
        let kp = apply(&p);
        let alpha = rr / dot(&p, &kp);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * kp[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(Error::Numerical(format!(
        "conjugate gradient stalled at relative residual {:e}",
        rr.sqrt() / bnorm
    )))
}

fn probes(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::keyed(seed, &[domain::PROBE]);
    (0..count)
        .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

fn n_norm(cov: &CovarianceOperator, f: &[f64]) -> Result<f64> {
    Ok(n_inner_product(cov, f, f)?.max(0.0).sqrt())
}

const PROBES: usize = 12;

/// `‖e_A e_B − e_σ‖` and `‖e_B e_A − e_σ‖`, estimated in the N-norm by random probes.
#[derive(Clone, Debug, Serialize)]
pub struct MarkovResidual {
    pub axis: usize,
    pub plane: usize,
    pub ab: f64,
    pub ba: f64,
}

impl MarkovResidual {
    pub fn max(&self) -> f64 {
        self.ab.max(self.ba)
    }
}

pub fn markov_check(cov: &CovarianceOperator, axis: usize, plane: usize) -> Result<MarkovResidual> {
    let (a, b, sigma) = cov.geometry().split_by_hyperplane(axis, plane)?;
    let ea = NProjection::new(cov, &a)?;
    let eb = NProjection::new(cov, &b)?;
    let es = NProjection::new(cov, &sigma)?;
    let mut ab = 0.0f64;
    let mut ba = 0.0f64;
    for f in probes(cov.num_sites(), PROBES, 0x5eed ^ (axis as u64) << 32 ^ plane as u64) {
        let norm = n_norm(cov, &f)?;
        let s = es.apply(&f)?;
        let diff = |v: Vec<f64>| -> Vec<f64> { v.iter().zip(&s).map(|(x, y)| x - y).collect() };
        ab = ab.max(n_norm(cov, &diff(ea.apply(&eb.apply(&f)?)?))? / norm);
        ba = ba.max(n_norm(cov, &diff(eb.apply(&ea.apply(&f)?)?))? / norm);
    }
    Ok(MarkovResidual { axis, plane, ab, ba })
}

/// `max |Σ_{A'B'} − Σ_{A'σ} Σ_{σσ}^{-1} Σ_{σB'}|` with `A' = A∖σ`, `B' = B∖σ`:
/// vanishes exactly when the two sides are conditionally independent given σ.
pub fn conditional_covariance_check(cov: &CovarianceOperator, axis: usize, plane: usize) -> Result<f64> {
    let (a, b, sigma) = cov.geometry().split_by_hyperplane(axis, plane)?;
    let a_out = a.difference(&sigma);
    let b_out = b.difference(&sigma);
    if a_out.is_empty() || b_out.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "plane {plane} on axis {axis} is not interior"
        )));
    }
    let s_ab = sub_block(cov, a_out.sites(), b_out.sites());
    let s_as = sub_block(cov, a_out.sites(), sigma.sites());
    let s_sb = sub_block(cov, sigma.sites(), b_out.sites());
    let chol = cholesky_checked(sub_block(cov, sigma.sites(), sigma.sites()), "separating plane")?;
    let resid = s_ab - s_as * chol.solve(&s_sb);
    Ok(resid.amax())
}

/// `j_t: F → N`, `f ↦ f ⊗ δ_t` with `δ_t` represented as `1/a` on slice `t`.
///
/// `F` carries the norm induced through `j_t`, so `j_t` is an isometry by
/// construction and `j_t^* v = a (C_tt)^{-1} (C v)|_t`.
pub struct SliceInjection<'a> {
    cov: &'a CovarianceOperator,
    t: usize,
    slice: Region,
    chol: Cholesky<f64, Dyn>,
}

impl<'a> SliceInjection<'a> {
    pub fn new(cov: &'a CovarianceOperator, t: usize) -> Result<Self> {
        let g = cov.geometry();
        let time_axis = g.dim() - 1;
        if t >= g.extent(time_axis) {
            return Err(Error::OutOfRange(format!(
                "slice {t} on a time axis of extent {}",
                g.extent(time_axis)
            )));
        }
        let slice = g.slice(time_axis, t)?;
        let chol = cholesky_checked(sub_block(cov, slice.sites(), slice.sites()), "slice")?;
        Ok(SliceInjection { cov, t, slice, chol })
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn slice(&self) -> &Region {
        &self.slice
    }

    pub fn slice_len(&self) -> usize {
        self.slice.len()
    }

    pub fn inject(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.slice.len() {
            return Err(Error::GeometryMismatch { expected: self.slice.len(), got: f.len() });
        }
        let a = self.cov.geometry().spacing();
        let mut out = vec![0.0; self.cov.num_sites()];
        for (&x, &v) in self.slice.sites().iter().zip(f) {
            out[x] = v / a;
        }
        Ok(out)
    }

    pub fn adjoint(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.cov.geometry().check_len(v.len())?;
        let a = self.cov.geometry().spacing();
        let cv = self.cov.apply(v);
        let rhs = DVector::from_iterator(self.slice.len(), self.slice.sites().iter().map(|&x| cv[x]));
        Ok(self.chol.solve(&rhs).iter().map(|h| a * h).collect())
    }

    /// `⟨f, g⟩_F = ⟨j_t f, j_t g⟩_N`.
    pub fn f_inner(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        n_inner_product(self.cov, &self.inject(f)?, &self.inject(g)?)
    }
}

/// `p(t) = j_0^* u(t) j_0` as a dense matrix on the spatial slice.
pub fn dilation_semigroup(cov: &CovarianceOperator, t: usize) -> Result<DMatrix<f64>> {
    let g = cov.geometry();
    let time_axis = g.dim() - 1;
    let extent = g.extent(time_axis);
    if g.boundary() != Boundary::Periodic {
        return Err(Error::InvalidParameter(
            "time translations need a periodic time axis".into(),
        ));
    }
    if 2 * t > extent {
        return Err(Error::OutOfRange(format!(
            "t = {t} exceeds half the periodic extent {extent}; wrap-around contaminates p(t)"
        )));
    }
    let j0 = SliceInjection::new(cov, 0)?;
    let n = j0.slice_len();
    let shift = IsometryElement::Translation { axis: time_axis, offset: t as i64 };
    let mut p = DMatrix::zeros(n, n);
    for y in 0..n {
        let mut e = vec![0.0; n];
        e[y] = 1.0;
        let moved = g.apply_isometry(&shift, &FieldConfiguration::new(j0.inject(&e)?))?;
        let col = j0.adjoint(moved.values())?;
        for x in 0..n {
            p[(x, y)] = col[x];
        }
    }
    Ok(p)
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeEnergy {
    pub momentum: f64,
    pub omega: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OneParticleSpectrum {
    /// `ω_lat` per spatial eigenmode, ordered by momentum.
    pub modes: Vec<ModeEnergy>,
    /// Eigenvalues of `p(1)`, descending.
    pub p1_eigenvalues: Vec<f64>,
    /// `ω_lat` of the lowest mode.
    pub m_eff: f64,
}

/// Lattice one-particle energies `ω_lat = -log(spectrum p(1)) / a`.
pub fn one_particle_hamiltonian(cov: &CovarianceOperator) -> Result<OneParticleSpectrum> {
    let g = cov.geometry();
    let a = g.spacing();
    let p1 = dilation_semigroup(cov, 1)?;
    let sym = (&p1 + p1.transpose()) * 0.5;
    let mut eig: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    if let Some(bad) = eig.iter().find(|&&l| l <= 0.0) {
        return Err(Error::Numerical(format!("p(1) has non-positive eigenvalue {bad}")));
    }
    // spatial product modes
    let spatial_axes = g.dim() - 1;
    let ext: Vec<usize> = g.extents()[..spatial_axes].to_vec();
    let n: usize = ext.iter().product();
    let axes: Vec<_> = (0..spatial_axes)
        .map(|i| cov.axis_modes(i).expect("nearest-neighbor covariance has axis modes"))
        .collect();
    let split = |mut idx: usize| -> Vec<usize> {
        let mut out = vec![0; ext.len()];
        for i in (0..ext.len()).rev() {
            out[i] = idx % ext[i];
            idx /= ext[i];
        }
        out
    };
    let mut modes = Vec::with_capacity(n);
    for k in 0..n {
        let ks = split(k);
        let v = DVector::from_fn(n, |x, _| {
            let xs = split(x);
            (0..ext.len()).map(|i| axes[i].basis[(xs[i], ks[i])]).product()
        });
        let rayleigh = v.dot(&(&p1 * &v));
        if rayleigh <= 0.0 {
            return Err(Error::Numerical(format!("p(1) mode {k} has weight {rayleigh}")));
        }
        let momentum = (0..ext.len()).map(|i| axes[i].momenta[ks[i]].powi(2)).sum::<f64>().sqrt();
        modes.push(ModeEnergy { momentum, omega: -rayleigh.ln() / a });
    }
    modes.sort_by(|x, y| x.momentum.total_cmp(&y.momentum).then(x.omega.total_cmp(&y.omega)));
    let m_eff = modes.iter().map(|m| m.omega).fold(f64::INFINITY, f64::min);
    Ok(OneParticleSpectrum { modes, p1_eigenvalues: eig, m_eff })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::Stencil;
    use crate::lattice::LatticeGeometry;

    fn cov(dim: usize, ext: &[usize], b: Boundary, mass: f64) -> CovarianceOperator {
        let g = LatticeGeometry::new(dim, ext, 1.0, b).unwrap();
        CovarianceOperator::new(&g, mass).unwrap()
    }

    /// Dense projection matrix `P_A (C_AA)^{-1} C_{A,:}` built from an
    /// explicitly inverted stencil matrix.
    fn dense_projection(c: &DMatrix<f64>, region: &[usize]) -> DMatrix<f64> {
        let n = c.nrows();
        let caa = DMatrix::from_fn(region.len(), region.len(), |i, j| c[(region[i], region[j])]);
        let ca = DMatrix::from_fn(region.len(), n, |i, j| c[(region[i], j)]);
        let sol = caa.try_inverse().unwrap() * ca;
        let mut p = DMatrix::zeros(n, n);
        for (i, &x) in region.iter().enumerate() {
            for j in 0..n {
                p[(x, j)] = sol[(i, j)];
            }
        }
        p
    }

    fn stencil_inverse(g: &LatticeGeometry, mass: f64) -> DMatrix<f64> {
        // (-Δ + m²) assembled by hand, a = 1
        let n = g.num_sites();
        let mut q = DMatrix::zeros(n, n);
        for x in 0..n {
            q[(x, x)] = mass * mass + 2.0 * g.dim() as f64;
            for y in g.neighbors(x).flatten() {
                q[(x, y)] -= 1.0;
            }
        }
        q.try_inverse().unwrap()
    }

    #[test]
    fn projection_properties() {
        let c = cov(2, &[5, 4], Boundary::Dirichlet, 1.0);
        let g = c.geometry().clone();
        let region = g.region_where(|s| g.coord(s, 0) < 3 && g.coord(s, 1) != 2);
        let p = NProjection::new(&c, &region).unwrap();
        let f: Vec<f64> = (0..20).map(|i| ((i * 7) as f64).cos()).collect();
        let h: Vec<f64> = (0..20).map(|i| ((i * 3) as f64).sin()).collect();
        let pf = p.apply(&f).unwrap();
        let ppf = p.apply(&pf).unwrap();
        assert!(pf.iter().zip(&ppf).all(|(a, b)| (a - b).abs() < 1e-10));
        for s in 0..20 {
            if !region.contains(s) {
                assert_eq!(pf[s], 0.0);
            }
        }
        let l = n_inner_product(&c, &pf, &h).unwrap();
        let r = n_inner_product(&c, &f, &p.apply(&h).unwrap()).unwrap();
        assert!((l - r).abs() < 1e-10);
        // full region is the identity
        let id = NProjection::new(&c, &g.full_region()).unwrap();
        assert!(id.apply(&f).unwrap().iter().zip(&f).all(|(a, b)| (a - b).abs() < 1e-10));
        assert!(NProjection::new(&c, &Region::new(&g, vec![]).unwrap()).is_err());
    }

    #[test]
    fn nested_projections_commute() {
        let c = cov(2, &[6, 6], Boundary::Periodic, 0.8);
        let g = c.geometry().clone();
        let small = g.region_where(|s| g.coord(s, 0) < 2);
        let big = g.region_where(|s| g.coord(s, 0) < 4);
        let ea = NProjection::new(&c, &small).unwrap();
        let eb = NProjection::new(&c, &big).unwrap();
        for f in probes(36, 5, 3) {
            let a = ea.apply(&f).unwrap();
            let ab = ea.apply(&eb.apply(&f).unwrap()).unwrap();
            let ba = eb.apply(&a).unwrap();
            for i in 0..36 {
                assert!((ab[i] - a[i]).abs() < 1e-10 && (ba[i] - a[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn markov_1d_against_dense_oracle() {
        let c = cov(1, &[9], Boundary::Dirichlet, 1.0);
        let r = markov_check(&c, 0, 4).unwrap();
        assert!(r.max() <= 1e-10, "{r:?}");
        let g = c.geometry();
        let inv = stencil_inverse(g, 1.0);
        let (a, b, s) = g.split_by_hyperplane(0, 4).unwrap();
        let pa = dense_projection(&inv, a.sites());
        let pb = dense_projection(&inv, b.sites());
        let ps = dense_projection(&inv, s.sites());
        assert!((&pa * &pb - &ps).amax() < 1e-10);
    }

    #[test]
    fn markov_2d_against_dense_oracle() {
        let c = cov(2, &[8, 8], Boundary::Dirichlet, 1.0);
        let r = markov_check(&c, 1, 3).unwrap();
        assert!(r.max() <= 1e-8, "{r:?}");
        let inv = stencil_inverse(c.geometry(), 1.0);
        let (a, b, s) = c.geometry().split_by_hyperplane(1, 3).unwrap();
        let lhs = dense_projection(&inv, a.sites()) * dense_projection(&inv, b.sites());
        assert!((lhs - dense_projection(&inv, s.sites())).amax() < 1e-8);
    }

    #[test]
    fn non_local_stencil_breaks_markov() {
        let g = LatticeGeometry::new(1, &[9], 1.0, Boundary::Dirichlet).unwrap();
        let c = CovarianceOperator::with_stencil(&g, 1.0, Stencil::NextNearestNeighbor { weight: 0.5 })
            .unwrap();
        assert!(markov_check(&c, 0, 4).unwrap().max() > 1e-3);
        assert!(conditional_covariance_check(&c, 0, 4).unwrap() > 1e-3);
    }

    #[test]
    fn conditional_independence() {
        let chain = cov(1, &[12], Boundary::Dirichlet, 1.0);
        for plane in 1..11 {
            assert!(conditional_covariance_check(&chain, 0, plane).unwrap() <= 1e-12);
        }
        let sq = cov(2, &[6, 6], Boundary::Dirichlet, 1.0);
        for axis in 0..2 {
            for plane in 1..5 {
                assert!(conditional_covariance_check(&sq, axis, plane).unwrap() <= 1e-10);
            }
        }
        // one line does not separate a torus
        let torus = cov(2, &[6, 6], Boundary::Periodic, 1.0);
        assert!(conditional_covariance_check(&torus, 0, 2).unwrap() > 1e-4);
        assert!(conditional_covariance_check(&chain, 0, 0).is_err());
    }

    #[test]
    fn iterative_solver_matches_dense() {
        let c = cov(2, &[8, 8], Boundary::Dirichlet, 1.0);
        let (a, _, _) = c.geometry().split_by_hyperplane(0, 3).unwrap();
        let p = NProjection::new(&c, &a).unwrap();
        let iterative = NProjection { cov: &c, region: a.clone(), solver: Solver::ConjugateGradient };
        let f = &probes(64, 1, 9)[0];
        let x = p.apply(f).unwrap();
        let y = iterative.apply(f).unwrap();
        assert!(x.iter().zip(&y).all(|(u, v)| (u - v).abs() < 1e-10));
    }

    #[test]
    fn injection_identities() {
        let c = cov(2, &[6, 16], Boundary::Periodic, 1.0);
        let j = SliceInjection::new(&c, 3).unwrap();
        let f: Vec<f64> = (0..6).map(|i| 1.0 + i as f64 * 0.3).collect();
        let jf = j.inject(&f).unwrap();
        let back = j.adjoint(&jf).unwrap();
        assert!(back.iter().zip(&f).all(|(a, b)| (a - b).abs() < 1e-10));
        // e_t j_t = j_t
        let et = NProjection::new(&c, j.slice()).unwrap();
        let ejf = et.apply(&jf).unwrap();
        assert!(ejf.iter().zip(&jf).all(|(a, b)| (a - b).abs() < 1e-10));
        // j_t j_t^* = e_t
        let v = &probes(96, 1, 4)[0];
        let jjv = j.inject(&j.adjoint(v).unwrap()).unwrap();
        let ev = et.apply(v).unwrap();
        assert!(jjv.iter().zip(&ev).all(|(a, b)| (a - b).abs() < 1e-10));
        assert!(SliceInjection::new(&c, 16).is_err());
        assert!(j.inject(&[1.0; 5]).is_err());
    }

    #[test]
    fn reflexivity() {
        let c = cov(2, &[4, 10], Boundary::Periodic, 1.0);
        let j0 = SliceInjection::new(&c, 0).unwrap();
        let v = j0.inject(&[0.3, -1.0, 2.0, 0.5]).unwrap();
        let r0 = IsometryElement::Reflection { axis: 1, plane: 0 };
        let rv = c.geometry().apply_isometry(&r0, &FieldConfiguration::new(v.clone())).unwrap();
        assert_eq!(rv.values(), v.as_slice());
    }

    #[test]
    fn semigroup_and_symmetry() {
        let c = cov(2, &[8, 64], Boundary::Periodic, 1.0);
        let p: Vec<DMatrix<f64>> = (0..=6).map(|t| dilation_semigroup(&c, t).unwrap()).collect();
        assert!((&p[0] - DMatrix::identity(8, 8)).amax() < 1e-12);
        for s in 1..=3 {
            for t in 1..=3 {
                assert!((&p[s] * &p[t] - &p[s + t]).amax() <= 1e-8);
            }
            assert!((&p[s] - p[s].transpose()).amax() <= 1e-12);
        }
        assert!(dilation_semigroup(&c, 33).is_err());
    }

    #[test]
    fn one_particle_dispersion() {
        // spatial zero mode at a = 0.1: ω → m
        let g = LatticeGeometry::new(2, &[8, 512], 0.1, Boundary::Periodic).unwrap();
        let c = CovarianceOperator::new(&g, 1.0).unwrap();
        let spec = one_particle_hamiltonian(&c).unwrap();
        assert!((spec.modes[0].omega - 1.0).abs() < 0.02);
        assert!(spec.modes.iter().all(|m| m.omega > 0.0));
        assert!(spec.modes.windows(2).all(|w| w[1].omega >= w[0].omega - 1e-9));
        // lattice dispersion oracle: cosh(a ω) = 1 + a²(k̂² + m²)/2
        for m in &spec.modes {
            let khat2 = 4.0 / 0.01 * (0.1 * m.momentum / 2.0).sin().powi(2);
            let expect = (1.0 + 0.01 * (khat2 + 1.0) / 2.0).acosh() / 0.1;
            assert!((m.omega - expect).abs() < 1e-6, "{m:?} vs {expect}");
        }
        let rho = spec.p1_eigenvalues[0];
        assert!(rho <= (-0.1 * spec.m_eff).exp() + 1e-12);
    }
}
