//! Wick-ordered interaction `U_Λ = -a^d Σ_{x∈Λ} :P(φ_x):_{c_x}`, the
//! partition function `Z_Λ = E e^{U_Λ}`, and cutoff Schwinger functions.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceOperator;
use crate::error::{Error, Result};
use crate::gaussian::{sample_field_indexed, wick_power, Estimate, GaussianMomentProblem};
use crate::lattice::{FieldConfiguration, LatticeGeometry, Region};
use crate::mc::{self, CheckpointPlan, LocalAction, McConfig};
use crate::quadrature::GaussHermite;

pub const MAX_DEGREE: usize = 8;
pub const QUADRATURE_MAX_SITES: usize = 6;
const VARIANCE_DEDUP: f64 = 1e-12;
/// Tensor grid points allowed for one quadrature evaluation.
const TENSOR_BUDGET: usize = 20_000_000;
const TENSOR_MAX_NODES: usize = 48;

/// Real polynomial `P` with `P(0) = 0`, bounded below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct InteractionPolynomial {
    /// `coeffs[k]` multiplies `φ^k`; no trailing zeros.
    coeffs: Vec<f64>,
}

impl TryFrom<Vec<f64>> for InteractionPolynomial {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        InteractionPolynomial::new(v)
    }
}

impl From<InteractionPolynomial> for Vec<f64> {
    fn from(p: InteractionPolynomial) -> Self {
        p.coeffs
    }
}

impl InteractionPolynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("polynomial coefficients must be finite".into()));
        }
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            return Ok(InteractionPolynomial { coeffs });
        }
        if coeffs[0] != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "P(0) must vanish, got constant term {}",
                coeffs[0]
            )));
        }
        let deg = coeffs.len() - 1;
        if deg > MAX_DEGREE {
            return Err(Error::InvalidParameter(format!("degree {deg} exceeds {MAX_DEGREE}")));
        }
        if deg % 2 == 1 || coeffs[deg] <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "P is not bounded below: degree {deg}, leading coefficient {}",
                coeffs[deg]
            )));
        }
        Ok(InteractionPolynomial { coeffs })
    }

    pub fn zero() -> Self {
        InteractionPolynomial { coeffs: Vec::new() }
    }

    /// `λ φ⁴`.
    pub fn quartic(lambda: f64) -> Result<Self> {
        Self::new(vec![0.0, 0.0, 0.0, 0.0, lambda])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn is_even(&self) -> bool {
        self.coeffs.iter().skip(1).step_by(2).all(|&c| c == 0.0)
    }

    pub fn eval(&self, phi: f64) -> f64 {
        horner(&self.coeffs, phi)
    }

    /// Monomial coefficients of `:P(φ):_c`.
    pub fn wick_ordered(&self, c: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.coeffs.len()];
        for (k, &pk) in self.coeffs.iter().enumerate() {
            if pk == 0.0 {
                continue;
            }
            for (j, w) in wick_power(k, c)?.coeffs.iter().enumerate() {
                out[j] += pk * w;
            }
        }
        Ok(out)
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

#[derive(Clone, Debug)]
struct WickTable {
    variance: f64,
    coeffs: Vec<f64>,
}

/// `U_Λ` with per-site Wick constants `c_x`.
#[derive(Clone, Debug)]
pub struct WickAction {
    geometry: LatticeGeometry,
    polynomial: InteractionPolynomial,
    region: Region,
    variances: Vec<f64>,
    tables: Vec<WickTable>,
    table_of_site: Vec<Option<usize>>,
}

impl WickAction {
    /// Wick constants `c_x = C(x, x)` of the free field.
    pub fn new(cov: &CovarianceOperator, polynomial: &InteractionPolynomial, region: &Region) -> Result<Self> {
        cov.geometry().check_len(region.lattice_size())?;
        let diag = cov.diagonal();
        let variances = region.sites().iter().map(|&x| diag[x]).collect();
        Self::with_variances(cov.geometry(), polynomial, region, variances)
    }

    /// `Λ` = the whole lattice.
    pub fn full(cov: &CovarianceOperator, polynomial: &InteractionPolynomial) -> Result<Self> {
        Self::new(cov, polynomial, &cov.geometry().full_region())
    }

    /// Explicit Wick constants, one per site of `region` in region order.
    pub fn with_variances(
        geometry: &LatticeGeometry,
        polynomial: &InteractionPolynomial,
        region: &Region,
        variances: Vec<f64>,
    ) -> Result<Self> {
        geometry.check_len(region.lattice_size())?;
        if variances.len() != region.len() {
            return Err(Error::GeometryMismatch { expected: region.len(), got: variances.len() });
        }
        let mut tables: Vec<WickTable> = Vec::new();
        let mut table_of_site = vec![None; geometry.num_sites()];
        for (&x, &c) in region.sites().iter().zip(&variances) {
            if !(c > 0.0) {
                return Err(Error::InvalidParameter(format!("Wick variance {c} at site {x}")));
            }
            let found = tables
                .iter()
                .position(|t| (t.variance - c).abs() <= VARIANCE_DEDUP * c.max(1.0));
            let idx = match found {
                Some(i) => i,
                None => {
                    tables.push(WickTable { variance: c, coeffs: polynomial.wick_ordered(c)? });
                    tables.len() - 1
                }
            };
            table_of_site[x] = Some(idx);
        }
        Ok(WickAction {
            geometry: geometry.clone(),
            polynomial: polynomial.clone(),
            region: region.clone(),
            variances,
            tables,
            table_of_site,
        })
    }

    pub fn geometry(&self) -> &LatticeGeometry {
        &self.geometry
    }

    pub fn polynomial(&self) -> &InteractionPolynomial {
        &self.polynomial
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn distinct_tables(&self) -> usize {
        self.tables.len()
    }

    /// `:P(φ):_{c_x}`, or 0 off `Λ`.
    #[inline]
    pub fn wick_density(&self, site: usize, phi: f64) -> f64 {
        match self.table_of_site[site] {
            Some(t) => horner(&self.tables[t].coeffs, phi),
            None => 0.0,
        }
    }

    /// `U_Λ(φ)`.
    pub fn evaluate(&self, field: &FieldConfiguration) -> Result<f64> {
        self.geometry.check_field(field)?;
        Ok(self.evaluate_values(field.values()))
    }

    pub(crate) fn evaluate_values(&self, phi: &[f64]) -> f64 {
        if self.polynomial.is_zero() {
            return 0.0;
        }
        let s: f64 = self.region.sites().iter().map(|&x| self.wick_density(x, phi[x])).sum();
        -self.geometry.cell_volume() * s
    }

    /// `E_μ U_Λ` computed site by site with Gauss–Hermite quadrature.
    pub fn free_mean(&self) -> f64 {
        let gh = GaussHermite::new(16);
        let s: f64 = self
            .region
            .sites()
            .iter()
            .zip(&self.variances)
            .map(|(&x, &c)| gh.expect(c, |p| self.wick_density(x, p)))
            .sum();
        -self.geometry.cell_volume() * s
    }
}

fn check_same_geometry(cov: &CovarianceOperator, action: &WickAction) -> Result<()> {
    if cov.geometry() != action.geometry() {
        return Err(Error::InvalidParameter(
            "covariance and action were built on different lattices".into(),
        ));
    }
    Ok(())
}

/// Streaming log-sum-exp accumulator; merges are order-dependent only
/// through floating point, and callers merge in a fixed order.
#[derive(Clone, Copy, Debug)]
struct LogSum {
    shift: f64,
    sum: f64,
    sum_obs: f64,
}

impl LogSum {
    const EMPTY: LogSum = LogSum { shift: f64::NEG_INFINITY, sum: 0.0, sum_obs: 0.0 };

    fn add(&mut self, log_term: f64, obs: f64) {
        if log_term > self.shift {
            let r = (self.shift - log_term).exp();
            self.sum *= r;
            self.sum_obs *= r;
            self.shift = log_term;
        }
        let e = (log_term - self.shift).exp();
        self.sum += e;
        self.sum_obs += e * obs;
    }

    fn merge(self, o: LogSum) -> LogSum {
        if o.shift == f64::NEG_INFINITY {
            return self;
        }
        if self.shift == f64::NEG_INFINITY {
            return o;
        }
        let shift = self.shift.max(o.shift);
        let a = (self.shift - shift).exp();
        let b = (o.shift - shift).exp();
        LogSum { shift, sum: a * self.sum + b * o.sum, sum_obs: a * self.sum_obs + b * o.sum_obs }
    }
}

/// Tensor Gauss–Hermite integration of `e^{U} O` against the free marginal
/// of `φ` on `sites`, in the eigen-coordinates of `C_SS`. Returns
/// `(log E e^U, E[O e^U] / E e^U)`.
fn tensor_gaussian(
    cov: &CovarianceOperator,
    sites: &[usize],
    nodes: usize,
    integrand: &(dyn Fn(&[f64]) -> (f64, f64) + Sync),
) -> Result<(f64, f64)> {
    let k = sites.len();
    if k == 0 {
        let (u, o) = integrand(&[]);
        return Ok((u, o));
    }
    let css = DMatrix::from_fn(k, k, |i, j| cov.entry(sites[i], sites[j]));
    let eig = nalgebra::SymmetricEigen::new((&css + css.transpose()) * 0.5);
    if eig.eigenvalues.min() <= 0.0 {
        return Err(Error::Numerical("restricted covariance is not positive definite".into()));
    }
    let l = DMatrix::from_fn(k, k, |i, j| eig.eigenvectors[(i, j)] * eig.eigenvalues[j].sqrt());
    let (x, w) = GaussHermite::new(nodes).normal(1.0);
    let log_w: Vec<f64> = w.iter().map(|v| v.ln()).collect();
    let total = nodes
        .checked_pow(k as u32)
        .ok_or_else(|| Error::Budget("tensor grid overflows".into()))?;
    const CHUNK: usize = 1 << 14;
    let chunks = total.div_ceil(CHUNK);
    let partial: Vec<LogSum> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = LogSum::EMPTY;
            let mut digits = vec![0usize; k];
            let mut z = vec![0.0; k];
            let mut phi = vec![0.0; k];
            for idx in c * CHUNK..((c + 1) * CHUNK).min(total) {
                let mut rem = idx;
                let mut lw = 0.0;
                for j in 0..k {
                    digits[j] = rem % nodes;
                    rem /= nodes;
                    z[j] = x[digits[j]];
                    lw += log_w[digits[j]];
                }
                for i in 0..k {
                    phi[i] = (0..k).map(|j| l[(i, j)] * z[j]).sum();
                }
                let (u, o) = integrand(&phi);
                acc.add(lw + u, o);
            }
            acc
        })
        .collect();
    let acc = partial.into_iter().fold(LogSum::EMPTY, LogSum::merge);
    Ok((acc.shift + acc.sum.ln(), acc.sum_obs / acc.sum))
}

fn tensor_nodes(k: usize) -> usize {
    let mut n = TENSOR_MAX_NODES;
    while n > 8 && n.checked_pow(k as u32).is_none_or(|t| t > TENSOR_BUDGET) {
        n -= 1;
    }
    n
}

/// Quadrature value with the change from a coarser rule as error estimate.
#[derive(Clone, Debug, Serialize)]
pub struct QuadratureValue {
    pub value: f64,
    pub nodes: usize,
    pub refinement_delta: f64,
}

/// Integration variables: `Λ ∪ extra`, each site once.
fn quadrature_sites(action: &WickAction, extra: &[usize]) -> Result<Vec<usize>> {
    let mut sites: Vec<usize> = action.region().sites().to_vec();
    for &p in extra {
        if !sites.contains(&p) {
            sites.push(p);
        }
    }
    if sites.len() > QUADRATURE_MAX_SITES {
        return Err(Error::Budget(format!(
            "tensor quadrature over {} sites exceeds {QUADRATURE_MAX_SITES}",
            sites.len()
        )));
    }
    Ok(sites)
}

fn quadrature_pair(
    cov: &CovarianceOperator,
    action: &WickAction,
    points: &[usize],
) -> Result<[(f64, f64); 2]> {
    check_same_geometry(cov, action)?;
    let sites = quadrature_sites(action, points)?;
    let pos = |s: usize| sites.iter().position(|&t| t == s).expect("site in list");
    let lam: Vec<(usize, usize)> = action.region().sites().iter().map(|&x| (x, pos(x))).collect();
    let pts: Vec<usize> = points.iter().map(|&p| pos(p)).collect();
    let vol = action.geometry().cell_volume();
    let integrand = |phi: &[f64]| {
        let s: f64 = lam.iter().map(|&(x, i)| action.wick_density(x, phi[i])).sum();
        let o: f64 = pts.iter().map(|&i| phi[i]).product();
        (-vol * s, o)
    };
    let n = tensor_nodes(sites.len());
    let fine = tensor_gaussian(cov, &sites, n, &integrand)?;
    let coarse = tensor_gaussian(cov, &sites, (3 * n / 4).max(6), &integrand)?;
    Ok([fine, coarse])
}

/// `Z_Λ` by tensor Gauss–Hermite quadrature (`|Λ| ≤ 6`).
///
/// The rule integrates every polynomial of the relevant degree exactly, so
/// the discrete measure already has `E U_Λ = 0` and Jensen gives `Z ≥ 1`.
pub fn partition_function_quadrature(cov: &CovarianceOperator, action: &WickAction) -> Result<QuadratureValue> {
    if action.polynomial().is_zero() {
        check_same_geometry(cov, action)?;
        quadrature_sites(action, &[])?;
        return Ok(QuadratureValue { value: 1.0, nodes: 0, refinement_delta: 0.0 });
    }
    let [fine, coarse] = quadrature_pair(cov, action, &[])?;
    let z = fine.0.exp();
    Ok(QuadratureValue {
        value: z,
        nodes: tensor_nodes(action.region().len()),
        refinement_delta: (z - coarse.0.exp()).abs(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct McPartition {
    pub z: f64,
    pub std_error: f64,
    pub samples: usize,
    pub seed: u64,
    pub effective_samples: f64,
    /// Weights too uneven for a trustworthy variance estimate.
    pub high_variance: bool,
    /// `Z + 3σ ≥ 1`.
    pub jensen_ok: bool,
}

fn action_samples(cov: &CovarianceOperator, action: &WickAction, samples: usize, seed: u64) -> Vec<f64> {
    (0..samples as u64)
        .into_par_iter()
        .map(|i| action.evaluate_values(sample_field_indexed(cov, seed, i).values()))
        .collect()
}

fn effective_sample_size(w: &[f64]) -> f64 {
    let s: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|x| x * x).sum();
    s * s / s2
}

/// `Z_Λ ≈ mean of e^{U}` over free-field samples, in log space.
pub fn partition_function_mc(
    cov: &CovarianceOperator,
    action: &WickAction,
    samples: usize,
    seed: u64,
) -> Result<McPartition> {
    check_same_geometry(cov, action)?;
    if samples < 2 {
        return Err(Error::InvalidParameter("need at least two samples".into()));
    }
    let u = action_samples(cov, action, samples, seed);
    let shift = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = u.iter().map(|x| (x - shift).exp()).collect();
    let est = Estimate::from_sums(w.iter().sum(), w.iter().map(|x| x * x).sum(), samples);
    let scale = shift.exp();
    let z = scale * est.mean;
    let std_error = scale * est.std_error;
    let effective_samples = effective_sample_size(&w);
    Ok(McPartition {
        z,
        std_error,
        samples,
        seed,
        effective_samples,
        high_variance: !z.is_finite() || effective_samples < 0.01 * samples as f64 || std_error > 0.1 * z,
        jensen_ok: z + 3.0 * std_error >= 1.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Free samples weighted by `e^{U}`.
    Reweight,
    /// Metropolis chains targeting `e^{U} dμ`.
    Mcmc,
    /// Tensor quadrature, `|Λ ∪ points| ≤ 6`.
    Quadrature,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SamplingBudget {
    /// Free samples for reweighting; sweeps per chain for MCMC.
    pub samples: usize,
    pub seed: u64,
    pub chains: usize,
    pub therm_frac: f64,
    #[serde(default)]
    pub checkpoint: Option<CheckpointPlan>,
}

impl SamplingBudget {
    pub fn new(samples: usize, seed: u64) -> Self {
        SamplingBudget { samples, seed, chains: 4, therm_frac: 0.2, checkpoint: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SchwingerEstimate {
    pub points: Vec<usize>,
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    pub seed: u64,
    pub method: Method,
    pub polynomial: Vec<f64>,
    pub mass: f64,
    pub effective_samples: Option<f64>,
    /// MCMC error bars failed to plateau under binning.
    pub undersampled: bool,
}

/// Blocks used by the reweighting jackknife.
const JACKKNIFE_BLOCKS: usize = 100;
const MIN_EFFECTIVE_FRACTION: f64 = 0.01;

/// Ratio `Σ w O / Σ w` with a blocked jackknife error.
pub fn ratio_jackknife(w: &[f64], o: &[f64]) -> Estimate {
    let n = w.len();
    let blocks = JACKKNIFE_BLOCKS.min(n);
    let size = n / blocks;
    let mut bw = vec![0.0; blocks];
    let mut bo = vec![0.0; blocks];
    for b in 0..blocks {
        let end = if b + 1 == blocks { n } else { (b + 1) * size };
        for i in b * size..end {
            bw[b] += w[i];
            bo[b] += w[i] * o[i];
        }
    }
    let sw: f64 = bw.iter().sum();
    let so: f64 = bo.iter().sum();
    let mean = so / sw;
    let loo: Vec<f64> = (0..blocks).map(|b| (so - bo[b]) / (sw - bw[b])).collect();
    let lm = loo.iter().sum::<f64>() / blocks as f64;
    let var = (blocks as f64 - 1.0) / blocks as f64 * loo.iter().map(|r| (r - lm).powi(2)).sum::<f64>();
    Estimate { mean, std_error: var.sqrt() }
}

/// `S_Λ(x_1, …, x_n) = E[φ(x_1)…φ(x_n) e^{U}] / E e^{U}`.
pub fn schwinger_function(
    cov: &CovarianceOperator,
    action: &WickAction,
    points: &[usize],
    method: Method,
    budget: &SamplingBudget,
) -> Result<SchwingerEstimate> {
    check_same_geometry(cov, action)?;
    for &p in points {
        if p >= cov.num_sites() {
            return Err(Error::OutOfRange(format!("point {p} outside a lattice of {} sites", cov.num_sites())));
        }
    }
    let mut out = SchwingerEstimate {
        points: points.to_vec(),
        value: 0.0,
        std_error: 0.0,
        samples: budget.samples,
        seed: budget.seed,
        method,
        polynomial: action.polynomial().coeffs().to_vec(),
        mass: cov.mass(),
        effective_samples: None,
        undersampled: false,
    };
    let observable = |phi: &[f64]| points.iter().map(|&p| phi[p]).product::<f64>();
    match method {
        Method::Quadrature => {
            let [fine, coarse] = quadrature_pair(cov, action, points)?;
            out.value = fine.1;
            out.std_error = (fine.1 - coarse.1).abs();
            out.samples = 0;
        }
        Method::Reweight => {
            if budget.samples < 2 * JACKKNIFE_BLOCKS {
                return Err(Error::InvalidParameter(format!(
                    "reweighting needs at least {} samples",
                    2 * JACKKNIFE_BLOCKS
                )));
            }
            let pairs: Vec<(f64, f64)> = (0..budget.samples as u64)
                .into_par_iter()
                .map(|i| {
                    let phi = sample_field_indexed(cov, budget.seed, i);
                    (action.evaluate_values(phi.values()), observable(phi.values()))
                })
                .collect();
            let shift = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = pairs.iter().map(|p| (p.0 - shift).exp()).collect();
            let o: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let ess = effective_sample_size(&w);
            if ess < MIN_EFFECTIVE_FRACTION * budget.samples as f64 {
                return Err(Error::DegenerateWeights { ess, samples: budget.samples });
            }
            let est = ratio_jackknife(&w, &o);
            out.value = est.mean;
            out.std_error = est.std_error;
            out.effective_samples = Some(ess);
        }
        Method::Mcmc => {
            let local = LocalAction::new(cov, action)?;
            let config = McConfig {
                chains: budget.chains,
                sweeps: budget.samples,
                therm_frac: budget.therm_frac,
                seed: budget.seed,
                ..McConfig::default()
            };
            let run = mc::run_chains_with(&local, &config, 1, |phi, o| o[0] = observable(phi), budget.checkpoint.as_ref())?;
            let r = &run.observables[0];
            out.value = r.mean;
            out.std_error = r.std_error;
            out.undersampled = r.analysis.undersampled;
        }
    }
    Ok(out)
}

/// Free-field `n`-point prediction: the hafnian of `C` on the points.
pub fn free_moment(cov: &CovarianceOperator, points: &[usize]) -> Result<f64> {
    GaussianMomentProblem::from_sites(cov, points)?.moment()
}
