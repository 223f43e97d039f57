//! Gaussian moments, field sampling, Wick products and second quantization.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::covariance::{n_inner_product, CovarianceOperator};
use crate::error::{Error, Result};
use crate::lattice::FieldConfiguration;
use crate::quadrature::GaussHermite;
use crate::rng::{self, domain};

pub const HAFNIAN_MAX: usize = 24;
pub const HAFNIAN_BRUTEFORCE_MAX: usize = 12;
pub const WICK_MAX_DEGREE: usize = 12;
pub const PAIRING_MAX_DEGREE: usize = 8;
pub const FOCK_MAX_MODES: usize = 4;
pub const FOCK_MAX_DEGREE: usize = 8;

const SYMMETRY_TOL: f64 = 1e-12;

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidParameter(format!(
            "Gram matrix is {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > SYMMETRY_TOL * scale {
        return Err(Error::InvalidParameter("Gram matrix is not symmetric".into()));
    }
    Ok(())
}

/// Pair covariances `[u_i u_j]` of a family of test functions.
#[derive(Clone, Debug)]
pub struct GaussianMomentProblem {
    gram: DMatrix<f64>,
}

impl GaussianMomentProblem {
    /// Raw-matrix mode: symmetry is checked, positivity is not.
    pub fn from_gram(gram: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&gram)?;
        Ok(GaussianMomentProblem { gram })
    }

    /// Gram matrix of `⟨u_i, u_j⟩_N`.
    pub fn from_vectors(cov: &CovarianceOperator, us: &[Vec<f64>]) -> Result<Self> {
        let n = us.len();
        let mut gram = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = n_inner_product(cov, &us[i], &us[j])?;
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        let min_eig = gram.symmetric_eigenvalues().min();
        if min_eig < -1e-10 * gram.amax().max(1.0) {
            return Err(Error::Numerical(format!("Gram matrix has eigenvalue {min_eig}")));
        }
        Ok(GaussianMomentProblem { gram })
    }

    /// Point evaluations `φ(x_1) … φ(x_n)`: the Gram matrix is `C(x_i, x_j)`.
    pub fn from_sites(cov: &CovarianceOperator, sites: &[usize]) -> Result<Self> {
        for &s in sites {
            if s >= cov.num_sites() {
                return Err(Error::OutOfRange(format!("site {s}")));
            }
        }
        let cols: Vec<Vec<f64>> = sites.iter().map(|&s| cov.column(s)).collect();
        let gram = DMatrix::from_fn(sites.len(), sites.len(), |i, j| cols[j][sites[i]]);
        Ok(GaussianMomentProblem { gram: (&gram + gram.transpose()) * 0.5 })
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `E(φ(u_1) … φ(u_n))`.
    pub fn moment(&self) -> Result<f64> {
        hafnian(&self.gram)
    }
}

/// `[u_1 … u_n] = Σ_{i≥2} [u_1 u_i] [u_2 … û_i … u_n]`, zero for odd `n`.
pub fn hafnian(gram: &DMatrix<f64>) -> Result<f64> {
    check_symmetric(gram)?;
    let n = gram.nrows();
    if n > HAFNIAN_MAX {
        return Err(Error::Budget(format!("hafnian of order {n} exceeds {HAFNIAN_MAX}")));
    }
    if n % 2 == 1 {
        return Ok(0.0);
    }
    let mut memo = HashMap::new();
    Ok(hafnian_rec(gram, (1u32 << n) - 1, &mut memo))
}

fn hafnian_rec(g: &DMatrix<f64>, mask: u32, memo: &mut HashMap<u32, f64>) -> f64 {
    if mask == 0 {
        return 1.0;
    }
    if let Some(&v) = memo.get(&mask) {
        return v;
    }
    let first = mask.trailing_zeros() as usize;
    let rest = mask & !(1 << first);
    let mut total = 0.0;
    let mut m = rest;
    while m != 0 {
        let j = m.trailing_zeros() as usize;
        m &= m - 1;
        let gij = g[(first, j)];
        if gij != 0.0 {
            total += gij * hafnian_rec(g, rest & !(1 << j), memo);
        }
    }
    memo.insert(mask, total);
    total
}

/// Explicit sum over all `(n-1)!!` perfect matchings.
pub fn hafnian_bruteforce(gram: &DMatrix<f64>) -> Result<f64> {
    check_symmetric(gram)?;
    let n = gram.nrows();
    if n > HAFNIAN_BRUTEFORCE_MAX {
        return Err(Error::Budget(format!(
            "brute-force hafnian of order {n} exceeds {HAFNIAN_BRUTEFORCE_MAX}"
        )));
    }
    if n % 2 == 1 {
        return Ok(0.0);
    }
    // matching k is the mixed-radix number whose digit at step s picks the
    // partner of the lowest unmatched index among the n-1-2s remaining
    let radices: Vec<usize> = (0..n / 2).map(|s| n - 1 - 2 * s).collect();
    let count: usize = radices.iter().product();
    let mut total = 0.0;
    let mut remaining = Vec::with_capacity(n);
    for k in 0..count {
        remaining.clear();
        remaining.extend(0..n);
        let mut code = k;
        let mut term = 1.0;
        for &r in &radices {
            let digit = code % r;
            code /= r;
            let i = remaining.remove(0);
            let j = remaining.remove(digit);
            term *= gram[(i, j)];
        }
        total += term;
    }
    Ok(total)
}

fn standard_normals(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// `φ = C^{1/2} ξ`, with `ξ` drawn from the stream `(seed, index)`.
pub fn sample_field_indexed(cov: &CovarianceOperator, seed: u64, index: u64) -> FieldConfiguration {
    let mut r = rng::keyed(seed, &[domain::FIELD_SAMPLE, index]);
    let xi = standard_normals(&mut r, cov.num_sites());
    FieldConfiguration::new(cov.apply_sqrt(&xi))
}

pub fn sample_field(cov: &CovarianceOperator, seed: u64) -> FieldConfiguration {
    sample_field_indexed(cov, seed, 0)
}

pub fn sample_fields(cov: &CovarianceOperator, seed: u64, count: usize) -> Vec<FieldConfiguration> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| sample_field_indexed(cov, seed, i))
        .collect()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn from_sums(sum: f64, sum_sq: f64, n: usize) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n > 1 { ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
        Estimate { mean, std_error: (var / nf).sqrt() }
    }

    /// `|mean - target|` in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

const CHUNK: usize = 1024;

/// Monte Carlo averages of `observables(φ)` over `samples` free fields.
/// Partial sums are formed per fixed-size chunk and combined in order, so
/// the result does not depend on the thread count.
pub fn sample_observables(
    cov: &CovarianceOperator,
    seed: u64,
    samples: usize,
    n_obs: usize,
    observables: impl Fn(&FieldConfiguration, &mut [f64]) + Sync,
) -> Vec<Estimate> {
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut s = vec![0.0; n_obs];
            let mut s2 = vec![0.0; n_obs];
            let mut buf = vec![0.0; n_obs];
            for i in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                let phi = sample_field_indexed(cov, seed, i as u64);
                observables(&phi, &mut buf);
                for k in 0..n_obs {
                    s[k] += buf[k];
                    s2[k] += buf[k] * buf[k];
                }
            }
            (s, s2)
        })
        .collect();
    let mut s = vec![0.0; n_obs];
    let mut s2 = vec![0.0; n_obs];
    for (ps, ps2) in partial {
        for k in 0..n_obs {
            s[k] += ps[k];
            s2[k] += ps2[k];
        }
    }
    (0..n_obs).map(|k| Estimate::from_sums(s[k], s2[k], samples)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct GeneratingReport {
    pub lambda: f64,
    pub norm_sq: f64,
    pub estimate: Estimate,
    pub exact: f64,
    pub pass: bool,
    /// Relative standard error of `e^{λφ(u)}` too large for the sample size.
    pub high_variance: bool,
}

/// Checks `E e^{λφ(u)} = e^{λ²⟨u,u⟩/2}` by sampling.
pub fn gaussian_generating_check(
    cov: &CovarianceOperator,
    u: &[f64],
    lambda: f64,
    samples: usize,
    seed: u64,
) -> Result<GeneratingReport> {
    if samples < 2 {
        return Err(Error::InvalidParameter("need at least two samples".into()));
    }
    let norm_sq = n_inner_product(cov, u, u)?;
    let vol = cov.geometry().cell_volume();
    let est = sample_observables(cov, seed, samples, 1, |phi, out| {
        let pairing: f64 = vol * phi.values().iter().zip(u).map(|(p, w)| p * w).sum::<f64>();
        out[0] = (lambda * pairing).exp();
    })[0];
    let exact = (0.5 * lambda * lambda * norm_sq).exp();
    // relative variance of a lognormal: e^{λ²⟨u,u⟩} - 1
    let rel_se = (lambda * lambda * norm_sq).exp_m1() / samples as f64;
    let high_variance = rel_se.sqrt() > 0.05 || est.std_error > 0.05 * est.mean.abs();
    Ok(GeneratingReport {
        lambda,
        norm_sq,
        estimate: est,
        exact,
        pass: est.z_score(exact) <= 3.0,
        high_variance,
    })
}

/// Coefficients of `:φⁿ:_c = Σ_k coeffs[k] φ^k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WickPolynomialTable {
    pub degree: usize,
    pub variance: f64,
    pub coeffs: Vec<f64>,
}

impl WickPolynomialTable {
    pub fn eval(&self, phi: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * phi + c)
    }
}

/// `E Z^k` for `Z ~ N(0, c)`.
pub fn gaussian_moment(k: usize, c: f64) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let dfact: f64 = (1..k).step_by(2).map(|j| j as f64).product();
    dfact * c.powi(k as i32 / 2)
}

fn poly_inner(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, a) in p.iter().enumerate() {
        for (j, b) in q.iter().enumerate() {
            s += a * b * gaussian_moment(i + j, 1.0);
        }
    }
    s
}

/// Gram–Schmidt of `1, φ, φ², …` in `L²(N(0, c))`.
///
/// Orthogonalization runs at unit variance where every moment is an exact
/// integer; `φ^k` in `:φⁿ:_c` then scales by `c^{(n-k)/2}`.
pub fn wick_power(n: usize, c: f64) -> Result<WickPolynomialTable> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidParameter(format!("Wick variance must be positive, got {c}")));
    }
    if n > WICK_MAX_DEGREE {
        return Err(Error::Budget(format!("Wick degree {n} exceeds {WICK_MAX_DEGREE}")));
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let mut p = vec![0.0; k + 1];
        p[k] = 1.0;
        for q in &basis {
            let r = poly_inner(&p, q) / poly_inner(q, q);
            for (i, qi) in q.iter().enumerate() {
                p[i] -= r * qi;
            }
        }
        for x in p.iter_mut() {
            *x = snap_integer(*x);
        }
        basis.push(p);
    }
    let unit = basis.pop().expect("n + 1 polynomials");
    let coeffs = unit
        .iter()
        .enumerate()
        .map(|(k, &a)| if a == 0.0 { 0.0 } else { a * c.powf((n - k) as f64 / 2.0) })
        .collect();
    Ok(WickPolynomialTable { degree: n, variance: c, coeffs })
}

/// Unit-variance Wick coefficients are integers; strip roundoff.
fn snap_integer(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PairingExpectation {
    /// `δ_{nm} n! C(x,y)^n`.
    pub value: f64,
    /// The same expectation from monomial moments computed as hafnians.
    pub hafnian_value: f64,
}

/// `E[:φ_x^n: :φ_y^m:]` with each factor Wick-ordered at its own site variance.
pub fn wick_pairing_expectation(
    n: usize,
    m: usize,
    cov: &CovarianceOperator,
    x: usize,
    y: usize,
) -> Result<PairingExpectation> {
    if n > PAIRING_MAX_DEGREE || m > PAIRING_MAX_DEGREE {
        return Err(Error::Budget(format!(
            "pairing degrees ({n}, {m}) exceed {PAIRING_MAX_DEGREE}"
        )));
    }
    let gram = GaussianMomentProblem::from_sites(cov, &[x, y])?.gram().clone();
    let (cxx, cxy, cyy) = (gram[(0, 0)], gram[(0, 1)], gram[(1, 1)]);
    let factorial: f64 = (1..=n).map(|k| k as f64).product();
    let value = if n == m { factorial * cxy.powi(n as i32) } else { 0.0 };

    let wx = wick_power(n, cxx)?;
    let wy = wick_power(m, cyy)?;
    let mut hafnian_value = 0.0;
    for (k, a) in wx.coeffs.iter().enumerate() {
        for (l, b) in wy.coeffs.iter().enumerate() {
            if *a == 0.0 || *b == 0.0 || (k + l) % 2 == 1 {
                continue;
            }
            let g = DMatrix::from_fn(k + l, k + l, |i, j| match (i < k, j < k) {
                (true, true) => cxx,
                (false, false) => cyy,
                _ => cxy,
            });
            hafnian_value += a * b * hafnian(&g)?;
        }
    }
    Ok(PairingExpectation { value, hafnian_value })
}

/// `Γ(A)` on the orthonormal Wick basis `Π_i :x_i^{α_i}: / √α_i!` of degree `≤ D`.
#[derive(Clone, Debug)]
pub struct TruncatedFockOperator {
    pub modes: usize,
    pub max_degree: usize,
    /// Multi-indices, ordered by total degree then lexicographically.
    pub basis: Vec<Vec<usize>>,
    pub matrix: DMatrix<f64>,
}

impl TruncatedFockOperator {
    /// Index range of the degree-`n` block.
    pub fn level(&self, n: usize) -> std::ops::Range<usize> {
        let start = self.basis.iter().position(|a| a.iter().sum::<usize>() == n);
        match start {
            None => 0..0,
            Some(s) => {
                let len = self.basis[s..].iter().take_while(|a| a.iter().sum::<usize>() == n).count();
                s..s + len
            }
        }
    }
}

/// All multi-indices over `d` modes with total degree `≤ max`, graded order.
pub fn fock_basis(d: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for n in 0..=max {
        let mut level = Vec::new();
        compositions(d, n, &mut vec![0; d], 0, &mut level);
        level.sort_by(|a, b| b.cmp(a));
        out.extend(level);
    }
    out
}

fn compositions(d: usize, n: usize, cur: &mut Vec<usize>, pos: usize, out: &mut Vec<Vec<usize>>) {
    if pos + 1 == d {
        cur[pos] = n;
        out.push(cur.clone());
        return;
    }
    for k in 0..=n {
        cur[pos] = k;
        compositions(d, n - k, cur, pos + 1, out);
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `Γ(A) :Π_i φ(e_i)^{α_i}: = :Π_i φ(A e_i)^{α_i}:` in the orthonormal basis.
pub fn second_quantize(a: &DMatrix<f64>, max_degree: usize) -> Result<TruncatedFockOperator> {
    let d = a.nrows();
    if !a.is_square() || d == 0 {
        return Err(Error::InvalidParameter(format!("A must be square, got {}x{}", a.nrows(), a.ncols())));
    }
    if d > FOCK_MAX_MODES || max_degree > FOCK_MAX_DEGREE {
        return Err(Error::Budget(format!(
            "Fock truncation (d = {d}, D = {max_degree}) exceeds ({FOCK_MAX_MODES}, {FOCK_MAX_DEGREE})"
        )));
    }
    let basis = fock_basis(d, max_degree);
    let position: HashMap<&[usize], usize> =
        basis.iter().enumerate().map(|(i, b)| (b.as_slice(), i)).collect();
    let norm = |b: &[usize]| b.iter().map(|&k| factorial(k)).product::<f64>().sqrt();
    let mut matrix = DMatrix::zeros(basis.len(), basis.len());
    for (col, alpha) in basis.iter().enumerate() {
        // expand Π_i (Σ_j A_ji x_j)^{α_i} multilinearly; Wick ordering turns
        // each monomial count β into Π_j He_{β_j}(x_j)
        let mut poly: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        poly.insert(vec![0; d], 1.0);
        for (i, &ai) in alpha.iter().enumerate() {
            for _ in 0..ai {
                let mut next = BTreeMap::new();
                for (beta, coef) in &poly {
                    for j in 0..d {
                        let aji = a[(j, i)];
                        if aji == 0.0 {
                            continue;
                        }
                        let mut b = beta.clone();
                        b[j] += 1;
                        *next.entry(b).or_insert(0.0) += coef * aji;
                    }
                }
                poly = next;
            }
        }
        let na = norm(alpha);
        for (beta, coef) in poly {
            let row = position[beta.as_slice()];
            matrix[(row, col)] += coef * norm(&beta) / na;
        }
    }
    Ok(TruncatedFockOperator { modes: d, max_degree, basis, matrix })
}

/// Probabilists' Hermite polynomials `He_0 … He_n` at `x`.
pub fn hermite_all(n: usize, x: f64) -> Vec<f64> {
    let mut h = vec![1.0; n + 1];
    if n >= 1 {
        h[1] = x;
    }
    for k in 2..=n {
        h[k] = x * h[k - 1] - (k - 1) as f64 * h[k - 2];
    }
    h
}

const HYPER_NODES: usize = 64;
const HYPER_CHECK_NODES: usize = 32;
const HYPER_AGREEMENT: f64 = 1e-8;
const POLY_DEGREE: usize = 4;
const POSITIVITY_FLOOR: f64 = 4.0;
const COEFF_DECAY: f64 = 0.5;
const EXPONENT_REACH: f64 = 3.5;

/// Single-mode test function for the hypercontractivity probe.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TestFunction {
    /// `(Σ c_k x^k)² + ε`.
    SquaredPolynomial { coeffs: Vec<f64>, floor: f64 },
    /// `e^{βx}`.
    Exponential { beta: f64 },
}

impl TestFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TestFunction::SquaredPolynomial { coeffs, floor } => {
                let p = coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c);
                p * p + floor
            }
            TestFunction::Exponential { beta } => (beta * x).exp(),
        }
    }
}

struct SingleMode {
    x: Vec<f64>,
    w: Vec<f64>,
}

impl SingleMode {
    fn new(nodes: usize) -> Self {
        let (x, w) = GaussHermite::new(nodes).normal(1.0);
        SingleMode { x, w }
    }

    fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.x.iter().zip(&self.w).map(|(&x, w)| w * f(x)).sum()
    }

    /// Mehler form of `Γ(s)`: `(Γ(s) f)(x) = E f(s x + √(1-s²) Z)`.
    fn mehler(&self, s: f64, f: &TestFunction, x: f64) -> f64 {
        let r = (1.0 - s * s).max(0.0).sqrt();
        self.expect(|z| f.eval(s * x + r * z))
    }

    fn norm(&self, p: f64, g: impl Fn(f64) -> f64) -> f64 {
        self.expect(|x| g(x).abs().powf(p)).powf(1.0 / p)
    }

    fn ratio(&self, s: f64, p: f64, q: f64, f: &TestFunction) -> f64 {
        self.norm(q, |x| self.mehler(s, f, x)) / self.norm(p, |x| f.eval(x))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HyperReport {
    pub p: f64,
    pub q: f64,
    /// `‖A‖²`.
    pub norm_sq: f64,
    /// `(p-1)/(q-1)`.
    pub threshold: f64,
    pub trials: usize,
    pub max_ratio: f64,
    pub argmax: TestFunction,
    /// `Γ(A)f ≥ 0` at every quadrature node for every (positive) trial.
    pub positivity_preserved: bool,
    /// `max |E Γ(A)f - E f|` relative to `E f`.
    pub mean_defect: f64,
    /// Max disagreement between the Mehler integral and the Fock-basis
    /// matrix of `Γ(A)` on polynomial trials.
    pub fock_defect: f64,
    /// Within the hypercontractive region, the bound held.
    pub bound_holds: bool,
}

/// Norm ratios `‖Γ(A) f‖_q / ‖f‖_p` for a single-mode contraction with
/// `‖A‖ = contraction_norm`, over seeded random squared polynomials and a
/// grid of exponentials.
pub fn hypercontractivity_probe(
    contraction_norm: f64,
    p: f64,
    q: f64,
    trials: usize,
    seed: u64,
) -> Result<HyperReport> {
    let s = contraction_norm;
    if !(p > 1.0 && q >= p && q.is_finite()) {
        return Err(Error::InvalidParameter(format!("need 1 < p <= q < inf, got p = {p}, q = {q}")));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidParameter(format!("contraction norm {s} outside [0, 1]")));
    }
    let fine = SingleMode::new(HYPER_NODES);
    let coarse = SingleMode::new(HYPER_CHECK_NODES);

    let mut funcs = Vec::with_capacity(trials + 41);
    let mut r = rng::keyed(seed, &[domain::HYPER]);
    for _ in 0..trials {
        let coeffs = standard_normals(&mut r, POLY_DEGREE + 1)
            .into_iter()
            .enumerate()
            .map(|(k, c)| c * COEFF_DECAY.powi(k as i32) / factorial(k))
            .collect();
        funcs.push(TestFunction::SquaredPolynomial { coeffs, floor: POSITIVITY_FLOOR });
    }
    // E e^{cX} needs |c| <~ 4 to be resolved by the 32-node check rule
    let beta_max = EXPONENT_REACH / q;
    for k in -20..=20 {
        if k != 0 {
            funcs.push(TestFunction::Exponential { beta: beta_max * k as f64 / 20.0 });
        }
    }

    let fock = second_quantize(&DMatrix::from_element(1, 1, s), 2 * POLY_DEGREE)?;
    let mut max_ratio = f64::NEG_INFINITY;
    let mut argmax = funcs[0].clone();
    let mut positivity_preserved = true;
    let mut mean_defect = 0.0f64;
    let mut fock_defect = 0.0f64;
    for f in &funcs {
        let ratio = fine.ratio(s, p, q, f);
        let check = coarse.ratio(s, p, q, f);
        if !((ratio - check).abs() <= HYPER_AGREEMENT * ratio.abs().max(1.0)) {
            return Err(Error::Quadrature(format!(
                "32- and 64-node norms disagree ({check} vs {ratio}) for {f:?} at p = {p}, q = {q}"
            )));
        }
        if ratio > max_ratio {
            max_ratio = ratio;
            argmax = f.clone();
        }
        let gf: Vec<f64> = fine.x.iter().map(|&x| fine.mehler(s, f, x)).collect();
        positivity_preserved &= gf.iter().all(|&v| v >= 0.0);
        let ef = fine.expect(|x| f.eval(x));
        let egf: f64 = gf.iter().zip(&fine.w).map(|(g, w)| g * w).sum();
        mean_defect = mean_defect.max((egf - ef).abs() / ef.abs());

        if let TestFunction::SquaredPolynomial { .. } = f {
            // Hermite coefficients of f, mapped through the Fock matrix
            let deg = 2 * POLY_DEGREE;
            let hf: Vec<f64> = (0..=deg)
                .map(|n| fine.expect(|x| f.eval(x) * hermite_all(deg, x)[n]) / factorial(n).sqrt())
                .collect();
            for (&x, &g) in fine.x.iter().zip(&gf).step_by(7) {
                let he = hermite_all(deg, x);
                let via_fock: f64 = (0..=deg)
                    .map(|row| {
                        let c: f64 = (0..=deg).map(|col| fock.matrix[(row, col)] * hf[col]).sum();
                        c * he[row] / factorial(row).sqrt()
                    })
                    .sum();
                fock_defect = fock_defect.max((via_fock - g).abs() / g.abs().max(1.0));
            }
        }
    }
    let threshold = (p - 1.0) / (q - 1.0);
    let norm_sq = s * s;
    let bound_holds = norm_sq > threshold || max_ratio <= 1.0 + 1e-6;
    Ok(HyperReport {
        p,
        q,
        norm_sq,
        threshold,
        trials: funcs.len(),
        max_ratio,
        argmax,
        positivity_preserved,
        mean_defect,
        fock_defect,
        bound_holds,
    })
}

/// Free-Hamiltonian corollary: `Γ(e^{-tm})` from `L^p` to `L^q` with
/// `q - 1 = (p - 1) e^{2tm}`, the boundary of the hypercontractive region.
pub fn free_hamiltonian_probe(mass: f64, t: f64, p: f64, trials: usize, seed: u64) -> Result<HyperReport> {
    if !(mass > 0.0 && t >= 0.0) {
        return Err(Error::InvalidParameter(format!("need m > 0, t >= 0, got ({mass}, {t})")));
    }
    let q = 1.0 + (p - 1.0) * (2.0 * t * mass).exp();
    hypercontractivity_probe((-t * mass).exp(), p, q, trials, seed)
}
