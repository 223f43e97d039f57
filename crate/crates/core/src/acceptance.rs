//! The desk-scale acceptance suite: fourteen criteria, each a list of
//! measurements compared against fixed bounds.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::covariance::{
    continuum_decay_fit, lattice_vs_continuum_refinement, magic_formula, magic_formula_quadrature,
    CovarianceOperator, Stencil,
};
use crate::error::Result;
use crate::gaussian::{
    free_hamiltonian_probe, gaussian_moment, hafnian, hafnian_bruteforce, hypercontractivity_probe,
    sample_field, sample_observables, second_quantize, wick_power, GaussianMomentProblem,
};
use crate::interaction::{
    partition_function_mc, partition_function_quadrature, schwinger_function, InteractionPolynomial,
    Method, SamplingBudget, WickAction,
};
use crate::lattice::{Boundary, LatticeGeometry};
use crate::markov::{conditional_covariance_check, dilation_semigroup, markov_check, one_particle_hamiltonian};
use crate::rng::{self, domain};
use crate::transfer::{
    build_transfer, fkn_check, fkn_default_vectors, ground_state, nelson_symmetry_check, rectangle_amplitude,
    semigroup_norm, DEFAULT_NODES, MAX_DIM, MIN_NODES,
};

pub const CRITERIA: [(u8, &str); 14] = [
    (1, "hafnian-oracle"),
    (2, "magic-formula"),
    (3, "markov-property"),
    (4, "semigroup"),
    (5, "gaussian-sampling"),
    (6, "wick-products"),
    (7, "hypercontractivity"),
    (8, "functoriality"),
    (9, "jensen-bound"),
    (10, "fkn-identity"),
    (11, "nelson-symmetry"),
    (12, "ground-state"),
    (13, "cross-method"),
    (14, "refinement"),
];

/// `Quick` shrinks Monte Carlo sample counts; every tolerance is unchanged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Full,
    Quick,
}

impl Profile {
    fn pick(self, full: usize, quick: usize) -> usize {
        match self {
            Profile::Full => full,
            Profile::Quick => quick,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = ">")]
    Above,
    #[serde(rename = "<")]
    Below,
}

#[derive(Clone, Debug, Serialize)]
pub struct Measurement {
    pub label: String,
    pub value: f64,
    pub relation: Relation,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub seconds: f64,
    pub measurements: Vec<Measurement>,
    pub notes: Vec<String>,
    pub error: Option<String>,
}

impl CriterionReport {
    /// One line: verdict, id, name, timing and the first failure or the
    /// measurement count.
    pub fn line(&self) -> String {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        let tail = if let Some(e) = &self.error {
            format!("error: {e}")
        } else if let Some(m) = self.measurements.iter().find(|m| !m.pass) {
            format!("{}: {:.3e} violates {} {:.3e}", m.label, m.value, relation_str(m.relation), m.bound)
        } else {
            format!("{} measurements within bounds", self.measurements.len())
        };
        format!("[{verdict}] {:>2} {:<20} {:>7.2}s  {tail}", self.id, self.name, self.seconds)
    }
}

impl Measurement {
    pub fn new(label: impl Into<String>, value: f64, relation: Relation, bound: f64) -> Self {
        let pass = match relation {
            Relation::AtMost => value <= bound,
            Relation::AtLeast => value >= bound,
            Relation::Above => value > bound,
            Relation::Below => value < bound,
        };
        Measurement { label: label.into(), value, relation, bound, pass }
    }
}

pub fn relation_str(r: Relation) -> &'static str {
    match r {
        Relation::AtMost => "<=",
        Relation::AtLeast => ">=",
        Relation::Above => ">",
        Relation::Below => "<",
    }
}

#[derive(Default)]
struct Sheet {
    measurements: Vec<Measurement>,
    notes: Vec<String>,
}

impl Sheet {
    fn push(&mut self, label: impl Into<String>, value: f64, relation: Relation, bound: f64) {
        self.measurements.push(Measurement::new(label, value, relation, bound));
    }

    fn at_most(&mut self, label: impl Into<String>, value: f64, bound: f64) {
        self.push(label, value, Relation::AtMost, bound);
    }

    fn flag(&mut self, label: impl Into<String>, ok: bool) {
        self.push(label, if ok { 1.0 } else { 0.0 }, Relation::AtLeast, 1.0);
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }
}

pub fn run_criterion(id: u8, profile: Profile, seed: u64) -> CriterionReport {
    let name = CRITERIA.iter().find(|c| c.0 == id).map(|c| c.1).unwrap_or("unknown");
    let start = Instant::now();
    let mut sheet = Sheet::default();
    let outcome = match id {
        1 => hafnian_oracle(&mut sheet, seed),
        2 => magic(&mut sheet),
        3 => markov(&mut sheet),
        4 => semigroup(&mut sheet),
        5 => sampling(&mut sheet, profile, seed),
        6 => wick(&mut sheet),
        7 => hyper(&mut sheet, seed),
        8 => functoriality(&mut sheet, seed),
        9 => jensen(&mut sheet, profile, seed),
        10 => fkn(&mut sheet),
        11 => nelson(&mut sheet, profile, seed),
        12 => ground(&mut sheet),
        13 => cross_method(&mut sheet, profile, seed),
        14 => refinement(&mut sheet),
        _ => Err(crate::Error::InvalidParameter(format!("no criterion {id}"))),
    };
    let error = outcome.err().map(|e| e.to_string());
    CriterionReport {
        id,
        name,
        pass: error.is_none() && !sheet.measurements.is_empty() && sheet.measurements.iter().all(|m| m.pass),
        seconds: start.elapsed().as_secs_f64(),
        measurements: sheet.measurements,
        notes: sheet.notes,
        error,
    }
}

pub fn run_all(profile: Profile, seed: u64) -> Vec<CriterionReport> {
    CRITERIA.iter().map(|&(id, _)| run_criterion(id, profile, seed)).collect()
}

fn lattice(dim: usize, ext: &[usize], spacing: f64, b: Boundary, mass: f64) -> Result<CovarianceOperator> {
    CovarianceOperator::new(&LatticeGeometry::new(dim, ext, spacing, b)?, mass)
}

fn hafnian_oracle(s: &mut Sheet, seed: u64) -> Result<()> {
    // Gram matrices of positive vectors: every matching term is positive
    let mut worst = 0.0f64;
    for n in [2usize, 4, 6, 8, 10] {
        for k in 0..50u64 {
            let mut r = rng::keyed(seed, &[domain::PROBE, n as u64, k]);
            let v = DMatrix::from_fn(n + 2, n, |_, _| r.random::<f64>());
            let g = v.transpose() * v;
            let h = hafnian(&g)?;
            let b = hafnian_bruteforce(&g)?;
            worst = worst.max((h - b).abs() / b.abs());
        }
    }
    s.at_most("max relative error over 250 Gram matrices", worst, 1e-12);
    Ok(())
}

fn magic(s: &mut Sheet) -> Result<()> {
    let mut worst = 0.0f64;
    for k in 0..20 {
        let x = 0.2 * k as f64;
        let m = 0.5 + 0.125 * k as f64;
        let exact = magic_formula(x, m)?;
        worst = worst.max((magic_formula_quadrature(x, m)? - exact).abs() / exact);
    }
    s.at_most("magic formula max relative error, 20 (x, M) pairs", worst, 1e-8);
    let fit = continuum_decay_fit(1.0, 5.0, 10.0, 51)?;
    s.at_most("2D kernel decay rate |mu/m - 1| on r in [5, 10]", (fit.rate - 1.0).abs(), 0.05);
    Ok(())
}

fn markov(s: &mut Sheet) -> Result<()> {
    let chain = lattice(1, &[64], 1.0, Boundary::Dirichlet, 1.0)?;
    let (mut op, mut cond) = (0.0f64, 0.0f64);
    for plane in 1..63 {
        op = op.max(markov_check(&chain, 0, plane)?.max());
        cond = cond.max(conditional_covariance_check(&chain, 0, plane)?);
    }
    s.at_most("1D 64 sites: max e_A e_B - e_sigma residual", op, 1e-8);
    s.at_most("1D 64 sites: max conditional covariance", cond, 1e-8);
    let square = lattice(2, &[16, 16], 1.0, Boundary::Dirichlet, 1.0)?;
    let (mut op, mut cond) = (0.0f64, 0.0f64);
    for axis in 0..2 {
        for plane in 1..15 {
            op = op.max(markov_check(&square, axis, plane)?.max());
            cond = cond.max(conditional_covariance_check(&square, axis, plane)?);
        }
    }
    s.at_most("2D 16x16: max e_A e_B - e_sigma residual", op, 1e-8);
    s.at_most("2D 16x16: max conditional covariance", cond, 1e-8);
    let g = LatticeGeometry::new(1, &[9], 1.0, Boundary::Dirichlet)?;
    let nnn = CovarianceOperator::with_stencil(&g, 1.0, Stencil::NextNearestNeighbor { weight: 0.5 })?;
    s.push("next-nearest-neighbor control residual", markov_check(&nnn, 0, 4)?.max(), Relation::Above, 1e-3);
    Ok(())
}

fn semigroup(s: &mut Sheet) -> Result<()> {
    let c = lattice(2, &[8, 64], 1.0, Boundary::Periodic, 1.0)?;
    let p: Vec<DMatrix<f64>> = (0..=6).map(|t| dilation_semigroup(&c, t)).collect::<Result<_>>()?;
    let (mut comp, mut sym) = (0.0f64, 0.0f64);
    for a in 1..=3 {
        for b in 1..=3 {
            comp = comp.max((&p[a] * &p[b] - &p[a + b]).amax());
        }
        sym = sym.max((&p[a] - p[a].transpose()).amax());
    }
    s.at_most("max |p(s)p(t) - p(s+t)|", comp, 1e-8);
    s.at_most("max |p(t) - p(t)^T|", sym, 1e-12);
    let fine = lattice(2, &[8, 512], 0.1, Boundary::Periodic, 1.0)?;
    let spec = one_particle_hamiltonian(&fine)?;
    let min_omega = spec.modes.iter().map(|m| m.omega).fold(f64::INFINITY, f64::min);
    s.push("min omega_lat", min_omega, Relation::Above, 0.0);
    s.at_most("|omega_lat(0)/m - 1| at a = 0.1", (spec.modes[0].omega - 1.0).abs(), 0.02);
    Ok(())
}

fn sampling(s: &mut Sheet, profile: Profile, seed: u64) -> Result<()> {
    let c = lattice(2, &[4, 4], 1.0, Boundary::Periodic, 1.0)?;
    let n = c.num_sites();
    let samples = profile.pick(100_000, 20_000);
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|x| (x..n).map(move |y| (x, y))).collect();
    let four = [0usize, 1, 5, 10];
    let est = sample_observables(&c, seed, samples, pairs.len() + 1, |phi, out| {
        let v = phi.values();
        for (k, &(x, y)) in pairs.iter().enumerate() {
            out[k] = v[x] * v[y];
        }
        out[pairs.len()] = four.iter().map(|&i| v[i]).product();
    });
    let mut worst = 0.0f64;
    for (k, &(x, y)) in pairs.iter().enumerate() {
        worst = worst.max(est[k].z_score(c.entry(x, y)));
    }
    s.at_most(format!("max |z| over {} two-point moments", pairs.len()), worst, 4.0);
    let predicted = GaussianMomentProblem::from_sites(&c, &four)?.moment()?;
    s.at_most("four-point |z| against the hafnian", est[pairs.len()].z_score(predicted), 4.0);
    let a = sample_field(&c, seed);
    let b = sample_field(&c, seed);
    let same = a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits());
    s.flag("fixed seed reproduces bit-identical fields", same);
    s.note(format!("{samples} samples"));
    Ok(())
}

fn wick(s: &mut Sheet) -> Result<()> {
    let w2 = wick_power(2, 1.0)?;
    let w4 = wick_power(4, 1.0)?;
    let d2 = [-1.0, 0.0, 1.0].iter().zip(&w2.coeffs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let d4 = [3.0, 0.0, -6.0, 0.0, 1.0].iter().zip(&w4.coeffs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    s.at_most(":phi^2: coefficient error", d2, 1e-12);
    s.at_most(":phi^4: coefficient error", d4, 1e-12);
    let mut worst = 0.0f64;
    for c in [1.0, 0.7] {
        let tables: Vec<_> = (0..=6).map(|n| wick_power(n, c)).collect::<Result<_>>()?;
        for n in 0..=6 {
            for m in 0..=6 {
                let mut e = 0.0;
                for (i, a) in tables[n].coeffs.iter().enumerate() {
                    for (j, b) in tables[m].coeffs.iter().enumerate() {
                        e += a * b * gaussian_moment(i + j, c);
                    }
                }
                let expect = if n == m { factorial(n) * c.powi(n as i32) } else { 0.0 };
                worst = worst.max((e - expect).abs() / expect.max(1.0));
            }
        }
    }
    s.at_most("max |E[:phi^n::phi^m:] - delta n! c^n|, n, m <= 6", worst, 1e-10);
    Ok(())
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn hyper(s: &mut Sheet, seed: u64) -> Result<()> {
    const TRIALS: usize = 60;
    let mut worst = f64::NEG_INFINITY;
    let mut positive = true;
    let mut mean = 0.0f64;
    for p in [1.5f64, 2.0, 3.0] {
        for q in [2.0, 3.0, 4.0] {
            if q < p {
                continue;
            }
            let edge = ((p - 1.0) / (q - 1.0)).sqrt();
            for norm in [edge, 0.8 * edge] {
                let r = hypercontractivity_probe(norm, p, q, TRIALS, seed)?;
                worst = worst.max(r.max_ratio);
                positive &= r.positivity_preserved;
                mean = mean.max(r.mean_defect);
            }
        }
    }
    s.at_most("max norm ratio inside the hypercontractive region", worst, 1.0 + 1e-6);
    s.flag("positivity preserved on the grid", positive);
    s.at_most("mean preservation defect", mean, 1e-10);
    let over = hypercontractivity_probe((1.0f64 / 3.0 + 0.15).sqrt(), 2.0, 4.0, TRIALS, seed)?;
    s.push("sharpness witness ratio at ||A||^2 = 1/3 + 0.15, (2, 4)", over.max_ratio, Relation::Above, 1.0);
    let free = free_hamiltonian_probe(1.0, 0.2, 2.0, TRIALS, seed)?;
    s.at_most("free Hamiltonian corollary max ratio", free.max_ratio, 1.0 + 1e-6);
    Ok(())
}

fn functoriality(s: &mut Sheet, seed: u64) -> Result<()> {
    let mut worst = 0.0f64;
    for k in 0..20u64 {
        let d = 1 + (k % 3) as usize;
        let mut r = rng::keyed(seed, &[domain::PROBE, 8, k]);
        let mut contraction = || {
            let m = DMatrix::from_fn(d, d, |_, _| r.sample::<f64, _>(StandardNormal));
            let norm = m.clone().svd(false, false).singular_values.max();
            m / (norm * (1.0 + r.random::<f64>()))
        };
        let a = contraction();
        let b = contraction();
        let gab = second_quantize(&(&a * &b), 5)?.matrix;
        let prod = second_quantize(&a, 5)?.matrix * second_quantize(&b, 5)?.matrix;
        worst = worst.max((gab - prod).amax());
    }
    s.at_most("max |Gamma(AB) - Gamma(A)Gamma(B)|, 20 pairs, d <= 3, degree <= 5", worst, 1e-10);
    Ok(())
}

fn jensen(s: &mut Sheet, profile: Profile, seed: u64) -> Result<()> {
    let mut geometries: Vec<(usize, Vec<usize>)> = (2..=6).map(|n| (1, vec![n])).collect();
    // [3, 2] is [2, 3] with the axes relabeled
    geometries.extend([(2, vec![2, 2]), (2, vec![2, 3])]);
    let mut lowest = f64::INFINITY;
    let mut count = 0;
    for (dim, ext) in &geometries {
        for b in [Boundary::Dirichlet, Boundary::Periodic] {
            let c = lattice(*dim, ext, 1.0, b, 1.0)?;
            for lambda in [0.05, 0.1, 0.5] {
                let act = WickAction::full(&c, &InteractionPolynomial::quartic(lambda)?)?;
                lowest = lowest.min(partition_function_quadrature(&c, &act)?.value);
                count += 1;
            }
        }
    }
    s.push(format!("min quadrature Z over {count} lattices"), lowest, Relation::AtLeast, 1.0 - 1e-12);
    let c = lattice(2, &[8, 8], 1.0, Boundary::Periodic, 1.0)?;
    let samples = profile.pick(100_000, 20_000);
    for lambda in [0.05, 0.1, 0.5] {
        let act = WickAction::full(&c, &InteractionPolynomial::quartic(lambda)?)?;
        let mc = partition_function_mc(&c, &act, samples, seed)?;
        s.push(format!("8x8 MC Z + 3 sigma, lambda = {lambda}"), mc.z + 3.0 * mc.std_error, Relation::AtLeast, 1.0);
        if mc.high_variance {
            s.note(format!("lambda = {lambda}: reweighting variance flagged high"));
        }
    }
    Ok(())
}

fn fkn(s: &mut Sheet) -> Result<()> {
    for (n_s, n_t) in [(1, 3), (2, 2), (1, 4)] {
        for lambda in [0.0, 0.1] {
            let p = if lambda == 0.0 { InteractionPolynomial::zero() } else { InteractionPolynomial::quartic(lambda)? };
            let tm = build_transfer(n_s, 1.0, 1.0, &p, DEFAULT_NODES)?;
            let (u, v) = fkn_default_vectors(&tm);
            let r = fkn_check(&tm, n_t, &u, &v)?;
            s.at_most(format!("(n_s, n_t) = ({n_s}, {n_t}), lambda = {lambda}"), r.residual, 1e-8);
        }
    }
    Ok(())
}

/// Largest per-site node count (at most the default) whose slice grid fits.
fn nodes_for(sites: usize) -> Option<usize> {
    (MIN_NODES..=DEFAULT_NODES).rev().find(|n| n.checked_pow(sites as u32).is_some_and(|d| d <= MAX_DIM))
}

fn nelson(s: &mut Sheet, profile: Profile, seed: u64) -> Result<()> {
    let mut skipped = Vec::new();
    for ell in 1..=6usize {
        for t in ell..=6 {
            if ell * t > 6 {
                continue;
            }
            let Some(nodes) = nodes_for(t) else {
                skipped.push(format!("{ell}x{t}"));
                continue;
            };
            for lambda in [0.0, 0.1] {
                let p = if lambda == 0.0 { InteractionPolynomial::zero() } else { InteractionPolynomial::quartic(lambda)? };
                let r = nelson_symmetry_check(ell, t, 1.0, 1.0, 1.0, &p, nodes)?;
                s.at_most(format!("{ell}x{t} rectangle, lambda = {lambda}"), r.residual, 1e-8);
            }
        }
    }
    if !skipped.is_empty() {
        s.note(format!("outside the transfer budget in one orientation: {}", skipped.join(", ")));
    }
    let samples = profile.pick(200_000, 50_000);
    let quartic = InteractionPolynomial::quartic(0.1)?;
    let mut mc = Vec::new();
    for ext in [[6usize, 4], [4, 6]] {
        let c = lattice(2, &ext, 1.0, Boundary::Dirichlet, 1.0)?;
        let act = WickAction::full(&c, &quartic)?;
        mc.push(partition_function_mc(&c, &act, samples, seed)?);
    }
    let sigma = (mc[0].std_error.powi(2) + mc[1].std_error.powi(2)).sqrt();
    s.at_most("MC 6x4 vs 4x6 |Z difference| / sigma", (mc[0].z - mc[1].z).abs() / sigma, 3.0);
    let nodes = nodes_for(4).unwrap_or(MIN_NODES);
    let tr = rectangle_amplitude(4, 6, 1.0, 1.0, &quartic, nodes)?;
    s.at_most(
        "transfer 4x6 Z vs MC |difference| / sigma",
        (tr.ratio - mc[1].z).abs() / mc[1].std_error,
        3.0,
    );
    Ok(())
}

fn ground(s: &mut Sheet) -> Result<()> {
    let quartic = InteractionPolynomial::quartic(0.1)?;
    for n_s in [1, 2] {
        let tm = build_transfer(n_s, 1.0, 1.0, &quartic, DEFAULT_NODES)?;
        let gs = ground_state(&tm)?;
        s.push(format!("n_s = {n_s}: E"), gs.energy, Relation::Below, 0.0);
        s.push(format!("n_s = {n_s}: min Omega component"), gs.min_component, Relation::Above, 0.0);
        s.at_most(format!("n_s = {n_s}: | ||Omega||_2 - 1 |"), (gs.norm_l2 - 1.0).abs(), 1e-12);
        s.push(format!("n_s = {n_s}: ||Omega||_1"), gs.norm_l1, Relation::Below, 1.0);
        s.push(format!("n_s = {n_s}: <Omega, Omega_0>"), gs.overlap, Relation::Below, 1.0);
        let sn = semigroup_norm(&tm, &gs, 3)?;
        s.at_most(format!("n_s = {n_s}: ||e^(-tH)|| vs e^(-tE) relative"), sn.relative_defect, 1e-10);
        let free = build_transfer(n_s, 1.0, 1.0, &InteractionPolynomial::zero(), DEFAULT_NODES)?;
        let g0 = ground_state(&free)?;
        s.at_most(format!("n_s = {n_s}, P = 0: |E|"), g0.energy.abs(), 0.0);
        s.flag(format!("n_s = {n_s}, P = 0: Omega = Omega_0"), g0.omega.iter().all(|&w| w == 1.0));
    }
    Ok(())
}

fn cross_method(s: &mut Sheet, profile: Profile, seed: u64) -> Result<()> {
    let c = lattice(2, &[4, 4], 1.0, Boundary::Periodic, 1.0)?;
    let points = [0usize, 5];
    let reweight = SamplingBudget::new(profile.pick(200_000, 40_000), seed);
    let mcmc = SamplingBudget::new(profile.pick(40_000, 10_000), seed);
    for lambda in [0.0, 0.1, 0.2] {
        let p = if lambda == 0.0 { InteractionPolynomial::zero() } else { InteractionPolynomial::quartic(lambda)? };
        let act = WickAction::full(&c, &p)?;
        let rw = schwinger_function(&c, &act, &points, Method::Reweight, &reweight)?;
        let mc = schwinger_function(&c, &act, &points, Method::Mcmc, &mcmc)?;
        let sigma = (rw.std_error.powi(2) + mc.std_error.powi(2)).sqrt();
        s.at_most(format!("4x4 lambda = {lambda}: |reweight - MCMC| / sigma"), (rw.value - mc.value).abs() / sigma, 3.0);
        if mc.undersampled {
            s.note(format!("4x4 lambda = {lambda}: MCMC binning did not plateau"));
        }
    }
    s.note("quadrature needs <= 6 sites; on 4x4 it is out of budget, so all three methods are compared on 2x3");
    let small = lattice(2, &[2, 3], 1.0, Boundary::Periodic, 1.0)?;
    for lambda in [0.0, 0.1, 0.2] {
        let p = if lambda == 0.0 { InteractionPolynomial::zero() } else { InteractionPolynomial::quartic(lambda)? };
        let act = WickAction::full(&small, &p)?;
        let pts = [0usize, 4];
        let q = schwinger_function(&small, &act, &pts, Method::Quadrature, &reweight)?;
        let rw = schwinger_function(&small, &act, &pts, Method::Reweight, &reweight)?;
        let mc = schwinger_function(&small, &act, &pts, Method::Mcmc, &mcmc)?;
        let sigma = (rw.std_error.powi(2) + mc.std_error.powi(2)).sqrt();
        s.at_most(format!("2x3 lambda = {lambda}: |reweight - MCMC| / sigma"), (rw.value - mc.value).abs() / sigma, 3.0);
        s.at_most(format!("2x3 lambda = {lambda}: |reweight - quadrature| / sigma"), (rw.value - q.value).abs() / rw.std_error, 3.0);
        s.at_most(format!("2x3 lambda = {lambda}: |MCMC - quadrature| / sigma"), (mc.value - q.value).abs() / mc.std_error, 3.0);
    }
    Ok(())
}

fn refinement(s: &mut Sheet) -> Result<()> {
    let rows = lattice_vs_continuum_refinement(1.0, 40.0, 2.0, 1, &[0.5, 0.25, 0.125])?;
    for w in rows.windows(2) {
        s.push(
            format!("error at a = {} below error at a = {}", w[1].spacing, w[0].spacing),
            w[1].error.abs(),
            Relation::Below,
            w[0].error.abs(),
        );
    }
    let same_side = rows.iter().all(|r| (r.lattice - r.continuum).signum() == (rows[0].lattice - rows[0].continuum).signum());
    s.flag("lattice values approach from one side", same_side);
    Ok(())
}
