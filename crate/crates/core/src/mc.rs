//! Local Metropolis sampling of `e^{U_Λ} dμ`, binning and jackknife error
//! analysis, and bit-exact chain checkpoints.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::covariance::{CovarianceOperator, Stencil};
use crate::error::{Error, Result};
use crate::interaction::WickAction;
use crate::lattice::FieldConfiguration;
use crate::rng::{self, domain};

/// Exact local action `S = ½ a^d φ(-Δ+m²)φ + a^d Σ_Λ :P(φ_x):` of one site.
pub struct LocalAction<'a> {
    wick: &'a WickAction,
    vol: f64,
    inv_a2: f64,
    kappa: f64,
    n_sites: usize,
    /// `2d` neighbor slots per site; `usize::MAX` marks a Dirichlet ghost.
    neighbors: Vec<usize>,
    degree: usize,
}

const GHOST: usize = usize::MAX;

impl<'a> LocalAction<'a> {
    pub fn new(cov: &CovarianceOperator, wick: &'a WickAction) -> Result<Self> {
        if cov.stencil() != Stencil::NearestNeighbor {
            return Err(Error::InvalidParameter("local updates need the nearest-neighbor stencil".into()));
        }
        if cov.geometry() != wick.geometry() {
            return Err(Error::InvalidParameter(
                "covariance and action were built on different lattices".into(),
            ));
        }
        let g = cov.geometry();
        let a = g.spacing();
        let inv_a2 = 1.0 / (a * a);
        let degree = 2 * g.dim();
        let kappa = degree as f64 * inv_a2 + cov.mass() * cov.mass();
        let mut neighbors = Vec::with_capacity(degree * g.num_sites());
        for x in 0..g.num_sites() {
            for n in g.neighbors(x) {
                neighbors.push(n.unwrap_or(GHOST));
            }
        }
        Ok(LocalAction { wick, vol: g.cell_volume(), inv_a2, kappa, n_sites: g.num_sites(), neighbors, degree })
    }

    pub fn num_sites(&self) -> usize {
        self.n_sites
    }

    /// `S(φ with φ_site = new) - S(φ)`.
    #[inline]
    pub fn delta(&self, phi: &[f64], site: usize, new: f64) -> f64 {
        let old = phi[site];
        let nb: f64 = self.neighbors[site * self.degree..(site + 1) * self.degree]
            .iter()
            .filter(|&&y| y != GHOST)
            .map(|&y| phi[y])
            .sum();
        let gauss = 0.5 * self.kappa * (new * new - old * old) - (new - old) * nb * self.inv_a2;
        let inter = self.wick.wick_density(site, new) - self.wick.wick_density(site, old);
        self.vol * (gauss + inter)
    }

    /// Metropolis acceptance probability of `φ_site → new`.
    pub fn acceptance(&self, phi: &[f64], site: usize, new: f64) -> f64 {
        (-self.delta(phi, site, new)).exp().min(1.0)
    }
}

/// One Markov chain: its field, position in its random stream, and tuning.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub seed: u64,
    pub chain: u64,
    pub sweep: u64,
    pub width: f64,
    pub accepted: u64,
    pub proposed: u64,
    pub field: FieldConfiguration,
}

impl ChainState {
    /// Cold start at `φ = 0`.
    pub fn new(seed: u64, chain: u64, num_sites: usize, width: f64) -> Self {
        ChainState {
            seed,
            chain,
            sweep: 0,
            width,
            accepted: 0,
            proposed: 0,
            field: FieldConfiguration::zeros(num_sites),
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// One lexicographic sweep of uniform-window Metropolis updates.
/// Every site consumes exactly two uniforms from the `(seed, chain, sweep)`
/// stream. Returns the acceptance rate of the sweep.
pub fn metropolis_sweep(state: &mut ChainState, local: &LocalAction, width: f64) -> Result<f64> {
    if !(width > 0.0) {
        return Err(Error::InvalidParameter(format!("proposal width must be positive, got {width}")));
    }
    if state.field.len() != local.num_sites() {
        return Err(Error::GeometryMismatch { expected: local.num_sites(), got: state.field.len() });
    }
    let mut r = rng::keyed(state.seed, &[domain::METROPOLIS, state.chain, state.sweep]);
    let phi = state.field.values_mut();
    let mut acc = 0u64;
    for site in 0..phi.len() {
        let step: f64 = r.random();
        let coin: f64 = r.random();
        let new = phi[site] + width * (2.0 * step - 1.0);
        let ds = local.delta(phi, site, new);
        if ds <= 0.0 || coin < (-ds).exp() {
            phi[site] = new;
            acc += 1;
        }
    }
    let n = phi.len() as u64;
    state.sweep += 1;
    state.accepted += acc;
    state.proposed += n;
    Ok(acc as f64 / n as f64)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McConfig {
    pub chains: usize,
    /// Total sweeps per chain, thermalization included.
    pub sweeps: usize,
    pub therm_frac: f64,
    pub seed: u64,
    pub initial_width: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { chains: 4, sweeps: 10_000, therm_frac: 0.2, seed: 0, initial_width: 1.0 }
    }
}

impl McConfig {
    pub fn therm_sweeps(&self) -> u64 {
        (self.sweeps as f64 * self.therm_frac).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.therm_frac > 0.0 && self.therm_frac < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "thermalization fraction must lie in (0, 1), got {}",
                self.therm_frac
            )));
        }
        if self.chains == 0 {
            return Err(Error::InvalidParameter("need at least one chain".into()));
        }
        if !(self.initial_width > 0.0) {
            return Err(Error::InvalidParameter("initial proposal width must be positive".into()));
        }
        let measured = self.sweeps as u64 - self.therm_sweeps().min(self.sweeps as u64);
        if measured < (MIN_BINS * 2) as u64 {
            return Err(Error::InvalidParameter(format!(
                "{measured} measurement sweeps per chain; need at least {}",
                MIN_BINS * 2
            )));
        }
        Ok(())
    }
}

const TARGET_LOW: f64 = 0.4;
const TARGET_HIGH: f64 = 0.6;

/// Advances `state` to sweep `until`. Sweeps before `therm` retune the
/// width toward 40–60% acceptance; later sweeps use the frozen width and
/// push one observable row each into `series`.
pub fn advance_chain(
    state: &mut ChainState,
    local: &LocalAction,
    therm: u64,
    until: u64,
    n_obs: usize,
    observables: &(impl Fn(&[f64], &mut [f64]) + ?Sized),
    series: &mut Vec<Vec<f64>>,
) -> Result<()> {
    series.resize(n_obs, Vec::new());
    let mut row = vec![0.0; n_obs];
    while state.sweep < until {
        let thermalizing = state.sweep < therm;
        let rate = metropolis_sweep(state, local, state.width)?;
        if thermalizing {
            if rate > TARGET_HIGH {
                state.width *= 1.1;
            } else if rate < TARGET_LOW {
                state.width *= 0.9;
            }
        } else {
            observables(state.field.values(), &mut row);
            for (s, v) in series.iter_mut().zip(&row) {
                s.push(*v);
            }
        }
    }
    Ok(())
}

const MIN_BINS: usize = 16;

#[derive(Clone, Debug, Serialize)]
pub struct ErrorAnalysis {
    pub bin_sizes: Vec<usize>,
    /// Standard error of the mean at each bin size.
    pub binned_errors: Vec<f64>,
    /// Jackknife variance of the mean over the largest bins.
    pub jackknife_variance: f64,
    pub tau_int: f64,
    /// Binned variance still growing by more than 2x at the top level.
    pub undersampled: bool,
}

/// Pools per-chain series: bins never straddle chains.
pub fn analyze(chains: &[Vec<f64>]) -> Result<(f64, ErrorAnalysis)> {
    let shortest = chains.iter().map(Vec::len).min().unwrap_or(0);
    if shortest < 2 * MIN_BINS {
        return Err(Error::InvalidParameter(format!(
            "series of length {shortest} is too short for binning"
        )));
    }
    let bins_at = |size: usize| -> Vec<f64> {
        chains
            .iter()
            .flat_map(|c| c.chunks_exact(size).map(|b| b.iter().sum::<f64>() / size as f64))
            .collect()
    };
    let sem = |b: &[f64]| -> f64 {
        let n = b.len() as f64;
        let m = b.iter().sum::<f64>() / n;
        (b.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    };
    let mut bin_sizes = Vec::new();
    let mut binned_errors = Vec::new();
    let mut size = 1;
    while shortest / size >= MIN_BINS {
        bin_sizes.push(size);
        binned_errors.push(sem(&bins_at(size)));
        size *= 2;
    }
    let top = *bin_sizes.last().expect("at least one level");
    let bins = bins_at(top);
    let n = bins.len() as f64;
    let total: f64 = bins.iter().sum();
    let mean = total / n;
    let loo: Vec<f64> = bins.iter().map(|b| (total - b) / (n - 1.0)).collect();
    let lm = loo.iter().sum::<f64>() / n;
    let jackknife_variance = (n - 1.0) / n * loo.iter().map(|x| (x - lm).powi(2)).sum::<f64>();
    let e0 = binned_errors[0];
    let et = *binned_errors.last().expect("levels");
    let tau_int = if e0 > 0.0 { 0.5 * (et / e0).powi(2) } else { 0.5 };
    let undersampled = match binned_errors.len() {
        0 | 1 => true,
        k => {
            let (a, b) = (binned_errors[k - 2].powi(2), binned_errors[k - 1].powi(2));
            a > 0.0 && b / a > 2.0
        }
    };
    Ok((mean, ErrorAnalysis { bin_sizes, binned_errors, jackknife_variance, tau_int, undersampled }))
}

/// Between/within chain potential scale reduction.
pub fn r_hat(chains: &[Vec<f64>]) -> Option<f64> {
    if chains.len() < 2 {
        return None;
    }
    let n = chains.iter().map(Vec::len).min()? as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    let vars: Vec<f64> = chains
        .iter()
        .zip(&means)
        .map(|(c, m)| c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (c.len() as f64 - 1.0))
        .collect();
    let k = chains.len() as f64;
    let w = vars.iter().sum::<f64>() / k;
    let gm = means.iter().sum::<f64>() / k;
    let b_over_n = means.iter().map(|m| (m - gm).powi(2)).sum::<f64>() / (k - 1.0);
    if w <= 0.0 {
        return Some(1.0);
    }
    Some((((n - 1.0) / n * w + b_over_n) / w).sqrt())
}

#[derive(Clone, Debug, Serialize)]
pub struct ObservableResult {
    pub mean: f64,
    pub std_error: f64,
    pub r_hat: Option<f64>,
    pub analysis: ErrorAnalysis,
}

#[derive(Clone, Debug, Serialize)]
pub struct McRun {
    pub observables: Vec<ObservableResult>,
    pub acceptance: Vec<f64>,
    pub widths: Vec<f64>,
    pub chains: usize,
    pub sweeps: usize,
    pub therm_sweeps: u64,
    pub seed: u64,
    pub undersampled: bool,
}

/// Chain snapshots every `every` sweeps, written to `dir/chain-<k>.chk`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointPlan {
    pub every: u64,
    pub dir: PathBuf,
}

impl CheckpointPlan {
    pub fn path(&self, chain: u64) -> PathBuf {
        self.dir.join(format!("chain-{chain}.chk"))
    }
}

/// Independent chains `0..n_chains`, run in parallel, reduced in chain order.
pub fn run_chains(
    local: &LocalAction,
    config: &McConfig,
    n_obs: usize,
    observables: impl Fn(&[f64], &mut [f64]) + Sync,
) -> Result<McRun> {
    run_chains_with(local, config, n_obs, observables, None)
}

/// [`run_chains`] with optional periodic checkpoints. Snapshots do not
/// change the draws.
pub fn run_chains_with(
    local: &LocalAction,
    config: &McConfig,
    n_obs: usize,
    observables: impl Fn(&[f64], &mut [f64]) + Sync,
    plan: Option<&CheckpointPlan>,
) -> Result<McRun> {
    config.validate()?;
    if let Some(p) = plan {
        if p.every == 0 {
            return Err(Error::InvalidParameter("checkpoint interval must be positive".into()));
        }
        std::fs::create_dir_all(&p.dir)?;
    }
    let therm = config.therm_sweeps();
    let per_chain: Vec<Result<(ChainState, Vec<Vec<f64>>, f64)>> = (0..config.chains as u64)
        .into_par_iter()
        .map(|c| {
            let mut st = ChainState::new(config.seed, c, local.num_sites(), config.initial_width);
            let mut series = Vec::new();
            let drive = |st: &mut ChainState, until: u64, series: &mut Vec<Vec<f64>>| -> Result<()> {
                let Some(p) = plan else {
                    return advance_chain(st, local, therm, until, n_obs, &observables, series);
                };
                while st.sweep < until {
                    let next = ((st.sweep / p.every + 1) * p.every).min(until);
                    advance_chain(st, local, therm, next, n_obs, &observables, series)?;
                    if st.sweep % p.every == 0 {
                        checkpoint(st, &p.path(c))?;
                    }
                }
                Ok(())
            };
            drive(&mut st, therm, &mut series)?;
            let (a0, p0) = (st.accepted, st.proposed);
            drive(&mut st, config.sweeps as u64, &mut series)?;
            let rate = (st.accepted - a0) as f64 / (st.proposed - p0) as f64;
            Ok((st, series, rate))
        })
        .collect();
    let per_chain: Vec<_> = per_chain.into_iter().collect::<Result<_>>()?;
    let mut results = Vec::with_capacity(n_obs);
    for k in 0..n_obs {
        let series: Vec<Vec<f64>> = per_chain.iter().map(|(_, s, _)| s[k].clone()).collect();
        let (mean, analysis) = analyze(&series)?;
        results.push(ObservableResult {
            mean,
            std_error: analysis.jackknife_variance.sqrt(),
            r_hat: r_hat(&series),
            analysis,
        });
    }
    Ok(McRun {
        undersampled: results.iter().any(|r| r.analysis.undersampled),
        observables: results,
        acceptance: per_chain.iter().map(|(_, _, r)| *r).collect(),
        widths: per_chain.iter().map(|(s, _, _)| s.width).collect(),
        chains: config.chains,
        sweeps: config.sweeps,
        therm_sweeps: therm,
        seed: config.seed,
    })
}

const MAGIC: &[u8; 8] = b"EQFTCHK\0";
const VERSION: u32 = 1;
const HEADER: usize = 8 + 4 + 8 * 6 + 8;

pub fn encode_state(state: &ChainState) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 8 * state.field.len() + 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [state.seed, state.chain, state.sweep, state.width.to_bits(), state.accepted, state.proposed] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(state.field.len() as u64).to_le_bytes());
    for v in state.field.values() {
        out.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn decode_state(bytes: &[u8]) -> Result<ChainState> {
    if bytes.len() < HEADER + 32 {
        return Err(Error::Integrity(format!("checkpoint is {} bytes, shorter than a header", bytes.len())));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Integrity("checksum mismatch".into()));
    }
    if &body[..8] != MAGIC {
        return Err(Error::Integrity("not a chain checkpoint".into()));
    }
    let word = |i: usize| u64::from_le_bytes(body[12 + 8 * i..20 + 8 * i].try_into().expect("8 bytes"));
    let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Integrity(format!("unsupported checkpoint version {version}")));
    }
    let n = word(6) as usize;
    if body.len() != HEADER + 8 * n {
        return Err(Error::Integrity(format!("field length {n} disagrees with file size")));
    }
    let field = body[HEADER..]
        .chunks_exact(8)
        .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect();
    Ok(ChainState {
        seed: word(0),
        chain: word(1),
        sweep: word(2),
        width: f64::from_bits(word(3)),
        accepted: word(4),
        proposed: word(5),
        field: FieldConfiguration::new(field),
    })
}

/// Writes via a temporary sibling and a rename, so a crash never leaves a
/// half-written checkpoint under the final name.
pub fn checkpoint(state: &ChainState, path: &Path) -> Result<()> {
    let tmp = path.with_extension("partial");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&encode_state(state))?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn restore(path: &Path) -> Result<ChainState> {
    decode_state(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interaction::InteractionPolynomial;
    use crate::lattice::{Boundary, LatticeGeometry};
    use crate::quadrature::integrate;

    fn model(ext: &[usize], b: Boundary, lambda: f64) -> (CovarianceOperator, WickAction) {
        let g = LatticeGeometry::new(ext.len(), ext, 1.0, b).unwrap();
        let cov = CovarianceOperator::new(&g, 1.0).unwrap();
        let p = if lambda == 0.0 {
            InteractionPolynomial::zero()
        } else {
            InteractionPolynomial::quartic(lambda).unwrap()
        };
        let w = WickAction::full(&cov, &p).unwrap();
        (cov, w)
    }

    #[test]
    fn local_delta_matches_global_action() {
        let (cov, w) = model(&[3, 4], Boundary::Dirichlet, 0.3);
        let local = LocalAction::new(&cov, &w).unwrap();
        let total = |phi: &[f64]| {
            let q = cov.apply_operator(phi);
            0.5 * phi.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() - w.evaluate_values(phi)
        };
        let phi: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        for site in [0, 5, 11] {
            let mut moved = phi.clone();
            moved[site] += 0.37;
            let expect = total(&moved) - total(&phi);
            assert!((local.delta(&phi, site, moved[site]) - expect).abs() < 1e-12);
        }
        // periodic extent 2: both neighbor slots hold the same site
        for ext in [[2usize, 3]] {
            let (cov, w) = model(&ext, Boundary::Periodic, 0.2);
            let local = LocalAction::new(&cov, &w).unwrap();
            let n = cov.num_sites();
            let total = |phi: &[f64]| {
                let q = cov.apply_operator(phi);
                0.5 * phi.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() - w.evaluate_values(phi)
            };
            let phi: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).cos()).collect();
            let mut moved = phi.clone();
            moved[1] -= 0.5;
            let expect = total(&moved) - total(&phi);
            assert!((local.delta(&phi, 1, moved[1]) - expect).abs() < 1e-12, "{ext:?}");
        }
    }

    #[test]
    fn detailed_balance_single_site() {
        // site 0 of a two-site chain with its neighbor pinned at 0
        let (cov, w) = model(&[2], Boundary::Dirichlet, 0.5);
        let local = LocalAction::new(&cov, &w).unwrap();
        let s = |x: f64| local.delta(&[0.0, 0.0], 0, x);
        let norm = integrate(|x| (-s(x)).exp(), -12.0, 12.0, 1e-13, 1e-13).unwrap();
        let pi = |x: f64| (-s(x)).exp() / norm;
        let width = 1.2;
        for k in -20..=20 {
            let y = k as f64 * 0.15;
            let inflow = integrate(|x| pi(x) * local.acceptance(&[x, 0.0], 0, y), y - width, y + width, 1e-12, 1e-12)
                .unwrap()
                / (2.0 * width);
            let leave = integrate(|x| local.acceptance(&[y, 0.0], 0, x), y - width, y + width, 1e-12, 1e-12)
                .unwrap()
                / (2.0 * width);
            let after = inflow + pi(y) * (1.0 - leave);
            assert!((after - pi(y)).abs() < 1e-3, "y = {y}: {after} vs {}", pi(y));
        }
    }

    #[test]
    fn small_width_accepts_everything() {
        let (cov, w) = model(&[4, 4], Boundary::Periodic, 0.1);
        let local = LocalAction::new(&cov, &w).unwrap();
        let mut st = ChainState::new(1, 0, 16, 1.0);
        for _ in 0..20 {
            metropolis_sweep(&mut st, &local, 1.0).unwrap();
        }
        let rate = metropolis_sweep(&mut st, &local, 1e-6).unwrap();
        assert!(rate > 0.99);
        assert!(metropolis_sweep(&mut st, &local, 0.0).is_err());
    }

    #[test]
    fn free_field_two_point() {
        let (cov, w) = model(&[4, 4], Boundary::Periodic, 0.0);
        let local = LocalAction::new(&cov, &w).unwrap();
        let config = McConfig { chains: 4, sweeps: 20_000, seed: 17, ..McConfig::default() };
        let run = run_chains(&local, &config, 2, |phi, o| {
            o[0] = phi[0] * phi[1];
            o[1] = phi[5] * phi[5];
        })
        .unwrap();
        for (r, exact) in run.observables.iter().zip([cov.entry(0, 1), cov.entry(5, 5)]) {
            assert!((r.mean - exact).abs() <= 3.0 * r.std_error, "{r:?} vs {exact}");
            assert!(r.r_hat.unwrap() < 1.1);
        }
        assert!(run.acceptance.iter().all(|&a| (0.35..0.65).contains(&a)), "{:?}", run.acceptance);
        let again = run_chains(&local, &config, 2, |phi, o| {
            o[0] = phi[0] * phi[1];
            o[1] = phi[5] * phi[5];
        })
        .unwrap();
        assert_eq!(run.observables[0].mean, again.observables[0].mean);
    }

    #[test]
    fn checkpointed_run_matches_plain_run() {
        let (cov, w) = model(&[3, 3], Boundary::Dirichlet, 0.1);
        let local = LocalAction::new(&cov, &w).unwrap();
        let config = McConfig { chains: 2, sweeps: 500, seed: 3, ..McConfig::default() };
        let dir = tempfile::tempdir().unwrap();
        let plan = CheckpointPlan { every: 64, dir: dir.path().join("chk") };
        let obs = |phi: &[f64], o: &mut [f64]| o[0] = phi[4] * phi[4];
        let plain = run_chains(&local, &config, 1, obs).unwrap();
        let saved = run_chains_with(&local, &config, 1, obs, Some(&plan)).unwrap();
        assert_eq!(plain.observables[0].mean, saved.observables[0].mean);
        for c in 0..2 {
            let st = restore(&plan.path(c)).unwrap();
            assert_eq!(st.chain, c);
            // last multiple of 64 before the end
            assert_eq!(st.sweep, 448);
        }
        let zero = CheckpointPlan { every: 0, ..plan };
        assert!(run_chains_with(&local, &config, 1, obs, Some(&zero)).is_err());
    }

    #[test]
    fn binning_flags_short_correlated_series() {
        let white: Vec<f64> = (0..4096).map(|i| ((i * 7919) % 101) as f64 / 101.0 - 0.5).collect();
        let (_, a) = analyze(&[white]).unwrap();
        assert!(!a.undersampled && a.jackknife_variance >= 0.0);
        // a slow ramp never plateaus
        let ramp: Vec<f64> = (0..4096).map(|i| (i as f64 / 4096.0 * 3.0).sin()).collect();
        assert!(analyze(&[ramp]).unwrap().1.undersampled);
        assert!(analyze(&[vec![1.0; 10]]).is_err());
    }

    #[test]
    fn checkpoint_round_trip_and_resume() {
        let (cov, w) = model(&[4, 4], Boundary::Periodic, 0.2);
        let local = LocalAction::new(&cov, &w).unwrap();
        let obs = |phi: &[f64], o: &mut [f64]| o[0] = phi[0] * phi[3];
        let mut straight = ChainState::new(9, 2, 16, 0.8);
        let mut s1 = Vec::new();
        advance_chain(&mut straight, &local, 20, 100, 1, &obs, &mut s1).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.ckpt");
        let mut resumed = ChainState::new(9, 2, 16, 0.8);
        let mut s2 = Vec::new();
        advance_chain(&mut resumed, &local, 20, 50, 1, &obs, &mut s2).unwrap();
        checkpoint(&resumed, &path).unwrap();
        let mut back = restore(&path).unwrap();
        assert_eq!(back, resumed);
        assert_eq!(encode_state(&back), std::fs::read(&path).unwrap());
        advance_chain(&mut back, &local, 20, 100, 1, &obs, &mut s2).unwrap();
        assert_eq!(back, straight);
        assert_eq!(s1, s2);

        let bytes = std::fs::read(&path).unwrap();
        assert!(matches!(decode_state(&bytes[..bytes.len() - 5]), Err(Error::Integrity(_))));
        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert!(matches!(decode_state(&flipped), Err(Error::Integrity(_))));
        assert!(matches!(decode_state(&bytes[..10]), Err(Error::Integrity(_))));
    }

    #[test]
    fn config_validation() {
        let bad = McConfig { therm_frac: 1.0, ..McConfig::default() };
        assert!(bad.validate().is_err());
        let short = McConfig { sweeps: 20, ..McConfig::default() };
        assert!(short.validate().is_err());
    }
}
