use std::path::PathBuf;

use euclid_core::acceptance::{self, Measurement, Profile, Relation};
use euclid_core::covariance::{continuum_schwinger, lattice_vs_continuum_refinement, CovarianceOperator};
use euclid_core::gaussian::{hafnian, hafnian_bruteforce, hypercontractivity_probe, GaussianMomentProblem, HAFNIAN_BRUTEFORCE_MAX};
use euclid_core::interaction::{
    free_moment, partition_function_mc, partition_function_quadrature, schwinger_function, Method,
    SamplingBudget, WickAction,
};
use euclid_core::lattice::Boundary;
use euclid_core::markov::{conditional_covariance_check, dilation_semigroup, markov_check, one_particle_hamiltonian};
use euclid_core::mc::CheckpointPlan;
use euclid_core::transfer::{
    build_transfer_with, energy_density_scan, fkn_check, fkn_default_vectors, ground_state, nelson_symmetry_check,
    semigroup_norm, StripSpec,
};
use euclid_core::{Error, Result};
use serde_json::json;

use crate::config::RunConfig;
use crate::report::Table;
use crate::Command;

pub struct Outcome {
    pub results: serde_json::Value,
    pub table: Option<Table>,
    pub verdicts: Vec<Measurement>,
}

impl Outcome {
    fn new(results: serde_json::Value) -> Self {
        Outcome { results, table: None, verdicts: Vec::new() }
    }

    fn check(&mut self, label: impl Into<String>, value: f64, relation: Relation, bound: f64) {
        self.verdicts.push(Measurement::new(label, value, relation, bound));
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("results serialize")
}

pub fn run(command: &Command, config: &RunConfig, seed: u64) -> Result<Outcome> {
    let mass = config.model.mass_physical_units;
    let spacing = config.geometry.spacing_physical_units;
    let units = json!({
        "mass_physical_units": mass,
        "spacing_physical_units": spacing,
        "mass_lattice_units": mass * spacing,
    });
    let mut out = match command {
        Command::Propagator { refine_at } => propagator(config, *refine_at)?,
        Command::MarkovCheck { axis, plane } => markov(config, *axis, *plane)?,
        Command::SemigroupCheck { max_t } => semigroup(config, *max_t)?,
        Command::Hafnian { sites } => hafnian_cmd(config, sites)?,
        Command::HyperCheck { norm, p, q, trials } => hyper(*norm, *p, *q, *trials, seed)?,
        Command::Partition => partition(config, seed)?,
        Command::Schwinger { points } => schwinger(config, points, seed)?,
        Command::Transfer { n_s, fkn_steps, norm_steps } => transfer(config, *n_s, *fkn_steps, *norm_steps)?,
        Command::Nelson { l, t, spacing_time } => nelson(config, *l, *t, spacing_time.unwrap_or(spacing))?,
        Command::EnergyDensity { ells } => energy_density(config, ells)?,
        Command::VerifyAll { quick, only } => verify_all(*quick, only.as_deref(), seed)?,
    };
    if let serde_json::Value::Object(m) = &mut out.results {
        m.insert("units".into(), units);
    }
    Ok(out)
}

fn covariance(config: &RunConfig) -> Result<CovarianceOperator> {
    CovarianceOperator::new(&config.geometry()?, config.model.mass_physical_units)
}

fn propagator(config: &RunConfig, refine_at: Option<f64>) -> Result<Outcome> {
    let cov = covariance(config)?;
    let g = cov.geometry();
    let a = g.spacing();
    let m = cov.mass();
    let dim = g.dim();
    let reach = match g.boundary() {
        Boundary::Periodic => g.extent(0) / 2,
        Boundary::Dirichlet => g.extent(0) - 1,
    };
    let with_continuum = dim <= 2;
    let mut headers = vec!["separation_lattice_units".to_string(), "separation_physical_units".into(), "lattice_covariance".into()];
    if with_continuum {
        headers.push("continuum_schwinger".into());
    }
    let column = cov.column(0);
    let mut rows = Vec::new();
    let mut min_c = f64::INFINITY;
    // the 2D kernel is singular at the origin
    for n in usize::from(dim == 2)..=reach {
        let mut coords = vec![0; dim];
        coords[0] = n;
        let c = column[g.index(&coords)];
        min_c = min_c.min(c);
        let mut row = vec![n as f64, n as f64 * a, c];
        if with_continuum {
            let mut x = vec![0.0; dim];
            x[0] = n as f64 * a;
            row.push(continuum_schwinger(&x, m)?);
        }
        rows.push(row);
    }
    let mut out = Outcome::new(json!({ "rows": rows.len(), "boundary": g.boundary() }));
    out.check("min C(x, 0)", min_c, Relation::Above, 0.0);
    if let Some(sep) = refine_at {
        let refinement = lattice_vs_continuum_refinement(m, 40.0, sep, 1, &[0.5, 0.25, 0.125])?;
        for w in refinement.windows(2) {
            out.check(format!("refinement error at a = {}", w[1].spacing), w[1].error, Relation::Below, w[0].error);
        }
        if let serde_json::Value::Object(map) = &mut out.results {
            map.insert("refinement".into(), to_json(&refinement));
        }
    }
    out.table = Some(Table { headers, rows });
    Ok(out)
}

fn markov(config: &RunConfig, axis: Option<usize>, plane: Option<usize>) -> Result<Outcome> {
    let cov = covariance(config)?;
    let g = cov.geometry().clone();
    let axes: Vec<usize> = match axis {
        Some(a) if a >= g.dim() => return Err(Error::OutOfRange(format!("axis {a} in dim {}", g.dim()))),
        Some(a) => vec![a],
        None => (0..g.dim()).collect(),
    };
    let separating = g.boundary() == Boundary::Dirichlet;
    let mut rows = Vec::new();
    let mut out = Outcome::new(json!({}));
    for &ax in &axes {
        let planes: Vec<usize> = match plane {
            Some(p) => vec![p],
            None => (1..g.extent(ax) - 1).collect(),
        };
        for p in planes {
            let r = markov_check(&cov, ax, p)?;
            let cond = conditional_covariance_check(&cov, ax, p)?;
            if separating {
                out.check(format!("axis {ax} plane {p}: projection residual"), r.max(), Relation::AtMost, 1e-8);
                out.check(format!("axis {ax} plane {p}: conditional covariance"), cond, Relation::AtMost, 1e-8);
            }
            rows.push(json!({ "axis": ax, "plane": p, "ab": r.ab, "ba": r.ba, "conditional_covariance": cond }));
        }
    }
    out.results = json!({
        "planes": rows,
        "verdicts_apply": separating,
        "note": if separating { "" } else { "one hyperplane does not separate a periodic lattice; residuals carry no verdict" },
    });
    Ok(out)
}

fn semigroup(config: &RunConfig, max_t: usize) -> Result<Outcome> {
    let cov = covariance(config)?;
    let p = (0..=2 * max_t).map(|t| dilation_semigroup(&cov, t)).collect::<Result<Vec<_>>>()?;
    let mut comp = 0.0f64;
    let mut sym = 0.0f64;
    for s in 1..=max_t {
        for t in 1..=max_t {
            comp = comp.max((&p[s] * &p[t] - &p[s + t]).amax());
        }
        sym = sym.max((&p[s] - p[s].transpose()).amax());
    }
    let spectrum = one_particle_hamiltonian(&cov)?;
    let min_omega = spectrum.modes.iter().map(|m| m.omega).fold(f64::INFINITY, f64::min);
    let mut out = Outcome::new(json!({
        "composition_residual": comp,
        "symmetry_residual": sym,
        "omega_physical_units": spectrum.modes,
        "m_eff_physical_units": spectrum.m_eff,
    }));
    out.check("max |p(s)p(t) - p(s+t)|", comp, Relation::AtMost, 1e-8);
    out.check("max |p(t) - p(t)^T|", sym, Relation::AtMost, 1e-12);
    out.check("min omega_lat", min_omega, Relation::Above, 0.0);
    Ok(out)
}

fn hafnian_cmd(config: &RunConfig, sites: &[usize]) -> Result<Outcome> {
    let cov = covariance(config)?;
    let problem = GaussianMomentProblem::from_sites(&cov, sites)?;
    let value = hafnian(problem.gram())?;
    let mut out = Outcome::new(json!({ "sites": sites, "moment": value }));
    if sites.len() <= HAFNIAN_BRUTEFORCE_MAX {
        let brute = hafnian_bruteforce(problem.gram())?;
        let rel = if brute == 0.0 { value.abs() } else { (value - brute).abs() / brute.abs() };
        out.check("recursion vs matching enumeration, relative", rel, Relation::AtMost, 1e-12);
        if let serde_json::Value::Object(m) = &mut out.results {
            m.insert("matching_enumeration".into(), json!(brute));
        }
    }
    Ok(out)
}

fn hyper(norm: f64, p: f64, q: f64, trials: usize, seed: u64) -> Result<Outcome> {
    let r = hypercontractivity_probe(norm, p, q, trials, seed)?;
    let mut out = Outcome::new(to_json(&r));
    out.check("positivity preserved", f64::from(u8::from(r.positivity_preserved)), Relation::AtLeast, 1.0);
    out.check("mean preservation defect", r.mean_defect, Relation::AtMost, 1e-10);
    if r.norm_sq <= r.threshold {
        out.check("max norm ratio", r.max_ratio, Relation::AtMost, 1.0 + 1e-6);
    }
    Ok(out)
}

fn partition(config: &RunConfig, seed: u64) -> Result<Outcome> {
    let cov = covariance(config)?;
    let action = WickAction::full(&cov, &config.polynomial()?)?;
    match config.method {
        Method::Quadrature => {
            let q = partition_function_quadrature(&cov, &action)?;
            let mut out = Outcome::new(json!({
                "Z": q.value,
                "refinement_delta": q.refinement_delta,
                "nodes": q.nodes,
                "jensen_ok": q.value >= 1.0 - 1e-12,
                "method": "quadrature",
            }));
            out.check("Z", q.value, Relation::AtLeast, 1.0 - 1e-12);
            Ok(out)
        }
        Method::Reweight => {
            let mc = partition_function_mc(&cov, &action, config.budget.samples, seed)?;
            let mut out = Outcome::new(json!({
                "Z": mc.z,
                "std_error": mc.std_error,
                "effective_samples": mc.effective_samples,
                "high_variance": mc.high_variance,
                "jensen_ok": mc.jensen_ok,
                "samples": mc.samples,
                "method": "reweight",
            }));
            out.check("Z + 3 sigma", mc.z + 3.0 * mc.std_error, Relation::AtLeast, 1.0);
            Ok(out)
        }
        Method::Mcmc => Err(Error::InvalidParameter(
            "Z is a free-measure expectation; use --method reweight or quadrature".into(),
        )),
    }
}

fn checkpoint_plan(config: &RunConfig) -> Option<CheckpointPlan> {
    let every = config.budget.checkpoint_every;
    if every == 0 {
        return None;
    }
    let dir = match &config.output {
        Some(p) => {
            let mut s = p.clone().into_os_string();
            s.push(".checkpoints");
            PathBuf::from(s)
        }
        None => PathBuf::from("euclid-qft-checkpoints"),
    };
    Some(CheckpointPlan { every, dir })
}

fn schwinger(config: &RunConfig, points: &[usize], seed: u64) -> Result<Outcome> {
    let cov = covariance(config)?;
    let action = WickAction::full(&cov, &config.polynomial()?)?;
    let b = &config.budget;
    let budget = SamplingBudget {
        samples: if config.method == Method::Mcmc { b.sweeps } else { b.samples },
        seed,
        chains: b.chains,
        therm_frac: b.therm_frac,
        checkpoint: checkpoint_plan(config),
    };
    let est = schwinger_function(&cov, &action, points, config.method, &budget)?;
    let mut results = to_json(&est);
    if let serde_json::Value::Object(m) = &mut results {
        m.insert("free_prediction".into(), json!(free_moment(&cov, points)?));
        if let Some(p) = &budget.checkpoint {
            m.insert("checkpoint_dir".into(), json!(p.dir));
        }
    }
    Ok(Outcome::new(results))
}

fn strip(config: &RunConfig, n_s: usize) -> StripSpec {
    StripSpec {
        nodes: config.budget.quadrature_nodes,
        ..StripSpec::new(n_s, config.model.mass_physical_units, config.geometry.spacing_physical_units)
    }
}

fn transfer(config: &RunConfig, n_s: usize, fkn_steps: Option<usize>, norm_steps: usize) -> Result<Outcome> {
    let p = config.polynomial()?;
    let tm = build_transfer_with(&strip(config, n_s), &p)?;
    let gs = ground_state(&tm)?;
    let sn = semigroup_norm(&tm, &gs, norm_steps)?;
    let mut out = Outcome::new(json!({
        "n_s": n_s,
        "nodes_per_site": tm.spec.nodes,
        "dimension": tm.dim(),
        "spatial_boundary": "dirichlet",
        "energy_physical_units": gs.energy,
        "gap_physical_units": gs.gap,
        "rho": gs.rho,
        "rho_free": gs.rho_free,
        "norm_l1": gs.norm_l1,
        "norm_l2": gs.norm_l2,
        "overlap_with_free_vacuum": gs.overlap,
        "min_component": gs.min_component,
        "symmetry_defect": tm.symmetry_defect(),
        "semigroup_norm": sn,
    }));
    out.check("min Omega component", gs.min_component, Relation::Above, 0.0);
    out.check("| ||Omega||_2 - 1 |", (gs.norm_l2 - 1.0).abs(), Relation::AtMost, 1e-12);
    out.check("||e^(-tH)|| vs e^(-tE), relative", sn.relative_defect, Relation::AtMost, 1e-10);
    out.check("T symmetry defect", tm.symmetry_defect(), Relation::AtMost, 1e-12);
    if p.is_zero() {
        out.check("|E| at P = 0", gs.energy.abs(), Relation::AtMost, 0.0);
    } else {
        out.check("E", gs.energy, Relation::Below, 0.0);
        out.check("||Omega||_1", gs.norm_l1, Relation::Below, 1.0);
        out.check("<Omega, Omega_0>", gs.overlap, Relation::Below, 1.0);
    }
    if let Some(n_t) = fkn_steps {
        let (u, v) = fkn_default_vectors(&tm);
        let r = fkn_check(&tm, n_t, &u, &v)?;
        out.check("FKN relative residual", r.residual, Relation::AtMost, 1e-8);
        if let serde_json::Value::Object(m) = &mut out.results {
            m.insert("fkn".into(), to_json(&r));
        }
    }
    Ok(out)
}

fn nelson(config: &RunConfig, l: usize, t: usize, spacing_time: f64) -> Result<Outcome> {
    let r = nelson_symmetry_check(
        l,
        t,
        config.model.mass_physical_units,
        config.geometry.spacing_physical_units,
        spacing_time,
        &config.polynomial()?,
        config.budget.quadrature_nodes,
    )?;
    let mut out = Outcome::new(to_json(&r));
    out.check("relative residual", r.residual, Relation::AtMost, 1e-8);
    Ok(out)
}

fn energy_density(config: &RunConfig, ells: &[usize]) -> Result<Outcome> {
    let p = config.polynomial()?;
    let a = config.geometry.spacing_physical_units;
    let scan = energy_density_scan(ells, config.model.mass_physical_units, a, &p, config.budget.quadrature_nodes)?;
    let mut out = Outcome::new(json!({
        "differences": scan.differences,
        "differences_shrinking": scan.differences_shrinking,
        "spatial_boundary": "dirichlet",
    }));
    for r in &scan.rows {
        if p.is_zero() {
            out.check(format!("|alpha| at ell = {}", r.ell), r.alpha.abs(), Relation::AtMost, 0.0);
        } else {
            out.check(format!("alpha at ell = {}", r.ell), r.alpha, Relation::Below, 0.0);
        }
    }
    out.table = Some(Table {
        headers: vec!["ell".into(), "energy_physical_units".into(), "alpha_physical_units".into()],
        rows: scan.rows.iter().map(|r| vec![r.ell as f64, r.energy, r.alpha]).collect(),
    });
    Ok(out)
}

fn verify_all(quick: bool, only: Option<&[u8]>, seed: u64) -> Result<Outcome> {
    let profile = if quick { Profile::Quick } else { Profile::Full };
    let ids: Vec<u8> = match only {
        Some(ids) => {
            if let Some(bad) = ids.iter().find(|id| !acceptance::CRITERIA.iter().any(|c| c.0 == **id)) {
                return Err(Error::InvalidParameter(format!("no acceptance criterion {bad}")));
            }
            ids.to_vec()
        }
        None => acceptance::CRITERIA.iter().map(|c| c.0).collect(),
    };
    let mut reports = Vec::new();
    for id in ids {
        let r = acceptance::run_criterion(id, profile, seed);
        eprintln!("{}", r.line());
        reports.push(r);
    }
    let mut out = Outcome::new(json!({ "profile": profile, "criteria": reports }));
    for r in &reports {
        out.check(format!("criterion {} {}", r.id, r.name), f64::from(u8::from(r.pass)), Relation::AtLeast, 1.0);
    }
    Ok(out)
}
