//! Experiment execution. Each experiment yields CSV tables, a JSON result
//! and the contracts it asserts.

use std::collections::BTreeMap;

use bondloc_core::constructions::{
    laminate_energy_decay, rigidity_reconstruct, sawtooth_energy, DecaySweep,
};
use bondloc_core::density::{density_bounds, zero_set_predicate};
use bondloc_core::solver::{
    default_starts, linearization_experiment, localization_experiment, minimize_multistart, LocalizationSetup,
};
use bondloc_core::{
    DirichletProblem, LocalizedEnergy, Mat, OptimizerSettings, SphereQuadrature, SubdomainMask, VectorField,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::battery;
use crate::config::{affine_parts, Experiment, ScenarioConfig};
use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct Contract {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Contract {
    fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(file: &str, header: &[&str]) -> Self {
        Self {
            file: file.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(|e| CliError::Numerical(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| CliError::Numerical(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Numerical(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub experiment: Experiment,
    pub results: Value,
    pub tables: Vec<Table>,
    /// Extra files written verbatim (name, contents).
    pub files: Vec<(String, String)>,
    pub contracts: Vec<Contract>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.contracts.iter().all(|c| c.pass)
    }

    pub fn summary(&self, seed: u64) -> Value {
        json!({
            "experiment": self.experiment.name(),
            "seed": seed,
            "pass": self.pass(),
            "contracts": self.contracts,
            "results": self.results,
        })
    }
}

fn f(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map(f).unwrap_or_default()
}

/// Validates the configuration and runs its experiment.
pub fn execute(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    match cfg.experiment {
        Experiment::Energy => energy(cfg),
        Experiment::Density => density(cfg),
        Experiment::Sawtooth => sawtooth(cfg),
        Experiment::Laminate => laminate(cfg),
        Experiment::Rigidity => rigidity(cfg),
        Experiment::Minimize => minimize(cfg),
        Experiment::Linearize => linearize(cfg),
        Experiment::Localize => localize(cfg),
        Experiment::Checks => checks(cfg),
    }
}

fn energy(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let d = cfg.domain()?;
    let kernel = cfg.kernel()?.kernel(d.dim)?;
    let phi = cfg.potential()?.clone();
    let field = cfg.field.as_ref().expect("validated");
    let eval = |cells: usize| -> Result<bondloc_core::EnergyReport, CliError> {
        let grid = d.grid_with(cells)?;
        let mask = d.mask(grid)?;
        let v = field.sample(&grid)?;
        let e = LocalizedEnergy::new(mask, kernel.clone(), phi.clone(), cfg.m).map_err(CliError::numerical)?;
        e.energy(&v).map_err(CliError::numerical)
    };
    let mut rep = eval(d.cells)?;
    if cfg.energy.as_ref().map(|e| e.estimate_error).unwrap_or(false) {
        let coarse = eval(d.cells / 2)?;
        rep = rep.with_estimate(&coarse);
    }
    let mut t = Table::new("energy.csv", &["value", "pair_count", "skipped_diagonal", "h", "est_error"]);
    t.push(vec![
        f(rep.value),
        rep.pair_count.to_string(),
        rep.skipped_diagonal.to_string(),
        f(rep.h),
        opt(rep.est_error),
    ]);
    let ok = rep.value.is_finite() && rep.value >= 0.0;
    Ok(Outcome {
        experiment: cfg.experiment,
        results: serde_json::to_value(&rep).expect("report serializes"),
        tables: vec![t],
        files: vec![],
        contracts: vec![Contract::new("finite_nonnegative", ok, format!("value {}", rep.value))],
    })
}

fn density(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let b = cfg.density.as_ref().expect("validated");
    let phi = cfg.potential()?.clone();
    let dims: Vec<usize> = b.matrices.iter().map(|m| (m.len() as f64).sqrt().round() as usize).collect();
    if dims.iter().any(|d| *d != dims[0]) {
        return Err(CliError::Validation("density matrices must share one dimension".into()));
    }
    let dim = dims[0];
    let q = SphereQuadrature::new(dim, b.order).map_err(CliError::validation)?;
    let search = b.laminate.then_some(&b.search);
    let bounds = b
        .matrices
        .iter()
        .map(|m| {
            let fm = Mat::from_row_major(dim, m).map_err(CliError::validation)?;
            density_bounds(&fm, &phi, cfg.m, &q, b.order, search).map_err(CliError::numerical)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut header: Vec<String> = Vec::new();
    for i in 1..=dim {
        for j in 1..=dim {
            header.push(format!("f{i}{j}"));
        }
    }
    for i in 1..=dim {
        header.push(format!("s{i}"));
    }
    for h in ["lower", "tilde", "laminate_upper", "zero_set"] {
        header.push(h.into());
    }
    let mut t = Table {
        file: "density.csv".into(),
        header,
        rows: vec![],
    };
    let mut ordering = true;
    let mut zero_consistent = true;
    for bd in &bounds {
        let mut row: Vec<String> = bd.f.iter().map(|x| f(*x)).collect();
        row.extend(bd.singular_values.iter().map(|x| f(*x)));
        row.push(f(bd.lower));
        row.push(f(bd.tilde));
        row.push(opt(bd.laminate_upper));
        row.push(bd.zero_set.to_string());
        t.push(row);
        let lam = bd.laminate_upper.unwrap_or(bd.tilde);
        ordering &= bd.lower >= 0.0 && bd.lower <= lam + 1e-9 && lam <= bd.tilde + 1e-9;
        let smax = bd.singular_values.iter().cloned().fold(0.0, f64::max);
        if (smax - 1.0).abs() > 1e-6 {
            zero_consistent &= bd.zero_set == (bd.lower < 1e-10);
        }
        debug_assert_eq!(bd.zero_set, zero_set_predicate(&Mat::from_row_major(dim, &bd.f).unwrap()));
    }
    Ok(Outcome {
        experiment: cfg.experiment,
        results: json!({ "bounds": bounds }),
        tables: vec![t],
        files: vec![],
        contracts: vec![
            Contract::new("ordering", ordering, "0 <= lower <= laminate_upper <= tilde + 1e-9"),
            Contract::new("zero_set", zero_consistent, "zero_set <=> lower < 1e-10 away from sigma_max = 1"),
        ],
    })
}

fn sawtooth(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let b = cfg.sawtooth.as_ref().expect("validated");
    let reports = b
        .cases
        .par_iter()
        .map(|c| sawtooth_energy(c.teeth, c.delta, c.delta / b.h_ratio).map_err(CliError::numerical))
        .collect::<Result<Vec<_>, _>>()?;
    let mut t = Table::new(
        "sawtooth.csv",
        &["teeth", "delta", "h", "value", "closed_form", "rel_error", "in_regime", "pass"],
    );
    let mut ok = true;
    for r in &reports {
        let pass = r.matches.unwrap_or(true);
        ok &= pass;
        t.push(vec![
            r.n_teeth.to_string(),
            f(r.delta),
            f(r.report.h),
            f(r.report.value),
            f(r.closed_form),
            f(r.rel_error),
            r.in_regime.to_string(),
            match r.matches {
                Some(m) => m.to_string(),
                None => "unasserted".into(),
            },
        ]);
    }
    Ok(Outcome {
        experiment: cfg.experiment,
        results: json!({ "cases": reports }),
        tables: vec![t],
        files: vec![],
        contracts: vec![Contract::new(
            "closed_form",
            ok,
            "energy = (8/15) N delta within max(1%, 10h/delta) when delta <= 1/(4N)",
        )],
    })
}

fn laminate(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let b = cfg.laminate.as_ref().expect("validated");
    let sweep = DecaySweep {
        lambda: b.lambda.clone(),
        pairs: b.n.iter().cloned().zip(b.k.iter().cloned()).collect(),
        kernels: cfg.kernel()?.sequence(b.lambda.len())?,
        phi: cfg.potential()?.clone(),
        m: cfg.m,
        cells_per_horizon: b.cells_per_horizon,
        min_cells: b.min_cells,
        max_cells: b.max_cells,
    };
    let table = laminate_energy_decay(&sweep).map_err(CliError::numerical)?;
    let mut t = Table::new("laminate.csv", &["n", "k", "delta", "h", "energy"]);
    for r in &table.rows {
        t.push(vec![r.n.to_string(), r.k.to_string(), f(r.delta), f(r.h), f(r.energy)]);
    }
    let zero = table.rows.iter().all(|r| r.energy == 0.0);
    let pass = zero || (table.monotone && table.final_ratio < 0.01);
    Ok(Outcome {
        experiment: cfg.experiment,
        results: serde_json::to_value(&table).expect("table serializes"),
        tables: vec![t],
        files: vec![],
        contracts: vec![Contract::new(
            "monotone_decay",
            pass,
            format!("monotone {}, last/first {}", table.monotone, table.final_ratio),
        )],
    })
}

fn rigidity(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let b = cfg.rigidity.as_ref().expect("validated");
    let d = cfg.domain()?;
    let grid = d.grid()?;
    let centre = vec![0.5 * d.extent; 2];
    let trials = battery::isometry_trials(cfg.seed, b.trials, &grid, &centre, b.radius, b.noise)?;
    let mut t = Table::new(
        "rigidity.csv",
        &["trial", "angle", "reflect", "defect", "affine_residual", "isometry_residual", "rigid"],
    );
    let mut ok = true;
    for (i, r) in trials.iter().enumerate() {
        let rigid = r.defect <= b.tol && r.affine_residual <= b.tol && r.isometry_residual <= b.tol;
        ok &= rigid;
        t.push(vec![
            i.to_string(),
            f(r.angle),
            r.reflect.to_string(),
            f(r.defect),
            f(r.affine_residual),
            f(r.isometry_residual),
            rigid.to_string(),
        ]);
    }
    // a stretch must be flagged
    let stretch = VectorField::affine(grid, &Mat::scaled_identity(2, 2.0), &[0.0, 0.0]);
    let rec = rigidity_reconstruct(&stretch, &SubdomainMask::full(grid), &centre, b.radius, 200)
        .map_err(CliError::numerical)?;
    let flagged = !rec.is_rigid(b.tol);
    Ok(Outcome {
        experiment: cfg.experiment,
        results: json!({ "trials": trials, "stretch": rec }),
        tables: vec![t],
        files: vec![],
        contracts: vec![
            Contract::new("isometries_reconstructed", ok, format!("defect and residuals <= {}", b.tol)),
            Contract::new("stretch_flagged", flagged, format!("stretch residual {}", rec.isometry_residual)),
        ],
    })
}

fn minimize(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let b = cfg.minimize.as_ref().expect("validated");
    let d = cfg.domain()?;
    let grid = d.grid()?;
    let mask = d.mask(grid)?;
    let kernel = cfg.kernel()?.kernel(d.dim)?;
    let (fm, off) = affine_parts(d.dim, &b.g.matrix, b.g.offset.as_deref())?;
    let g = VectorField::affine(grid, &fm, &off);
    let e = LocalizedEnergy::new(mask, kernel, cfg.potential()?.clone(), cfg.m).map_err(CliError::numerical)?;
    let settings = b.settings.clone().unwrap_or_else(|| OptimizerSettings::for_dim(d.dim));
    let prob = DirichletProblem::new(e, g.clone(), settings).map_err(CliError::numerical)?;
    let affine = prob.energy().energy(&g).map_err(CliError::numerical)?.value;
    let starts = if b.multistart { default_starts(&prob) } else { vec![g.clone()] };
    let (res, start_energies) = minimize_multistart(&prob, &starts).map_err(CliError::numerical)?;
    let mut t = Table::new("minimize_trace.csv", &["iteration", "energy"]);
    for (i, e) in res.energies.iter().enumerate() {
        t.push(vec![i.to_string(), f(*e)]);
    }
    let feasible = prob
        .free_dofs()
        .iter()
        .enumerate()
        .all(|(k, free)| *free || res.v.values()[k].to_bits() == g.values()[k].to_bits());
    let descent = res.energies.windows(2).all(|w| w[1] < w[0]);
    let below = res.energy() <= affine;
    Ok(Outcome {
        experiment: cfg.experiment,
        results: json!({
            "energy": res.energy(),
            "affine_energy": affine,
            "iterations": res.iterations,
            "grad_norm": res.grad_norm,
            "converged": res.converged,
            "stalled": res.stalled,
            "start_energies": start_energies,
        }),
        tables: vec![t],
        files: vec![("minimizer.csv".into(), res.v.to_csv())],
        contracts: vec![
            Contract::new("feasible", feasible, "collar and exterior equal g bit for bit"),
            Contract::new("descent", descent, "energy trace strictly decreasing"),
            Contract::new("below_affine", below, format!("{} <= {}", res.energy(), affine)),
        ],
    })
}

fn linearize(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let b = cfg.linearize.as_ref().expect("validated");
    let d = cfg.domain()?;
    let grid = d.grid()?;
    let w = cfg.micro.as_ref().expect("validated").build(cfg.kernel()?.kernel(d.dim)?)?;
    let u = cfg.field.as_ref().expect("validated").sample(&grid)?;
    let load = b.load.as_ref().map(|l| VectorField::from_fn(grid, |_, out| out.copy_from_slice(l)));
    let table = linearization_experiment(&u, &w, cfg.m, load.as_ref(), &b.eps).map_err(CliError::numerical)?;
    let mut t = Table::new("linearize.csv", &["eps", "E_eps", "E0", "abs_err", "flagged"]);
    for r in &table.rows {
        t.push(vec![f(r.eps), opt(r.e_eps), f(r.e0), opt(r.abs_err), r.flagged.to_string()]);
    }
    let rate = table.exact || table.slope.map(|s| (0.8..=1.3).contains(&s)).unwrap_or(false);
    Ok(Outcome {
        experiment: cfg.experiment,
        results: serde_json::to_value(&table).expect("table serializes"),
        tables: vec![t],
        files: vec![],
        contracts: vec![Contract::new(
            "first_order_rate",
            rate,
            format!("slope {:?} (window [0.8, 1.3]), exact {}", table.slope, table.exact),
        )],
    })
}

fn localize(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let b = cfg.localize.as_ref().expect("validated");
    let d = cfg.domain()?;
    let (fm, off) = affine_parts(d.dim, &b.g.matrix, b.g.offset.as_deref())?;
    let setup = LocalizationSetup {
        dim: d.dim,
        extent: d.extent,
        margin: d.margin,
        collar: d.collar,
        ns: b.n.clone(),
        cells: b.cells.clone(),
        kernels: cfg.kernel()?.sequence(d.dim)?,
        phi: cfg.potential()?.clone(),
        m: cfg.m,
        settings: b.settings.clone().unwrap_or_else(|| OptimizerSettings::for_dim(d.dim)),
        bracket_c: b.bracket_c,
    };
    let g = move |x: &[f64], out: &mut [f64]| {
        let y = fm.apply(x);
        for k in 0..out.len() {
            out[k] = y[k] + off[k];
        }
    };
    let (trace, fields) = localization_experiment(&setup, &g).map_err(CliError::numerical)?;
    let mut t = Table::new(
        "localize.csv",
        &["n", "energy", "lp_dist_prev", "lower_int", "tilde_int", "delta", "h", "within_bracket", "converged"],
    );
    for r in &trace.rows {
        t.push(vec![
            r.n.to_string(),
            f(r.energy),
            opt(r.lp_dist_prev),
            f(r.lower_int),
            f(r.tilde_int),
            f(r.delta),
            f(r.h),
            r.within_bracket.to_string(),
            r.converged.to_string(),
        ]);
    }
    let last = fields.last().expect("at least one n");
    Ok(Outcome {
        experiment: cfg.experiment,
        results: serde_json::to_value(&trace).expect("trace serializes"),
        tables: vec![t],
        files: vec![("terminal_minimizer.csv".into(), last.to_csv())],
        contracts: vec![Contract::new(
            "density_bracket",
            trace.bracket_pass,
            "terminal energy within [lower_int - tol, tilde_int + tol]",
        )],
    })
}

fn checks(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let b = cfg.checks.as_ref().expect("validated");
    let mut rows = battery::frame_check(cfg.seed, b.frame_trials, 128, &bondloc_core::LaminateSearch::coarse())?;
    rows.extend(battery::zero_set_check(cfg.seed, b.zero_set_trials)?);
    let grid = bondloc_core::Grid::new(2, &[-1.0, -1.0], &[2.0, 2.0], &[40, 40]).map_err(CliError::numerical)?;
    for (i, r) in battery::isometry_trials(cfg.seed, b.rigidity_trials, &grid, &[0.0, 0.0], 0.5, 0.0)?
        .iter()
        .enumerate()
    {
        let v = r.defect.max(r.affine_residual).max(r.isometry_residual);
        rows.push(battery::CheckRow {
            check: "rigidity".into(),
            trial: i,
            value: v,
            pass: v <= 1e-12,
        });
    }
    for (i, g) in battery::gradient_trials(cfg.seed, b.gradient_trials)?.iter().enumerate() {
        rows.push(battery::CheckRow {
            check: format!("gradient_d{}_m{}_p{}", g.dim, g.m, g.phi_exponent),
            trial: i,
            value: g.rel_error,
            pass: g.rel_error <= 1e-5,
        });
    }
    let mut t = Table::new("checks.csv", &["check", "trial", "value", "pass"]);
    let mut by_check: BTreeMap<String, (usize, usize, f64)> = BTreeMap::new();
    for r in &rows {
        t.push(vec![r.check.clone(), r.trial.to_string(), f(r.value), r.pass.to_string()]);
        let family = r.check.split("_d").next().unwrap_or(&r.check).to_string();
        let e = by_check.entry(family).or_insert((0, 0, 0.0));
        e.0 += 1;
        e.1 += r.pass as usize;
        e.2 = e.2.max(r.value);
    }
    let contracts = by_check
        .iter()
        .map(|(k, (n, p, worst))| Contract::new(k, n == p, format!("{p}/{n} passed, worst value {worst:e}")))
        .collect();
    Ok(Outcome {
        experiment: cfg.experiment,
        results: json!({ "rows": rows.len() }),
        tables: vec![t],
        files: vec![],
        contracts,
    })
}
