//! Acceptance suite. Prints one PASS/FAIL line per criterion with the
//! measured values and exits nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use bondloc_cli::battery;
use bondloc_core::constructions::{laminate_energy_decay, sawtooth_energy, DecaySweep};
use bondloc_core::density::{density_laminate_upper, density_lower, density_tilde, LaminateSearch};
use bondloc_core::kernels::{check_assumption_a, check_density_condition};
use bondloc_core::materials::catalog_potential;
use bondloc_core::solver::linearization_experiment;
use bondloc_core::{Grid, Kernel, KernelSequence, Mat, Potential, SphereQuadrature, VectorField};

const SEED: u64 = 42;

// pinned tolerances
const SAWTOOTH_REL: f64 = 0.01;
const SAWTOOTH_SECONDS: f64 = 10.0;
const CLOSED_FORM_REL: f64 = 1e-9;
const CLOSED_FORM_SECONDS: f64 = 1.0;
const GAP_ABS: f64 = 0.01;
const GAP_SECONDS: f64 = 30.0;
const ZERO_SET_THRESHOLD: f64 = 1e-10;
const DECAY_FINAL_RATIO: f64 = 0.01;
const SLOPE_WINDOW: (f64, f64) = (0.8, 1.3);
const EXACT_ABS: f64 = 1e-12;
const GRADIENT_REL: f64 = 1e-5;
const RIGIDITY_ABS: f64 = 1e-12;
const MASS_ABS: f64 = 1e-6;
const FRAME_ABS: f64 = 1e-10;

struct Line {
    id: &'static str,
    pass: bool,
}

fn report(lines: &mut Vec<Line>, id: &'static str, pass: bool, detail: String) {
    println!("{} criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    lines.push(Line { id, pass });
}

fn sawtooth(lines: &mut Vec<Line>) {
    let cases = [(1usize, 1e-2), (10, 1e-3), (16, 0.25 / 256.0)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, delta) in cases {
        let t = Instant::now();
        let r = sawtooth_energy(n, delta, delta / 32.0).expect("sawtooth runs");
        let secs = t.elapsed().as_secs_f64();
        let ok = r.rel_error <= SAWTOOTH_REL && secs < SAWTOOTH_SECONDS;
        pass &= ok;
        parts.push(format!(
            "N={n} delta={delta:e} energy={:.6e} closed={:.6e} rel={:.3e} t={secs:.2}s",
            r.report.value, r.closed_form, r.rel_error
        ));
    }
    report(lines, "1 sawtooth", pass, parts.join("; "));
}

fn closed_form(lines: &mut Vec<Line>) {
    let t = Instant::now();
    let q = SphereQuadrature::new(2, 512).unwrap();
    let mut rng = battery::rng_for(SEED, battery::STREAM_CLOSED_FORM);
    let mut worst = 0.0f64;
    let mut ratio_lo = f64::INFINITY;
    let mut ratio_hi = 0.0f64;
    for _ in 0..20 {
        let f = battery::random_matrix(&mut rng, -3.0, 3.0);
        let quad = density_tilde(&f, &Potential::quadratic(), 2.0, &q).unwrap();
        let c = f.transpose().mul(&f).sub(&Mat::identity(2));
        let tr = f.frobenius_sq() - 2.0;
        let stated = (c.frobenius_sq() + 0.5 * tr * tr) / 32.0;
        worst = worst.max((quad - stated).abs() / stated.abs().max(1e-300));
        ratio_lo = ratio_lo.min(quad / stated);
        ratio_hi = ratio_hi.max(quad / stated);
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = worst <= CLOSED_FORM_REL && secs < CLOSED_FORM_SECONDS;
    report(
        lines,
        "2 closed-form spherical average",
        pass,
        format!("max rel error vs 1/32 formula {worst:.3e}, quadrature/formula in [{ratio_lo:.12}, {ratio_hi:.12}], t={secs:.3}s"),
    );
}

fn gap(lines: &mut Vec<Line>) {
    let t = Instant::now();
    let q = SphereQuadrature::new(2, 512).unwrap();
    let phi = Potential::quadratic();
    let f = Mat::diag(&[4.0, 0.25]);
    let lower = density_lower(&f, &phi, 2.0, &q).unwrap();
    let tilde = density_tilde(&f, &phi, 2.0, &q).unwrap();
    let lam = density_laminate_upper(&f, &phi, 2.0, &q, &LaminateSearch::default()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let pass = tilde - lower > GAP_ABS && tilde - lam.value > GAP_ABS && secs < GAP_SECONDS;
    report(
        lines,
        "3 bound gap",
        pass,
        format!(
            "lower={lower:.6} laminate_upper={:.6} tilde={tilde:.6} tilde-lower={:.4} tilde-laminate={:.3e} t={secs:.1}s",
            lam.value,
            tilde - lower,
            tilde - lam.value
        ),
    );
}

fn zero_set(lines: &mut Vec<Line>) {
    let rows = battery::zero_set_check(SEED, 200).unwrap();
    let misses = rows.iter().filter(|r| !r.pass).count();
    let sweep = DecaySweep {
        lambda: vec![0.5, 0.5],
        pairs: vec![(1, 1), (2, 2), (4, 4), (8, 8)],
        kernels: KernelSequence::rescaled(Kernel::box_kernel(2, 1.0).unwrap(), 1.0, 2.0).unwrap(),
        phi: Potential::quadratic(),
        m: 1.0,
        cells_per_horizon: 8.0,
        min_cells: 64,
        max_cells: 1024,
    };
    let table = laminate_energy_decay(&sweep).unwrap();
    let energies: Vec<String> = table.rows.iter().map(|r| format!("n={}:{:.4e}", r.n, r.energy)).collect();
    let pass = misses == 0 && table.monotone && table.final_ratio < DECAY_FINAL_RATIO;
    report(
        lines,
        "4 zero set",
        pass,
        format!(
            "predicate mismatches {misses}/200 (threshold {ZERO_SET_THRESHOLD:e}); laminate decay [{}] monotone={} last/first={:.3}",
            energies.join(", "),
            table.monotone,
            table.final_ratio
        ),
    );
}

fn linearization(lines: &mut Vec<Line>) {
    let eps = [0.2, 0.1, 0.05, 0.025];
    let mut pass = true;
    let mut parts = Vec::new();
    for d in [1usize, 2] {
        let grid = if d == 1 { Grid::unit(1, 200).unwrap() } else { Grid::unit(2, 40).unwrap() };
        let u = VectorField::from_fn(grid, |x, out| {
            for k in 0..d {
                out[k] = x[k] * x[k];
            }
        });
        let kernel = Kernel::box_kernel(d, 0.3).unwrap();
        let catalog: [(&str, &[(&str, f64)]); 3] = [
            ("mbm", &[("s0", 1.0)]),
            ("quartic", &[]),
            ("cohesive", &[("f_inf", 1.0), ("a", 1.0), ("b", 1.0)]),
        ];
        for (tag, params) in catalog {
            let w = catalog_potential(tag, params, kernel.clone()).unwrap();
            for m in [1.0, 2.0] {
                let t = linearization_experiment(&u, &w, m, None, &eps).unwrap();
                let ok = if t.exact {
                    let err = t.rows.iter().filter_map(|r| r.abs_err).fold(0.0, f64::max);
                    parts.push(format!("d{d} {tag} m{m}: exact (max err {err:.1e})"));
                    err <= EXACT_ABS
                } else {
                    let s = t.slope.unwrap_or(f64::NAN);
                    parts.push(format!("d{d} {tag} m{m}: slope {s:.3}"));
                    (SLOPE_WINDOW.0..=SLOPE_WINDOW.1).contains(&s)
                };
                pass &= ok;
            }
        }
    }
    // 1D collinear quadratic: E_eps = E_0 exactly
    let grid = Grid::unit(1, 200).unwrap();
    let u = VectorField::from_fn(grid, |x, out| out[0] = x[0] * x[0]);
    let w = catalog_potential("quadratic", &[("c", 1.0)], Kernel::box_kernel(1, 0.3).unwrap()).unwrap();
    let t = linearization_experiment(&u, &w, 1.0, None, &eps).unwrap();
    let err = t.rows.iter().map(|r| r.abs_err.unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
    pass &= err <= EXACT_ABS;
    parts.push(format!("collinear quadratic max |E_eps - E_0| {err:.1e}"));
    report(lines, "5 linearization rate", pass, parts.join("; "));
}

fn gradient(lines: &mut Vec<Line>) {
    let trials = battery::gradient_trials(SEED, 10).unwrap();
    let worst = trials.iter().map(|t| t.rel_error).fold(0.0, f64::max);
    report(
        lines,
        "6 gradient",
        worst <= GRADIENT_REL,
        format!("{} trials over d, m, phi; worst rel error {worst:.3e}", trials.len()),
    );
}

fn rigidity(lines: &mut Vec<Line>) {
    let grid = Grid::new(2, &[-1.0, -1.0], &[2.0, 2.0], &[40, 40]).unwrap();
    let trials = battery::isometry_trials(SEED, 5, &grid, &[0.0, 0.0], 0.5, 0.0).unwrap();
    let defect = trials.iter().map(|t| t.defect).fold(0.0, f64::max);
    let affine = trials.iter().map(|t| t.affine_residual).fold(0.0, f64::max);
    report(
        lines,
        "7 rigidity reconstruction",
        defect <= RIGIDITY_ABS && affine <= RIGIDITY_ABS,
        format!("5 isometries; max |F^T F - I| {defect:.2e}, max affine residual {affine:.2e}"),
    );
}

fn kernel_battery(lines: &mut Vec<Line>) {
    let mut pass = true;
    let mut worst_mass = 0.0f64;
    let mut tails = Vec::new();
    for d in 1..=3 {
        let kernels = [
            ("box", Kernel::box_kernel(d, 1.0).unwrap()),
            ("fractional", Kernel::fractional(d, 0.5, 2.0).unwrap()),
            ("annulus", Kernel::annulus(d, 0.5, 1.0).unwrap()),
            ("tabulated", Kernel::tabulated(d, vec![0.0, 0.5, 1.0], vec![1.0, 1.0, 0.0], 1.0).unwrap()),
        ];
        for (name, k) in kernels {
            worst_mass = worst_mass.max((k.mass() - 1.0).abs());
            let (seq, n_max) = if name == "fractional" {
                (KernelSequence::FractionalToOne { dim: d, p: 2.0 }, 4000)
            } else {
                (KernelSequence::rescaled(k.clone(), 1.0, 1.0).unwrap(), 20)
            };
            let rep = check_assumption_a(&seq, 0.25, n_max).unwrap();
            pass &= rep.pass;
            if d == 1 {
                tails.push(format!("{name} tail {:.1e}", rep.tails.last().unwrap()));
            }
        }
    }
    pass &= worst_mass <= MASS_ABS;
    let k = Kernel::box_kernel(1, 1.0).unwrap();
    let rep = check_density_condition(&k, 2.0).unwrap();
    let dc_err = rep
        .integrals
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let delta = 2f64.powi(-(j as i32 + 1));
            ((v - (1.0 / delta - 1.0)) / (1.0 / delta - 1.0)).abs()
        })
        .fold(0.0, f64::max);
    pass &= dc_err <= 1e-10 && rep.divergent;
    report(
        lines,
        "8 kernel battery",
        pass,
        format!(
            "max |mass - 1| {worst_mass:.1e}; {}; box I(delta) vs 1/delta - 1 max rel {dc_err:.1e}, divergent={}",
            tails.join(", "),
            rep.divergent
        ),
    );
}

fn frame(lines: &mut Vec<Line>) {
    let rows = battery::frame_check(SEED, 50, 512, &LaminateSearch::coarse()).unwrap();
    let worst = rows.iter().map(|r| r.value).fold(0.0, f64::max);
    report(
        lines,
        "9 frame indifference",
        worst <= FRAME_ABS,
        format!("50 trials, lower/tilde (m=1,2) and laminate (m=2); worst deviation {worst:.2e}"),
    );
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn determinism(lines: &mut Vec<Line>) {
    let exe = env!("CARGO_BIN_EXE_bondloc");
    let examples = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples");
    let scratch = std::env::temp_dir().join(format!("bondloc-acceptance-{}", std::process::id()));
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["checks", "sawtooth", "localize"] {
        let mut outputs = Vec::new();
        for threads in ["1", "8", "8"] {
            let dir = scratch.join(format!("{name}-{threads}-{}", outputs.len()));
            let status = Command::new(exe)
                .args(["run", examples.join(format!("{name}.toml")).to_str().unwrap()])
                .args(["--out", dir.to_str().unwrap(), "--seed", &SEED.to_string(), "--threads", threads])
                .output()
                .expect("binary runs");
            let code = status.status.code().unwrap_or(-1);
            outputs.push((code, files(&dir)));
        }
        let same = outputs.windows(2).all(|w| w[0] == w[1]);
        pass &= same;
        parts.push(format!(
            "{name}: exit {}, {} files, identical={same}",
            outputs[0].0,
            outputs[0].1.len()
        ));
    }
    let _ = std::fs::remove_dir_all(&scratch);
    report(lines, "10 determinism", pass, parts.join("; "));
}

fn main() {
    let mut lines = Vec::new();
    sawtooth(&mut lines);
    closed_form(&mut lines);
    gap(&mut lines);
    zero_set(&mut lines);
    linearization(&mut lines);
    gradient(&mut lines);
    rigidity(&mut lines);
    kernel_battery(&mut lines);
    frame(&mut lines);
    determinism(&mut lines);
    let failed: Vec<&str> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    println!(
        "acceptance: {}/{} criteria pass",
        lines.len() - failed.len(),
        lines.len()
    );
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
