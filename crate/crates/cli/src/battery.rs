//! Randomized invariant checks. Every check draws from its own stream of a
//! counter-based generator seeded once, so results do not depend on the
//! order in which checks run.

use bondloc_core::constructions::rigidity_reconstruct;
use bondloc_core::density::{density_laminate_upper, density_lower, density_tilde, zero_set_predicate, LaminateSearch};
use bondloc_core::{Grid, Kernel, LocalizedEnergy, Mat, Potential, SphereQuadrature, SubdomainMask, VectorField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::CliError;

pub const STREAM_FRAME: u64 = 1;
pub const STREAM_ZERO_SET: u64 = 2;
pub const STREAM_RIGIDITY: u64 = 3;
pub const STREAM_GRADIENT: u64 = 4;
pub const STREAM_CLOSED_FORM: u64 = 5;

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub trial: usize,
    pub value: f64,
    pub pass: bool,
}

/// Rotation or reflection of the plane.
pub fn random_orthogonal(rng: &mut ChaCha8Rng) -> Mat {
    let r = Mat::rotation2(rng.gen_range(0.0..std::f64::consts::TAU));
    if rng.gen_bool(0.5) {
        r.mul(&Mat::diag(&[1.0, -1.0]))
    } else {
        r
    }
}

pub fn random_matrix(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Mat {
    let a: Vec<f64> = (0..4).map(|_| rng.gen_range(lo..hi)).collect();
    Mat::from_row_major(2, &a).expect("four entries")
}

/// max over {lower, tilde, laminate} of |density(U′FU″) − density(F)|.
pub fn frame_check(seed: u64, trials: usize, order: usize, search: &LaminateSearch) -> Result<Vec<CheckRow>, CliError> {
    let mut rng = rng_for(seed, STREAM_FRAME);
    let q = SphereQuadrature::new(2, order).map_err(CliError::numerical)?;
    let phi = Potential::quadratic();
    let cases: Vec<(Mat, Mat, Mat)> = (0..trials)
        .map(|_| {
            let f = random_matrix(&mut rng, -3.0, 3.0);
            (f, random_orthogonal(&mut rng), random_orthogonal(&mut rng))
        })
        .collect();
    let mut rows = Vec::with_capacity(trials);
    for (t, (f, u1, u2)) in cases.iter().enumerate() {
        let g = u1.mul(f).mul(u2);
        let mut dev = 0.0f64;
        for m in [1.0, 2.0] {
            let l = (density_lower(&g, &phi, m, &q).map_err(CliError::numerical)?
                - density_lower(f, &phi, m, &q).map_err(CliError::numerical)?)
            .abs();
            let ti = (density_tilde(&g, &phi, m, &q).map_err(CliError::numerical)?
                - density_tilde(f, &phi, m, &q).map_err(CliError::numerical)?)
            .abs();
            dev = dev.max(l).max(ti);
        }
        let la = density_laminate_upper(&g, &phi, 2.0, &q, search).map_err(CliError::numerical)?.value;
        let lb = density_laminate_upper(f, &phi, 2.0, &q, search).map_err(CliError::numerical)?.value;
        dev = dev.max((la - lb).abs());
        rows.push(CheckRow {
            check: "frame_indifference".into(),
            trial: t,
            value: dev,
            pass: dev <= 1e-10,
        });
    }
    Ok(rows)
}

/// zero_set_predicate(F) ⟺ density_lower(F) < 1e−10 with σ_max ∈ [0.5, 1.5].
pub fn zero_set_check(seed: u64, trials: usize) -> Result<Vec<CheckRow>, CliError> {
    let mut rng = rng_for(seed, STREAM_ZERO_SET);
    let q = SphereQuadrature::new(2, 1024).map_err(CliError::numerical)?;
    let phi = Potential::quadratic();
    let mut rows = Vec::with_capacity(trials);
    for t in 0..trials {
        let s1 = rng.gen_range(0.5..1.5);
        let s2 = rng.gen_range(0.0..s1);
        let f = random_orthogonal(&mut rng).mul(&Mat::diag(&[s1, s2])).mul(&random_orthogonal(&mut rng));
        let lo = density_lower(&f, &phi, 1.0, &q).map_err(CliError::numerical)?;
        rows.push(CheckRow {
            check: "zero_set".into(),
            trial: t,
            value: lo,
            pass: zero_set_predicate(&f) == (lo < 1e-10),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct IsometryTrial {
    pub angle: f64,
    pub reflect: bool,
    pub offset: [f64; 2],
    pub defect: f64,
    pub affine_residual: f64,
    pub isometry_residual: f64,
}

/// Reconstructs random isometries x ↦ Ux + b (plus optional uniform noise)
/// on `grid` around `centre`.
pub fn isometry_trials(
    seed: u64,
    trials: usize,
    grid: &Grid,
    centre: &[f64],
    radius: f64,
    noise: f64,
) -> Result<Vec<IsometryTrial>, CliError> {
    let mut rng = rng_for(seed, STREAM_RIGIDITY);
    let mask = SubdomainMask::full(*grid);
    let mut out = Vec::with_capacity(trials);
    for _ in 0..trials {
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let reflect = rng.gen_bool(0.5);
        let offset = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let mut u = Mat::rotation2(angle);
        if reflect {
            u = u.mul(&Mat::diag(&[1.0, -1.0]));
        }
        let mut v = VectorField::affine(*grid, &u, &offset);
        if noise > 0.0 {
            for x in v.values_mut() {
                *x += rng.gen_range(-noise..noise);
            }
        }
        let rec = rigidity_reconstruct(&v, &mask, centre, radius, 200).map_err(CliError::numerical)?;
        out.push(IsometryTrial {
            angle,
            reflect,
            offset,
            defect: rec.orthogonality_defect,
            affine_residual: rec.affine_residual,
            isometry_residual: rec.isometry_residual,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientTrial {
    pub dim: usize,
    pub m: f64,
    pub phi_exponent: f64,
    pub trial: usize,
    pub rel_error: f64,
}

/// ‖∇F − ∇_h F‖₂ / ‖∇F‖₂ with ∇_h the central difference of step 1e−6, on
/// random perturbations of the identity for d ∈ {1, 2}, m ∈ {1, 2} and
/// Φ ∈ {t², t³}.
pub fn gradient_trials(seed: u64, trials: usize) -> Result<Vec<GradientTrial>, CliError> {
    let mut rng = rng_for(seed, STREAM_GRADIENT);
    let mut out = Vec::new();
    for dim in [1usize, 2] {
        let (cells, delta) = if dim == 1 { (24, 0.3) } else { (8, 0.35) };
        let grid = Grid::unit(dim, cells).map_err(CliError::numerical)?;
        let kernel = Kernel::box_kernel(dim, delta).map_err(CliError::numerical)?;
        for m in [1.0, 2.0] {
            for p in [2.0, 3.0] {
                let phi = Potential::power(1.0, p).map_err(CliError::numerical)?;
                let e = LocalizedEnergy::new(SubdomainMask::full(grid), kernel.clone(), phi, m)
                    .map_err(CliError::numerical)?;
                let h = grid.h_max();
                for trial in 0..trials {
                    let mut v = VectorField::identity(grid);
                    for x in v.values_mut() {
                        *x += 0.2 * h * rng.gen_range(-1.0..1.0);
                    }
                    let g = e.gradient(&v).map_err(CliError::numerical)?;
                    let base = v.values().to_vec();
                    let step = 1e-6;
                    let mut num = 0.0;
                    let mut den = 0.0;
                    for k in 0..base.len() {
                        let mut a = base.clone();
                        a[k] += step;
                        let mut b = base.clone();
                        b[k] -= step;
                        let fa = e.value(&a).map_err(CliError::numerical)?.0;
                        let fb = e.value(&b).map_err(CliError::numerical)?.0;
                        let fd = (fa - fb) / (2.0 * step);
                        num += (fd - g.values()[k]).powi(2);
                        den += g.values()[k].powi(2);
                    }
                    out.push(GradientTrial {
                        dim,
                        m,
                        phi_exponent: p,
                        trial,
                        rel_error: (num / den).sqrt(),
                    });
                }
            }
        }
    }
    Ok(out)
}
