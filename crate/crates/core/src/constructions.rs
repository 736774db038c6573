//! Explicit constructions: the 1D sawtooth family, oscillating laminates
//! with orthogonal gradients, isometry reconstruction, rigidity under
//! energy decay and a finite-difference rigidity check for smooth maps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{EnergyReport, LocalizedEnergy};
use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, SubdomainMask, VectorField};
use crate::kernels::KernelSequence;
use crate::linalg::{norm, Mat, MAX_DIM};
use crate::materials::{strain, Potential};
use crate::quadrature::pairwise_sum;

/// v_N(x): distance-to-the-lattice (1/N)ℤ tent of slope ±1, extended
/// periodically to ℝ. v_N(0) = 0 and max v_N = 1/(2N).
pub fn sawtooth_value(n_teeth: usize, x: f64) -> f64 {
    let nf = n_teeth as f64;
    let f = (nf * x).rem_euclid(1.0);
    f.min(1.0 - f) / nf
}

/// Nodal samples of v_N on a 1D grid with at least 8N cells.
pub fn sawtooth_field(n_teeth: usize, grid: &Grid) -> Result<VectorField> {
    if n_teeth == 0 {
        return invalid("sawtooth needs at least one tooth");
    }
    if grid.dim() != 1 {
        return invalid("sawtooth fields live on a 1D grid");
    }
    if grid.n_cells()[0] < 8 * n_teeth {
        return invalid(format!(
            "grid with {} cells does not resolve {n_teeth} teeth (need {})",
            grid.n_cells()[0],
            8 * n_teeth
        ));
    }
    Ok(VectorField::from_fn(*grid, |x, out| {
        out[0] = sawtooth_value(n_teeth, x[0])
    }))
}

/// (8/15)·N·δ.
pub fn sawtooth_closed_form(n_teeth: usize, delta: f64) -> f64 {
    8.0 / 15.0 * n_teeth as f64 * delta
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SawtoothReport {
    pub n_teeth: usize,
    pub delta: f64,
    pub report: EnergyReport,
    pub closed_form: f64,
    pub rel_error: f64,
    /// δ ≤ 1/(4N): the horizon fits inside a tooth.
    pub in_regime: bool,
    /// Closed form matched within max(1%, 10h/δ); None outside the regime.
    pub matches: Option<bool>,
}

/// ∫₀¹∫_{|y−x|<δ} (1/(2δ)) (|𝒟v_N(x, y)|² − 1)² dy dx on the periodic
/// sawtooth, with the quartic integrand Φ(a) = 4a² of s₂ and
/// partial-volume weights for cells cut by |y − x| = δ.
pub fn sawtooth_energy(n_teeth: usize, delta: f64, h: f64) -> Result<SawtoothReport> {
    if n_teeth == 0 {
        return invalid("sawtooth needs at least one tooth");
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return invalid(format!("horizon must be positive, got {delta}"));
    }
    if !(h > 0.0) || h > delta / 16.0 {
        return invalid(format!("spacing {h} must satisfy 0 < h <= delta/16"));
    }
    let n = (1.0 / h).round().max(8.0 * n_teeth as f64) as usize;
    let h = 1.0 / n as f64;
    let reach = ((delta + 0.5 * h) / h).ceil() as usize;
    let phi = Potential::power(4.0, 2.0)?;
    let dens = 1.0 / (2.0 * delta);
    let weights: Vec<f64> = (1..=reach)
        .map(|j| ((delta + 0.5 * h - j as f64 * h) / h).clamp(0.0, 1.0) * h * h * dens)
        .collect();
    let active = weights.iter().filter(|w| **w > 0.0).count();
    let partial: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = (i as f64 + 0.5) * h;
            let vx = sawtooth_value(n_teeth, x);
            let mut acc = 0.0;
            for (jm, w) in weights.iter().enumerate() {
                if *w == 0.0 {
                    continue;
                }
                let r = (jm + 1) as f64 * h;
                let t = (sawtooth_value(n_teeth, x + r) - vx).abs() / r;
                acc += w * phi.eval(strain(2.0, t).abs());
            }
            acc
        })
        .collect();
    let value = 2.0 * pairwise_sum(&partial);
    let closed_form = sawtooth_closed_form(n_teeth, delta);
    let rel_error = (value - closed_form).abs() / closed_form;
    let in_regime = delta <= 1.0 / (4.0 * n_teeth as f64);
    let tol = 0.01f64.max(10.0 * h / delta);
    Ok(SawtoothReport {
        n_teeth,
        delta,
        report: EnergyReport {
            value,
            pair_count: 2 * n * active,
            skipped_diagonal: n,
            h,
            est_error: None,
        },
        closed_form,
        rel_error,
        in_regime,
        matches: in_regime.then_some(rel_error <= tol),
    })
}

/// Period-1 tent with slopes (1 − λ) on [0, (1+λ)/2] and (−1 − λ) after.
pub fn gamma(lambda: f64, t: f64) -> f64 {
    let f = t.rem_euclid(1.0);
    let knee = 0.5 * (1.0 + lambda);
    if f <= knee {
        (1.0 - lambda) * f
    } else {
        (-1.0 - lambda) * (f - 1.0)
    }
}

/// max γ = (1 − λ)(1 + λ)/2.
pub fn gamma_max(lambda: f64) -> f64 {
    0.5 * (1.0 - lambda) * (1.0 + lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaminateSpec {
    /// Target singular values in [0, 1].
    pub lambda: Vec<f64>,
    /// Oscillation frequency.
    pub k: usize,
}

impl LaminateSpec {
    pub fn validate(&self) -> Result<()> {
        if self.lambda.is_empty() || self.lambda.len() > MAX_DIM {
            return invalid("laminate needs 1 to 3 singular values");
        }
        if let Some(l) = self.lambda.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return invalid(format!("laminate singular value {l} outside [0, 1]"));
        }
        if self.k == 0 {
            return invalid("laminate frequency must be positive");
        }
        Ok(())
    }

    /// D = diag(λ).
    pub fn target(&self) -> Mat {
        Mat::diag(&self.lambda)
    }

    /// max_i (1/k)·max γ_i.
    pub fn sup_bound(&self) -> f64 {
        self.lambda.iter().map(|l| gamma_max(*l)).fold(0.0, f64::max) / self.k as f64
    }
}

/// v_k(x) = Dx + (1/k)(γ_i(k x_i))_i.
pub fn laminate_field(spec: &LaminateSpec, grid: &Grid) -> Result<VectorField> {
    spec.validate()?;
    if grid.dim() != spec.lambda.len() {
        return invalid("laminate and grid dimensions differ");
    }
    if let Some(n) = grid.n_cells().iter().find(|n| **n < 8 * spec.k) {
        return invalid(format!("{n} cells per axis do not resolve frequency {} (need {})", spec.k, 8 * spec.k));
    }
    let kf = spec.k as f64;
    let lam = spec.lambda.clone();
    Ok(VectorField::from_fn(*grid, |x, out| {
        for (i, l) in lam.iter().enumerate() {
            out[i] = l * x[i] + gamma(*l, kf * x[i]) / kf;
        }
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub n: usize,
    pub k: usize,
    pub delta: f64,
    pub h: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTable {
    pub rows: Vec<DecayRow>,
    /// Every entry strictly below its predecessor.
    pub monotone: bool,
    /// last energy / first energy.
    pub final_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecaySweep {
    pub lambda: Vec<f64>,
    /// (n, k(n)) pairs.
    pub pairs: Vec<(usize, usize)>,
    pub kernels: KernelSequence,
    pub phi: Potential,
    pub m: f64,
    /// Grid cells per horizon length.
    pub cells_per_horizon: f64,
    /// Lower and upper bounds on cells per axis of the unit cube.
    pub min_cells: usize,
    pub max_cells: usize,
}

/// F_n(v_{k(n)}, (0,1)^d) along the sweep.
pub fn laminate_energy_decay(sweep: &DecaySweep) -> Result<DecayTable> {
    if sweep.pairs.is_empty() {
        return invalid("decay sweep needs at least one (n, k) pair");
    }
    if !(sweep.cells_per_horizon > 0.0) || sweep.min_cells < 2 || sweep.max_cells < sweep.min_cells {
        return invalid("decay sweep resolution parameters are inconsistent");
    }
    let dim = sweep.lambda.len();
    let mut rows = Vec::with_capacity(sweep.pairs.len());
    for &(n, k) in &sweep.pairs {
        let spec = LaminateSpec {
            lambda: sweep.lambda.clone(),
            k,
        };
        spec.validate()?;
        let kernel = sweep.kernels.kernel(n)?;
        if kernel.dim() != dim {
            return invalid("kernel sequence and laminate dimensions differ");
        }
        let delta = kernel.support_radius();
        let cells = ((sweep.cells_per_horizon / delta).ceil() as usize)
            .max(8 * k)
            .max(sweep.min_cells);
        if cells > sweep.max_cells {
            return invalid(format!(
                "n = {n} needs {cells} cells per axis, above the cap {}",
                sweep.max_cells
            ));
        }
        let grid = Grid::unit(dim, cells)?;
        let v = laminate_field(&spec, &grid)?;
        let e = LocalizedEnergy::new(SubdomainMask::full(grid), kernel, sweep.phi.clone(), sweep.m)?;
        let rep = e.energy(&v)?;
        rows.push(DecayRow {
            n,
            k,
            delta,
            h: grid.h_eff(),
            energy: rep.value,
        });
    }
    let monotone = rows.windows(2).all(|w| w[1].energy < w[0].energy);
    let first = rows[0].energy;
    let last = rows[rows.len() - 1].energy;
    let final_ratio = if first > 0.0 { last / first } else if last == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(DecayTable {
        rows,
        monotone,
        final_ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    /// Row-major F.
    pub f: Vec<f64>,
    pub b: Vec<f64>,
    /// ‖FᵀF − I‖ (Frobenius).
    pub orthogonality_defect: f64,
    /// max over sampled pairs of ||v(x) − v(y)| − |x − y||.
    pub isometry_residual: f64,
    /// max over active nodes of |v(x) − Fx − b|.
    pub affine_residual: f64,
}

impl Reconstruction {
    pub fn matrix(&self) -> Mat {
        let d = self.b.len();
        Mat::from_row_major(d, &self.f).expect("stored matrix has d² entries")
    }

    pub fn is_rigid(&self, tol: f64) -> bool {
        self.orthogonality_defect <= tol && self.affine_residual <= tol && self.isometry_residual <= tol
    }
}

/// Recovers v(x) = Fx + b from the nodes nearest the centre c and c + R·e_k:
/// F = ΔV·ΔX⁻¹ with ΔX the actual node offsets, b = v(c-node) − F·x_c.
/// Pair residuals use up to `max_samples` active nodes on a fixed stride.
pub fn rigidity_reconstruct(
    v: &VectorField,
    mask: &SubdomainMask,
    centre: &[f64],
    radius: f64,
    max_samples: usize,
) -> Result<Reconstruction> {
    let grid = v.grid();
    let d = grid.dim();
    if mask.grid() != grid {
        return invalid("field and mask live on different grids");
    }
    if centre.len() != d {
        return invalid("centre has the wrong dimension");
    }
    if !(radius > 0.0) {
        return invalid("reconstruction radius must be positive");
    }
    let pick = |x: &[f64]| -> Result<usize> {
        match grid.nearest_node(x) {
            Some(i) if mask.is_active(i) => Ok(i),
            _ => Err(Error::Domain(format!("no active node near {x:?}"))),
        }
    };
    let i0 = pick(centre)?;
    let x0 = grid.node(i0);
    let v0 = v.get(i0).to_vec();
    let mut dx = Mat::zeros(d);
    let mut dv = Mat::zeros(d);
    for k in 0..d {
        let mut target = centre.to_vec();
        target[k] += radius;
        let ik = pick(&target)?;
        if ik == i0 {
            return Err(Error::Domain("radius below the grid spacing".into()));
        }
        let xk = grid.node(ik);
        let vk = v.get(ik);
        for r in 0..d {
            dx.set(r, k, xk[r] - x0[r]);
            dv.set(r, k, vk[r] - v0[r]);
        }
    }
    let dx_inv = dx
        .inverse()
        .ok_or_else(|| Error::Domain("reconstruction nodes are degenerate".into()))?;
    let f = dv.mul(&dx_inv);
    let fx0 = f.apply(&x0[..d]);
    let b: Vec<f64> = (0..d).map(|r| v0[r] - fx0[r]).collect();

    let active = mask.active_indices();
    let affine_residual = active
        .par_iter()
        .map(|&i| {
            let x = grid.node(i);
            let fx = f.apply(&x[..d]);
            let vi = v.get(i);
            let diff: Vec<f64> = (0..d).map(|r| vi[r] - fx[r] - b[r]).collect();
            norm(&diff)
        })
        .reduce(|| 0.0, f64::max);
    let stride = active.len().div_ceil(max_samples.max(2));
    let sample: Vec<usize> = active.iter().step_by(stride.max(1)).copied().collect();
    let isometry_residual = (0..sample.len())
        .into_par_iter()
        .map(|a| {
            let i = sample[a];
            let (xi, vi) = (grid.node(i), v.get(i));
            let mut worst = 0.0f64;
            for &j in &sample[a + 1..] {
                let (xj, vj) = (grid.node(j), v.get(j));
                let dxn = norm(&(0..d).map(|r| xi[r] - xj[r]).collect::<Vec<_>>());
                let dvn = norm(&(0..d).map(|r| vi[r] - vj[r]).collect::<Vec<_>>());
                worst = worst.max((dvn - dxn).abs());
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    Ok(Reconstruction {
        f: f.row_major(),
        b,
        orthogonality_defect: f.orthogonality_defect(),
        isometry_residual,
        affine_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Rigid,
    NotRigid,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayVerdict {
    pub energies: Vec<f64>,
    /// Discrete L¹ distances between consecutive fields.
    pub l1_increments: Vec<f64>,
    pub reconstruction: Option<Reconstruction>,
    pub verdict: Verdict,
}

fn l1_distance(a: &VectorField, b: &VectorField, mask: &SubdomainMask) -> f64 {
    let d = a.grid().dim();
    let vol = a.grid().cell_volume();
    let terms: Vec<f64> = mask
        .active_indices()
        .iter()
        .map(|&i| {
            let diff: Vec<f64> = (0..d).map(|r| a.get(i)[r] - b.get(i)[r]).collect();
            norm(&diff) * vol
        })
        .collect();
    pairwise_sum(&terms)
}

/// Computes F(v_j) for a fixed kernel, requires strictly decreasing
/// energies and shrinking L¹ increments, then reconstructs the last field.
/// Rigid when its orthogonality defect and residuals are within `tol`.
pub fn energy_decay_rigidity(
    seq: &[VectorField],
    energy: &LocalizedEnergy,
    centre: &[f64],
    radius: f64,
    tol: f64,
) -> Result<DecayVerdict> {
    if seq.is_empty() {
        return invalid("empty field sequence");
    }
    let mask = energy.mask();
    let energies = seq
        .iter()
        .map(|v| energy.energy(v).map(|r| r.value))
        .collect::<Result<Vec<_>>>()?;
    let l1_increments: Vec<f64> = seq.windows(2).map(|w| l1_distance(&w[0], &w[1], mask)).collect();
    let decreasing = energies.windows(2).all(|w| w[1] < w[0] || w[1] == 0.0);
    let cauchy = l1_increments.windows(2).all(|w| w[1] <= w[0] + tol);
    if !decreasing || !cauchy {
        return Ok(DecayVerdict {
            energies,
            l1_increments,
            reconstruction: None,
            verdict: Verdict::Inconclusive,
        });
    }
    let rec = rigidity_reconstruct(&seq[seq.len() - 1], mask, centre, radius, 256)?;
    let verdict = if rec.is_rigid(tol) { Verdict::Rigid } else { Verdict::NotRigid };
    Ok(DecayVerdict {
        energies,
        l1_increments,
        reconstruction: Some(rec),
        verdict,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiolaReport {
    /// max |(∇v)ᵀ∇v − I| (Frobenius).
    pub gram_defect: f64,
    /// max |Δv|.
    pub laplacian: f64,
    /// max |∇²v| (Frobenius over all components).
    pub hessian: f64,
    pub nodes_checked: usize,
}

/// Second-order central differences of v at every node whose 3^d stencil
/// stays in the grid and, if given, inside `interior`.
pub fn piola_rigidity_check(v: &VectorField, interior: Option<&[bool]>) -> Result<PiolaReport> {
    let grid = v.grid();
    let d = grid.dim();
    let h = grid.spacing().to_vec();
    if let Some(m) = interior {
        if m.len() != grid.len() {
            return invalid("interior mask length differs from the grid");
        }
    }
    let at = |mi: &[usize; MAX_DIM], off: [isize; MAX_DIM]| grid.shifted(mi, &off);
    let rows: Vec<Option<(f64, f64, f64)>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let mi = grid.multi_index(i);
            // the full 3^d neighbourhood must exist and be interior
            let mut offs = vec![[0isize; MAX_DIM]];
            for a in 0..d {
                let mut next = Vec::with_capacity(offs.len() * 3);
                for o in &offs {
                    for s in [-1isize, 0, 1] {
                        let mut o2 = *o;
                        o2[a] = s;
                        next.push(o2);
                    }
                }
                offs = next;
            }
            for o in &offs {
                match at(&mi, *o) {
                    Some(j) => {
                        if let Some(m) = interior {
                            if !m[j] {
                                return None;
                            }
                        }
                    }
                    None => return None,
                }
            }
            let val = |o: [isize; MAX_DIM], c: usize| v.get(at(&mi, o).unwrap())[c];
            let unit = |a: usize, s: isize| {
                let mut o = [0isize; MAX_DIM];
                o[a] = s;
                o
            };
            let mut grad = Mat::zeros(d);
            let mut hess_sq = 0.0;
            let mut lap_sq = 0.0;
            for c in 0..d {
                let centre = val([0; MAX_DIM], c);
                let mut lap = 0.0;
                for a in 0..d {
                    let (p, m) = (val(unit(a, 1), c), val(unit(a, -1), c));
                    grad.set(c, a, (p - m) / (2.0 * h[a]));
                    let second = (p - 2.0 * centre + m) / (h[a] * h[a]);
                    lap += second;
                    hess_sq += second * second;
                    for b in (a + 1)..d {
                        let mut pp = [0isize; MAX_DIM];
                        pp[a] = 1;
                        pp[b] = 1;
                        let mut pm = pp;
                        pm[b] = -1;
                        let mut mp = pp;
                        mp[a] = -1;
                        let mut mm = mp;
                        mm[b] = -1;
                        let mixed = (val(pp, c) - val(pm, c) - val(mp, c) + val(mm, c)) / (4.0 * h[a] * h[b]);
                        hess_sq += 2.0 * mixed * mixed;
                    }
                }
                lap_sq += lap * lap;
            }
            let gram = grad.transpose().mul(&grad).sub(&Mat::identity(d)).frobenius();
            Some((gram, lap_sq.sqrt(), hess_sq.sqrt()))
        })
        .collect();
    let mut rep = PiolaReport {
        gram_defect: 0.0,
        laplacian: 0.0,
        hessian: 0.0,
        nodes_checked: 0,
    };
    for (g, l, hs) in rows.into_iter().flatten() {
        rep.gram_defect = rep.gram_defect.max(g);
        rep.laplacian = rep.laplacian.max(l);
        rep.hessian = rep.hessian.max(hs);
        rep.nodes_checked += 1;
    }
    if rep.nodes_checked == 0 {
        return Err(Error::Domain("finite-difference stencil exits the domain at every node".into()));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Kernel;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sawtooth_values() {
        assert_abs_diff_eq!(sawtooth_value(1, 0.25), 0.25);
        assert_abs_diff_eq!(sawtooth_value(1, 0.75), 0.25);
        assert_abs_diff_eq!(sawtooth_value(1, 0.5), 0.5);
        assert_eq!(sawtooth_value(3, 0.0), 0.0);
        assert_abs_diff_eq!(sawtooth_value(2, 0.1), sawtooth_value(2, 0.6), epsilon = 1e-15);
        let g = Grid::unit(1, 64).unwrap();
        let v = sawtooth_field(4, &g).unwrap();
        let max = v.values().iter().cloned().fold(0.0, f64::max);
        assert!(max <= 0.125 + 1e-15);
        assert!(sawtooth_field(9, &g).is_err());
    }

    #[test]
    fn sawtooth_energy_anchor() {
        let r = sawtooth_energy(10, 1e-3, 1e-3 / 32.0).unwrap();
        assert!(r.in_regime);
        assert!(r.rel_error < 0.01, "{r:?}");
        assert_eq!(r.matches, Some(true));
        let out = sawtooth_energy(2, 0.2, 0.2 / 32.0).unwrap();
        assert!(!out.in_regime && out.matches.is_none());
        assert!(sawtooth_energy(1, 1e-2, 1e-2 / 8.0).is_err());
    }

    #[test]
    fn gamma_shape() {
        for lam in [0.0, 0.3, 0.5, 1.0] {
            assert_abs_diff_eq!(gamma(lam, 0.0), 0.0);
            assert_abs_diff_eq!(gamma(lam, 1.0), 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(gamma(lam, 0.5 * (1.0 + lam)), gamma_max(lam), epsilon = 1e-15);
        }
        assert_eq!(gamma(1.0, 0.37), 0.0);
    }

    #[test]
    fn laminate_identity_and_rejection() {
        let g = Grid::unit(2, 32).unwrap();
        let spec = LaminateSpec { lambda: vec![1.0, 1.0], k: 4 };
        let v = laminate_field(&spec, &g).unwrap();
        assert!(v.sup_distance(&VectorField::identity(g)) < 1e-15);
        let bad = LaminateSpec { lambda: vec![1.2, 0.5], k: 2 };
        assert!(laminate_field(&bad, &g).is_err());
        let fine = LaminateSpec { lambda: vec![0.5, 0.5], k: 5 };
        assert!(laminate_field(&fine, &g).is_err());
    }

    #[test]
    fn laminate_sup_bound() {
        let g = Grid::unit(2, 128).unwrap();
        let spec = LaminateSpec { lambda: vec![0.5, 0.5], k: 8 };
        let v = laminate_field(&spec, &g).unwrap();
        let target = VectorField::affine(g, &spec.target(), &[0.0, 0.0]);
        let dist = v.sup_component_distance(&target);
        assert!(dist <= spec.sup_bound() + 1e-15);
        assert!(dist >= 0.9 * spec.sup_bound());
    }

    #[test]
    fn reconstruct_rotation() {
        let g = Grid::new(2, &[-1.0, -1.0], &[2.0, 2.0], &[40, 40]).unwrap();
        let u = Mat::rotation2(std::f64::consts::FRAC_PI_4);
        let v = VectorField::affine(g, &u, &[1.0, -2.0]);
        let mask = SubdomainMask::full(g);
        let rec = rigidity_reconstruct(&v, &mask, &[0.0, 0.0], 0.5, 200).unwrap();
        assert!(rec.orthogonality_defect < 1e-12);
        assert!(rec.affine_residual < 1e-12 && rec.isometry_residual < 1e-12);
        assert_abs_diff_eq!(rec.b[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rec.b[1], -2.0, epsilon = 1e-12);
        let s = VectorField::affine(*v.grid(), &Mat::scaled_identity(2, 2.0), &[0.0, 0.0]);
        let rec = rigidity_reconstruct(&s, &mask, &[0.0, 0.0], 0.5, 200).unwrap();
        assert!(!rec.is_rigid(1e-6));
        assert!(rec.isometry_residual > 1.0);
    }

    #[test]
    fn decay_verdicts() {
        let g = Grid::unit(2, 24).unwrap();
        let mask = SubdomainMask::full(g);
        let k = Kernel::box_kernel(2, 0.15).unwrap();
        let e = LocalizedEnergy::new(mask, k, Potential::quadratic(), 1.0).unwrap();
        let u = Mat::rotation2(0.4);
        let seq: Vec<VectorField> = [1.0, 2.0, 4.0, 8.0, 1e9]
            .iter()
            .map(|j| {
                VectorField::from_fn(g, |x, out| {
                    let y = u.apply(x);
                    out[0] = y[0] + (3.0 * x[1]).sin() / j;
                    out[1] = y[1] + (2.0 * x[0]).cos() / j;
                })
            })
            .collect();
        let v = energy_decay_rigidity(&seq, &e, &[0.5, 0.5], 0.3, 1e-6).unwrap();
        assert_eq!(v.verdict, Verdict::Rigid, "{v:?}");
        let lam: Vec<VectorField> = [1, 2, 3]
            .iter()
            .map(|k| laminate_field(&LaminateSpec { lambda: vec![0.5, 0.5], k: *k }, &g).unwrap())
            .collect();
        let v = energy_decay_rigidity(&lam, &e, &[0.5, 0.5], 0.3, 1e-6).unwrap();
        assert_ne!(v.verdict, Verdict::Rigid);
    }

    #[test]
    fn piola_checks() {
        let g = Grid::unit(2, 100).unwrap();
        let u = Mat::rotation2(0.3);
        let rigid = VectorField::affine(g, &u, &[0.2, 0.1]);
        let r = piola_rigidity_check(&rigid, None).unwrap();
        assert!(r.gram_defect < 1e-8 && r.laplacian < 1e-8 && r.hessian < 1e-8, "{r:?}");
        let bent = VectorField::from_fn(g, |x, out| {
            out[0] = x[1].sin();
            out[1] = x[0];
        });
        assert!(piola_rigidity_check(&bent, None).unwrap().gram_defect > 0.1);
        let bump = |a: f64| {
            VectorField::from_fn(g, move |x, out| {
                let y = u.apply(x);
                let b = a * (-20.0 * ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2))).exp();
                out[0] = y[0] + b;
                out[1] = y[1];
            })
        };
        let r1 = piola_rigidity_check(&bump(1e-3), None).unwrap();
        let r2 = piola_rigidity_check(&bump(2e-3), None).unwrap();
        assert_abs_diff_eq!(r2.hessian / r1.hessian, 2.0, epsilon = 1e-6);
        let tiny = Grid::unit(1, 2).unwrap();
        assert!(piola_rigidity_check(&VectorField::zeros(tiny), None).is_err());
    }
}
