//! Discrete double-integral energies over node pairs.
//!
//! Pairs are enumerated with an offset stencil: every integer offset whose
//! physical length lies within the kernel support (plus half a cell for the
//! partial-volume band). The stencil stores each unordered offset once;
//! sums are doubled. Per-node partial sums are computed in parallel and
//! reduced with a fixed pairwise tree, so results do not depend on the
//! number of threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, LoadField, SubdomainMask, VectorField};
use crate::kernels::Kernel;
use crate::linalg::MAX_DIM;
use crate::materials::{strain, strain_derivative, strain_perturbed, MicroPotential, Potential};
use crate::quadrature::pairwise_sum;

/// How cells straddling the support sphere |ξ| = R are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cutoff {
    /// Weight 1 for |ξ| ≤ R, 0 beyond.
    Sharp,
    /// Weight clamp((R + h/2 − |ξ|)/h, 0, 1) with h the cell edge of equal
    /// volume, a first-order estimate of the cell fraction inside the ball.
    #[default]
    PartialVolume,
}

impl Cutoff {
    #[inline]
    fn fraction(self, r: f64, radius: f64, h: f64) -> f64 {
        match self {
            Cutoff::Sharp => {
                if r <= radius {
                    1.0
                } else {
                    0.0
                }
            }
            Cutoff::PartialVolume => ((radius + 0.5 * h - r) / h).clamp(0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilEntry {
    pub offset: [isize; MAX_DIM],
    pub r: f64,
    pub dir: [f64; MAX_DIM],
    /// Cell volume squared times cutoff fraction times kernel value.
    pub weight: f64,
}

/// Half stencil of lexicographically positive offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub entries: Vec<StencilEntry>,
    pub radius: f64,
}

impl Stencil {
    pub fn build(grid: &Grid, radius: f64, cutoff: Cutoff, profile: impl Fn(f64) -> f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!("support radius must be positive, got {radius}")));
        }
        let d = grid.dim();
        let h = grid.spacing();
        let heff = grid.h_eff();
        let reach = match cutoff {
            Cutoff::Sharp => radius,
            Cutoff::PartialVolume => radius + 0.5 * heff,
        };
        let mut span = [0isize; MAX_DIM];
        for k in 0..d {
            span[k] = (reach / h[k]).floor() as isize;
            if span[k] as usize >= 4 * grid.n_cells()[k] + 4 {
                span[k] = grid.n_cells()[k] as isize;
            }
        }
        let vol2 = grid.cell_volume() * grid.cell_volume();
        let mut entries = Vec::new();
        let mut off = [0isize; MAX_DIM];
        let ranges: Vec<Vec<isize>> = (0..MAX_DIM)
            .map(|k| if k < d { (-span[k]..=span[k]).collect() } else { vec![0] })
            .collect();
        // axis d−1 outermost so entries follow the node ordering
        for &o2 in &ranges[2] {
            for &o1 in &ranges[1] {
                for &o0 in &ranges[0] {
                    off[0] = o0;
                    off[1] = o1;
                    off[2] = o2;
                    if !lex_positive(&off, d) {
                        continue;
                    }
                    let mut v = [0.0; MAX_DIM];
                    for k in 0..d {
                        v[k] = off[k] as f64 * h[k];
                    }
                    let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let frac = cutoff.fraction(r, radius, heff);
                    if frac <= 0.0 {
                        continue;
                    }
                    let weight = vol2 * frac * profile(r.min(radius));
                    if weight == 0.0 {
                        continue;
                    }
                    if !weight.is_finite() {
                        return Err(Error::NonFinite(format!("kernel weight at |ξ| = {r}")));
                    }
                    let mut dir = [0.0; MAX_DIM];
                    for k in 0..d {
                        dir[k] = v[k] / r;
                    }
                    entries.push(StencilEntry { offset: off, r, dir, weight });
                }
            }
        }
        Ok(Self { entries, radius })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn lex_positive(off: &[isize; MAX_DIM], d: usize) -> bool {
    for k in (0..d).rev() {
        if off[k] != 0 {
            return off[k] > 0;
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub value: f64,
    /// Ordered pairs (i, j), i ≠ j, with nonzero weight.
    pub pair_count: usize,
    /// Diagonal pairs (i, i) excluded from the sum.
    pub skipped_diagonal: usize,
    pub h: f64,
    /// |value − value at the next coarser resolution|, when available.
    pub est_error: Option<f64>,
}

impl EnergyReport {
    pub fn with_estimate(mut self, coarser: &EnergyReport) -> Self {
        self.est_error = Some((self.value - coarser.value).abs());
        self
    }
}

/// Sums `term(i, j, entry)` over unordered active pairs and doubles it.
/// Returns (sum, ordered pair count).
pub fn pair_sum<F>(mask: &SubdomainMask, stencil: &Stencil, term: F) -> Result<(f64, usize)>
where
    F: Fn(usize, usize, &StencilEntry) -> Result<f64> + Sync,
{
    let grid = mask.grid();
    let nodes = mask.active_indices();
    let partial: Vec<(f64, usize)> = nodes
        .par_iter()
        .map(|&i| {
            let mi = grid.multi_index(i);
            let mut acc = 0.0;
            let mut count = 0;
            for e in &stencil.entries {
                if let Some(j) = grid.shifted(&mi, &e.offset) {
                    if mask.is_active(j) {
                        acc += term(i, j, e)?;
                        count += 1;
                    }
                }
            }
            Ok((acc, count))
        })
        .collect::<Result<Vec<_>>>()?;
    let sums: Vec<f64> = partial.iter().map(|p| p.0).collect();
    let count: usize = partial.iter().map(|p| p.1).sum();
    Ok((2.0 * pairwise_sum(&sums), 2 * count))
}

/// For every active node i, accumulates `term(i, j, entry, sign)` over all
/// active neighbours j (both stencil orientations; `sign` is +1 for the
/// stored offset and −1 for its negative). Inactive nodes get zeros.
pub fn node_accumulate<F>(mask: &SubdomainMask, stencil: &Stencil, width: usize, term: F) -> Result<Vec<f64>>
where
    F: Fn(usize, usize, &StencilEntry, &mut [f64]) -> Result<()> + Sync,
{
    let grid = mask.grid();
    let n = grid.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![0.0; width];
            if !mask.is_active(i) {
                return Ok(acc);
            }
            let mi = grid.multi_index(i);
            for e in &stencil.entries {
                let neg = [-e.offset[0], -e.offset[1], -e.offset[2]];
                if let Some(j) = grid.shifted(&mi, &e.offset) {
                    if mask.is_active(j) {
                        term(i, j, e, &mut acc)?;
                    }
                }
                if let Some(j) = grid.shifted(&mi, &neg) {
                    if mask.is_active(j) {
                        term(i, j, e, &mut acc)?;
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}

fn check_same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a != b {
        return Err(Error::InvalidParameter("field and mask live on different grids".into()));
    }
    Ok(())
}

fn check_finite(v: &[f64]) -> Result<()> {
    if let Some(k) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("field entry {k}")));
    }
    Ok(())
}

#[inline]
fn stretch(vals: &[f64], d: usize, i: usize, j: usize, r: f64) -> f64 {
    let mut acc = 0.0;
    for k in 0..d {
        let diff = vals[j * d + k] - vals[i * d + k];
        acc += diff * diff;
    }
    acc.sqrt() / r
}

/// F_n(v, A) = ∬_{A×A} ρ(x − y) Φ(|s_m[v](x, y)|) with a cached stencil.
#[derive(Debug, Clone)]
pub struct LocalizedEnergy {
    mask: SubdomainMask,
    kernel: Kernel,
    phi: Potential,
    m: f64,
    stencil: Stencil,
}

impl LocalizedEnergy {
    pub fn new(mask: SubdomainMask, kernel: Kernel, phi: Potential, m: f64) -> Result<Self> {
        Self::with_cutoff(mask, kernel, phi, m, Cutoff::default())
    }

    pub fn with_cutoff(mask: SubdomainMask, kernel: Kernel, phi: Potential, m: f64, cutoff: Cutoff) -> Result<Self> {
        if !(m >= 1.0) || !m.is_finite() {
            return Err(Error::InvalidParameter(format!("strain order m must be >= 1, got {m}")));
        }
        if kernel.dim() != mask.grid().dim() {
            return Err(Error::InvalidParameter("kernel and grid dimensions differ".into()));
        }
        phi.validate()?;
        let stencil = Stencil::build(mask.grid(), kernel.support_radius(), cutoff, |r| kernel.eval(r))?;
        Ok(Self {
            mask,
            kernel,
            phi,
            m,
            stencil,
        })
    }

    pub fn mask(&self) -> &SubdomainMask {
        &self.mask
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn potential(&self) -> &Potential {
        &self.phi
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    /// Energy of raw nodal values laid out as in [`VectorField`].
    pub fn value(&self, vals: &[f64]) -> Result<(f64, usize)> {
        check_finite(vals)?;
        let d = self.mask.grid().dim();
        let (phi, m) = (&self.phi, self.m);
        pair_sum(&self.mask, &self.stencil, |i, j, e| {
            let t = stretch(vals, d, i, j, e.r);
            Ok(e.weight * phi.eval(strain(m, t).abs()))
        })
    }

    pub fn energy(&self, v: &VectorField) -> Result<EnergyReport> {
        check_same_grid(v.grid(), self.mask.grid())?;
        let (value, pair_count) = self.value(v.values())?;
        Ok(EnergyReport {
            value,
            pair_count,
            skipped_diagonal: self.mask.active_count(),
            h: self.mask.grid().h_eff(),
            est_error: None,
        })
    }

    /// ∂F/∂v at every node, from ∂/∂v_i of each pair term.
    pub fn gradient_values(&self, vals: &[f64]) -> Result<Vec<f64>> {
        if !self.phi.is_differentiable() {
            return Err(Error::NonDifferentiable(
                "Φ'(0+) > 0: the energy has no gradient at unstrained bonds; use energy-only experiments".into(),
            ));
        }
        check_finite(vals)?;
        let d = self.mask.grid().dim();
        let (phi, m) = (&self.phi, self.m);
        node_accumulate(&self.mask, &self.stencil, d, |i, j, e, acc| {
            let t = stretch(vals, d, i, j, e.r);
            let s = strain(m, t);
            if s == 0.0 {
                return Ok(());
            }
            // d/dv_i Φ(|s(t)|) = Φ'(|s|) sgn(s) t^{m−1} (v_i − v_j)/(t r²)
            let tm2 = if m == 2.0 {
                1.0
            } else if t > 0.0 {
                strain_derivative(m, t) / t
            } else {
                return Ok(());
            };
            let c = 2.0 * e.weight * phi.derivative(s.abs()) * s.signum() * tm2 / (e.r * e.r);
            for k in 0..d {
                acc[k] += c * (vals[i * d + k] - vals[j * d + k]);
            }
            Ok(())
        })
    }

    pub fn gradient(&self, v: &VectorField) -> Result<VectorField> {
        check_same_grid(v.grid(), self.mask.grid())?;
        VectorField::from_values(*v.grid(), self.gradient_values(v.values())?)
    }
}

/// One-shot F_n(v, A).
pub fn energy_fn(v: &VectorField, mask: &SubdomainMask, kernel: &Kernel, phi: &Potential, m: f64) -> Result<EnergyReport> {
    LocalizedEnergy::new(mask.clone(), kernel.clone(), phi.clone(), m)?.energy(v)
}

/// One-shot gradient of F_n(·, A) at v.
pub fn gradient_fn(v: &VectorField, mask: &SubdomainMask, kernel: &Kernel, phi: &Potential, m: f64) -> Result<VectorField> {
    LocalizedEnergy::new(mask.clone(), kernel.clone(), phi.clone(), m)?.gradient(v)
}

/// Σ_nodes l·u times the cell volume.
pub fn load_term(u: &VectorField, l: &LoadField) -> Result<f64> {
    check_same_grid(u.grid(), l.grid())?;
    let vol = u.grid().cell_volume();
    let terms: Vec<f64> = u
        .values()
        .iter()
        .zip(l.values())
        .map(|(a, b)| a * b * vol)
        .collect();
    Ok(pairwise_sum(&terms))
}

/// E_ε(u) = ε⁻² ∬ w(y − x, s_m[i + εu](y, x)) − ∫ l·u over the whole grid.
pub fn energy_e_eps(u: &VectorField, w: &MicroPotential, m: f64, eps: f64, load: Option<&LoadField>) -> Result<EnergyReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("ε must be positive, got {eps}")));
    }
    if !(m >= 1.0) {
        return Err(Error::InvalidParameter(format!("strain order m must be >= 1, got {m}")));
    }
    let grid = *u.grid();
    let d = grid.dim();
    check_finite(u.values())?;
    let mask = SubdomainMask::full(grid);
    let stencil = Stencil::build(&grid, w.weight.support_radius(), Cutoff::default(), |r| w.weight.eval(r))?;
    let vals = u.values();
    let inv = 1.0 / (eps * eps);
    let (value, pair_count) = pair_sum(&mask, &stencil, |i, j, e| {
        let mut zeta = [0.0; MAX_DIM];
        for k in 0..d {
            zeta[k] = (vals[j * d + k] - vals[i * d + k]) / e.r;
        }
        let s = strain_perturbed(m, &e.dir[..d], &zeta[..d], eps).ok_or(Error::StrainDomain {
            i,
            j,
            stretch: 0.0,
        })?;
        Ok(e.weight * w.psi.eval(e.r, s) * inv)
    })?;
    let load = match load {
        Some(l) => load_term(u, l)?,
        None => 0.0,
    };
    Ok(EnergyReport {
        value: value - load,
        pair_count,
        skipped_diagonal: grid.len(),
        h: grid.h_eff(),
        est_error: None,
    })
}

/// E_0(u) = ½ ∬ ρ(y − x)(𝒟u·𝒟i)² − ∫ l·u with ρ(r) given as a profile on
/// [0, radius].
pub fn energy_e0(u: &VectorField, rho: impl Fn(f64) -> f64, radius: f64, load: Option<&LoadField>) -> Result<EnergyReport> {
    let grid = *u.grid();
    check_finite(u.values())?;
    let mask = SubdomainMask::full(grid);
    let stencil = Stencil::build(&grid, radius, Cutoff::default(), rho)?;
    let (sum, pair_count) = projected_square_sum(u, &mask, &stencil)?;
    let load = match load {
        Some(l) => load_term(u, l)?,
        None => 0.0,
    };
    Ok(EnergyReport {
        value: 0.5 * sum - load,
        pair_count,
        skipped_diagonal: grid.len(),
        h: grid.h_eff(),
        est_error: None,
    })
}

/// E_0 with ρ = k ∂²Ψ/∂s²(·, 0) derived from the micro-potential.
pub fn energy_e0_for(u: &VectorField, w: &MicroPotential, load: Option<&LoadField>) -> Result<EnergyReport> {
    let rho = w.interaction_profile()?;
    energy_e0(u, rho, w.weight.support_radius(), load)
}

fn projected_square_sum(u: &VectorField, mask: &SubdomainMask, stencil: &Stencil) -> Result<(f64, usize)> {
    let d = u.grid().dim();
    let vals = u.values();
    pair_sum(mask, stencil, |i, j, e| {
        let mut a = 0.0;
        for k in 0..d {
            a += e.dir[k] * (vals[j * d + k] - vals[i * d + k]);
        }
        a /= e.r;
        Ok(e.weight * a * a)
    })
}

/// [v]^p = ∬_{A×A} ρ(x − y)|v(x) − v(y)|^p/|x − y|^p (the p-th power).
pub fn seminorm_w(v: &VectorField, kernel: &Kernel, p: f64, mask: &SubdomainMask) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::InvalidParameter(format!("seminorm exponent must exceed 1, got {p}")));
    }
    check_same_grid(v.grid(), mask.grid())?;
    check_finite(v.values())?;
    let d = v.grid().dim();
    let stencil = Stencil::build(mask.grid(), kernel.support_radius(), Cutoff::default(), |r| kernel.eval(r))?;
    let vals = v.values();
    Ok(pair_sum(mask, &stencil, |i, j, e| Ok(e.weight * stretch(vals, d, i, j, e.r).powf(p)))?.0)
}

/// [u]_{X_ρ} = ∬ ρ(y − x)(𝒟u(y, x)·𝒟i(y, x))² over the whole grid.
pub fn seminorm_xrho(u: &VectorField, rho: impl Fn(f64) -> f64, radius: f64) -> Result<f64> {
    check_finite(u.values())?;
    let mask = SubdomainMask::full(*u.grid());
    let stencil = Stencil::build(u.grid(), radius, Cutoff::default(), rho)?;
    Ok(projected_square_sum(u, &mask, &stencil)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::materials::catalog_potential;
    use approx::assert_abs_diff_eq;

    #[test]
    fn stencil_is_half_and_symmetric_in_mass() {
        let g = Grid::unit(2, 40).unwrap();
        let k = Kernel::box_kernel(2, 0.1).unwrap();
        let st = Stencil::build(&g, 0.1, Cutoff::PartialVolume, |r| k.eval(r)).unwrap();
        let mass: f64 = 2.0 * st.entries.iter().map(|e| e.weight).sum::<f64>() / g.cell_volume();
        assert!((mass - 1.0).abs() < 0.02, "discrete mass {mass}");
        assert!(st.entries.iter().all(|e| lex_positive(&e.offset, 2)));
    }

    #[test]
    fn rotation_has_zero_energy() {
        let g = Grid::unit(2, 24).unwrap();
        let mask = SubdomainMask::full(g);
        let v = VectorField::affine(g, &Mat::rotation2(0.6), &[0.3, -1.0]);
        let k = Kernel::box_kernel(2, 0.15).unwrap();
        let rep = energy_fn(&v, &mask, &k, &Potential::quadratic(), 1.0).unwrap();
        assert!(rep.value.abs() < 1e-24);
        assert_eq!(rep.skipped_diagonal, g.len());
        assert!(rep.pair_count > 0);
    }

    #[test]
    fn one_d_stretch_energy_approaches_mass() {
        // v = 2x, Φ = t², m = 1: strain ≡ 1 so F = ∬ρ over the strip,
        // which is 1 − δ/2 for the box kernel (missing half-mass near both ends)
        let delta = 0.05;
        let g = Grid::unit(1, 2000).unwrap();
        let mask = SubdomainMask::full(g);
        let v = VectorField::affine(g, &Mat::diag(&[2.0]), &[0.0]);
        let k = Kernel::box_kernel(1, delta).unwrap();
        let rep = energy_fn(&v, &mask, &k, &Potential::quadratic(), 1.0).unwrap();
        // the excluded diagonal cell carries mass h·ρ(0) = h/(2δ) per node
        let h = 1.0 / 2000.0;
        assert_abs_diff_eq!(rep.value, (1.0 - delta / 2.0) * (1.0 - h / (2.0 * delta)), epsilon = 2e-4);
    }

    #[test]
    fn gradient_of_linear_field_in_the_interior_vanishes() {
        let g = Grid::unit(1, 64).unwrap();
        let mask = SubdomainMask::full(g);
        let v = VectorField::affine(g, &Mat::diag(&[2.0]), &[0.0]);
        let k = Kernel::box_kernel(1, 0.1).unwrap();
        let grad = gradient_fn(&v, &mask, &k, &Potential::quadratic(), 1.0).unwrap();
        for i in 8..56 {
            assert!(grad.get(i)[0].abs() < 1e-14);
        }
        assert!(grad.get(0)[0] < 0.0 && grad.get(63)[0] > 0.0);
    }

    #[test]
    fn kinked_potential_has_no_gradient() {
        let g = Grid::unit(1, 16).unwrap();
        let mask = SubdomainMask::full(g);
        let v = VectorField::identity(g);
        let k = Kernel::box_kernel(1, 0.2).unwrap();
        let phi = Potential::KinkedPower { coef: 1.0, p: 2.0, slope: 1.0 };
        assert!(matches!(
            gradient_fn(&v, &mask, &k, &phi, 1.0),
            Err(Error::NonDifferentiable(_))
        ));
        assert!(energy_fn(&v, &mask, &k, &phi, 1.0).is_ok());
    }

    #[test]
    fn collinear_quadratic_linearization_is_exact() {
        let g = Grid::unit(1, 100).unwrap();
        let u = VectorField::identity(g);
        let k = Kernel::box_kernel(1, 0.1).unwrap();
        let w = catalog_potential("quadratic", &[("c", 1.0)], k).unwrap();
        let e0 = energy_e0_for(&u, &w, None).unwrap().value;
        for eps in [0.5, 0.1, 0.01] {
            let e = energy_e_eps(&u, &w, 1.0, eps, None).unwrap().value;
            assert!((e - e0).abs() <= 1e-12 * e0.abs().max(1.0));
        }
    }

    #[test]
    fn strain_domain_violation_is_reported() {
        let g = Grid::unit(1, 10).unwrap();
        // i + εu collapses neighbouring nodes for u = −x, ε = 1
        let u = VectorField::affine(g, &Mat::diag(&[-1.0]), &[0.0]);
        let k = Kernel::box_kernel(1, 0.25).unwrap();
        let w = catalog_potential("quartic", &[], k).unwrap();
        assert!(matches!(
            energy_e_eps(&u, &w, 1.0, 1.0, None),
            Err(Error::StrainDomain { .. })
        ));
    }

    #[test]
    fn load_term_midpoint() {
        let g = Grid::unit(1, 4).unwrap();
        let u = VectorField::identity(g);
        let l = VectorField::from_fn(g, |_, out| out[0] = 2.0);
        // Σ 2·x_i·h = 2·(0.125+0.375+0.625+0.875)·0.25 = 1
        assert_abs_diff_eq!(load_term(&u, &l).unwrap(), 1.0, epsilon = 1e-15);
    }
}
