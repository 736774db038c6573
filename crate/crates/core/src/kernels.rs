//! Radial localizing kernels ρ with unit mass, rescaled and fractional
//! families, and the checks on kernel sequences used by the localization
//! experiments.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::{ball_volume, radial_integral, radial_integral_from_zero, sphere_area};

/// Relative tolerance for normalization constants computed by quadrature.
pub const MASS_TOL: f64 = 1e-6;

/// Shape of a kernel on the unit ball before rescaling and normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Profile {
    /// Constant on the unit ball.
    Box,
    /// |ξ|^{−β} on the unit ball with β = d + sp − p.
    Fractional { s: f64, p: f64 },
    /// Constant on the annulus `inner ≤ |ξ| ≤ 1`.
    Annulus { inner: f64 },
    /// Piecewise-linear radial profile through `(r, value)` samples, zero
    /// beyond the last radius. Radii are divided by the last one, so the
    /// support of the unscaled profile is the unit ball.
    Tabulated { r: Vec<f64>, value: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    dim: usize,
    profile: Profile,
    /// Support radius; the kernel is the unit-ball profile rescaled by it.
    delta: f64,
    /// Multiplier making the unit-ball profile a unit-mass density.
    normalization: f64,
    singularity_exponent: f64,
}

impl Kernel {
    fn build(dim: usize, profile: Profile) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Unsupported(format!("kernel in dimension {dim}")));
        }
        let beta = match &profile {
            Profile::Fractional { s, p } => {
                if !(*s > 0.0 && *s < 1.0) {
                    return invalid(format!("fractional order s must lie in (0,1), got {s}"));
                }
                if !(*p > 1.0) || !p.is_finite() {
                    return invalid(format!("fractional exponent p must exceed 1, got {p}"));
                }
                dim as f64 + s * p - p
            }
            Profile::Annulus { inner } => {
                if !(*inner >= 0.0 && *inner < 1.0) {
                    return invalid(format!("annulus inner radius must lie in [0,1), got {inner}"));
                }
                0.0
            }
            Profile::Tabulated { r, value } => {
                validate_table(r, value)?;
                0.0
            }
            Profile::Box => 0.0,
        };
        if beta >= dim as f64 {
            return invalid(format!("singularity exponent {beta} is not integrable in d = {dim}"));
        }
        let mut k = Kernel {
            dim,
            profile,
            delta: 1.0,
            normalization: 1.0,
            singularity_exponent: beta.max(0.0),
        };
        // a negative exponent vanishes at the origin; keep the true value for
        // the mass integral but report 0 as the singularity
        let unit_mass = k.unit_profile_mass(beta);
        if !(unit_mass > 0.0) || !unit_mass.is_finite() {
            return invalid("kernel profile has zero or non-finite mass");
        }
        k.normalization = 1.0 / unit_mass;
        Ok(k)
    }

    /// ∫_{B(0,1)} shape(|ξ|) dξ, closed form where available.
    fn unit_profile_mass(&self, beta: f64) -> f64 {
        let d = self.dim as f64;
        match &self.profile {
            Profile::Box => ball_volume(self.dim),
            Profile::Annulus { inner } => ball_volume(self.dim) * (1.0 - inner.powf(d)),
            Profile::Fractional { .. } => sphere_area(self.dim) / (d - beta),
            Profile::Tabulated { .. } => {
                let shape = |r: f64| self.shape(r);
                sphere_area(self.dim) * radial_integral_from_zero(shape, self.dim, 1.0, 0.0)
            }
        }
    }

    /// Box kernel on B(0, δ).
    pub fn box_kernel(dim: usize, delta: f64) -> Result<Self> {
        Self::build(dim, Profile::Box)?.rescaled(delta)
    }

    /// ρ_s(ξ) = C(1−s)|ξ|^{−(d+sp−p)} on the unit ball.
    pub fn fractional(dim: usize, s: f64, p: f64) -> Result<Self> {
        Self::build(dim, Profile::Fractional { s, p })
    }

    pub fn annulus(dim: usize, inner: f64, delta: f64) -> Result<Self> {
        Self::build(dim, Profile::Annulus { inner })?.rescaled(delta)
    }

    pub fn tabulated(dim: usize, r: Vec<f64>, value: Vec<f64>, delta: f64) -> Result<Self> {
        Self::build(dim, Profile::Tabulated { r, value })?.rescaled(delta)
    }

    pub fn from_profile(dim: usize, profile: Profile, delta: f64) -> Result<Self> {
        Self::build(dim, profile)?.rescaled(delta)
    }

    /// ρ_δ(ξ) = δ^{−d} ρ(ξ/δ) relative to the current kernel; the support
    /// radius is multiplied by δ.
    pub fn rescaled(&self, delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return invalid(format!("rescaling factor must be positive, got {delta}"));
        }
        let mut k = self.clone();
        k.delta = self.delta * delta;
        Ok(k)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn support_radius(&self) -> f64 {
        self.delta
    }

    /// Multiplier of the unit-ball profile; for the fractional family this
    /// is C(1−s).
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// The constant C in C(1−s)|ξ|^{−β}, if fractional.
    pub fn fractional_constant(&self) -> Option<f64> {
        match self.profile {
            Profile::Fractional { s, .. } => Some(self.normalization / (1.0 - s)),
            _ => None,
        }
    }

    /// Exponent β with ρ(ξ) ~ |ξ|^{−β} near 0 (0 for bounded kernels).
    pub fn singularity_exponent(&self) -> f64 {
        self.singularity_exponent
    }

    fn raw_beta(&self) -> f64 {
        match self.profile {
            Profile::Fractional { s, p } => self.dim as f64 + s * p - p,
            _ => 0.0,
        }
    }

    /// Unnormalized profile on the unit ball.
    fn shape(&self, t: f64) -> f64 {
        if !(0.0..=1.0).contains(&t) {
            return 0.0;
        }
        match &self.profile {
            Profile::Box => 1.0,
            Profile::Fractional { .. } => t.powf(-self.raw_beta()),
            Profile::Annulus { inner } => {
                if t >= *inner {
                    1.0
                } else {
                    0.0
                }
            }
            Profile::Tabulated { r, value } => {
                let rmax = r[r.len() - 1];
                interp_linear(r, value, t * rmax)
            }
        }
    }

    /// ρ(|ξ|).
    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        if r > self.delta {
            return 0.0;
        }
        self.normalization * self.shape(r / self.delta) / self.delta.powi(self.dim as i32)
    }

    /// ∫ ρ over the annulus a < |ξ| < b, by radial quadrature.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        let b = b.min(self.delta);
        if b <= a {
            return 0.0;
        }
        let area = sphere_area(self.dim);
        if a <= 0.0 {
            let beta = self.raw_beta().max(0.0);
            area * radial_integral_from_zero(|r| self.eval(r), self.dim, b, beta)
        } else {
            area * radial_integral(|r| self.eval(r), self.dim, a, b)
        }
    }

    /// ∫_{R^d} ρ, computed by quadrature (independent of the closed-form
    /// normalization).
    pub fn mass(&self) -> f64 {
        self.mass_between(0.0, self.delta)
    }

    /// ∫_{|ξ| > r} ρ.
    pub fn tail_mass(&self, r: f64) -> f64 {
        if r >= self.delta {
            return 0.0;
        }
        match self.profile {
            // closed forms keep exact zeros and avoid cancellation
            Profile::Box => {
                let t = r.max(0.0) / self.delta;
                1.0 - t.powi(self.dim as i32)
            }
            Profile::Fractional { .. } => {
                let t = r.max(0.0) / self.delta;
                let gamma = self.dim as f64 - self.raw_beta();
                1.0 - t.powf(gamma)
            }
            _ => self.mass_between(r.max(0.0), self.delta),
        }
    }

    /// I(δ) = ∫_{|z|>δ} ρ(z)/|z|^p dz.
    pub fn singular_moment(&self, delta: f64, p: f64) -> f64 {
        let area = sphere_area(self.dim);
        area * radial_integral(|r| self.eval(r) * r.powf(-p), self.dim, delta, self.delta)
    }
}

fn validate_table(r: &[f64], value: &[f64]) -> Result<()> {
    if r.len() != value.len() || r.len() < 2 {
        return invalid("tabulated kernel needs at least two (r, value) samples of equal length");
    }
    if r[0] < 0.0 || r.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("tabulated kernel radii must be nonnegative and strictly increasing");
    }
    if value.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return invalid("tabulated kernel values must be finite and nonnegative");
    }
    Ok(())
}

fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let last = xs.len() - 1;
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[last] {
        return if x == xs[last] { ys[last] } else { 0.0 };
    }
    let k = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let (y0, y1) = (ys[k - 1], ys[k]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// How the n-th member of a kernel sequence is generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum KernelSequence {
    /// ρ_n = base rescaled to δ(n) = delta0 · n^{−power}.
    Rescaled { base: Kernel, delta0: f64, power: f64 },
    /// Fractional kernels with s(n) = 1 − 1/(n+1) at fixed p.
    FractionalToOne { dim: usize, p: f64 },
    /// The same kernel for every n (never localizes).
    Constant { kernel: Kernel },
}

impl KernelSequence {
    pub fn rescaled(base: Kernel, delta0: f64, power: f64) -> Result<Self> {
        if !(delta0 > 0.0) || !(power > 0.0) {
            return invalid("rescaled kernel sequence needs delta0 > 0 and power > 0");
        }
        Ok(Self::Rescaled { base, delta0, power })
    }

    pub fn horizon(&self, n: usize) -> f64 {
        match self {
            KernelSequence::Rescaled { base, delta0, power } => {
                base.support_radius() * delta0 * (n as f64).powf(-power)
            }
            KernelSequence::FractionalToOne { .. } => 1.0,
            KernelSequence::Constant { kernel } => kernel.support_radius(),
        }
    }

    pub fn kernel(&self, n: usize) -> Result<Kernel> {
        if n == 0 {
            return invalid("kernel sequences are indexed from n = 1");
        }
        match self {
            KernelSequence::Rescaled { base, delta0, power } => {
                base.rescaled(delta0 * (n as f64).powf(-power))
            }
            KernelSequence::FractionalToOne { dim, p } => {
                Kernel::fractional(*dim, 1.0 - 1.0 / (n as f64 + 1.0), *p)
            }
            KernelSequence::Constant { kernel } => Ok(kernel.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub radius: f64,
    pub tails: Vec<f64>,
    pub pass: bool,
}

/// Tail masses t_n = ∫_{|ξ|>r} ρ_n for n = 1..=n_max. Passes when the last
/// tail is below 1e−3 and the sequence is non-increasing from some index on
/// (strictly decreasing or identically zero there).
pub fn check_assumption_a(seq: &KernelSequence, radius: f64, n_max: usize) -> Result<TailReport> {
    if !(radius > 0.0) {
        return invalid("tail radius must be positive");
    }
    let tails = (1..=n_max)
        .map(|n| seq.kernel(n).map(|k| k.tail_mass(radius)))
        .collect::<Result<Vec<_>>>()?;
    let last = *tails.last().unwrap_or(&f64::INFINITY);
    // index from which the tail is non-increasing
    let mut start = tails.len().saturating_sub(1);
    while start > 0 && tails[start - 1] >= tails[start] {
        start -= 1;
    }
    let settled = start + 1 < tails.len() || last == 0.0;
    Ok(TailReport {
        radius,
        pass: last < 1e-3 && settled,
        tails,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityConditionReport {
    /// I(2^{−j}) for j = 1..=12.
    pub integrals: Vec<f64>,
    /// Ratio of the last two increments I(2^{−12}) − I(2^{−11}) over
    /// I(2^{−11}) − I(2^{−10}).
    pub increment_ratio: f64,
    pub divergent: bool,
}

/// Decides whether I(δ) = ∫_{|z|>δ} ρ/|z|^p → ∞ as δ → 0 from the dyadic
/// samples δ = 2^{−j}, j = 1..=12. A convergent tail integrand r^{γ−1}
/// (γ > 0) gives increments shrinking by 2^{−γ}; logarithmic or power
/// divergence keeps the increment ratio at or above one.
pub fn check_density_condition(k: &Kernel, p: f64) -> Result<DensityConditionReport> {
    if !(p > 1.0) {
        return invalid(format!("density condition needs p > 1, got {p}"));
    }
    let integrals: Vec<f64> = (1..=12)
        .map(|j| k.singular_moment(2f64.powi(-j), p))
        .collect();
    let n = integrals.len();
    let d_last = integrals[n - 1] - integrals[n - 2];
    let d_prev = integrals[n - 2] - integrals[n - 3];
    let scale = integrals[n - 1].abs().max(1e-300);
    let (ratio, divergent) = if d_last <= 1e-13 * scale {
        (0.0, false)
    } else if d_prev <= 0.0 {
        (f64::INFINITY, true)
    } else {
        let r = d_last / d_prev;
        (r, r >= 0.999)
    };
    Ok(DensityConditionReport {
        integrals,
        increment_ratio: ratio,
        divergent,
    })
}
