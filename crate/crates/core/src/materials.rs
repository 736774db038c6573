//! Nonlinear bond strains, convex profiles Φ with p-growth, the catalog of
//! micro-potentials w = kΨ and one-dimensional convex envelopes.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::Kernel;
use crate::linalg::dot;

/// s_m(t) = (t^m − 1)/m for a bond stretch t = |𝒟v| ≥ 0.
#[inline]
pub fn strain(m: f64, t: f64) -> f64 {
    if m == 1.0 {
        t - 1.0
    } else if m == 2.0 {
        0.5 * (t * t - 1.0)
    } else {
        (t.powf(m) - 1.0) / m
    }
}

/// Derivative ds_m/dt = t^{m−1}.
#[inline]
pub fn strain_derivative(m: f64, t: f64) -> f64 {
    if m == 1.0 {
        1.0
    } else if m == 2.0 {
        t
    } else {
        t.powf(m - 1.0)
    }
}

/// s̃_m(ν, εζ) = s_m(|ν + εζ|) evaluated without cancellation for small ε:
/// |ν + εζ|² = 1 + 2εν·ζ + ε²|ζ|², so s̃_m = expm1((m/2) ln1p(·))/m.
/// Returns `None` when the deformed bond has zero length.
#[inline]
pub fn strain_perturbed(m: f64, nu: &[f64], zeta: &[f64], eps: f64) -> Option<f64> {
    let a = dot(nu, zeta);
    let z2 = dot(zeta, zeta);
    let q = eps * (2.0 * a + eps * z2);
    if q <= -1.0 {
        return None;
    }
    if m == 2.0 {
        return Some(0.5 * q);
    }
    Some((0.5 * m * q.ln_1p()).exp_m1() / m)
}

/// Splits s̃_m(ν, εζ) = εν·ζ + ε²ψ into its linear term and the remainder ψ.
/// At ε = 0 the remainder is its limit (|ζ|² + (m − 2)(ν·ζ)²)/2.
pub fn strain_taylor(m: f64, nu: &[f64], zeta: &[f64], eps: f64) -> Result<(f64, f64)> {
    if m < 1.0 {
        return invalid(format!("strain order m must be >= 1, got {m}"));
    }
    if eps < 0.0 {
        return invalid("perturbation size must be nonnegative");
    }
    if (dot(nu, nu) - 1.0).abs() > 1e-12 {
        return invalid("bond direction must be a unit vector");
    }
    let a = dot(nu, zeta);
    if eps == 0.0 {
        return Ok((0.0, 0.5 * (dot(zeta, zeta) + (m - 2.0) * a * a)));
    }
    let s = strain_perturbed(m, nu, zeta, eps).ok_or(Error::StrainDomain {
        i: 0,
        j: 0,
        stretch: 0.0,
    })?;
    let lin = eps * a;
    Ok((lin, (s - lin) / (eps * eps)))
}

/// The convex profile Φ acting on |s|.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    /// Φ(a) = coef·a^p.
    Power { coef: f64, p: f64 },
    /// Φ(a) = coef·a^p + slope·a, non-differentiable at 0 when slope > 0.
    KinkedPower { coef: f64, p: f64, slope: f64 },
    /// Linear interpolation through samples (a_k, Φ_k) starting at (0, 0),
    /// extended beyond the last sample by Φ_last·(a/a_last)^p.
    Tabulated { a: Vec<f64>, phi: Vec<f64>, p: f64 },
}

impl Potential {
    pub fn power(coef: f64, p: f64) -> Result<Self> {
        let pot = Potential::Power { coef, p };
        pot.validate()?;
        Ok(pot)
    }

    /// Φ(t) = t².
    pub fn quadratic() -> Self {
        Potential::Power { coef: 1.0, p: 2.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Potential::Power { coef, p } => check_coef_p(*coef, *p),
            Potential::KinkedPower { coef, p, slope } => {
                check_coef_p(*coef, *p)?;
                if !(*slope >= 0.0) || !slope.is_finite() {
                    return invalid("kinked potential slope must be nonnegative");
                }
                Ok(())
            }
            Potential::Tabulated { a, phi, p } => {
                if !(*p > 1.0) || !p.is_finite() {
                    return invalid("tabulated potential needs a growth exponent p > 1");
                }
                if a.len() != phi.len() || a.len() < 2 {
                    return invalid("tabulated potential needs at least two (a, Φ) samples");
                }
                if a[0] != 0.0 || phi[0] != 0.0 {
                    return invalid("tabulated potential must start at (0, 0)");
                }
                if a.windows(2).any(|w| w[1] <= w[0]) {
                    return invalid("tabulated potential abscissae must increase strictly");
                }
                if phi.iter().skip(1).any(|v| !(*v > 0.0) || !v.is_finite()) {
                    return invalid("tabulated potential must be positive away from 0");
                }
                let slopes: Vec<f64> = (1..a.len())
                    .map(|k| (phi[k] - phi[k - 1]) / (a[k] - a[k - 1]))
                    .collect();
                if slopes.iter().any(|s| *s < 0.0) {
                    return invalid("tabulated potential must be nondecreasing");
                }
                if slopes.windows(2).any(|w| w[1] < w[0] - 1e-12 * w[0].abs().max(1.0)) {
                    return invalid("tabulated potential must be convex");
                }
                // the power-law tail must not bend below the last chord
                let last = a.len() - 1;
                let tail_slope = p * phi[last] / a[last];
                if tail_slope < slopes[slopes.len() - 1] - 1e-12 {
                    return invalid("power-law extrapolation breaks convexity at the last sample");
                }
                Ok(())
            }
        }
    }

    pub fn exponent(&self) -> f64 {
        match self {
            Potential::Power { p, .. }
            | Potential::KinkedPower { p, .. }
            | Potential::Tabulated { p, .. } => *p,
        }
    }

    /// Φ(a) for a ≥ 0.
    #[inline]
    pub fn eval(&self, a: f64) -> f64 {
        match self {
            Potential::Power { coef, p } => coef * pow(a, *p),
            Potential::KinkedPower { coef, p, slope } => coef * pow(a, *p) + slope * a,
            Potential::Tabulated { a: xs, phi, p } => {
                let last = xs.len() - 1;
                if a >= xs[last] {
                    return phi[last] * pow(a / xs[last], *p);
                }
                let k = xs.partition_point(|&v| v <= a).max(1);
                let t = (a - xs[k - 1]) / (xs[k] - xs[k - 1]);
                phi[k - 1] + t * (phi[k] - phi[k - 1])
            }
        }
    }

    /// Right derivative Φ'(a) for a ≥ 0.
    #[inline]
    pub fn derivative(&self, a: f64) -> f64 {
        match self {
            Potential::Power { coef, p } => {
                if a == 0.0 {
                    0.0
                } else {
                    coef * p * pow(a, p - 1.0)
                }
            }
            Potential::KinkedPower { coef, p, slope } => {
                let base = if a == 0.0 { 0.0 } else { coef * p * pow(a, p - 1.0) };
                base + slope
            }
            Potential::Tabulated { a: xs, phi, p } => {
                let last = xs.len() - 1;
                if a >= xs[last] {
                    return p * phi[last] / xs[last] * pow(a / xs[last], p - 1.0);
                }
                let k = xs.partition_point(|&v| v <= a).max(1);
                (phi[k] - phi[k - 1]) / (xs[k] - xs[k - 1])
            }
        }
    }

    /// Whether Φ'(0+) = 0, so that Φ(|s|) is differentiable in s.
    pub fn is_differentiable(&self) -> bool {
        self.derivative(0.0) == 0.0
    }

    /// Growth constants (C₀, C₁) with C₀(a^p − 1) ≤ Φ(a) ≤ C₁(1 + a^p).
    pub fn growth_constants(&self) -> (f64, f64) {
        match self {
            Potential::Power { coef, .. } => (*coef, *coef),
            Potential::KinkedPower { coef, slope, .. } => (*coef, coef + slope),
            Potential::Tabulated { p, .. } => {
                let mut c0 = f64::INFINITY;
                let mut c1: f64 = 0.0;
                for k in 0..=600 {
                    let a = 10f64.powf(-3.0 + 6.0 * k as f64 / 600.0);
                    let phi = self.eval(a);
                    let ap = a.powf(*p);
                    if ap > 1.0 {
                        c0 = c0.min(phi / (ap - 1.0));
                    }
                    c1 = c1.max(phi / (1.0 + ap));
                }
                (c0, c1)
            }
        }
    }
}

fn check_coef_p(coef: f64, p: f64) -> Result<()> {
    if !(coef > 0.0) || !coef.is_finite() {
        return invalid(format!("potential coefficient must be positive, got {coef}"));
    }
    if !(p > 1.0) || !p.is_finite() {
        return invalid(format!("growth exponent p must exceed 1, got {p}"));
    }
    Ok(())
}

#[inline]
fn pow(a: f64, p: f64) -> f64 {
    if p == 2.0 {
        a * a
    } else if p == 4.0 {
        let a2 = a * a;
        a2 * a2
    } else {
        a.powf(p)
    }
}

/// Closure type for user-supplied Ψ(|ξ|, s).
pub type PsiFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// The strain profile Ψ(|ξ|, s) of a micro-potential.
#[derive(Clone)]
pub enum Psi {
    /// c s²/2 for s ≤ s₀, c s₀²/2 beyond.
    Mbm { c: f64, s0: f64 },
    /// Force c·s up to s₀, then decaying linearly to 0 at s₁.
    ModifiedMbm { c: f64, s0: f64, s1: f64 },
    /// f(|ξ| s²) with f(r) = f∞(1 − exp(−(a r + b r²))).
    Cohesive { f_inf: f64, a: f64, b: f64 },
    /// ((1 + s)² − 1)², the stretch form of (|𝒟v|² − 1)².
    Quartic,
    /// min{s², (s − s₀)²}.
    TwoWell { s0: f64 },
    /// c s².
    Quadratic { c: f64 },
    Custom { name: String, f: PsiFn },
}

impl fmt::Debug for Psi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psi::Mbm { c, s0 } => write!(f, "Mbm {{ c: {c}, s0: {s0} }}"),
            Psi::ModifiedMbm { c, s0, s1 } => write!(f, "ModifiedMbm {{ c: {c}, s0: {s0}, s1: {s1} }}"),
            Psi::Cohesive { f_inf, a, b } => write!(f, "Cohesive {{ f_inf: {f_inf}, a: {a}, b: {b} }}"),
            Psi::Quartic => write!(f, "Quartic"),
            Psi::TwoWell { s0 } => write!(f, "TwoWell {{ s0: {s0} }}"),
            Psi::Quadratic { c } => write!(f, "Quadratic {{ c: {c} }}"),
            Psi::Custom { name, .. } => write!(f, "Custom {{ name: {name:?} }}"),
        }
    }
}

impl Psi {
    #[inline]
    pub fn eval(&self, r: f64, s: f64) -> f64 {
        match self {
            Psi::Mbm { c, s0 } => {
                let t = s.min(*s0);
                0.5 * c * t * t
            }
            Psi::ModifiedMbm { c, s0, s1 } => {
                if s <= *s0 {
                    0.5 * c * s * s
                } else {
                    let t = s.min(*s1) - s0;
                    let w = s1 - s0;
                    // ∫_{s₀}^{s₀+t} c s₀ (s₁ − u)/(s₁ − s₀) du
                    0.5 * c * s0 * s0 + c * s0 * (t - 0.5 * t * t / w)
                }
            }
            Psi::Cohesive { f_inf, a, b } => {
                let x = r * s * s;
                -f_inf * (-(a * x + b * x * x)).exp_m1()
            }
            Psi::Quartic => {
                let u = s * (2.0 + s);
                u * u
            }
            Psi::TwoWell { s0 } => (s * s).min((s - s0) * (s - s0)),
            Psi::Quadratic { c } => c * s * s,
            Psi::Custom { f, .. } => f(r, s),
        }
    }

    /// ∂²Ψ/∂s²(|ξ|, 0), in closed form except for custom profiles.
    pub fn second_derivative_at_zero(&self, r: f64) -> Result<f64> {
        Ok(match self {
            Psi::Mbm { c, .. } | Psi::ModifiedMbm { c, .. } => *c,
            Psi::Cohesive { f_inf, a, .. } => 2.0 * r * f_inf * a,
            Psi::Quartic => 8.0,
            Psi::TwoWell { .. } => 2.0,
            Psi::Quadratic { c } => 2.0 * c,
            Psi::Custom { f, .. } => fd_second_derivative_at_zero(|s| f(r, s))?,
        })
    }
}

/// Central second difference at 0 with step 1e−5 and one Richardson step.
/// Fails when the one-sided second differences disagree, which signals a
/// kink at 0.
pub fn fd_second_derivative_at_zero(f: impl Fn(f64) -> f64) -> Result<f64> {
    let h = 1e-5;
    let f0 = f(0.0);
    let central = |h: f64| (f(h) - 2.0 * f0 + f(-h)) / (h * h);
    let d_h = central(h);
    let d_2h = central(2.0 * h);
    let rich = (4.0 * d_h - d_2h) / 3.0;
    let hs = 1e-3;
    let right = (f(2.0 * hs) - 2.0 * f(hs) + f0) / (hs * hs);
    let left = (f(-2.0 * hs) - 2.0 * f(-hs) + f0) / (hs * hs);
    let slope_right = (f(hs) - f0) / hs;
    let slope_left = (f0 - f(-hs)) / hs;
    let curv = right.abs().max(left.abs());
    let slope_tol = 2.0 * hs * curv + 1e-6 * (1.0 + slope_right.abs() + slope_left.abs());
    if (slope_right - slope_left).abs() > slope_tol || (right - left).abs() > 0.1 * (1.0 + curv) {
        return Err(Error::NonDifferentiable(
            "one-sided second differences of Ψ at s = 0 disagree".into(),
        ));
    }
    if !rich.is_finite() {
        return Err(Error::NonFinite("second derivative of Ψ at 0".into()));
    }
    Ok(rich)
}

/// Constants (c₁, c₂, δ₀) of the small-strain bounds kΨ ≥ c₁ks² and
/// |∂²Ψ/∂s²| ≤ c₂ for |s| < δ₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hooke {
    pub c1: f64,
    pub c2: f64,
    pub delta0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conformance {
    pub zero_at_origin: bool,
    pub flat_at_origin: bool,
    pub positive_curvature: bool,
    /// inf over |s| ≥ s' and ξ of Ψ is positive for every s' > 0.
    pub coercive_away_from_zero: bool,
    pub hooke_lower: bool,
    pub hooke_curvature: bool,
    /// Ψ(ξ, ·) is bounded: the bond force eventually vanishes.
    pub bounded: bool,
    pub notes: Vec<String>,
}

impl Conformance {
    pub fn satisfies_all(&self) -> bool {
        self.zero_at_origin
            && self.flat_at_origin
            && self.positive_curvature
            && self.coercive_away_from_zero
            && self.hooke_lower
            && self.hooke_curvature
    }
}

/// w(ξ, s) = k(|ξ|) Ψ(|ξ|, s).
#[derive(Debug, Clone)]
pub struct MicroPotential {
    pub name: String,
    pub weight: Kernel,
    pub psi: Psi,
    pub hooke: Hooke,
}

/// Catalog tags accepted by [`catalog_potential`].
pub const CATALOG: &[(&str, &str)] = &[
    ("mbm", "microelastic brittle: c s²/2 up to s0, constant beyond (params c, s0)"),
    ("modified_mbm", "force c s up to s0, linear decay to zero at s1 (params c, s0, s1)"),
    ("cohesive", "f(|ξ| s²), f(r) = f_inf (1 − exp(−(a r + b r²))) (params f_inf, a, b)"),
    ("quartic", "((1 + s)² − 1)², i.e. (|Dv|² − 1)² in the stretch (no params)"),
    ("two_well", "min{s², (s − s0)²} (param s0)"),
    ("quadratic", "c s² (param c)"),
];

fn param(params: &[(&str, f64)], key: &str, default: Option<f64>) -> Result<f64> {
    params
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .or(default)
        .ok_or_else(|| Error::InvalidParameter(format!("missing parameter `{key}`")))
}

/// Builds a catalog micro-potential with weight `k` and its Hooke constants.
pub fn catalog_potential(tag: &str, params: &[(&str, f64)], weight: Kernel) -> Result<MicroPotential> {
    let positive = |name: &str, v: f64| -> Result<f64> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            invalid(format!("parameter `{name}` must be positive, got {v}"))
        }
    };
    let (psi, hooke) = match tag {
        "mbm" => {
            let c = positive("c", param(params, "c", Some(2.0))?)?;
            let s0 = positive("s0", param(params, "s0", Some(0.1))?)?;
            (Psi::Mbm { c, s0 }, Hooke { c1: c / 2.0, c2: c, delta0: s0 })
        }
        "modified_mbm" => {
            let c = positive("c", param(params, "c", Some(2.0))?)?;
            let s0 = positive("s0", param(params, "s0", Some(0.1))?)?;
            let s1 = param(params, "s1", Some(2.0 * s0))?;
            if !(s1 > s0) {
                return invalid("modified MBM needs s1 > s0");
            }
            (Psi::ModifiedMbm { c, s0, s1 }, Hooke { c1: c / 2.0, c2: c, delta0: s0 })
        }
        "cohesive" => {
            let f_inf = positive("f_inf", param(params, "f_inf", Some(1.0))?)?;
            let a = positive("a", param(params, "a", Some(1.0))?)?;
            let b = param(params, "b", Some(1.0))?;
            if !(2.0 * b > a * a) {
                return invalid("cohesive profile must be convex–concave: need 2b > a²");
            }
            let psi = Psi::Cohesive { f_inf, a, b };
            // Ψ/s² ~ f'(0)|ξ| degenerates as |ξ| → 0, so the constants are
            // fitted over the sampled bond lengths of the support
            let hooke = fit_hooke(&psi, &sample_radii(weight.support_radius()), 0.1);
            (psi, hooke)
        }
        "quartic" => (Psi::Quartic, Hooke { c1: 2.25, c2: 23.0, delta0: 0.5 }),
        "two_well" => {
            let s0 = positive("s0", param(params, "s0", Some(0.5))?)?;
            (Psi::TwoWell { s0 }, Hooke { c1: 1.0, c2: 2.0, delta0: s0 / 2.0 })
        }
        "quadratic" => {
            let c = positive("c", param(params, "c", Some(1.0))?)?;
            (Psi::Quadratic { c }, Hooke { c1: c, c2: 2.0 * c, delta0: 1.0 })
        }
        other => return Err(Error::InvalidParameter(format!("unknown catalog tag `{other}`"))),
    };
    Ok(MicroPotential {
        name: tag.to_string(),
        weight,
        psi,
        hooke,
    })
}

impl MicroPotential {
    pub fn custom(name: &str, weight: Kernel, f: PsiFn, hooke: Hooke) -> Self {
        Self {
            name: name.to_string(),
            weight,
            psi: Psi::Custom {
                name: name.to_string(),
                f,
            },
            hooke,
        }
    }

    /// w(ξ, s) for a bond of length r.
    #[inline]
    pub fn w(&self, r: f64, s: f64) -> f64 {
        self.weight.eval(r) * self.psi.eval(r, s)
    }

    /// ρ(ξ) = k(ξ)∂²Ψ/∂s²(ξ, 0) as a function of |ξ|.
    pub fn interaction_profile(&self) -> Result<impl Fn(f64) -> f64 + '_> {
        let radius = self.weight.support_radius();
        // probe once so that non-differentiable profiles fail up front
        self.psi.second_derivative_at_zero(0.5 * radius)?;
        Ok(move |r: f64| {
            self.weight.eval(r) * self.psi.second_derivative_at_zero(r).unwrap_or(f64::NAN)
        })
    }

    /// Samples conditions i)–iv) on a grid of bond lengths within the
    /// kernel support and strains in (−1, 4].
    pub fn conformance(&self) -> Conformance {
        let radius = self.weight.support_radius();
        let radii = sample_radii(radius);
        let mut notes = Vec::new();
        let h = 1e-5;
        let mut zero = true;
        let mut flat = true;
        let mut curv = true;
        let mut coercive = true;
        let mut lower = true;
        let mut curv_bound = true;
        let mut bounded = true;
        let Hooke { c1, c2, delta0 } = self.hooke;
        for &r in &radii {
            let psi = |s: f64| self.psi.eval(r, s);
            zero &= psi(0.0).abs() <= 1e-14;
            let slope = (psi(h) - psi(-h)) / (2.0 * h);
            flat &= slope.abs() <= 1e-6;
            match self.psi.second_derivative_at_zero(r) {
                Ok(v) => curv &= v > 0.0,
                Err(_) => curv = false,
            }
            for k in 1..200 {
                let s = delta0 * (-1.0 + 2.0 * k as f64 / 200.0);
                if psi(s) < c1 * s * s * (1.0 - 1e-9) {
                    lower = false;
                }
                let hs = 1e-4;
                let d2 = (psi(s + hs) - 2.0 * psi(s) + psi(s - hs)) / (hs * hs);
                if d2.abs() > c2 * (1.0 + 1e-6) {
                    curv_bound = false;
                }
            }
            let big = psi(1e3);
            let bigger = psi(1e4);
            if bigger > big * (1.0 + 1e-9) + 1e-12 {
                bounded = false;
            }
            // positivity on |s| ≥ s' for a few s'
            for &sp in &[0.05, 0.2, 0.5, 0.9] {
                let mut samples: Vec<f64> = (0..400).map(|k| sp + (4.0 - sp) * k as f64 / 399.0).collect();
                samples.extend((0..100).map(|k| -sp - (0.999 - sp) * k as f64 / 99.0));
                let m = samples.iter().map(|&t| psi(t)).fold(f64::INFINITY, f64::min);
                if m <= 1e-14 {
                    coercive = false;
                }
            }
        }
        if let Psi::Cohesive { .. } = self.psi {
            // Ψ(ξ, s) = f(|ξ|s²) → 0 as |ξ| → 0 for every fixed s
            coercive = false;
            notes.push("infimum over bond lengths of f(|ξ| s²) is 0 for every s".into());
        }
        if let Psi::TwoWell { s0 } = self.psi {
            notes.push(format!("Ψ(s0) = 0 with s0 = {s0} ≠ 0"));
        }
        if bounded {
            notes.push("bounded potential: bond force vanishes for large strain".into());
        }
        Conformance {
            zero_at_origin: zero,
            flat_at_origin: flat,
            positive_curvature: curv,
            coercive_away_from_zero: coercive,
            hooke_lower: lower,
            hooke_curvature: curv_bound,
            bounded,
            notes,
        }
    }
}

fn sample_radii(radius: f64) -> Vec<f64> {
    (1..=8).map(|k| radius * k as f64 / 8.0).collect()
}

/// Hooke constants fitted by sampling |s| < δ₀ at the given bond lengths.
fn fit_hooke(psi: &Psi, radii: &[f64], delta0: f64) -> Hooke {
    let mut c1 = f64::INFINITY;
    let mut c2: f64 = 0.0;
    let hs = 1e-4;
    for &r in radii {
        for k in 1..200 {
            let s = delta0 * (-1.0 + 2.0 * k as f64 / 200.0);
            if s == 0.0 {
                continue;
            }
            c1 = c1.min(psi.eval(r, s) / (s * s));
            let d2 = (psi.eval(r, s + hs) - 2.0 * psi.eval(r, s) + psi.eval(r, s - hs)) / (hs * hs);
            c2 = c2.max(d2.abs());
        }
    }
    Hooke { c1: c1 * (1.0 - 1e-6), c2: c2 * (1.0 + 1e-3), delta0 }
}

/// ε⁻² w(ξ, s̃_m(ξ/|ξ|, εζ)).
pub fn rescaled_micro_energy(w: &MicroPotential, m: f64, xi: &[f64], zeta: &[f64], eps: f64) -> Result<f64> {
    let r = crate::linalg::norm(xi);
    if r == 0.0 {
        return Err(Error::Domain("bond vector ξ must be nonzero".into()));
    }
    if !(eps > 0.0) {
        return invalid("ε must be positive");
    }
    let nu: Vec<f64> = xi.iter().map(|x| x / r).collect();
    let s = strain_perturbed(m, &nu, zeta, eps).ok_or(Error::StrainDomain {
        i: 0,
        j: 0,
        stretch: 0.0,
    })?;
    if s <= -1.0 {
        return Err(Error::StrainDomain { i: 0, j: 0, stretch: (1.0 + m * s).max(0.0).powf(1.0 / m) });
    }
    Ok(w.w(r, s) / (eps * eps))
}

/// Discrete Legendre transform of samples (x_k, y_k) with increasing x.
/// Returns the slopes of the lower convex hull edges and the conjugate
/// values φ*(s) = max_k (s x_k − y_k) at those slopes.
pub fn legendre_transform(xs: &[f64], ys: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hull = lower_hull(xs, ys);
    let mut slopes = Vec::with_capacity(hull.len().saturating_sub(1));
    let mut conj = Vec::with_capacity(slopes.capacity());
    for w in hull.windows(2) {
        let (i, j) = (w[0], w[1]);
        let s = (ys[j] - ys[i]) / (xs[j] - xs[i]);
        slopes.push(s);
        // the maximum of s x − y is attained at both hull endpoints
        conj.push(s * xs[i] - ys[i]);
    }
    (slopes, conj)
}

fn lower_hull(xs: &[f64], ys: &[f64]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(xs.len());
    for k in 0..xs.len() {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // remove b when it lies on or above the chord a–k
            let cross = (xs[b] - xs[a]) * (ys[k] - ys[a]) - (ys[b] - ys[a]) * (xs[k] - xs[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(k);
    }
    hull
}

/// Lower convex envelope of tabulated data on an increasing grid, as the
/// biconjugate φ** evaluated at the grid points. The conjugate is taken on
/// the hull-edge slopes, so the result is exact for piecewise-affine data.
pub fn convex_envelope(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    assert_eq!(xs.len(), ys.len());
    if xs.len() <= 2 {
        return ys.to_vec();
    }
    let (slopes, conj) = legendre_transform(xs, ys);
    // φ**(x) = max_s (s x − φ*(s)); the maximizing slope index is monotone
    // in x, so a single sweep suffices
    let mut out = Vec::with_capacity(xs.len());
    let mut k = 0;
    for &x in xs {
        while k + 1 < slopes.len() && slopes[k + 1] * x - conj[k + 1] >= slopes[k] * x - conj[k] {
            k += 1;
        }
        let v = slopes[k] * x - conj[k];
        out.push(v);
    }
    // endpoints and hull vertices are reproduced exactly by the input
    let hull = lower_hull(xs, ys);
    for &i in &hull {
        out[i] = ys[i];
    }
    out
}

/// Samples φ on `n` equispaced points of [t_min, t_max] and returns the
/// grid with the convex envelope.
pub fn convexify_1d(phi: impl Fn(f64) -> f64, t_min: f64, t_max: f64, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n < 64 {
        return invalid(format!("convexification grid needs n >= 64, got {n}"));
    }
    if !(t_max > t_min) {
        return invalid("convexification interval is empty");
    }
    let xs: Vec<f64> = (0..n)
        .map(|k| t_min + (t_max - t_min) * k as f64 / (n - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs.iter().map(|&t| phi(t)).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::NonFinite("function to convexify".into()));
    }
    let env = convex_envelope(&xs, &ys);
    Ok((xs, env))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn strain_values() {
        assert_eq!(strain(1.0, 1.0), 0.0);
        assert_eq!(strain(1.0, 2.0), 1.0);
        assert_abs_diff_eq!(strain(2.0, 3f64.sqrt()), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(strain(3.0, 2.0), 7.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn taylor_examples() {
        let e1 = [1.0, 0.0];
        let e2 = [0.0, 1.0];
        let (lin, psi) = strain_taylor(2.0, &e1, &e1, 0.1).unwrap();
        assert_abs_diff_eq!(lin, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(psi, 0.5, epsilon = 1e-12);
        let (lin, psi) = strain_taylor(1.0, &e1, &e1, 0.1).unwrap();
        assert_abs_diff_eq!(lin, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(psi, 0.0, epsilon = 1e-12);
        let (lin, psi) = strain_taylor(1.0, &e1, &e2, 0.1).unwrap();
        assert_eq!(lin, 0.0);
        assert_abs_diff_eq!(psi, (1.01f64.sqrt() - 1.0) / 0.01, epsilon = 1e-12);
        assert_abs_diff_eq!(psi, 0.49876, epsilon = 1e-5);
        let (_, limit) = strain_taylor(1.0, &e1, &e2, 0.0).unwrap();
        assert_abs_diff_eq!(limit, 0.5);
    }

    #[test]
    fn power_potential_growth() {
        let p = Potential::power(1.0, 3.0).unwrap();
        assert_eq!(p.growth_constants(), (1.0, 1.0));
        assert!(p.is_differentiable());
        let k = Potential::KinkedPower { coef: 1.0, p: 2.0, slope: 0.5 };
        assert!(!k.is_differentiable());
        assert!(Potential::power(-1.0, 2.0).is_err());
        assert!(Potential::power(1.0, 1.0).is_err());
    }

    #[test]
    fn tabulated_potential_validation() {
        let ok = Potential::Tabulated { a: vec![0.0, 1.0, 2.0], phi: vec![0.0, 1.0, 4.0], p: 2.0 };
        ok.validate().unwrap();
        assert_abs_diff_eq!(ok.eval(1.5), 2.5);
        assert_abs_diff_eq!(ok.eval(4.0), 16.0);
        let nonconvex = Potential::Tabulated { a: vec![0.0, 1.0, 2.0], phi: vec![0.0, 2.0, 3.0], p: 2.0 };
        assert!(nonconvex.validate().is_err());
        let decreasing = Potential::Tabulated { a: vec![0.0, 1.0, 2.0], phi: vec![0.0, 2.0, 1.0], p: 2.0 };
        assert!(decreasing.validate().is_err());
    }

    #[test]
    fn interaction_kernel_of_catalog() {
        let k = Kernel::box_kernel(1, 1.0).unwrap();
        let mbm = catalog_potential("mbm", &[("c", 2.0), ("s0", 0.1)], k.clone()).unwrap();
        let rho = mbm.interaction_profile().unwrap();
        assert_abs_diff_eq!(rho(0.3), 2.0 * k.eval(0.3));
        let q = catalog_potential("quartic", &[], k.clone()).unwrap();
        assert_abs_diff_eq!(q.psi.second_derivative_at_zero(0.3).unwrap(), 8.0);
        let fd = fd_second_derivative_at_zero(|s| q.psi.eval(0.3, s)).unwrap();
        assert_abs_diff_eq!(fd, 8.0, epsilon = 1e-5);
        let coh = catalog_potential("cohesive", &[("f_inf", 1.0), ("a", 1.0), ("b", 1.0)], k.clone()).unwrap();
        let fd = fd_second_derivative_at_zero(|s| coh.psi.eval(0.7, s)).unwrap();
        assert_abs_diff_eq!(fd, coh.psi.second_derivative_at_zero(0.7).unwrap(), epsilon = 1e-5);
    }

    #[test]
    fn kink_is_rejected() {
        assert!(fd_second_derivative_at_zero(|s: f64| s.abs()).is_err());
        let k = Kernel::box_kernel(1, 1.0).unwrap();
        let custom = MicroPotential::custom(
            "abs",
            k,
            Arc::new(|_, s: f64| s.abs()),
            Hooke { c1: 1.0, c2: 1.0, delta0: 0.1 },
        );
        assert!(custom.interaction_profile().is_err());
    }

    #[test]
    fn conformance_reports() {
        let k = Kernel::box_kernel(1, 1.0).unwrap();
        let mbm = catalog_potential("mbm", &[("c", 2.0), ("s0", 0.1)], k.clone()).unwrap();
        let rep = mbm.conformance();
        assert!(rep.hooke_lower && rep.hooke_curvature && rep.zero_at_origin && rep.flat_at_origin);
        assert!(rep.bounded);
        let tw = catalog_potential("two_well", &[("s0", 0.5)], k.clone()).unwrap();
        let rep = tw.conformance();
        assert!(!rep.coercive_away_from_zero);
        assert!(rep.notes.iter().any(|n| n.contains("Ψ(s0) = 0")));
        let q = catalog_potential("quartic", &[], k.clone()).unwrap();
        let rep = q.conformance();
        assert!(rep.satisfies_all(), "{rep:?}");
        assert!(!rep.bounded);
        assert!(catalog_potential("nope", &[], k).is_err());
    }

    #[test]
    fn rescaled_energy_limit() {
        let k = Kernel::box_kernel(2, 1.0).unwrap();
        let q = catalog_potential("quartic", &[], k.clone()).unwrap();
        let xi = [0.3, 0.4];
        let zeta = [1.0, -0.5];
        let nu = [0.6, 0.8];
        let limit = 0.5 * 8.0 * k.eval(0.5) * dot(&nu, &zeta).powi(2);
        let v = rescaled_micro_energy(&q, 2.0, &xi, &zeta, 1e-3).unwrap();
        assert!((v - limit).abs() <= 0.01 * limit);
        let quad = catalog_potential("quadratic", &[("c", 1.0)], k.clone()).unwrap();
        let v = rescaled_micro_energy(&quad, 1.0, &[0.5, 0.0], &[1.0, 0.0], 0.01).unwrap();
        assert_abs_diff_eq!(v, k.eval(0.5), epsilon = 1e-12);
        let v = rescaled_micro_energy(&quad, 1.0, &[0.5, 0.0], &[0.0, 1.0], 1e-4).unwrap();
        assert!(v.abs() < 1e-6);
    }

    #[test]
    fn convex_envelope_examples() {
        let (xs, env) = convexify_1d(|t: f64| (t.abs() - 1.0).powi(2), -3.0, 3.0, 601).unwrap();
        let at = |t: f64| env[xs.iter().position(|x| (x - t).abs() < 1e-9).unwrap()];
        assert_abs_diff_eq!(at(0.5), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(at(2.0), 1.0, epsilon = 1e-9);
        let (_, env) = convexify_1d(|t| t * t, -2.0, 2.0, 101).unwrap();
        let (xs, _) = convexify_1d(|t| t * t, -2.0, 2.0, 101).unwrap();
        for (x, e) in xs.iter().zip(&env) {
            assert_abs_diff_eq!(*e, x * x, epsilon = 1e-12);
        }
    }
}
