//! Bounds on the limit energy density: the spherical lower bound, the
//! spherical average Φ̃, a lamination upper bound, the zero-set predicate
//! and the coercivity fit.
//!
//! The bounds depend on F only through FᵀF. They are evaluated on
//! diag(σ₁, …, σ_d), the singular values of F, so that the discrete
//! sphere rule does not break that invariance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::Mat;
use crate::materials::{convex_envelope, strain, Potential};
use crate::quadrature::SphereQuadrature;

/// Φ(m⁻¹(t^m − 1)₊).
#[inline]
pub fn lower_integrand(phi: &Potential, m: f64, t: f64) -> f64 {
    phi.eval(strain(m, t).max(0.0))
}

/// Φ(|m⁻¹(t^m − 1)|).
#[inline]
pub fn tilde_integrand(phi: &Potential, m: f64, t: f64) -> f64 {
    phi.eval(strain(m, t).abs())
}

fn check_dims(f: &Mat, q: &SphereQuadrature) -> Result<()> {
    if f.dim() != q.dim {
        return invalid(format!(
            "matrix of dimension {} with a sphere rule for d = {}",
            f.dim(),
            q.dim
        ));
    }
    if !f.is_finite() {
        return Err(Error::NonFinite("matrix entries".into()));
    }
    Ok(())
}

/// diag(σ₁, …, σ_d).
pub fn canonical(f: &Mat) -> Mat {
    Mat::diag(&f.singular_values())
}

/// ⨍ Φ(m⁻¹(|Fω|^m − 1)₊) dσ(ω) with the rule applied to F itself.
pub fn density_lower_in_frame(f: &Mat, phi: &Potential, m: f64, q: &SphereQuadrature) -> Result<f64> {
    check_dims(f, q)?;
    Ok(q.average_stretch(f, |t| lower_integrand(phi, m, t)))
}

/// ⨍ Φ(|m⁻¹(|Fω|^m − 1)|) dσ(ω) with the rule applied to F itself.
pub fn density_tilde_in_frame(f: &Mat, phi: &Potential, m: f64, q: &SphereQuadrature) -> Result<f64> {
    check_dims(f, q)?;
    Ok(q.average_stretch(f, |t| tilde_integrand(phi, m, t)))
}

/// Lower bound density, evaluated on the singular values of F.
pub fn density_lower(f: &Mat, phi: &Potential, m: f64, q: &SphereQuadrature) -> Result<f64> {
    check_dims(f, q)?;
    density_lower_in_frame(&canonical(f), phi, m, q)
}

/// Φ̃(F), evaluated on the singular values of F.
pub fn density_tilde(f: &Mat, phi: &Potential, m: f64, q: &SphereQuadrature) -> Result<f64> {
    check_dims(f, q)?;
    density_tilde_in_frame(&canonical(f), phi, m, q)
}

/// Grid sizes and ranges for the lamination search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LaminateSearch {
    /// Angles of the amplitude direction a on [0, 2π).
    pub directions: usize,
    /// Angles of the normal n on [0, π).
    pub normals: usize,
    /// Volume fractions λ in (0, 1).
    pub fractions: usize,
    /// Amplitudes |a| in (0, max_amplitude].
    pub magnitudes: usize,
    pub max_amplitude: f64,
    /// Compass-search iterations from the best grid point.
    pub refine_iters: usize,
    /// Points per axis of the singular-value grid for hierarchical
    /// axis-aligned laminates (0 disables them).
    pub axis_points: usize,
    /// Alternating convexification sweeps (each sweep convexifies along
    /// both axes).
    pub axis_levels: usize,
}

impl Default for LaminateSearch {
    fn default() -> Self {
        Self {
            directions: 64,
            normals: 32,
            fractions: 32,
            magnitudes: 16,
            max_amplitude: 4.0,
            refine_iters: 200,
            axis_points: 161,
            axis_levels: 2,
        }
    }
}

impl LaminateSearch {
    /// A small search for repeated evaluation.
    pub fn coarse() -> Self {
        Self {
            directions: 16,
            normals: 8,
            fractions: 8,
            magnitudes: 8,
            max_amplitude: 4.0,
            refine_iters: 60,
            axis_points: 41,
            axis_levels: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.directions < 1 || self.normals < 1 || self.fractions < 1 || self.magnitudes < 1 {
            return invalid("laminate search grid sizes must be positive");
        }
        if !(self.max_amplitude > 0.0) || !self.max_amplitude.is_finite() {
            return invalid("laminate amplitude bound must be positive");
        }
        if self.axis_points == 1 || self.axis_points == 2 {
            return invalid("axis grid needs at least 3 points (or 0 to disable)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaminateResult {
    /// min over Φ̃(F) and both laminate families.
    pub value: f64,
    pub tilde: f64,
    /// Best first-order laminate λΦ̃(F + (1−λ)a⊗n) + (1−λ)Φ̃(F − λa⊗n).
    pub one_level: f64,
    /// Best axis-aligned hierarchical laminate in the singular-value frame.
    pub hierarchical: Option<f64>,
    /// (a, n, λ) of the best first-order laminate.
    pub best_a: [f64; 2],
    pub best_n: [f64; 2],
    pub best_lambda: f64,
}

#[derive(Clone, Copy)]
struct LamParams {
    alpha: f64,
    beta: f64,
    lambda: f64,
    amp: f64,
}

fn laminate_value(d: &Mat, p: LamParams, eval: &dyn Fn(&Mat) -> f64) -> f64 {
    let a = [p.amp * p.alpha.cos(), p.amp * p.alpha.sin()];
    let n = [p.beta.cos(), p.beta.sin()];
    let an = Mat::outer(&a, &n);
    let f1 = d.add(&an.scale(1.0 - p.lambda));
    let f2 = d.sub(&an.scale(p.lambda));
    p.lambda * eval(&f1) + (1.0 - p.lambda) * eval(&f2)
}

/// Upper bound for the quasiconvex envelope of Φ̃ at F (d = 2) from
/// first-order laminates on a search grid refined by compass search, and
/// from hierarchical laminates aligned with the singular frame.
pub fn density_laminate_upper(
    f: &Mat,
    phi: &Potential,
    m: f64,
    q: &SphereQuadrature,
    search: &LaminateSearch,
) -> Result<LaminateResult> {
    if f.dim() != 2 {
        return Err(Error::Unsupported(format!("laminate search in dimension {}", f.dim())));
    }
    check_dims(f, q)?;
    search.validate()?;
    let d = canonical(f);
    let tilde = density_tilde_in_frame(&d, phi, m, q)?;
    let lower = density_lower_in_frame(&d, phi, m, q)?;
    let eval = |g: &Mat| q.average_stretch(g, |t| tilde_integrand(phi, m, t));

    let two_pi = 2.0 * std::f64::consts::PI;
    let pi = std::f64::consts::PI;
    let s = search;
    let param = |ia: usize, ib: usize, il: usize, im: usize| LamParams {
        alpha: two_pi * ia as f64 / s.directions as f64,
        beta: pi * ib as f64 / s.normals as f64,
        lambda: (il as f64 + 0.5) / s.fractions as f64,
        amp: s.max_amplitude * (im as f64 + 1.0) / s.magnitudes as f64,
    };
    // best per direction, then a sequential scan keeps ties deterministic
    let per_dir: Vec<(f64, usize, usize, usize, usize)> = (0..s.directions)
        .into_par_iter()
        .map(|ia| {
            let mut best = (f64::INFINITY, ia, 0, 0, 0);
            for ib in 0..s.normals {
                for il in 0..s.fractions {
                    for im in 0..s.magnitudes {
                        let v = laminate_value(&d, param(ia, ib, il, im), &eval);
                        if v < best.0 {
                            best = (v, ia, ib, il, im);
                        }
                    }
                }
            }
            best
        })
        .collect();
    let mut best = per_dir[0];
    for c in &per_dir[1..] {
        if c.0 < best.0 {
            best = *c;
        }
    }
    let mut bp = param(best.1, best.2, best.3, best.4);
    let mut bv = best.0;
    let mut steps = [
        two_pi / s.directions as f64,
        pi / s.normals as f64,
        0.5 / s.fractions as f64,
        s.max_amplitude / s.magnitudes as f64,
    ];
    for _ in 0..s.refine_iters {
        let mut improved = false;
        for k in 0..4 {
            for sign in [-1.0, 1.0] {
                let mut c = bp;
                match k {
                    0 => c.alpha += sign * steps[0],
                    1 => c.beta += sign * steps[1],
                    2 => c.lambda = (c.lambda + sign * steps[2]).clamp(1e-6, 1.0 - 1e-6),
                    _ => c.amp = (c.amp + sign * steps[3]).max(0.0),
                }
                let v = laminate_value(&d, c, &eval);
                if v < bv {
                    bv = v;
                    bp = c;
                    improved = true;
                }
            }
        }
        if !improved {
            for st in steps.iter_mut() {
                *st *= 0.5;
            }
            if steps[2] < 1e-10 {
                break;
            }
        }
    }

    let hierarchical = if s.axis_points >= 3 {
        Some(axis_laminate(&d, phi, m, q, s.axis_points, s.axis_levels.max(1)))
    } else {
        None
    };
    let mut value = tilde.min(bv);
    if let Some(h) = hierarchical {
        value = value.min(h);
    }
    if value < lower - 1e-9 {
        return Err(Error::InvariantViolation(format!(
            "laminate bound {value} fell below the lower bound {lower}"
        )));
    }
    Ok(LaminateResult {
        value,
        tilde,
        one_level: bv,
        hierarchical,
        best_a: [bp.amp * bp.alpha.cos(), bp.amp * bp.alpha.sin()],
        best_n: [bp.beta.cos(), bp.beta.sin()],
        best_lambda: bp.lambda,
    })
}

/// Hierarchical laminates of diagonal matrices: diag(x, y) − diag(x', y) is
/// rank one, so convexifying g(x, y) = Φ̃(diag(x, y)) along the axes in
/// alternation yields laminate energies. The grid contains ±σ_k so the value
/// at diag(σ₁, σ₂) is read off a node.
fn axis_laminate(d: &Mat, phi: &Potential, m: f64, q: &SphereQuadrature, points: usize, levels: usize) -> f64 {
    let s1 = d.get(0, 0);
    let s2 = d.get(1, 1);
    let reach = s1.max(s2).max(1.0) + 1.0;
    let axis = |sv: f64| {
        let mut xs: Vec<f64> = (0..points)
            .map(|k| -reach + 2.0 * reach * k as f64 / (points - 1) as f64)
            .collect();
        xs.push(sv);
        xs.push(-sv);
        xs.sort_by(|a, b| a.total_cmp(b));
        xs.dedup();
        xs
    };
    let xs = axis(s1);
    let ys = axis(s2);
    let (nx, ny) = (xs.len(), ys.len());
    let mut g: Vec<f64> = (0..nx * ny)
        .into_par_iter()
        .map(|idx| {
            let (ix, iy) = (idx / ny, idx % ny);
            let f = Mat::diag(&[xs[ix], ys[iy]]);
            q.average_stretch(&f, |t| tilde_integrand(phi, m, t))
        })
        .collect();
    for _ in 0..levels {
        // along y for each x
        for ix in 0..nx {
            let col = &g[ix * ny..(ix + 1) * ny];
            let env = convex_envelope(&ys, col);
            g[ix * ny..(ix + 1) * ny].copy_from_slice(&env);
        }
        // along x for each y
        for iy in 0..ny {
            let row: Vec<f64> = (0..nx).map(|ix| g[ix * ny + iy]).collect();
            let env = convex_envelope(&xs, &row);
            for ix in 0..nx {
                g[ix * ny + iy] = env[ix];
            }
        }
    }
    let ix = xs.iter().position(|x| *x == s1).unwrap();
    let iy = ys.iter().position(|y| *y == s2).unwrap();
    g[ix * ny + iy]
}

/// f_∞(F) = 0 iff FᵀF ≤ I, i.e. σ_max(F) ≤ 1 (with 1e−12 slack).
pub fn zero_set_predicate(f: &Mat) -> bool {
    f.max_singular_value() <= 1.0 + 1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityBounds {
    pub f: Vec<f64>,
    pub singular_values: Vec<f64>,
    pub lower: f64,
    pub tilde: f64,
    pub laminate_upper: Option<f64>,
    pub zero_set: bool,
    pub p: f64,
    pub m: f64,
    pub order: usize,
}

/// All bounds at F; the laminate bound only when `search` is given (d = 2).
pub fn density_bounds(
    f: &Mat,
    phi: &Potential,
    m: f64,
    q: &SphereQuadrature,
    order: usize,
    search: Option<&LaminateSearch>,
) -> Result<DensityBounds> {
    let lower = density_lower(f, phi, m, q)?;
    let tilde = density_tilde(f, phi, m, q)?;
    let laminate_upper = match search {
        Some(s) if f.dim() == 2 => Some(density_laminate_upper(f, phi, m, q, s)?.value),
        _ => None,
    };
    Ok(DensityBounds {
        f: f.row_major(),
        singular_values: f.singular_values(),
        lower,
        tilde,
        laminate_upper,
        zero_set: zero_set_predicate(f),
        p: phi.exponent(),
        m,
        order,
    })
}

/// Largest C with ⨍Φ((|Fω|−1)₊) ≥ C(|F|^p − 1) over a deterministic sample
/// of singular values with Frobenius norm |F| ∈ [2, 50] (m = 1).
pub fn fit_coercivity_constant(dim: usize, phi: &Potential, q: &SphereQuadrature) -> Result<f64> {
    if q.dim != dim {
        return invalid("sphere rule dimension differs from the requested dimension");
    }
    let p = phi.exponent();
    let norms: Vec<f64> = (0..24).map(|k| 2.0 * 25f64.powf(k as f64 / 23.0)).collect();
    let dirs = unit_octant_directions(dim, 16);
    let mut c = f64::INFINITY;
    for &nf in &norms {
        for dir in &dirs {
            let sv: Vec<f64> = dir.iter().map(|x| nf * x).collect();
            let f = Mat::diag(&sv);
            let lhs = density_lower_in_frame(&f, phi, 1.0, q)?;
            c = c.min(lhs / (nf.powf(p) - 1.0));
        }
    }
    Ok(c)
}

fn unit_octant_directions(dim: usize, n: usize) -> Vec<Vec<f64>> {
    let half_pi = 0.5 * std::f64::consts::PI;
    match dim {
        1 => vec![vec![1.0]],
        2 => (0..=n)
            .map(|k| {
                let t = half_pi * k as f64 / n as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        _ => {
            let mut out = Vec::new();
            for i in 0..=n / 2 {
                for j in 0..=n / 2 {
                    let th = half_pi * i as f64 / (n / 2) as f64;
                    let ph = half_pi * j as f64 / (n / 2) as f64;
                    out.push(vec![th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]);
                }
            }
            out
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoercivityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Compares ⨍Φ((|Fω|−1)₊) with C(|F|^p − 1) for a fitted constant C.
pub fn coercivity_check(f: &Mat, phi: &Potential, c: f64, q: &SphereQuadrature) -> Result<CoercivityCheck> {
    let lhs = density_lower(f, phi, 1.0, q)?;
    let rhs = c * (f.frobenius().powf(phi.exponent()) - 1.0);
    Ok(CoercivityCheck {
        lhs,
        rhs,
        pass: lhs >= rhs - 1e-12,
    })
}

/// max over the bounds of |density(UF) − density(F)|.
pub fn frame_indifference_check(
    f: &Mat,
    u: &Mat,
    phi: &Potential,
    m: f64,
    q: &SphereQuadrature,
    search: Option<&LaminateSearch>,
) -> Result<f64> {
    if !u.is_orthogonal(1e-12) {
        return invalid("frame change must be orthogonal to 1e-12");
    }
    let uf = u.mul(f);
    let mut dev = (density_lower(&uf, phi, m, q)? - density_lower(f, phi, m, q)?).abs();
    dev = dev.max((density_tilde(&uf, phi, m, q)? - density_tilde(f, phi, m, q)?).abs());
    if let Some(s) = search {
        let a = density_laminate_upper(&uf, phi, m, q, s)?.value;
        let b = density_laminate_upper(f, phi, m, q, s)?.value;
        dev = dev.max((a - b).abs());
    }
    Ok(dev)
}

/// In one dimension both bounds reduce to Φ(m⁻¹(|t|^m − 1)₊).
pub fn one_d_exact_density(t: f64, phi: &Potential, m: f64) -> f64 {
    lower_integrand(phi, m, t.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn q2(order: usize) -> SphereQuadrature {
        SphereQuadrature::new(2, order).unwrap()
    }

    #[test]
    fn lower_bound_examples() {
        let phi = Potential::quadratic();
        let q = q2(512);
        assert_eq!(density_lower(&Mat::diag(&[0.5, 0.8]), &phi, 1.0, &q).unwrap(), 0.0);
        assert_abs_diff_eq!(
            density_lower(&Mat::scaled_identity(2, 2.0), &phi, 1.0, &q).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        let f = Mat::diag(&[2.0, 1.0]);
        let a = density_lower(&f, &phi, 1.0, &q).unwrap();
        let b = density_lower(&f, &phi, 1.0, &q2(4096)).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-10);
    }

    #[test]
    fn tilde_examples() {
        let phi = Potential::quadratic();
        let q = q2(64);
        assert_abs_diff_eq!(density_tilde(&Mat::identity(2), &phi, 1.0, &q).unwrap(), 0.0, epsilon = 1e-28);
        assert_abs_diff_eq!(density_tilde(&Mat::zeros(2), &phi, 1.0, &q).unwrap(), 1.0);
        assert_abs_diff_eq!(density_tilde(&Mat::zeros(2), &phi, 2.0, &q).unwrap(), 0.25);
    }

    #[test]
    fn expansion_has_no_gap() {
        let phi = Potential::quadratic();
        let q = q2(256);
        let f = Mat::from_row_major(2, &[2.0, 0.3, -0.2, 1.5]).unwrap();
        let lo = density_lower(&f, &phi, 1.0, &q).unwrap();
        let ti = density_tilde(&f, &phi, 1.0, &q).unwrap();
        assert_abs_diff_eq!(lo, ti, epsilon = 1e-14);
    }

    #[test]
    fn laminate_bound_for_identity_and_expansion() {
        let phi = Potential::quadratic();
        let q = q2(128);
        let s = LaminateSearch::coarse();
        let r = density_laminate_upper(&Mat::identity(2), &phi, 1.0, &q, &s).unwrap();
        assert_abs_diff_eq!(r.value, 0.0, epsilon = 1e-28);
        let f = Mat::scaled_identity(2, 3.0);
        let r = density_laminate_upper(&f, &phi, 1.0, &q, &s).unwrap();
        assert_abs_diff_eq!(r.value, r.tilde, epsilon = 1e-12);
        assert!(density_laminate_upper(&Mat::identity(3), &phi, 1.0, &SphereQuadrature::new(3, 8).unwrap(), &s).is_err());
    }

    #[test]
    fn hierarchical_laminate_reaches_the_zero_set() {
        let phi = Potential::quadratic();
        let q = q2(128);
        let s = LaminateSearch::coarse();
        let r = density_laminate_upper(&Mat::scaled_identity(2, 0.5), &phi, 1.0, &q, &s).unwrap();
        assert!(r.hierarchical.unwrap() <= 1e-12, "{r:?}");
        assert!(r.one_level < r.tilde);
    }

    #[test]
    fn zero_set_examples() {
        assert!(zero_set_predicate(&Mat::rotation2(0.3)));
        assert!(!zero_set_predicate(&Mat::diag(&[1.2, 0.1])));
    }

    #[test]
    fn one_d_density() {
        let phi = Potential::quadratic();
        assert_eq!(one_d_exact_density(0.7, &phi, 1.0), 0.0);
        assert_eq!(one_d_exact_density(-1.0, &phi, 2.0), 0.0);
        assert_abs_diff_eq!(one_d_exact_density(2.0, &phi, 1.0), 1.0);
        assert_abs_diff_eq!(one_d_exact_density(2.0, &phi, 2.0), 2.25);
        let q = SphereQuadrature::new(1, 2).unwrap();
        let lo = density_lower(&Mat::diag(&[2.0]), &phi, 2.0, &q).unwrap();
        assert_abs_diff_eq!(lo, 2.25);
    }

    #[test]
    fn coercivity_fit_is_positive() {
        let phi = Potential::quadratic();
        let q = q2(256);
        let c = fit_coercivity_constant(2, &phi, &q).unwrap();
        assert!(c > 0.0);
        let chk = coercivity_check(&Mat::scaled_identity(2, 10.0), &phi, c, &q).unwrap();
        assert_abs_diff_eq!(chk.lhs, 81.0, epsilon = 1e-10);
        assert!(chk.pass);
        let small = coercivity_check(&Mat::scaled_identity(2, 0.5), &phi, c, &q).unwrap();
        assert!(small.rhs <= 0.0 && small.pass);
    }
}
