//! Gauss–Legendre rules, averages over the unit sphere, radial integration
//! and a deterministic pairwise summation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::Mat;

/// Gauss–Legendre nodes and weights on [−1, 1], computed by Newton iteration
/// on the three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Integrates `f` over [a, b] with an `n`-point Gauss–Legendre rule.
pub fn integrate_gl(f: impl Fn(f64) -> f64, a: f64, b: f64, nodes: &(Vec<f64>, Vec<f64>)) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let terms: Vec<f64> = nodes
        .0
        .iter()
        .zip(&nodes.1)
        .map(|(&x, &w)| w * f(mid + half * x))
        .collect();
    half * pairwise_sum(&terms)
}

/// Pairwise (cascade) summation with a fixed split, so the result depends
/// only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Surface measure |S^{d−1}|.
pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => panic!("dimension {dim} not supported"),
    }
}

/// Volume of the unit ball in R^d.
pub fn ball_volume(dim: usize) -> f64 {
    sphere_area(dim) / dim as f64
}

/// Integral over [r_min, r_max] of `f(r)·r^{d−1}` where `f` may be singular
/// like r^{−β} at 0. The interval is split into dyadic annuli down to
/// `r_min`, each integrated with Gauss–Legendre.
pub fn radial_integral(f: impl Fn(f64) -> f64, dim: usize, r_min: f64, r_max: f64) -> f64 {
    if r_max <= r_min {
        return 0.0;
    }
    let gl = gauss_legendre(24);
    let g = |r: f64| f(r) * r.powi(dim as i32 - 1);
    let mut pieces = Vec::new();
    let mut hi = r_max;
    let floor = if r_min > 0.0 { r_min } else { r_max * 1e-300 };
    while hi > floor {
        let lo = (0.5 * hi).max(floor);
        if r_min <= 0.0 && hi < r_max * 2f64.powi(-80) {
            break;
        }
        pieces.push(integrate_gl(g, lo, hi, &gl));
        hi = lo;
    }
    pairwise_sum(&pieces)
}

/// Like [`radial_integral`] from 0 but adds a power-law tail correction for
/// the part of the first annulus skipped near the origin. The integrand is
/// assumed to behave like c·r^{−β} with β < d near zero.
pub fn radial_integral_from_zero(f: impl Fn(f64) -> f64, dim: usize, r_max: f64, beta: f64) -> f64 {
    let r0 = r_max * 2f64.powi(-60);
    let main = radial_integral(&f, dim, r0, r_max);
    let tail = f(r0) * r0.powi(dim as i32) / (dim as f64 - beta);
    main + tail
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereQuadrature {
    pub dim: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl SphereQuadrature {
    /// d=1: {−1, 1}; d=2: `order` equispaced angles; d=3: `order`
    /// Gauss–Legendre nodes in cos θ times `2·order` equispaced azimuths.
    pub fn new(dim: usize, order: usize) -> Result<Self> {
        if order < 2 {
            return invalid(format!("sphere quadrature order must be >= 2, got {order}"));
        }
        let (points, weights) = match dim {
            1 => (vec![[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]], vec![0.5, 0.5]),
            2 => {
                let w = 1.0 / order as f64;
                let pts = (0..order)
                    .map(|q| {
                        let t = 2.0 * PI * q as f64 / order as f64;
                        [t.cos(), t.sin(), 0.0]
                    })
                    .collect();
                (pts, vec![w; order])
            }
            3 => {
                let (x, wx) = gauss_legendre(order);
                let nphi = 2 * order;
                let mut pts = Vec::with_capacity(order * nphi);
                let mut ws = Vec::with_capacity(order * nphi);
                for (ct, wt) in x.iter().zip(&wx) {
                    let st = (1.0 - ct * ct).max(0.0).sqrt();
                    for k in 0..nphi {
                        let phi = 2.0 * PI * k as f64 / nphi as f64;
                        pts.push([st * phi.cos(), st * phi.sin(), *ct]);
                        // wt sums to 2 over cos θ
                        ws.push(wt / (2.0 * nphi as f64));
                    }
                }
                (pts, ws)
            }
            _ => return Err(Error::Unsupported(format!("sphere quadrature in dimension {dim}"))),
        };
        Ok(Self {
            dim,
            points,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn point(&self, q: usize) -> &[f64] {
        &self.points[q][..self.dim]
    }

    /// ⨍ f(ω) dσ(ω).
    pub fn average(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let terms: Vec<f64> = (0..self.len())
            .map(|q| self.weights[q] * f(self.point(q)))
            .collect();
        pairwise_sum(&terms)
    }

    /// ⨍ g(|Fω|) dσ(ω).
    pub fn average_stretch(&self, f: &Mat, g: impl Fn(f64) -> f64) -> f64 {
        assert_eq!(f.dim(), self.dim);
        self.average(|w| g(f.apply_norm(w)))
    }
}
