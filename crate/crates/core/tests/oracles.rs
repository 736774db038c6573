use approx::{assert_abs_diff_eq, assert_relative_eq};
use bondloc_core::constructions::{sawtooth_energy, sawtooth_value};
use bondloc_core::density::{density_lower, density_tilde, one_d_exact_density};
use bondloc_core::energy::{energy_e0_for, energy_e_eps};
use bondloc_core::kernels::check_density_condition;
use bondloc_core::materials::catalog_potential;
use bondloc_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Φ = t², m = 2, d = 2: ⨍((|Fω|² − 1)/2)² = (1/16)(|FᵀF − I|² + ½(|F|² − 2)²),
// from ⨍(ωᵀAω)² = ((tr A)² + 2|A|²)/8 on the unit circle.
fn tilde_closed_form(f: &Mat) -> f64 {
    let c = f.transpose().mul(f).sub(&Mat::identity(2));
    let tr = f.frobenius_sq() - 2.0;
    (c.frobenius_sq() + 0.5 * tr * tr) / 16.0
}

#[test]
fn spherical_average_closed_form_in_the_plane() {
    let q = SphereQuadrature::new(2, 512).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let a: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let f = Mat::from_row_major(2, &a).unwrap();
        let quad = density_tilde(&f, &Potential::quadratic(), 2.0, &q).unwrap();
        assert_relative_eq!(quad, tilde_closed_form(&f), max_relative = 1e-9);
    }
}

#[test]
fn density_examples() {
    let q = SphereQuadrature::new(2, 512).unwrap();
    let phi = Potential::quadratic();
    assert_abs_diff_eq!(density_lower(&Mat::scaled_identity(2, 2.0), &phi, 1.0, &q).unwrap(), 1.0, epsilon = 1e-14);
    assert_eq!(density_lower(&Mat::diag(&[0.5, 0.8]), &phi, 1.0, &q).unwrap(), 0.0);
    // at 0.5·I the stretch is 1/2 in every direction
    assert_abs_diff_eq!(density_tilde(&Mat::scaled_identity(2, 0.5), &phi, 1.0, &q).unwrap(), 0.25, epsilon = 1e-14);
    assert_abs_diff_eq!(one_d_exact_density(2.0, &phi, 1.0), 1.0);
}

#[test]
fn box_density_condition_matches_closed_form() {
    // ∫_{δ<|z|<1} ½|z|^{-2} dz = 1/δ − 1
    let k = Kernel::box_kernel(1, 1.0).unwrap();
    let rep = check_density_condition(&k, 2.0).unwrap();
    for (j, v) in rep.integrals.iter().enumerate() {
        let delta = 2f64.powi(-(j as i32 + 1));
        assert_relative_eq!(*v, 1.0 / delta - 1.0, max_relative = 1e-10);
    }
    assert!(rep.divergent);
}

#[test]
fn sawtooth_profile_and_energy() {
    assert_abs_diff_eq!(sawtooth_value(1, 0.25), 0.25);
    assert_abs_diff_eq!(sawtooth_value(2, 0.25), 0.25);
    assert_abs_diff_eq!(sawtooth_value(2, 0.5), 0.0);
    for (n, delta) in [(1usize, 1e-2), (10, 1e-3)] {
        let r = sawtooth_energy(n, delta, delta / 32.0).unwrap();
        assert_relative_eq!(r.report.value, 8.0 / 15.0 * n as f64 * delta, max_relative = 0.01);
    }
    // δ(N) = 1/N²: the energies (8/15)/N decrease
    let es: Vec<f64> = [4usize, 8, 16]
        .iter()
        .map(|&n| sawtooth_energy(n, 1.0 / (n * n) as f64, 1.0 / (32 * n * n) as f64).unwrap().report.value)
        .collect();
    assert!(es[0] > es[1] && es[1] > es[2]);
}

#[test]
fn collinear_quadratic_linearization_is_exact() {
    let grid = Grid::unit(1, 100).unwrap();
    let w = catalog_potential("mbm", &[("s0", 1.0)], Kernel::box_kernel(1, 0.2).unwrap()).unwrap();
    let u = VectorField::from_fn(grid, |x, out| out[0] = 0.3 * x[0] * x[0]);
    let e0 = energy_e0_for(&u, &w, None).unwrap().value;
    for eps in [0.2, 0.1, 0.05] {
        let e = energy_e_eps(&u, &w, 1.0, eps, None).unwrap().value;
        assert_abs_diff_eq!(e, e0, epsilon = 1e-12);
    }
}
