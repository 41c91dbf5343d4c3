use std::sync::OnceLock;

use flowsim::kernel::{CovarianceKernel, MollifierKernel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS_GRID: [f64; 4] = [0.05, 0.1, 0.5, 1.0];

/// Composite trapezoid rule. The integrands here vanish with all derivatives
/// at the ends of their support, where the rule converges faster than any
/// power of the step.
fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let dx = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|k| f(a + k as f64 * dx)).sum();
    dx * (inner + 0.5 * (f(a) + f(b)))
}

fn mollifier() -> MollifierKernel {
    MollifierKernel::new(1, 1.0).unwrap()
}

/// One tabulated kernel shared by the property tests, rescaled per case.
fn shared(eps: f64) -> CovarianceKernel {
    static TABLE: OnceLock<CovarianceKernel> = OnceLock::new();
    TABLE
        .get_or_init(|| CovarianceKernel::tabulated(mollifier(), 1.0).unwrap())
        .rescaled(eps)
        .unwrap()
}

#[test]
fn bump_has_unit_mass() {
    let m = mollifier();
    let mass = trapezoid(|u| m.eval(&[u]).unwrap(), -1.0, 1.0, 4000);
    assert!((mass - 1.0).abs() < 1e-8, "∫φ = {mass}");
    assert!((m.total_mass().unwrap() - 1.0).abs() < 1e-8);
}

#[test]
fn normalization_is_independent_of_the_kernel_code() {
    let raw = trapezoid(|u: f64| if u.abs() < 1.0 { (-1.0 / (1.0 - u * u)).exp() } else { 0.0 }, -1.0, 1.0, 4000);
    let m = mollifier();
    assert!((m.eval(&[0.3]).unwrap() - (-1.0 / 0.91f64).exp() / raw).abs() < 1e-10);
}

#[test]
fn scaled_square_has_unit_mass() {
    let m = mollifier();
    for eps in EPS_GRID {
        let oracle = trapezoid(|u| m.phi_eps(eps, &[u]).unwrap().powi(2), -eps, eps, 4000);
        assert!((oracle - 1.0).abs() < 1e-8, "ε = {eps}: {oracle}");
        assert!((m.phi_eps_sq_integral(eps).unwrap() - 1.0).abs() < 1e-8);
    }
}

#[test]
fn wider_support_keeps_unit_mass() {
    let m = MollifierKernel::new(1, 2.5).unwrap();
    let mass = trapezoid(|u| m.eval(&[u]).unwrap(), -2.5, 2.5, 4000);
    assert!((mass - 1.0).abs() < 1e-8);
    let sq = trapezoid(|u| m.phi_eps(0.1, &[u]).unwrap().powi(2), -0.25, 0.25, 4000);
    assert!((sq - 1.0).abs() < 1e-8);
}

#[test]
fn covariance_matches_overlap_integral() {
    let m = mollifier();
    for eps in [0.1, 0.5] {
        let k = CovarianceKernel::new(m.clone(), eps).unwrap();
        for x in [0.0, 0.3 * eps, eps, 1.7 * eps] {
            // overlap of the supports [−ε, ε] and [x − ε, x + ε]
            let oracle = trapezoid(
                |q| m.phi_eps(eps, &[x - q]).unwrap() * m.phi_eps(eps, &[-q]).unwrap(),
                x - eps,
                eps,
                4000,
            );
            let g = k.g_eps_direct(x).unwrap();
            assert!((g - oracle).abs() < 1e-8, "ε = {eps}, x = {x}: {g} vs {oracle}");
        }
    }
}

#[test]
fn kernel_at_origin_and_beyond_range() {
    let m = mollifier();
    for eps in EPS_GRID {
        let k = CovarianceKernel::tabulated(m.clone(), eps).unwrap();
        assert!((k.g_eps(0.0).unwrap() - 1.0).abs() < 1e-8);
        assert!((k.g_eps_direct(0.0).unwrap() - 1.0).abs() < 1e-8);
        for x in [2.0 * eps, 2.0 * eps + 1e-12, 3.0 * eps, 1e6] {
            assert_eq!(k.g_eps(x).unwrap(), 0.0);
            assert_eq!(k.g_eps(-x).unwrap(), 0.0);
        }
    }
}

#[test]
fn table_agrees_with_quadrature() {
    let m = mollifier();
    let direct = CovarianceKernel::new(m.clone(), 1.0).unwrap();
    let table = CovarianceKernel::tabulated(m, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let worst = (0..1000)
        .map(|_| {
            let x = rng.random_range(-2.0..2.0);
            (table.g_eps(x).unwrap() - direct.g_eps_direct(x).unwrap()).abs()
        })
        .fold(0.0, f64::max);
    assert!(worst < 1e-6, "table error {worst}");
}

#[test]
fn scale_invariance() {
    let m = mollifier();
    let k1 = CovarianceKernel::new(m.clone(), 1.0).unwrap();
    let k = CovarianceKernel::new(m, 0.05).unwrap();
    for y in [0.1, 0.8, 1.5] {
        let a = k.g_eps_direct(0.05 * y).unwrap();
        let b = k1.g_eps_direct(y).unwrap();
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn identity_on_separated_configurations() {
    let k = CovarianceKernel::tabulated(mollifier(), 0.1).unwrap();
    let xs = [-1.0, -0.79, 0.0, 0.2000001, 3.0];
    let a = k.diffusion_matrix(&xs).unwrap();
    assert_eq!(a, nalgebra::DMatrix::identity(5, 5));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn diffusion_matrix_is_psd(xs in prop::collection::vec(-0.4f64..0.4, 2..8)) {
        let a = shared(0.1).diffusion_matrix(&xs).unwrap();
        let n = xs.len() as f64;
        prop_assert!(a.clone().symmetric_eigenvalues().min() >= -1e-9 * n);
        for i in 0..xs.len() {
            prop_assert_eq!(a[(i, i)], 1.0);
            for j in 0..xs.len() {
                prop_assert_eq!(a[(i, j)], a[(j, i)]);
                prop_assert!((0.0..=1.0).contains(&a[(i, j)]));
            }
        }
    }

    #[test]
    fn kernel_is_even_and_bounded(x in -0.5f64..0.5) {
        let k = shared(0.2);
        let g = k.g_eps(x).unwrap();
        prop_assert_eq!(g, k.g_eps(-x).unwrap());
        prop_assert!((0.0..=1.0).contains(&g));
    }
}
