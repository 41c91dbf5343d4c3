use flowsim::measures::{cost_phi_n, EmpiricalMeasure};
use flowsim::transport::{hungarian, wasserstein, wasserstein_exact, wasserstein_monotone, TransportError};
use itertools::Itertools;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Brute force over all bijections of two equal-weight atom lists.
fn brute_force(order: u32, u: &[f64], v: &[f64], dim: usize) -> f64 {
    let m = u.len() / dim;
    let best = (0..m)
        .permutations(m)
        .map(|perm| {
            perm.iter()
                .enumerate()
                .map(|(i, &j)| cost_phi_n(order, &u[i * dim..(i + 1) * dim], &v[j * dim..(j + 1) * dim]))
                .sum::<f64>()
                / m as f64
        })
        .fold(f64::INFINITY, f64::min);
    best.powf(1.0 / order.max(1) as f64)
}

fn uniform(dim: usize, coords: Vec<f64>) -> EmpiricalMeasure {
    EmpiricalMeasure::uniform_points(dim, coords).unwrap()
}

/// Between 1 and `max_atoms` atoms with small integer weight ratios.
fn random_measure(rng: &mut ChaCha8Rng, max_atoms: usize) -> EmpiricalMeasure {
    let atoms = rng.random_range(1..=max_atoms);
    let xs: Vec<f64> = (0..atoms).map(|_| rng.random_range(-3.0..3.0)).collect();
    let raw: Vec<u32> = (0..atoms).map(|_| rng.random_range(1..5)).collect();
    let total: u32 = raw.iter().sum();
    let ws = raw.iter().map(|&w| w as f64 / total as f64).collect();
    EmpiricalMeasure::new(1, xs, ws).unwrap()
}

#[test]
fn worked_examples() {
    let mu = EmpiricalMeasure::uniform(&[0.0, 2.0]).unwrap();
    let nu = EmpiricalMeasure::uniform(&[1.0, 3.0]).unwrap();
    assert!((wasserstein(1, &mu, &nu).unwrap().distance - 1.0).abs() < 1e-12);
    assert!((wasserstein(2, &mu, &nu).unwrap().distance - 1.0).abs() < 1e-12);
    let a = EmpiricalMeasure::dirac(&[0.0]).unwrap();
    let b = EmpiricalMeasure::dirac(&[3.0]).unwrap();
    assert!((wasserstein(0, &a, &b).unwrap().distance - 0.75).abs() < 1e-12);
    assert!((wasserstein(3, &a, &b).unwrap().distance - 3.0).abs() < 1e-12);
}

#[test]
fn monotone_is_not_optimal_for_bounded_cost() {
    let mu = EmpiricalMeasure::uniform(&[0.0, 1.0]).unwrap();
    let nu = EmpiricalMeasure::uniform(&[1.0, 2.0]).unwrap();
    let mono = wasserstein_monotone(0, &mu, &nu).unwrap().distance;
    let exact = wasserstein_exact(0, &mu, &nu).unwrap().distance;
    assert!((mono - 0.5).abs() < 1e-12);
    assert!((exact - 1.0 / 3.0).abs() < 1e-12);
    assert!((wasserstein(0, &mu, &nu).unwrap().distance - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn monotone_equals_exact_for_convex_costs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..200 {
        let mu = random_measure(&mut rng, 6);
        let nu = random_measure(&mut rng, 6);
        for order in 1..=3 {
            let mono = wasserstein_monotone(order, &mu, &nu).unwrap().distance;
            let exact = wasserstein_exact(order, &mu, &nu).unwrap().distance;
            assert!((mono - exact).abs() < 1e-9, "case {case}, n = {order}: {mono} vs {exact}");
        }
    }
}

#[test]
fn metric_axioms() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let ms: Vec<EmpiricalMeasure> = (0..3).map(|_| random_measure(&mut rng, 4)).collect();
        for order in 0..=2 {
            let d = |a: &EmpiricalMeasure, b: &EmpiricalMeasure| wasserstein_exact(order, a, b).unwrap().distance;
            let (x, y, z) = (&ms[0], &ms[1], &ms[2]);
            assert!(d(x, x).abs() < 1e-9);
            assert!((d(x, y) - d(y, x)).abs() < 1e-9);
            assert!(d(x, z) <= d(x, y) + d(y, z) + 1e-9);
        }
    }
}

#[test]
fn plan_has_the_right_marginals() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let mu = random_measure(&mut rng, 4);
        let nu = random_measure(&mut rng, 5);
        for w in [wasserstein_exact(0, &mu, &nu).unwrap(), wasserstein_monotone(2, &mu, &nu).unwrap()] {
            for (got, want) in w.plan.source_marginal(mu.len()).iter().zip(mu.weights()) {
                assert!((got - want).abs() < 1e-12);
            }
            for (got, want) in w.plan.target_marginal(nu.len()).iter().zip(nu.weights()) {
                assert!((got - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn two_dimensional_measures_use_euclidean_cost() {
    let mu = uniform(2, vec![0.0, 0.0, 1.0, 0.0]);
    let nu = uniform(2, vec![0.0, 1.0, 1.0, 1.0]);
    assert!((wasserstein(1, &mu, &nu).unwrap().distance - 1.0).abs() < 1e-12);
    let shifted = uniform(2, vec![3.0, 4.0]);
    let origin = uniform(2, vec![0.0, 0.0]);
    assert!((wasserstein(2, &origin, &shifted).unwrap().distance - 5.0).abs() < 1e-12);
}

#[test]
fn errors_are_reported() {
    let a = EmpiricalMeasure::uniform(&[0.0]).unwrap();
    let b = uniform(2, vec![0.0, 0.0]);
    assert_eq!(wasserstein(1, &a, &b).unwrap_err(), TransportError::DimensionMismatch(1, 2));
    assert_eq!(wasserstein_monotone(1, &b, &b).unwrap_err(), TransportError::NotOneDimensional(2));
    let irrational = EmpiricalMeasure::new(1, vec![0.0, 1.0], vec![1.0 / std::f64::consts::PI, 1.0 - 1.0 / std::f64::consts::PI]).unwrap();
    assert!(matches!(
        wasserstein_exact(0, &irrational, &a),
        Err(TransportError::ExpansionBudget { .. })
    ));
}

#[test]
fn hungarian_small_matrix() {
    let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
    assert_eq!(hungarian(&cost, 3), vec![1, 0, 2]);
    assert!(hungarian(&[], 0).is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_solver_matches_brute_force(
        m in 1usize..=6,
        dim in 1usize..=2,
        order in 0u32..=3,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..m * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..m * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let oracle = brute_force(order, &u, &v, dim);
        let got = wasserstein_exact(order, &uniform(dim, u), &uniform(dim, v)).unwrap().distance;
        prop_assert!((got - oracle).abs() < 1e-9, "{} vs {}", got, oracle);
    }

    #[test]
    fn translation_moves_first_order_distance_by_shift(
        xs in prop::collection::vec(-5.0f64..5.0, 1..8),
        shift in -3.0f64..3.0,
    ) {
        let mu = EmpiricalMeasure::uniform(&xs).unwrap();
        let nu = mu.pushforward(|_, p| Some(vec![p[0] + shift])).unwrap();
        let d = wasserstein(1, &mu, &nu).unwrap().distance;
        prop_assert!((d - shift.abs()).abs() < 1e-9);
    }
}
