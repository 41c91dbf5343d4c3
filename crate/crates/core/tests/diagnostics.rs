use flowsim::coalescing::{simulate_coalescing_ensemble, CoalescingConfig};
use flowsim::diagnostics::{
    holder_check, joint_char_check, marginal_gaussian_check, measure_moment, moment_bound_check, moment_functional,
    moment_functional_check, qv_check, stopped_process_check, tail_condition_check, CheckEntry, DiagnosticsReport,
    HolderCheckSpec, TestFunction,
};
use flowsim::flow::{simulate_flow, step_covariance, CovarianceScratch, FlowPath, FlowState, Mode, SimConfig};
use flowsim::kernel::{CovarianceKernel, MollifierKernel};
use flowsim::measures::EmpiricalMeasure;
use flowsim::rng::replica_stream;
use flowsim::stats::{energy_distance, Cloud, Estimate, PermutationConfig};
use flowsim::GridPath;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn flow(eps: f64, starts: &[f64], steps: usize, replicas: usize, seed: u64, mode: Mode) -> Vec<FlowPath> {
    simulate_flow(&SimConfig::new(eps, starts.to_vec(), steps, replicas, seed, mode)).unwrap()
}

fn kernel(eps: f64) -> CovarianceKernel {
    CovarianceKernel::tabulated(MollifierKernel::new(1, 1.0).unwrap(), eps).unwrap()
}

fn final_positions(paths: &[FlowPath], tag: usize) -> Vec<f64> {
    paths.iter().map(|p| p.final_row()[tag]).collect()
}

/// `E f(m + sZ)` by the trapezoid rule over ±12 standard deviations.
fn gauss_trapezoid(f: impl Fn(f64) -> f64, m: f64, s: f64) -> f64 {
    let n = 20_000;
    let (lo, hi) = (m - 12.0 * s, m + 12.0 * s);
    let dx = (hi - lo) / n as f64;
    let density = |x: f64| (-(x - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    let inner: f64 = (1..n).map(|k| lo + k as f64 * dx).map(|x| f(x) * density(x)).sum();
    dx * (inner + 0.5 * (f(lo) * density(lo) + f(hi) * density(hi)))
}

fn one(_: f64) -> f64 {
    1.0
}

#[test]
fn constant_path_has_no_quadratic_variation() {
    let times: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
    let rows = vec![vec![0.3]; times.len()];
    let path = FlowPath::from_rows(Mode::Covariance, 0.01, times, &rows);
    let e = qv_check(&[path]).unwrap();
    assert_eq!(e.estimate, 0.0);
    assert!(!e.pass);
}

#[test]
fn joint_characteristic_for_coincident_and_far_starts() {
    let k = kernel(0.1);
    // configurations require distinct starts, so coincident tags are stepped by hand
    let same: Vec<FlowPath> = (0..300)
        .map(|r| {
            let (h, mut state) = (1e-3, FlowState::new(&[0.2, 0.2]));
            let (mut rng, mut scratch) = (replica_stream(3, r), CovarianceScratch::default());
            let mut rows = vec![state.positions.clone()];
            for _ in 0..1000 {
                step_covariance(&k, &mut state, h, &mut rng, &mut scratch).unwrap();
                rows.push(state.positions.clone());
            }
            let times = (0..=1000).map(|i| i as f64 * h).collect();
            FlowPath::from_rows(Mode::Covariance, h, times, &rows)
        })
        .collect();
    let e = joint_char_check(&same, &k, 0, 1).unwrap();
    assert!(e.pass, "{e:?}");
    let far = flow(0.1, &[0.0, 3.0], 1000, 300, 3, Mode::Covariance);
    assert!(joint_char_check(&far, &k, 0, 1).unwrap().pass);
}

#[test]
fn joint_characteristic_rejects_wrong_kernel() {
    let paths = flow(0.1, &[0.0, 0.05], 1000, 2000, 4, Mode::Covariance);
    let e = joint_char_check(&paths, &kernel(0.5), 0, 1).unwrap();
    assert!(!e.pass, "{e:?}");
}

#[test]
fn flow_marginal_is_gaussian_and_shift_is_caught() {
    let paths = simulate_flow(&SimConfig::new(0.5, vec![0.0], 1000, 10_000, 5, Mode::Covariance).endpoints_only()).unwrap();
    let xs = final_positions(&paths, 0);
    let good = marginal_gaussian_check(&xs, 0.0, 1.0).unwrap();
    assert!(good.all_pass(), "{}", good.render_text());
    let shifted: Vec<f64> = xs.iter().map(|x| x + 0.5).collect();
    let bad = marginal_gaussian_check(&shifted, 0.0, 1.0).unwrap();
    assert!(!bad.get("ks").unwrap().pass);
    assert!(!bad.all_pass());
    assert!(marginal_gaussian_check(&xs[..999], 0.0, 1.0).is_err());
}

#[test]
fn holder_modulus() {
    let mu0 = EmpiricalMeasure::uniform(&[0.0, 1.0]).unwrap();
    let paths = flow(0.1, &[0.0, 1.0], 1000, 2000, 6, Mode::Covariance);
    let spec = HolderCheckSpec::new(|x: f64| x.clamp(-10.0, 10.0), 1.0, 2, 0.25, 0.75, 1.0).unwrap();
    assert!((spec.bound() - 0.5).abs() < 1e-15);
    let e = holder_check(&spec, &paths, &mu0).unwrap();
    assert!(e.pass, "{e:?}");

    let same_time = HolderCheckSpec::clipped_identity(10.0, 0.5, 0.5).unwrap();
    assert_eq!(holder_check(&same_time, &paths, &mu0).unwrap().estimate, 0.0);
    let constant = HolderCheckSpec::new(|_| 2.0, 0.0, 2, 0.25, 0.75, 1.0).unwrap();
    assert_eq!(holder_check(&constant, &paths, &mu0).unwrap().estimate, 0.0);

    // the increment of the mean position has variance (1 + g)/4·Δt ≈ Δt/2,
    // so a declared K₂ of 1/4 is too small
    let tight = HolderCheckSpec::new(|x: f64| x.clamp(-10.0, 10.0), 1.0, 2, 0.25, 0.75, 0.25).unwrap();
    assert!(!holder_check(&tight, &paths, &mu0).unwrap().pass);
}

#[test]
fn holder_spec_validation() {
    assert!(HolderCheckSpec::new(|x: f64| 2.0 * x, 1.0, 2, 0.0, 1.0, 1.0).is_err());
    assert!(HolderCheckSpec::new(|x: f64| x, 1.0, 3, 0.0, 1.0, 1.0).is_err());
    assert!(HolderCheckSpec::new(f64::sin, 1.0, 2, 0.0, 1.0, 1.0).is_ok());
}

#[test]
fn moment_bound_examples() {
    let dirac = EmpiricalMeasure::dirac(&[0.0]).unwrap();
    let paths = flow(0.1, &[0.0], 1000, 10_000, 7, Mode::Covariance);
    let r = moment_bound_check(&paths, &dirac, 2, 1.0).unwrap();
    assert!(r.all_pass(), "{}", r.render_text());
    assert!((r.get("exact_law").unwrap().target_or_bound - 1.0).abs() < 1e-10);

    let at_zero = moment_bound_check(&paths, &dirac, 2, 0.0).unwrap();
    assert_eq!(at_zero.get("exact_law").unwrap().estimate, 0.0);
    assert!(at_zero.all_pass());

    let mu0 = EmpiricalMeasure::uniform(&[0.0, 1.0]).unwrap();
    let pair = flow(0.1, &[0.0, 1.0], 1000, 10_000, 8, Mode::Covariance);
    let r = moment_bound_check(&pair, &mu0, 3, 1.0).unwrap();
    assert!(r.all_pass(), "{}", r.render_text());
    let oracle = 0.5 * gauss_trapezoid(|x| x.abs().powi(3), 0.0, 1.0) + 0.5 * gauss_trapezoid(|x| x.abs().powi(3), 1.0, 1.0);
    assert!((r.get("exact_law").unwrap().target_or_bound - oracle).abs() < 1e-9);
}

#[test]
fn moment_check_catches_biased_ensemble() {
    let dirac = EmpiricalMeasure::dirac(&[0.0]).unwrap();
    let paths = flow(0.1, &[0.5], 1000, 10_000, 9, Mode::Covariance);
    let r = moment_bound_check(&paths, &dirac, 2, 1.0).unwrap();
    assert!(!r.get("exact_law").unwrap().pass);
}

#[test]
fn tail_chain() {
    let dirac = EmpiricalMeasure::dirac(&[0.0]).unwrap();
    let paths = flow(0.1, &[0.0], 1000, 10_000, 10, Mode::Covariance);
    let moment = measure_moment(&paths, &dirac, 3, 1.0).unwrap();
    let ks: Vec<u32> = (1..=10).collect();
    let r = tail_condition_check(&paths, &dirac, 3, 1.0, 0.1, &ks, moment).unwrap();
    assert!(r.all_pass(), "{}", r.render_text());
    // nontrivial probability below the support radius of the draws
    assert!(r.get("k01").unwrap().estimate > 0.1);
    for k in 5..=10 {
        assert_eq!(r.get(&format!("k{k:02}")).unwrap().estimate, 0.0);
    }
    let big_delta = tail_condition_check(&paths, &dirac, 3, 1.0, 1.5, &ks, moment).unwrap();
    assert!(big_delta.entries().all(|(_, e)| e.estimate == 0.0));
    assert!(tail_condition_check(&paths, &dirac, 2, 1.0, 0.1, &ks, moment).is_err());
}

#[test]
fn tail_chain_rejects_initial_moment() {
    let dirac = EmpiricalMeasure::dirac(&[0.0]).unwrap();
    let paths = flow(0.1, &[0.0], 1000, 10_000, 10, Mode::Covariance);
    let initial = measure_moment(&paths, &dirac, 3, 0.0).unwrap();
    assert_eq!(initial, Estimate { mean: 0.0, se: 0.0 });
    let r = tail_condition_check(&paths, &dirac, 3, 1.0, 0.1, &[1, 2], initial).unwrap();
    assert!(!r.all_pass());
}

#[test]
fn stopped_process_far_apart_and_mismatched() {
    let perm = PermutationConfig::new(1);
    let far = flow(0.1, &[0.0, 5.0], 1000, 3000, 11, Mode::Covariance);
    let wiener = flow(0.1, &[0.0, 5.0], 1000, 3000, 12, Mode::Independent);
    assert!(stopped_process_check(&far, &wiener, 0.1, 1.0, perm).unwrap().pass);

    let coarse = flow(0.5, &[0.0, 0.4], 1000, 3000, 13, Mode::Covariance);
    let wiener = flow(0.1, &[0.0, 0.4], 1000, 3000, 14, Mode::Independent);
    let e = stopped_process_check(&coarse, &wiener, 0.1, 1.0, perm).unwrap();
    assert!(!e.pass, "{e:?}");
}

#[test]
fn functional_of_constant_and_cosine() {
    let dirac = EmpiricalMeasure::dirac(&[0.3]).unwrap();
    let a = flow(0.1, &[0.3], 1000, 10_000, 15, Mode::Covariance);
    let b = simulate_coalescing_ensemble(&CoalescingConfig::new(vec![0.3], 1000), 10_000, 16).unwrap();
    let f = moment_functional(&a, &b, &[1.0], &[one as TestFunction], &dirac).unwrap();
    assert_eq!((f.a.mean, f.b.mean, f.gap), (1.0, 1.0, 0.0));

    let f = moment_functional(&a, &b, &[1.0], &[f64::cos as TestFunction], &dirac).unwrap();
    let exact = 0.3f64.cos() * (-0.5f64).exp();
    assert!((f.a.mean - exact).abs() < 3.0 * f.a.se, "{:?}", f.a);
    assert!((f.b.mean - exact).abs() < 3.0 * f.b.se, "{:?}", f.b);
    assert!(moment_functional_check(&f, 10_000).pass);
}

#[test]
fn functional_separates_flow_from_independent_motion() {
    // starts inside each other's range decorrelate slowly for large ε
    let mu0 = EmpiricalMeasure::uniform(&[0.0, 0.2]).unwrap();
    let funcs = [flowsim::diagnostics::clip5 as TestFunction; 2];
    let a = flow(1.0, &[0.0, 0.2], 100, 20_000, 17, Mode::Covariance);
    let b = flow(1.0, &[0.0, 0.2], 100, 20_000, 18, Mode::Independent);
    let f = moment_functional(&a, &b, &[0.5, 1.0], &funcs, &mu0).unwrap();
    assert!(!moment_functional_check(&f, 20_000).pass, "{f:?}");
}

#[test]
fn energy_distance_examples() {
    let zeros = Cloud::scalars(vec![0.0; 50]);
    let ones = Cloud::scalars(vec![1.0; 70]);
    assert!((energy_distance(&zeros, &ones).unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(energy_distance(&ones, &ones).unwrap(), 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let n0 = Normal::new(0.0, 1.0).unwrap();
    let n1 = Normal::new(1.0, 1.0).unwrap();
    let a = Cloud::scalars((0..10_000).map(|_| n0.sample(&mut rng)).collect());
    let b = Cloud::scalars((0..10_000).map(|_| n1.sample(&mut rng)).collect());
    // 2E|N(1, 2)| − 2E|N(0, 2)|
    let abs_mean = |m: f64| gauss_trapezoid(f64::abs, m, 2f64.sqrt());
    let oracle = 2.0 * abs_mean(1.0) - 2.0 * abs_mean(0.0);
    let got = energy_distance(&a, &b).unwrap();
    assert!((got - oracle).abs() < 0.05 * oracle, "{got} vs {oracle}");
    assert!(energy_distance(&a, &Cloud::new(2, vec![0.0, 0.0])).is_err());
}

#[test]
fn report_flags_and_json_layout() {
    let mut r = DiagnosticsReport::new();
    r.insert("b", CheckEntry::two_sided(1.02, 0.01, 1.0, 0.05));
    r.insert("a", CheckEntry::below(f64::NAN, 0.0, 1.0, 0.0));
    assert!(r.get("b").unwrap().pass);
    assert!(!r.get("a").unwrap().pass);
    assert!(r.entries().all(|(_, e)| e.is_consistent()));
    assert!(!r.all_pass());
    let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["a", "b"]);
    let entry: Vec<&String> = v["b"].as_object().unwrap().keys().collect();
    assert_eq!(entry.len(), 5);
}
