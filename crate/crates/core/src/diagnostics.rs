//! Statistical checks of simulated ensembles against exact laws and bounds.
//!
//! Every check produces a [`CheckEntry`] whose pass flag is a function of
//! its own fields: `|estimate − target| ≤ tol` for two-sided checks and
//! `estimate ≤ bound + tol` for one-sided ones. Hypothesis tests report their
//! statistic against its critical value in the one-sided form.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::coalescing::{simulate_coalescing_ensemble, CoalescingConfig, CoalescingError};
use crate::flow::{simulate_flow, stopped_row, FlowError, SimConfig};
use crate::kernel::{CovarianceKernel, KernelError};
use crate::measures::{tail_ramp, EmpiricalMeasure};
use crate::path::{kpoint_marginal, GridPath, PathError};
use crate::quadrature::{gaussian_expectation, QuadratureError};
use crate::rng::{derive_seed, replica_stream};
use crate::stats::{
    batch_se, energy_permutation_test, estimate, ks_critical, ks_test_normal, mean, Cloud, Estimate,
    PermutationConfig, StatsError,
};

/// Significance level of the Kolmogorov–Smirnov checks.
pub const KS_LEVEL: f64 = 0.01;
pub const MIN_MARGINAL_SAMPLES: usize = 1000;
pub const LIPSCHITZ_PAIRS: usize = 10_000;
/// Seed label separating the limit ensemble from the flow ensemble.
#[allow(clippy::unusual_byte_groupings)]
pub const LIMIT_STREAM: u64 = 0x4c49_4d49_54;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("ensemble is empty")]
    Empty,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Coalescing(#[from] CoalescingError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    TwoSided,
    Below,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckEntry {
    pub estimate: f64,
    pub se: f64,
    pub target_or_bound: f64,
    pub tol: f64,
    pub pass: bool,
    pub sense: Sense,
    pub replicas: usize,
    pub seed: Option<u64>,
    pub note: Option<String>,
}

impl CheckEntry {
    pub fn two_sided(estimate: f64, se: f64, target: f64, tol: f64) -> Self {
        Self::build(estimate, se, target, tol, Sense::TwoSided)
    }

    pub fn below(estimate: f64, se: f64, bound: f64, tol: f64) -> Self {
        Self::build(estimate, se, bound, tol, Sense::Below)
    }

    fn build(estimate: f64, se: f64, target_or_bound: f64, tol: f64, sense: Sense) -> Self {
        let pass = match sense {
            Sense::TwoSided => (estimate - target_or_bound).abs() <= tol,
            Sense::Below => estimate <= target_or_bound + tol,
        };
        Self {
            estimate,
            se,
            target_or_bound,
            tol,
            pass,
            sense,
            replicas: 0,
            seed: None,
            note: None,
        }
    }

    pub fn with_replicas(mut self, replicas: usize) -> Self {
        self.replicas = replicas;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// Recomputes the pass flag from the other fields.
    pub fn is_consistent(&self) -> bool {
        self.pass == Self::build(self.estimate, self.se, self.target_or_bound, self.tol, self.sense).pass
    }
}

#[derive(Serialize)]
struct EntryJson {
    estimate: f64,
    se: f64,
    target_or_bound: f64,
    tol: f64,
    pass: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnosticsReport {
    entries: BTreeMap<String, CheckEntry>,
}

impl DiagnosticsReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, entry: CheckEntry) {
        self.entries.insert(name.into(), entry);
    }

    /// Adds all entries of `other` under `prefix.`.
    pub fn extend_prefixed(&mut self, prefix: &str, other: DiagnosticsReport) {
        for (k, v) in other.entries {
            self.entries.insert(format!("{prefix}.{k}"), v);
        }
    }

    pub fn get(&self, name: &str) -> Option<&CheckEntry> {
        self.entries.get(name)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &CheckEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn all_pass(&self) -> bool {
        self.entries.values().all(|e| e.pass)
    }

    /// `{name: {estimate, se, target_or_bound, tol, pass}}` with sorted names,
    /// pretty-printed. Non-finite numbers become `null`.
    pub fn to_json(&self) -> String {
        let map: BTreeMap<&str, EntryJson> = self
            .entries
            .iter()
            .map(|(k, e)| {
                (
                    k.as_str(),
                    EntryJson {
                        estimate: e.estimate,
                        se: e.se,
                        target_or_bound: e.target_or_bound,
                        tol: e.tol,
                        pass: e.pass,
                    },
                )
            })
            .collect();
        serde_json::to_string_pretty(&map).expect("report serializes")
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for (name, e) in &self.entries {
            let rel = match e.sense {
                Sense::TwoSided => "target",
                Sense::Below => "bound",
            };
            let _ = write!(
                out,
                "{} {name}: estimate {:.6e} se {:.2e} {rel} {:.6e} tol {:.2e}",
                if e.pass { "PASS" } else { "FAIL" },
                e.estimate,
                e.se,
                e.target_or_bound,
                e.tol
            );
            if e.replicas > 0 {
                let _ = write!(out, " R={}", e.replicas);
            }
            if let Some(seed) = e.seed {
                let _ = write!(out, " seed={seed}");
            }
            if let Some(note) = &e.note {
                let _ = write!(out, " ({note})");
            }
            out.push('\n');
        }
        out
    }
}

fn require_nonempty<P>(paths: &[P]) -> Result<&P, DiagnosticsError> {
    paths.first().ok_or(DiagnosticsError::Empty)
}

fn row_at<P: GridPath>(path: &P, t: f64) -> Result<&[f64], DiagnosticsError> {
    let k = path.index_of_time(t).ok_or(PathError::TimeNotOnGrid(t))?;
    Ok(path.row(k))
}

fn check_tag<P: GridPath>(path: &P, tag: usize) -> Result<(), DiagnosticsError> {
    if tag >= path.n_tags() {
        return Err(PathError::TagOutOfRange { tag, n: path.n_tags() }.into());
    }
    Ok(())
}

/// `μ0` must be a line measure with one atom per tag.
fn check_measure<P: GridPath>(path: &P, mu0: &EmpiricalMeasure) -> Result<(), DiagnosticsError> {
    if mu0.dim() != 1 || mu0.len() != path.n_tags() {
        return Err(DiagnosticsError::Invalid(format!(
            "initial measure has {} atoms in dimension {}, paths carry {} tags",
            mu0.len(),
            mu0.dim(),
            path.n_tags()
        )));
    }
    Ok(())
}

/// `⟨f, μ_t⟩` for the image of `μ0` carried along one path row.
fn pair_with(mu0: &EmpiricalMeasure, row: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    mu0.weights().iter().zip(row).map(|(w, &x)| w * f(x)).sum()
}

/// Realized quadratic variation per unit time, worst coordinate.
pub fn qv_check<P: GridPath>(paths: &[P]) -> Result<CheckEntry, DiagnosticsError> {
    let first = require_nonempty(paths)?;
    let horizon = *first.times().last().expect("grid has a start row");
    if horizon <= 0.0 {
        return Err(DiagnosticsError::Invalid("paths have zero horizon".into()));
    }
    let mut worst: Option<CheckEntry> = None;
    for tag in 0..first.n_tags() {
        let qv: Vec<f64> = paths
            .iter()
            .map(|p| {
                (1..p.n_rows())
                    .map(|k| (p.row(k)[tag] - p.row(k - 1)[tag]).powi(2))
                    .sum::<f64>()
                    / horizon
            })
            .collect();
        let est = estimate(&qv);
        let entry = CheckEntry::two_sided(est.mean, est.se, 1.0, (3.0 * est.se).max(0.05));
        if worst
            .as_ref()
            .is_none_or(|w| (entry.estimate - 1.0).abs() > (w.estimate - 1.0).abs())
        {
            worst = Some(entry);
        }
    }
    Ok(worst.expect("at least one tag").with_replicas(paths.len()))
}

/// Realized bracket `Σ Δx_i Δx_j` against `Σ g_ε(x_i − x_j) h` along each path.
pub fn joint_char_check<P: GridPath>(
    paths: &[P],
    kernel: &CovarianceKernel,
    i: usize,
    j: usize,
) -> Result<CheckEntry, DiagnosticsError> {
    let first = require_nonempty(paths)?;
    check_tag(first, i)?;
    check_tag(first, j)?;
    let mut discrepancy = Vec::with_capacity(paths.len());
    let mut bracket = Vec::with_capacity(paths.len());
    for p in paths {
        let times = p.times();
        let (mut realized, mut predicted) = (0.0, 0.0);
        for k in 1..p.n_rows() {
            let (a, b) = (p.row(k - 1), p.row(k));
            realized += (b[i] - a[i]) * (b[j] - a[j]);
            predicted += kernel.g_eps(a[i] - a[j])? * (times[k] - times[k - 1]);
        }
        discrepancy.push(realized - predicted);
        bracket.push(predicted);
    }
    let est = estimate(&discrepancy);
    Ok(CheckEntry::two_sided(est.mean, est.se, 0.0, 3.0 * est.se)
        .with_replicas(paths.len())
        .with_note(format!("mean predicted bracket {:.6}", mean(&bracket))))
}

/// KS test of `samples` against `N(u, t)` plus the first four central
/// moments against `0, t, 0, 3t²`.
pub fn marginal_gaussian_check(samples: &[f64], u: f64, t: f64) -> Result<DiagnosticsReport, DiagnosticsError> {
    if samples.len() < MIN_MARGINAL_SAMPLES {
        return Err(DiagnosticsError::Invalid(format!(
            "{} samples, at least {MIN_MARGINAL_SAMPLES} required",
            samples.len()
        )));
    }
    let n = samples.len();
    let ks = ks_test_normal(samples, u, t)?;
    let mut report = DiagnosticsReport::new();
    report.insert(
        "ks",
        CheckEntry::below(ks.statistic, f64::NAN, ks_critical(n, KS_LEVEL), 0.0)
            .with_replicas(n)
            .with_note(format!("p-value {:.4}", ks.p_value)),
    );
    let targets = [0.0, t, 0.0, 3.0 * t * t];
    for (p, target) in (1..=4).zip(targets) {
        let powers: Vec<f64> = samples.iter().map(|x| (x - u).powi(p)).collect();
        let est = estimate(&powers);
        report.insert(
            format!("moment_{p}"),
            CheckEntry::two_sided(est.mean, est.se, target, 3.0 * est.se).with_replicas(n),
        );
    }
    Ok(report)
}

/// Test function, Lipschitz constant, exponent, time pair and bound constant
/// for the modulus estimate `E|⟨h,μ_{t₁}⟩ − ⟨h,μ_{t₂}⟩|ⁿ ≤ Cⁿ Kₙ |t₂ − t₁|^{n/2}`.
pub struct HolderCheckSpec {
    func: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub lipschitz: f64,
    pub exponent: u32,
    pub t1: f64,
    pub t2: f64,
    pub k_n: f64,
}

impl std::fmt::Debug for HolderCheckSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HolderCheckSpec")
            .field("lipschitz", &self.lipschitz)
            .field("exponent", &self.exponent)
            .field("t1", &self.t1)
            .field("t2", &self.t2)
            .field("k_n", &self.k_n)
            .finish_non_exhaustive()
    }
}

impl HolderCheckSpec {
    /// Fails unless `exponent` is even and positive and `func` is
    /// `lipschitz`-Lipschitz on [`LIPSCHITZ_PAIRS`] sampled pairs.
    pub fn new<F>(func: F, lipschitz: f64, exponent: u32, t1: f64, t2: f64, k_n: f64) -> Result<Self, DiagnosticsError>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if exponent == 0 || exponent % 2 == 1 {
            return Err(DiagnosticsError::Invalid(format!("exponent {exponent} must be even and positive")));
        }
        if !(lipschitz >= 0.0 && k_n >= 0.0 && t1 >= 0.0 && t2 >= 0.0) {
            return Err(DiagnosticsError::Invalid("constants and times must be nonnegative".into()));
        }
        let spec = Self {
            func: Box::new(func),
            lipschitz,
            exponent,
            t1,
            t2,
            k_n,
        };
        if let Some((x, y)) = spec.lipschitz_violation(0) {
            return Err(DiagnosticsError::Invalid(format!(
                "test function is not {lipschitz}-Lipschitz at ({x}, {y})"
            )));
        }
        Ok(spec)
    }

    /// The clipped identity `x ↦ clamp(x, −c, c)`, 1-Lipschitz.
    pub fn clipped_identity(clip: f64, t1: f64, t2: f64) -> Result<Self, DiagnosticsError> {
        Self::new(move |x| x.clamp(-clip, clip), 1.0, 2, t1, t2, 1.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.func)(x)
    }

    /// A sampled pair violating the Lipschitz bound, if any. Pairs are spread
    /// over `[−50, 50]` with separations from `1e−3` to `10`.
    pub fn lipschitz_violation(&self, seed: u64) -> Option<(f64, f64)> {
        let mut rng = replica_stream(seed, 0);
        (0..LIPSCHITZ_PAIRS).find_map(|_| {
            let x = rng.random_range(-50.0..50.0);
            let scale = 10f64.powf(rng.random_range(-3.0..1.0));
            let y = x + scale * rng.random_range(-1.0..1.0);
            let lhs = (self.eval(x) - self.eval(y)).abs();
            (lhs > self.lipschitz * (x - y).abs() * (1.0 + 1e-12) + 1e-15).then_some((x, y))
        })
    }

    pub fn bound(&self) -> f64 {
        self.lipschitz.powi(self.exponent as i32)
            * self.k_n
            * (self.t2 - self.t1).abs().powf(self.exponent as f64 / 2.0)
    }
}

/// Moment of the increment of `⟨h, μ_t⟩` between the two spec times. Passes
/// when the estimate is at most `bound · (1 + 3·se/estimate)`.
pub fn holder_check<P: GridPath>(
    spec: &HolderCheckSpec,
    paths: &[P],
    mu0: &EmpiricalMeasure,
) -> Result<CheckEntry, DiagnosticsError> {
    let first = require_nonempty(paths)?;
    check_measure(first, mu0)?;
    let increments = paths
        .iter()
        .map(|p| {
            let a = pair_with(mu0, row_at(p, spec.t1)?, |x| spec.eval(x));
            let b = pair_with(mu0, row_at(p, spec.t2)?, |x| spec.eval(x));
            Ok((a - b).powi(spec.exponent as i32))
        })
        .collect::<Result<Vec<f64>, DiagnosticsError>>()?;
    let est = estimate(&increments);
    let bound = spec.bound();
    let tol = if est.mean > 0.0 { 3.0 * bound * est.se / est.mean } else { 0.0 };
    Ok(CheckEntry::below(est.mean, est.se, bound, tol).with_replicas(paths.len()))
}

/// `E ∫|u|ⁿ μ_t(du)` over the ensemble.
pub fn measure_moment<P: GridPath>(
    paths: &[P],
    mu0: &EmpiricalMeasure,
    n: u32,
    t: f64,
) -> Result<Estimate, DiagnosticsError> {
    let first = require_nonempty(paths)?;
    check_measure(first, mu0)?;
    let values = paths
        .iter()
        .map(|p| Ok(pair_with(mu0, row_at(p, t)?, |x| x.abs().powi(n as i32))))
        .collect::<Result<Vec<f64>, DiagnosticsError>>()?;
    Ok(estimate(&values))
}

/// `E|u + √t Z|ⁿ` by quadrature.
pub fn gaussian_abs_moment(u: f64, t: f64, n: u32) -> Result<f64, DiagnosticsError> {
    Ok(gaussian_expectation(|x| x.abs().powi(n as i32), u, t.sqrt(), Some(0.0))?)
}

/// `D = 2^{n−1}·max(1, E|Z|ⁿ·t^{n/2})`, the constant in
/// `E∫|u|ⁿ μ_t(du) ≤ D·(∫|u|ⁿ μ_0(du) + 1)`.
pub fn moment_bound_constant(n: u32, t: f64) -> Result<f64, DiagnosticsError> {
    let abs_z = gaussian_abs_moment(0.0, 1.0, n)?;
    Ok(2f64.powi(n as i32 - 1) * (abs_z * t.powf(n as f64 / 2.0)).max(1.0))
}

/// Exact-law comparison against Gaussian quadrature, and the explicit
/// moment bound.
pub fn moment_bound_check<P: GridPath>(
    paths: &[P],
    mu0: &EmpiricalMeasure,
    n: u32,
    t: f64,
) -> Result<DiagnosticsReport, DiagnosticsError> {
    if n == 0 {
        return Err(DiagnosticsError::Invalid("moment order must be at least 1".into()));
    }
    let est = measure_moment(paths, mu0, n, t)?;
    let mut exact = 0.0;
    for (p, w) in mu0.atoms() {
        exact += w * gaussian_abs_moment(p[0], t, n)?;
    }
    let d = moment_bound_constant(n, t)?;
    let bound = d * (mu0.moment(n) + 1.0);
    let mut report = DiagnosticsReport::new();
    let floor = 1e-12 * exact.abs().max(1.0);
    report.insert(
        "exact_law",
        CheckEntry::two_sided(est.mean, est.se, exact, (3.0 * est.se).max(floor)).with_replicas(paths.len()),
    );
    report.insert(
        "bound",
        CheckEntry::below(est.mean, est.se, bound, 3.0 * est.se)
            .with_replicas(paths.len())
            .with_note(format!("D = {d:.6}")),
    );
    Ok(report)
}

/// Chebyshev chain `P{⟨g_k, μ_t⟩ > δ} ≤ δ⁻¹ k⁻ⁿ · moment` for each `k`.
/// `moment` is normally [`measure_moment`] of the same ensemble.
pub fn tail_condition_check<P: GridPath>(
    paths: &[P],
    mu0: &EmpiricalMeasure,
    n: u32,
    t: f64,
    delta: f64,
    ks: &[u32],
    moment: Estimate,
) -> Result<DiagnosticsReport, DiagnosticsError> {
    if n <= 2 {
        return Err(DiagnosticsError::Invalid(format!("tail condition needs n > 2, got {n}")));
    }
    if delta <= 0.0 || ks.contains(&0) {
        return Err(DiagnosticsError::Invalid("δ must be positive and k at least 1".into()));
    }
    let first = require_nonempty(paths)?;
    check_measure(first, mu0)?;
    let rows = paths.iter().map(|p| row_at(p, t)).collect::<Result<Vec<_>, _>>()?;
    let mut report = DiagnosticsReport::new();
    for &k in ks {
        let kf = f64::from(k);
        let hits: Vec<f64> = rows
            .iter()
            .map(|row| {
                let mass = pair_with(mu0, row, |x| tail_ramp(kf, x.abs()));
                if mass > delta { 1.0 } else { 0.0 }
            })
            .collect();
        let p = mean(&hits);
        let se_p = batch_se(&hits);
        let scale = 1.0 / (delta * kf.powi(n as i32));
        let tol = 3.0 * (se_p * se_p + (scale * moment.se).powi(2)).sqrt();
        report.insert(
            format!("k{k:02}"),
            CheckEntry::below(p, se_p, scale * moment.mean, tol).with_replicas(paths.len()),
        );
    }
    Ok(report)
}

/// Positions at `τ_ε ∧ T` of every path as a cloud.
pub fn stopped_cloud<P: GridPath>(paths: &[P], eps: f64, radius: f64) -> Result<Cloud, DiagnosticsError> {
    let first = require_nonempty(paths)?;
    let data = paths.iter().flat_map(|p| stopped_row(p, eps, radius).to_vec()).collect();
    Ok(Cloud::new(first.n_tags(), data))
}

/// Energy-distance permutation test between two sample clouds.
pub fn two_sample_check(a: &Cloud, b: &Cloud, perm: PermutationConfig) -> Result<CheckEntry, DiagnosticsError> {
    let out = energy_permutation_test(a, b, perm)?;
    Ok(CheckEntry::below(out.statistic, out.se, out.null_quantile, 0.0)
        .with_replicas(a.len().min(b.len()))
        .with_seed(perm.seed)
        .with_note(format!("permutation p-value {:.3}", out.p_value)))
}

/// The stopped flow against a stopped independent Brownian bundle.
pub fn stopped_process_check<P: GridPath, Q: GridPath>(
    flow: &[P],
    wiener: &[Q],
    eps: f64,
    radius: f64,
    perm: PermutationConfig,
) -> Result<CheckEntry, DiagnosticsError> {
    let a = stopped_cloud(flow, eps, radius)?;
    let b = stopped_cloud(wiener, eps, radius)?;
    if a.dim() != b.dim() {
        return Err(StatsError::DimensionMismatch(a.dim(), b.dim()).into());
    }
    two_sample_check(&a, &b, perm)
}

/// Bounded test function of the moment functional.
pub type TestFunction = fn(f64) -> f64;

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalEstimate {
    pub a: Estimate,
    pub b: Estimate,
    pub gap: f64,
    pub se: f64,
}

/// `E ∏ₖ ⟨φₖ, μ_{tₖ}⟩` for each of two ensembles.
pub fn moment_functional<P: GridPath, Q: GridPath>(
    a: &[P],
    b: &[Q],
    times: &[f64],
    funcs: &[TestFunction],
    mu0: &EmpiricalMeasure,
) -> Result<FunctionalEstimate, DiagnosticsError> {
    if times.len() != funcs.len() || times.is_empty() {
        return Err(DiagnosticsError::Invalid("need one test function per time".into()));
    }
    fn values<P: GridPath>(
        paths: &[P],
        times: &[f64],
        funcs: &[TestFunction],
        mu0: &EmpiricalMeasure,
    ) -> Result<Estimate, DiagnosticsError> {
        check_measure(require_nonempty(paths)?, mu0)?;
        let v = paths
            .iter()
            .map(|p| {
                times.iter().zip(funcs).try_fold(1.0, |acc, (&t, f)| {
                    Ok::<_, DiagnosticsError>(acc * pair_with(mu0, row_at(p, t)?, f))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        Ok(estimate(&v))
    }
    let ea = values(a, times, funcs, mu0)?;
    let eb = values(b, times, funcs, mu0)?;
    Ok(FunctionalEstimate {
        a: ea,
        b: eb,
        gap: ea.mean - eb.mean,
        se: ea.se.hypot(eb.se),
    })
}

pub fn moment_functional_check(f: &FunctionalEstimate, replicas: usize) -> CheckEntry {
    CheckEntry::two_sided(f.gap, f.se, 0.0, 3.0 * f.se)
        .with_replicas(replicas)
        .with_note(format!("flow {:.6} limit {:.6}", f.a.mean, f.b.mean))
}

pub fn clip5(x: f64) -> f64 {
    x.clamp(-5.0, 5.0)
}

/// Settings of the ε-sweep towards the coalescing limit.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub eps_list: Vec<f64>,
    pub starts: Vec<f64>,
    pub steps: usize,
    pub replicas: usize,
    pub seed: u64,
    pub mode: crate::flow::Mode,
    pub permutations: usize,
    /// Initial measure, test functions and times of the moment functional;
    /// `None` skips it.
    pub functional: Option<FunctionalSpec>,
}

#[derive(Debug, Clone)]
pub struct FunctionalSpec {
    pub mu0: EmpiricalMeasure,
    pub times: Vec<f64>,
    pub funcs: Vec<TestFunction>,
    pub steps: usize,
    pub replicas: usize,
    /// Scales at which the functional is evaluated; `None` means all.
    pub eps: Option<Vec<f64>>,
}

impl FunctionalSpec {
    /// Uniform `μ0` on `{0, 0.2}`, `φ₁ = φ₂ = clip(·, −5, 5)` at times `0.5, 1`.
    pub fn standard(steps: usize, replicas: usize) -> Self {
        Self {
            mu0: EmpiricalMeasure::uniform(&[0.0, 0.2]).expect("valid measure"),
            times: vec![0.5, 1.0],
            funcs: vec![clip5, clip5],
            steps,
            replicas,
            eps: None,
        }
    }

    fn covers(&self, eps: f64) -> bool {
        self.eps.as_ref().is_none_or(|list| list.contains(&eps))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub energy_distance: f64,
    pub energy_se: f64,
    pub null_q99: f64,
    pub functional_flow: Option<f64>,
    pub functional_limit: Option<f64>,
    pub functional_gap: Option<f64>,
    pub functional_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub report: DiagnosticsReport,
}

/// Flow two-point laws at time 1 against the coalescing limit over the
/// ε list. The flow uses the same seed at every ε; the limit ensemble uses a
/// derived seed so the two samples are independent.
pub fn convergence_sweep(cfg: &SweepConfig) -> Result<SweepResult, DiagnosticsError> {
    if cfg.eps_list.is_empty() {
        return Err(DiagnosticsError::Invalid("empty ε list".into()));
    }
    let limit_seed = derive_seed(cfg.seed, LIMIT_STREAM);
    let tags: Vec<usize> = (0..cfg.starts.len()).collect();
    let limit_cfg = CoalescingConfig::new(cfg.starts.clone(), cfg.steps).endpoints_only();
    let limit = simulate_coalescing_ensemble(&limit_cfg, cfg.replicas, limit_seed)?;
    let limit_cloud = kpoint_marginal(&limit, &tags, 1.0)?;
    drop(limit);

    let functional_limit = match &cfg.functional {
        Some(spec) => {
            let stride = functional_stride(spec)?;
            let lc = CoalescingConfig::new(spec.mu0.coords().to_vec(), spec.steps).with_stride(stride);
            Some(simulate_coalescing_ensemble(&lc, spec.replicas, limit_seed)?)
        }
        None => None,
    };

    let mut rows = Vec::with_capacity(cfg.eps_list.len());
    let mut report = DiagnosticsReport::new();
    let mut last: Option<(f64, f64)> = None;
    let mut last_gap: Option<(f64, f64)> = None;
    for &eps in &cfg.eps_list {
        let sim = SimConfig::new(eps, cfg.starts.clone(), cfg.steps, cfg.replicas, cfg.seed, cfg.mode).endpoints_only();
        let flow = simulate_flow(&sim)?;
        let cloud = kpoint_marginal(&flow, &tags, 1.0)?;
        drop(flow);
        let perm = PermutationConfig {
            permutations: cfg.permutations,
            ..PermutationConfig::new(derive_seed(cfg.seed, eps.to_bits()))
        };
        let out = energy_permutation_test(&cloud, &limit_cloud, perm)?;
        let mut row = SweepRow {
            eps,
            energy_distance: out.statistic,
            energy_se: out.se,
            null_q99: out.null_quantile,
            functional_flow: None,
            functional_limit: None,
            functional_gap: None,
            functional_se: None,
        };
        let key = format!("eps_{eps}");
        if let Some((prev, prev_se)) = last {
            let slack = prev_se.hypot(out.se);
            report.insert(
                format!("{key}.monotone"),
                CheckEntry::below(out.statistic, out.se, prev, slack).with_replicas(cfg.replicas),
            );
        }
        last = Some((out.statistic, out.se));
        let functional = cfg.functional.as_ref().filter(|spec| spec.covers(eps));
        if let (Some(spec), Some(limit_paths)) = (functional, &functional_limit) {
            let stride = functional_stride(spec)?;
            let fsim = SimConfig::new(eps, spec.mu0.coords().to_vec(), spec.steps, spec.replicas, cfg.seed, cfg.mode)
                .with_stride(stride);
            let fpaths = simulate_flow(&fsim)?;
            let f = moment_functional(&fpaths, limit_paths, &spec.times, &spec.funcs, &spec.mu0)?;
            row.functional_flow = Some(f.a.mean);
            row.functional_limit = Some(f.b.mean);
            row.functional_gap = Some(f.gap);
            row.functional_se = Some(f.se);
            report.insert(format!("{key}.functional"), moment_functional_check(&f, spec.replicas));
            if let Some((prev, prev_se)) = last_gap {
                report.insert(
                    format!("{key}.functional_monotone"),
                    CheckEntry::below(f.gap.abs(), f.se, prev, prev_se.hypot(f.se)).with_replicas(spec.replicas),
                );
            }
            last_gap = Some((f.gap.abs(), f.se));
        }
        rows.push(row);
    }
    let final_row = rows.last().expect("nonempty sweep");
    report.insert(
        format!("eps_{}.energy", final_row.eps),
        CheckEntry::below(final_row.energy_distance, final_row.energy_se, final_row.null_q99, 0.0)
            .with_replicas(cfg.replicas)
            .with_seed(cfg.seed),
    );
    Ok(SweepResult { rows, report })
}

/// Recording stride that lands on every functional time.
fn functional_stride(spec: &FunctionalSpec) -> Result<usize, DiagnosticsError> {
    let mut stride = spec.steps;
    for &t in &spec.times {
        let k = t * spec.steps as f64;
        if (k - k.round()).abs() > 1e-9 || k < 0.0 {
            return Err(DiagnosticsError::Invalid(format!("time {t} is not on the grid")));
        }
        stride = gcd(stride, k.round() as usize);
    }
    Ok(stride.max(1))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}
