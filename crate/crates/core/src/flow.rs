//! Euler–Maruyama integration of the n-point motion of the smoothed flow in
//! one dimension.
//!
//! Two constructions of the same law are provided:
//!
//! - **covariance mode** steps the diffusion with matrix `A(x) = (g_ε(x_i − x_j))`
//!   through its symmetric PSD square root;
//! - **field mode** discretizes the Wiener sheet into cells of pitch `εr/8` and
//!   drives every particle with the same cell variates, which keeps the common
//!   noise coupling of the continuum flow.
//!
//! A third mode, [`Mode::Independent`], runs independent Brownian motions from
//! the same starts and serves as the reference bundle for stopped-process
//! comparisons.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{CovarianceKernel, KernelError, MollifierKernel, PhiEps};
use crate::path::{first_exit_index, GridPath};
use crate::rng::{replica_stream, CellNoise, SimRng, MAX_FIELD_STEPS};

/// Relative PSD tolerance: eigenvalues below `−PSD_TOL · n` are an error.
pub const PSD_TOL: f64 = 1e-9;

/// Cell pitch of the field mode, in units of `εr`.
pub const FIELD_PITCH_FRACTION: f64 = 1.0 / 8.0;

/// Window margin of the field mode, in units of `√h`.
pub const FIELD_MARGIN_SDS: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("diffusion matrix is not PSD: eigenvalue {eigenvalue:.3e} below tolerance {tolerance:.3e}")]
    NotPsd { eigenvalue: f64, tolerance: f64 },
    #[error("eigendecomposition produced non-finite values")]
    Eigen,
    #[error("noise window [{lo}, {hi}] at step {step} exceeds the addressable cell range")]
    WindowOverflow { lo: f64, hi: f64, step: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Covariance,
    Field,
    Independent,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Covariance => "covariance",
            Mode::Field => "field",
            Mode::Independent => "independent",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "covariance" => Ok(Mode::Covariance),
            "field" => Ok(Mode::Field),
            "independent" => Ok(Mode::Independent),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub eps: f64,
    /// Support radius `r` of the mollifier.
    pub radius: f64,
    pub starts: Vec<f64>,
    pub h: f64,
    pub steps: usize,
    pub replicas: usize,
    pub seed: u64,
    pub mode: Mode,
    /// Record every `record_stride`-th step (the last step is always recorded).
    pub record_stride: usize,
}

impl SimConfig {
    /// Unit time horizon: `h = 1/steps`, `r = 1`, every step recorded.
    pub fn new(eps: f64, starts: Vec<f64>, steps: usize, replicas: usize, seed: u64, mode: Mode) -> Self {
        Self {
            eps,
            radius: 1.0,
            starts,
            h: 1.0 / steps.max(1) as f64,
            steps,
            replicas,
            seed,
            mode,
            record_stride: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    /// Records only the start and the final step.
    pub fn endpoints_only(self) -> Self {
        let s = self.steps.max(1);
        self.with_stride(s)
    }

    pub fn horizon(&self) -> f64 {
        self.h * self.steps as f64
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |m: String| Err(FlowError::Config(m));
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("ε must be positive, got {}", self.eps));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return bad(format!("radius must be positive, got {}", self.radius));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad(format!("step h must be positive, got {}", self.h));
        }
        if self.steps == 0 {
            return bad("at least one step is required".into());
        }
        if self.replicas == 0 {
            return bad("at least one replica is required".into());
        }
        if self.record_stride == 0 {
            return bad("record stride must be at least 1".into());
        }
        if self.starts.is_empty() {
            return bad("at least one start point is required".into());
        }
        if self.starts.iter().any(|u| !u.is_finite()) {
            return bad("start points must be finite".into());
        }
        if self.starts.windows(2).any(|w| w[1] <= w[0]) {
            return bad("start points must be strictly increasing".into());
        }
        if self.mode == Mode::Field && self.steps as u64 >= MAX_FIELD_STEPS {
            return bad(format!("field mode supports fewer than {MAX_FIELD_STEPS} steps"));
        }
        Ok(())
    }
}

/// Positions of the tagged particles at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub step: u64,
    pub positions: Vec<f64>,
    pub starts: Vec<f64>,
}

impl FlowState {
    pub fn new(starts: &[f64]) -> Self {
        Self {
            t: 0.0,
            step: 0,
            positions: starts.to_vec(),
            starts: starts.to_vec(),
        }
    }

    /// Adjacent tag pairs currently out of start order.
    pub fn inversions(&self) -> u64 {
        self.positions.windows(2).filter(|w| w[1] < w[0]).count() as u64
    }
}

/// One simulated trajectory of the n tagged particles.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPath {
    pub mode: Mode,
    pub h: f64,
    pub steps: usize,
    pub stride: usize,
    /// Adjacent-pair order inversions summed over all steps.
    pub crossings: u64,
    n: usize,
    times: Vec<f64>,
    positions: Vec<f64>,
}

impl FlowPath {
    /// Builds a path from recorded rows (fixtures and file input).
    pub fn from_rows(mode: Mode, h: f64, times: Vec<f64>, rows: &[Vec<f64>]) -> Self {
        let n = rows.first().map_or(0, Vec::len);
        let steps = times
            .last()
            .map_or(0, |t| (t / h).round() as usize);
        Self {
            mode,
            h,
            steps,
            stride: 1,
            crossings: 0,
            n,
            times,
            positions: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn starts(&self) -> &[f64] {
        self.row(0)
    }

    /// Crossings per adjacent pair per step.
    pub fn crossing_rate(&self) -> f64 {
        if self.n < 2 || self.steps == 0 {
            return 0.0;
        }
        self.crossings as f64 / ((self.n - 1) * self.steps) as f64
    }
}

impl GridPath for FlowPath {
    fn n_tags(&self) -> usize {
        self.n
    }

    fn times(&self) -> &[f64] {
        &self.times
    }

    fn row(&self, k: usize) -> &[f64] {
        &self.positions[k * self.n..(k + 1) * self.n]
    }
}

/// First grid time at which some pair is within `2εr`, or `None`.
pub fn first_exit_time<P: GridPath + ?Sized>(path: &P, eps: f64, radius: f64) -> Option<f64> {
    first_exit_index(path, 2.0 * eps * radius).map(|k| path.times()[k])
}

/// Positions at `τ_ε ∧ T`: the first row with a pair within `2εr`, else the last row.
pub fn stopped_row<P: GridPath + ?Sized>(path: &P, eps: f64, radius: f64) -> &[f64] {
    match first_exit_index(path, 2.0 * eps * radius) {
        Some(k) => path.row(k),
        None => path.final_row(),
    }
}

/// Square root `[[d, o], [o, d]]` of the correlation matrix `[[1, ρ], [ρ, 1]]`.
#[inline]
fn sqrt_corr2(rho: f64) -> (f64, f64) {
    let (p, m) = ((1.0 + rho).max(0.0).sqrt(), (1.0 - rho).max(0.0).sqrt());
    (0.5 * (p + m), 0.5 * (p - m))
}

/// Symmetric PSD square root with eigenvalue clamping.
pub fn psd_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>, FlowError> {
    let n = a.nrows();
    if n == 2 && a[(0, 0)] == 1.0 && a[(1, 1)] == 1.0 && a[(0, 1)] == a[(1, 0)] {
        let (d, o) = sqrt_corr2(a[(0, 1)]);
        return Ok(DMatrix::from_row_slice(2, 2, &[d, o, o, d]));
    }
    let eig = SymmetricEigen::new(a.clone());
    let tol = -PSD_TOL * n as f64;
    let mut lam = eig.eigenvalues.clone();
    for l in lam.iter_mut() {
        if !l.is_finite() {
            return Err(FlowError::Eigen);
        }
        if *l < tol {
            return Err(FlowError::NotPsd {
                eigenvalue: *l,
                tolerance: tol,
            });
        }
        *l = l.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&lam) * q.transpose())
}

/// Scratch space for covariance steps, reused across steps.
#[derive(Debug, Default, Clone)]
pub struct CovarianceScratch {
    order: Vec<usize>,
    increments: Vec<f64>,
    reps: Vec<usize>,
    group_of: Vec<usize>,
    group_inc: Vec<f64>,
    pts: Vec<f64>,
    xi: Vec<f64>,
}

/// One Euler–Maruyama step `x ← x + √h · L ξ` with `L Lᵀ = A(x)`.
///
/// `A` is block diagonal over clusters of particles whose sorted neighbours
/// are closer than `2εr`; each cluster is handled separately and particles at
/// bit-identical positions share one variate.
pub fn step_covariance(
    kernel: &CovarianceKernel,
    state: &mut FlowState,
    h: f64,
    rng: &mut SimRng,
    scratch: &mut CovarianceScratch,
) -> Result<(), FlowError> {
    if state.positions.len() == 2 {
        return step_pair(kernel, state, h, rng);
    }
    step_clusters(kernel, state, h, rng, scratch)
}

/// Two-particle step. Draws variates in the same order as the general path.
fn step_pair(kernel: &CovarianceKernel, state: &mut FlowState, h: f64, rng: &mut SimRng) -> Result<(), FlowError> {
    let sqrt_h = h.sqrt();
    let x = &mut state.positions;
    let (lo, hi) = if x[1] < x[0] { (1, 0) } else { (0, 1) };
    if x[0] == x[1] {
        let dx = sqrt_h * rng.sample::<f64, _>(StandardNormal);
        x[0] += dx;
        x[1] += dx;
    } else if x[hi] - x[lo] < kernel.interaction_range() {
        let (d, o) = sqrt_corr2(kernel.g_eps(x[lo] - x[hi])?);
        let (z0, z1): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        x[lo] += sqrt_h * (d * z0 + o * z1);
        x[hi] += sqrt_h * (o * z0 + d * z1);
    } else {
        x[lo] += sqrt_h * rng.sample::<f64, _>(StandardNormal);
        x[hi] += sqrt_h * rng.sample::<f64, _>(StandardNormal);
    }
    state.step += 1;
    state.t = state.step as f64 * h;
    Ok(())
}

fn step_clusters(
    kernel: &CovarianceKernel,
    state: &mut FlowState,
    h: f64,
    rng: &mut SimRng,
    scratch: &mut CovarianceScratch,
) -> Result<(), FlowError> {
    let n = state.positions.len();
    let x = &state.positions;
    let range = kernel.interaction_range();
    let sqrt_h = h.sqrt();

    let CovarianceScratch {
        order,
        increments,
        reps,
        group_of,
        group_inc,
        pts,
        xi,
    } = scratch;
    order.clear();
    order.extend(0..n);
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]).then(i.cmp(&j)));
    increments.clear();
    increments.resize(n, 0.0);

    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && x[order[end]] - x[order[end - 1]] < range {
            end += 1;
        }
        let cluster = &order[start..end];
        // groups of bit-identical positions inside the cluster
        reps.clear();
        group_of.clear();
        for (k, &i) in cluster.iter().enumerate() {
            if k == 0 || x[i] != x[cluster[k - 1]] {
                reps.push(i);
            }
            group_of.push(reps.len() - 1);
        }
        group_inc.clear();
        match reps.len() {
            1 => group_inc.push(sqrt_h * rng.sample::<f64, _>(StandardNormal)),
            2 => {
                let (d, o) = sqrt_corr2(kernel.g_eps(x[reps[0]] - x[reps[1]])?);
                let (z0, z1): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
                group_inc.push(sqrt_h * (d * z0 + o * z1));
                group_inc.push(sqrt_h * (o * z0 + d * z1));
            }
            m => {
                pts.clear();
                pts.extend(reps.iter().map(|&i| x[i]));
                let a = kernel.diffusion_matrix(pts)?;
                let l = psd_sqrt(&a)?;
                xi.clear();
                xi.extend((0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
                group_inc.extend((0..m).map(|g| sqrt_h * (0..m).map(|j| l[(g, j)] * xi[j]).sum::<f64>()));
            }
        }
        for (k, &i) in cluster.iter().enumerate() {
            increments[i] = group_inc[group_of[k]];
        }
        start = end;
    }
    for (xi, dx) in state.positions.iter_mut().zip(increments.iter()) {
        *xi += dx;
    }
    state.step += 1;
    state.t = state.step as f64 * h;
    Ok(())
}

/// One step of independent Brownian motions.
pub fn step_independent(state: &mut FlowState, h: f64, rng: &mut SimRng) {
    let sqrt_h = h.sqrt();
    for x in state.positions.iter_mut() {
        *x += sqrt_h * rng.sample::<f64, _>(StandardNormal);
    }
    state.step += 1;
    state.t = state.step as f64 * h;
}

/// Discretized Wiener sheet: cells of pitch `Δq` centred at `(k + ½)Δq`, each
/// carrying one standard normal variate per step.
#[derive(Debug, Clone)]
pub struct NoiseField {
    pitch: f64,
    support: f64,
    margin: f64,
    window: (f64, f64),
    phi: PhiEps,
    noise: CellNoise,
    cells: Vec<f64>,
    increments: Vec<f64>,
}

impl NoiseField {
    pub fn new(mollifier: &MollifierKernel, eps: f64, h: f64, seed: u64, replica: u64) -> Self {
        let support = eps * mollifier.radius();
        Self {
            pitch: support * FIELD_PITCH_FRACTION,
            support,
            margin: FIELD_MARGIN_SDS * h.sqrt(),
            window: (0.0, 0.0),
            phi: mollifier.phi_eps_fn(eps),
            noise: CellNoise::new(seed, replica),
            cells: Vec::new(),
            increments: Vec::new(),
        }
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    /// Window of the most recent step.
    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    /// Covers every particle `± εr` plus the margin. Variates are addressed by
    /// cell index, so cells are generated lazily and only where some particle
    /// can feel them.
    fn extend_window(&mut self, positions: &[f64], step: u64) -> Result<(), FlowError> {
        let (lo, hi) = positions
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let lo = lo - self.support - self.margin;
        let hi = hi + self.support + self.margin;
        self.window = (lo, hi);
        let limit = crate::rng::MAX_FIELD_CELL as f64 * self.pitch;
        if !(lo.is_finite() && hi.is_finite()) || lo <= -limit || hi >= limit {
            return Err(FlowError::WindowOverflow { lo, hi, step });
        }
        Ok(())
    }

    /// Variance `Σ_k φ_ε(x − q_k)² Δq` of a unit-time increment at `x`.
    pub fn riemann_variance(&self, x: f64) -> f64 {
        let (lo, hi) = self.cell_range(x);
        (lo..=hi)
            .map(|k| self.phi.eval((x - self.center(k)).abs()).powi(2) * self.pitch)
            .sum()
    }

    #[inline]
    fn center(&self, k: i64) -> f64 {
        (k as f64 + 0.5) * self.pitch
    }

    /// Cells whose centre may lie within `εr` of `x`.
    #[inline]
    fn cell_range(&self, x: f64) -> (i64, i64) {
        let lo = ((x - self.support) / self.pitch - 0.5).ceil() as i64;
        let hi = ((x + self.support) / self.pitch - 0.5).floor() as i64;
        (lo, hi)
    }
}

/// One step `x_i ← x_i + √(Δq h) Σ_k φ_ε(x_i − q_k) ξ_k` with shared cell
/// variates `ξ_k`.
pub fn step_field(state: &mut FlowState, h: f64, nf: &mut NoiseField) -> Result<(), FlowError> {
    nf.extend_window(&state.positions, state.step)?;
    let scale = (nf.pitch * h).sqrt();
    nf.increments.clear();
    for &x in &state.positions {
        let (lo, hi) = nf.cell_range(x);
        let len = (hi - lo + 1).max(0) as usize;
        nf.cells.resize(len, 0.0);
        nf.noise.fill(state.step, lo, &mut nf.cells).ok_or(FlowError::WindowOverflow {
            lo: nf.window.0,
            hi: nf.window.1,
            step: state.step,
        })?;
        let mut acc = 0.0;
        for (j, xi) in nf.cells.iter().enumerate() {
            let q = nf.center(lo + j as i64);
            acc += nf.phi.eval((x - q).abs()) * xi;
        }
        nf.increments.push(scale * acc);
    }
    for (x, dx) in state.positions.iter_mut().zip(&nf.increments) {
        *x += dx;
    }
    state.step += 1;
    state.t = state.step as f64 * h;
    Ok(())
}

/// Shared, immutable ingredients of an ensemble run.
#[derive(Debug, Clone)]
pub struct FlowContext {
    pub mollifier: MollifierKernel,
    pub covariance: Option<CovarianceKernel>,
}

impl FlowContext {
    pub fn new(cfg: &SimConfig) -> Result<Self, FlowError> {
        cfg.validate()?;
        let mollifier = MollifierKernel::new(1, cfg.radius)?;
        let covariance = match cfg.mode {
            Mode::Covariance => Some(CovarianceKernel::tabulated(mollifier.clone(), cfg.eps)?),
            _ => None,
        };
        Ok(Self {
            mollifier,
            covariance,
        })
    }

    /// Reuses an existing table at a new scale.
    pub fn from_kernel(kernel: &CovarianceKernel, eps: f64) -> Result<Self, FlowError> {
        Ok(Self {
            mollifier: kernel.mollifier().clone(),
            covariance: Some(kernel.rescaled(eps)?),
        })
    }
}

/// Simulates one replica on its own stream.
pub fn simulate_replica(cfg: &SimConfig, ctx: &FlowContext, replica: u64) -> Result<FlowPath, FlowError> {
    let n = cfg.starts.len();
    let mut state = FlowState::new(&cfg.starts);
    let rows = cfg.steps / cfg.record_stride + 2;
    let mut times = Vec::with_capacity(rows);
    let mut positions = Vec::with_capacity(rows * n);
    times.push(0.0);
    positions.extend_from_slice(&state.positions);

    let mut rng = replica_stream(cfg.seed, replica);
    let mut scratch = CovarianceScratch::default();
    let mut field = match cfg.mode {
        Mode::Field => Some(NoiseField::new(&ctx.mollifier, cfg.eps, cfg.h, cfg.seed, replica)),
        _ => None,
    };
    let mut crossings = 0u64;
    for m in 1..=cfg.steps {
        match cfg.mode {
            Mode::Covariance => {
                let kernel = ctx
                    .covariance
                    .as_ref()
                    .ok_or_else(|| FlowError::Config("covariance kernel missing".into()))?;
                step_covariance(kernel, &mut state, cfg.h, &mut rng, &mut scratch)?
            }
            Mode::Field => step_field(&mut state, cfg.h, field.as_mut().expect("field mode"))?,
            Mode::Independent => step_independent(&mut state, cfg.h, &mut rng),
        }
        crossings += state.inversions();
        if m % cfg.record_stride == 0 || m == cfg.steps {
            times.push(m as f64 * cfg.h);
            positions.extend_from_slice(&state.positions);
        }
    }
    Ok(FlowPath {
        mode: cfg.mode,
        h: cfg.h,
        steps: cfg.steps,
        stride: cfg.record_stride,
        crossings,
        n,
        times,
        positions,
    })
}

/// `R` independent replicas, ordered by replica index.
pub fn simulate_flow(cfg: &SimConfig) -> Result<Vec<FlowPath>, FlowError> {
    let ctx = FlowContext::new(cfg)?;
    simulate_flow_with(cfg, &ctx)
}

pub fn simulate_flow_with(cfg: &SimConfig, ctx: &FlowContext) -> Result<Vec<FlowPath>, FlowError> {
    cfg.validate()?;
    (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| simulate_replica(cfg, ctx, r))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn pair_fast_path_matches_clusters() {
        let k = kernel(0.1);
        for starts in [[0.0, 0.05], [0.3, 0.1], [0.0, 0.0], [0.0, 1.0], [1.0, 0.0]] {
            let (mut a, mut b) = (FlowState::new(&starts), FlowState::new(&starts));
            let (mut ra, mut rb) = (SimRng::seed_from_u64(3), SimRng::seed_from_u64(3));
            let mut scratch = CovarianceScratch::default();
            for _ in 0..500 {
                step_pair(&k, &mut a, 1e-3, &mut ra).unwrap();
                step_clusters(&k, &mut b, 1e-3, &mut rb, &mut scratch).unwrap();
                assert_eq!(a.positions, b.positions);
            }
        }
    }

    fn kernel(eps: f64) -> CovarianceKernel {
        CovarianceKernel::tabulated(MollifierKernel::new(1, 1.0).unwrap(), eps).unwrap()
    }

    #[test]
    fn config_validation() {
        let ok = SimConfig::new(0.1, vec![0.0, 1.0], 10, 2, 1, Mode::Covariance);
        assert!(ok.validate().is_ok());
        let mut bad = ok.clone();
        bad.starts = vec![1.0, 0.0];
        assert!(matches!(bad.validate(), Err(FlowError::Config(_))));
        let mut bad = ok.clone();
        bad.replicas = 0;
        assert!(bad.validate().is_err());
        let mut bad = ok;
        bad.h = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.1, 0.5, 1.0, 0.4, 0.1, 0.4, 1.0]);
        let l = psd_sqrt(&a).unwrap();
        assert!((&l * l.transpose() - &a).abs().max() < 1e-12);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let l = psd_sqrt(&b).unwrap();
        assert!((&l * &l - &b).abs().max() < 1e-14);
    }

    #[test]
    fn psd_sqrt_rejects_indefinite() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, -1.0, 1.0, 1.0, 1.0, -1.0, 1.0, 1.0]);
        assert!(matches!(psd_sqrt(&a), Err(FlowError::NotPsd { .. })));
    }

    #[test]
    fn coincident_particles_move_together() {
        let k = kernel(0.1);
        let mut s = FlowState::new(&[0.3, 0.3, 0.35]);
        let mut rng = SimRng::seed_from_u64(4);
        let mut scratch = CovarianceScratch::default();
        for _ in 0..50 {
            step_covariance(&k, &mut s, 1e-3, &mut rng, &mut scratch).unwrap();
            assert_eq!(s.positions[0], s.positions[1]);
        }
    }

    #[test]
    fn field_mode_shares_noise_at_zero_gap() {
        let m = MollifierKernel::new(1, 1.0).unwrap();
        let mut nf = NoiseField::new(&m, 0.1, 1e-3, 5, 0);
        let mut s = FlowState::new(&[0.2, 0.2]);
        for _ in 0..20 {
            step_field(&mut s, 1e-3, &mut nf).unwrap();
            assert_eq!(s.positions[0], s.positions[1]);
        }
        assert!(nf.pitch() <= 0.1 / 8.0 + 1e-15);
        let (lo, hi) = nf.window();
        assert!(lo <= s.positions[0] - 0.1 && hi >= s.positions[0] + 0.1);
    }

    #[test]
    fn first_exit_on_grid() {
        let eps = 0.1;
        let rows: Vec<Vec<f64>> = (0..10).map(|k| vec![0.0, if k < 7 { 1.0 } else { 0.15 }]).collect();
        let times: Vec<f64> = (0..10).map(|k| k as f64 * 0.1).collect();
        let p = FlowPath::from_rows(Mode::Covariance, 0.1, times.clone(), &rows);
        assert_eq!(first_exit_time(&p, eps, 1.0), Some(times[7]));
        let rows: Vec<Vec<f64>> = (0..10).map(|_| vec![0.0, 5.0 * eps]).collect();
        let p = FlowPath::from_rows(Mode::Covariance, 0.1, times, &rows);
        assert_eq!(first_exit_time(&p, eps, 1.0), None);
        assert_eq!(stopped_row(&p, eps, 1.0), &[0.0, 0.5]);
    }

    #[test]
    fn recording_stride_keeps_last_step() {
        let cfg = SimConfig::new(0.1, vec![0.0], 10, 1, 3, Mode::Independent).with_stride(4);
        let paths = simulate_flow(&cfg).unwrap();
        let t = paths[0].times();
        assert_eq!(t.len(), 4);
        assert!((t[3] - 1.0).abs() < 1e-12);
        assert!((t[2] - 0.8).abs() < 1e-12);
    }
}
