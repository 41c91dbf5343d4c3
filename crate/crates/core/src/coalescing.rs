//! Coalescing Brownian n-point motion in one dimension: particles move as
//! independent Brownian motions until they meet and move together afterwards.
//!
//! Simulation runs on a fixed grid. Meetings between grid times are caught by
//! a Brownian-bridge test: two independent motions whose gap goes from `a` to
//! `b` over `h` touched in between with probability `exp(−ab/h)`. When two
//! blocks merge inside a step, the merged block continues from the midpoint
//! of their end-of-step positions. That embedding is a modelling choice: only
//! the laws before and after a meeting are prescribed.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::path::GridPath;
use crate::rng::{replica_stream, SimRng};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoalescingError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("bridge test needs positive gaps and duration, got gap0={gap0}, gap1={gap1}, h={h}")]
    NonPositiveGap { gap0: f64, gap1: f64, h: f64 },
}

/// Probability that two independent standard Brownian motions whose gap goes
/// from `gap0` to `gap1` over a step of length `h` meet during the step.
pub fn bridge_merge_probability(gap0: f64, gap1: f64, h: f64) -> Result<f64, CoalescingError> {
    if !(gap0 > 0.0 && gap1 > 0.0 && h > 0.0) {
        return Err(CoalescingError::NonPositiveGap { gap0, gap1, h });
    }
    Ok((-gap0 * gap1 / h).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoalescingConfig {
    pub starts: Vec<f64>,
    pub h: f64,
    pub steps: usize,
    /// Brownian-bridge merge test between grid times. Without it only
    /// order inversions at grid times are detected.
    pub bridge: bool,
    pub record_stride: usize,
}

impl CoalescingConfig {
    /// Unit horizon with `h = 1/steps`, bridge test on, every step recorded.
    pub fn new(starts: Vec<f64>, steps: usize) -> Self {
        Self {
            starts,
            h: 1.0 / steps.max(1) as f64,
            steps,
            bridge: true,
            record_stride: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn endpoints_only(self) -> Self {
        let s = self.steps.max(1);
        self.with_stride(s)
    }

    pub fn without_bridge(mut self) -> Self {
        self.bridge = false;
        self
    }

    pub fn validate(&self) -> Result<(), CoalescingError> {
        let bad = |m: &str| Err(CoalescingError::Config(m.to_string()));
        if self.starts.is_empty() {
            return bad("at least one start point is required");
        }
        if self.starts.iter().any(|u| !u.is_finite()) {
            return bad("start points must be finite");
        }
        if self.starts.windows(2).any(|w| w[1] < w[0]) {
            return bad("start points must be sorted");
        }
        if !(self.h > 0.0 && self.h.is_finite()) || self.steps == 0 {
            return bad("step size and step count must be positive");
        }
        if self.record_stride == 0 {
            return bad("record stride must be at least 1");
        }
        Ok(())
    }
}

/// Partition of the tags into blocks, as the smallest tag of each tag's block.
pub type Partition = Vec<usize>;

/// Merge history: the initial partition and every coarsening after it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PartitionProcess {
    events: Vec<(f64, Partition)>,
}

impl PartitionProcess {
    pub fn events(&self) -> &[(f64, Partition)] {
        &self.events
    }

    fn push(&mut self, t: f64, labels: Partition) {
        self.events.push((t, labels));
    }

    /// Partition in force at time `t`.
    pub fn at(&self, t: f64) -> &Partition {
        let k = self.events.partition_point(|(s, _)| *s <= t);
        &self.events[k.saturating_sub(1)].1
    }

    pub fn block_count(labels: &Partition) -> usize {
        labels.iter().enumerate().filter(|(i, l)| *i == **l).count()
    }

    /// Time at which tags `i` and `j` first share a block.
    pub fn meeting_time(&self, i: usize, j: usize) -> Option<f64> {
        self.events
            .iter()
            .find(|(_, p)| p[i] == p[j])
            .map(|(t, _)| *t)
    }

    pub fn merged_by(&self, i: usize, j: usize, t: f64) -> bool {
        self.meeting_time(i, j).is_some_and(|s| s <= t)
    }

    /// Every event coarsens its predecessor.
    pub fn is_refinement_monotone(&self) -> bool {
        self.events.windows(2).all(|w| {
            let (a, b) = (&w[0].1, &w[1].1);
            let n = a.len();
            (0..n).all(|i| (0..n).all(|j| a[i] != a[j] || b[i] == b[j]))
                && Self::block_count(b) <= Self::block_count(a)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoalescingPath {
    pub h: f64,
    pub steps: usize,
    pub partition: PartitionProcess,
    n: usize,
    times: Vec<f64>,
    positions: Vec<f64>,
}

impl CoalescingPath {
    pub fn final_block_count(&self) -> usize {
        self.partition
            .events()
            .last()
            .map_or(self.n, |(_, p)| PartitionProcess::block_count(p))
    }
}

impl GridPath for CoalescingPath {
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

#[derive(Debug, Clone, Copy)]
struct Block {
    pos: f64,
    first: usize,
    last: usize,
}

fn labels_of(blocks: &[Block], n: usize) -> Partition {
    let mut labels = vec![0; n];
    for b in blocks {
        labels[b.first..=b.last].fill(b.first);
    }
    labels
}

fn write_row(blocks: &[Block], out: &mut Vec<f64>) {
    for b in blocks {
        out.extend(std::iter::repeat_n(b.pos, b.last - b.first + 1));
    }
}

/// Merges runs of blocks joined by fired pairs. Positions average over the run.
fn merge_runs(blocks: &mut Vec<Block>, fire: &[bool]) {
    let mut merged = Vec::with_capacity(blocks.len());
    let mut i = 0;
    while i < blocks.len() {
        let mut j = i;
        while j < fire.len() && fire[j] {
            j += 1;
        }
        let run = &blocks[i..=j];
        let pos = run.iter().map(|b| b.pos).sum::<f64>() / run.len() as f64;
        merged.push(Block {
            pos,
            first: run[0].first,
            last: run[run.len() - 1].last,
        });
        i = j + 1;
    }
    *blocks = merged;
}

/// One coalescing path on its own stream.
pub fn simulate_coalescing(cfg: &CoalescingConfig, rng: &mut SimRng) -> CoalescingPath {
    let n = cfg.starts.len();
    let mut blocks: Vec<Block> = Vec::with_capacity(n);
    for (i, &u) in cfg.starts.iter().enumerate() {
        match blocks.last_mut() {
            Some(b) if b.pos == u => b.last = i,
            _ => blocks.push(Block {
                pos: u,
                first: i,
                last: i,
            }),
        }
    }
    let mut partition = PartitionProcess::default();
    partition.push(0.0, labels_of(&blocks, n));

    let rows = cfg.steps / cfg.record_stride + 2;
    let mut times = Vec::with_capacity(rows);
    let mut positions = Vec::with_capacity(rows * n);
    times.push(0.0);
    write_row(&blocks, &mut positions);

    let sqrt_h = cfg.h.sqrt();
    let mut old = Vec::with_capacity(n);
    let mut fire = Vec::with_capacity(n);
    for m in 1..=cfg.steps {
        old.clear();
        old.extend(blocks.iter().map(|b| b.pos));
        for b in blocks.iter_mut() {
            b.pos += sqrt_h * rng.sample::<f64, _>(StandardNormal);
        }
        let before = blocks.len();
        // bridge test: one draw per adjacent pair per step
        fire.clear();
        for i in 0..blocks.len().saturating_sub(1) {
            let gap0 = old[i + 1] - old[i];
            let gap1 = blocks[i + 1].pos - blocks[i].pos;
            let hit = gap1 <= 0.0
                || (cfg.bridge && rng.random::<f64>() < (-gap0 * gap1 / cfg.h).exp());
            fire.push(hit);
        }
        // averaging inside a run can overshoot a neighbour; merge those too
        while fire.iter().any(|&f| f) {
            merge_runs(&mut blocks, &fire);
            fire.clear();
            fire.extend(blocks.windows(2).map(|w| w[1].pos <= w[0].pos));
        }
        if blocks.len() < before {
            partition.push(m as f64 * cfg.h, labels_of(&blocks, n));
        }
        if m % cfg.record_stride == 0 || m == cfg.steps {
            times.push(m as f64 * cfg.h);
            write_row(&blocks, &mut positions);
        }
    }
    CoalescingPath {
        h: cfg.h,
        steps: cfg.steps,
        partition,
        n,
        times,
        positions,
    }
}

/// `replicas` independent paths on streams `(seed, 0..replicas)`.
pub fn simulate_coalescing_ensemble(
    cfg: &CoalescingConfig,
    replicas: usize,
    seed: u64,
) -> Result<Vec<CoalescingPath>, CoalescingError> {
    cfg.validate()?;
    if replicas == 0 {
        return Err(CoalescingError::Config("at least one replica is required".into()));
    }
    Ok((0..replicas as u64)
        .into_par_iter()
        .map(|r| simulate_coalescing(cfg, &mut replica_stream(seed, r)))
        .collect())
}

/// Fraction of paths in which tags `i` and `j` met by time `t`, with its
/// binomial standard error.
pub fn merge_frequency(paths: &[CoalescingPath], i: usize, j: usize, t: f64) -> (f64, f64) {
    let hits = paths.iter().filter(|p| p.partition.merged_by(i, j, t)).count();
    let r = paths.len() as f64;
    let p = hits as f64 / r;
    (p, (p * (1.0 - p) / r).sqrt())
}
