//! Seeded random streams.
//!
//! Every replica owns `stream(seed, replica)`, so ensembles are reproducible
//! and independent of how replicas are scheduled across workers. The Wiener
//! sheet cells of the field mode use counter-based access into a separate
//! stream: the variate of cell `k` at step `m` is a pure function of
//! `(seed, replica, m, k)`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Field-noise streams live in the upper half of the stream space.
const FIELD_STREAM_BIT: u64 = 1 << 63;

/// Pair indices are offset so that negative cells map to valid positions.
const PAIR_BITS: u32 = 41;
const PAIR_OFFSET: i64 = 1 << (PAIR_BITS - 1);

/// Largest step index the field noise can address.
pub const MAX_FIELD_STEPS: u64 = 1 << 25;

/// Largest cell index magnitude the field noise can address.
pub const MAX_FIELD_CELL: i64 = 2 * (PAIR_OFFSET - 1);

pub fn replica_stream(seed: u64, replica: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica & !FIELD_STREAM_BIT);
    rng
}

/// Child seed for an independent sub-experiment identified by `label`.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // far past anything a replica stream consumes
    rng.set_stream(label & !FIELD_STREAM_BIT);
    rng.set_word_pos(1 << 66);
    rng.next_u64()
}

#[inline]
fn open_unit(x: u64) -> f64 {
    ((x >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn half_open_unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Counter-addressed standard normal variates for Wiener-sheet cells.
#[derive(Debug, Clone)]
pub struct CellNoise {
    rng: ChaCha8Rng,
}

impl CellNoise {
    pub fn new(seed: u64, replica: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(FIELD_STREAM_BIT | replica);
        Self { rng }
    }

    /// Writes the variates of cells `first..first + out.len()` at `step`.
    /// Returns `None` if the step or any cell is outside the addressable range.
    pub fn fill(&mut self, step: u64, first: i64, out: &mut [f64]) -> Option<()> {
        if out.is_empty() {
            return Some(());
        }
        let last = first.checked_add(out.len() as i64 - 1)?;
        if step >= MAX_FIELD_STEPS || first.abs() > MAX_FIELD_CELL || last.abs() > MAX_FIELD_CELL {
            return None;
        }
        // Box–Muller yields two variates per pair of words: cells 2j and 2j+1.
        let first_pair = first.div_euclid(2);
        let pos = ((step as u128) << PAIR_BITS) | (first_pair + PAIR_OFFSET) as u128;
        self.rng.set_word_pos(4 * pos);
        let mut cell = 2 * first_pair;
        let mut i = 0usize;
        while i < out.len() {
            let u1 = open_unit(self.rng.next_u64());
            let u2 = half_open_unit(self.rng.next_u64());
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
            for z in [r * c, r * s] {
                if cell >= first && i < out.len() {
                    out[i] = z;
                    i += 1;
                }
                cell += 1;
            }
        }
        Some(())
    }
}
