//! Time-gridded trajectories of tagged particles.

use thiserror::Error;

use crate::stats::Cloud;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathError {
    #[error("tag {tag} out of range for {n} particles")]
    TagOutOfRange { tag: usize, n: usize },
    #[error("time {0} is not on the recorded grid")]
    TimeNotOnGrid(f64),
    #[error("empty ensemble")]
    EmptyEnsemble,
}

/// A trajectory recorded on a time grid. Tags are zero-based in code.
pub trait GridPath {
    fn n_tags(&self) -> usize;
    fn times(&self) -> &[f64];
    /// Positions of all tags at recorded index `k`.
    fn row(&self, k: usize) -> &[f64];

    fn n_rows(&self) -> usize {
        self.times().len()
    }

    fn final_row(&self) -> &[f64] {
        self.row(self.n_rows() - 1)
    }

    /// Recorded index whose time matches `t` to within `1e-9`.
    fn index_of_time(&self, t: f64) -> Option<usize> {
        let times = self.times();
        let tol = 1e-9 * t.abs().max(1.0);
        let k = times.partition_point(|&s| s < t - tol);
        (k < times.len() && (times[k] - t).abs() <= tol).then_some(k)
    }

    /// Column of one tag.
    fn trajectory(&self, tag: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|k| self.row(k)[tag]).collect()
    }
}

/// Smallest pairwise separation in a row.
pub fn min_gap(row: &[f64]) -> f64 {
    let mut sorted = row.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

/// First recorded index at which some pair is within `threshold`.
pub fn first_exit_index<P: GridPath + ?Sized>(path: &P, threshold: f64) -> Option<usize> {
    (0..path.n_rows()).find(|&k| min_gap(path.row(k)) <= threshold)
}

/// Joint sample of the selected tags at time `t` across an ensemble.
pub fn kpoint_marginal<P: GridPath>(paths: &[P], tags: &[usize], t: f64) -> Result<Cloud, PathError> {
    let first = paths.first().ok_or(PathError::EmptyEnsemble)?;
    let n = first.n_tags();
    if let Some(&tag) = tags.iter().find(|&&tag| tag >= n) {
        return Err(PathError::TagOutOfRange { tag, n });
    }
    let mut data = Vec::with_capacity(paths.len() * tags.len());
    for p in paths {
        let k = p.index_of_time(t).ok_or(PathError::TimeNotOnGrid(t))?;
        let row = p.row(k);
        data.extend(tags.iter().map(|&tag| row[tag]));
    }
    Ok(Cloud::new(tags.len(), data))
}
