//! Finitely supported probability measures, their pushforward through a flow
//! map, the costs `φ_n`, and the moment and tail functionals.

use thiserror::Error;

pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("a measure needs at least one atom")]
    Empty,
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("coordinate count {coords} is not a multiple of dimension {dim}")]
    Ragged { coords: usize, dim: usize },
    #[error("{atoms} atoms but {weights} weights")]
    WeightCount { atoms: usize, weights: usize },
    #[error("weight {index} is negative or non-finite: {value}")]
    BadWeight { index: usize, value: f64 },
    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("atom {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("flow map is undefined at atom {0}")]
    UndefinedImage(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self, MeasureError> {
        if dim == 0 {
            return Err(MeasureError::ZeroDimension);
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(MeasureError::Ragged {
                coords: coords.len(),
                dim,
            });
        }
        let atoms = coords.len() / dim;
        if atoms == 0 {
            return Err(MeasureError::Empty);
        }
        if weights.len() != atoms {
            return Err(MeasureError::WeightCount {
                atoms,
                weights: weights.len(),
            });
        }
        if let Some((index, &value)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w >= 0.0))
        {
            return Err(MeasureError::BadWeight { index, value });
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(MeasureError::WeightSum(total));
        }
        if let Some(i) = (0..atoms).find(|&i| coords[i * dim..(i + 1) * dim].iter().any(|c| !c.is_finite())) {
            return Err(MeasureError::NonFinite(i));
        }
        Ok(Self {
            dim,
            coords,
            weights,
        })
    }

    /// Equal weights on the given points of the line.
    pub fn uniform(points: &[f64]) -> Result<Self, MeasureError> {
        Self::uniform_points(1, points.to_vec())
    }

    pub fn uniform_points(dim: usize, coords: Vec<f64>) -> Result<Self, MeasureError> {
        let atoms = coords.len().checked_div(dim).unwrap_or(0);
        let w = if atoms == 0 { 0.0 } else { 1.0 / atoms as f64 };
        Self::new(dim, coords, vec![w; atoms])
    }

    pub fn dirac(point: &[f64]) -> Result<Self, MeasureError> {
        Self::new(point.len(), point.to_vec(), vec![1.0])
    }

    /// Line measure from `(point, weight)` pairs.
    pub fn from_atoms(atoms: &[(f64, f64)]) -> Result<Self, MeasureError> {
        Self::new(
            1,
            atoms.iter().map(|a| a.0).collect(),
            atoms.iter().map(|a| a.1).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.coords.chunks(self.dim).zip(self.weights.iter().copied())
    }

    /// `⟨f, μ⟩`.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.atoms().map(|(p, w)| w * f(p)).sum()
    }

    /// Image measure `μ ∘ x⁻¹`. Atoms keep their identity and weight; use
    /// [`consolidate`](Self::consolidate) to merge coincident images.
    pub fn pushforward<F>(&self, mut map: F) -> Result<Self, MeasureError>
    where
        F: FnMut(usize, &[f64]) -> Option<Vec<f64>>,
    {
        let mut coords = Vec::with_capacity(self.coords.len());
        let mut dim = None;
        for (i, (p, _)) in self.atoms().enumerate() {
            let img = map(i, p).ok_or(MeasureError::UndefinedImage(i))?;
            match dim {
                None => dim = Some(img.len()),
                Some(d) if d != img.len() => return Err(MeasureError::DimensionMismatch(d, img.len())),
                _ => {}
            }
            coords.extend(img);
        }
        Self::new(dim.unwrap_or(0), coords, self.weights.clone())
    }

    /// Merges atoms with bit-identical coordinates, keeping first-seen order.
    pub fn consolidate(&self) -> Self {
        let mut coords: Vec<f64> = Vec::with_capacity(self.coords.len());
        let mut weights: Vec<f64> = Vec::with_capacity(self.len());
        for (p, w) in self.atoms() {
            let found = coords
                .chunks(self.dim)
                .position(|q| q.iter().zip(p).all(|(a, b)| a.to_bits() == b.to_bits()));
            match found {
                Some(k) => weights[k] += w,
                None => {
                    coords.extend_from_slice(p);
                    weights.push(w);
                }
            }
        }
        Self {
            dim: self.dim,
            coords,
            weights,
        }
    }

    /// `∫ ‖u‖ⁿ μ(du)`; for `n = 0` this is the bounded cost `‖u‖/(1+‖u‖)`.
    pub fn moment(&self, n: u32) -> f64 {
        let origin = vec![0.0; self.dim];
        self.integrate(|p| cost_phi_n(n, p, &origin))
    }

    /// `⟨g_k, μ⟩` for the 1-Lipschitz ramp `g_k(x) = min(max(‖x‖ − k, 0), 1)`.
    pub fn tail_mass(&self, k: f64) -> f64 {
        self.integrate(|p| tail_ramp(k, norm(p)))
    }
}

/// The ramp `min(max(ρ − k, 0), 1)`: zero inside the ball of radius `k`, one
/// outside radius `k + 1`.
#[inline]
pub fn tail_ramp(k: f64, rho: f64) -> f64 {
    (rho - k).clamp(0.0, 1.0)
}

fn norm(u: &[f64]) -> f64 {
    u.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `φ_0(u − v) = ‖u−v‖/(1+‖u−v‖)` and `φ_n(u − v) = ‖u−v‖ⁿ` for `n ≥ 1`.
pub fn cost_phi_n(n: u32, u: &[f64], v: &[f64]) -> f64 {
    let d = u
        .iter()
        .zip(v)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    cost_of_distance(n, d)
}

#[inline]
pub fn cost_of_distance(n: u32, d: f64) -> f64 {
    match n {
        0 => d / (1.0 + d),
        1 => d,
        _ => d.powi(n as i32),
    }
}
