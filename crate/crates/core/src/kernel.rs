//! The mollifier `φ`, its square-root scaling `φ_ε`, the covariance kernel
//! `g_ε(x) = ∫ φ_ε(x + q) φ_ε(q) dq` and the n-point diffusion matrix.
//!
//! The bump is `φ(u) = c · exp(−1 / (1 − ‖u/r‖²))` on the open ball of radius
//! `r` and zero outside, with `c` fixed by quadrature so that `∫ φ = 1`. With
//! this scaling `∫ φ_ε² = 1` for every `ε`, so each particle of the flow is a
//! standard Brownian motion.
//!
//! `g_ε` is scale-free: `g_ε(x) = g_1(x/ε)`. The optional lookup table is
//! therefore built once for `ε = 1` and shared by every scale.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::quadrature::{AdaptiveSimpson, QuadratureError};

/// Points in the `g_ε` lookup table over `[−2εr, 2εr]`.
pub const TABLE_POINTS: usize = 4096;

pub const DEFAULT_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("dimension must be at least 1")]
    InvalidDimension,
    #[error("support radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("scale ε must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("point has {got} coordinates, kernel dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("the covariance kernel is only defined for d = 1, got d = {0}")]
    NotOneDimensional(usize),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Surface area of the unit sphere in `ℝ^d` (2 for `d = 1`).
fn sphere_area(d: usize) -> f64 {
    let (mut area, mut k) = if d % 2 == 1 { (2.0, 1) } else { (2.0 * PI, 2) };
    while k < d {
        area *= 2.0 * PI / k as f64;
        k += 2;
    }
    area
}

/// Unnormalized radial profile in units of the radius.
#[inline]
fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

/// Square root of [`bump`], evaluated without the square root.
#[inline]
fn sqrt_bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-0.5 / (1.0 - s * s)).exp()
    }
}

/// Spherically symmetric `C^∞` bump with unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct MollifierKernel {
    dim: usize,
    radius: f64,
    norm: f64,
    sqrt_norm: f64,
    rel_tol: f64,
}

impl MollifierKernel {
    pub fn new(dim: usize, radius: f64) -> Result<Self, KernelError> {
        Self::with_tolerance(dim, radius, DEFAULT_REL_TOL)
    }

    pub fn with_tolerance(dim: usize, radius: f64, rel_tol: f64) -> Result<Self, KernelError> {
        if dim == 0 {
            return Err(KernelError::InvalidDimension);
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(KernelError::InvalidRadius(radius));
        }
        let quad = AdaptiveSimpson::with_rel_tol(rel_tol);
        let radial = quad.integrate(|s| s.powi(dim as i32 - 1) * bump(s), 0.0, 1.0)?;
        let mass = sphere_area(dim) * radius.powi(dim as i32) * radial;
        let norm = 1.0 / mass;
        Ok(Self {
            dim,
            radius,
            norm,
            sqrt_norm: norm.sqrt(),
            rel_tol,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// The normalization constant `c`.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn rel_tol(&self) -> f64 {
        self.rel_tol
    }

    /// `φ` as a function of `‖u‖`.
    #[inline]
    pub fn radial(&self, rho: f64) -> f64 {
        self.norm * bump(rho / self.radius)
    }

    pub fn eval(&self, u: &[f64]) -> Result<f64, KernelError> {
        self.check_dim(u)?;
        Ok(self.radial(norm(u)))
    }

    /// `φ_ε` as a function of `‖u‖`.
    #[inline]
    pub fn phi_eps_radial(&self, eps: f64, rho: f64) -> f64 {
        eps.powf(-0.5 * self.dim as f64) * self.sqrt_norm * sqrt_bump(rho / (eps * self.radius))
    }

    /// `φ_ε` with the scale folded in, for hot loops.
    pub fn phi_eps_fn(&self, eps: f64) -> PhiEps {
        PhiEps {
            prefactor: eps.powf(-0.5 * self.dim as f64) * self.sqrt_norm,
            inv_support: 1.0 / (eps * self.radius),
        }
    }

    /// `φ_ε(u) = ε^{−d/2} φ(u/ε)^{1/2}`.
    pub fn phi_eps(&self, eps: f64, u: &[f64]) -> Result<f64, KernelError> {
        check_scale(eps)?;
        self.check_dim(u)?;
        Ok(self.phi_eps_radial(eps, norm(u)))
    }

    /// `∫ φ` by radial quadrature.
    pub fn total_mass(&self) -> Result<f64, KernelError> {
        self.radial_integral(self.radius, |rho| self.radial(rho))
    }

    /// `∫ φ_ε²` by radial quadrature.
    pub fn phi_eps_sq_integral(&self, eps: f64) -> Result<f64, KernelError> {
        check_scale(eps)?;
        self.radial_integral(eps * self.radius, |rho| self.phi_eps_radial(eps, rho).powi(2))
    }

    fn radial_integral<F: Fn(f64) -> f64>(&self, support: f64, f: F) -> Result<f64, KernelError> {
        let quad = AdaptiveSimpson::with_rel_tol(self.rel_tol);
        let d = self.dim as i32;
        let v = quad.integrate(|rho| rho.powi(d - 1) * f(rho), 0.0, support)?;
        Ok(sphere_area(self.dim) * v)
    }

    fn check_dim(&self, u: &[f64]) -> Result<(), KernelError> {
        if u.len() != self.dim {
            return Err(KernelError::DimensionMismatch {
                expected: self.dim,
                got: u.len(),
            });
        }
        Ok(())
    }
}

/// `φ_ε` as a function of distance, see [`MollifierKernel::phi_eps_fn`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiEps {
    prefactor: f64,
    inv_support: f64,
}

impl PhiEps {
    #[inline]
    pub fn eval(&self, rho: f64) -> f64 {
        self.prefactor * sqrt_bump(rho * self.inv_support)
    }
}

fn norm(u: &[f64]) -> f64 {
    u.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_scale(eps: f64) -> Result<(), KernelError> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(KernelError::InvalidScale(eps))
    }
}

/// `g_1` sampled on a uniform grid over `[−2r, 2r]`.
#[derive(Debug, Clone, PartialEq)]
struct UnitTable {
    lo: f64,
    step: f64,
    values: Vec<f64>,
}

impl UnitTable {
    fn build(k: &MollifierKernel, points: usize) -> Result<Self, KernelError> {
        let span = 2.0 * k.radius;
        let step = 2.0 * span / (points - 1) as f64;
        let mut values = vec![0.0; points];
        // symmetric grid: fill the right half and mirror
        for i in (points / 2)..points {
            let y = -span + step * i as f64;
            let v = unit_g(k, y)?;
            values[i] = v;
            values[points - 1 - i] = v;
        }
        Ok(Self {
            lo: -span,
            step,
            values,
        })
    }

    /// Four-point Lagrange interpolation.
    fn eval(&self, y: f64) -> f64 {
        let n = self.values.len();
        let pos = (y - self.lo) / self.step;
        let i = (pos.floor() as isize).clamp(1, n as isize - 3) as usize;
        let t = pos - i as f64;
        let (p0, p1, p2, p3) = (
            self.values[i - 1],
            self.values[i],
            self.values[i + 1],
            self.values[i + 2],
        );
        let w0 = -t * (t - 1.0) * (t - 2.0) / 6.0;
        let w1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
        let w2 = -(t + 1.0) * t * (t - 2.0) / 2.0;
        let w3 = (t + 1.0) * t * (t - 1.0) / 6.0;
        w0 * p0 + w1 * p1 + w2 * p2 + w3 * p3
    }
}

/// `g_1(y) = ∫ ψ(y + p) ψ(p) dp` with `ψ = φ^{1/2}` (scale `ε = 1`).
fn unit_g(k: &MollifierKernel, y: f64) -> Result<f64, KernelError> {
    let r = k.radius;
    let y = y.abs();
    if y >= 2.0 * r {
        return Ok(0.0);
    }
    let quad = AdaptiveSimpson::with_rel_tol(k.rel_tol);
    let c = k.norm;
    let v = quad.integrate_scaled(
        |p| c * sqrt_bump((y + p) / r) * sqrt_bump(p / r),
        -r,
        r - y,
        1.0,
    )?;
    Ok(v.clamp(0.0, 1.0))
}

/// The spatial covariance `g_ε` felt by two particles of the flow.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceKernel {
    mollifier: MollifierKernel,
    eps: f64,
    table: Option<Arc<UnitTable>>,
}

impl CovarianceKernel {
    /// Direct-quadrature kernel (no table).
    pub fn new(mollifier: MollifierKernel, eps: f64) -> Result<Self, KernelError> {
        check_scale(eps)?;
        if mollifier.dim != 1 {
            return Err(KernelError::NotOneDimensional(mollifier.dim));
        }
        Ok(Self {
            mollifier,
            eps,
            table: None,
        })
    }

    /// Kernel backed by a [`TABLE_POINTS`]-point lookup table.
    pub fn tabulated(mollifier: MollifierKernel, eps: f64) -> Result<Self, KernelError> {
        let mut k = Self::new(mollifier, eps)?;
        k.table = Some(Arc::new(UnitTable::build(&k.mollifier, TABLE_POINTS)?));
        Ok(k)
    }

    /// Same mollifier (and table, if any) at another scale.
    pub fn rescaled(&self, eps: f64) -> Result<Self, KernelError> {
        check_scale(eps)?;
        Ok(Self {
            eps,
            ..self.clone()
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn mollifier(&self) -> &MollifierKernel {
        &self.mollifier
    }

    pub fn is_tabulated(&self) -> bool {
        self.table.is_some()
    }

    /// `2εr`: beyond this separation the kernel vanishes.
    pub fn interaction_range(&self) -> f64 {
        2.0 * self.eps * self.mollifier.radius
    }

    /// `g_ε(x)`: from the table when present, otherwise by quadrature.
    /// Exactly zero for `|x| ≥ 2εr`.
    pub fn g_eps(&self, x: f64) -> Result<f64, KernelError> {
        if x.abs() >= self.interaction_range() {
            return Ok(0.0);
        }
        let y = x / self.eps;
        match &self.table {
            Some(t) => Ok(t.eval(y.abs()).clamp(0.0, 1.0)),
            None => unit_g(&self.mollifier, y),
        }
    }

    /// `g_ε(x)` by quadrature regardless of any table.
    pub fn g_eps_direct(&self, x: f64) -> Result<f64, KernelError> {
        if x.abs() >= self.interaction_range() {
            return Ok(0.0);
        }
        unit_g(&self.mollifier, x / self.eps)
    }

    /// `A(x) = (g_ε(x_i − x_j))_{ij}` with an exact unit diagonal. Coincident
    /// points get an exact 1 as well.
    pub fn diffusion_matrix(&self, xs: &[f64]) -> Result<DMatrix<f64>, KernelError> {
        let n = xs.len();
        let mut a = DMatrix::identity(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = if xs[i] == xs[j] {
                    1.0
                } else {
                    self.g_eps(xs[i] - xs[j])?
                };
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        Ok(a)
    }
}
