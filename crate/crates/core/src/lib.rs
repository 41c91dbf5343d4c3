//! Simulation and verification toolkit for the mollified Brownian stochastic flow
//! `dx_ε(u,t) = ∫ φ_ε(x_ε(u,t) − q) W(dq,dt)`, its measure-valued image
//! `μ_t = μ_0 ∘ x_ε(·,t)⁻¹`, and the coalescing Brownian motion that the flow
//! approaches as `ε → 0` in one dimension.
//!
//! Module map:
//!
//! - [`kernel`]: the bump mollifier `φ`, its square-root scaling `φ_ε`, the
//!   covariance kernel `g_ε` and the n-point diffusion matrix.
//! - [`flow`]: Euler–Maruyama integration of the n-point motion, either through
//!   the diffusion matrix or through a discretized Wiener sheet.
//! - [`coalescing`]: coalescing Brownian n-point motion with Brownian-bridge
//!   merge correction.
//! - [`measures`] and [`transport`]: empirical measures, pushforward, the
//!   costs `φ_n`, and Wasserstein distances `γ_n`.
//! - [`stats`]: batch standard errors, Kolmogorov–Smirnov, energy distance and
//!   permutation tests.
//! - [`diagnostics`]: the checks that tie simulation output back to the
//!   theoretical identities and bounds.

pub mod coalescing;
pub mod diagnostics;
pub mod flow;
pub mod io;
pub mod kernel;
pub mod measures;
pub mod path;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod transport;

pub use coalescing::{CoalescingConfig, CoalescingPath, PartitionProcess};
pub use flow::{FlowPath, FlowState, Mode, SimConfig};
pub use kernel::{CovarianceKernel, MollifierKernel};
pub use measures::EmpiricalMeasure;
pub use path::GridPath;
