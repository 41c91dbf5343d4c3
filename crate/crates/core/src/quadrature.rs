//! Adaptive Simpson quadrature with an explicit error budget.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("adaptive Simpson did not converge: achieved error estimate {achieved:.3e}, requested {requested:.3e}")]
pub struct QuadratureError {
    pub achieved: f64,
    pub requested: f64,
    /// Best available estimate of the integral.
    pub value: f64,
}

/// Adaptive Simpson rule on a fixed set of initial panels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveSimpson {
    pub rel_tol: f64,
    pub max_depth: u32,
    pub initial_panels: usize,
    /// Integrand evaluation budget; exhausting it is a convergence failure.
    pub max_evals: usize,
}

impl Default for AdaptiveSimpson {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_depth: 40,
            initial_panels: 16,
            max_evals: 2_000_000,
        }
    }
}

struct Accum {
    value: f64,
    failed_error: f64,
    failed: bool,
    evals: usize,
}

impl AdaptiveSimpson {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }

    /// Integrates with tolerance `rel_tol · |I|`, where `|I|` comes from a
    /// composite Simpson pass over the initial panels.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<f64, QuadratureError> {
        let coarse = self.composite(&f, a, b);
        let scale = coarse.abs().max(f64::MIN_POSITIVE);
        self.integrate_abs(f, a, b, self.rel_tol * scale)
    }

    /// Integrates with tolerance `rel_tol · scale`. Useful when the integral
    /// is known to live on a fixed scale (for instance a correlation in `[0, 1]`)
    /// and may be arbitrarily small.
    pub fn integrate_scaled<F: Fn(f64) -> f64>(
        &self,
        f: F,
        a: f64,
        b: f64,
        scale: f64,
    ) -> Result<f64, QuadratureError> {
        self.integrate_abs(f, a, b, self.rel_tol * scale)
    }

    pub fn integrate_abs<F: Fn(f64) -> f64>(
        &self,
        f: F,
        a: f64,
        b: f64,
        abs_tol: f64,
    ) -> Result<f64, QuadratureError> {
        if a == b {
            return Ok(0.0);
        }
        if b < a {
            return self.integrate_abs(f, b, a, abs_tol).map(|v| -v).map_err(|e| QuadratureError {
                value: -e.value,
                ..e
            });
        }
        let panels = self.initial_panels.max(1);
        let width = (b - a) / panels as f64;
        let mut acc = Accum {
            value: 0.0,
            failed_error: 0.0,
            failed: false,
            evals: 0,
        };
        for p in 0..panels {
            let lo = a + width * p as f64;
            let hi = if p + 1 == panels { b } else { lo + width };
            let mid = 0.5 * (lo + hi);
            let (flo, fmid, fhi) = (f(lo), f(mid), f(hi));
            let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
            let eps = abs_tol / panels as f64;
            self.recurse(&f, lo, hi, flo, fmid, fhi, whole, eps, 0, &mut acc);
        }
        if acc.failed {
            Err(QuadratureError {
                achieved: acc.failed_error,
                requested: abs_tol,
                value: acc.value,
            })
        } else {
            Ok(acc.value)
        }
    }

    fn composite<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64) -> f64 {
        let panels = self.initial_panels.max(1) * 4;
        let h = (b - a) / panels as f64;
        let mut sum = 0.0;
        for p in 0..panels {
            let lo = a + h * p as f64;
            sum += h / 6.0 * (f(lo) + 4.0 * f(lo + 0.5 * h) + f(lo + h));
        }
        sum
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        &self,
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        eps: f64,
        depth: u32,
        acc: &mut Accum,
    ) {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        acc.evals += 2;
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * eps {
            acc.value += left + right + delta / 15.0;
            return;
        }
        if depth >= self.max_depth || acc.evals >= self.max_evals {
            acc.value += left + right + delta / 15.0;
            acc.failed = true;
            acc.failed_error += delta.abs() / 15.0;
            return;
        }
        self.recurse(f, a, m, fa, flm, fm, left, 0.5 * eps, depth + 1, acc);
        self.recurse(f, m, b, fm, frm, fb, right, 0.5 * eps, depth + 1, acc);
    }
}

/// `E g(μ + σZ)` for standard normal `Z`, integrating over `μ ± 40σ`. The
/// optional `kink` (a point where `g` is not smooth) splits the range.
pub fn gaussian_expectation<F: Fn(f64) -> f64>(
    g: F,
    mean: f64,
    sd: f64,
    kink: Option<f64>,
) -> Result<f64, QuadratureError> {
    if sd == 0.0 {
        return Ok(g(mean));
    }
    let density = |x: f64| {
        let z = (x - mean) / sd;
        (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
    };
    let lo = mean - 40.0 * sd;
    let hi = mean + 40.0 * sd;
    let quad = AdaptiveSimpson {
        rel_tol: 1e-12,
        max_depth: 50,
        initial_panels: 64,
        ..AdaptiveSimpson::default()
    };
    let integrand = |x: f64| g(x) * density(x);
    match kink {
        Some(k) if k > lo && k < hi => {
            Ok(quad.integrate(integrand, lo, k)? + quad.integrate(integrand, k, hi)?)
        }
        _ => quad.integrate(integrand, lo, hi),
    }
}
