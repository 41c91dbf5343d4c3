//! Wasserstein distances `γ_n` between empirical measures.
//!
//! `γ_n(μ, ν)^{n∨1}` is the minimal expected cost `φ_n(u − v)` over couplings.
//! Two solvers are provided:
//!
//! - an exact assignment solver (Hungarian algorithm with potentials) on
//!   equal-weight atom lists, with rational weights expanded over a common
//!   denominator;
//! - the monotone (quantile) coupling on the line, which is optimal for the
//!   convex costs `n ≥ 1` but not for the concave `φ_0`.

use thiserror::Error;

use crate::measures::{cost_phi_n, EmpiricalMeasure};

/// Largest expanded atom list the exact solver accepts.
pub const EXPANSION_BUDGET: usize = 10_000;

/// Slack when matching weights to multiples of `1/N`.
const RATIONAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("measures live in different dimensions ({0} and {1})")]
    DimensionMismatch(usize, usize),
    #[error("the monotone coupling needs measures on the line, got dimension {0}")]
    NotOneDimensional(usize),
    #[error("weights have no common denominator within {budget} atoms; pass equal-weight atom lists instead")]
    ExpansionBudget { budget: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanEntry {
    pub i: usize,
    pub j: usize,
    pub mass: f64,
    /// Unit cost `φ_n(u_i − v_j)`.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransportPlan {
    pub entries: Vec<PlanEntry>,
    /// `Σ mass · cost`.
    pub total_cost: f64,
}

impl TransportPlan {
    /// Row sums indexed by source atom.
    pub fn source_marginal(&self, atoms: usize) -> Vec<f64> {
        let mut m = vec![0.0; atoms];
        for e in &self.entries {
            m[e.i] += e.mass;
        }
        m
    }

    pub fn target_marginal(&self, atoms: usize) -> Vec<f64> {
        let mut m = vec![0.0; atoms];
        for e in &self.entries {
            m[e.j] += e.mass;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Wasserstein {
    pub distance: f64,
    pub plan: TransportPlan,
}

fn finish(order: u32, plan: TransportPlan) -> Wasserstein {
    let p = order.max(1) as f64;
    let distance = plan.total_cost.max(0.0).powf(1.0 / p);
    Wasserstein { distance, plan }
}

/// `γ_n` with the cheapest applicable exact method: the monotone coupling for
/// `d = 1, n ≥ 1`, the assignment solver otherwise.
pub fn wasserstein(order: u32, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<Wasserstein, TransportError> {
    if mu.dim() == 1 && nu.dim() == 1 && order >= 1 {
        wasserstein_monotone(order, mu, nu)
    } else {
        wasserstein_exact(order, mu, nu)
    }
}

/// Assignment-based optimum on the common-denominator expansion.
pub fn wasserstein_exact(order: u32, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<Wasserstein, TransportError> {
    if mu.dim() != nu.dim() {
        return Err(TransportError::DimensionMismatch(mu.dim(), nu.dim()));
    }
    let (left, right) = expand_equal_weight(mu, nu, EXPANSION_BUDGET)?;
    let m = left.len();
    let mut cost = vec![0.0; m * m];
    for (a, &i) in left.iter().enumerate() {
        for (b, &j) in right.iter().enumerate() {
            cost[a * m + b] = cost_phi_n(order, mu.point(i), nu.point(j));
        }
    }
    let assignment = hungarian(&cost, m);
    let mut counts: std::collections::BTreeMap<(usize, usize), usize> = Default::default();
    for (a, &b) in assignment.iter().enumerate() {
        *counts.entry((left[a], right[b])).or_default() += 1;
    }
    let mut plan = TransportPlan::default();
    for ((i, j), c) in counts {
        let mass = c as f64 / m as f64;
        let unit = cost_phi_n(order, mu.point(i), nu.point(j));
        plan.total_cost += mass * unit;
        plan.entries.push(PlanEntry {
            i,
            j,
            mass,
            cost: unit,
        });
    }
    Ok(finish(order, plan))
}

/// Quantile coupling of two measures on the line (north-west corner rule on
/// sorted atoms). Works for arbitrary weights.
pub fn wasserstein_monotone(order: u32, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<Wasserstein, TransportError> {
    for m in [mu, nu] {
        if m.dim() != 1 {
            return Err(TransportError::NotOneDimensional(m.dim()));
        }
    }
    let sorted = |m: &EmpiricalMeasure| {
        let mut idx: Vec<usize> = (0..m.len()).collect();
        idx.sort_by(|&a, &b| m.point(a)[0].total_cmp(&m.point(b)[0]).then(a.cmp(&b)));
        idx
    };
    let (si, sj) = (sorted(mu), sorted(nu));
    let (mut a, mut b) = (0, 0);
    let (mut ra, mut rb) = (mu.weight(si[0]), nu.weight(sj[0]));
    let mut plan = TransportPlan::default();
    while a < si.len() && b < sj.len() {
        let mass = ra.min(rb);
        if mass > 0.0 {
            let (i, j) = (si[a], sj[b]);
            let unit = cost_phi_n(order, mu.point(i), nu.point(j));
            plan.total_cost += mass * unit;
            plan.entries.push(PlanEntry { i, j, mass, cost: unit });
        }
        ra -= mass;
        rb -= mass;
        // advance whichever side is exhausted (both on a tie)
        let adv_a = ra <= rb;
        let adv_b = rb <= ra;
        if adv_a {
            a += 1;
            if a < si.len() {
                ra = mu.weight(si[a]);
            }
        }
        if adv_b {
            b += 1;
            if b < sj.len() {
                rb = nu.weight(sj[b]);
            }
        }
    }
    Ok(finish(order, plan))
}

/// Index lists of equal length `N` in which atom `i` appears `N·w_i` times,
/// for the smallest such `N ≤ budget`.
pub fn expand_equal_weight(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    budget: usize,
) -> Result<(Vec<usize>, Vec<usize>), TransportError> {
    let counts_for = |m: &EmpiricalMeasure, n: usize| -> Option<Vec<usize>> {
        let mut counts = Vec::with_capacity(m.len());
        for &w in m.weights() {
            let x = w * n as f64;
            let r = x.round();
            if (x - r).abs() > RATIONAL_TOL * (n as f64).max(1.0) {
                return None;
            }
            counts.push(r as usize);
        }
        (counts.iter().sum::<usize>() == n).then_some(counts)
    };
    for n in 1..=budget {
        if let (Some(a), Some(b)) = (counts_for(mu, n), counts_for(nu, n)) {
            let expand = |c: Vec<usize>| {
                c.into_iter()
                    .enumerate()
                    .flat_map(|(i, k)| std::iter::repeat_n(i, k))
                    .collect::<Vec<_>>()
            };
            return Ok((expand(a), expand(b)));
        }
    }
    Err(TransportError::ExpansionBudget { budget })
}

/// Minimum-cost perfect matching on a dense `m × m` cost matrix (row-major).
/// Returns `assignment[row] = column`. `O(m³)` shortest augmenting paths with
/// dual potentials.
pub fn hungarian(cost: &[f64], m: usize) -> Vec<usize> {
    assert_eq!(cost.len(), m * m, "cost matrix must be m × m");
    if m == 0 {
        return Vec::new();
    }
    // 1-based internals; column 0 is the virtual source
    let mut u = vec![0.0; m + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for row in 1..=m {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; m];
    for j in 1..=m {
        assignment[owner[j] - 1] = j - 1;
    }
    assignment
}
