use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use flowsim::coalescing::{merge_frequency, simulate_coalescing_ensemble};
use flowsim::diagnostics::{
    convergence_sweep, holder_check, joint_char_check, marginal_gaussian_check, measure_moment, moment_bound_check,
    qv_check, stopped_process_check, tail_condition_check, DiagnosticsReport, FunctionalSpec, HolderCheckSpec,
    SweepConfig,
};
use flowsim::flow::simulate_flow;
use flowsim::io::{write_paths, write_plan, SCHEMA_VERSION};
use flowsim::rng::derive_seed;
use flowsim::stats::{PermutationConfig, DEFAULT_PERMUTATIONS};
use flowsim::transport::wasserstein;
use flowsim::{CoalescingConfig, CovarianceKernel, EmpiricalMeasure, GridPath, Mode, MollifierKernel, SimConfig};
use serde_json::json;

use crate::args::{CheckName, CoalesceArgs, ConvergeArgs, DiagnoseArgs, Ensemble, FlowArgs, WassersteinArgs};
use crate::input::{parse_measure, sorted_line_measure};
use crate::CliError;

/// Seed label of the independent Brownian bundle used by the stopped check.
const WIENER_STREAM: u64 = 0x5749_454e;
/// Seed label of the permutation shuffles.
const PERMUTATION_STREAM: u64 = 0x5045_524d;

/// Time pairs of the Hölder modulus check.
const HOLDER_PAIRS: [(f64, f64); 5] = [(0.0, 0.1), (0.1, 0.3), (0.25, 0.75), (0.5, 0.6), (0.2, 1.0)];
const HOLDER_CLIP: f64 = 10.0;
const MOMENT_ORDERS: [u32; 2] = [2, 3];
const TAIL_ORDER: u32 = 3;
const TAIL_DELTA: f64 = 0.1;
const TAIL_KS: [u32; 8] = [3, 4, 5, 6, 7, 8, 9, 10];

/// Everything a subcommand produces; nothing touches the disk until the run
/// has finished.
pub struct Outcome {
    pub files: Vec<(PathBuf, Vec<u8>)>,
    pub stdout: String,
    pub pass: bool,
}

fn config<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

fn sim<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Simulation(e.to_string())
}

fn check_out_dir(out: &Path) -> Result<(), CliError> {
    if out.exists() && !out.is_dir() {
        return Err(CliError::Config(format!("{} exists and is not a directory", out.display())));
    }
    Ok(())
}

fn json_bytes(v: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s.into_bytes()
}

/// Start points and initial measure from `--starts` or `--mu0`.
fn initial_measure(starts: &[f64], mu0: Option<&str>) -> Result<EmpiricalMeasure, CliError> {
    match mu0 {
        Some(spec) => sorted_line_measure(&parse_measure(spec)?),
        None => EmpiricalMeasure::uniform(starts).map_err(config),
    }
}

fn flow_config(eps: f64, mu0: &EmpiricalMeasure, ens: &Ensemble, seed: u64, mode: Mode) -> Result<SimConfig, CliError> {
    let cfg = SimConfig::new(eps, mu0.coords().to_vec(), ens.steps, ens.replicas, seed, mode);
    cfg.validate().map_err(config)?;
    Ok(cfg)
}

pub fn flow(a: FlowArgs) -> Result<Outcome, CliError> {
    check_out_dir(&a.common.out)?;
    let mu0 = initial_measure(&a.starts, a.mu0.as_deref())?;
    let cfg = flow_config(a.eps, &mu0, &a.ensemble, a.common.seed, a.mode.into())?.with_stride(a.stride);
    cfg.validate().map_err(config)?;
    let paths = simulate_flow(&cfg).map_err(sim)?;
    let mut csv = Vec::new();
    write_paths(&mut csv, &paths, cfg.h).map_err(sim)?;
    let crossings: u64 = paths.iter().map(|p| p.crossings).sum();
    Ok(Outcome {
        files: vec![(a.common.out.join("paths.csv"), csv)],
        stdout: format!(
            "{} replicas of {} tags, {} steps, mode {}; {crossings} order inversions\n",
            cfg.replicas,
            cfg.starts.len(),
            cfg.steps,
            cfg.mode.as_str()
        ),
        pass: true,
    })
}

pub fn coalesce(a: CoalesceArgs) -> Result<Outcome, CliError> {
    check_out_dir(&a.common.out)?;
    let mut cfg = CoalescingConfig::new(a.starts.clone(), a.ensemble.steps);
    cfg = match a.paths_stride {
        Some(k) => cfg.with_stride(k),
        None => cfg.endpoints_only(),
    };
    cfg.validate().map_err(config)?;
    if a.ensemble.replicas == 0 {
        return Err(CliError::Config("at least one replica is required".into()));
    }
    let paths = simulate_coalescing_ensemble(&cfg, a.ensemble.replicas, a.common.seed).map_err(sim)?;
    let n = cfg.starts.len();
    let t = cfg.h * cfg.steps as f64;
    // all tags in one block exactly when the outermost two have met
    let (rate, se) = merge_frequency(&paths, 0, n - 1, t);
    let pairs: Vec<serde_json::Value> = (0..n.saturating_sub(1))
        .map(|i| {
            let (p, s) = merge_frequency(&paths, i, i + 1, t);
            json!({ "tags": [i + 1, i + 2], "merge_rate": p, "merge_rate_se": s })
        })
        .collect();
    let mean_blocks = paths.iter().map(|p| p.final_block_count() as f64).sum::<f64>() / paths.len() as f64;
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "starts": cfg.starts,
        "steps": cfg.steps,
        "replicas": paths.len(),
        "seed": a.common.seed,
        "merge_rate": rate,
        "merge_rate_se": se,
        "adjacent_pairs": pairs,
        "mean_final_blocks": mean_blocks,
    });
    let mut files = vec![(a.common.out.join("summary.json"), json_bytes(&summary))];
    if a.paths_stride.is_some() {
        let mut csv = Vec::new();
        write_paths(&mut csv, &paths, cfg.h).map_err(sim)?;
        files.push((a.common.out.join("paths.csv"), csv));
    }
    Ok(Outcome {
        files,
        stdout: format!("merge rate {rate:.6} ± {se:.6} over {} replicas\n", paths.len()),
        pass: true,
    })
}

pub fn transport(a: WassersteinArgs) -> Result<Outcome, CliError> {
    check_out_dir(&a.out)?;
    let mu = parse_measure(&a.mu0)?;
    let nu = parse_measure(&a.nu)?;
    if mu.dim() != nu.dim() {
        return Err(CliError::Config(format!("measures live in dimensions {} and {}", mu.dim(), nu.dim())));
    }
    let w = wasserstein(a.order, &mu, &nu).map_err(config)?;
    let mut csv = Vec::new();
    write_plan(&mut csv, &w.plan).map_err(sim)?;
    let solver = if mu.dim() == 1 && a.order >= 1 { "monotone" } else { "assignment" };
    let result = json!({
        "schema_version": SCHEMA_VERSION,
        "order": a.order,
        "distance": w.distance,
        "total_cost": w.plan.total_cost,
        "solver": solver,
    });
    Ok(Outcome {
        files: vec![(a.out.join("plan.csv"), csv), (a.out.join("result.json"), json_bytes(&result))],
        stdout: format!("{}\n", w.distance),
        pass: true,
    })
}

pub fn diagnose(a: DiagnoseArgs) -> Result<Outcome, CliError> {
    check_out_dir(&a.common.out)?;
    let mu0 = initial_measure(&a.starts, a.mu0.as_deref())?;
    let seed = a.common.seed;
    let cfg = flow_config(a.eps, &mu0, &a.ensemble, seed, a.mode.into())?;
    let n = mu0.len();
    let applicable = |c: CheckName| match c {
        CheckName::Joint | CheckName::Stopped => n >= 2,
        CheckName::Marginal => cfg.replicas >= flowsim::diagnostics::MIN_MARGINAL_SAMPLES,
        _ => true,
    };
    let mut checks = a.checks.clone();
    if checks.is_empty() {
        checks = [
            CheckName::Qv,
            CheckName::Joint,
            CheckName::Marginal,
            CheckName::Holder,
            CheckName::Moment,
            CheckName::Tail,
            CheckName::Stopped,
        ]
        .into_iter()
        .filter(|&c| applicable(c))
        .collect();
    } else if let Some(c) = checks.iter().find(|&&c| !applicable(c)) {
        return Err(CliError::Config(match c {
            CheckName::Marginal => format!(
                "the marginal check needs at least {} replicas",
                flowsim::diagnostics::MIN_MARGINAL_SAMPLES
            ),
            other => format!("the {} check needs at least two start points", other.key()),
        }));
    }
    checks.sort();
    checks.dedup();

    let paths = simulate_flow(&cfg).map_err(sim)?;
    let t = cfg.horizon();
    let mut report = DiagnosticsReport::new();
    for check in checks {
        match check {
            CheckName::Qv => report.insert("qv", qv_check(&paths).map_err(sim)?),
            CheckName::Joint => {
                let kernel = CovarianceKernel::tabulated(MollifierKernel::new(1, cfg.radius).map_err(sim)?, cfg.eps)
                    .map_err(sim)?;
                report.insert("joint_char", joint_char_check(&paths, &kernel, 0, 1).map_err(sim)?);
            }
            CheckName::Marginal => {
                for (i, &u) in cfg.starts.iter().enumerate() {
                    let xs: Vec<f64> = paths.iter().map(|p| p.final_row()[i]).collect();
                    let r = marginal_gaussian_check(&xs, u, t).map_err(sim)?;
                    report.extend_prefixed(&format!("marginal.tag{}", i + 1), r);
                }
            }
            CheckName::Holder => {
                for (t1, t2) in HOLDER_PAIRS {
                    let spec = HolderCheckSpec::clipped_identity(HOLDER_CLIP, t1 * t, t2 * t).map_err(sim)?;
                    report.insert(format!("holder.{t1}_{t2}"), holder_check(&spec, &paths, &mu0).map_err(sim)?);
                }
            }
            CheckName::Moment => {
                for order in MOMENT_ORDERS {
                    let r = moment_bound_check(&paths, &mu0, order, t).map_err(sim)?;
                    report.extend_prefixed(&format!("moment.n{order}"), r);
                }
            }
            CheckName::Tail => {
                let moment = measure_moment(&paths, &mu0, TAIL_ORDER, t).map_err(sim)?;
                let r = tail_condition_check(&paths, &mu0, TAIL_ORDER, t, TAIL_DELTA, &TAIL_KS, moment).map_err(sim)?;
                report.extend_prefixed("tail", r);
            }
            CheckName::Stopped => {
                let wiener_cfg = SimConfig {
                    seed: derive_seed(seed, WIENER_STREAM),
                    mode: Mode::Independent,
                    ..cfg.clone()
                };
                let wiener = simulate_flow(&wiener_cfg).map_err(sim)?;
                let perm = PermutationConfig::new(derive_seed(seed, PERMUTATION_STREAM));
                let e = stopped_process_check(&paths, &wiener, cfg.eps, cfg.radius, perm).map_err(sim)?;
                report.insert("stopped", e.with_seed(seed));
            }
        }
    }
    let mut json = report.to_json();
    json.push('\n');
    Ok(Outcome {
        files: vec![(a.common.out.join("report.json"), json.into_bytes())],
        stdout: report.render_text(),
        pass: report.all_pass(),
    })
}

pub fn converge(a: ConvergeArgs) -> Result<Outcome, CliError> {
    check_out_dir(&a.common.out)?;
    let mode: Mode = a.mode.into();
    if a.eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CliError::Config("--eps-list must be strictly decreasing".into()));
    }
    for &eps in &a.eps_list {
        SimConfig::new(eps, a.starts.clone(), a.ensemble.steps, a.ensemble.replicas, a.common.seed, mode)
            .validate()
            .map_err(config)?;
    }
    if a.permutations == 0 {
        return Err(CliError::Config("at least one permutation is required".into()));
    }
    let functional = if a.functional {
        let steps = a.functional_steps.unwrap_or(a.ensemble.steps);
        let replicas = a.functional_replicas.unwrap_or(a.ensemble.replicas);
        if let Some(e) = a.functional_eps.iter().find(|e| !a.eps_list.contains(e)) {
            return Err(CliError::Config(format!("--functional-eps value {e} is not in --eps-list")));
        }
        let spec = FunctionalSpec {
            eps: (!a.functional_eps.is_empty()).then(|| a.functional_eps.clone()),
            ..FunctionalSpec::standard(steps, replicas)
        };
        SimConfig::new(a.eps_list[0], spec.mu0.coords().to_vec(), steps, replicas, a.common.seed, mode)
            .validate()
            .map_err(config)?;
        Some(spec)
    } else {
        None
    };
    let cfg = SweepConfig {
        eps_list: a.eps_list.clone(),
        starts: a.starts.clone(),
        steps: a.ensemble.steps,
        replicas: a.ensemble.replicas,
        seed: a.common.seed,
        mode,
        permutations: a.permutations,
        functional,
    };
    let result = convergence_sweep(&cfg).map_err(sim)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &result.rows {
        w.serialize(row).map_err(sim)?;
    }
    let sweep = w.into_inner().map_err(sim)?;
    let mut json = result.report.to_json();
    json.push('\n');
    let mut stdout = String::new();
    for row in &result.rows {
        let _ = writeln!(
            stdout,
            "ε = {:<6} energy {:.4e} ± {:.1e} (null q99 {:.4e})",
            row.eps, row.energy_distance, row.energy_se, row.null_q99
        );
    }
    stdout.push_str(&result.report.render_text());
    if a.permutations != DEFAULT_PERMUTATIONS {
        let _ = writeln!(stdout, "note: {} permutations", a.permutations);
    }
    Ok(Outcome {
        files: vec![
            (a.common.out.join("report.json"), json.into_bytes()),
            (a.common.out.join("sweep.csv"), sweep),
        ],
        stdout,
        pass: result.report.all_pass(),
    })
}
