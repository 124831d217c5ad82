//! Row execution: feasibility check, solver, audits and one result record
//! per (sweep point, seed, scheme).

use std::time::Instant;

use irs_swipt::baselines::{no_ug_solve, random_ug_solve, MAX_RANDOM_DRAWS};
use irs_swipt::eval::{audit_design, expected_metrics, sampled_metrics, GroupingRule, Sampling};
use irs_swipt::feasibility::{check_feasibility, Verdict};
use irs_swipt::model::{generate_channels, phase_error_moment_matrix, ChannelSet, Design, PhaseStats, SystemConfig};
use irs_swipt::opt_core::OptError;
use irs_swipt::opt_nonoverlap::{solve_p1, Diagnostics, P1Solution};
use irs_swipt::opt_overlap::solve_p2;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Experiment, Method, Scheme};

/// One unit of work.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Task {
    pub row: usize,
    pub point: usize,
    pub seed: u64,
    /// Seed of the channel draw.
    pub channel_seed: u64,
    #[serde(serialize_with = "crate::serialize_display")]
    pub scheme: Scheme,
    /// Seed of the scheme's own randomness (random grouping, sampling).
    pub scheme_seed: u64,
}

/// One CSV row. Optional fields are empty when they do not apply.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub row: usize,
    pub point: usize,
    pub seed: u64,
    pub channel_seed: u64,
    pub scheme: String,
    pub scheme_seed: u64,
    pub antennas: usize,
    pub irs_elements: usize,
    pub info_users: usize,
    pub energy_users: usize,
    pub max_groups: usize,
    pub energy_req: f64,
    /// `feasible` or `infeasible` (heuristic verdict of the energy check).
    pub feasibility: String,
    /// `ok`, `infeasible`, `energy_violation`, `audit_failed` or `error`.
    pub status: String,
    /// Expected min throughput (bits) with the zero-penalty convention.
    pub eta: f64,
    /// Expected min throughput of the returned design, before the penalty.
    pub eta_raw: Option<f64>,
    /// Sampled min over IUs of the mean of `Σ τ log₂(1 + γ)` (bits).
    pub eta_sampled: Option<f64>,
    pub eh_margin: Option<f64>,
    pub active_slots: Option<usize>,
    pub sum_a: Option<usize>,
    pub max_membership: Option<usize>,
    pub audit_passed: Option<bool>,
    pub projection_degraded: Option<bool>,
    pub final_h: Option<f64>,
    pub final_q: Option<f64>,
    pub max_rank_ratio: Option<f64>,
    pub penalty_phases: Option<usize>,
    pub bcd_iterations: Option<usize>,
    pub conic_solves: Option<usize>,
    pub solver_failures: Option<usize>,
    pub random_draws: Option<usize>,
    pub wall_time_s: f64,
    pub message: String,
}

/// Columns that depend on timing rather than on the computation.
pub const TIMING_COLUMNS: [&str; 1] = ["wall_time_s"];

/// Seed of the channel draw for seed index `seed`.
pub fn channel_seed(cfg: &SystemConfig, seed: u64) -> u64 {
    cfg.rng_seed.wrapping_mul(1_000_003).wrapping_add(seed)
}

fn scheme_seed(channel_seed: u64, scheme: Scheme) -> u64 {
    let tag = match scheme.method {
        Method::NonOverlap => 1,
        Method::Overlap => 2,
        Method::Random => 3,
        Method::NoUg => 4,
    } + if scheme.robust { 0 } else { 8 };
    channel_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(tag)
}

/// All tasks in row order: sweep point, then seed, then scheme.
pub fn tasks(exp: &Experiment) -> Vec<Task> {
    let mut out = Vec::new();
    for (p, cfg) in exp.points().iter().enumerate() {
        for seed in exp.first_seed..exp.first_seed + exp.seeds {
            let cs = channel_seed(cfg, seed);
            for &scheme in &exp.schemes {
                out.push(Task {
                    row: out.len(),
                    point: p,
                    seed,
                    channel_seed: cs,
                    scheme,
                    scheme_seed: scheme_seed(cs, scheme),
                });
            }
        }
    }
    out
}

/// Outcome of the solver call of one row.
struct Solved {
    design: Design,
    diagnostics: Option<Diagnostics>,
    rule: GroupingRule,
    random_draws: Option<usize>,
}

fn from_p1(sol: P1Solution, rule: GroupingRule) -> Solved {
    Solved { design: sol.design, diagnostics: Some(sol.diagnostics), rule, random_draws: None }
}

fn solve(task: &Task, ch: &ChannelSet, stats: &PhaseStats, cfg: &SystemConfig) -> Result<Solved, OptError> {
    Ok(match task.scheme.method {
        Method::NonOverlap => from_p1(solve_p1(ch, stats, cfg)?, GroupingRule::Exclusive),
        Method::Overlap => {
            let sol = solve_p2(ch, stats, cfg)?;
            Solved {
                design: sol.chosen.design,
                diagnostics: Some(sol.chosen.diagnostics),
                rule: GroupingRule::Overlapping,
                random_draws: None,
            }
        }
        Method::Random => {
            let out = random_ug_solve(ch, stats, cfg, task.scheme_seed);
            match out.solution {
                Some(sol) => Solved { random_draws: Some(out.draws), ..from_p1(sol, GroupingRule::Overlapping) },
                None => {
                    return Err(OptError::InvalidInput(format!(
                        "no usable random grouping in {MAX_RANDOM_DRAWS} draws"
                    )))
                }
            }
        }
        Method::NoUg => from_p1(no_ug_solve(ch, stats, cfg)?, GroupingRule::Exclusive),
    })
}

/// Executes one row. Failures are recorded in the row, never propagated.
pub fn run_task(task: &Task, cfg: &SystemConfig, mc_samples: usize) -> Row {
    let start = Instant::now();
    let mut row = Row {
        row: task.row,
        point: task.point,
        seed: task.seed,
        channel_seed: task.channel_seed,
        scheme: task.scheme.to_string(),
        scheme_seed: task.scheme_seed,
        antennas: cfg.antennas,
        irs_elements: cfg.irs_elements,
        info_users: cfg.info_users,
        energy_users: cfg.energy_users,
        max_groups: cfg.max_groups,
        energy_req: cfg.energy_req,
        feasibility: String::new(),
        status: String::new(),
        eta: 0.0,
        eta_raw: None,
        eta_sampled: None,
        eh_margin: None,
        active_slots: None,
        sum_a: None,
        max_membership: None,
        audit_passed: None,
        projection_degraded: None,
        final_h: None,
        final_q: None,
        max_rank_ratio: None,
        penalty_phases: None,
        bcd_iterations: None,
        conic_solves: None,
        solver_failures: None,
        random_draws: None,
        wall_time_s: 0.0,
        message: String::new(),
    };
    fill(&mut row, task, cfg, mc_samples);
    row.wall_time_s = start.elapsed().as_secs_f64();
    row
}

fn fill(row: &mut Row, task: &Task, cfg: &SystemConfig, mc_samples: usize) {
    let fail = |row: &mut Row, status: &str, msg: String| {
        row.status = status.to_string();
        row.message = msg;
        row.eta = 0.0;
    };
    let ch = match generate_channels(cfg, task.channel_seed) {
        Ok(ch) => ch,
        Err(e) => return fail(row, "error", e.to_string()),
    };
    let truth = phase_error_moment_matrix(cfg.irs_elements, true);
    let assumed = phase_error_moment_matrix(cfg.irs_elements, task.scheme.robust);
    // The no-grouping scheme has a single slot, so its energy check does too.
    let check_cfg = match task.scheme.method {
        Method::NoUg => SystemConfig { max_groups: 1, ..cfg.clone() },
        _ => cfg.clone(),
    };
    match check_feasibility(&ch, &truth, &check_cfg) {
        Ok(report) if report.verdict == Verdict::Feasible => row.feasibility = "feasible".into(),
        Ok(_) => {
            row.feasibility = "infeasible".into();
            return fail(row, "infeasible", "energy requirement not reached by the feasibility check".into());
        }
        Err(e) => {
            row.feasibility = "infeasible".into();
            return fail(row, "error", format!("feasibility check: {e}"));
        }
    }
    let solved = match solve(task, &ch, &assumed, cfg) {
        Ok(s) => s,
        Err(OptError::InfeasibleStart) => return fail(row, "infeasible", OptError::InfeasibleStart.to_string()),
        Err(e) => return fail(row, "error", e.to_string()),
    };
    if let Some(d) = &solved.diagnostics {
        row.projection_degraded = Some(d.projection_degraded);
        row.final_h = Some(d.final_h);
        row.final_q = Some(d.final_q);
        row.max_rank_ratio = Some(d.max_rank_ratio);
        row.penalty_phases = Some(d.penalty_phases);
        row.bcd_iterations = Some(d.bcd_iterations);
        row.conic_solves = Some(d.conic_solves);
        row.solver_failures = Some(d.solver_failures);
    }
    row.random_draws = solved.random_draws;
    row.sum_a = Some(solved.design.assignment_count());
    row.max_membership = solved.design.assignment.iter().map(|r| r.iter().filter(|&&a| a).count()).max();
    // Every design is judged under the actual phase-error statistics.
    let (metrics, audit) = match (
        expected_metrics(&solved.design, &ch, &truth, cfg),
        audit_design(&solved.design, &ch, &truth, cfg, solved.rule),
    ) {
        (Ok(m), Ok(a)) => (m, a),
        (Err(e), _) | (_, Err(e)) => return fail(row, "error", e.to_string()),
    };
    row.eta_raw = Some(metrics.eta);
    row.eh_margin = Some(metrics.eh_margin);
    row.active_slots = Some(metrics.active_slots);
    row.audit_passed = Some(audit.passed());
    if mc_samples > 0 {
        match sampled_metrics(&solved.design, &ch, cfg, Sampling::new(mc_samples, task.scheme_seed)) {
            Ok(s) => row.eta_sampled = Some(s.eta_mean),
            Err(e) => row.message = format!("sampling: {e}"),
        }
    }
    if audit.passed() {
        row.status = "ok".into();
        row.eta = metrics.eta;
    } else if !audit.energy_ok {
        fail(row, "energy_violation", format!("expected energy margin {:e} J under phase errors", audit.eh_margin));
    } else {
        fail(row, "audit_failed", format!("{audit:?}"));
    }
}

/// Runs every task on a pool of `workers` threads; rows come back in task
/// order.
pub fn run_all(exp: &Experiment, tasks: &[Task]) -> Result<Vec<Row>, rayon::ThreadPoolBuildError> {
    let points = exp.points();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(exp.workers).build()?;
    Ok(pool.install(|| tasks.par_iter().map(|t| run_task(t, &points[t.point], exp.mc_samples)).collect()))
}
