//! Joint grouping and resource allocation with non-overlapping groups.
//!
//! The outer loop raises the binary penalty `ρ` until the grouping entries
//! are binary. For each `ρ`, block coordinate ascent alternates the
//! transmit-side penalized SDP (durations, covariances, grouping) with the
//! reflect-side SCA. Recovery rounds the grouping, projects the reflect
//! vectors to unit modulus, re-optimizes the transmit side once more at the
//! projected vectors and extracts rank-one beamformers.

mod recovery;
mod reflect;
mod transmit;

use std::cell::Cell;

use log::debug;
use serde::Serialize;

use crate::conic::SolverOptions;
use crate::eval::MetricsReport;
use crate::feasibility::maximize_min_energy;
use crate::model::{ChannelSet, Design, PhaseStats, SystemConfig};
use crate::numerics::{spectral_norm_top, CVector, HermitianMatrix};
use crate::opt_core::{penalty_h, penalty_q, OptError, Result};
use crate::slots::{slot_rate, unit_reflect, SlotMatrices, Units, SLOT_FLOOR};

pub use recovery::{extract_design, recover};
pub use reflect::{reflect_qcqp_step, reflect_sca, ReflectStep, SINR_FLOOR};
pub use transmit::{algorithm1, build_and_solve_inner, Alg1Output, InnerSolution};

/// Transmit-side variables in physical units: time-scaled covariances (J),
/// relaxed grouping entries, durations (s) and the min throughput (bits)
/// they attain at the current reflect vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmitState {
    /// `S̃[k][ℓ] = a τ W`.
    pub s_tilde: Vec<Vec<HermitianMatrix>>,
    /// `S[k][ℓ] = τ W`, the big-M companion of `S̃`. The transmit-side
    /// program eliminates it, so after a solve it equals `S̃`.
    pub s: Vec<Vec<HermitianMatrix>>,
    pub s_e: Vec<HermitianMatrix>,
    pub a: Vec<Vec<f64>>,
    pub tau: Vec<f64>,
    pub eta: f64,
}

impl TransmitState {
    pub fn num_iu(&self) -> usize {
        self.a.len()
    }

    pub fn num_slots(&self) -> usize {
        self.tau.len()
    }
}

/// How the grouping enters the transmit-side problem.
#[derive(Debug, Clone, PartialEq)]
pub enum GroupingMode {
    /// Relaxed entries in `[0, 1]` with the binary penalty and
    /// `Σ_ℓ a_{k,ℓ} ≥ 1`; `exclusive` adds `Σ_ℓ a_{k,ℓ} ≤ 1`.
    Penalized { exclusive: bool },
    /// Grouping frozen at a binary pattern `[k][ℓ]`.
    Fixed(Vec<Vec<bool>>),
}

impl GroupingMode {
    /// Whether pair `(k, ℓ)` carries a covariance variable.
    pub fn has_var(&self, k: usize, slot: usize) -> bool {
        match self {
            GroupingMode::Penalized { .. } => true,
            GroupingMode::Fixed(a) => a[k][slot],
        }
    }

    pub fn penalized(&self) -> bool {
        matches!(self, GroupingMode::Penalized { .. })
    }
}

/// Transmit-side problem shape.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmitSetup {
    pub mode: GroupingMode,
    /// Force `Σ τ = T` instead of `≤ T`.
    pub full_duration: bool,
}

/// Shared solver context. Not `Sync`: one instance per solve.
pub struct Context<'a> {
    pub ch: &'a ChannelSet,
    pub stats: &'a PhaseStats,
    pub cfg: &'a SystemConfig,
    pub units: Units,
    solves: Cell<usize>,
    failures: Cell<usize>,
}

impl<'a> Context<'a> {
    pub fn new(ch: &'a ChannelSet, stats: &'a PhaseStats, cfg: &'a SystemConfig) -> Self {
        Self { ch, stats, cfg, units: Units::new(cfg, ch.num_iu()), solves: Cell::new(0), failures: Cell::new(0) }
    }

    pub(crate) fn solver_options(&self) -> SolverOptions {
        SolverOptions::new(self.cfg.algo.solver_tol, self.cfg.algo.solver_max_iter)
    }

    pub(crate) fn careful_options(&self) -> SolverOptions {
        self.solver_options().careful()
    }

    pub(crate) fn count_solve(&self, ok: bool) {
        self.solves.set(self.solves.get() + 1);
        if !ok {
            self.failures.set(self.failures.get() + 1);
        }
    }

    pub fn solves(&self) -> usize {
        self.solves.get()
    }

    pub fn failures(&self) -> usize {
        self.failures.get()
    }

    pub fn matrices(&self, v: &[CVector]) -> Result<SlotMatrices> {
        SlotMatrices::new(self.ch, self.stats, v, &self.units)
    }

    /// Normalized requirement check is skipped when `E = 0` or `J = 0`.
    pub fn energy_binding(&self) -> bool {
        self.cfg.energy_req > 0.0 && self.ch.num_eu() > 0
    }
}

/// Exact (non-surrogate) evaluation of a transmit state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exact {
    pub eta: f64,
    /// `min_j Q_j / E`; `+∞` when the requirement is void.
    pub energy_ratio: f64,
    /// Binary penalty `h(a)`.
    pub h: f64,
    /// Rank penalty `q(S̃)` in joules.
    pub q: f64,
}

/// Relative slack on the normalized energy requirement for accepting an
/// iterate as feasible.
pub const ENERGY_ACCEPT_TOL: f64 = 1e-7;

impl Exact {
    pub fn feasible(&self) -> bool {
        self.energy_ratio >= 1.0 - ENERGY_ACCEPT_TOL
    }

    /// `η − ρ h − μ q`.
    pub fn objective(&self, rho: f64, mu: f64) -> f64 {
        self.eta - rho * self.h - mu * self.q
    }
}

/// Per-IU throughputs (bits) of a state under the given slot matrices.
pub fn rates(ctx: &Context, mats: &SlotMatrices, state: &TransmitState) -> Vec<f64> {
    let inv = 1.0 / ctx.units.budget();
    let t = ctx.units.duration;
    let k_n = state.num_iu();
    (0..k_n)
        .map(|k| {
            (0..state.num_slots())
                .map(|s| {
                    let x = &mats.info[k][s];
                    let levels: Vec<f64> = (0..k_n).map(|i| x.trace_product(&state.s_tilde[i][s]) * inv).collect();
                    let interference = levels.iter().sum::<f64>() - levels[k] + x.trace_product(&state.s_e[s]) * inv;
                    slot_rate(levels[k], interference, state.tau[s] / t)
                })
                .sum::<f64>()
                * t
        })
        .collect()
}

/// `min_j Q_j / E` for a state (`+∞` when the requirement is void).
pub fn energy_ratio(ctx: &Context, mats: &SlotMatrices, state: &TransmitState) -> f64 {
    if !ctx.energy_binding() {
        return f64::INFINITY;
    }
    let inv = 1.0 / ctx.units.budget();
    mats.energy
        .iter()
        .map(|yj| {
            (0..state.num_slots())
                .map(|s| {
                    let y = &yj[s];
                    (state.s_tilde.iter().map(|row| y.trace_product(&row[s])).sum::<f64>()
                        + y.trace_product(&state.s_e[s]))
                        * inv
                })
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Tolerance for accepting solver output as PSD in the rank penalty.
const PSD_TOL: f64 = 1e-6;

pub fn evaluate(ctx: &Context, mats: &SlotMatrices, state: &TransmitState, mode: &GroupingMode) -> Result<Exact> {
    let eta = rates(ctx, mats, state).into_iter().fold(f64::INFINITY, f64::min);
    let h = if mode.penalized() { penalty_h(&state.a)? } else { 0.0 };
    let q = penalty_q(
        state
            .s_tilde
            .iter()
            .enumerate()
            .flat_map(|(k, row)| row.iter().enumerate().filter(move |(s, _)| mode.has_var(k, *s)).map(|(_, m)| m)),
        PSD_TOL,
    )?;
    Ok(Exact { eta, energy_ratio: energy_ratio(ctx, mats, state), h, q })
}

/// Diagnostics of a full solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// The transmit side could not be re-optimized at the unit-modulus
    /// reflect vectors; the recovered design may violate the requirement.
    pub projection_degraded: bool,
    /// Energy margin `min_j Q_j − E` (J) just before projection.
    pub pre_projection_margin: f64,
    /// Largest `λ₂/λ₁` over served covariances before rank-one extraction.
    pub max_rank_ratio: f64,
    /// Binary penalty at the end of the penalized stage.
    pub final_h: f64,
    /// Rank penalty (J) of the covariances the beamformers are taken from.
    pub final_q: f64,
    /// Rank penalty (J) at the end of the penalized stage.
    pub relaxed_q: f64,
    /// Largest distance of a relaxed grouping entry from `{0, 1}` before
    /// rounding.
    pub max_binary_gap: f64,
    pub unserved_iu: usize,
    pub penalty_phases: usize,
    pub bcd_iterations: usize,
    pub conic_solves: usize,
    pub solver_failures: usize,
    /// Min throughput (bits) of the relaxed design before recovery.
    pub relaxed_eta: f64,
    /// Smallest reflect-entry modulus of the active slots before projection.
    pub min_relaxed_modulus: f64,
    /// The design comes from the grouping read off the grouping-free solve
    /// rather than from the penalized solve.
    pub seeded: bool,
}

/// Which block produced a BCD record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Block {
    Start,
    Transmit,
    Reflect,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BcdRecord {
    pub rho: f64,
    pub phase: usize,
    pub iteration: usize,
    pub block: Block,
    pub eta: f64,
    pub h: f64,
    pub q: f64,
    /// `η − ρ h`, the quantity ascended within a `ρ` phase.
    pub objective: f64,
}

/// Objective histories of a solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveTrace {
    pub bcd: Vec<BcdRecord>,
    /// Exact penalized objective per transmit-side SCA run at fixed `μ`.
    pub transmit_sca: Vec<Vec<f64>>,
    /// Exact min throughput per reflect-side SCA run.
    pub reflect_sca: Vec<Vec<f64>>,
}

impl SolveTrace {
    /// The BCD objective sequences, one per `ρ` phase.
    pub fn bcd_phases(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        let mut current = None;
        for r in &self.bcd {
            if current != Some(r.phase) {
                out.push(Vec::new());
                current = Some(r.phase);
            }
            out.last_mut().unwrap().push(r.objective);
        }
        out
    }
}

/// Result of a grouping/resource allocation solve.
#[derive(Debug, Clone, PartialEq)]
pub struct P1Solution {
    pub design: Design,
    /// Exact expected min throughput of `design` (bits).
    pub eta: f64,
    pub metrics: MetricsReport,
    pub diagnostics: Diagnostics,
    pub trace: SolveTrace,
}

/// Feasible starting point.
///
/// The energy covariances, durations and reflect vectors come from the
/// energy-maximizing design, shrunk towards a uniform time split by a
/// margin that keeps the requirement satisfied; the leftover power of each
/// slot is spread over the served IUs along their strongest eigen-direction.
pub fn warm_start(ctx: &Context, assignment: &[Vec<bool>], slots: usize) -> Result<(TransmitState, Vec<CVector>)> {
    let (ch, cfg) = (ctx.ch, ctx.cfg);
    let m = ch.antennas();
    let t = cfg.duration;
    let uniform = t / slots as f64;
    let (mut tau, mut s_e, v) = if ctx.energy_binding() {
        let cfg_l = SystemConfig { max_groups: slots, ..cfg.clone() };
        let report = maximize_min_energy(ch, ctx.stats, &cfg_l)?;
        let d = report.relaxed;
        if d.delta < cfg.energy_req {
            return Err(OptError::InfeasibleStart);
        }
        let beta = (0.5 * (1.0 - cfg.energy_req / d.delta)).clamp(0.0, 0.5);
        let tau: Vec<f64> = d.tau.iter().map(|&x| (1.0 - beta) * x + beta * uniform).collect();
        let s_e: Vec<HermitianMatrix> = d.s_e.iter().map(|s| s.scale(1.0 - beta)).collect();
        (tau, s_e, d.v)
    } else {
        (vec![uniform; slots], vec![HermitianMatrix::zeros(m); slots], vec![unit_reflect(ch.rows()); slots])
    };
    // Guard against round-off pushing the shrunk design over the budgets.
    let total: f64 = tau.iter().sum();
    if total > t {
        tau.iter_mut().for_each(|x| *x *= t / total);
    }
    for s in 0..slots {
        let cap = tau[s] * cfg.tx_power;
        let used = s_e[s].trace();
        if used > cap && used > 0.0 {
            s_e[s] = s_e[s].scale(cap / used);
        }
    }
    let k_n = ch.num_iu();
    let mats = ctx.matrices(&v)?;
    let mut s_full = vec![vec![HermitianMatrix::zeros(m); slots]; k_n];
    let mut s_tilde = s_full.clone();
    for s in 0..slots {
        let leftover = (tau[s] * cfg.tx_power - s_e[s].trace()).max(0.0);
        let share = leftover / (2.0 * k_n.max(1) as f64);
        for k in 0..k_n {
            let (_, top) = spectral_norm_top(&mats.info[k][s], true)?;
            let dir = HermitianMatrix::outer(&top).scale(share);
            if assignment[k][s] {
                s_tilde[k][s] = dir.clone();
            }
            s_full[k][s] = dir;
        }
    }
    let a: Vec<Vec<f64>> =
        assignment.iter().map(|row| row.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect()).collect();
    let mut state = TransmitState { s_tilde, s: s_full, s_e, a, tau, eta: 0.0 };
    state.eta = rates(ctx, &mats, &state).into_iter().fold(f64::INFINITY, f64::min);
    Ok((state, v))
}

/// Round-robin seed grouping `k mod L`.
pub fn round_robin(k_n: usize, slots: usize) -> Vec<Vec<bool>> {
    (0..k_n).map(|k| (0..slots).map(|s| k % slots == s).collect()).collect()
}

fn relative_increase(new: f64, old: f64) -> f64 {
    (new - old) / old.abs().max(1e-12)
}

/// One `ρ` phase of block coordinate ascent. Returns the updated state and
/// reflect vectors together with the number of BCD iterations run.
pub(crate) fn bcd_phase(
    ctx: &Context,
    mut state: TransmitState,
    mut v: Vec<CVector>,
    setup: &TransmitSetup,
    rho: f64,
    phase: usize,
    trace: &mut SolveTrace,
) -> Result<(TransmitState, Vec<CVector>, usize)> {
    let algo = &ctx.cfg.algo;
    let record = |trace: &mut SolveTrace, it: usize, block: Block, ex: &Exact| {
        trace.bcd.push(BcdRecord {
            rho,
            phase,
            iteration: it,
            block,
            eta: ex.eta,
            h: ex.h,
            q: ex.q,
            objective: ex.objective(rho, 0.0),
        });
    };
    let mut current = evaluate(ctx, &ctx.matrices(&v)?, &state, &setup.mode)?;
    record(trace, 0, Block::Start, &current);
    let mut iterations = 0;
    for it in 1..=algo.max_bcd_iters {
        iterations = it;
        let start = current.objective(rho, 0.0);
        let alg1 = algorithm1(ctx, &state, &v, setup, rho)?;
        trace.transmit_sca.extend(alg1.trace.iter().cloned());
        let mats = ctx.matrices(&v)?;
        let ex = evaluate(ctx, &mats, &alg1.state, &setup.mode)?;
        let better = ex.objective(rho, 0.0) >= current.objective(rho, 0.0) || !current.feasible();
        if !(ex.feasible() && better) {
            debug!("transmit block rejected at BCD iteration {it}");
            break;
        }
        state = alg1.state;
        current = ex;
        record(trace, it, Block::Transmit, &current);

        let (v_new, reflect_trace) = reflect_sca(ctx, &state, &v)?;
        trace.reflect_sca.push(reflect_trace);
        let ex = evaluate(ctx, &ctx.matrices(&v_new)?, &state, &setup.mode)?;
        if ex.feasible() && ex.objective(rho, 0.0) >= current.objective(rho, 0.0) {
            v = v_new;
            state.eta = ex.eta;
            current = ex;
        }
        record(trace, it, Block::Reflect, &current);
        if relative_increase(current.objective(rho, 0.0), start) < algo.eps_outer {
            break;
        }
    }
    Ok((state, v, iterations))
}

/// Solves the non-overlapping grouping problem.
///
/// The penalized solve keeps the grouping it starts from (a binary start is
/// a fixed point of the linearized penalty), so a second start is tried: the
/// grouping-free solve is run and each IU is frozen into the slot where its
/// beam carries the most energy. The better recovered design is returned.
pub fn solve_p1(ch: &ChannelSet, stats: &PhaseStats, cfg: &SystemConfig) -> Result<P1Solution> {
    let everyone = vec![vec![true; cfg.max_groups]; ch.num_iu()];
    let free = solve_fixed_grouping(ch, stats, cfg, &everyone, true).ok();
    solve_p1_with(ch, stats, cfg, free.as_ref())
}

/// [`solve_p1`] with an already computed grouping-free solution (or none,
/// which leaves only the penalized start).
pub fn solve_p1_with(
    ch: &ChannelSet,
    stats: &PhaseStats,
    cfg: &SystemConfig,
    grouping_free: Option<&P1Solution>,
) -> Result<P1Solution> {
    let penalized = solve_p1_penalized(ch, stats, cfg);
    let Some(free) = grouping_free else { return penalized };
    let seeded = solve_fixed_grouping(ch, stats, cfg, &strongest_slot(&free.design), false).map(|mut sol| {
        sol.diagnostics.seeded = true;
        sol
    });
    better(penalized, seeded)
}

/// The penalized solve alone, started from the round-robin grouping.
pub fn solve_p1_penalized(ch: &ChannelSet, stats: &PhaseStats, cfg: &SystemConfig) -> Result<P1Solution> {
    solve_penalized(ch, stats, cfg, true)
}

/// Each IU in the slot where `τ‖w‖²` is largest (earliest slot on ties).
pub fn strongest_slot(design: &Design) -> Vec<Vec<bool>> {
    design
        .beams
        .iter()
        .map(|row| {
            let energy: Vec<f64> = row.iter().zip(&design.durations).map(|(w, &t)| t * w.norm_squared()).collect();
            let best = (0..energy.len()).fold(0, |b, s| if energy[s] > energy[b] { s } else { b });
            (0..energy.len()).map(|s| s == best).collect()
        })
        .collect()
}

/// Energy margin (J) below which a candidate counts as violating.
const CANDIDATE_EH_TOL: f64 = 1e-9;

/// Whether `challenger` should replace `incumbent`: energy-feasible designs
/// beat violating ones, then larger min throughput wins.
pub fn outranks(challenger: &P1Solution, incumbent: &P1Solution) -> bool {
    let rank = |s: &P1Solution| (s.metrics.eh_margin >= -CANDIDATE_EH_TOL, s.eta);
    let (c, i) = (rank(challenger), rank(incumbent));
    c.0 && !i.0 || c.0 == i.0 && c.1 > i.1
}

/// Keeps the better of two outcomes (`first` on ties); conic solve counts
/// are summed over both.
pub fn better(first: Result<P1Solution>, second: Result<P1Solution>) -> Result<P1Solution> {
    match (first, second) {
        (Ok(a), Ok(b)) => {
            let (mut win, lose) = if outranks(&b, &a) { (b, a) } else { (a, b) };
            win.diagnostics.conic_solves += lose.diagnostics.conic_solves;
            win.diagnostics.solver_failures += lose.diagnostics.solver_failures;
            Ok(win)
        }
        (Ok(a), Err(_)) => Ok(a),
        (Err(_), Ok(b)) => Ok(b),
        (Err(e), Err(_)) => Err(e),
    }
}

/// Penalized grouping solve; `exclusive` selects the non-overlapping rule.
pub(crate) fn solve_penalized(
    ch: &ChannelSet,
    stats: &PhaseStats,
    cfg: &SystemConfig,
    exclusive: bool,
) -> Result<P1Solution> {
    cfg.validate()?;
    check_shapes(ch, cfg)?;
    let ctx = Context::new(ch, stats, cfg);
    let slots = cfg.max_groups;
    let (mut state, mut v) = warm_start(&ctx, &round_robin(ch.num_iu(), slots), slots)?;
    let setup = TransmitSetup { mode: GroupingMode::Penalized { exclusive }, full_duration: false };
    let mut trace = SolveTrace::default();
    let mut rho = cfg.algo.rho0;
    let mut diag = Diagnostics::default();
    for phase in 0..cfg.algo.max_penalty_phases {
        let (st, vv, iters) = bcd_phase(&ctx, state, v, &setup, rho, phase, &mut trace)?;
        state = st;
        v = vv;
        diag.penalty_phases = phase + 1;
        diag.bcd_iterations += iters;
        let h = penalty_h(&state.a)?;
        debug!("rho phase {phase}: rho = {rho:e}, h = {h:e}, eta = {}", state.eta);
        if h < cfg.algo.binary_tol {
            break;
        }
        rho *= cfg.algo.c2;
    }
    recover(&ctx, state, v, &setup, trace, diag)
}

/// Optimizes durations, covariances and reflect vectors for a frozen
/// grouping `[k][ℓ]`. With `full_duration` the slots fill the frame.
pub fn solve_fixed_grouping(
    ch: &ChannelSet,
    stats: &PhaseStats,
    cfg: &SystemConfig,
    assignment: &[Vec<bool>],
    full_duration: bool,
) -> Result<P1Solution> {
    cfg.validate()?;
    check_shapes(ch, cfg)?;
    if assignment.len() != ch.num_iu() {
        return Err(OptError::InvalidInput(format!("grouping has {} rows for {} IUs", assignment.len(), ch.num_iu())));
    }
    let slots = assignment.first().map_or(cfg.max_groups, |r| r.len());
    if slots == 0 || assignment.iter().any(|r| r.len() != slots) {
        return Err(OptError::InvalidInput("grouping rows must share a positive slot count".into()));
    }
    let ctx = Context::new(ch, stats, cfg);
    let (state, v) = warm_start(&ctx, assignment, slots)?;
    let setup = TransmitSetup { mode: GroupingMode::Fixed(assignment.to_vec()), full_duration };
    let mut trace = SolveTrace::default();
    let (state, v, iters) = bcd_phase(&ctx, state, v, &setup, 0.0, 0, &mut trace)?;
    let diag = Diagnostics { penalty_phases: 1, bcd_iterations: iters, ..Default::default() };
    recover(&ctx, state, v, &setup, trace, diag)
}

fn check_shapes(ch: &ChannelSet, cfg: &SystemConfig) -> Result<()> {
    if ch.num_iu() == 0 {
        return Err(OptError::InvalidInput("at least one IU is required".into()));
    }
    if ch.antennas() != cfg.antennas || ch.rows() != cfg.irs_elements + 1 {
        return Err(OptError::InvalidInput(format!(
            "channels are {}x{} but the configuration expects {}x{}",
            ch.rows(),
            ch.antennas(),
            cfg.irs_elements + 1,
            cfg.antennas
        )));
    }
    Ok(())
}

/// Slots whose duration is below the activity floor.
pub(crate) fn inactive_slots(tau: &[f64], duration: f64) -> Vec<bool> {
    tau.iter().map(|&t| t < SLOT_FLOOR * duration).collect()
}

#[cfg(test)]
mod tests;
