//! Feasibility check: maximize the minimum expected harvested energy over
//! energy covariances, slot durations and reflect vectors, then compare
//! against the requirement `E`.
//!
//! The two blocks alternate: an SDP in the time-scaled energy covariances
//! and durations for fixed reflect vectors, and an SCA over the reflect
//! vectors for fixed covariances.

use log::debug;

use crate::conic::{Affine, ConicProblem, SolverOptions};
use crate::model::{effective_matrix, quad_lift, zero_trace_threshold, ChannelSet, PhaseStats, SystemConfig};
use crate::numerics::{eig_hermitian, CVector, HermitianMatrix};
use crate::opt_core::{quad_lb_coefficients, OptError, Result};
use crate::slots::{clip_psd, project_unit_modulus, unit_reflect};

/// Energy-only design: time-scaled covariances `S_E,ℓ = τ_ℓ W_E,ℓ` (J),
/// durations (s), reflect vectors and the attained minimum energy (J).
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDesign {
    pub s_e: Vec<HermitianMatrix>,
    pub tau: Vec<f64>,
    pub v: Vec<CVector>,
    pub delta: f64,
}

impl EnergyDesign {
    /// `W_E,ℓ = S_E,ℓ/τ_ℓ`, or zero for an idle slot.
    pub fn energy_cov(&self, slot: usize) -> HermitianMatrix {
        if self.tau[slot] > 0.0 {
            self.s_e[slot].scale(1.0 / self.tau[slot])
        } else {
            HermitianMatrix::zeros(self.s_e[slot].dim())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub verdict: Verdict,
    /// `true` when the verdict rests on a local BCD limit rather than a
    /// certificate (always the case for "infeasible").
    pub heuristic: bool,
    /// Design with unit-modulus reflect vectors, re-optimized for them.
    pub design: EnergyDesign,
    /// Best design found with relaxed (`|v_n| ≤ 1`) reflect vectors.
    pub relaxed: EnergyDesign,
    /// Minimum energy after each block update.
    pub trace: Vec<f64>,
}

/// Whether to stop as soon as `δ ≥ E` or run the BCD to convergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    AtRequirement,
    Converge,
}

fn solver_options(cfg: &SystemConfig) -> SolverOptions {
    SolverOptions::new(cfg.algo.solver_tol, cfg.algo.solver_max_iter)
}

fn energy_matrices(ch: &ChannelSet, stats: &PhaseStats, v: &[CVector]) -> Result<Vec<Vec<HermitianMatrix>>> {
    ch.energy.iter().map(|g| v.iter().map(|vl| Ok(effective_matrix(g, vl, stats)?)).collect()).collect()
}

/// Exact minimum expected energy `min_j Σ_ℓ tr(Y_{j,ℓ} S_E,ℓ)`; `+∞` without EUs.
pub fn min_energy(ch: &ChannelSet, stats: &PhaseStats, s_e: &[HermitianMatrix], v: &[CVector]) -> Result<f64> {
    let y = energy_matrices(ch, stats, v)?;
    Ok(y.iter()
        .map(|yj| yj.iter().zip(s_e).map(|(y, s)| y.trace_product(s)).sum::<f64>())
        .fold(f64::INFINITY, f64::min))
}

/// Optimal time-scaled energy covariances and durations for fixed reflect
/// vectors. Returns `(S_E, τ, δ)` in physical units.
pub fn solve_energy_time_sdp(
    ch: &ChannelSet,
    stats: &PhaseStats,
    v: &[CVector],
    cfg: &SystemConfig,
) -> Result<(Vec<HermitianMatrix>, Vec<f64>, f64)> {
    let l = v.len();
    let m = ch.antennas();
    let t = cfg.duration;
    let uniform = vec![t / l as f64; l];
    let zeros = vec![HermitianMatrix::zeros(m); l];
    if ch.num_eu() == 0 {
        return Ok((zeros, uniform, f64::INFINITY));
    }
    if cfg.tx_power <= 0.0 {
        return Ok((zeros, uniform, 0.0));
    }
    let budget = cfg.tx_power * t;
    let y = energy_matrices(ch, stats, v)?;
    let mut scale = 0.0f64;
    for yj in &y {
        for ym in yj {
            scale = scale.max(eig_hermitian(ym)?.values[0]);
        }
    }
    if scale <= 0.0 {
        return Ok((zeros, uniform, 0.0));
    }
    // Normalized: S' = S/(PT), τ' = τ/T, energies in units of PT·λ_max.
    let mut p = ConicProblem::new();
    let delta = p.add_scalar("delta");
    let tau = p.add_var("tau", l);
    let s: Vec<_> = (0..l).map(|i| p.add_hermitian(format!("S_E[{i}]"), m)).collect();
    p.maximize(delta.clone());
    let mut total = Affine::constant(-1.0);
    for i in 0..l {
        p.add_nonneg(tau.at(i));
        total.add_scaled(&tau.at(i), 1.0);
        p.add_le(s[i].trace(), &tau.at(i));
        p.add_hermitian_psd(&s[i].expr(1.0));
    }
    p.add_le(total, &Affine::zero());
    for yj in &y {
        let mut e = Affine::zero();
        for (i, ym) in yj.iter().enumerate() {
            e.add_scaled(&s[i].trace_product(&ym.scale(1.0 / scale)), 1.0);
        }
        p.add_le(delta.clone(), &e);
    }
    let sol = p.solve(&solver_options(cfg));
    if !sol.status.has_solution() {
        return Err(OptError::Conic { stage: "energy-time SDP", status: sol.status });
    }
    let taus: Vec<f64> = (0..l).map(|i| sol.x[tau.index(i)].max(0.0) * t).collect();
    let s_e: Vec<HermitianMatrix> = s.iter().map(|si| clip_psd(&si.decode(&sol.x)).scale(budget)).collect();
    let delta = min_energy(ch, stats, &s_e, v)?;
    Ok((s_e, taus, delta))
}

/// SCA over the reflect vectors for fixed `(S_E, τ)`. Returns the improved
/// vectors and the exact minimum energy they attain.
pub fn reflect_energy_sca(
    ch: &ChannelSet,
    stats: &PhaseStats,
    s_e: &[HermitianMatrix],
    tau: &[f64],
    v_init: &[CVector],
    cfg: &SystemConfig,
) -> Result<(Vec<CVector>, f64)> {
    let rows = ch.rows();
    let mut v: Vec<CVector> = v_init.to_vec();
    let mut delta = min_energy(ch, stats, s_e, &v)?;
    let active: Vec<usize> = (0..tau.len()).filter(|&i| tau[i] > 0.0).collect();
    if rows == 1 || active.is_empty() || ch.num_eu() == 0 {
        return Ok((v, delta));
    }
    let zero = zero_trace_threshold(cfg.tx_power);
    let q: Vec<Vec<HermitianMatrix>> = ch
        .energy
        .iter()
        .map(|g| s_e.iter().map(|s| Ok(quad_lift(g, s, stats, zero)?)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    if q.iter().flatten().all(|m| m.frobenius_norm() == 0.0) {
        return Ok((v, delta));
    }
    let scale = if delta > 0.0 { delta } else { 1.0 };
    let opts = solver_options(cfg);
    for _ in 0..cfg.algo.max_sca_iters {
        let mut p = ConicProblem::new();
        let d = p.add_scalar("delta");
        let vars: Vec<_> = active.iter().map(|&i| p.add_reflect_vector(format!("v[{i}]"), rows)).collect();
        p.maximize(d.clone());
        for qj in &q {
            let mut e = Affine::zero();
            for (slot, var) in active.iter().zip(&vars) {
                let (grad, c) = quad_lb_coefficients(&qj[*slot].scale(1.0 / scale), &v[*slot]);
                e.add_scaled(&var.re_inner(&grad), 2.0);
                e.add_constant(-c);
            }
            for slot in (0..tau.len()).filter(|i| !active.contains(i)) {
                e.add_constant(qj[slot].quad_form(&v[slot]) / scale);
            }
            p.add_le(d.clone(), &e);
        }
        let sol = p.solve(&opts);
        if !sol.status.has_solution() {
            debug!("reflect energy SCA stopped: {:?}", sol.status);
            break;
        }
        let mut cand = v.clone();
        for (slot, var) in active.iter().zip(&vars) {
            cand[*slot] = var.decode(&sol.x);
        }
        let new_delta = min_energy(ch, stats, s_e, &cand)?;
        if new_delta < delta {
            break;
        }
        let inc = (new_delta - delta) / delta.abs().max(f64::MIN_POSITIVE);
        v = cand;
        delta = new_delta;
        if inc < cfg.algo.eps_inner {
            break;
        }
    }
    Ok((v, delta))
}

/// Runs the energy-maximization BCD and reports whether `δ ≥ E`.
pub fn check_feasibility(ch: &ChannelSet, stats: &PhaseStats, cfg: &SystemConfig) -> Result<FeasibilityReport> {
    check_feasibility_with(ch, stats, cfg, StopRule::AtRequirement)
}

/// As [`check_feasibility`], running to convergence regardless of `E`.
pub fn maximize_min_energy(ch: &ChannelSet, stats: &PhaseStats, cfg: &SystemConfig) -> Result<FeasibilityReport> {
    check_feasibility_with(ch, stats, cfg, StopRule::Converge)
}

pub fn check_feasibility_with(
    ch: &ChannelSet,
    stats: &PhaseStats,
    cfg: &SystemConfig,
    stop: StopRule,
) -> Result<FeasibilityReport> {
    let l = cfg.max_groups;
    let m = ch.antennas();
    let e_req = cfg.energy_req;
    let v0 = vec![unit_reflect(ch.rows()); l];
    if ch.num_eu() == 0 || (e_req <= 0.0 && stop == StopRule::AtRequirement) {
        let design = EnergyDesign {
            s_e: vec![HermitianMatrix::zeros(m); l],
            tau: vec![cfg.duration / l as f64; l],
            v: v0,
            delta: if ch.num_eu() == 0 { f64::INFINITY } else { 0.0 },
        };
        return Ok(FeasibilityReport {
            verdict: Verdict::Feasible,
            heuristic: false,
            design: design.clone(),
            relaxed: design,
            trace: Vec::new(),
        });
    }

    let mut trace = Vec::new();
    let (s_e, tau, delta) = solve_energy_time_sdp(ch, stats, &v0, cfg)?;
    let mut best = EnergyDesign { s_e, tau, v: v0, delta };
    trace.push(best.delta);
    let reached = |d: f64| stop == StopRule::AtRequirement && d >= e_req;
    if !reached(best.delta) {
        for _ in 0..cfg.algo.max_bcd_iters {
            let start = best.delta;
            let (v, d) = reflect_energy_sca(ch, stats, &best.s_e, &best.tau, &best.v, cfg)?;
            if d >= best.delta {
                best.v = v;
                best.delta = d;
            }
            trace.push(best.delta);
            if reached(best.delta) {
                break;
            }
            let (s_e, tau, d) = solve_energy_time_sdp(ch, stats, &best.v, cfg)?;
            if d >= best.delta {
                best = EnergyDesign { s_e, tau, v: best.v, delta: d };
            }
            trace.push(best.delta);
            if reached(best.delta) {
                break;
            }
            let inc = (best.delta - start) / start.abs().max(f64::MIN_POSITIVE);
            if inc < cfg.algo.eps_inner {
                break;
            }
        }
    }

    let projected: Vec<CVector> =
        best.v.iter().zip(&best.tau).map(|(v, &t)| if t > 0.0 { project_unit_modulus(v) } else { v.clone() }).collect();
    let projected: Vec<CVector> = projected.iter().map(project_unit_modulus).collect();
    let (s_e, tau, delta) = solve_energy_time_sdp(ch, stats, &projected, cfg)?;
    let design = EnergyDesign { s_e, tau, v: projected, delta };
    let verdict = if best.delta >= e_req { Verdict::Feasible } else { Verdict::Infeasible };
    Ok(FeasibilityReport { verdict, heuristic: verdict == Verdict::Infeasible, design, relaxed: best, trace })
}
