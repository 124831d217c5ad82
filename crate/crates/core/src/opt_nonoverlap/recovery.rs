//! Turning the relaxed penalized solution into a feasible design.

use crate::eval::expected_metrics;
use crate::model::Design;
use crate::numerics::{c64, eig_hermitian, CVector, HermitianMatrix};
use crate::opt_core::Result;
use crate::slots::{clip_psd, project_unit_modulus};

use super::{
    algorithm1, evaluate, inactive_slots, Context, Diagnostics, GroupingMode, P1Solution, SolveTrace, TransmitSetup,
    TransmitState,
};

/// Rounds relaxed grouping entries; exact halves go to zero.
pub(super) fn round_grouping(a: &[Vec<f64>]) -> Vec<Vec<bool>> {
    a.iter().map(|row| row.iter().map(|&x| x > 0.5).collect()).collect()
}

/// Rounds the grouping, projects the reflect vectors, re-optimizes the
/// transmit side at the projected vectors and extracts beamformers.
pub fn recover(
    ctx: &Context,
    state: TransmitState,
    v: Vec<CVector>,
    setup: &TransmitSetup,
    mut trace: SolveTrace,
    mut diag: Diagnostics,
) -> Result<P1Solution> {
    let cfg = ctx.cfg;
    let relaxed = evaluate(ctx, &ctx.matrices(&v)?, &state, &setup.mode)?;
    diag.relaxed_eta = relaxed.eta;
    diag.final_h = relaxed.h;
    diag.relaxed_q = relaxed.q;
    diag.final_q = relaxed.q;
    diag.pre_projection_margin =
        if ctx.energy_binding() { (relaxed.energy_ratio - 1.0) * cfg.energy_req } else { f64::INFINITY };

    // A frozen grouping is returned as given; a pruned slot then carries
    // zero beams for its members.
    let served = match &setup.mode {
        GroupingMode::Penalized { .. } => {
            diag.max_binary_gap = state.a.iter().flatten().map(|&x| x.min(1.0 - x)).fold(0.0, f64::max);
            let mut served = round_grouping(&state.a);
            for (s, off) in inactive_slots(&state.tau, cfg.duration).into_iter().enumerate() {
                if off {
                    served.iter_mut().for_each(|row| row[s] = false);
                }
            }
            served
        }
        GroupingMode::Fixed(a) => a.clone(),
    };
    diag.min_relaxed_modulus = v
        .iter()
        .zip(inactive_slots(&state.tau, cfg.duration))
        .filter(|(_, off)| !off)
        .flat_map(|(x, _)| x.iter().take(x.len() - 1).map(|z| z.norm()))
        .fold(1.0, f64::min);
    let v_hat: Vec<CVector> = v.iter().map(project_unit_modulus).collect();

    let m = ctx.ch.antennas();
    let rounded = TransmitState {
        s_tilde: state
            .s_tilde
            .iter()
            .zip(&served)
            .map(|(row, srow)| {
                row.iter().zip(srow).map(|(x, &on)| if on { x.clone() } else { HermitianMatrix::zeros(m) }).collect()
            })
            .collect(),
        s: Vec::new(),
        s_e: state.s_e.clone(),
        a: served.iter().map(|row| row.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect()).collect(),
        tau: state.tau.clone(),
        eta: 0.0,
    };
    let rounded = TransmitState { s: rounded.s_tilde.clone(), ..rounded };
    let polish_setup = TransmitSetup { mode: GroupingMode::Fixed(served.clone()), full_duration: setup.full_duration };
    let final_state = match polish(ctx, &rounded, &v_hat, &polish_setup, &mut trace)? {
        Some((state, q)) => {
            diag.final_q = q;
            state
        }
        None => {
            diag.projection_degraded = true;
            rounded
        }
    };

    let (design, ratio) = extract_design(ctx, &final_state, &v_hat, &served)?;
    diag.max_rank_ratio = ratio;
    diag.unserved_iu = design.assignment.iter().filter(|row| !row.iter().any(|&x| x)).count();
    diag.conic_solves = ctx.solves();
    diag.solver_failures = ctx.failures();
    let metrics = expected_metrics(&design, ctx.ch, ctx.stats, cfg)?;
    Ok(P1Solution { eta: metrics.eta, design, metrics, diagnostics: diag, trace })
}

/// Transmit-side re-optimization at unit-modulus reflect vectors with the
/// grouping frozen. Returns the state and its rank penalty (J), or `None`
/// if no energy-feasible point was found.
fn polish(
    ctx: &Context,
    start: &TransmitState,
    v: &[CVector],
    setup: &TransmitSetup,
    trace: &mut SolveTrace,
) -> Result<Option<(TransmitState, f64)>> {
    let out = algorithm1(ctx, start, v, setup, 0.0)?;
    trace.transmit_sca.extend(out.trace.iter().cloned());
    let ex = evaluate(ctx, &ctx.matrices(v)?, &out.state, &setup.mode)?;
    Ok(ex.feasible().then_some((out.state, ex.q)))
}

/// Builds a design from time-scaled covariances: `W = S̃/τ`, the dominant
/// rank-one part becomes the beamformer and any remainder moves into the
/// energy covariance. Slot power is then scaled into the budget and the
/// durations into the frame. Returns the design and the largest `λ₂/λ₁`.
pub fn extract_design(
    ctx: &Context,
    state: &TransmitState,
    v: &[CVector],
    served: &[Vec<bool>],
) -> Result<(Design, f64)> {
    let cfg = ctx.cfg;
    let m = ctx.ch.antennas();
    let k_n = state.num_iu();
    let l = state.num_slots();
    let mut beams = vec![vec![CVector::zeros(m); l]; k_n];
    let mut energy_cov = Vec::with_capacity(l);
    let mut max_ratio: f64 = 0.0;
    for s in 0..l {
        let tau = state.tau[s];
        if tau <= 0.0 {
            energy_cov.push(HermitianMatrix::zeros(m));
            continue;
        }
        let mut w_e = state.s_e[s].scale(1.0 / tau);
        for k in 0..k_n {
            let w_cov = state.s_tilde[k][s].scale(1.0 / tau);
            if !served[k][s] {
                w_e = w_e.add(&w_cov);
                continue;
            }
            let eig = eig_hermitian(&w_cov)?;
            let top = eig.values[0].max(0.0);
            if top <= 0.0 {
                continue;
            }
            if eig.values.len() > 1 {
                max_ratio = max_ratio.max(eig.values[1].max(0.0) / top);
            }
            let w = eig.vector(0) * c64(top.sqrt(), 0.0);
            let residual = clip_psd(&w_cov.sub(&HermitianMatrix::outer(&w)));
            w_e = w_e.add(&residual);
            beams[k][s] = w;
        }
        let w_e = clip_psd(&w_e);
        let power: f64 = (0..k_n).map(|k| beams[k][s].norm_squared()).sum::<f64>() + w_e.trace();
        if power > cfg.tx_power {
            let f = cfg.tx_power / power;
            for row in beams.iter_mut() {
                row[s] *= c64(f.sqrt(), 0.0);
            }
            energy_cov.push(w_e.scale(f));
        } else {
            energy_cov.push(w_e);
        }
    }
    let mut durations: Vec<f64> = state.tau.iter().map(|&t| t.max(0.0)).collect();
    let total: f64 = durations.iter().sum();
    if total > cfg.duration {
        let f = cfg.duration / total;
        durations.iter_mut().for_each(|t| *t *= f);
    }
    let design = Design { assignment: served.to_vec(), durations, beams, energy_cov, reflect: v.to_vec() };
    Ok((design, max_ratio))
}
