//! Reflect-side SCA: for fixed transmit variables, each step solves a convex
//! QCQP over the reflect vectors of the active slots and per-pair SINR
//! slacks.

use std::f64::consts::LN_2;

use log::debug;

use crate::conic::{Affine, ConicProblem, ConicStatus, PinnedComplexVar};
use crate::numerics::{eig_hermitian, CMatrix, CVector, HermitianMatrix};
use crate::opt_core::{quad_lb_coefficients, OptError, Result};
use crate::slots::{energy_lift, info_lift, slot_rate};

use super::{energy_ratio, inactive_slots, rates, relative_increase, Context, TransmitState};

/// Pairs whose SINR at the expansion point is below this are left out of
/// the step; their throughput is lower-bounded by zero.
pub const SINR_FLOOR: f64 = 1e-8;

/// Relative eigenvalue cut when factoring the interference matrices.
const FACTOR_CUT: f64 = 1e-14;

/// One reflect-side SCA step.
#[derive(Debug, Clone)]
pub struct ReflectStep {
    pub v: Vec<CVector>,
    /// Exact min throughput (bits) at `v`.
    pub eta: f64,
    /// Surrogate min throughput (bits).
    pub surrogate_eta: f64,
    /// SINR slacks `[k][ℓ]` (zero for pairs left out).
    pub lambda: Vec<Vec<f64>>,
    pub status: ConicStatus,
}

/// `R` with `R^H R = C` from the eigen-decomposition of a PSD matrix.
fn factor(c: &HermitianMatrix) -> Result<CMatrix> {
    let eig = eig_hermitian(c)?;
    let top = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let keep: Vec<usize> =
        (0..eig.values.len()).filter(|&i| eig.values[i] > FACTOR_CUT * top && eig.values[i] > 0.0).collect();
    let n = c.dim();
    Ok(CMatrix::from_fn(keep.len(), n, |r, col| eig.vectors[(col, keep[r])].conj() * eig.values[keep[r]].sqrt()))
}

/// One convex QCQP step at the expansion point `v_q`.
pub fn reflect_qcqp_step(ctx: &Context, state: &TransmitState, v_q: &[CVector]) -> Result<ReflectStep> {
    let k_n = state.num_iu();
    let l = state.num_slots();
    let rows = ctx.ch.rows();
    let t = ctx.units.duration;
    let inv = 1.0 / ctx.units.budget();
    let inactive = inactive_slots(&state.tau, t);
    let mats_q = ctx.matrices(v_q)?;

    let mut p = ConicProblem::new();
    let eta = p.add_scalar("eta");
    let vars: Vec<Option<PinnedComplexVar>> =
        (0..l).map(|s| if inactive[s] { None } else { Some(p.add_reflect_vector(format!("v[{s}]"), rows)) }).collect();
    let mut lambda_vars: Vec<Vec<Option<Affine>>> = vec![vec![None; l]; k_n];

    for k in 0..k_n {
        let mut total = Affine::zero();
        for s in 0..l {
            let tau_n = state.tau[s] / t;
            let Some(var) = &vars[s] else {
                // Inactive slot: reflect vector fixed, exact rate is a constant.
                let x = &mats_q.info[k][s];
                let own = x.trace_product(&state.s_tilde[k][s]) * inv;
                let mut disturb = x.trace_product(&state.s_e[s]) * inv;
                for (i, row) in state.s_tilde.iter().enumerate() {
                    if i != k {
                        disturb += x.trace_product(&row[s]) * inv;
                    }
                }
                total.add_constant(slot_rate(own, disturb, tau_n));
                continue;
            };
            let own = info_lift(ctx.ch, ctx.stats, &ctx.units, k, &state.s_tilde[k][s].scale(inv))?;
            let mut rest = state.s_e[s].clone();
            for (i, row) in state.s_tilde.iter().enumerate() {
                if i != k {
                    rest = rest.add(&row[s]);
                }
            }
            let disturb = info_lift(ctx.ch, ctx.stats, &ctx.units, k, &rest.scale(inv))?;
            let v = &v_q[s];
            let signal = own.quad_form(v);
            let gamma = signal / (disturb.quad_form(v) + tau_n);
            if !(signal > 0.0 && gamma >= SINR_FLOOR && gamma.is_finite()) {
                continue;
            }
            let lam = p.add_scalar(format!("lambda[{k},{s}]"));
            let z = p.add_scalar(format!("z[{k},{s}]"));
            p.add_nonneg(lam.clone());
            // Tangent minorant of v^H C v / λ (times τ) must cover the
            // disturbance ‖R v‖² + τ.
            let (grad, c) = quad_lb_coefficients(&own, v);
            let mut bound = var.re_inner(&grad).scaled(2.0 / gamma);
            bound.add_scaled(&lam, -c / (gamma * gamma));
            bound.add_constant(-tau_n);
            p.add_squared_norm_le(var.linear_map(&factor(&disturb)?), &bound);
            // z ≤ τ log₂(1 + λ).
            let mut growth = lam.clone();
            growth.add_constant(1.0);
            p.add_exp(z.clone().scaled(LN_2 / tau_n), Affine::constant(1.0), growth);
            total.add_scaled(&z, 1.0);
            lambda_vars[k][s] = Some(lam);
        }
        p.add_le(eta.clone(), &total);
    }

    if ctx.energy_binding() {
        for j in 0..ctx.ch.num_eu() {
            let mut harvested = Affine::zero();
            for s in 0..l {
                let mut sum = state.s_e[s].clone();
                for row in &state.s_tilde {
                    sum = sum.add(&row[s]);
                }
                match &vars[s] {
                    Some(var) => {
                        let q = energy_lift(ctx.ch, ctx.stats, &ctx.units, j, &sum.scale(inv))?;
                        let (grad, c) = quad_lb_coefficients(&q, &v_q[s]);
                        harvested.add_scaled(&var.re_inner(&grad), 2.0);
                        harvested.add_constant(-c);
                    }
                    None => {
                        harvested.add_constant(mats_q.energy[j][s].trace_product(&sum) * inv);
                    }
                }
            }
            p.add_le(Affine::constant(1.0), &harvested);
        }
    }

    p.maximize(eta.clone());
    let sol = p.solve(&ctx.solver_options());
    let sol = if sol.status.has_solution() {
        ctx.count_solve(true);
        sol
    } else {
        ctx.count_solve(false);
        let retry = p.solve(&ctx.careful_options());
        ctx.count_solve(retry.status.has_solution());
        retry
    };
    if !sol.status.has_solution() {
        return Err(OptError::Conic { stage: "reflect QCQP", status: sol.status });
    }
    let v: Vec<CVector> = (0..l)
        .map(|s| match &vars[s] {
            Some(var) => var.decode(&sol.x),
            None => v_q[s].clone(),
        })
        .collect();
    let mats = ctx.matrices(&v)?;
    let lambda = lambda_vars
        .iter()
        .map(|row| row.iter().map(|e| e.as_ref().map_or(0.0, |e| e.eval(&sol.x))).collect())
        .collect();
    Ok(ReflectStep {
        eta: rates(ctx, &mats, state).into_iter().fold(f64::INFINITY, f64::min),
        surrogate_eta: eta.eval(&sol.x) * t,
        v,
        lambda,
        status: sol.status,
    })
}

/// Iterates [`reflect_qcqp_step`] until the fractional throughput gain is
/// below tolerance. Steps that lower the exact min throughput or break the
/// energy requirement are discarded. Returns the reflect vectors and the
/// exact min throughput after each accepted step.
pub fn reflect_sca(ctx: &Context, state: &TransmitState, v0: &[CVector]) -> Result<(Vec<CVector>, Vec<f64>)> {
    let mut v = v0.to_vec();
    let mats = ctx.matrices(&v)?;
    let mut eta = rates(ctx, &mats, state).into_iter().fold(f64::INFINITY, f64::min);
    let mut trace = vec![eta];
    if ctx.ch.rows() == 1 || inactive_slots(&state.tau, ctx.units.duration).iter().all(|&x| x) {
        return Ok((v, trace));
    }
    for _ in 0..ctx.cfg.algo.max_sca_iters {
        let step = match reflect_qcqp_step(ctx, state, &v) {
            Ok(s) => s,
            Err(e) => {
                debug!("reflect step failed: {e}");
                break;
            }
        };
        let feasible = energy_ratio(ctx, &ctx.matrices(&step.v)?, state) >= 1.0 - super::ENERGY_ACCEPT_TOL;
        if !(feasible && step.eta >= eta) {
            break;
        }
        let inc = relative_increase(step.eta, eta);
        v = step.v;
        eta = step.eta;
        trace.push(eta);
        if inc < ctx.cfg.algo.eps_inner {
            break;
        }
    }
    Ok((v, trace))
}
