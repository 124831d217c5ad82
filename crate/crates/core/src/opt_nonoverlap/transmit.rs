//! Transmit-side penalized SDP and its SCA/penalty driver.

use log::debug;

use crate::conic::{Affine, ConicProblem, ConicStatus, HermitianVar, SolverOptions};
use crate::numerics::{spectral_norm_top, CVector, HermitianMatrix};
use crate::opt_core::{h_ub_coefficients, GUpper, OptError, Result};
use crate::slots::{clip_psd, SlotMatrices};

use super::{evaluate, rates, relative_increase, Context, GroupingMode, TransmitSetup, TransmitState};

/// Expansion durations (normalized) below this use the degenerate tangent
/// plane of an empty slot.
const TAU_EXPANSION_FLOOR: f64 = 1e-12;

/// Optimal point of one surrogate SDP.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub state: TransmitState,
    /// Surrogate objective `η − ρ h_ub − μ q_ub` in physical units.
    pub surrogate: f64,
    pub status: ConicStatus,
}

fn g_upper(level_r: f64, tau_r: f64) -> Result<GUpper> {
    if tau_r > TAU_EXPANSION_FLOOR {
        GUpper::new(level_r, tau_r, 1.0)
    } else {
        GUpper::new(0.0, TAU_EXPANSION_FLOOR, 1.0)
    }
}

/// Builds and solves the convex surrogate of the transmit-side problem at
/// the expansion point `point`, for fixed slot matrices.
///
/// `rho` and `mu` are the physical penalty weights (per bit of throughput,
/// per unit of grouping violation and per joule of rank violation).
pub fn build_and_solve_inner(
    ctx: &Context,
    mats: &SlotMatrices,
    point: &TransmitState,
    setup: &TransmitSetup,
    rho: f64,
    mu: f64,
    opts: &SolverOptions,
) -> Result<InnerSolution> {
    let k_n = point.num_iu();
    let l = point.num_slots();
    let m = ctx.ch.antennas();
    let budget = ctx.units.budget();
    let t = ctx.units.duration;
    let inv = 1.0 / budget;
    let rho_n = rho / t;
    let mu_n = mu * ctx.units.power;
    let mode = &setup.mode;

    let mut p = ConicProblem::new();
    let eta = p.add_scalar("eta");
    let tau = p.add_var("tau", l);
    // Without a binding energy requirement the energy covariance only adds
    // interference and uses power, so it is fixed at zero.
    let s_e: Vec<Option<HermitianVar>> =
        (0..l).map(|s| ctx.energy_binding().then(|| p.add_hermitian(format!("S_E[{s}]"), m))).collect();
    let mut s_tilde: Vec<Vec<Option<HermitianVar>>> = vec![vec![None; l]; k_n];
    let mut a: Vec<Vec<Option<Affine>>> = vec![vec![None; l]; k_n];
    for k in 0..k_n {
        for s in 0..l {
            if mode.has_var(k, s) {
                s_tilde[k][s] = Some(p.add_hermitian(format!("St[{k},{s}]"), m));
                if mode.penalized() {
                    a[k][s] = Some(p.add_scalar(format!("a[{k},{s}]")));
                }
            }
        }
    }

    // Frame time.
    let mut time = Affine::zero();
    for s in 0..l {
        p.add_nonneg(tau.at(s));
        time.add_scaled(&tau.at(s), 1.0);
    }
    if setup.full_duration {
        time.add_constant(-1.0);
        p.add_eq(time);
    } else {
        p.add_le(time, &Affine::constant(1.0));
    }

    // Cones, big-M bound and grouping box. The companion `S` of the big-M
    // sandwich appears nowhere else and `S = S̃` always satisfies it, so only
    // `0 ⪯ S̃ ⪯ a·I` is kept; the sandwich has no interior as `a → 1`.
    for se in s_e.iter().flatten() {
        p.add_hermitian_psd(&se.expr(1.0));
    }
    for k in 0..k_n {
        let mut groups = Affine::zero();
        for s in 0..l {
            let Some(st) = &s_tilde[k][s] else { continue };
            p.add_hermitian_psd(&st.expr(1.0));
            if let Some(ak) = &a[k][s] {
                p.add_nonneg(ak.clone());
                p.add_le(ak.clone(), &Affine::constant(1.0));
                groups.add_scaled(ak, 1.0);
                let mut upper = st.expr(-1.0);
                upper.add_identity(ak);
                p.add_hermitian_psd(&upper);
            }
        }
        // A positive min throughput needs every IU served somewhere, so the
        // covering row sum is a valid cut that keeps an IU from being
        // rounded out of every slot.
        if let GroupingMode::Penalized { exclusive } = mode {
            if *exclusive {
                p.add_le(groups.clone(), &Affine::constant(1.0));
            }
            p.add_le(Affine::constant(1.0), &groups);
        }
    }

    // Slot power.
    for s in 0..l {
        let mut used = s_e[s].as_ref().map_or_else(Affine::zero, |se| se.trace());
        for row in &s_tilde {
            if let Some(st) = &row[s] {
                used.add_scaled(&st.trace(), 1.0);
            }
        }
        p.add_le(used, &tau.at(s));
    }

    // Energy requirement (normalized to one).
    if ctx.energy_binding() {
        for yj in &mats.energy {
            let mut harvested = Affine::zero();
            for s in 0..l {
                if let Some(se) = &s_e[s] {
                    harvested.add_scaled(&se.trace_product(&yj[s]), 1.0);
                }
                for row in &s_tilde {
                    if let Some(st) = &row[s] {
                        harvested.add_scaled(&st.trace_product(&yj[s]), 1.0);
                    }
                }
            }
            p.add_le(Affine::constant(1.0), &harvested);
        }
    }

    // Throughput: f as a perspective-log hypograph, g by its tangent plane.
    for k in 0..k_n {
        let mut total_rate = Affine::zero();
        for s in 0..l {
            let Some(own) = &s_tilde[k][s] else { continue };
            let x = &mats.info[k][s];
            let own_level = own.trace_product(x);
            let mut interference = s_e[s].as_ref().map_or_else(Affine::zero, |se| se.trace_product(x));
            let mut level_r = x.trace_product(&point.s_e[s]) * inv;
            for (i, row) in s_tilde.iter().enumerate() {
                if i == k {
                    continue;
                }
                if let Some(st) = &row[s] {
                    interference.add_scaled(&st.trace_product(x), 1.0);
                    level_r += x.trace_product(&point.s_tilde[i][s]) * inv;
                }
            }
            // τ log₂(u/τ) = τ log₂(u/(cτ)) + τ log₂ c; `c` is the largest
            // received level over noise the power budget allows, which keeps
            // the cone arguments bounded at high SNR.
            let tau_r = point.tau[s] / t;
            let c = 1.0 + spectral_norm_top(x, true)?.0;
            let z = p.add_scalar(format!("z[{k},{s}]"));
            let received = tau.at(s).plus(&interference).plus(&own_level).scaled(1.0 / c);
            p.perspective_log_hypograph(received, tau.at(s), z.clone());
            total_rate.add_scaled(&tau.at(s), c.log2());
            let g = g_upper(level_r, tau_r)?;
            let mut g_ub = interference.scaled(g.level_coef());
            g_ub.add_scaled(&tau.at(s), g.tau_coef());
            g_ub.add_constant(g.constant());
            total_rate.add_scaled(&z, 1.0);
            total_rate.add_scaled(&g_ub, -1.0);
        }
        p.add_le(eta.clone(), &total_rate);
    }

    // Objective with linearized penalties.
    let mut objective = eta.clone();
    for k in 0..k_n {
        for s in 0..l {
            let Some(st) = &s_tilde[k][s] else { continue };
            if let Some(ak) = &a[k][s] {
                let (coef, constant) = h_ub_coefficients(point.a[k][s]);
                objective.add_scaled(ak, -rho_n * coef);
                objective.add_constant(-rho_n * constant);
            }
            if mu_n > 0.0 {
                let s_r = point.s_tilde[k][s].scale(inv);
                let (norm_r, dir) = spectral_norm_top(&s_r, true)?;
                let mut q = st.trace();
                q.add_scaled(&st.quad_form(&dir), -1.0);
                q.add_constant(s_r.quad_form(&dir) - norm_r);
                objective.add_scaled(&q, -mu_n);
            }
        }
    }
    p.maximize(objective.clone());

    let sol = p.solve(opts);
    if !sol.status.has_solution() {
        return Err(OptError::Conic { stage: "transmit SDP", status: sol.status });
    }
    let x = &sol.x;
    let decode = |h: &Option<HermitianVar>| match h {
        Some(var) => clip_psd(&var.decode(x)).scale(budget),
        None => HermitianMatrix::zeros(m),
    };
    let new_s_tilde: Vec<Vec<HermitianMatrix>> = s_tilde.iter().map(|row| row.iter().map(decode).collect()).collect();
    let new_s = new_s_tilde.clone();
    let new_a: Vec<Vec<f64>> = (0..k_n)
        .map(|k| {
            (0..l)
                .map(|s| match &a[k][s] {
                    Some(e) => e.eval(x).clamp(0.0, 1.0),
                    None => point.a[k][s],
                })
                .collect()
        })
        .collect();
    let state = TransmitState {
        s_tilde: new_s_tilde,
        s: new_s,
        s_e: s_e
            .iter()
            .map(|v| v.as_ref().map_or_else(|| HermitianMatrix::zeros(m), |v| clip_psd(&v.decode(x)).scale(budget)))
            .collect(),
        a: new_a,
        tau: (0..l).map(|s| tau.at(s).eval(x).max(0.0) * t).collect(),
        eta: eta.eval(x) * t,
    };
    Ok(InnerSolution { state, surrogate: objective.eval(x) * t, status: sol.status })
}

/// Result of the transmit-side SCA with increasing rank penalty.
#[derive(Debug, Clone)]
pub struct Alg1Output {
    pub state: TransmitState,
    /// Final rank-penalty weight.
    pub mu: f64,
    pub phases: usize,
    pub iterations: usize,
    /// Rank penalty (J) of the returned state.
    pub q: f64,
    /// Exact penalized objective per SCA iterate, one sequence per `μ`.
    pub trace: Vec<Vec<f64>>,
}

/// Solves one surrogate with a single relaxed-tolerance retry.
fn solve_with_retry(
    ctx: &Context,
    mats: &SlotMatrices,
    point: &TransmitState,
    setup: &TransmitSetup,
    rho: f64,
    mu: f64,
) -> Option<InnerSolution> {
    for opts in [ctx.solver_options(), ctx.careful_options()] {
        match build_and_solve_inner(ctx, mats, point, setup, rho, mu, &opts) {
            Ok(sol) => {
                ctx.count_solve(true);
                return Some(sol);
            }
            Err(e) => {
                ctx.count_solve(false);
                debug!("transmit SDP failed: {e}");
            }
        }
    }
    None
}

/// Transmit-side SCA for fixed reflect vectors: the inner loop ascends the
/// exact penalized objective at fixed `μ`; the outer loop grows `μ` until
/// the rank penalty is below tolerance, or until no surrogate at the
/// current `μ` could be solved.
pub fn algorithm1(
    ctx: &Context,
    init: &TransmitState,
    v: &[CVector],
    setup: &TransmitSetup,
    rho: f64,
) -> Result<Alg1Output> {
    let algo = &ctx.cfg.algo;
    let mats = ctx.matrices(v)?;
    let mut state = init.clone();
    state.eta = rates(ctx, &mats, &state).into_iter().fold(f64::INFINITY, f64::min);
    let mut current = evaluate(ctx, &mats, &state, &setup.mode)?;
    let mut mu = algo.mu0;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut phases = 0;
    for _ in 0..algo.max_penalty_phases.max(1) {
        phases += 1;
        let mut run = if current.feasible() { vec![current.objective(rho, mu)] } else { Vec::new() };
        let mut solved = false;
        for _ in 0..algo.max_sca_iters {
            let Some(sol) = solve_with_retry(ctx, &mats, &state, setup, rho, mu) else {
                break;
            };
            solved = true;
            iterations += 1;
            let mut cand = sol.state;
            let ex = evaluate(ctx, &mats, &cand, &setup.mode)?;
            let old = current.objective(rho, mu);
            let new = ex.objective(rho, mu);
            let accept = ex.feasible() && (new >= old || !current.feasible());
            if !accept {
                break;
            }
            cand.eta = ex.eta;
            let was_feasible = current.feasible();
            state = cand;
            current = ex;
            run.push(new);
            if was_feasible && relative_increase(new, old) < algo.eps_inner {
                break;
            }
        }
        trace.push(run);
        // A larger weight only worsens the conditioning of a surrogate the
        // solver already could not handle.
        if current.q < algo.rank_tol || !solved {
            break;
        }
        mu *= algo.c1;
    }
    Ok(Alg1Output { state, mu, phases, iterations, q: current.q, trace })
}
