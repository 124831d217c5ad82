//! Benchmark schemes built from the main solvers: random grouping, a single
//! slot without grouping, designs that ignore the phase errors, and energy
//! designs without time division.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::{expected_metrics, MetricsReport, EH_SLACK};
use crate::feasibility::{maximize_min_energy, min_energy, FeasibilityReport};
use crate::model::{phase_error_moment_matrix, ChannelSet, PhaseStats, SystemConfig};
use crate::opt_core::Result;
use crate::opt_nonoverlap::{solve_fixed_grouping, P1Solution};

/// Draws before the random-grouping benchmark is declared infeasible.
pub const MAX_RANDOM_DRAWS: usize = 20;

/// Outcome of the random-grouping benchmark.
#[derive(Debug, Clone)]
pub struct RandomUgOutcome {
    /// Solution for the first usable draw, if any.
    pub solution: Option<P1Solution>,
    /// Number of draws made (including the accepted one).
    pub draws: usize,
    /// Min throughput (bits); zero when every draw failed.
    pub eta: f64,
}

/// One grouping draw: every entry is an independent fair coin.
pub fn random_grouping(rng: &mut ChaCha8Rng, k_n: usize, slots: usize) -> Vec<Vec<bool>> {
    (0..k_n).map(|_| (0..slots).map(|_| rng.random_bool(0.5)).collect()).collect()
}

/// Random grouping benchmark. Draws are rejected when some IU is left out
/// of every group or when the frozen-grouping solve fails (for instance
/// because the energy requirement cannot be met); after
/// [`MAX_RANDOM_DRAWS`] rejections the benchmark scores zero.
pub fn random_ug_solve(ch: &ChannelSet, stats: &PhaseStats, cfg: &SystemConfig, seed: u64) -> RandomUgOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for draw in 1..=MAX_RANDOM_DRAWS {
        let a = random_grouping(&mut rng, ch.num_iu(), cfg.max_groups);
        if a.iter().any(|row| !row.iter().any(|&x| x)) {
            continue;
        }
        match solve_fixed_grouping(ch, stats, cfg, &a, false) {
            Ok(sol) => return RandomUgOutcome { eta: sol.eta, solution: Some(sol), draws: draw },
            Err(e) => log::debug!("random grouping draw {draw} rejected: {e}"),
        }
    }
    RandomUgOutcome { solution: None, draws: MAX_RANDOM_DRAWS, eta: 0.0 }
}

/// Single slot spanning the frame with every IU served.
pub fn no_ug_solve(ch: &ChannelSet, stats: &PhaseStats, cfg: &SystemConfig) -> Result<P1Solution> {
    let cfg = SystemConfig { max_groups: 1, ..cfg.clone() };
    solve_fixed_grouping(ch, stats, &cfg, &vec![vec![true]; ch.num_iu()], true)
}

/// A design computed without the phase errors and its performance under
/// them.
#[derive(Debug, Clone)]
pub struct NonRobustReport {
    pub solution: P1Solution,
    /// Expected metrics under the actual phase-error statistics.
    pub realized: MetricsReport,
    /// Some EU harvests less than `E` in expectation.
    pub violates_energy: bool,
}

/// Runs `solve` with the error-free statistics and audits the result under
/// the phase-error statistics.
pub fn nonrobust_variant<F>(ch: &ChannelSet, cfg: &SystemConfig, solve: F) -> Result<NonRobustReport>
where
    F: FnOnce(&ChannelSet, &PhaseStats, &SystemConfig) -> Result<P1Solution>,
{
    let ideal = phase_error_moment_matrix(cfg.irs_elements, false);
    let actual = phase_error_moment_matrix(cfg.irs_elements, true);
    let solution = solve(ch, &ideal, cfg)?;
    let realized = expected_metrics(&solution.design, ch, &actual, cfg)?;
    let violates_energy = ch.num_eu() > 0 && realized.eh_margin < -EH_SLACK;
    Ok(NonRobustReport { solution, realized, violates_energy })
}

/// Min harvested energy of an energy-only design, as designed and under the
/// actual phase errors.
#[derive(Debug, Clone)]
pub struct EnergyBaseline {
    pub report: FeasibilityReport,
    /// Min energy (J) under the statistics the design assumed.
    pub designed: f64,
    /// Min energy (J) under the phase-error statistics.
    pub realized: f64,
}

/// Maximizes the min harvested energy, robustly or ignoring the phase
/// errors, with `L` slots or (without time division) a single one.
pub fn energy_baseline(
    ch: &ChannelSet,
    cfg: &SystemConfig,
    robust: bool,
    time_division: bool,
) -> Result<EnergyBaseline> {
    let cfg = if time_division { cfg.clone() } else { SystemConfig { max_groups: 1, ..cfg.clone() } };
    let assumed = phase_error_moment_matrix(cfg.irs_elements, robust);
    let actual = phase_error_moment_matrix(cfg.irs_elements, true);
    let report = maximize_min_energy(ch, &assumed, &cfg)?;
    let d = &report.design;
    let designed = d.delta;
    let realized = min_energy(ch, &actual, &d.s_e, &d.v)?;
    Ok(EnergyBaseline { report, designed, realized })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generate_channels;

    #[test]
    fn draws_are_reproducible() {
        let a = random_grouping(&mut ChaCha8Rng::seed_from_u64(9), 4, 3);
        let b = random_grouping(&mut ChaCha8Rng::seed_from_u64(9), 4, 3);
        assert_eq!(a, b);
    }

    #[test]
    fn ideal_statistics_are_all_ones() {
        let z = phase_error_moment_matrix(3, false);
        assert!(z.z.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn random_grouping_is_kept_frozen() {
        let cfg = SystemConfig { info_users: 3, energy_users: 1, irs_elements: 4, ..SystemConfig::desk() };
        let ch = generate_channels(&cfg, 2).unwrap();
        let stats = phase_error_moment_matrix(cfg.irs_elements, true);
        let out = random_ug_solve(&ch, &stats, &cfg, 11);
        let sol = out.solution.expect("a usable draw");
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut drawn = Vec::new();
        for _ in 0..out.draws {
            drawn = random_grouping(&mut rng, 3, cfg.max_groups);
        }
        assert_eq!(sol.design.assignment, drawn);
        assert_eq!(out.eta, sol.eta);
    }

    #[test]
    fn no_ug_uses_one_full_slot() {
        let cfg = SystemConfig { info_users: 3, energy_users: 1, irs_elements: 4, ..SystemConfig::desk() };
        let ch = generate_channels(&cfg, 3).unwrap();
        let stats = phase_error_moment_matrix(cfg.irs_elements, true);
        let sol = no_ug_solve(&ch, &stats, &cfg).unwrap();
        assert_eq!(sol.design.num_slots(), 1);
        assert!(sol.design.assignment.iter().all(|row| row == &vec![true]));
        assert!((sol.design.durations[0] - cfg.duration).abs() <= 1e-6 * cfg.duration);
    }
}
