//! Joint grouping and resource allocation with overlapping groups.
//!
//! Every IU is nominally served in every slot, so the grouping variables
//! disappear: the transmit side optimizes one covariance per (IU, slot)
//! pair and the grouping is read off the support of the beamformers.

use serde::Serialize;

use crate::eval::expected_metrics;
use crate::model::{ChannelSet, Design, PhaseStats, SystemConfig};
use crate::numerics::CVector;
use crate::opt_core::Result;
use crate::opt_nonoverlap::{outranks, solve_fixed_grouping, solve_p1_with, P1Solution};

/// Relative support threshold: `a = 1` iff `‖w‖² > SUPPORT_REL · P T / L`.
pub const SUPPORT_REL: f64 = 1e-8;

/// Which start produced the returned overlapping design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// The grouping-free design with beams outside the support zeroed.
    Support,
    /// A frozen-grouping solve at the recovered support.
    Refit,
    /// The non-overlapping solve (its designs are overlapping-feasible).
    Exclusive,
}

/// Solution of the overlapping problem.
#[derive(Debug, Clone, PartialEq)]
pub struct P2Solution {
    /// Grouping-free solve; its design serves every IU in every slot.
    pub relaxed: P1Solution,
    /// The returned design and its diagnostics.
    pub chosen: P1Solution,
    pub origin: Origin,
    /// Exact expected min throughput of the returned design (bits).
    pub eta: f64,
}

impl P2Solution {
    pub fn design(&self) -> &Design {
        &self.chosen.design
    }

    /// Largest number of groups any IU belongs to.
    pub fn max_membership(&self) -> usize {
        self.chosen.design.assignment.iter().map(|row| row.iter().filter(|&&a| a).count()).max().unwrap_or(0)
    }
}

/// Solves the grouping-free problem: all `(k, ℓ)` pairs carry a covariance
/// and the slots fill the frame (stretching every slot and its covariances
/// by a common factor never lowers any throughput or harvested energy).
pub fn solve_p2prime(ch: &ChannelSet, stats: &PhaseStats, cfg: &SystemConfig) -> Result<P1Solution> {
    let everyone = vec![vec![true; cfg.max_groups]; ch.num_iu()];
    solve_fixed_grouping(ch, stats, cfg, &everyone, true)
}

/// `a[k][ℓ] = 1` iff the beamformer carries more than the support
/// threshold of power.
pub fn recover_grouping(design: &Design, cfg: &SystemConfig) -> Vec<Vec<bool>> {
    let slots = design.num_slots().max(1) as f64;
    let floor = SUPPORT_REL * cfg.tx_power * cfg.duration / slots;
    design
        .assignment
        .iter()
        .zip(&design.beams)
        .map(|(row, beams)| row.iter().zip(beams).map(|(&on, w)| on && w.norm_squared() > floor).collect())
        .collect()
}

/// Replaces the grouping of a design, zeroing the beams outside it.
pub fn with_grouping(design: &Design, assignment: Vec<Vec<bool>>) -> Design {
    let beams = design
        .beams
        .iter()
        .zip(&assignment)
        .map(|(row, a)| {
            row.iter().zip(a).map(|(w, &on)| if on { w.clone() } else { CVector::zeros(w.len()) }).collect()
        })
        .collect();
    Design { assignment, beams, ..design.clone() }
}

/// The grouping-free form of a design: every IU nominally in every slot,
/// with the beams outside the original grouping set to zero.
pub fn grouping_free_image(design: &Design) -> Design {
    let beams = design
        .beams
        .iter()
        .zip(&design.assignment)
        .map(|(row, a)| {
            row.iter().zip(a).map(|(w, &on)| if on { w.clone() } else { CVector::zeros(w.len()) }).collect()
        })
        .collect();
    let assignment = design.assignment.iter().map(|row| vec![true; row.len()]).collect();
    Design { assignment, beams, ..design.clone() }
}

/// Solves the overlapping problem.
///
/// The grouping is recovered from the support of the grouping-free solve.
/// Two further starts compete with that design: a frozen-grouping solve at
/// the recovered support, and the non-overlapping solve seeded by the same
/// grouping-free solution. The best design is returned.
pub fn solve_p2(ch: &ChannelSet, stats: &PhaseStats, cfg: &SystemConfig) -> Result<P2Solution> {
    let relaxed = solve_p2prime(ch, stats, cfg)?;
    let grouping = recover_grouping(&relaxed.design, cfg);
    let design = with_grouping(&relaxed.design, grouping.clone());
    let metrics = expected_metrics(&design, ch, stats, cfg)?;
    let support = P1Solution { eta: metrics.eta, design, metrics, ..relaxed.clone() };

    let mut chosen = (support, Origin::Support);
    let mut consider = |candidate: Result<P1Solution>, origin: Origin| {
        if let Ok(c) = candidate {
            let (solves, failures) = (c.diagnostics.conic_solves, c.diagnostics.solver_failures);
            if outranks(&c, &chosen.0) {
                let (old_solves, old_failures) =
                    (chosen.0.diagnostics.conic_solves, chosen.0.diagnostics.solver_failures);
                chosen = (c, origin);
                chosen.0.diagnostics.conic_solves += old_solves;
                chosen.0.diagnostics.solver_failures += old_failures;
            } else {
                chosen.0.diagnostics.conic_solves += solves;
                chosen.0.diagnostics.solver_failures += failures;
            }
        }
    };
    if grouping.iter().all(|row| row.iter().any(|&a| a)) {
        consider(solve_fixed_grouping(ch, stats, cfg, &grouping, false), Origin::Refit);
    }
    consider(solve_p1_with(ch, stats, cfg, Some(&relaxed)), Origin::Exclusive);
    let (chosen, origin) = chosen;
    Ok(P2Solution { eta: chosen.eta, relaxed, chosen, origin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::c64;

    fn design(beams: Vec<Vec<CVector>>) -> Design {
        let l = beams[0].len();
        Design {
            assignment: vec![vec![true; l]; beams.len()],
            durations: vec![0.5; l],
            beams,
            energy_cov: vec![crate::numerics::HermitianMatrix::zeros(2); l],
            reflect: vec![CVector::from_element(1, c64(1.0, 0.0)); l],
        }
    }

    #[test]
    fn empty_support_gives_empty_grouping() {
        let cfg = SystemConfig::desk();
        let d = design(vec![vec![CVector::zeros(2); 2]; 3]);
        assert!(recover_grouping(&d, &cfg).iter().flatten().all(|&a| !a));
    }

    #[test]
    fn disjoint_support_gives_exclusive_grouping() {
        let cfg = SystemConfig::desk();
        let on = CVector::from_vec(vec![c64(0.3, 0.1), c64(0.0, -0.2)]);
        let off = CVector::zeros(2);
        let d = design(vec![vec![on.clone(), off.clone()], vec![off, on]]);
        assert_eq!(recover_grouping(&d, &cfg), vec![vec![true, false], vec![false, true]]);
    }

    #[test]
    fn threshold_is_relative_to_the_power_scale() {
        let cfg = SystemConfig::desk();
        let floor = SUPPORT_REL * cfg.tx_power * cfg.duration / 2.0;
        let below = CVector::from_vec(vec![c64((0.5 * floor).sqrt(), 0.0), c64(0.0, 0.0)]);
        let above = CVector::from_vec(vec![c64((2.0 * floor).sqrt(), 0.0), c64(0.0, 0.0)]);
        let d = design(vec![vec![below, above]]);
        assert_eq!(recover_grouping(&d, &cfg), vec![vec![false, true]]);
    }
}
