//! Ground-truth evaluation of a design: closed-form expected metrics,
//! Monte Carlo sampling of the phase errors, constraint audits and a
//! brute-force grouping oracle.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::model::{effective_matrix, ChannelSet, Design, ModelError, PhaseStats, SystemConfig};
use crate::numerics::{c64, CMatrix, CVector, C64};
use crate::slots::SLOT_FLOOR;

/// Closed-form expected performance of a design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    /// Expected throughput per IU (bits), `Σ_ℓ τ_ℓ log₂(1 + γ̂_{k,ℓ})`.
    pub throughput: Vec<f64>,
    /// Minimum of `throughput` (`+∞` without IUs).
    pub eta: f64,
    /// `γ̂[k][ℓ]`.
    pub sinr: Vec<Vec<f64>>,
    /// Expected harvested energy per EU (J).
    pub energy: Vec<f64>,
    /// `min_j (energy_j − E)` (`+∞` without EUs).
    pub eh_margin: f64,
    /// Transmit power per slot (W).
    pub slot_power: Vec<f64>,
    pub active_slots: usize,
    pub assignment_count: usize,
}

/// `(w^H X w)` of every assigned beam as seen through `x`.
fn beam_power(x: &CMatrix, w: &CVector) -> f64 {
    let xw = x * w;
    w.dotc(&xw).re
}

/// Closed-form expected SINRs, throughputs and energies.
pub fn expected_metrics(
    design: &Design,
    ch: &ChannelSet,
    stats: &PhaseStats,
    cfg: &SystemConfig,
) -> Result<MetricsReport, ModelError> {
    design.check_shapes(ch.antennas(), ch.rows())?;
    if design.num_iu() != ch.num_iu() {
        return Err(ModelError::Shape("design and channels disagree on K".into()));
    }
    let l = design.num_slots();
    let k_n = ch.num_iu();
    let mut sinr = vec![vec![0.0; l]; k_n];
    let mut throughput = vec![0.0; k_n];
    let mut energy = vec![0.0; ch.num_eu()];
    for slot in 0..l {
        let v = &design.reflect[slot];
        let tau = design.durations[slot];
        for (k, h) in ch.info.iter().enumerate() {
            let x = effective_matrix(h, v, stats)?;
            let xm = x.as_matrix();
            let powers: Vec<f64> = (0..k_n)
                .map(|i| if design.assignment[i][slot] { beam_power(xm, &design.beams[i][slot]) } else { 0.0 })
                .collect();
            let interference: f64 = powers.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, p)| p).sum::<f64>()
                + x.trace_product(&design.energy_cov[slot])
                + cfg.noise(k);
            let g = powers[k] / interference;
            sinr[k][slot] = g;
            if tau > 0.0 {
                throughput[k] += tau * (1.0 + g).log2();
            }
        }
        for (j, g) in ch.energy.iter().enumerate() {
            let y = effective_matrix(g, v, stats)?;
            let ym = y.as_matrix();
            let info: f64 =
                (0..k_n).filter(|&i| design.assignment[i][slot]).map(|i| beam_power(ym, &design.beams[i][slot])).sum();
            energy[j] += tau * (info + y.trace_product(&design.energy_cov[slot]));
        }
    }
    let eta = throughput.iter().copied().fold(f64::INFINITY, f64::min);
    let eh_margin = energy.iter().map(|e| e - cfg.energy_req).fold(f64::INFINITY, f64::min);
    Ok(MetricsReport {
        throughput,
        eta,
        sinr,
        energy,
        eh_margin,
        slot_power: (0..l).map(|s| design.slot_power(s)).collect(),
        active_slots: design.durations.iter().filter(|&&t| t > SLOT_FLOOR * cfg.duration).count(),
        assignment_count: design.assignment_count(),
    })
}

/// Which grouping constraint a design must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GroupingRule {
    /// Each IU in at most one group.
    Exclusive,
    Overlapping,
}

/// Pass/fail of every constraint under exact recomputation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Audit {
    pub energy_ok: bool,
    pub power_ok: bool,
    pub time_ok: bool,
    pub unit_modulus_ok: bool,
    pub grouping_ok: bool,
    pub eh_margin: f64,
    /// `max_ℓ power_ℓ / P`.
    pub max_power_ratio: f64,
    pub total_time: f64,
    pub max_modulus_error: f64,
}

impl Audit {
    pub fn passed(&self) -> bool {
        self.energy_ok && self.power_ok && self.time_ok && self.unit_modulus_ok && self.grouping_ok
    }
}

pub const EH_SLACK: f64 = 1e-9;
pub const POWER_SLACK: f64 = 1e-8;
pub const TIME_SLACK: f64 = 1e-10;
pub const MODULUS_SLACK: f64 = 1e-12;

/// Checks every frame constraint of a design from scratch.
pub fn audit_design(
    design: &Design,
    ch: &ChannelSet,
    stats: &PhaseStats,
    cfg: &SystemConfig,
    rule: GroupingRule,
) -> Result<Audit, ModelError> {
    let m = expected_metrics(design, ch, stats, cfg)?;
    let max_power_ratio = m.slot_power.iter().map(|p| p / cfg.tx_power).fold(0.0, f64::max);
    let total_time: f64 = design.durations.iter().sum();
    let max_modulus_error = design
        .reflect
        .iter()
        .flat_map(|v| {
            let n = v.len();
            v.iter().enumerate().map(
                move |(i, z)| {
                    if i + 1 == n {
                        (z - c64(1.0, 0.0)).norm()
                    } else {
                        (z.norm() - 1.0).abs()
                    }
                },
            )
        })
        .fold(0.0, f64::max);
    let grouping_ok = match rule {
        GroupingRule::Exclusive => design.assignment.iter().all(|row| row.iter().filter(|&&a| a).count() <= 1),
        GroupingRule::Overlapping => true,
    };
    Ok(Audit {
        energy_ok: m.eh_margin >= -EH_SLACK,
        power_ok: max_power_ratio <= 1.0 + POWER_SLACK,
        time_ok: total_time <= cfg.duration + TIME_SLACK && design.durations.iter().all(|&t| t >= 0.0),
        unit_modulus_ok: max_modulus_error <= MODULUS_SLACK,
        grouping_ok,
        eh_margin: m.eh_margin,
        max_power_ratio,
        total_time,
        max_modulus_error,
    })
}

/// Monte Carlo options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampling {
    pub samples: usize,
    pub seed: u64,
    /// Phase errors are uniform on `[−half_width, half_width]`.
    pub half_width: f64,
}

impl Sampling {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self { samples, seed, half_width: FRAC_PI_2 }
    }
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

/// Monte Carlo metrics of a design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledReport {
    pub samples: usize,
    /// `E{γ}` per `[k][ℓ]`.
    pub sinr: Vec<Vec<Estimate>>,
    /// `E{|desired|²}` per `[k][ℓ]` (W).
    pub signal: Vec<Vec<Estimate>>,
    /// `E{interference + energy-signal leakage + noise}` per `[k][ℓ]` (W).
    pub disturbance: Vec<Vec<Estimate>>,
    /// `E{Q_j}` (J).
    pub energy: Vec<Estimate>,
    /// `Σ_ℓ τ log₂(1 + E{γ})` per IU.
    pub throughput_of_mean: Vec<f64>,
    /// `E{Σ_ℓ τ log₂(1 + γ)}` per IU.
    pub mean_throughput: Vec<Estimate>,
    pub eta_of_mean: f64,
    pub eta_mean: f64,
}

const BLOCK: usize = 1024;

/// Layout of the per-sample observation vector.
struct Layout {
    k: usize,
    l: usize,
    j: usize,
}

impl Layout {
    fn len(&self) -> usize {
        3 * self.k * self.l + self.j + self.k
    }
    fn sinr(&self, k: usize, l: usize) -> usize {
        k * self.l + l
    }
    fn signal(&self, k: usize, l: usize) -> usize {
        self.k * self.l + k * self.l + l
    }
    fn disturbance(&self, k: usize, l: usize) -> usize {
        2 * self.k * self.l + k * self.l + l
    }
    fn energy(&self, j: usize) -> usize {
        3 * self.k * self.l + j
    }
    fn rate(&self, k: usize) -> usize {
        3 * self.k * self.l + self.j + k
    }
}

fn observe(
    design: &Design,
    ch: &ChannelSet,
    cfg: &SystemConfig,
    lay: &Layout,
    rng: &mut ChaCha8Rng,
    hw: f64,
    out: &mut [f64],
) {
    let rows = ch.rows();
    for slot in 0..lay.l {
        let v = &design.reflect[slot];
        let tau = design.durations[slot];
        let perturbed: CVector = CVector::from_fn(rows, |n, _| {
            if n + 1 == rows {
                v[n]
            } else {
                let theta = if hw > 0.0 { rng.random_range(-hw..=hw) } else { 0.0 };
                v[n] * C64::from_polar(1.0, theta)
            }
        });
        let w_e = &design.energy_cov[slot];
        for (k, h) in ch.info.iter().enumerate() {
            // g = H^H (v ∘ ṽ); received amplitude of w is g^H w.
            let g = h.adjoint() * &perturbed;
            let powers: Vec<f64> = (0..lay.k)
                .map(|i| if design.assignment[i][slot] { g.dotc(&design.beams[i][slot]).norm_sqr() } else { 0.0 })
                .collect();
            let leak = g.dotc(&(w_e.as_matrix() * &g)).re;
            let dist =
                powers.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, p)| p).sum::<f64>() + leak + cfg.noise(k);
            let gamma = powers[k] / dist;
            out[lay.sinr(k, slot)] += gamma;
            out[lay.signal(k, slot)] += powers[k];
            out[lay.disturbance(k, slot)] += dist;
            if tau > 0.0 {
                out[lay.rate(k)] += tau * (1.0 + gamma).log2();
            }
        }
        for (j, gm) in ch.energy.iter().enumerate() {
            let g = gm.adjoint() * &perturbed;
            let info: f64 = (0..lay.k)
                .filter(|&i| design.assignment[i][slot])
                .map(|i| g.dotc(&design.beams[i][slot]).norm_sqr())
                .sum();
            out[lay.energy(j)] += tau * (info + g.dotc(&(w_e.as_matrix() * &g)).re);
        }
    }
}

/// Pairwise sum of equal-length vectors in a fixed tree order.
fn pairwise_sum(mut parts: Vec<Vec<f64>>) -> Vec<f64> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

/// Monte Carlo evaluation of the instantaneous SINR and energy expressions.
///
/// Sample `s` draws from its own ChaCha stream, and partial sums are formed
/// over fixed blocks and combined pairwise, so the result does not depend on
/// the thread count.
pub fn sampled_metrics(
    design: &Design,
    ch: &ChannelSet,
    cfg: &SystemConfig,
    opts: Sampling,
) -> Result<SampledReport, ModelError> {
    design.check_shapes(ch.antennas(), ch.rows())?;
    if opts.samples == 0 {
        return Err(ModelError::Shape("at least one sample is required".into()));
    }
    let lay = Layout { k: ch.num_iu(), l: design.num_slots(), j: ch.num_eu() };
    let dim = lay.len();
    let blocks = opts.samples.div_ceil(BLOCK);
    let partial: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut sum = vec![0.0; 2 * dim];
            let mut obs = vec![0.0; dim];
            for s in b * BLOCK..((b + 1) * BLOCK).min(opts.samples) {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(s as u64);
                obs.iter_mut().for_each(|x| *x = 0.0);
                observe(design, ch, cfg, &lay, &mut rng, opts.half_width, &mut obs);
                for (i, &x) in obs.iter().enumerate() {
                    sum[i] += x;
                    sum[dim + i] += x * x;
                }
            }
            sum
        })
        .collect();
    let total = pairwise_sum(partial);
    let n = opts.samples as f64;
    let est = |i: usize| {
        let mean = total[i] / n;
        let var = if opts.samples > 1 { ((total[dim + i] - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        Estimate { mean, se: (var / n).sqrt() }
    };
    let grid = |f: &dyn Fn(usize, usize) -> usize| -> Vec<Vec<Estimate>> {
        (0..lay.k).map(|k| (0..lay.l).map(|l| est(f(k, l))).collect()).collect()
    };
    let sinr = grid(&|k, l| lay.sinr(k, l));
    let throughput_of_mean: Vec<f64> = sinr
        .iter()
        .map(|row| {
            row.iter().zip(&design.durations).map(|(g, &t)| if t > 0.0 { t * (1.0 + g.mean).log2() } else { 0.0 }).sum()
        })
        .collect();
    let mean_throughput: Vec<Estimate> = (0..lay.k).map(|k| est(lay.rate(k))).collect();
    Ok(SampledReport {
        samples: opts.samples,
        signal: grid(&|k, l| lay.signal(k, l)),
        disturbance: grid(&|k, l| lay.disturbance(k, l)),
        energy: (0..lay.j).map(|j| est(lay.energy(j))).collect(),
        eta_of_mean: throughput_of_mean.iter().copied().fold(f64::INFINITY, f64::min),
        eta_mean: mean_throughput.iter().map(|e| e.mean).fold(f64::INFINITY, f64::min),
        sinr,
        throughput_of_mean,
        mean_throughput,
    })
}

/// Enumeration limits of the brute-force grouping oracle.
pub const ORACLE_MAX_IU: usize = 4;
pub const ORACLE_MAX_SLOTS: usize = 2;

/// One enumerated grouping and its frozen-grouping min throughput.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleEntry {
    pub assignment: Vec<Vec<bool>>,
    /// Min throughput (bits); zero for groupings that leave an IU out or
    /// whose solve fails.
    pub eta: f64,
    /// The frozen-grouping solve was run and succeeded.
    pub solved: bool,
}

/// Every candidate grouping in enumeration order and the index of the best.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleTable {
    pub entries: Vec<OracleEntry>,
    pub best: usize,
}

impl OracleTable {
    pub fn best_eta(&self) -> f64 {
        self.entries[self.best].eta
    }
}

/// All groupings allowed by `rule`: with [`GroupingRule::Exclusive`] each IU
/// is in one of the `L` groups or none, otherwise any support pattern.
pub fn enumerate_groupings(k_n: usize, slots: usize, rule: GroupingRule) -> Vec<Vec<Vec<bool>>> {
    let base = match rule {
        GroupingRule::Exclusive => slots + 1,
        GroupingRule::Overlapping => 1 << slots,
    };
    let total = base.pow(k_n as u32);
    (0..total)
        .map(|mut code| {
            (0..k_n)
                .map(|_| {
                    let digit = code % base;
                    code /= base;
                    match rule {
                        GroupingRule::Exclusive => (0..slots).map(|s| digit == s + 1).collect(),
                        GroupingRule::Overlapping => (0..slots).map(|s| digit >> s & 1 == 1).collect(),
                    }
                })
                .collect()
        })
        .collect()
}

/// Solves the frozen-grouping problem for every grouping allowed by `rule`
/// and tabulates the results. Groupings that leave an IU unserved score
/// zero without a solve. Ties keep the earliest candidate.
pub fn brute_force_grouping_oracle(
    ch: &ChannelSet,
    stats: &PhaseStats,
    cfg: &SystemConfig,
    rule: GroupingRule,
) -> crate::opt_core::Result<OracleTable> {
    let (k_n, slots) = (ch.num_iu(), cfg.max_groups);
    if k_n > ORACLE_MAX_IU || slots > ORACLE_MAX_SLOTS {
        return Err(crate::opt_core::OptError::InvalidInput(format!(
            "oracle budget exceeded: K = {k_n}, L = {slots} (limits {ORACLE_MAX_IU}, {ORACLE_MAX_SLOTS})"
        )));
    }
    let mut entries = Vec::new();
    for assignment in enumerate_groupings(k_n, slots, rule) {
        let (eta, solved) = if assignment.iter().all(|row| row.iter().any(|&a| a)) {
            match crate::opt_nonoverlap::solve_fixed_grouping(ch, stats, cfg, &assignment, false) {
                Ok(sol) => (sol.eta, true),
                Err(e) => {
                    log::debug!("oracle candidate {assignment:?} failed: {e}");
                    (0.0, false)
                }
            }
        } else {
            (0.0, false)
        };
        entries.push(OracleEntry { assignment, eta, solved });
    }
    let best = entries.iter().enumerate().fold(0, |b, (i, e)| if e.eta > entries[b].eta { i } else { b });
    Ok(OracleTable { entries, best })
}
