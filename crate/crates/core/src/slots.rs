//! Normalized per-slot problem data shared by the solvers.
//!
//! Inside the conic subproblems, durations are measured in units of `T`,
//! covariances in units of `P·T`, information gains are scaled by `P/σ²_k`
//! (so the noise level is one) and energy gains by `P·T/E` (so the
//! requirement is one). This keeps every coefficient near unity whatever the
//! physical path loss.

use crate::model::{effective_matrix, quad_lift, zero_trace_threshold, ChannelSet, PhaseStats, SystemConfig};
use crate::numerics::{c64, eig_hermitian, CMatrix, CVector, HermitianMatrix};
use crate::opt_core::Result;

/// Slots shorter than this fraction of `T` are treated as inactive.
pub const SLOT_FLOOR: f64 = 1e-6;

/// Unit conversions between physical and normalized quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct Units {
    pub power: f64,
    pub duration: f64,
    /// Scale of the energy constraint: `E`, or 1 when `E = 0`.
    pub energy: f64,
    pub noise: Vec<f64>,
}

impl Units {
    pub fn new(cfg: &SystemConfig, num_iu: usize) -> Self {
        Self {
            power: cfg.tx_power,
            duration: cfg.duration,
            energy: if cfg.energy_req > 0.0 { cfg.energy_req } else { 1.0 },
            noise: (0..num_iu).map(|k| cfg.noise(k)).collect(),
        }
    }

    /// `P·T`, the covariance unit.
    pub fn budget(&self) -> f64 {
        self.power * self.duration
    }

    pub fn info_gain(&self, k: usize) -> f64 {
        self.power / self.noise[k]
    }

    pub fn energy_gain(&self) -> f64 {
        self.budget() / self.energy
    }
}

/// Normalized `X̂_{k,ℓ}` and `Ŷ_{j,ℓ}` for fixed reflect vectors.
#[derive(Debug, Clone)]
pub struct SlotMatrices {
    /// `[k][ℓ]`.
    pub info: Vec<Vec<HermitianMatrix>>,
    /// `[j][ℓ]`.
    pub energy: Vec<Vec<HermitianMatrix>>,
}

impl SlotMatrices {
    pub fn new(ch: &ChannelSet, stats: &PhaseStats, v: &[CVector], units: &Units) -> Result<Self> {
        let info = ch
            .info
            .iter()
            .enumerate()
            .map(|(k, h)| {
                v.iter()
                    .map(|vl| Ok(effective_matrix(h, vl, stats)?.scale(units.info_gain(k))))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let energy = ch
            .energy
            .iter()
            .map(|g| {
                v.iter()
                    .map(|vl| Ok(effective_matrix(g, vl, stats)?.scale(units.energy_gain())))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { info, energy })
    }

    pub fn num_slots(&self) -> usize {
        self.info.first().or(self.energy.first()).map_or(0, |r| r.len())
    }
}

/// Normalized lifted matrix of an IU: `(P/σ²_k) · Q(H_k, S)`.
pub fn info_lift(
    ch: &ChannelSet,
    stats: &PhaseStats,
    units: &Units,
    k: usize,
    s: &HermitianMatrix,
) -> Result<HermitianMatrix> {
    Ok(quad_lift(&ch.info[k], s, stats, zero_trace_threshold(1.0))?.scale(units.info_gain(k)))
}

/// Normalized lifted matrix of an EU: `(P·T/E) · Q(G_j, S)`.
pub fn energy_lift(
    ch: &ChannelSet,
    stats: &PhaseStats,
    units: &Units,
    j: usize,
    s: &HermitianMatrix,
) -> Result<HermitianMatrix> {
    Ok(quad_lift(&ch.energy[j], s, stats, zero_trace_threshold(1.0))?.scale(units.energy_gain()))
}

/// Normalized throughput of one slot, `τ log₂(1 + signal/(τ + interference))`
/// with all quantities normalized.
pub fn slot_rate(signal: f64, interference: f64, tau: f64) -> f64 {
    if tau <= 0.0 || signal <= 0.0 {
        return 0.0;
    }
    tau * (1.0 + signal / (tau + interference.max(0.0))).log2()
}

/// Nearest PSD matrix in Frobenius norm (negative eigenvalues clipped).
pub fn clip_psd(h: &HermitianMatrix) -> HermitianMatrix {
    if h.dim() == 0 {
        return h.clone();
    }
    let eig = match eig_hermitian(h) {
        Ok(e) => e,
        Err(_) => return HermitianMatrix::zeros(h.dim()),
    };
    if eig.values.last().copied().unwrap_or(0.0) >= 0.0 {
        return h.clone();
    }
    let n = h.dim();
    let mut m = CMatrix::zeros(n, n);
    for (i, &l) in eig.values.iter().enumerate() {
        if l > 0.0 {
            let u = eig.vector(i);
            m += &u * u.adjoint() * c64(l, 0.0);
        }
    }
    HermitianMatrix::from_matrix(m)
}

/// Unit-modulus projection of the reflecting entries; the trailing direct
/// entry stays 1. Zero entries map to phase 0.
pub fn project_unit_modulus(v: &CVector) -> CVector {
    let n = v.len();
    CVector::from_fn(n, |i, _| {
        if i + 1 == n {
            c64(1.0, 0.0)
        } else {
            let a = v[i].norm();
            if a > 0.0 && a.is_finite() {
                v[i] / a
            } else {
                c64(1.0, 0.0)
            }
        }
    })
}

/// All-ones reflect vector (zero phase shifts) of length `N + 1`.
pub fn unit_reflect(rows: usize) -> CVector {
    CVector::from_element(rows, c64(1.0, 0.0))
}
