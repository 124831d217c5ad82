use super::ModelError;
use crate::numerics::{CVector, HermitianMatrix};

/// A complete transmit/reflect design for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    /// `a[k][ℓ]`: IU `k` is served in slot `ℓ`.
    pub assignment: Vec<Vec<bool>>,
    /// `τ_ℓ` in seconds.
    pub durations: Vec<f64>,
    /// `w[k][ℓ]`; zero where the IU is not served.
    pub beams: Vec<Vec<CVector>>,
    /// `W_E,ℓ`.
    pub energy_cov: Vec<HermitianMatrix>,
    /// `v_ℓ` of length `N + 1` with last entry 1.
    pub reflect: Vec<CVector>,
}

impl Design {
    pub fn num_iu(&self) -> usize {
        self.assignment.len()
    }

    pub fn num_slots(&self) -> usize {
        self.durations.len()
    }

    /// Checks that every per-slot and per-user collection agrees in size.
    pub fn check_shapes(&self, antennas: usize, rows: usize) -> Result<(), ModelError> {
        let l = self.num_slots();
        let bad = |what: &str| Err(ModelError::Shape(format!("design: {what}")));
        if self.energy_cov.len() != l || self.reflect.len() != l {
            return bad("slot count mismatch");
        }
        if self.beams.len() != self.num_iu() {
            return bad("IU count mismatch");
        }
        for (a, w) in self.assignment.iter().zip(&self.beams) {
            if a.len() != l || w.len() != l {
                return bad("per-IU slot count mismatch");
            }
            if w.iter().any(|b| b.len() != antennas) {
                return bad("beamformer length");
            }
        }
        if self.energy_cov.iter().any(|e| e.dim() != antennas) {
            return bad("energy covariance size");
        }
        if self.reflect.iter().any(|v| v.len() != rows) {
            return bad("reflect vector length");
        }
        Ok(())
    }

    /// Power drawn in slot `ℓ`: `Σ_k a ‖w‖² + tr(W_E)`.
    pub fn slot_power(&self, slot: usize) -> f64 {
        let info: f64 =
            self.assignment.iter().zip(&self.beams).filter(|(a, _)| a[slot]).map(|(_, w)| w[slot].norm_squared()).sum();
        info + self.energy_cov[slot].trace()
    }

    /// `Σ_{k,ℓ} a_{k,ℓ}`.
    pub fn assignment_count(&self) -> usize {
        self.assignment.iter().flatten().filter(|&&a| a).count()
    }
}
