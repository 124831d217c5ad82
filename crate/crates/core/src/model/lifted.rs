//! Effective channel matrices and their lifted quadratic forms in the reflect
//! vector.

use super::{ModelError, PhaseStats};
use crate::numerics::{eig_hermitian, CMatrix, CVector, HermitianMatrix};

/// Relative tolerance on negative eigenvalues of a lifted covariance.
pub const LIFT_PSD_TOL: f64 = 1e-7;

/// Eigenvalues below this fraction of the largest are discarded in
/// [`quad_lift`].
pub const LIFT_EIG_DROP: f64 = 1e-12;

/// Trace below which a covariance counts as zero, relative to `P`.
pub fn zero_trace_threshold(power: f64) -> f64 {
    1e-14 * power
}

/// `diag(v) Z diag(v)^H`.
fn weighted_moment(v: &CVector, stats: &PhaseStats) -> CMatrix {
    let n = v.len();
    CMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj() * stats.z[(i, j)])
}

/// `channel^H diag(v) Z diag(v)^H channel`: the expected-gain matrix of one
/// user in one slot (`X` for IUs, `Y` for EUs).
pub fn effective_matrix(channel: &CMatrix, v: &CVector, stats: &PhaseStats) -> Result<HermitianMatrix, ModelError> {
    let rows = channel.nrows();
    if v.len() != rows || stats.dim() != rows {
        return Err(ModelError::Shape(format!(
            "channel has {rows} rows, reflect vector {} entries, moment matrix {}",
            v.len(),
            stats.dim()
        )));
    }
    if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(ModelError::Shape("non-finite reflect vector".into()));
    }
    let d = weighted_moment(v, stats);
    Ok(HermitianMatrix::from_matrix(channel.adjoint() * d * channel))
}

/// Lifts `tr(X(v) W)` into the quadratic form `v^H Q v`, with
/// `Q = Σ_m λ_m diag(c_m) Z diag(c_m)^H`, `c_m = channel · u_m` over the
/// eigenpairs of `covariance`. Covariances with trace at most `zero_trace`
/// map to the zero matrix.
pub fn quad_lift(
    channel: &CMatrix,
    covariance: &HermitianMatrix,
    stats: &PhaseStats,
    zero_trace: f64,
) -> Result<HermitianMatrix, ModelError> {
    let rows = channel.nrows();
    if covariance.dim() != channel.ncols() || stats.dim() != rows {
        return Err(ModelError::Shape(format!(
            "channel {}x{}, covariance {}, moment matrix {}",
            rows,
            channel.ncols(),
            covariance.dim(),
            stats.dim()
        )));
    }
    if covariance.trace() <= zero_trace {
        return Ok(HermitianMatrix::zeros(rows));
    }
    let eig = eig_hermitian(covariance)?;
    let top = eig.values[0];
    let min = *eig.values.last().unwrap();
    if min < -LIFT_PSD_TOL * top.max(covariance.trace().abs()) {
        return Err(crate::numerics::NumericsError::NotPsd { min_eig: min, allowed: -LIFT_PSD_TOL * top }.into());
    }
    let mut q = CMatrix::zeros(rows, rows);
    for (m, &lambda) in eig.values.iter().enumerate() {
        if lambda <= LIFT_EIG_DROP * top {
            continue;
        }
        let c = channel * eig.vector(m);
        q += weighted_moment(&c, stats) * nalgebra::Complex::from(lambda);
    }
    Ok(HermitianMatrix::from_matrix(q))
}
