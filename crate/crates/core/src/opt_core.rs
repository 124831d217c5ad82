//! Penalty terms and first-order surrogates shared by the transmit-side and
//! reflect-side subproblems.
//!
//! Each surrogate is exposed twice: as a plain function for evaluation and
//! audits, and as coefficients that the conic builders turn into affine
//! expressions.

use std::f64::consts::LN_2;

use thiserror::Error;

use crate::conic::ConicStatus;
use crate::model::ModelError;
use crate::numerics::{eig_hermitian, CVector, HermitianMatrix, NumericsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("conic solver returned {status:?} in {stage}")]
    Conic { stage: &'static str, status: ConicStatus },
    #[error("instance is infeasible for the energy requirement; run the feasibility check first")]
    InfeasibleStart,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, OptError>;

/// Tolerance on grouping entries outside `[0, 1]`.
const UNIT_BOX_TOL: f64 = 1e-9;

/// Eigenvalues below this fraction of the largest count as round-off in the
/// rank penalty.
pub const RANK_NOISE_FLOOR: f64 = 1e-12;

/// Binary-violation penalty `Σ (a − a²)`.
pub fn penalty_h(a: &[Vec<f64>]) -> Result<f64> {
    let mut h = 0.0;
    for &x in a.iter().flatten() {
        if !(-UNIT_BOX_TOL..=1.0 + UNIT_BOX_TOL).contains(&x) {
            return Err(OptError::InvalidInput(format!("grouping entry {x} outside [0, 1]")));
        }
        let x = x.clamp(0.0, 1.0);
        h += x - x * x;
    }
    Ok(h)
}

/// Tangent minorant of `a²` at `a_r`.
pub fn chi_lb(a: f64, a_r: f64) -> f64 {
    -a_r * a_r + 2.0 * a_r * a
}

/// Affine majorant of the binary penalty, `Σ (a − χ(a; a_r))`, returned as
/// per-entry `(coefficient, constant)` pairs.
pub fn h_ub_coefficients(a_r: f64) -> (f64, f64) {
    (1.0 - 2.0 * a_r, a_r * a_r)
}

pub fn h_ub(a: &[Vec<f64>], a_r: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(a_r.iter().flatten()).map(|(&x, &r)| x - chi_lb(x, r)).sum()
}

/// `τ log₂(level/τ + σ²)`, where `level` is the received power accumulated
/// over the slot. With `level` excluding the desired signal this is the
/// concave interference term `g`; including it gives `f`.
pub fn log_rate_term(level: f64, tau: f64, noise: f64) -> Result<f64> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(OptError::Domain(format!("slot duration {tau} must be positive")));
    }
    Ok(tau * (level / tau + noise).log2())
}

/// Interference-side concave term of one IU in one slot:
/// `τ log₂((Σ_{i≠k} tr(X S̃_i) + tr(X S_E))/τ + σ²)`.
pub fn g_concave(
    k: usize,
    s_tilde: &[HermitianMatrix],
    s_e: &HermitianMatrix,
    tau: f64,
    x: &HermitianMatrix,
    noise: f64,
) -> Result<f64> {
    log_rate_term(interference_level(k, s_tilde, s_e, x), tau, noise)
}

/// Signal-plus-interference concave term `f`.
pub fn f_concave(
    s_tilde: &[HermitianMatrix],
    s_e: &HermitianMatrix,
    tau: f64,
    x: &HermitianMatrix,
    noise: f64,
) -> Result<f64> {
    let level: f64 = s_tilde.iter().map(|s| x.trace_product(s)).sum::<f64>() + x.trace_product(s_e);
    log_rate_term(level, tau, noise)
}

/// `Σ_{i≠k} tr(X S̃_i) + tr(X S_E)`.
pub fn interference_level(k: usize, s_tilde: &[HermitianMatrix], s_e: &HermitianMatrix, x: &HermitianMatrix) -> f64 {
    s_tilde.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, s)| x.trace_product(s)).sum::<f64>()
        + x.trace_product(s_e)
}

/// Tangent-plane majorant of `g(level, τ) = τ log₂(level/τ + σ²)` at
/// `(level_r, τ_r)`. Being jointly concave, `g` lies below this plane
/// everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GUpper {
    pub level_r: f64,
    pub tau_r: f64,
    pub noise: f64,
    /// `Υ = level_r/τ_r + σ²`, floored at `σ²`.
    pub upsilon: f64,
}

impl GUpper {
    pub fn new(level_r: f64, tau_r: f64, noise: f64) -> Result<Self> {
        if tau_r.is_nan() || tau_r <= 0.0 {
            return Err(OptError::Domain(format!("expansion duration {tau_r} must be positive")));
        }
        let upsilon = (level_r / tau_r + noise).max(noise);
        Ok(Self { level_r, tau_r, noise, upsilon })
    }

    /// Coefficient on the interference level.
    pub fn level_coef(&self) -> f64 {
        1.0 / (self.upsilon * LN_2)
    }

    /// Coefficient on `τ`.
    pub fn tau_coef(&self) -> f64 {
        self.upsilon.log2() - (self.upsilon - self.noise) / (self.upsilon * LN_2)
    }

    /// Constant part, so that `g_ub = constant + level_coef·level + tau_coef·τ`.
    pub fn constant(&self) -> f64 {
        self.tau_r * self.upsilon.log2() - self.level_coef() * self.level_r - self.tau_coef() * self.tau_r
    }

    pub fn eval(&self, level: f64, tau: f64) -> f64 {
        self.tau_r * self.upsilon.log2()
            + (level - self.level_r) * self.level_coef()
            + self.tau_coef() * (tau - self.tau_r)
    }
}

/// `g_ub` for IU `k` at the expansion point `(S̃^r, S_E^r, τ^r)`, evaluated at
/// `(S̃, S_E, τ)`.
#[allow(clippy::too_many_arguments)]
pub fn g_ub(
    k: usize,
    s_tilde: &[HermitianMatrix],
    s_e: &HermitianMatrix,
    tau: f64,
    s_tilde_r: &[HermitianMatrix],
    s_e_r: &HermitianMatrix,
    tau_r: f64,
    x: &HermitianMatrix,
    noise: f64,
) -> Result<f64> {
    let surrogate = GUpper::new(interference_level(k, s_tilde_r, s_e_r, x), tau_r, noise)?;
    Ok(surrogate.eval(interference_level(k, s_tilde, s_e, x), tau))
}

/// Rank penalty of one matrix: the sum of its non-dominant eigenvalues,
/// i.e. `tr(S) − ‖S‖₂` for PSD `S`, with round-off eigenvalues zeroed.
pub fn rank_gap(s: &HermitianMatrix, psd_tol: f64) -> Result<f64> {
    if s.dim() == 0 {
        return Ok(0.0);
    }
    let eig = eig_hermitian(s)?;
    let top = eig.values[0];
    let min = *eig.values.last().unwrap();
    let scale = top.abs().max(s.trace().abs());
    if min < -psd_tol * scale {
        return Err(NumericsError::NotPsd { min_eig: min, allowed: -psd_tol * scale }.into());
    }
    Ok(eig.values[1..].iter().filter(|&&l| l > RANK_NOISE_FLOOR * top).sum())
}

/// `q = Σ (tr S̃ − ‖S̃‖₂)` over a set of PSD matrices.
pub fn penalty_q<'a>(set: impl IntoIterator<Item = &'a HermitianMatrix>, psd_tol: f64) -> Result<f64> {
    let mut q = 0.0;
    for s in set {
        q += rank_gap(s, psd_tol)?;
    }
    Ok(q)
}

/// Top eigenvector of the expansion point, defining the majorant
/// `tr(S) − s^H S s` of `tr(S) − ‖S‖₂`.
pub fn rank_surrogate_direction(s_r: &HermitianMatrix) -> Result<CVector> {
    Ok(crate::numerics::spectral_norm_top(s_r, true)?.1)
}

/// `q_ub = Σ (tr S̃ − ‖S̃^r‖₂ − s^H (S̃ − S̃^r) s)`.
pub fn q_ub(set: &[HermitianMatrix], points: &[HermitianMatrix]) -> Result<f64> {
    let mut q = 0.0;
    for (s, r) in set.iter().zip(points) {
        let (norm, top) = crate::numerics::spectral_norm_top(r, true)?;
        q += s.trace() - norm - (s.quad_form(&top) - r.quad_form(&top));
    }
    Ok(q)
}

/// `2 Re{v^H Q v_q} − v_q^H Q v_q`, the tangent minorant of `v^H Q v`.
pub fn quad_lb(q: &HermitianMatrix, v: &CVector, v_q: &CVector) -> f64 {
    let g = q.as_matrix() * v_q;
    2.0 * v.dotc(&g).re - q.quad_form(v_q)
}

/// Gradient data for [`quad_lb`]: `(Q v_q, v_q^H Q v_q)`.
pub fn quad_lb_coefficients(q: &HermitianMatrix, v_q: &CVector) -> (CVector, f64) {
    (q.as_matrix() * v_q, q.quad_form(v_q))
}

/// Tangent minorant of the jointly convex `v^H C v / (τ λ)` at `(v_q, λ_q)`.
pub fn g_lb(c: &HermitianMatrix, v: &CVector, lambda: f64, v_q: &CVector, lambda_q: f64, tau: f64) -> f64 {
    let g = c.as_matrix() * v_q;
    2.0 * v.dotc(&g).re / (tau * lambda_q) - c.quad_form(v_q) * lambda / (tau * lambda_q * lambda_q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::complex_gaussian;
    use crate::numerics::{c64, CMatrix, C64};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psd(rng: &mut ChaCha8Rng, m: usize, rank: usize) -> HermitianMatrix {
        let f = CMatrix::from_fn(m, rank, |_, _| complex_gaussian(rng));
        HermitianMatrix::from_matrix(&f * f.adjoint())
    }

    fn perturb(rng: &mut ChaCha8Rng, s: &HermitianMatrix) -> HermitianMatrix {
        // Stay PSD: scale by a factor in [0.5, 1.5] and add a small PSD term.
        let m = s.dim();
        let extra = random_psd(rng, m, 1).scale(0.5 * rng.random::<f64>() * s.trace() / m as f64);
        s.scale(rng.random_range(0.5..1.5)).add(&extra)
    }

    #[test]
    fn penalty_h_examples() {
        assert_eq!(penalty_h(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(), 0.0);
        assert_eq!(penalty_h(&[vec![0.5]]).unwrap(), 0.25);
        let h = penalty_h(&[vec![0.2, 1.0], vec![0.0, 0.7]]).unwrap();
        assert!((h - 0.37).abs() < 1e-15);
        assert!(penalty_h(&[vec![1.1]]).is_err());
    }

    #[test]
    fn chi_examples() {
        assert_eq!(chi_lb(0.5, 0.5), 0.25);
        assert_eq!(chi_lb(0.7, 0.0), 0.0);
        assert!((chi_lb(1.0, 0.3) - 0.51).abs() < 1e-15);
    }

    #[test]
    fn h_ub_coefficients_match() {
        let (c, d) = h_ub_coefficients(0.3);
        assert!((c * 0.8 + d - (0.8 - chi_lb(0.8, 0.3))).abs() < 1e-15);
    }

    #[test]
    fn g_interference_free() {
        let x = HermitianMatrix::identity(2);
        let s = vec![HermitianMatrix::identity(2), HermitianMatrix::zeros(2)];
        let g = g_concave(0, &s, &HermitianMatrix::zeros(2), 0.5, &x, 2.0).unwrap();
        assert!((g - 0.5 * 2f64.log2()).abs() < 1e-15);
        assert!(g_concave(0, &s, &HermitianMatrix::zeros(2), 0.0, &x, 1.0).is_err());
    }

    #[test]
    fn g_ub_majorizes_g() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = 3;
        let k = 0;
        let x = random_psd(&mut rng, m, 3);
        let noise = 0.3;
        let s_r: Vec<_> = (0..3).map(|_| random_psd(&mut rng, m, 1)).collect();
        let se_r = random_psd(&mut rng, m, 2);
        let tau_r = 0.4;
        let at = g_ub(k, &s_r, &se_r, tau_r, &s_r, &se_r, tau_r, &x, noise).unwrap();
        let exact = g_concave(k, &s_r, &se_r, tau_r, &x, noise).unwrap();
        assert!((at - exact).abs() <= 1e-10 * exact.abs().max(1.0));
        for _ in 0..1000 {
            let s: Vec<_> = s_r.iter().map(|s| perturb(&mut rng, s)).collect();
            let se = perturb(&mut rng, &se_r);
            let tau = tau_r * rng.random_range(0.5..1.5);
            let ub = g_ub(k, &s, &se, tau, &s_r, &se_r, tau_r, &x, noise).unwrap();
            let g = g_concave(k, &s, &se, tau, &x, noise).unwrap();
            assert!(ub - g >= -1e-9, "{ub} < {g}");
        }
    }

    #[test]
    fn g_upper_coefficients_reassemble() {
        let s = GUpper::new(2.0, 0.5, 0.1).unwrap();
        let direct = s.eval(3.0, 0.7);
        let affine = s.constant() + s.level_coef() * 3.0 + s.tau_coef() * 0.7;
        assert!((direct - affine).abs() < 1e-12);
    }

    #[test]
    fn rank_penalty_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ones: Vec<_> = (0..4).map(|_| random_psd(&mut rng, 3, 1)).collect();
        assert_eq!(penalty_q(&ones, 1e-9).unwrap(), 0.0);
        let q = penalty_q([&HermitianMatrix::identity(2)], 1e-9).unwrap();
        assert!((q - 1.0).abs() < 1e-15);
        assert!(penalty_q([&HermitianMatrix::diagonal(&[1.0, -0.1])], 1e-9).is_err());
    }

    #[test]
    fn q_ub_majorizes_q() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let points: Vec<_> = (0..3).map(|i| random_psd(&mut rng, 3, 1 + i)).collect();
        let q0 = penalty_q(&points, 1e-9).unwrap();
        let ub0 = q_ub(&points, &points).unwrap();
        assert!((q0 - ub0).abs() <= 1e-10 * q0.max(1.0));
        for _ in 0..1000 {
            let set: Vec<_> = points.iter().map(|s| perturb(&mut rng, s)).collect();
            let q = penalty_q(&set, 1e-9).unwrap();
            assert!(q_ub(&set, &points).unwrap() - q >= -1e-10);
        }
    }

    #[test]
    fn quad_lb_minorizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = random_psd(&mut rng, 5, 3);
        let vq = CVector::from_fn(5, |_, _| complex_gaussian(&mut rng));
        assert!((quad_lb(&q, &vq, &vq) - q.quad_form(&vq)).abs() <= 1e-10 * q.quad_form(&vq));
        assert_eq!(quad_lb(&HermitianMatrix::zeros(5), &vq, &vq), 0.0);
        for _ in 0..1000 {
            let v = CVector::from_fn(5, |_, _| complex_gaussian(&mut rng) * c64(2.0, 0.0));
            assert!(q.quad_form(&v) - quad_lb(&q, &v, &vq) >= -1e-10);
        }
        let (grad, c) = quad_lb_coefficients(&q, &vq);
        let v = CVector::from_fn(5, |_, _| complex_gaussian(&mut rng));
        assert!((2.0 * v.dotc(&grad).re - c - quad_lb(&q, &v, &vq)).abs() < 1e-10);
    }

    #[test]
    fn g_lb_minorizes_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_psd(&mut rng, 4, 2);
        let vq = CVector::from_fn(4, |_, _| complex_gaussian(&mut rng));
        let (lq, tau) = (0.7, 0.3);
        let exact = |v: &CVector, l: f64| c.quad_form(v) / (tau * l);
        assert!((g_lb(&c, &vq, lq, &vq, lq, tau) - exact(&vq, lq)).abs() <= 1e-10 * exact(&vq, lq));
        for _ in 0..1000 {
            let v = CVector::from_fn(4, |_, _| complex_gaussian(&mut rng));
            let l = rng.random_range(0.01..5.0);
            assert!(exact(&v, l) - g_lb(&c, &v, l, &vq, lq, tau) >= -1e-9 * exact(&v, l).max(1.0));
        }
    }

    proptest! {
        #[test]
        fn h_zero_exactly_on_binary(bits in proptest::collection::vec(proptest::bool::ANY, 1..12)) {
            let a: Vec<Vec<f64>> = bits.chunks(2).map(|c| c.iter().map(|&b| b as u8 as f64).collect()).collect();
            prop_assert_eq!(penalty_h(&a).unwrap(), 0.0);
        }

        #[test]
        fn h_positive_off_binary(x in 1e-6f64..(1.0 - 1e-6)) {
            prop_assert!(penalty_h(&[vec![x]]).unwrap() > 0.0);
        }

        #[test]
        fn chi_below_square(a in -3.0f64..3.0, r in -3.0f64..3.0) {
            prop_assert!(chi_lb(a, r) <= a * a + 1e-12);
        }

        #[test]
        fn q_zero_on_rank_one(re in proptest::collection::vec(-5.0f64..5.0, 3), im in proptest::collection::vec(-5.0f64..5.0, 3)) {
            let v = CVector::from_fn(3, |i, _| C64::new(re[i], im[i]));
            prop_assert_eq!(rank_gap(&HermitianMatrix::outer(&v), 1e-9).unwrap(), 0.0);
        }
    }
}
