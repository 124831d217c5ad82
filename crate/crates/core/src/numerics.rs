//! Dense complex-Hermitian linear algebra.
//!
//! Every covariance, lifted quadratic form and moment matrix in the crate is a
//! [`HermitianMatrix`]. Problem sizes are tiny (at most a few dozen rows), so
//! everything is stored dense on top of `nalgebra`.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative PSD tolerance applied to solver output before factorisation.
pub const DEFAULT_PSD_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:e}, allowed {allowed:e})")]
    NotPsd { min_eig: f64, allowed: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
}

pub type Result<T> = std::result::Result<T, NumericsError>;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// A complex matrix that equals its own conjugate transpose.
///
/// Constructors symmetrize their input, so the Hermitian property holds
/// exactly for every value of this type.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    /// Builds `(m + m^H) / 2`. Panics if `m` is not square.
    pub fn from_matrix(m: CMatrix) -> Self {
        assert!(m.is_square(), "Hermitian matrices must be square");
        let n = m.nrows();
        let mut out = CMatrix::zeros(n, n);
        for i in 0..n {
            out[(i, i)] = c64(m[(i, i)].re, 0.0);
            for j in (i + 1)..n {
                let z = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                out[(i, j)] = z;
                out[(j, i)] = z.conj();
            }
        }
        Self(out)
    }

    pub fn from_real(m: &DMatrix<f64>) -> Self {
        Self::from_matrix(m.map(|x| c64(x, 0.0)))
    }

    pub fn zeros(n: usize) -> Self {
        Self(CMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n, n))
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let mut m = CMatrix::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = c64(x, 0.0);
        }
        Self(m)
    }

    /// `v v^H`.
    pub fn outer(v: &CVector) -> Self {
        Self::from_matrix(v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)].re).sum()
    }

    /// `Re tr(self * other)`; exact trace for two Hermitian matrices is real.
    pub fn trace_product(&self, other: &HermitianMatrix) -> f64 {
        let n = self.dim();
        debug_assert_eq!(n, other.dim());
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += (self.0[(i, j)] * other.0[(j, i)]).re;
            }
        }
        acc
    }

    /// `Re(v^H A v)`.
    pub fn quad_form(&self, v: &CVector) -> f64 {
        (v.adjoint() * &self.0 * v)[(0, 0)].re
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(&self.0 * c64(s, 0.0))
    }

    pub fn add(&self, other: &HermitianMatrix) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &HermitianMatrix) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn add_assign(&mut self, other: &HermitianMatrix) {
        self.0 += &other.0;
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest relative deviation from conjugate symmetry; zero for values of
    /// this type, exposed for auditing matrices assembled elsewhere.
    pub fn symmetry_error(m: &CMatrix) -> f64 {
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        worst / scale
    }
}

/// Eigen-decomposition with eigenvalues sorted in descending order.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    /// Unitary matrix whose columns are the eigenvectors matching `values`.
    pub vectors: CMatrix,
}

impl Eigen {
    pub fn vector(&self, i: usize) -> CVector {
        self.vectors.column(i).into_owned()
    }

    /// `Σ λ_m u_m u_m^H`.
    pub fn reconstruct(&self) -> HermitianMatrix {
        let n = self.vectors.nrows();
        let mut m = CMatrix::zeros(n, n);
        for (i, &lam) in self.values.iter().enumerate() {
            let u = self.vectors.column(i);
            m += (u * u.adjoint()) * c64(lam, 0.0);
        }
        HermitianMatrix::from_matrix(m)
    }
}

pub fn eig_hermitian(a: &HermitianMatrix) -> Result<Eigen> {
    if a.dim() == 0 {
        return Err(NumericsError::InvalidInput("empty matrix".into()));
    }
    if !a.is_finite() {
        return Err(NumericsError::InvalidInput("non-finite entries".into()));
    }
    let se = a.as_matrix().clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..a.dim()).collect();
    order.sort_by(|&i, &j| se.eigenvalues[j].total_cmp(&se.eigenvalues[i]));
    let values = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(a.dim(), a.dim());
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &se.eigenvectors.column(src));
    }
    Ok(Eigen { values, vectors })
}

/// Rotates `v` by a global phase so its largest-magnitude entry is real and
/// nonnegative.
pub fn align_phase(v: &CVector) -> CVector {
    let Some((idx, _)) = v.iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())) else {
        return v.clone();
    };
    let pivot = v[idx];
    if pivot.norm() == 0.0 {
        return v.clone();
    }
    let rot = pivot.conj() / pivot.norm();
    v * rot
}

/// Spectral norm and the associated unit eigenvector.
///
/// With `psd_hint` the largest eigenvalue is used directly; otherwise the
/// eigenvalue of largest magnitude. The zero matrix maps to `(0, e_1)`.
pub fn spectral_norm_top(a: &HermitianMatrix, psd_hint: bool) -> Result<(f64, CVector)> {
    let eig = eig_hermitian(a)?;
    let n = a.dim();
    let first = eig.values[0];
    let last = eig.values[n - 1];
    let top = if psd_hint || first.abs() >= last.abs() { 0 } else { n - 1 };
    let norm = if psd_hint { first.max(0.0) } else { first.abs().max(last.abs()) };
    if norm == 0.0 {
        let mut e1 = CVector::zeros(n);
        e1[0] = c64(1.0, 0.0);
        return Ok((0.0, e1));
    }
    let u = align_phase(&eig.vector(top));
    let len = u.norm();
    Ok((norm, u / c64(len, 0.0)))
}

/// Outcome of a rank-one extraction.
#[derive(Debug, Clone)]
pub struct Rank1Factor {
    /// `√λ₁ u₁`, phase-aligned.
    pub vector: CVector,
    /// `λ₂ / λ₁` (zero when the matrix is zero or 1×1).
    pub residual_ratio: f64,
    /// Whether `residual_ratio <= tol`.
    pub is_rank_one: bool,
}

/// Extracts the dominant factor `w` with `A ≈ w w^H`.
///
/// `tol` serves both as the rank-one threshold on `λ₂/λ₁` and as the relative
/// PSD tolerance on the smallest eigenvalue.
pub fn rank1_factor(a: &HermitianMatrix, tol: f64) -> Result<Rank1Factor> {
    let eig = eig_hermitian(a)?;
    let n = a.dim();
    let lmax = eig.values[0];
    let scale = a.trace().abs().max(lmax.abs());
    let min_eig = eig.values[n - 1];
    let allowed = -tol * scale;
    if min_eig < allowed {
        return Err(NumericsError::NotPsd { min_eig, allowed });
    }
    if lmax <= 0.0 {
        return Ok(Rank1Factor { vector: CVector::zeros(n), residual_ratio: 0.0, is_rank_one: true });
    }
    let ratio = if n > 1 { eig.values[1].max(0.0) / lmax } else { 0.0 };
    let u = align_phase(&eig.vector(0));
    Ok(Rank1Factor { vector: u * c64(lmax.sqrt(), 0.0), residual_ratio: ratio, is_rank_one: ratio <= tol })
}

/// Smallest eigenvalue, for PSD audits.
pub fn min_eigenvalue(a: &HermitianMatrix) -> Result<f64> {
    let eig = eig_hermitian(a)?;
    Ok(*eig.values.last().expect("dim >= 1"))
}

/// `min_φ ‖a − e^{jφ} b‖`.
pub fn phase_aligned_distance(a: &CVector, b: &CVector) -> f64 {
    let inner = (b.adjoint() * a)[(0, 0)];
    let rot = if inner.norm() > 0.0 { inner / inner.norm() } else { c64(1.0, 0.0) };
    (a - b * rot).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(rng: &mut impl Rng, n: usize) -> HermitianMatrix {
        let m = CMatrix::from_fn(n, n, |_, _| c64(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        HermitianMatrix::from_matrix(m)
    }

    fn random_vector(rng: &mut impl Rng, n: usize) -> CVector {
        CVector::from_fn(n, |_, _| c64(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn identity_eigenvalues() {
        let e = eig_hermitian(&HermitianMatrix::identity(3)).unwrap();
        for v in e.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_eigenpairs() {
        let e = eig_hermitian(&HermitianMatrix::diagonal(&[2.0, -1.0])).unwrap();
        assert!((e.values[0] - 2.0).abs() < 1e-14);
        assert!((e.values[1] + 1.0).abs() < 1e-14);
        assert!((e.vectors[(0, 0)].norm() - 1.0).abs() < 1e-14);
        assert!((e.vectors[(1, 1)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn non_finite_rejected() {
        let mut m = CMatrix::identity(2, 2);
        m[(0, 0)] = c64(f64::NAN, 0.0);
        let h = HermitianMatrix::from_matrix(m);
        assert!(matches!(eig_hermitian(&h), Err(NumericsError::InvalidInput(_))));
    }

    #[test]
    fn reconstruction_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..1000 {
            let n = 1 + trial % 16;
            let a = random_hermitian(&mut rng, n);
            let e = eig_hermitian(&a).unwrap();
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
            let err = e.reconstruct().sub(&a).frobenius_norm() / a.frobenius_norm();
            assert!(err <= 1e-10, "trial {trial}: {err}");
            // unitary columns
            let gram = e.vectors.adjoint() * &e.vectors;
            let dev = (gram - CMatrix::identity(n, n)).norm();
            assert!(dev < 1e-10);
        }
    }

    #[test]
    fn spectral_norm_diagonal_and_rank_one() {
        let (norm, u) = spectral_norm_top(&HermitianMatrix::diagonal(&[3.0, 1.0]), false).unwrap();
        assert!((norm - 3.0).abs() < 1e-14);
        assert!((u[0] - c64(1.0, 0.0)).norm() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_vector(&mut rng, 4);
        let w = &w / c64(w.norm(), 0.0);
        let (norm, u) = spectral_norm_top(&HermitianMatrix::outer(&w), true).unwrap();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!((u.norm() - 1.0).abs() < 1e-12);
        assert!(phase_aligned_distance(&u, &w) < 1e-10);
    }

    #[test]
    fn spectral_norm_matches_eigendecomposition_on_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let b = CMatrix::from_fn(6, 6, |_, _| c64(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let a = HermitianMatrix::from_matrix(&b * b.adjoint());
            let (norm, u) = spectral_norm_top(&a, true).unwrap();
            let e = eig_hermitian(&a).unwrap();
            assert!((norm - e.values[0]).abs() < 1e-10);
            assert!(phase_aligned_distance(&u, &e.vector(0)) < 1e-10);
            assert!((a.quad_form(&u) - norm).abs() < 1e-10);
        }
    }

    #[test]
    fn spectral_norm_negative_dominant() {
        let (norm, u) = spectral_norm_top(&HermitianMatrix::diagonal(&[1.0, -4.0]), false).unwrap();
        assert!((norm - 4.0).abs() < 1e-14);
        assert!((u[1].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_zero_convention() {
        let (norm, u) = spectral_norm_top(&HermitianMatrix::zeros(3), false).unwrap();
        assert_eq!(norm, 0.0);
        assert_eq!(u[0], c64(1.0, 0.0));
        assert_eq!(u[1], c64(0.0, 0.0));
    }

    #[test]
    fn rank1_explicit() {
        let a = HermitianMatrix::diagonal(&[2.0, 0.0]);
        let f = rank1_factor(&a, 1e-9).unwrap();
        assert!((f.vector[0] - c64(2f64.sqrt(), 0.0)).norm() < 1e-12);
        assert!(f.vector[1].norm() < 1e-12);
        assert!(f.is_rank_one);
    }

    #[test]
    fn rank1_zero() {
        let f = rank1_factor(&HermitianMatrix::zeros(3), 1e-9).unwrap();
        assert_eq!(f.vector.norm(), 0.0);
        assert_eq!(f.residual_ratio, 0.0);
    }

    #[test]
    fn rank1_near_rank_one_reports_ratio() {
        let f = rank1_factor(&HermitianMatrix::diagonal(&[1.0, 1e-9]), 1e-6).unwrap();
        assert!((f.vector[0] - c64(1.0, 0.0)).norm() < 1e-12);
        assert!((f.residual_ratio - 1e-9).abs() < 1e-15);
        assert!(f.is_rank_one);

        let g = rank1_factor(&HermitianMatrix::diagonal(&[1.0, 0.5]), 1e-6).unwrap();
        assert!(!g.is_rank_one);
        assert!((g.residual_ratio - 0.5).abs() < 1e-14);
    }

    #[test]
    fn rank1_rejects_indefinite() {
        let err = rank1_factor(&HermitianMatrix::diagonal(&[1.0, -0.1]), 1e-6).unwrap_err();
        assert!(matches!(err, NumericsError::NotPsd { .. }));
    }

    #[test]
    fn rank1_recovers_vector_up_to_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..8 {
            let w = random_vector(&mut rng, n);
            let f = rank1_factor(&HermitianMatrix::outer(&w), 1e-9).unwrap();
            assert!(phase_aligned_distance(&w, &f.vector) <= 1e-8 * w.norm());
        }
    }

    #[test]
    fn arithmetic_keeps_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_hermitian(&mut rng, 5);
        let b = random_hermitian(&mut rng, 5);
        for m in [a.add(&b), a.sub(&b), a.scale(-3.5)] {
            assert!(HermitianMatrix::symmetry_error(m.as_matrix()) <= 1e-12);
        }
        let x = random_vector(&mut rng, 5);
        let direct = (x.adjoint() * a.as_matrix() * &x)[(0, 0)];
        assert!(direct.im.abs() < 1e-12);
        assert!((direct.re - a.quad_form(&x)).abs() < 1e-12);
    }
}
