use std::f64::consts::PI;

use nalgebra::DMatrix;

/// Second-moment matrix `Z = E{ṽ ṽ^H}` of the phase-error vector
/// `ṽ = [e^{-jθ̃_1}, …, e^{-jθ̃_N}, 1]` with `θ̃_n ~ U[-π/2, π/2]` i.i.d.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseStats {
    pub z: DMatrix<f64>,
    /// `false` selects the error-free all-ones matrix.
    pub robust: bool,
}

impl PhaseStats {
    /// `N + 1`.
    pub fn dim(&self) -> usize {
        self.z.nrows()
    }
}

/// `E{e^{j(θ̃_m − θ̃_n)}}` for two independent uniform errors: the difference
/// is triangular on `[−π, π]`, giving `4/π²`.
pub const CROSS_ELEMENT_MOMENT: f64 = 4.0 / (PI * PI);

/// `E{e^{±jθ̃}}` for a single uniform error on `[−π/2, π/2]`.
pub const SINGLE_ELEMENT_MOMENT: f64 = 2.0 / PI;

pub fn phase_error_moment_matrix(n: usize, robust: bool) -> PhaseStats {
    let dim = n + 1;
    let z = if robust {
        DMatrix::from_fn(dim, dim, |i, j| {
            if i == j {
                1.0
            } else if i == n || j == n {
                SINGLE_ELEMENT_MOMENT
            } else {
                CROSS_ELEMENT_MOMENT
            }
        })
    } else {
        DMatrix::from_element(dim, dim, 1.0)
    };
    PhaseStats { z, robust }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{eig_hermitian, HermitianMatrix};

    #[test]
    #[allow(clippy::approx_constant)]
    fn two_elements() {
        let z = phase_error_moment_matrix(2, true).z;
        let a = 4.0 / (PI * PI);
        let b = 2.0 / PI;
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, a, b, a, 1.0, b, b, b, 1.0]);
        assert_eq!(z, expected);
        assert!((a - 0.405_284_734_569_351_1).abs() < 1e-15);
        assert!((b - 0.636_619_772_367_581_4).abs() < 1e-15);
    }

    #[test]
    fn single_element() {
        let z = phase_error_moment_matrix(1, true).z;
        assert_eq!(z, DMatrix::from_row_slice(2, 2, &[1.0, 2.0 / PI, 2.0 / PI, 1.0]));
    }

    #[test]
    fn no_irs_is_scalar_one() {
        assert_eq!(phase_error_moment_matrix(0, true).z, DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn nonrobust_is_all_ones() {
        let s = phase_error_moment_matrix(4, false);
        assert!(!s.robust);
        assert!(s.z.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn symmetric_and_psd() {
        for n in 0..40 {
            let z = phase_error_moment_matrix(n, true).z;
            assert_eq!(z, z.transpose());
            let e = eig_hermitian(&HermitianMatrix::from_real(&z)).unwrap();
            assert!(*e.values.last().unwrap() >= -1e-12, "n = {n}");
        }
    }

    #[test]
    fn matches_monte_carlo_moments() {
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;
        // Sample mean of ṽṽ^H against the closed form, real parts.
        let n = 2;
        let samples = 1_000_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut sum = DMatrix::<f64>::zeros(n + 1, n + 1);
        let mut sum_sq = DMatrix::<f64>::zeros(n + 1, n + 1);
        let mut theta = vec![0.0; n + 1];
        for _ in 0..samples {
            for t in theta.iter_mut().take(n) {
                *t = rng.random_range(-PI / 2.0..PI / 2.0);
            }
            for i in 0..=n {
                for j in 0..=n {
                    let x = (theta[j] - theta[i]).cos();
                    sum[(i, j)] += x;
                    sum_sq[(i, j)] += x * x;
                }
            }
        }
        let z = phase_error_moment_matrix(n, true).z;
        let ns = samples as f64;
        for i in 0..=n {
            for j in 0..=n {
                let mean = sum[(i, j)] / ns;
                let se = ((sum_sq[(i, j)] / ns - mean * mean).max(0.0) / ns).sqrt();
                assert!((mean - z[(i, j)]).abs() <= 3.0 * se + 1e-15, "({i},{j}) {mean} vs {}", z[(i, j)]);
            }
        }
    }
}
