use irs_swipt::eval::{audit_design, expected_metrics, GroupingRule};
use irs_swipt::model::{
    effective_matrix, generate_channels, phase_error_moment_matrix, quad_lift, Design, SystemConfig,
};
use irs_swipt::numerics::{
    c64, eig_hermitian, phase_aligned_distance, rank1_factor, CMatrix, CVector, HermitianMatrix,
};
use irs_swipt::opt_overlap::grouping_free_image;
use irs_swipt::slots::project_unit_modulus;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| c64(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
}

fn gaussian_vector(rng: &mut impl Rng, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| c64(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
}

fn random_psd(rng: &mut impl Rng, n: usize, rank: usize) -> HermitianMatrix {
    let f = gaussian_matrix(rng, n, rank);
    HermitianMatrix::from_matrix(&f * f.adjoint())
}

fn unit_phases(rng: &mut impl Rng, n: usize) -> CVector {
    let mut v = CVector::from_fn(n + 1, |_, _| {
        let t = rng.random::<f64>() * std::f64::consts::TAU;
        c64(t.cos(), t.sin())
    });
    v[n] = c64(1.0, 0.0);
    v
}

fn rel_frobenius(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// A random frame design that meets every constraint of the overlapping
/// problem, with the energy requirement set below what it harvests.
fn synthetic_design(seed: u64) -> (Design, SystemConfig, irs_swipt::model::ChannelSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = SystemConfig::desk();
    let (k_n, l, m, n) = (base.info_users, base.max_groups, base.antennas, base.irs_elements);
    let ch = generate_channels(&base, seed).unwrap();
    let mut assignment: Vec<Vec<bool>> = (0..k_n).map(|_| (0..l).map(|_| rng.random_bool(0.5)).collect()).collect();
    for row in assignment.iter_mut() {
        if !row.iter().any(|&a| a) {
            row[rng.random_range(0..l)] = true;
        }
    }
    let mut durations: Vec<f64> = (0..l).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = durations.iter().sum::<f64>() / rng.random_range(0.5..1.0);
    durations.iter_mut().for_each(|t| *t *= base.duration / total);
    let mut beams = vec![vec![CVector::zeros(m); l]; k_n];
    let mut energy_cov = Vec::with_capacity(l);
    for s in 0..l {
        let w_e = random_psd(&mut rng, m, 1);
        let mut power = w_e.trace();
        for k in 0..k_n {
            if assignment[k][s] {
                beams[k][s] = gaussian_vector(&mut rng, m);
                power += beams[k][s].norm_squared();
            }
        }
        let f = base.tx_power * rng.random_range(0.3..1.0) / power;
        for row in beams.iter_mut() {
            row[s] *= c64(f.sqrt(), 0.0);
        }
        energy_cov.push(w_e.scale(f));
    }
    let reflect = (0..l).map(|_| unit_phases(&mut rng, n)).collect();
    let design = Design { assignment, durations, beams, energy_cov, reflect };
    let stats = phase_error_moment_matrix(n, true);
    let harvested = expected_metrics(&design, &ch, &stats, &SystemConfig { energy_req: 0.0, ..base.clone() })
        .unwrap()
        .energy
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let cfg = SystemConfig { energy_req: 0.5 * harvested, ..base };
    (design, cfg, ch)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigendecomposition_reconstructs(seed in any::<u64>(), n in 1usize..=16) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = gaussian_matrix(&mut rng, n, n);
        let a = HermitianMatrix::from_matrix(&g + g.adjoint());
        let eig = eig_hermitian(&a).unwrap();
        prop_assert!(rel_frobenius(eig.reconstruct().as_matrix(), a.as_matrix()) <= 1e-10);
        prop_assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rank_one_factor_recovers_vector_up_to_phase(seed in any::<u64>(), n in 1usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = gaussian_vector(&mut rng, n);
        let f = rank1_factor(&HermitianMatrix::outer(&w), 1e-9).unwrap();
        prop_assert!(phase_aligned_distance(&w, &f.vector) <= 1e-8 * w.norm());
        prop_assert!(f.is_rank_one);
    }

    #[test]
    fn moment_matrix_is_symmetric_psd_with_unit_diagonal(n in 0usize..=24, robust in any::<bool>()) {
        let stats = phase_error_moment_matrix(n, robust);
        let z = &stats.z;
        prop_assert_eq!(z.nrows(), n + 1);
        prop_assert_eq!(z, &z.transpose());
        prop_assert!((0..=n).all(|i| z[(i, i)] == 1.0));
        let min = z.clone().symmetric_eigen().eigenvalues.min();
        prop_assert!(min >= -1e-12);
    }

    #[test]
    fn reflect_phase_rotation_moves_into_the_channel(seed in any::<u64>(), n in 1usize..=10, m in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = gaussian_matrix(&mut rng, n + 1, m);
        let v = unit_phases(&mut rng, n);
        let e = unit_phases(&mut rng, n);
        let stats = phase_error_moment_matrix(n, true);
        let rotated_v = v.component_mul(&e);
        let rotated_h = CMatrix::from_diagonal(&e.map(|z| z.conj())) * &h;
        let lhs = effective_matrix(&h, &rotated_v, &stats).unwrap();
        let rhs = effective_matrix(&rotated_h, &v, &stats).unwrap();
        prop_assert!(rel_frobenius(lhs.as_matrix(), rhs.as_matrix()) <= 1e-12);
        prop_assert!(HermitianMatrix::symmetry_error(lhs.as_matrix()) <= 1e-12);
    }

    #[test]
    fn lifted_quadratic_form_equals_trace_form(seed in any::<u64>(), n in 0usize..=12, m in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = gaussian_matrix(&mut rng, n + 1, m);
        let rank = rng.random_range(1..=m);
        let w = random_psd(&mut rng, m, rank);
        let v = gaussian_vector(&mut rng, n + 1);
        let stats = phase_error_moment_matrix(n, true);
        let trace_form = effective_matrix(&h, &v, &stats).unwrap().trace_product(&w);
        let quad = quad_lift(&h, &w, &stats, 0.0).unwrap().quad_form(&v);
        prop_assert!((trace_form - quad).abs() <= 1e-9 * trace_form.abs());
    }

    #[test]
    fn projection_lands_on_unit_modulus(seed in any::<u64>(), n in 0usize..=16) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = gaussian_vector(&mut rng, n + 1);
        v[n] = c64(1.0, 0.0);
        let p = project_unit_modulus(&v);
        prop_assert!(p.iter().take(n).all(|z| (z.norm() - 1.0).abs() <= 1e-12));
        prop_assert_eq!(p[n], c64(1.0, 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn grouping_free_image_keeps_throughputs_and_feasibility(seed in any::<u64>()) {
        let (design, cfg, ch) = synthetic_design(seed);
        let stats = phase_error_moment_matrix(cfg.irs_elements, true);
        prop_assert!(audit_design(&design, &ch, &stats, &cfg, GroupingRule::Overlapping).unwrap().passed());
        let image = grouping_free_image(&design);
        prop_assert!(image.assignment.iter().flatten().all(|&a| a));
        prop_assert!(audit_design(&image, &ch, &stats, &cfg, GroupingRule::Overlapping).unwrap().passed());
        let before = expected_metrics(&design, &ch, &stats, &cfg).unwrap();
        let after = expected_metrics(&image, &ch, &stats, &cfg).unwrap();
        for (a, b) in before.throughput.iter().zip(&after.throughput) {
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }
        prop_assert_eq!(before.energy, after.energy);
    }

    #[test]
    fn energy_is_linear_in_the_energy_covariance(seed in any::<u64>(), factor in 0.1f64..4.0) {
        let (design, cfg, ch) = synthetic_design(seed);
        let stats = phase_error_moment_matrix(cfg.irs_elements, true);
        let silent = Design {
            beams: design.beams.iter().map(|row| row.iter().map(|w| CVector::zeros(w.len())).collect()).collect(),
            ..design
        };
        let scaled = Design { energy_cov: silent.energy_cov.iter().map(|w| w.scale(factor)).collect(), ..silent.clone() };
        let e1 = expected_metrics(&silent, &ch, &stats, &cfg).unwrap().energy;
        let e2 = expected_metrics(&scaled, &ch, &stats, &cfg).unwrap().energy;
        for (a, b) in e1.iter().zip(&e2) {
            prop_assert!((b - factor * a).abs() <= 1e-12 * b.abs());
        }
    }
}
