use impurity_core::exact_oracle::gaussian_state_vector;
use impurity_core::gaussian::{
    fock_covariance, random_covariance_with_parity, vacuum_covariance, CovarianceMatrix, GaussianState, Superposition,
};
use impurity_core::norm_estimation::*;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_superposition(n: usize, chi: usize, rng: &mut ChaCha8Rng) -> Superposition<f64> {
    let reference = vacuum_covariance::<f64>(n);
    let states = (0..chi)
        .map(|_| GaussianState::with_positive_anchor(random_covariance_with_parity(n, false, rng), &reference).unwrap())
        .collect();
    let coefficients = (0..chi).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    Superposition::new(coefficients, states, reference).unwrap()
}

/// Dense vector with each component phased so that `⟨φ₀|φ_a⟩` equals its anchor.
fn dense(psi: &Superposition<f64>) -> DVector<Complex64> {
    let r = DVector::from_vec(gaussian_state_vector(psi.reference.matrix()));
    let mut out = DVector::<Complex64>::zeros(r.len());
    for (c, s) in psi.coefficients.iter().zip(&psi.states) {
        let v = DVector::from_vec(gaussian_state_vector(s.cov.matrix()));
        let phase = s.anchor / r.dotc(&v);
        out += v * (phase * c);
    }
    out
}

fn permutations(d: usize) -> Vec<Vec<usize>> {
    if d == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(d - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, d - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn estimator_is_exactly_unbiased_over_all_thetas() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [2, 3] {
        let psi = random_superposition(n, 3, &mut rng);
        let v = dense(&psi);
        let norm2 = v.norm_squared();
        assert!((norm2 - psi.norm2().unwrap()).abs() < 1e-10);
        let d = 2 * n;
        let (mut total, mut count) = (0.0, 0usize);
        for perm in permutations(d) {
            for bits in 0..(1usize << n) {
                let y: Vec<bool> = (0..n).map(|j| bits >> j & 1 == 1).collect();
                let m = fock_covariance::<f64>(&y);
                let m = m.matrix();
                let theta = DMatrix::from_fn(d, d, |r, c| m[(perm[r], perm[c])]);
                let t = DVector::from_vec(gaussian_state_vector(&theta));
                total += 2f64.powi(n as i32) * t.dotc(&v).norm_sqr();
                count += 1;
            }
        }
        assert!((total / count as f64 - norm2).abs() < 1e-10 * norm2, "n = {n}");
    }
}

#[test]
fn single_sample_matches_dense_overlap() {
    // with one sample the estimate is 2ⁿ|⟨θ|ψ⟩|² for the θ drawn first
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let psi = random_superposition(4, 3, &mut rng);
    let v = dense(&psi);
    for seed in 0..30 {
        let mut a = ChaCha8Rng::seed_from_u64(seed);
        let est = estimate_norm2_with(&psi, 1, &mut a).unwrap();
        // replay the draws: the generic reference comes first
        let mut b = ChaCha8Rng::seed_from_u64(seed);
        let _ = random_covariance_with_parity::<f64, _>(4, false, &mut b);
        let theta: CovarianceMatrix<f64> = sample_theta(4, &mut b);
        let t = DVector::from_vec(gaussian_state_vector(theta.matrix()));
        let expect = 16.0 * t.dotc(&v).norm_sqr();
        assert!((est.value - expect).abs() < 1e-9 * (1.0 + expect), "seed {seed}");
    }
}

#[test]
fn mean_and_variance_match_theory() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 4;
    let psi = random_superposition(n, 3, &mut rng);
    let norm2 = psi.norm2().unwrap();
    let est = estimate_norm2_with(&psi, 100_000, &mut rng).unwrap();
    assert!((est.value / norm2 - 1.0).abs() < 0.02, "ratio {}", est.value / norm2);
    let var = est.std_error.powi(2) * est.samples as f64;
    assert!(var <= 2.0 * (n as f64).sqrt() * norm2 * norm2 * 1.2, "variance {var}");
}

#[test]
fn sampled_occupations_average_one_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 5;
    let samples = 20_000;
    let mut occ = vec![0.0; n];
    for _ in 0..samples {
        let t = sample_theta(n, &mut rng);
        for (j, o) in occ.iter_mut().enumerate() {
            *o += (1.0 - t.matrix()[(2 * j, 2 * j + 1)]) / 2.0;
        }
    }
    for o in occ {
        assert!((o / samples as f64 - 0.5).abs() < 0.02);
    }
}

#[test]
fn zero_state_estimates_to_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut psi = random_superposition(3, 2, &mut rng);
    psi.coefficients.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
    let est = estimate_norm2(&psi, &EstimatorConfig::new(0.5, 0.5, 9).unwrap()).unwrap();
    assert_eq!(est.value, 0.0);
}

#[test]
fn estimates_are_reproducible_per_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let psi = random_superposition(4, 2, &mut rng);
    let cfg = EstimatorConfig::new(0.3, 0.3, 77).unwrap();
    let a = estimate_norm2(&psi, &cfg).unwrap();
    let b = estimate_norm2(&psi, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.seed, 77);
    assert_eq!(a.samples, cfg.samples(4));
}

#[test]
fn odd_superpositions_are_supported() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 3;
    let reference = fock_covariance::<f64>(&[true, false, false]);
    let states: Vec<_> = (0..2)
        .map(|_| GaussianState::with_positive_anchor(random_covariance_with_parity(n, true, &mut rng), &reference).unwrap())
        .collect();
    let psi = Superposition::new(vec![Complex64::new(0.7, 0.1), Complex64::new(-0.4, 0.5)], states, reference).unwrap();
    let norm2 = psi.norm2().unwrap();
    let est = estimate_norm2_with(&psi, 100_000, &mut rng).unwrap();
    assert!((est.value / norm2 - 1.0).abs() < 0.02);
}
