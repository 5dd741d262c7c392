use impurity_core::exact_oracle::{ground_energy_exact, Method};
use impurity_core::gaussian::{random_orthogonal, vacuum_covariance, GaussianState, Superposition};
use impurity_core::model::{anderson, random_model};
use impurity_core::sdp_bound::*;
use impurity_core::{Error, ImpurityModel};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn products(ops: &[DMatrix<Complex64>]) -> Vec<Vec<DMatrix<Complex64>>> {
    ops.iter().map(|a| ops.iter().map(|b| a.adjoint() * b).collect()).collect()
}

fn dense_combination(prods: &[Vec<DMatrix<Complex64>>], k: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let dim = prods[0][0].nrows();
    let mut acc = DMatrix::<Complex64>::zeros(dim, dim);
    for (p, row) in prods.iter().enumerate() {
        for (q, m) in row.iter().enumerate() {
            if k[(p, q)].norm() > 0.0 {
                acc += m * k[(p, q)];
            }
        }
    }
    acc
}

fn max_abs(a: &DMatrix<Complex64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn program_for(model: &ImpurityModel, k: usize, rng: &mut ChaCha8Rng) -> SdpProgram {
    let w = random_orthogonal::<f64, _>(2 * model.n(), rng);
    build_program(model, &w, k, &SdpBudget::default()).unwrap()
}

#[test]
fn kernel_elements_are_zero_operators() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [2, 3, 5] {
        let model = random_model(n, 4, &mut rng).unwrap();
        let prog = program_for(&model, 1, &mut rng);
        assert!(!prog.kernel_basis.is_empty());
        let prods = products(&prog.basis.dense_operators());
        for k in &prog.kernel_basis {
            assert!((k - k.adjoint()).iter().all(|z| z.norm() < 1e-14));
            assert!(max_abs(&dense_combination(&prods, k)) < 1e-8, "n = {n}");
        }
    }
}

#[test]
fn h1_reproduces_the_hamiltonian_densely() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let model = random_model(4, 4, &mut rng).unwrap();
    let prog = program_for(&model, 1, &mut rng);
    let prods = products(&prog.basis.dense_operators());
    let h = impurity_core::exact_oracle::to_qubits(&model).dense();
    assert!(max_abs(&(dense_combination(&prods, &prog.h1) - h)) < 1e-9);
    let id = DMatrix::<Complex64>::identity(16, 16);
    assert!(max_abs(&(dense_combination(&prods, &prog.i1) - id)) < 1e-12);
}

#[test]
fn identity_constraint_lies_in_the_program() {
    // d_{m+1}† d_{m+1} = I, so E_11 - I1 must lie in the kernel span
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let model = anderson(4, 8.0).unwrap();
    let prog = program_for(&model, 1, &mut rng);
    let mut e11 = DMatrix::<Complex64>::zeros(prog.dim(), prog.dim());
    e11[(0, 0)] = Complex64::new(1.0, 0.0);
    let (_, residual) = fit_multipliers(&prog, &(e11 - &prog.i1));
    assert!(residual < 1e-10, "residual {residual:.3e}");
}

#[test]
fn ground_state_moment_matrix_is_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for n in [3, 5] {
        let model = random_model(n, 4, &mut rng).unwrap();
        let prog = program_for(&model, 1, &mut rng);
        let gs = ground_energy_exact(&model, Method::Dense).unwrap();
        let psi = nalgebra::DVector::from_vec(gs.vector.clone());
        let vecs: Vec<_> = prog.basis.dense_operators().iter().map(|c| c * &psi).collect();
        let big_n = prog.dim();
        // X_pq = ⟨ψ|C_q† C_p|ψ⟩
        let x = DMatrix::from_fn(big_n, big_n, |p, q| vecs[q].dotc(&vecs[p]));
        let tr = |a: &DMatrix<Complex64>| (a * &x).trace();
        assert!((tr(&prog.i1) - 1.0).norm() < 1e-10);
        assert!((tr(&prog.h1) - gs.energy).norm() < 1e-8, "n = {n}");
        for k in &prog.kernel_basis {
            assert!(tr(k).norm() < 1e-9);
        }
        let lmin = nalgebra::SymmetricEigen::new(x).eigenvalues.min();
        assert!(lmin > -1e-10);
    }
}

#[test]
fn verified_certificates_are_sound() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for (n, u) in [(3, 1.0), (4, 8.0), (5, 64.0)] {
        let model = anderson(n, u).unwrap();
        let e_g = ground_energy_exact(&model, Method::Dense).unwrap().energy;
        let prog = program_for(&model, 1, &mut rng);
        let dim = prog.kernel_basis.len();
        for trial in 0..20 {
            let scale = if trial == 0 { 0.0 } else { rng.random_range(0.01..2.0) };
            let y: Vec<f64> = (0..dim).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
            let cert = certificate_for(&prog, &y).unwrap();
            let (ok, margin) = verify_certificate(&prog, &cert, 0.0).unwrap();
            assert!(ok, "margin {margin:.3e}");
            assert!(cert.y0 <= e_g + 1e-8, "y0 {} above e_g {e_g}", cert.y0);
        }
    }
}

#[test]
fn quadratic_hamiltonian_bound_is_tight() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for n in [2, 4] {
        let model = random_model(n, 2, &mut rng).unwrap().without_impurity();
        let e_g = ground_energy_exact(&model, Method::Dense).unwrap().energy;
        let prog = program_for(&model, 0, &mut rng);
        let (cert, residual) = quadratic_certificate(&model, &prog).unwrap();
        assert!(residual < 1e-9);
        assert!((cert.y0 - e_g).abs() < 1e-9);
        let (ok, margin) = verify_certificate(&prog, &cert, 1e-8).unwrap();
        assert!(ok, "margin {margin:.3e}");
        let bumped = Certificate { y0: cert.y0 + 1.0, y: cert.y.clone() };
        assert!(!verify_certificate(&prog, &bumped, 1e-8).unwrap().0);
    }
}

#[test]
fn localization_of_gaussian_state_needs_no_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let r = random_orthogonal::<f64, _>(8, &mut rng);
    let cov = vacuum_covariance::<f64>(4).rotate(&r).unwrap();
    let loc = localize_covariance(cov.matrix(), LOCALIZATION_EPS).unwrap();
    assert_eq!(loc.k, 0);
    let blocks = &loc.rotation * cov.matrix() * loc.rotation.transpose();
    for j in 0..4 {
        assert!((blocks[(2 * j, 2 * j + 1)] - 1.0).abs() < 1e-10);
    }
}

#[test]
fn localization_counts_excited_modes() {
    // rotate two modes of the vacuum into a partially filled pair
    let mut m = vacuum_covariance::<f64>(3).into_matrix();
    let s = 0.6;
    for j in [0, 2] {
        m[(2 * j, 2 * j + 1)] = s;
        m[(2 * j + 1, 2 * j)] = -s;
    }
    let loc = localize_covariance(&m, LOCALIZATION_EPS).unwrap();
    assert_eq!(loc.k, 2);
    assert!((loc.singular_values[0] - s).abs() < 1e-12);
    assert!((loc.singular_values[2] - 1.0).abs() < 1e-12);
}

#[test]
fn zero_superposition_cannot_be_localized() {
    let vac = vacuum_covariance::<f64>(2);
    let state = GaussianState::reference(vac.clone());
    let psi = Superposition::new(vec![Complex64::new(0.0, 0.0)], vec![state], vac).unwrap();
    assert!(matches!(localize(&psi, LOCALIZATION_EPS), Err(Error::ZeroNorm)));
}

#[test]
fn sdpa_round_trip_is_exact_and_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let model = random_model(3, 4, &mut rng).unwrap();
    let prog = program_for(&model, 1, &mut rng);
    let text = export_sdpa(&prog);
    assert_eq!(text, export_sdpa(&prog));
    let data = parse_sdpa(&text).unwrap();
    assert_eq!(data.c.len(), prog.kernel_basis.len() + 1);
    assert_eq!(data.c[0], -1.0);
    let same = |a: &DMatrix<Complex64>, b: &DMatrix<Complex64>| a.iter().zip(b.iter()).all(|(x, y)| x == y);
    assert!(same(&data.hermitian(0), &prog.h1));
    assert!(same(&data.hermitian(1), &prog.i1));
    for (a, k) in prog.kernel_basis.iter().enumerate() {
        assert!(same(&data.hermitian(a + 2), k));
    }

    let mut bare = prog.clone();
    bare.kernel_basis.clear();
    let data = parse_sdpa(&export_sdpa(&bare)).unwrap();
    assert_eq!(data.c, vec![-1.0]);
    assert_eq!(data.matrices.len(), 2);
}

#[test]
fn malformed_sdpa_is_rejected() {
    assert!(parse_sdpa("1\n1\n2\n-1\n0 1 3 1 1.0\n").is_err());
    assert!(parse_sdpa("2\n1\n2\n-1\n").is_err());
}

#[test]
fn certificate_json_round_trip() {
    let cert = Certificate { y0: -1.25, y: vec![0.5, -3.0e-7] };
    assert_eq!(Certificate::from_json(&cert.to_json()).unwrap(), cert);
}

#[test]
fn invalid_inputs_are_reported() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let model = anderson(3, 1.0).unwrap();
    let prog = program_for(&model, 0, &mut rng);
    let short = Certificate { y0: 0.0, y: vec![0.0; prog.kernel_basis.len() + 1] };
    assert!(matches!(verify_certificate(&prog, &short, 0.0), Err(Error::DimensionMismatch(_))));

    let w = DMatrix::<f64>::identity(6, 6);
    let tight = SdpBudget { max_monomials: 10, ..SdpBudget::default() };
    assert!(matches!(build_program(&model, &w, 0, &tight), Err(Error::BudgetExceeded { .. })));
    let skewed = &w * 1.1;
    assert!(matches!(build_program(&model, &skewed, 0, &SdpBudget::default()), Err(Error::InvalidParameter { .. })));
}
