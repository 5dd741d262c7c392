//! Exact reference computations: Jordan–Wigner Pauli representation,
//! dense and Lanczos ground states, and ground-state diagnostics.
//!
//! Majoranas map to `c_{2a-1} = Z_{<a} X_a`, `c_{2a} = Z_{<a} Y_a`. State
//! vectors use the Fock ordering `(a₁†)^{x₁}⋯(a_n†)^{x_n}|0ⁿ⟩ ↦ |x⟩`, with
//! bit `j-1` of the basis index holding `x_j`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{dense_lowest, hermitian_spectrum, lanczos_lowest, LanczosConfig};
use crate::majorana::{mask_indices, MajoranaPoly, Mask};
use crate::model::ImpurityModel;
use crate::skew_linear::CanonicalModes;

/// Largest mode count for dense diagonalization.
pub const DENSE_LIMIT: usize = 12;
/// Largest mode count for Lanczos.
pub const LANCZOS_LIMIT: usize = 20;
/// Start-vector seed of the even sector; the odd sector uses the next value.
pub const LANCZOS_SEED: u64 = 0x5eed;

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Pauli string `X^x Z^z` (bit `a` acts on qubit `a+1`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    pub x: u64,
    pub z: u64,
}

impl PauliString {
    pub const IDENTITY: PauliString = PauliString { x: 0, z: 0 };

    /// `(X^{x₁}Z^{z₁})(X^{x₂}Z^{z₂}) = sign · X^{x₁⊕x₂} Z^{z₁⊕z₂}`.
    #[inline]
    pub fn mul(self, other: PauliString) -> (f64, PauliString) {
        let sign = if (self.z & other.x).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        (sign, PauliString { x: self.x ^ other.x, z: self.z ^ other.z })
    }

    /// Standard label over `n` qubits (`I`, `X`, `Y`, `Z`, qubit 1 first)
    /// together with the phase `φ` such that `X^x Z^z = φ · label`.
    pub fn label(self, n: usize) -> (Complex64, String) {
        let mut phase = ONE;
        let mut s = String::with_capacity(n);
        for a in 0..n {
            let (xb, zb) = ((self.x >> a) & 1, (self.z >> a) & 1);
            s.push(match (xb, zb) {
                (0, 0) => 'I',
                (1, 0) => 'X',
                (0, 1) => 'Z',
                _ => {
                    // XZ = -iY
                    phase *= -I;
                    'Y'
                }
            });
        }
        (phase, s)
    }
}

/// `c_{p+1}` as `phase · X^x Z^z`.
pub fn majorana_pauli(p: usize) -> (Complex64, PauliString) {
    let a = p / 2;
    let below = (1u64 << a) - 1;
    if p % 2 == 0 {
        (ONE, PauliString { x: 1 << a, z: below })
    } else {
        // Z_{<a} Y_a = i X_a Z_{≤a}
        (I, PauliString { x: 1 << a, z: below | (1 << a) })
    }
}

/// `c(x)` as `phase · X^x Z^z`.
pub fn monomial_pauli(mask: Mask) -> (Complex64, PauliString) {
    let mut phase = ONE;
    let mut acc = PauliString::IDENTITY;
    for p in mask_indices(mask) {
        let (ph, ps) = majorana_pauli(p);
        let (s, prod) = acc.mul(ps);
        phase *= ph * s;
        acc = prod;
    }
    (phase, acc)
}

/// Operator `Σ coeff · X^x Z^z` on `n` qubits.
#[derive(Clone, Debug)]
pub struct QubitHamiltonian {
    pub n: usize,
    pub terms: Vec<(PauliString, Complex64)>,
}

impl QubitHamiltonian {
    pub fn from_poly(n: usize, poly: &MajoranaPoly) -> Self {
        let mut merged: std::collections::BTreeMap<PauliString, Complex64> = Default::default();
        for (&mask, &c) in &poly.terms {
            let (phase, ps) = monomial_pauli(mask);
            *merged.entry(ps).or_insert(ZERO) += phase * c;
        }
        let terms = merged.into_iter().filter(|(_, c)| c.norm() > 0.0).collect();
        Self { n, terms }
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    /// `out = H v` on the full `2ⁿ` space.
    pub fn apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|x| *x = ZERO);
        for &(ps, c) in &self.terms {
            for (s, &amp) in v.iter().enumerate() {
                if amp == ZERO {
                    continue;
                }
                let sign = if (ps.z & s as u64).count_ones() % 2 == 0 { c } else { -c };
                out[s ^ ps.x as usize] += sign * amp;
            }
        }
    }

    /// `out = H v` within the parity sector `parity` (0 even, 1 odd); sector
    /// index `k` stands for the full index with the top bit restoring parity.
    pub fn apply_sector(&self, parity: u32, v: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        out.iter_mut().for_each(|x| *x = ZERO);
        let low = (1usize << (n - 1)) - 1;
        for &(ps, c) in &self.terms {
            for (k, &amp) in v.iter().enumerate() {
                if amp == ZERO {
                    continue;
                }
                let s = sector_to_full(n, parity, k);
                let sign = if (ps.z & s as u64).count_ones() % 2 == 0 { c } else { -c };
                out[(s ^ ps.x as usize) & low] += sign * amp;
            }
        }
    }

    pub fn dense(&self) -> DMatrix<Complex64> {
        let dim = self.dim();
        let mut m = DMatrix::zeros(dim, dim);
        for &(ps, c) in &self.terms {
            for s in 0..dim {
                let sign = if (ps.z & s as u64).count_ones() % 2 == 0 { c } else { -c };
                m[(s ^ ps.x as usize, s)] += sign;
            }
        }
        m
    }

    pub fn dense_sector(&self, parity: u32) -> DMatrix<Complex64> {
        let n = self.n;
        let dim = 1usize << (n - 1);
        let low = dim - 1;
        let mut m = DMatrix::zeros(dim, dim);
        for &(ps, c) in &self.terms {
            for k in 0..dim {
                let s = sector_to_full(n, parity, k);
                let sign = if (ps.z & s as u64).count_ones() % 2 == 0 { c } else { -c };
                m[((s ^ ps.x as usize) & low, k)] += sign;
            }
        }
        m
    }
}

#[inline]
fn sector_to_full(n: usize, parity: u32, k: usize) -> usize {
    let top = (k.count_ones() + parity) & 1;
    k | ((top as usize) << (n - 1))
}

/// Jordan–Wigner image of the model Hamiltonian, constants included.
pub fn to_qubits(model: &ImpurityModel) -> QubitHamiltonian {
    QubitHamiltonian::from_poly(model.n(), &model.hamiltonian_poly())
}

/// Dense matrix of a Majorana polynomial on `n` modes.
pub fn operator_matrix(n: usize, poly: &MajoranaPoly) -> DMatrix<Complex64> {
    QubitHamiltonian::from_poly(n, poly).dense()
}

/// Exact diagonalization method.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Dense,
    Lanczos,
}

/// Ground energy and a normalized ground state on the full `2ⁿ` space.
#[derive(Clone, Debug)]
pub struct GroundState {
    pub energy: f64,
    pub vector: Vec<Complex64>,
    pub parity: u32,
    pub residual: f64,
}

/// Smallest eigenvalue of the model Hamiltonian over both parity sectors.
pub fn ground_energy_exact(model: &ImpurityModel, method: Method) -> Result<GroundState> {
    ground_state_poly(model.n(), &model.hamiltonian_poly(), method)
}

/// Ground state of an even Hermitian Majorana polynomial.
pub fn ground_state_poly(n: usize, poly: &MajoranaPoly, method: Method) -> Result<GroundState> {
    let limit = match method {
        Method::Dense => DENSE_LIMIT,
        Method::Lanczos => LANCZOS_LIMIT,
    };
    if n > limit {
        return Err(Error::DimensionTooLarge { what: "exact diagonalization modes".into(), dim: n, limit });
    }
    let qh = QubitHamiltonian::from_poly(n, poly);
    if n == 1 || (method == Method::Dense && n <= 2) {
        let pair = dense_lowest(&qh.dense());
        let parity = parity_of(&pair.vector);
        return Ok(GroundState { energy: pair.value, vector: pair.vector, parity, residual: pair.residual });
    }
    let mut best: Option<GroundState> = None;
    for parity in 0..2u32 {
        let pair = match method {
            Method::Dense => dense_lowest(&qh.dense_sector(parity)),
            Method::Lanczos => lanczos_lowest(
                1 << (n - 1),
                |v, out| qh.apply_sector(parity, v, out),
                LanczosConfig { seed: LANCZOS_SEED + parity as u64, ..LanczosConfig::default() },
            ),
        };
        if best.as_ref().map_or(true, |b| pair.value < b.energy) {
            let mut full = vec![ZERO; 1 << n];
            for (k, &a) in pair.vector.iter().enumerate() {
                full[sector_to_full(n, parity, k)] = a;
            }
            best = Some(GroundState { energy: pair.value, vector: full, parity, residual: pair.residual });
        }
    }
    Ok(best.expect("two sectors examined"))
}

fn parity_of(v: &[Complex64]) -> u32 {
    let odd: f64 = v.iter().enumerate().filter(|(s, _)| s.count_ones() % 2 == 1).map(|(_, a)| a.norm_sqr()).sum();
    u32::from(odd > 0.5)
}

/// Full sorted spectrum of the model Hamiltonian (dense, `n ≤ 12`).
pub fn spectrum(model: &ImpurityModel) -> Result<Vec<f64>> {
    if model.n() > DENSE_LIMIT {
        return Err(Error::DimensionTooLarge { what: "dense spectrum modes".into(), dim: model.n(), limit: DENSE_LIMIT });
    }
    Ok(hermitian_spectrum(&to_qubits(model).dense()))
}

/// State vector of the Gaussian state with covariance `M`, as the ground
/// state of `(i/4) Σ M_pq c_p c_q` (global phase arbitrary).
pub fn gaussian_state_vector(m: &DMatrix<f64>) -> Vec<Complex64> {
    let n = m.nrows() / 2;
    let mut poly = MajoranaPoly::new();
    for p in 0..2 * n {
        for q in (p + 1)..2 * n {
            poly.add_term((1 << p) | (1 << q), Complex64::new(0.0, 0.5 * m[(p, q)]));
        }
    }
    dense_lowest(&operator_matrix(n, &poly)).vector
}

/// `c_{p+1} ψ` for every Majorana.
fn majorana_images(n: usize, psi: &[Complex64]) -> Vec<Vec<Complex64>> {
    (0..2 * n)
        .map(|p| {
            let (phase, ps) = majorana_pauli(p);
            let mut out = vec![ZERO; psi.len()];
            for (s, &a) in psi.iter().enumerate() {
                let sign = if (ps.z & s as u64).count_ones() % 2 == 0 { phase } else { -phase };
                out[s ^ ps.x as usize] += sign * a;
            }
            out
        })
        .collect()
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `C_jk = ⟨ψ|b_j† b_k|ψ⟩` over the canonical modes.
pub fn mode_covariance(psi: &[Complex64], modes: &CanonicalModes<f64>) -> DMatrix<Complex64> {
    let n = modes.n_modes();
    let images = majorana_images(n, psi);
    let b_psi: Vec<Vec<Complex64>> = (0..n)
        .map(|j| {
            let u = modes.annihilator(j);
            let mut v = vec![ZERO; psi.len()];
            for (q, img) in images.iter().enumerate() {
                let c = u[q];
                v.iter_mut().zip(img).for_each(|(acc, x)| *acc += c * x);
            }
            v
        })
        .collect();
    DMatrix::from_fn(n, n, |j, k| inner(&b_psi[j], &b_psi[k]))
}

/// Eigenvalues of `C` in decreasing order.
pub fn covariance_spectrum(psi: &[Complex64], modes: &CanonicalModes<f64>) -> Vec<f64> {
    let c = mode_covariance(psi, modes);
    let mut e: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    e.sort_by(|a, b| b.partial_cmp(a).unwrap());
    e
}

/// Projector onto `ℒ = {x : b(x) has no component on c_1..c_m}`.
pub fn impurity_free_projector(modes: &CanonicalModes<f64>, m: usize) -> DMatrix<Complex64> {
    let n = modes.n_modes();
    // x ∈ ℒ iff Σ_j x_j u_jp = 0, i.e. x ⟂ conj(T) column-wise
    let t_conj = DMatrix::from_fn(n, m, |j, p| modes.annihilator(j)[p].conj());
    let mut proj = DMatrix::<Complex64>::identity(n, n);
    if m == 0 || n == 0 {
        return proj;
    }
    let svd = t_conj.svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.max();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > 1e-10 * smax.max(1.0) {
            let col = u.column(i);
            proj -= &col * col.adjoint();
        }
    }
    proj
}

/// `(‖Λ(CE − EC)Λ‖_F, max(0, λ_max((ΛCEΛ + h.c.)/2)))`.
pub fn sdp_feasibility_residuals(
    c: &DMatrix<Complex64>,
    e: &DMatrix<Complex64>,
    lambda: &DMatrix<Complex64>,
) -> (f64, f64) {
    let comm = lambda * (c * e - e * c) * lambda;
    let ce = lambda * c * e * lambda;
    let sym = (&ce + ce.adjoint()) * Complex64::new(0.5, 0.0);
    let top = SymmetricEigen::new(sym).eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (comm.norm(), top.max(0.0))
}

/// Ground-state structure diagnostics of one model.
#[derive(Clone, Debug)]
pub struct Diagnostics {
    pub commutator_residual: f64,
    pub psd_violation: f64,
    pub covariance_spectrum: Vec<f64>,
}

/// Computes the CE-conditions and covariance spectrum for a ground state.
pub fn ground_state_diagnostics(model: &ImpurityModel, psi: &[Complex64]) -> Result<Diagnostics> {
    let modes = model.canonical_modes()?;
    let c = mode_covariance(psi, &modes);
    let e = DMatrix::from_fn(modes.n_modes(), modes.n_modes(), |j, k| {
        if j == k {
            Complex64::new(modes.energies[j], 0.0)
        } else {
            ZERO
        }
    });
    let lambda = impurity_free_projector(&modes, model.m());
    let (commutator_residual, psd_violation) = sdp_feasibility_residuals(&c, &e, &lambda);
    let mut spectrum: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    spectrum.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(Diagnostics { commutator_residual, psd_violation, covariance_spectrum: spectrum })
}

/// `‖(I − Q_τ)ψ‖` where `Q_τ` projects onto eigenvectors of the
/// normalized bath Hamiltonian with energy at most `τ`.
pub fn bath_energy_tail(psi: &[Complex64], model: &ImpurityModel, tau: f64) -> Result<f64> {
    Ok(bath_energy_tails(psi, model, &[tau])?[0])
}

/// [`bath_energy_tail`] for several cutoffs with one diagonalization.
pub fn bath_energy_tails(psi: &[Complex64], model: &ImpurityModel, taus: &[f64]) -> Result<Vec<f64>> {
    if model.n() > DENSE_LIMIT {
        return Err(Error::DimensionTooLarge { what: "bath eigenbasis modes".into(), dim: model.n(), limit: DENSE_LIMIT });
    }
    let bath = model.without_impurity();
    let mut poly = bath.bath_poly();
    poly.add_term(0, Complex64::new(bath.e0(), 0.0));
    let eig = SymmetricEigen::new(operator_matrix(model.n(), &poly));
    let v = DVector::from_column_slice(psi);
    let weights: Vec<(f64, f64)> = (0..eig.eigenvalues.len())
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).dotc(&v).norm_sqr()))
        .collect();
    Ok(taus
        .iter()
        .map(|&tau| weights.iter().filter(|(e, _)| *e > tau + 1e-9).map(|(_, w)| w).sum::<f64>().sqrt())
        .collect())
}

/// `2 exp[−(τ/4) ln(τ/(8em))]`, meaningful for `τ ≥ 8em`.
pub fn bath_tail_bound(tau: f64, m: usize) -> f64 {
    2.0 * (-(tau / 4.0) * (tau / (8.0 * std::f64::consts::E * m as f64)).ln()).exp()
}
