//! Fermionic Gaussian states: covariance matrices, inner products with
//! phase, generalized Wick matrix elements and Wick contractions.
//!
//! The covariance matrix of `φ` is `M_pq = (-i/2)⟨φ|[c_p, c_q]|φ⟩`, so
//! `⟨φ|c_p c_q|φ⟩ = i M_pq` for `p ≠ q`. A state's phase is fixed by its
//! anchor `⟨φ₀|φ⟩` with respect to a reference Gaussian state `φ₀`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::majorana::{mask_indices, Mask};
use crate::scalar::{cabs, cplx, lit, Cplx, Real};
use crate::skew_linear::{pfaffian_in_place, skew_deviation, SKEW_TOLERANCE};

/// Below this `|⟨φ₁|φ₂⟩|²` two states count as orthogonal.
pub const ORTHOGONALITY_THRESHOLD: f64 = 1e-10;
/// Triple products below this magnitude are numerically unusable.
pub const TRIPLE_THRESHOLD: f64 = 1e-14;

/// Real antisymmetric `2n x 2n` Majorana covariance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceMatrix<T: Real> {
    m: DMatrix<T>,
}

impl<T: Real> CovarianceMatrix<T> {
    /// Wraps an antisymmetric matrix of even size.
    pub fn new(m: DMatrix<T>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() % 2 == 1 {
            return Err(Error::DimensionMismatch(format!("covariance must be 2n x 2n, got {}x{}", m.nrows(), m.ncols())));
        }
        let deviation = skew_deviation(&m);
        if !(deviation <= SKEW_TOLERANCE.max(T::default_epsilon().to_f64() * 8.0)) {
            return Err(Error::NotAntisymmetric { deviation });
        }
        Ok(Self { m: antisymmetrize(&m) })
    }

    /// Wraps a matrix already known to be antisymmetric.
    pub fn from_antisymmetric(m: DMatrix<T>) -> Self {
        Self { m }
    }

    pub fn n(&self) -> usize {
        self.m.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.m
    }

    /// `pf(M)`: `±1` for pure states.
    pub fn parity(&self) -> T {
        pf_real(&self.m)
    }

    /// Parity rounded to `±1`.
    pub fn parity_sign(&self) -> T {
        if self.parity() >= T::zero() {
            T::one()
        } else {
            -T::one()
        }
    }

    /// `‖M² + I‖_F`.
    pub fn purity_defect(&self) -> T {
        let d = self.m.nrows();
        (&self.m * &self.m + DMatrix::identity(d, d)).norm()
    }

    /// `R M Rᵀ` for a real orthogonal `R`.
    pub fn rotate(&self, r: &DMatrix<T>) -> Result<Self> {
        rotate(self, r)
    }
}

fn antisymmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m - m.transpose()) * lit::<T>(0.5)
}

fn pf_real<T: Real>(m: &DMatrix<T>) -> T {
    let n = m.nrows();
    let mut buf: Vec<T> = m.transpose().iter().copied().collect();
    pfaffian_in_place(&mut buf, n)
}

fn pf_complex<T: Real>(m: &DMatrix<Cplx<T>>) -> Cplx<T> {
    let n = m.nrows();
    let mut buf: Vec<Cplx<T>> = Vec::with_capacity(n * n);
    let half: T = lit(0.5);
    for i in 0..n {
        for j in 0..n {
            buf.push((m[(i, j)] - m[(j, i)]) * half);
        }
    }
    pfaffian_in_place(&mut buf, n)
}

fn to_complex<T: Real>(m: &DMatrix<T>) -> DMatrix<Cplx<T>> {
    m.map(|v| cplx(v, T::zero()))
}

/// `⊕ⁿ [[0, 1], [-1, 0]]`.
pub fn vacuum_covariance<T: Real>(n: usize) -> CovarianceMatrix<T> {
    fock_covariance(&vec![false; n])
}

/// Covariance of the Fock state `|y⟩`: blocks `(-1)^{y_j} [[0, 1], [-1, 0]]`.
pub fn fock_covariance<T: Real>(y: &[bool]) -> CovarianceMatrix<T> {
    let n = y.len();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for (j, &occ) in y.iter().enumerate() {
        let s = if occ { -T::one() } else { T::one() };
        m[(2 * j, 2 * j + 1)] = s;
        m[(2 * j + 1, 2 * j)] = -s;
    }
    CovarianceMatrix { m }
}

/// `R M Rᵀ`; `R` must be orthogonal to `1e-10`.
pub fn rotate<T: Real>(cov: &CovarianceMatrix<T>, r: &DMatrix<T>) -> Result<CovarianceMatrix<T>> {
    let d = cov.m.nrows();
    if r.nrows() != d || r.ncols() != d {
        return Err(Error::DimensionMismatch(format!("rotation must be {d}x{d}")));
    }
    let defect = (r * r.transpose() - DMatrix::<T>::identity(d, d)).norm();
    let deviation: f64 = defect.to_f64();
    let tol = 1e-10f64.max(T::default_epsilon().to_f64() * 100.0 * d as f64);
    if !(deviation <= tol) {
        return Err(Error::NotOrthogonal { deviation });
    }
    Ok(CovarianceMatrix { m: antisymmetrize(&(r * &cov.m * r.transpose())) })
}

/// Haar-random orthogonal matrix (QR of a Gaussian matrix with sign fix).
pub fn random_orthogonal<T: Real, R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<T> {
    let g = DMatrix::<T>::from_fn(d, d, |_, _| lit(rng.sample::<f64, _>(StandardNormal)));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < T::zero() {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Covariance of a random pure Gaussian state with random parity.
pub fn random_covariance<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> CovarianceMatrix<T> {
    let r = random_orthogonal::<T, _>(2 * n, rng);
    CovarianceMatrix { m: antisymmetrize(&(&r * vacuum_covariance::<T>(n).m * r.transpose())) }
}

/// Covariance of a random pure Gaussian state with prescribed parity.
pub fn random_covariance_with_parity<T: Real, R: Rng + ?Sized>(n: usize, odd: bool, rng: &mut R) -> CovarianceMatrix<T> {
    let mut r = random_orthogonal::<T, _>(2 * n, rng);
    if r.clone().determinant() < T::zero() {
        for i in 0..2 * n {
            r[(i, 0)] = -r[(i, 0)];
        }
    }
    let mut y = vec![false; n];
    if odd {
        y[0] = true;
    }
    CovarianceMatrix { m: antisymmetrize(&(&r * fock_covariance::<T>(&y).m * r.transpose())) }
}

/// `|⟨φ₁|φ₂⟩|² = σ 2⁻ⁿ pf(M₁ + M₂)`, clamped to `[0, 1]`.
pub fn overlap_mag2<T: Real>(m1: &CovarianceMatrix<T>, m2: &CovarianceMatrix<T>) -> T {
    let n = m1.n();
    let sigma = m1.parity_sign();
    let v = sigma * pf_real(&(&m1.m + &m2.m)) / lit::<T>(2f64.powi(n as i32));
    if v < T::zero() {
        T::zero()
    } else if v > T::one() {
        T::one()
    } else {
        v
    }
}

/// Gaussian state with its anchor `⟨φ₀|φ⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState<T: Real> {
    pub cov: CovarianceMatrix<T>,
    pub anchor: Cplx<T>,
}

impl<T: Real> GaussianState<T> {
    /// The reference state itself (anchor 1).
    pub fn reference(cov: CovarianceMatrix<T>) -> Self {
        Self { cov, anchor: cplx(T::one(), T::zero()) }
    }

    /// Fixes the phase so that `⟨φ₀|φ⟩` is real and positive.
    pub fn with_positive_anchor(cov: CovarianceMatrix<T>, reference: &CovarianceMatrix<T>) -> Result<Self> {
        let mag2 = overlap_mag2(reference, &cov);
        if mag2.to_f64() <= ORTHOGONALITY_THRESHOLD {
            return Err(Error::SingularTriple);
        }
        Ok(Self { cov, anchor: cplx(mag2.sqrt(), T::zero()) })
    }

    pub fn n(&self) -> usize {
        self.cov.n()
    }
}

/// `Δ = (-2I + iM₁ - iM₂)(M₁ + M₂)⁻¹`, antisymmetrized; `None` if singular.
pub fn delta_matrix<T: Real>(m1: &DMatrix<T>, m2: &DMatrix<T>) -> Option<DMatrix<Cplx<T>>> {
    let d = m1.nrows();
    let sum = m1 + m2;
    let inv = sum.try_inverse()?;
    let i = cplx(T::zero(), T::one());
    let left = DMatrix::<Cplx<T>>::from_fn(d, d, |r, c| {
        let diag = if r == c { cplx(lit::<T>(-2.0), T::zero()) } else { cplx(T::zero(), T::zero()) };
        diag + i * (m1[(r, c)] - m2[(r, c)])
    });
    let delta = left * to_complex(&inv);
    let half: T = lit(0.5);
    Some(DMatrix::from_fn(d, d, |r, c| (delta[(r, c)] - delta[(c, r)]) * half))
}

/// `⟨φ₀|φ₁⟩⟨φ₁|φ₂⟩⟨φ₂|φ₀⟩ = 4⁻ⁿ pf(M₁+M₂) pf(Δ+M₀)`, falling back to the
/// `6n`-dimensional Pfaffian formula when `M₁ + M₂` is singular.
pub fn triple_product<T: Real>(m0: &CovarianceMatrix<T>, m1: &CovarianceMatrix<T>, m2: &CovarianceMatrix<T>) -> Cplx<T> {
    let n = m0.n();
    if overlap_mag2(m1, m2).to_f64() > ORTHOGONALITY_THRESHOLD {
        if let Some(delta) = delta_matrix(&m1.m, &m2.m) {
            return triple_from_delta(&m0.m, &m1.m, &m2.m, &delta, n);
        }
    }
    triple_product_block(m0, m1, m2)
}

fn triple_from_delta<T: Real>(m0: &DMatrix<T>, m1: &DMatrix<T>, m2: &DMatrix<T>, delta: &DMatrix<Cplx<T>>, n: usize) -> Cplx<T> {
    let pf_sum = pf_real(&(m1 + m2));
    let pf_d = pf_complex(&(delta + to_complex(m0)));
    pf_d * pf_sum / lit::<T>(4f64.powi(n as i32))
}

/// Triple product from the `6n x 6n` block Pfaffian
/// `σ 4⁻ⁿ iⁿ pf[[iM₀, -I, I], [I, iM₁, -I], [-I, I, iM₂]]`.
pub fn triple_product_block<T: Real>(m0: &CovarianceMatrix<T>, m1: &CovarianceMatrix<T>, m2: &CovarianceMatrix<T>) -> Cplx<T> {
    wick2_triple(m0, m1, m2, 0)
}

fn i_pow<T: Real>(n: usize) -> Cplx<T> {
    match n % 4 {
        0 => cplx(T::one(), T::zero()),
        1 => cplx(T::zero(), T::one()),
        2 => cplx(-T::one(), T::zero()),
        _ => cplx(T::zero(), -T::one()),
    }
}

/// `⟨φ₀|φ₁⟩⟨φ₁|c(x)|φ₂⟩⟨φ₂|φ₀⟩ = σ 4⁻ⁿ iⁿ pf(R_x)`.
pub fn wick2_triple<T: Real>(
    m0: &CovarianceMatrix<T>,
    m1: &CovarianceMatrix<T>,
    m2: &CovarianceMatrix<T>,
    x: Mask,
) -> Cplx<T> {
    let n = m0.n();
    let d = 2 * n;
    let sel = mask_indices(x);
    let w = sel.len();
    let size = 3 * d + w;
    let zero = cplx(T::zero(), T::zero());
    let one = cplx(T::one(), T::zero());
    let i = cplx(T::zero(), T::one());
    let mut r = DMatrix::from_element(size, size, zero);
    let in_x: Vec<bool> = (0..d).map(|p| (x >> p) & 1 == 1).collect();
    for p in 0..d {
        for q in 0..d {
            r[(p, q)] = i * m0.m[(p, q)];
            r[(d + p, d + q)] = i * m1.m[(p, q)];
            // i D M₂ D
            if !in_x[p] && !in_x[q] {
                r[(2 * d + p, 2 * d + q)] = i * m2.m[(p, q)];
            }
        }
        r[(p, d + p)] = -one;
        r[(p, 2 * d + p)] = one;
        r[(d + p, p)] = one;
        r[(d + p, 2 * d + p)] = -one;
        r[(2 * d + p, p)] = -one;
        r[(2 * d + p, d + p)] = one;
    }
    for (a, &pa) in sel.iter().enumerate() {
        let row = 3 * d + a;
        for p in 0..d {
            // (Jᵀ + i D M₂ Jᵀ)_{p,a} and its transpose partner
            let mut v = if p == pa { one } else { zero };
            if !in_x[p] {
                v += i * m2.m[(p, pa)];
            }
            r[(2 * d + p, row)] = v;
            r[(row, 2 * d + p)] = -v;
        }
        for (b, &pb) in sel.iter().enumerate() {
            r[(row, 3 * d + b)] = i * m2.m[(pa, pb)];
        }
    }
    let sigma = m0.parity_sign();
    pf_complex(&r) * i_pow::<T>(n) * sigma / lit::<T>(4f64.powi(n as i32))
}

/// `⟨φ₁|φ₂⟩` including phase, from the anchors relative to `reference`.
pub fn overlap<T: Real>(reference: &CovarianceMatrix<T>, phi1: &GaussianState<T>, phi2: &GaussianState<T>) -> Result<Cplx<T>> {
    let mag2: f64 = overlap_mag2(&phi1.cov, &phi2.cov).to_f64();
    let t = triple_product(reference, &phi1.cov, &phi2.cov);
    let t_abs: f64 = cabs(t).to_f64();
    if t_abs < TRIPLE_THRESHOLD {
        if mag2 > ORTHOGONALITY_THRESHOLD {
            return Err(Error::SingularTriple);
        }
        return Ok(cplx(T::zero(), T::zero()));
    }
    Ok(t / (phi1.anchor * phi2.anchor.conj()))
}

/// `⟨φ₁|c(x)|φ₂⟩` for an even-weight mask `x`.
pub fn matrix_element<T: Real>(
    reference: &CovarianceMatrix<T>,
    phi1: &GaussianState<T>,
    phi2: &GaussianState<T>,
    x: Mask,
) -> Result<Cplx<T>> {
    if x.count_ones() % 2 == 1 {
        return Err(Error::OddWeightMask(x.count_ones() as usize));
    }
    let mag2: f64 = overlap_mag2(&phi1.cov, &phi2.cov).to_f64();
    if mag2 > ORTHOGONALITY_THRESHOLD {
        if let Some(delta) = delta_matrix(&phi1.cov.m, &phi2.cov.m) {
            let t = triple_from_delta(&reference.m, &phi1.cov.m, &phi2.cov.m, &delta, phi1.n());
            let t_abs: f64 = cabs(t).to_f64();
            if t_abs < TRIPLE_THRESHOLD {
                return Err(Error::SingularTriple);
            }
            let ov = t / (phi1.anchor * phi2.anchor.conj());
            return Ok(ov * wick3_ratio(&delta, x));
        }
    }
    let t = wick2_triple(reference, &phi1.cov, &phi2.cov, x);
    Ok(t / (phi1.anchor * phi2.anchor.conj()))
}

/// `⟨φ₁|c(x)|φ₂⟩ / ⟨φ₁|φ₂⟩ = pf(i Δ[x]^*)`.
pub fn wick3_ratio<T: Real>(delta: &DMatrix<Cplx<T>>, x: Mask) -> Cplx<T> {
    let sel = mask_indices(x);
    let w = sel.len();
    let i = cplx(T::zero(), T::one());
    let mut buf = Vec::with_capacity(w * w);
    for &p in &sel {
        for &q in &sel {
            buf.push(i * delta[(p, q)].conj());
        }
    }
    pfaffian_in_place(&mut buf, w)
}

/// `⟨φ|L₁L₂⋯L_{2k}|φ⟩` for linear forms `L_i = Σ_q a_iq c_q` (rows of
/// `forms`) in the Gaussian state with covariance `cov`.
pub fn vacuum_contraction<T: Real>(forms: &DMatrix<Cplx<T>>, cov: &CovarianceMatrix<T>) -> Cplx<T> {
    let d = cov.m.nrows();
    let i = cplx(T::zero(), T::one());
    // ⟨c_p c_q⟩ = δ_pq + i M_pq
    let two_point = DMatrix::from_fn(d, d, |p, q| {
        let diag = if p == q { T::one() } else { T::zero() };
        cplx(diag, T::zero()) + i * cov.m[(p, q)]
    });
    contract(forms, &two_point)
}

/// `⟨φ₁|L₁⋯L_k|φ₂⟩ / ⟨φ₁|φ₂⟩`, with two-point function `δ_pq + i Δ*_pq`;
/// `None` when the states are orthogonal.
pub fn transition_contraction<T: Real>(
    forms: &DMatrix<Cplx<T>>,
    m1: &CovarianceMatrix<T>,
    m2: &CovarianceMatrix<T>,
) -> Option<Cplx<T>> {
    if overlap_mag2(m1, m2).to_f64() <= ORTHOGONALITY_THRESHOLD {
        return None;
    }
    let delta = delta_matrix(&m1.m, &m2.m)?;
    let d = delta.nrows();
    let i = cplx(T::zero(), T::one());
    let two_point = DMatrix::from_fn(d, d, |p, q| {
        let diag = if p == q { T::one() } else { T::zero() };
        cplx(diag, T::zero()) + i * delta[(p, q)].conj()
    });
    Some(contract(forms, &two_point))
}

/// Wick contraction `pf(Γ)`, `Γ_ab = (A K Aᵀ)_ab` for `a < b`.
fn contract<T: Real>(forms: &DMatrix<Cplx<T>>, two_point: &DMatrix<Cplx<T>>) -> Cplx<T> {
    let k = forms.nrows();
    if k % 2 == 1 {
        return cplx(T::zero(), T::zero());
    }
    if k == 0 {
        return cplx(T::one(), T::zero());
    }
    let gamma = forms * two_point * forms.transpose();
    let mut buf = Vec::with_capacity(k * k);
    for r in 0..k {
        for c in 0..k {
            buf.push(if r < c {
                gamma[(r, c)]
            } else if r > c {
                -gamma[(c, r)]
            } else {
                cplx(T::zero(), T::zero())
            });
        }
    }
    pfaffian_in_place(&mut buf, k)
}

/// Superposition `Σ_a x_a φ_a` with anchors relative to `reference`.
#[derive(Clone, Debug)]
pub struct Superposition<T: Real> {
    pub coefficients: Vec<Cplx<T>>,
    pub states: Vec<GaussianState<T>>,
    pub reference: CovarianceMatrix<T>,
}

impl<T: Real> Superposition<T> {
    pub fn new(coefficients: Vec<Cplx<T>>, states: Vec<GaussianState<T>>, reference: CovarianceMatrix<T>) -> Result<Self> {
        if states.is_empty() || coefficients.len() != states.len() {
            return Err(Error::DimensionMismatch("one coefficient per state, at least one state".into()));
        }
        let n = reference.n();
        if states.iter().any(|s| s.n() != n) {
            return Err(Error::DimensionMismatch("all states must share the mode count".into()));
        }
        Ok(Self { coefficients, states, reference })
    }

    pub fn n(&self) -> usize {
        self.reference.n()
    }

    pub fn rank(&self) -> usize {
        self.states.len()
    }

    /// Gram matrix `G_ab = ⟨φ_a|φ_b⟩`.
    pub fn gram(&self) -> Result<DMatrix<Cplx<T>>> {
        let chi = self.rank();
        let mut g = DMatrix::from_element(chi, chi, cplx(T::zero(), T::zero()));
        for a in 0..chi {
            g[(a, a)] = cplx(T::one(), T::zero());
            for b in (a + 1)..chi {
                let v = overlap(&self.reference, &self.states[a], &self.states[b])?;
                g[(a, b)] = v;
                g[(b, a)] = v.conj();
            }
        }
        Ok(g)
    }

    /// `⟨ψ|ψ⟩` from the pairwise Gram matrix.
    pub fn norm2(&self) -> Result<T> {
        let g = self.gram()?;
        let x = DVector::from_column_slice(&self.coefficients);
        Ok((x.adjoint() * g * x)[(0, 0)].re)
    }

    /// Same state with anchors taken relative to `new_reference`, whose own
    /// phase is fixed by a positive overlap with the old reference.
    pub fn reanchor(&self, new_reference: &CovarianceMatrix<T>) -> Result<Self> {
        let r = GaussianState::with_positive_anchor(new_reference.clone(), &self.reference)?;
        let mut states = Vec::with_capacity(self.rank());
        for s in &self.states {
            // ⟨r|φ⟩ = triple(φ₀, r, φ) / (⟨φ₀|r⟩ conj⟨φ₀|φ⟩)
            let t = triple_product(&self.reference, &r.cov, &s.cov);
            let anchor = t / (r.anchor * s.anchor.conj());
            states.push(GaussianState { cov: s.cov.clone(), anchor });
        }
        Ok(Self { coefficients: self.coefficients.clone(), states, reference: new_reference.clone() })
    }
}

/// Normalized Majorana covariance `M_pq = -i⟨ψ|c_p c_q|ψ⟩/⟨ψ|ψ⟩` of a
/// superposition.
pub fn covariance_of_superposition<T: Real>(psi: &Superposition<T>) -> Result<CovarianceMatrix<T>> {
    let n = psi.n();
    let d = 2 * n;
    let chi = psi.rank();
    let zero = cplx(T::zero(), T::zero());
    let i = cplx(T::zero(), T::one());
    let mut acc = DMatrix::from_element(d, d, zero);
    let mut norm2 = zero;
    for a in 0..chi {
        for b in 0..chi {
            let w = psi.coefficients[a].conj() * psi.coefficients[b];
            if w == zero {
                continue;
            }
            let (sa, sb) = (&psi.states[a], &psi.states[b]);
            let mag2: f64 = overlap_mag2(&sa.cov, &sb.cov).to_f64();
            let delta = if mag2 > ORTHOGONALITY_THRESHOLD { delta_matrix(&sa.cov.m, &sb.cov.m) } else { None };
            match delta {
                Some(delta) => {
                    let ov = if a == b { cplx(T::one(), T::zero()) } else { overlap(&psi.reference, sa, sb)? };
                    norm2 += w * ov;
                    // ⟨φ_a|c_p c_q|φ_b⟩ = ⟨φ_a|φ_b⟩ · i conj(Δ_pq)
                    for p in 0..d {
                        for q in 0..d {
                            if p != q {
                                acc[(p, q)] += w * ov * i * delta[(p, q)].conj();
                            }
                        }
                    }
                }
                None => {
                    for p in 0..d {
                        for q in (p + 1)..d {
                            let v = matrix_element(&psi.reference, sa, sb, (1 << p) | (1 << q))?;
                            acc[(p, q)] += w * v;
                            acc[(q, p)] -= w * v;
                        }
                    }
                }
            }
        }
    }
    let nrm: f64 = norm2.re.to_f64();
    if !(nrm > 1e-10) {
        return Err(Error::ZeroNorm);
    }
    // M = -i ⟨c_p c_q⟩ / ⟨ψ|ψ⟩
    let m = DMatrix::from_fn(d, d, |p, q| (-i * acc[(p, q)] / norm2).re);
    Ok(CovarianceMatrix { m: antisymmetrize(&m) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_oracle::{gaussian_state_vector, operator_matrix};
    use crate::majorana::MajoranaPoly;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type C = Complex64;

    fn dense_vec(m: &CovarianceMatrix<f64>) -> DVector<C> {
        DVector::from_vec(gaussian_state_vector(m.matrix()))
    }

    /// Dense vector with phase fixed so that `⟨φ₀|φ⟩` equals `anchor`.
    fn phased(v: DVector<C>, v0: &DVector<C>, anchor: C) -> DVector<C> {
        let ov = v0.dotc(&v);
        v * (anchor / ov)
    }

    fn mono(n: usize, x: Mask) -> DMatrix<C> {
        let mut p = MajoranaPoly::new();
        p.add_term(x, C::new(1.0, 0.0));
        operator_matrix(n, &p)
    }

    #[test]
    fn vacuum_and_fock() {
        let v = vacuum_covariance::<f64>(1);
        assert_eq!(v.matrix(), &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        assert_eq!(vacuum_covariance::<f64>(2).parity(), 1.0);
        let f = fock_covariance::<f64>(&[true]);
        assert_eq!(f.matrix(), &DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
        let y = [true, false, true, true];
        assert_eq!(fock_covariance::<f64>(&y).parity(), -1.0);
        assert!(vacuum_covariance::<f64>(3).purity_defect() < 1e-15);
    }

    #[test]
    fn vacuum_matches_dense_vacuum() {
        let v = dense_vec(&vacuum_covariance(3));
        assert!((v[0].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_covariance::<f64, _>(3, &mut rng);
        assert_eq!(rotate(&m, &DMatrix::identity(6, 6)).unwrap(), m);
        let r = random_orthogonal::<f64, _>(6, &mut rng);
        assert!(rotate(&m, &r).unwrap().purity_defect() < 1e-12);
        assert!(matches!(rotate(&m, &(r * 1.1)), Err(Error::NotOrthogonal { .. })));
        // rotation by π in the (1,2) plane flips entries coupling c1, c2 to the rest
        let mut pi = DMatrix::<f64>::identity(4, 4);
        pi[(0, 0)] = -1.0;
        pi[(1, 1)] = -1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_covariance::<f64, _>(2, &mut rng);
        let b = rotate(&a, &pi).unwrap();
        assert_eq!(b.matrix()[(0, 1)], a.matrix()[(0, 1)]);
        assert_eq!(b.matrix()[(0, 2)], -a.matrix()[(0, 2)]);
        assert_eq!(b.matrix()[(2, 3)], a.matrix()[(2, 3)]);
    }

    #[test]
    fn overlap_mag2_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_covariance::<f64, _>(4, &mut rng);
        assert!((overlap_mag2(&m, &m) - 1.0).abs() < 1e-12);
        let a = fock_covariance::<f64>(&[true, false]);
        let b = fock_covariance::<f64>(&[false, true]);
        assert_eq!(overlap_mag2(&a, &b), 0.0);
        for n in 1..=5 {
            let m1 = random_covariance_with_parity::<f64, _>(n, false, &mut rng);
            let m2 = random_covariance_with_parity::<f64, _>(n, false, &mut rng);
            let want = dense_vec(&m1).dotc(&dense_vec(&m2)).norm_sqr();
            assert!((overlap_mag2(&m1, &m2) - want).abs() < 1e-9);
        }
    }

    #[test]
    fn overlap_and_wick_match_dense_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 1..=4 {
            let odd = n % 2 == 0;
            let m0 = random_covariance_with_parity::<f64, _>(n, odd, &mut rng);
            let m1 = random_covariance_with_parity::<f64, _>(n, odd, &mut rng);
            let m2 = random_covariance_with_parity::<f64, _>(n, odd, &mut rng);
            let v0 = dense_vec(&m0);
            let a1 = C::new(0.3, -0.4) * overlap_mag2(&m0, &m1).sqrt() / 0.5;
            let a2 = C::new(-0.6, 0.8) * overlap_mag2(&m0, &m2).sqrt();
            let v1 = phased(dense_vec(&m1), &v0, a1);
            let v2 = phased(dense_vec(&m2), &v0, a2);
            let s1 = GaussianState { cov: m1.clone(), anchor: a1 };
            let s2 = GaussianState { cov: m2.clone(), anchor: a2 };
            let want = v1.dotc(&v2);
            let got = overlap(&m0, &s1, &s2).unwrap();
            assert!((got - want).norm() < 1e-8, "n={n}: {got} vs {want}");
            let block = triple_product_block(&m0, &m1, &m2);
            let direct = triple_product(&m0, &m1, &m2);
            assert!((block - direct).norm() < 1e-9);
            for x in [0b11u64, 0b1001, 0b1111, 0b110110, 0b11111111] {
                if 64 - x.leading_zeros() as usize > 2 * n {
                    continue;
                }
                let want = v1.dotc(&(mono(n, x) * &v2));
                let got = matrix_element(&m0, &s1, &s2, x).unwrap();
                assert!((got - want).norm() < 1e-8, "n={n} x={x:b}: {got} vs {want}");
                let w2 = wick2_triple(&m0, &m1, &m2, x) / (a1 * a2.conj());
                assert!((w2 - want).norm() < 1e-8, "wick2 n={n} x={x:b}: {w2} vs {want}");
            }
        }
    }

    #[test]
    fn four_point_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_covariance::<f64, _>(3, &mut rng);
        let s = GaussianState::reference(m.clone());
        let got = matrix_element(&m, &s, &s, 0b1111).unwrap();
        let mm = m.matrix();
        let want = -(mm[(0, 1)] * mm[(2, 3)] - mm[(0, 2)] * mm[(1, 3)] + mm[(0, 3)] * mm[(1, 2)]);
        assert!((got - C::new(want, 0.0)).norm() < 1e-12);
        assert!((matrix_element(&m, &s, &s, 0).unwrap() - C::new(1.0, 0.0)).norm() < 1e-12);
        assert!(matches!(matrix_element(&m, &s, &s, 0b111), Err(Error::OddWeightMask(3))));
    }

    /// |00⟩ and |11⟩ = a₁†a₂†|00⟩ anchored to a random even reference.
    fn vacuum_and_pair(seed: u64) -> (CovarianceMatrix<f64>, GaussianState<f64>, GaussianState<f64>, DVector<C>, DVector<C>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m0 = random_covariance_with_parity::<f64, _>(2, false, &mut rng);
        let v0 = dense_vec(&m0);
        let mut e00 = DVector::zeros(4);
        e00[0] = C::new(1.0, 0.0);
        let mut e11 = DVector::zeros(4);
        e11[3] = C::new(1.0, 0.0);
        let s00 = GaussianState { cov: vacuum_covariance(2), anchor: v0.dotc(&e00) };
        let s11 = GaussianState { cov: fock_covariance(&[true, true]), anchor: v0.dotc(&e11) };
        (m0, s00, s11, e00, e11)
    }

    #[test]
    fn orthogonal_pair_uses_block_path() {
        let (m0, s00, s11, e00, e11) = vacuum_and_pair(11);
        assert_eq!(overlap(&m0, &s00, &s11).unwrap(), C::new(0.0, 0.0));
        for x in [0b0101u64, 0b0110, 0b1001, 0b1010, 0b1111, 0b0011] {
            let want = e00.dotc(&(mono(2, x) * &e11));
            let got = matrix_element(&m0, &s00, &s11, x).unwrap();
            assert!((got - want).norm() < 1e-10, "x={x:b}: {got} vs {want}");
        }
    }

    #[test]
    fn contractions() {
        let vac = vacuum_covariance::<f64>(2);
        let one = C::new(1.0, 0.0);
        let zero = C::new(0.0, 0.0);
        let c1 = [one, zero, zero, zero];
        let forms = DMatrix::from_fn(2, 4, |_, q| c1[q]);
        assert!((vacuum_contraction(&forms, &vac) - one).norm() < 1e-15);
        // b = a₁ = (c1 + i c2)/2
        let b = [C::new(0.5, 0.0), C::new(0.0, 0.5), zero, zero];
        let bd = [C::new(0.5, 0.0), C::new(0.0, -0.5), zero, zero];
        let f = DMatrix::from_fn(2, 4, |r, q| if r == 0 { b[q] } else { bd[q] });
        assert!((vacuum_contraction(&f, &vac) - one).norm() < 1e-15);
        let f = DMatrix::from_fn(2, 4, |r, q| if r == 0 { bd[q] } else { b[q] });
        assert!(vacuum_contraction(&f, &vac).norm() < 1e-15);
        let odd = DMatrix::from_fn(3, 4, |_, q| c1[q]);
        assert_eq!(vacuum_contraction(&odd, &vac), zero);
    }

    #[test]
    fn contraction_of_random_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in 2..=4 {
            let m = random_covariance::<f64, _>(n, &mut rng);
            let v = dense_vec(&m);
            let forms = DMatrix::from_fn(6, 2 * n, |_, _| C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let mut op = DMatrix::<C>::identity(1 << n, 1 << n);
            for r in 0..6 {
                let row: Vec<C> = forms.row(r).iter().copied().collect();
                op = op * operator_matrix(n, &MajoranaPoly::linear(&row));
            }
            let want = v.dotc(&(op * &v));
            let got = vacuum_contraction(&forms, &m);
            assert!((got - want).norm() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn transition_contraction_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for n in 2..=4 {
            let odd = n % 2 == 1;
            let m1 = random_covariance_with_parity::<f64, _>(n, odd, &mut rng);
            let m2 = random_covariance_with_parity::<f64, _>(n, odd, &mut rng);
            let (v1, v2) = (dense_vec(&m1), dense_vec(&m2));
            for k in [2, 3, 4] {
                let forms =
                    DMatrix::from_fn(k, 2 * n, |_, _| C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
                let mut op = DMatrix::<C>::identity(1 << n, 1 << n);
                for r in 0..k {
                    let row: Vec<C> = forms.row(r).iter().copied().collect();
                    op = op * operator_matrix(n, &MajoranaPoly::linear(&row));
                }
                let want = v1.dotc(&(op * &v2)) / v1.dotc(&v2);
                let got = transition_contraction(&forms, &m1, &m2).unwrap();
                assert!((got - want).norm() < 1e-9, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn superposition_covariance_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 3;
        let m0 = random_covariance_with_parity::<f64, _>(n, false, &mut rng);
        let v0 = dense_vec(&m0);
        let mut states = Vec::new();
        let mut vecs = Vec::new();
        for _ in 0..3 {
            let m = random_covariance_with_parity::<f64, _>(n, false, &mut rng);
            let s = GaussianState::with_positive_anchor(m, &m0).unwrap();
            vecs.push(phased(dense_vec(&s.cov), &v0, s.anchor));
            states.push(s);
        }
        let coeffs = vec![C::new(0.5, 0.2), C::new(-0.3, 0.7), C::new(0.1, -0.4)];
        let psi = Superposition::new(coeffs.clone(), states, m0).unwrap();
        let mut v = DVector::zeros(1 << n);
        for (c, w) in coeffs.iter().zip(&vecs) {
            v += w * *c;
        }
        assert!((psi.norm2().unwrap() - v.norm_squared()).abs() < 1e-9);
        let cov = covariance_of_superposition(&psi).unwrap();
        let nrm = v.norm_squared();
        for p in 0..2 * n {
            for q in 0..2 * n {
                if p == q {
                    continue;
                }
                let cpq = mono(n, 1 << p) * mono(n, 1 << q);
                let want = (C::new(0.0, -1.0) * v.dotc(&(cpq * &v)) / nrm).re;
                assert!((cov.matrix()[(p, q)] - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn equal_superposition_of_vacuum_and_pair() {
        let (m0, s00, s11, e00, e11) = vacuum_and_pair(12);
        let one = C::new(1.0, 0.0);
        let psi = Superposition::new(vec![one, one], vec![s00, s11], m0).unwrap();
        let v = (&e00 + &e11) * C::new(1.0 / 2f64.sqrt(), 0.0);
        let cov = covariance_of_superposition(&psi).unwrap();
        for p in 0..4 {
            for q in 0..4 {
                if p != q {
                    let cpq = mono(2, 1 << p) * mono(2, 1 << q);
                    let want = (C::new(0.0, -1.0) * v.dotc(&(cpq * &v))).re;
                    assert!((cov.matrix()[(p, q)] - want).abs() < 1e-10);
                }
            }
        }
        assert!(cov.matrix()[(0, 1)].abs() < 1e-12 && cov.matrix()[(2, 3)].abs() < 1e-12);
        let sv = cov.matrix().clone().svd(false, false).singular_values;
        assert!(sv.iter().all(|&s| s <= 1.0 + 1e-8));
    }

    #[test]
    fn reanchor_preserves_overlaps() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 3;
        let m0 = random_covariance_with_parity::<f64, _>(n, false, &mut rng);
        let states: Vec<_> = (0..3)
            .map(|_| GaussianState::with_positive_anchor(random_covariance_with_parity::<f64, _>(n, false, &mut rng), &m0).unwrap())
            .collect();
        let psi = Superposition::new(vec![C::new(1.0, 0.0); 3], states, m0).unwrap();
        let g1 = psi.gram().unwrap();
        let other = random_covariance_with_parity::<f64, _>(n, false, &mut rng);
        let g2 = psi.reanchor(&other).unwrap().gram().unwrap();
        assert!((g1 - g2).norm() < 1e-9);
    }

    #[test]
    fn generic_over_f32() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let m = random_covariance::<f32, _>(3, &mut rng);
        assert!((overlap_mag2(&m, &m) - 1.0).abs() < 1e-4);
        assert!(m.purity_defect() < 1e-4);
    }
}
