//! Rank-χ variational minimization over superpositions of Gaussian states
//! by a greedy random walk on `SO(2n)^χ`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{
    delta_matrix, fock_covariance, matrix_element, overlap, overlap_mag2, random_covariance_with_parity, random_orthogonal,
    CovarianceMatrix, GaussianState, Superposition, ORTHOGONALITY_THRESHOLD,
};
use crate::majorana::{mask_indices, Mask, MajoranaPoly};
use crate::model::ImpurityModel;
use crate::skew_linear::pfaffian_in_place;

type C = Complex64;

/// Eigenvalues of the Gram matrix below this are projected out.
pub const GRAM_FLOOR: f64 = 1e-10;

/// Hamiltonian split into a constant, quadratic terms and higher monomials.
#[derive(Clone, Debug)]
pub struct HamiltonianTerms {
    pub n: usize,
    pub constant: f64,
    /// `(p, q, coeff)` for `coeff · c_p c_q` with `p < q`.
    pub quadratic: Vec<(usize, usize, C)>,
    pub higher: Vec<(Vec<usize>, C)>,
}

impl HamiltonianTerms {
    pub fn from_poly(n: usize, poly: &MajoranaPoly) -> Self {
        let mut constant = 0.0;
        let mut quadratic = Vec::new();
        let mut higher = Vec::new();
        for (&mask, &coeff) in &poly.terms {
            match mask.count_ones() {
                0 => constant += coeff.re,
                2 => {
                    let idx = mask_indices(mask);
                    quadratic.push((idx[0], idx[1], coeff));
                }
                _ => higher.push((mask_indices(mask), coeff)),
            }
        }
        Self { n, constant, quadratic, higher }
    }

    pub fn from_model(model: &ImpurityModel) -> Self {
        Self::from_poly(model.n(), &model.hamiltonian_poly())
    }

    /// `Σ_x g_x pf(K[x])` where `two_point(p, q) = K_pq` is the
    /// antisymmetric contraction matrix.
    fn evaluate<F: Fn(usize, usize) -> C>(&self, two_point: F) -> C {
        let mut e = C::new(self.constant, 0.0);
        for &(p, q, g) in &self.quadratic {
            e += g * two_point(p, q);
        }
        let mut buf = Vec::new();
        for (idx, g) in &self.higher {
            let w = idx.len();
            let pf = if w == 4 {
                let k = |a: usize, b: usize| two_point(idx[a], idx[b]);
                k(0, 1) * k(2, 3) - k(0, 2) * k(1, 3) + k(0, 3) * k(1, 2)
            } else {
                buf.clear();
                for a in 0..w {
                    for b in 0..w {
                        buf.push(if a < b {
                            two_point(idx[a], idx[b])
                        } else if a > b {
                            -two_point(idx[b], idx[a])
                        } else {
                            C::new(0.0, 0.0)
                        });
                    }
                }
                pfaffian_in_place(&mut buf, w)
            };
            e += g * pf;
        }
        e
    }

    /// `⟨φ|H|φ⟩` for the Gaussian state with covariance `m`.
    pub fn gaussian_energy(&self, m: &DMatrix<f64>) -> f64 {
        self.evaluate(|p, q| C::new(0.0, m[(p, q)])).re
    }

    /// `⟨φ₁|H|φ₂⟩/⟨φ₁|φ₂⟩` from `Δ` of the pair.
    pub fn ratio(&self, delta: &DMatrix<C>) -> C {
        self.evaluate(|p, q| C::new(0.0, 1.0) * delta[(p, q)].conj())
    }
}

/// `⟨φ|H|φ⟩` for a pure Gaussian state.
pub fn energy_rank1(cov: &CovarianceMatrix<f64>, model: &ImpurityModel) -> f64 {
    HamiltonianTerms::from_model(model).gaussian_energy(cov.matrix())
}

/// Superposition of `χ` Gaussian states `M_a = R_a M_base R_aᵀ`, with
/// `M_base` the vacuum (even) or the one-particle Fock state (odd).
#[derive(Clone, Debug)]
pub struct VariationalAnsatz {
    pub rotations: Vec<DMatrix<f64>>,
    pub odd: bool,
    /// Covariance of the reference state used for anchors.
    pub reference: CovarianceMatrix<f64>,
}

impl VariationalAnsatz {
    pub fn chi(&self) -> usize {
        self.rotations.len()
    }

    pub fn n(&self) -> usize {
        self.reference.n()
    }

    pub fn base(&self) -> CovarianceMatrix<f64> {
        base_covariance(self.n(), self.odd)
    }

    pub fn covariances(&self) -> Vec<CovarianceMatrix<f64>> {
        let base = self.base();
        self.rotations.iter().map(|r| conjugate(&base, r)).collect()
    }

    /// States anchored so that `⟨φ₀|φ_a⟩ ≥ 0`.
    pub fn states(&self) -> Result<Vec<GaussianState<f64>>> {
        self.covariances().into_iter().map(|m| GaussianState::with_positive_anchor(m, &self.reference)).collect()
    }

    /// Random ansatz of the given parity; the reference is the ground
    /// state of the bath in that parity sector.
    pub fn random<R: Rng + ?Sized>(model: &ImpurityModel, chi: usize, odd: bool, rng: &mut R) -> Result<Self> {
        let d = 2 * model.n();
        let rotations = (0..chi.max(1)).map(|_| random_rotation(d, rng)).collect();
        Ok(Self { rotations, odd, reference: bath_reference(model, odd)? })
    }
}

fn base_covariance(n: usize, odd: bool) -> CovarianceMatrix<f64> {
    let mut y = vec![false; n];
    if odd && n > 0 {
        y[0] = true;
    }
    fock_covariance(&y)
}

fn conjugate(m: &CovarianceMatrix<f64>, r: &DMatrix<f64>) -> CovarianceMatrix<f64> {
    let x = r * m.matrix() * r.transpose();
    CovarianceMatrix::from_antisymmetric((&x - x.transpose()) * 0.5)
}

/// Haar-random element of `SO(d)`.
pub fn random_rotation<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let mut r = random_orthogonal::<f64, _>(d, rng);
    if r.clone().determinant() < 0.0 {
        r.column_mut(0).neg_mut();
    }
    r
}

/// Lowest-energy Gaussian state of `H₀` with the requested parity.
pub fn bath_reference(model: &ImpurityModel, odd: bool) -> Result<CovarianceMatrix<f64>> {
    let modes = model.canonical_modes()?;
    let n = model.n();
    // M₀ = Wᵀ (⊕ blocks) W maps the canonical vacuum back to the c-frame
    let w = &modes.rotation;
    let ground = w.transpose() * base_covariance(n, false).matrix() * w;
    let ground = CovarianceMatrix::from_antisymmetric((&ground - ground.transpose()) * 0.5);
    if (ground.parity() < 0.0) == odd {
        return Ok(ground);
    }
    // flip the mode of highest energy
    let mut y = vec![false; n];
    if let Some(last) = y.last_mut() {
        *last = true;
    }
    let m = w.transpose() * fock_covariance::<f64>(&y).matrix() * w;
    Ok(CovarianceMatrix::from_antisymmetric((&m - m.transpose()) * 0.5))
}

/// Smallest generalized eigenvalue of `(F, G)` after projecting out Gram
/// eigenvalues below the floor, with its coefficient vector.
pub fn generalized_lowest(f: &DMatrix<C>, g: &DMatrix<C>) -> Result<(f64, Vec<C>)> {
    let eig = SymmetricEigen::new(g.clone());
    let keep: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] > GRAM_FLOOR).collect();
    if keep.is_empty() {
        return Err(Error::DegenerateGram);
    }
    let chi = g.nrows();
    let b = DMatrix::from_fn(chi, keep.len(), |r, c| {
        let i = keep[c];
        eig.eigenvectors[(r, i)] / eig.eigenvalues[i].sqrt()
    });
    let reduced = b.adjoint() * f * &b;
    let reduced = (&reduced + reduced.adjoint()) * C::new(0.5, 0.0);
    let inner = SymmetricEigen::new(reduced);
    let (k, &value) =
        inner.eigenvalues.iter().enumerate().min_by(|x, y| x.1.partial_cmp(y.1).unwrap()).expect("nonempty");
    let coeffs = &b * inner.eigenvectors.column(k);
    Ok((value, coeffs.iter().copied().collect()))
}

/// Energy and coefficients (anchored convention) of the best state in the
/// span of the ansatz.
pub fn objective(ansatz: &VariationalAnsatz, model: &ImpurityModel) -> Result<(f64, Vec<C>)> {
    let terms = HamiltonianTerms::from_model(model);
    let (g, f) = span_matrices(&ansatz.reference, &ansatz.states()?, &terms)?;
    generalized_lowest(&f, &g)
}

/// Gram and Hamiltonian matrices `G_ab = ⟨φ_a|φ_b⟩`, `F_ab = ⟨φ_a|H|φ_b⟩`.
pub fn span_matrices(
    reference: &CovarianceMatrix<f64>,
    states: &[GaussianState<f64>],
    terms: &HamiltonianTerms,
) -> Result<(DMatrix<C>, DMatrix<C>)> {
    let chi = states.len();
    let zero = C::new(0.0, 0.0);
    let mut g = DMatrix::from_element(chi, chi, zero);
    let mut f = DMatrix::from_element(chi, chi, zero);
    for a in 0..chi {
        g[(a, a)] = C::new(1.0, 0.0);
        f[(a, a)] = C::new(terms.gaussian_energy(states[a].cov.matrix()), 0.0);
        for b in (a + 1)..chi {
            let (sa, sb) = (&states[a], &states[b]);
            let mag2 = overlap_mag2(&sa.cov, &sb.cov);
            let delta = if mag2 > ORTHOGONALITY_THRESHOLD { delta_matrix(sa.cov.matrix(), sb.cov.matrix()) } else { None };
            let (gab, fab) = match delta {
                Some(delta) => {
                    let ov = overlap(reference, sa, sb)?;
                    (ov, ov * terms.ratio(&delta))
                }
                None => {
                    let mut v = C::new(terms.constant, 0.0) * overlap(reference, sa, sb)?;
                    for &(p, q, coeff) in &terms.quadratic {
                        v += coeff * matrix_element(reference, sa, sb, (1 << p) | (1 << q))?;
                    }
                    for (idx, coeff) in &terms.higher {
                        let mask: Mask = idx.iter().fold(0, |acc, &p| acc | (1 << p));
                        v += coeff * matrix_element(reference, sa, sb, mask)?;
                    }
                    (overlap(reference, sa, sb)?, v)
                }
            };
            g[(a, b)] = gab;
            g[(b, a)] = gab.conj();
            f[(a, b)] = fab;
            f[(b, a)] = fab.conj();
        }
    }
    Ok((g, f))
}

/// Step proposal of the random walk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Proposal {
    /// `exp(θ′A)` with `A` a Gaussian antisymmetric matrix of unit norm.
    Dense,
    /// `exp(θ′(uvᵀ − vuᵀ))` for a random orthonormal pair `u, v`.
    Plane,
}

/// Random-walk settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WalkConfig {
    pub steps: usize,
    pub restarts: usize,
    pub theta0: f64,
    pub epsilon: f64,
    pub f0: f64,
    pub window: usize,
    pub seed: u64,
    pub proposal: Proposal,
    /// Parity sector of the ansatz; `None` picks the sector whose rank-1
    /// pilot walk of `pilot_steps` steps reaches the lower energy.
    pub parity_odd: Option<bool>,
    pub pilot_steps: usize,
    /// Re-orthonormalize the rotations every this many accepted steps.
    pub reorthogonalize_every: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            steps: 10_000,
            restarts: 1,
            theta0: 0.3,
            epsilon: 0.2,
            f0: 0.1,
            window: 100,
            seed: 0,
            proposal: Proposal::Plane,
            parity_odd: None,
            pilot_steps: 5000,
            reorthogonalize_every: 1000,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        fn bad(name: &'static str, reason: &str) -> Result<()> {
            Err(Error::InvalidParameter { name, reason: reason.into() })
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon", "must lie in (0, 1)");
        }
        if !(self.f0 > 0.0 && self.f0 < 1.0) {
            return bad("f0", "must lie in (0, 1)");
        }
        if !(self.theta0 > 0.0 && self.theta0.is_finite()) {
            return bad("theta0", "must be positive");
        }
        if self.window == 0 {
            return bad("window", "must be positive");
        }
        if self.restarts == 0 {
            return bad("restarts", "must be positive");
        }
        Ok(())
    }
}

/// One accepted step of the walk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: usize,
    pub energy: f64,
    pub theta: f64,
}

/// Outcome of [`minimize`].
#[derive(Clone, Debug)]
pub struct VariationalResult {
    pub energy: f64,
    pub ansatz: VariationalAnsatz,
    /// Coefficients of the best state, anchored convention.
    pub coefficients: Vec<C>,
    /// Accepted steps of the best restart.
    pub trace: Vec<TracePoint>,
    pub restart_energies: Vec<f64>,
}

impl VariationalResult {
    pub fn superposition(&self) -> Result<Superposition<f64>> {
        Superposition::new(self.coefficients.clone(), self.ansatz.states()?, self.ansatz.reference.clone())
    }
}

/// `exp(t A)` for a real antisymmetric `A` by scaled Taylor series.
pub fn expm_antisymmetric(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let d = a.nrows();
    let norm = a.norm() * t.abs();
    let mut squarings = 0;
    let mut scale = t;
    while norm / 2f64.powi(squarings) > 0.5 {
        squarings += 1;
    }
    scale /= 2f64.powi(squarings);
    let x = a * scale;
    let mut result = DMatrix::<f64>::identity(d, d);
    let mut term = DMatrix::<f64>::identity(d, d);
    for k in 1..=20 {
        term = &term * &x / k as f64;
        result += &term;
        if term.norm() < 1e-17 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// One Newton–Schulz step toward the nearest orthogonal matrix.
fn reorthonormalize(r: &DMatrix<f64>) -> DMatrix<f64> {
    let d = r.nrows();
    let rtr = r.transpose() * r;
    r * (DMatrix::<f64>::identity(d, d) * 3.0 - rtr) * 0.5
}

/// A proposed rotation `Q`.
enum Step {
    Dense(DMatrix<f64>),
    /// `Q = I + U K Uᵀ`, `U = [u v]`, `K = [[-c, s], [-s, -c]]`.
    Plane { u: DMatrix<f64>, k: nalgebra::Matrix2<f64> },
}

impl Step {
    #[cfg(test)]
    fn matrix(&self) -> DMatrix<f64> {
        match self {
            Step::Dense(q) => q.clone(),
            Step::Plane { u, k } => {
                let d = u.nrows();
                DMatrix::<f64>::identity(d, d) + u * k * u.transpose()
            }
        }
    }

    /// `Q X`.
    fn left(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Step::Dense(q) => q * x,
            Step::Plane { u, k } => x + u * (k * (u.transpose() * x)),
        }
    }

    /// `Q M Qᵀ`, antisymmetrized.
    fn conjugate(&self, m: &CovarianceMatrix<f64>) -> CovarianceMatrix<f64> {
        match self {
            Step::Dense(q) => conjugate(m, q),
            Step::Plane { u, k } => {
                let m = m.matrix();
                let utm = u.transpose() * m;
                let mu = m * u;
                let utmu = &utm * u;
                let kt = k.transpose();
                let x = m + u * (k * &utm) + (&mu * kt) * u.transpose() + u * (k * utmu * kt) * u.transpose();
                CovarianceMatrix::from_antisymmetric((&x - x.transpose()) * 0.5)
            }
        }
    }
}

fn propose<R: Rng + ?Sized>(d: usize, theta: f64, kind: Proposal, rng: &mut R) -> Step {
    let t = theta * rng.random_range(f64::EPSILON..=1.0);
    match kind {
        Proposal::Dense => {
            let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
            let a = &g - g.transpose();
            let norm = a.clone().svd(false, false).singular_values.max();
            Step::Dense(expm_antisymmetric(&(a / norm), t))
        }
        Proposal::Plane => {
            let mut u = nalgebra::DVector::<f64>::from_fn(d, |_, _| rng.sample(StandardNormal));
            u /= u.norm();
            let mut v = nalgebra::DVector::<f64>::from_fn(d, |_, _| rng.sample(StandardNormal));
            v -= &u * u.dot(&v);
            v /= v.norm();
            // exp(tA) = I + sin t A + (1 − cos t) A², A = uvᵀ − vuᵀ, A² = −uuᵀ − vvᵀ
            let (s, c) = (t.sin(), 1.0 - t.cos());
            let mut basis = DMatrix::<f64>::zeros(d, 2);
            basis.set_column(0, &u);
            basis.set_column(1, &v);
            Step::Plane { u: basis, k: nalgebra::Matrix2::new(-c, s, -s, -c) }
        }
    }
}

/// Pair quantities of two states in the real-overlap phase convention:
/// `(g, ⟨φ₁|H|φ₂⟩)` with `g = |⟨φ₁|φ₂⟩|`.
fn real_pair(m1: &DMatrix<f64>, m2: &DMatrix<f64>, terms: &HamiltonianTerms) -> (f64, C) {
    let n = terms.n;
    let s = m1 + m2;
    let d = s.nrows();
    let lu = s.lu();
    let det = lu.determinant();
    // |⟨φ₁|φ₂⟩|² = 2⁻ⁿ |pf(M₁+M₂)| = 2⁻ⁿ |det|^{1/2}
    let mag2 = det.abs().sqrt() / 2f64.powi(n as i32);
    if !(mag2 > ORTHOGONALITY_THRESHOLD) {
        return (0.0, C::new(0.0, 0.0));
    }
    let Some(inv) = lu.try_inverse() else {
        return (0.0, C::new(0.0, 0.0));
    };
    let diff = m1 - m2;
    // Δ_pq = -(S⁻¹_pq − S⁻¹_qp) + (i/2)(K_pq − K_qp), K = (M₁ − M₂) S⁻¹
    let k = |p: usize, q: usize| (0..d).map(|r| diff[(p, r)] * inv[(r, q)]).sum::<f64>();
    let g = mag2.min(1.0).sqrt();
    let ratio = terms.evaluate(|p, q| {
        let delta = C::new(-(inv[(p, q)] - inv[(q, p)]), 0.5 * (k(p, q) - k(q, p)));
        C::new(0.0, 1.0) * delta.conj()
    });
    (g, ratio * g)
}

/// Walk state for one restart; pair data in the real-overlap convention
/// for `χ = 2` and the anchored convention otherwise.
struct Walker<'a> {
    terms: &'a HamiltonianTerms,
    reference: CovarianceMatrix<f64>,
    base: CovarianceMatrix<f64>,
    rotations: Vec<DMatrix<f64>>,
    covs: Vec<CovarianceMatrix<f64>>,
    diag: Vec<f64>,
    g: DMatrix<C>,
    f: DMatrix<C>,
}

impl<'a> Walker<'a> {
    fn new(terms: &'a HamiltonianTerms, ansatz: &VariationalAnsatz) -> Self {
        let base = ansatz.base();
        let covs: Vec<_> = ansatz.rotations.iter().map(|r| conjugate(&base, r)).collect();
        let chi = covs.len();
        let mut w = Walker {
            terms,
            reference: ansatz.reference.clone(),
            base,
            rotations: ansatz.rotations.clone(),
            diag: covs.iter().map(|m| terms.gaussian_energy(m.matrix())).collect(),
            covs,
            g: DMatrix::identity(chi, chi),
            f: DMatrix::zeros(chi, chi),
        };
        for a in 0..chi {
            w.f[(a, a)] = C::new(w.diag[a], 0.0);
        }
        if chi > 1 {
            for a in 0..chi {
                if let Some((grow, frow)) = w.row(a, &w.covs[a]) {
                    w.set_row(a, &grow, &frow);
                }
            }
        }
        w
    }

    /// Off-diagonal entries `(G_ab, F_ab)` for a candidate `M_a`.
    fn row(&self, a: usize, cand: &CovarianceMatrix<f64>) -> Option<(Vec<C>, Vec<C>)> {
        let chi = self.covs.len();
        let mut grow = vec![C::new(0.0, 0.0); chi];
        let mut frow = vec![C::new(0.0, 0.0); chi];
        if chi == 2 {
            let b = 1 - a;
            let (g, f) = real_pair(cand.matrix(), self.covs[b].matrix(), self.terms);
            grow[b] = C::new(g, 0.0);
            frow[b] = f;
            return Some((grow, frow));
        }
        let sa = GaussianState::with_positive_anchor(cand.clone(), &self.reference).ok()?;
        for b in 0..chi {
            if b == a {
                continue;
            }
            let sb = GaussianState::with_positive_anchor(self.covs[b].clone(), &self.reference).ok()?;
            let (g, f) = span_matrices(&self.reference, &[sa.clone(), sb], self.terms).ok()?;
            grow[b] = g[(0, 1)];
            frow[b] = f[(0, 1)];
        }
        Some((grow, frow))
    }

    fn set_row(&mut self, a: usize, grow: &[C], frow: &[C]) {
        for b in 0..grow.len() {
            if b != a {
                self.g[(a, b)] = grow[b];
                self.g[(b, a)] = grow[b].conj();
                self.f[(a, b)] = frow[b];
                self.f[(b, a)] = frow[b].conj();
            }
        }
    }

    fn energy(&self) -> f64 {
        if self.covs.len() == 1 {
            return self.diag[0];
        }
        generalized_lowest(&self.f, &self.g).map(|e| e.0).unwrap_or(f64::INFINITY)
    }

    /// Energy with `M_a` replaced by `cand`, and the row data to commit.
    fn trial(&self, a: usize, cand: &CovarianceMatrix<f64>) -> Option<(f64, f64, Vec<C>, Vec<C>)> {
        let e_diag = self.terms.gaussian_energy(cand.matrix());
        if self.covs.len() == 1 {
            return Some((e_diag, e_diag, Vec::new(), Vec::new()));
        }
        let (grow, frow) = self.row(a, cand)?;
        let mut g = self.g.clone();
        let mut f = self.f.clone();
        f[(a, a)] = C::new(e_diag, 0.0);
        for b in 0..grow.len() {
            if b != a {
                g[(a, b)] = grow[b];
                g[(b, a)] = grow[b].conj();
                f[(a, b)] = frow[b];
                f[(b, a)] = frow[b].conj();
            }
        }
        let e = generalized_lowest(&f, &g).ok()?.0;
        Some((e, e_diag, grow, frow))
    }

    fn refresh(&mut self) {
        for a in 0..self.rotations.len() {
            self.rotations[a] = reorthonormalize(&self.rotations[a]);
            self.covs[a] = conjugate(&self.base, &self.rotations[a]);
            self.diag[a] = self.terms.gaussian_energy(self.covs[a].matrix());
            self.f[(a, a)] = C::new(self.diag[a], 0.0);
        }
        if self.covs.len() > 1 {
            for a in 0..self.covs.len() {
                if let Some((grow, frow)) = self.row(a, &self.covs[a]) {
                    self.set_row(a, &grow, &frow);
                }
            }
        }
    }
}

fn walk(
    terms: &HamiltonianTerms,
    start: VariationalAnsatz,
    config: &WalkConfig,
    rng: &mut ChaCha8Rng,
) -> (f64, VariationalAnsatz, Vec<TracePoint>) {
    let d = 2 * terms.n;
    let mut w = Walker::new(terms, &start);
    let mut energy = w.energy();
    let mut theta = config.theta0;
    let mut trace = vec![TracePoint { step: 0, energy, theta }];
    let mut successes = 0usize;
    let mut accepted_since_refresh = 0usize;
    let chi = start.chi();
    for step in 1..=config.steps {
        let a = if chi == 1 { 0 } else { rng.random_range(0..chi) };
        let q = propose(d, theta, config.proposal, rng);
        let cand = q.conjugate(&w.covs[a]);
        if let Some((e, e_diag, grow, frow)) = w.trial(a, &cand) {
            if e < energy {
                energy = e;
                w.rotations[a] = q.left(&w.rotations[a]);
                w.covs[a] = cand;
                w.diag[a] = e_diag;
                w.f[(a, a)] = C::new(e_diag, 0.0);
                if chi > 1 {
                    w.set_row(a, &grow, &frow);
                }
                successes += 1;
                accepted_since_refresh += 1;
                if accepted_since_refresh >= config.reorthogonalize_every {
                    w.refresh();
                    accepted_since_refresh = 0;
                    energy = energy.min(w.energy());
                }
                trace.push(TracePoint { step, energy, theta });
            }
        }
        if step % config.window == 0 {
            let frac = successes as f64 / config.window as f64;
            theta *= if frac >= config.f0 { 1.0 + config.epsilon } else { 1.0 - config.epsilon };
            theta = theta.clamp(1e-12, std::f64::consts::PI);
            successes = 0;
        }
    }
    w.refresh();
    let final_energy = w.energy();
    let ansatz = VariationalAnsatz { rotations: w.rotations, odd: start.odd, reference: start.reference };
    (final_energy, ansatz, trace)
}

/// Best energy over restarts of the greedy random walk.
pub fn minimize(model: &ImpurityModel, chi: usize, config: &WalkConfig) -> Result<VariationalResult> {
    config.validate()?;
    if chi == 0 {
        return Err(Error::InvalidParameter { name: "chi", reason: "must be at least 1".into() });
    }
    let terms = HamiltonianTerms::from_model(model);
    let odd = match config.parity_odd {
        Some(odd) => odd,
        None => pilot_parity(model, &terms, config)?,
    };
    let runs: Vec<Result<(f64, VariationalAnsatz, Vec<TracePoint>)>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(r as u64);
            let start = VariationalAnsatz::random(model, chi, odd, &mut rng)?;
            Ok(walk(&terms, start, config, &mut rng))
        })
        .collect();
    let mut best: Option<(f64, VariationalAnsatz, Vec<TracePoint>)> = None;
    let mut restart_energies = Vec::with_capacity(runs.len());
    for run in runs {
        let run = run?;
        restart_energies.push(run.0);
        if best.as_ref().is_none_or(|b| run.0 < b.0) {
            best = Some(run);
        }
    }
    let (_, ansatz, trace) = best.expect("at least one restart");
    let ansatz = ensure_anchorable(ansatz, config.seed)?;
    let (energy, coefficients) = objective(&ansatz, model)?;
    Ok(VariationalResult { energy, ansatz, coefficients, trace, restart_energies })
}

/// Parity sector with the lower rank-1 pilot energy.
pub fn pilot_parity(model: &ImpurityModel, terms: &HamiltonianTerms, config: &WalkConfig) -> Result<bool> {
    let pilot = WalkConfig { steps: config.pilot_steps, ..config.clone() };
    let mut energies = [0.0; 2];
    for (i, odd) in [false, true].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9);
        rng.set_stream(i as u64);
        let start = VariationalAnsatz::random(model, 1, odd, &mut rng)?;
        energies[i] = walk(terms, start, &pilot, &mut rng).0;
    }
    Ok(energies[1] < energies[0])
}

/// Replaces the reference if some state is orthogonal to it.
fn ensure_anchorable(mut ansatz: VariationalAnsatz, seed: u64) -> Result<VariationalAnsatz> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa11c_0de5);
    for _ in 0..16 {
        let covs = ansatz.covariances();
        if covs.iter().all(|m| overlap_mag2(&ansatz.reference, m) > 1e-8) {
            return Ok(ansatz);
        }
        ansatz.reference = random_covariance_with_parity(ansatz.n(), ansatz.odd, &mut rng);
    }
    Err(Error::SingularTriple)
}
