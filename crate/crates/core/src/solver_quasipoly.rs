//! Ground energy by exact diagonalization in the low-excitation subspace of
//! a grid-deformed, decoupled bath.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{
    fock_covariance, overlap_mag2, random_covariance_with_parity, transition_contraction, CovarianceMatrix, GaussianState,
    Superposition,
};
use crate::linalg::{dense_lowest, lanczos_lowest, CsrMatrix, LanczosConfig};
use crate::majorana::{mask_indices, MajoranaPoly};
use crate::model::{decouple_groups, truncate, DecoupledFrame, ImpurityModel};
use crate::skew_linear::CanonicalModes;

type C = Complex64;

/// Default cap on `dim(𝒱)`.
pub const DEFAULT_DIM_CAP: usize = 20_000;
/// Subspaces up to this size are diagonalized densely.
const DENSE_SOLVE_LIMIT: usize = 600;

/// Impurity model whose bath energies are rounded up to the grid `x γ/s★`.
#[derive(Clone, Debug)]
pub struct DeformedModel {
    pub base: ImpurityModel,
    pub gamma: f64,
    pub s_star: usize,
    pub modes: CanonicalModes<f64>,
    /// `ε′_j` for each canonical mode.
    pub grid_energies: Vec<f64>,
    /// `ε′_j / (γ/s★)`.
    pub grid_index: Vec<u64>,
}

impl DeformedModel {
    pub fn spacing(&self) -> f64 {
        self.gamma / self.s_star as f64
    }

    /// Decoupled frame with modes grouped by exact grid index.
    pub fn frame(&self) -> Result<DecoupledFrame> {
        let labels: Vec<usize> = self.grid_index.iter().map(|&x| x as usize).collect();
        decouple_groups(&self.base, &self.modes, &self.grid_energies, &labels)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma <= 0.5) {
        return Err(Error::InvalidParameter { name: "gamma", reason: format!("must lie in (0, 1/2], got {gamma}") });
    }
    Ok(())
}

/// Rounds every single-particle energy up to the grid `{x γ/s★ : x ≥ 1}`.
pub fn deform(model: &ImpurityModel, gamma: f64, s_star: usize) -> Result<DeformedModel> {
    check_gamma(gamma)?;
    if s_star == 0 {
        return Err(Error::InvalidParameter { name: "s_star", reason: "must be at least 1".into() });
    }
    let modes = model.canonical_modes()?;
    let delta = gamma / s_star as f64;
    let grid_index: Vec<u64> = modes
        .energies
        .iter()
        .map(|&e| {
            let x = e / delta;
            let nearest = x.round();
            let idx = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) { nearest } else { x.ceil() };
            idx.max(1.0) as u64
        })
        .collect();
    let grid_energies = grid_index.iter().map(|&x| x as f64 * delta).collect();
    Ok(DeformedModel { base: model.clone(), gamma, s_star, modes, grid_energies, grid_index })
}

/// Occupation bitstrings of the coupled modes with at most `cutoff`
/// excitations; decoupled modes are empty.
#[derive(Clone, Debug)]
pub struct SubspaceBasis {
    /// Frame indices of the coupled modes; bit `i` of a bitstring refers
    /// to `coupled_modes[i]`.
    pub coupled_modes: Vec<usize>,
    pub bitstrings: Vec<u64>,
    pub frame: DecoupledFrame,
    pub cutoff: usize,
}

impl SubspaceBasis {
    pub fn dim(&self) -> usize {
        self.bitstrings.len()
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

/// `Σ_{w ≤ s} binom(k, w)`.
pub fn subspace_dimension(coupled: usize, cutoff: usize) -> u128 {
    (0..=cutoff.min(coupled)).map(|w| binomial(coupled, w)).sum()
}

/// Basis with excitation cutoff `s★`.
pub fn build_subspace(deformed: &DeformedModel, dim_cap: usize) -> Result<SubspaceBasis> {
    build_subspace_with_cutoff(deformed, deformed.s_star, dim_cap)
}

/// Basis with an explicit excitation cutoff.
pub fn build_subspace_with_cutoff(deformed: &DeformedModel, cutoff: usize, dim_cap: usize) -> Result<SubspaceBasis> {
    let frame = deformed.frame()?;
    let coupled_modes = frame.coupled.clone();
    let k = coupled_modes.len();
    if k > 63 {
        return Err(Error::DimensionTooLarge { what: "coupled modes", dim: k, limit: 63 });
    }
    let dim = subspace_dimension(k, cutoff);
    if dim > dim_cap as u128 {
        return Err(Error::BudgetExceeded { what: "subspace dimension", size: dim.min(usize::MAX as u128) as usize, budget: dim_cap });
    }
    let mut bitstrings = Vec::with_capacity(dim as usize);
    for w in 0..=cutoff.min(k) {
        combinations(k, w, &mut bitstrings);
    }
    bitstrings.sort_unstable();
    Ok(SubspaceBasis { coupled_modes, bitstrings, frame, cutoff })
}

fn combinations(k: usize, w: usize, out: &mut Vec<u64>) {
    if w == 0 {
        out.push(0);
        return;
    }
    // Gosper's hack
    let mut x: u64 = (1u64 << w) - 1;
    let limit: u64 = 1u64 << k;
    while x < limit {
        out.push(x);
        let c = x & x.wrapping_neg();
        let r = x + c;
        x = (((r ^ x) >> 2) / c) | r;
    }
}

/// Normal-ordered polynomial in fermionic ladder operators; the key
/// `(cre, ann)` stands for `(Π_{i∈cre↑} b_i†)(Π_{j∈ann↑} b_j)`.
#[derive(Clone, Debug, Default)]
pub struct FockPoly {
    pub terms: BTreeMap<(u64, u64), C>,
}

fn below(mask: u64, i: usize) -> u32 {
    (mask & ((1u64 << i) - 1)).count_ones()
}

fn parity_sign(k: u32) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

impl FockPoly {
    pub fn identity() -> Self {
        let mut terms = BTreeMap::new();
        terms.insert((0, 0), C::new(1.0, 0.0));
        Self { terms }
    }

    fn add(&mut self, key: (u64, u64), v: C) {
        *self.terms.entry(key).or_insert(C::new(0.0, 0.0)) += v;
    }

    /// `(Σ_i α_i b_i + β_i b_i†) · self`.
    pub fn left_multiply(&self, alpha: &[C], beta: &[C]) -> Self {
        let mut out = FockPoly::default();
        for (&(cre, ann), &v) in &self.terms {
            for i in 0..alpha.len() {
                let bit = 1u64 << i;
                if beta[i] != C::new(0.0, 0.0) && cre & bit == 0 {
                    out.add((cre | bit, ann), v * beta[i] * parity_sign(below(cre, i)));
                }
                if alpha[i] != C::new(0.0, 0.0) {
                    // b_i Π b† = [i ∈ cre] (−1)^{#cre<i} Π_{cre∖i} b† + (−1)^{|cre|} Π b† b_i
                    if cre & bit != 0 {
                        out.add((cre ^ bit, ann), v * alpha[i] * parity_sign(below(cre, i)));
                    }
                    if ann & bit == 0 {
                        let s = parity_sign(cre.count_ones() + below(ann, i));
                        out.add((cre, ann | bit), v * alpha[i] * s);
                    }
                }
            }
        }
        out
    }

    pub fn add_scaled(&mut self, other: &FockPoly, scale: C) {
        for (&k, &v) in &other.terms {
            self.add(k, v * scale);
        }
    }

    pub fn prune(&mut self, tol: f64) {
        self.terms.retain(|_, v| v.norm() > tol);
    }

    /// Applies the polynomial to the Fock state `|z⟩ = Π_{i∈z↑} b_i†|0⟩`,
    /// calling `emit(z′, amplitude)` for each output term.
    pub fn apply<F: FnMut(u64, C)>(&self, z: u64, mut emit: F) {
        'terms: for (&(cre, ann), &v) in &self.terms {
            if ann & z != ann {
                continue;
            }
            let mut state = z;
            let mut sign = 1.0;
            // rightmost operator acts first
            for j in mask_indices(ann).into_iter().rev() {
                sign *= parity_sign(below(state, j));
                state ^= 1u64 << j;
            }
            for j in mask_indices(cre).into_iter().rev() {
                if state & (1u64 << j) != 0 {
                    continue 'terms;
                }
                sign *= parity_sign(below(state, j));
                state |= 1u64 << j;
            }
            emit(state, v * sign);
        }
    }
}

/// Expresses a Majorana polynomial in the ladder operators whose
/// annihilator rows are `rows` (`b_i = Σ_q rows[i,q] c_q`), assuming the
/// Majoranas that occur are spanned by these modes.
pub fn fock_from_majorana(poly: &MajoranaPoly, rows: &DMatrix<C>) -> FockPoly {
    let k = rows.nrows();
    // c_q = 2 Σ_i (conj(u_iq) b_i + u_iq b_i†)
    let forms: Vec<(Vec<C>, Vec<C>)> = (0..rows.ncols())
        .map(|q| ((0..k).map(|i| rows[(i, q)].conj() * 2.0).collect(), (0..k).map(|i| rows[(i, q)] * 2.0).collect()))
        .collect();
    let mut out = FockPoly::default();
    for (&mask, &coeff) in &poly.terms {
        let mut p = FockPoly::identity();
        for q in mask_indices(mask).into_iter().rev() {
            p = p.left_multiply(&forms[q].0, &forms[q].1);
            p.prune(1e-15);
        }
        out.add_scaled(&p, coeff);
    }
    out.prune(1e-14);
    out
}

fn coupled_rows(basis: &SubspaceBasis) -> DMatrix<C> {
    let f = &basis.frame.annihilators;
    DMatrix::from_fn(basis.coupled_modes.len(), f.ncols(), |i, q| f[(basis.coupled_modes[i], q)])
}

/// Restricted deformed Hamiltonian `P H′ P` on the subspace basis.
pub fn assemble(deformed: &DeformedModel, basis: &SubspaceBasis) -> Result<CsrMatrix> {
    let imp = fock_from_majorana(&deformed.base.impurity_poly(), &coupled_rows(basis));
    let index: HashMap<u64, usize> = basis.bitstrings.iter().enumerate().map(|(i, &z)| (z, i)).collect();
    let energies: Vec<f64> = basis.coupled_modes.iter().map(|&i| basis.frame.energies[i]).collect();
    let offset = deformed.base.offset();
    let mut rows: Vec<Vec<(usize, C)>> = vec![Vec::new(); basis.dim()];
    for (col, &z) in basis.bitstrings.iter().enumerate() {
        let bath: f64 = offset + mask_indices(z).iter().map(|&i| energies[i]).sum::<f64>();
        rows[col].push((col, C::new(bath, 0.0)));
        imp.apply(z, |zp, v| {
            if let Some(&row) = index.get(&zp) {
                rows[row].push((col, v));
            }
        });
    }
    Ok(CsrMatrix::from_rows(rows))
}

/// Solver settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuasipolyConfig {
    pub gamma: f64,
    /// Fixed `s★`; `None` selects it adaptively.
    pub s_star: Option<usize>,
    pub dim_cap: usize,
    pub lanczos: LanczosSettings,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LanczosSettings {
    pub tolerance: f64,
    pub seed: u64,
}

impl QuasipolyConfig {
    pub fn new(gamma: f64) -> Self {
        Self { gamma, s_star: None, dim_cap: DEFAULT_DIM_CAP, lanczos: LanczosSettings { tolerance: 1e-10, seed: 0x5eed } }
    }
}

/// One solve at fixed `s★`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolvePoint {
    pub s_star: usize,
    pub dim: usize,
    pub energy: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuasipolyReport {
    pub gamma: f64,
    pub s_star: usize,
    pub dim: usize,
    pub grid_spacing: f64,
    pub coupled_modes: usize,
    /// Whether the adaptive rule met its stopping criterion (always true
    /// for a fixed `s★`).
    pub converged: bool,
    pub history: Vec<SolvePoint>,
    pub elapsed_seconds: f64,
}

/// Lowest eigenvector of the restricted Hamiltonian in the decoupled frame.
#[derive(Clone, Debug)]
pub struct QuasipolyState {
    pub frame: DecoupledFrame,
    pub coupled_modes: Vec<usize>,
    pub bitstrings: Vec<u64>,
    pub amplitudes: Vec<C>,
}

impl QuasipolyState {
    /// Bitstrings over all frame modes.
    fn full_bitstrings(&self) -> Vec<u64> {
        self.bitstrings
            .iter()
            .map(|&z| mask_indices(z).into_iter().fold(0u64, |acc, i| acc | (1u64 << self.coupled_modes[i])))
            .collect()
    }

    /// `⟨ψ|H|ψ⟩/⟨ψ|ψ⟩` for an arbitrary model on the same Majoranas.
    pub fn energy(&self, model: &ImpurityModel) -> Result<f64> {
        let n = self.frame.annihilators.nrows();
        if model.n() != n {
            return Err(Error::DimensionMismatch(format!("state has {n} modes, model has {}", model.n())));
        }
        if n > 63 {
            return Err(Error::DimensionTooLarge { what: "modes", dim: n, limit: 63 });
        }
        let h = fock_from_majorana(&model.hamiltonian_poly(), &self.frame.annihilators);
        let full = self.full_bitstrings();
        let amp: HashMap<u64, C> = full.iter().copied().zip(self.amplitudes.iter().copied()).collect();
        let mut num = C::new(0.0, 0.0);
        for (&z, &a) in full.iter().zip(&self.amplitudes) {
            h.apply(z, |zp, v| {
                if let Some(b) = amp.get(&zp) {
                    num += b.conj() * v * a;
                }
            });
        }
        let norm2: f64 = self.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        Ok(num.re / norm2)
    }

    /// Real orthogonal `W` with `M_z = Wᵀ F_z W` the covariance of `|z⟩`.
    pub fn frame_rotation(&self) -> DMatrix<f64> {
        let a = &self.frame.annihilators;
        let n = a.nrows();
        DMatrix::from_fn(2 * n, 2 * n, |r, q| {
            let u = a[(r / 2, q)];
            if r % 2 == 0 {
                2.0 * u.re
            } else {
                2.0 * u.im
            }
        })
    }

    /// Covariance of the Fock state `|z⟩` (bitstring over coupled modes).
    pub fn fock_state_covariance(&self, z: u64) -> CovarianceMatrix<f64> {
        let n = self.frame.annihilators.nrows();
        let mut occ = vec![false; n];
        for i in mask_indices(z) {
            occ[self.coupled_modes[i]] = true;
        }
        let w = self.frame_rotation();
        let m = w.transpose() * fock_covariance::<f64>(&occ).matrix() * &w;
        CovarianceMatrix::from_antisymmetric((&m - m.transpose()) * 0.5)
    }

    /// The state as a superposition of anchored Gaussian states, anchors
    /// taken against a random reference of the state's parity.
    pub fn to_superposition(&self, seed: u64) -> Result<Superposition<f64>> {
        let n = self.frame.annihilators.nrows();
        let support: Vec<usize> = (0..self.bitstrings.len()).filter(|&i| self.amplitudes[i].norm() > 0.0).collect();
        let Some(&first) = support.first() else {
            return Err(Error::ZeroNorm);
        };
        let z0 = self.bitstrings[first];
        if support.iter().any(|&i| (self.bitstrings[i] ^ z0).count_ones() % 2 == 1) {
            return Err(Error::InvalidParameter { name: "state", reason: "mixed parity".into() });
        }
        let m_z0 = self.fock_state_covariance(z0);
        // the frame rotation may be improper, so read the parity off M
        let odd = m_z0.parity_sign() < 0.0;
        let rows = &self.frame.annihilators;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        'attempt: for _ in 0..16 {
            let reference = random_covariance_with_parity::<f64, _>(n, odd, &mut rng);
            let a0 = overlap_mag2(&reference, &m_z0).sqrt();
            if a0 < 1e-6 {
                continue;
            }
            let mut coefficients = Vec::with_capacity(support.len());
            let mut states = Vec::with_capacity(support.len());
            for &i in &support {
                let z = self.bitstrings[i];
                // |z⟩ = (Π_{j∈z↑} b_j†) (Π_{j∈z₀↓} b_j) |z₀⟩ with |z₀⟩ = Π_{j∈z₀↑} b_j†|0⟩
                let cre = mask_indices(z);
                let ann = mask_indices(z0);
                let k = cre.len() + ann.len();
                let forms = DMatrix::from_fn(k, 2 * n, |r, q| {
                    if r < cre.len() {
                        rows[(self.coupled_modes[cre[r]], q)].conj()
                    } else {
                        rows[(self.coupled_modes[ann[ann.len() - 1 - (r - cre.len())]], q)]
                    }
                });
                let ratio = transition_contraction(&forms, &reference, &m_z0).expect("nonorthogonal");
                let anchor = ratio * a0;
                if anchor.norm() < 1e-12 {
                    continue 'attempt;
                }
                coefficients.push(self.amplitudes[i] * anchor / anchor.norm());
                states.push(GaussianState { cov: self.fock_state_covariance(z), anchor: C::new(anchor.norm(), 0.0) });
            }
            return Superposition::new(coefficients, states, reference);
        }
        Err(Error::SingularTriple)
    }
}

fn lowest(csr: &CsrMatrix, basis: &SubspaceBasis, settings: LanczosSettings) -> (f64, Vec<C>) {
    // the impurity conserves parity, so each parity sector is solved apart
    let mut best = (f64::INFINITY, Vec::new());
    for parity in [0u32, 1] {
        let idx: Vec<usize> = (0..basis.dim()).filter(|&i| basis.bitstrings[i].count_ones() % 2 == parity).collect();
        if idx.is_empty() {
            continue;
        }
        let mut pos = vec![usize::MAX; basis.dim()];
        for (k, &i) in idx.iter().enumerate() {
            pos[i] = k;
        }
        let dim = idx.len();
        let (value, vector) = if dim <= DENSE_SOLVE_LIMIT {
            let mut a = DMatrix::<C>::zeros(dim, dim);
            for (r, &i) in idx.iter().enumerate() {
                for e in csr.row_start[i]..csr.row_start[i + 1] {
                    let c = pos[csr.cols[e]];
                    if c != usize::MAX {
                        a[(r, c)] += csr.values[e];
                    }
                }
            }
            let a = (&a + a.adjoint()) * C::new(0.5, 0.0);
            let p = dense_lowest(&a);
            (p.value, p.vector)
        } else {
            let config = LanczosConfig { tolerance: settings.tolerance, seed: settings.seed, ..Default::default() };
            let p = lanczos_lowest(
                dim,
                |v, out| {
                    for (r, &i) in idx.iter().enumerate() {
                        let mut acc = C::new(0.0, 0.0);
                        for e in csr.row_start[i]..csr.row_start[i + 1] {
                            let c = pos[csr.cols[e]];
                            if c != usize::MAX {
                                acc += csr.values[e] * v[c];
                            }
                        }
                        out[r] = acc;
                    }
                },
                config,
            );
            (p.value, p.vector)
        };
        if value < best.0 {
            let mut full = vec![C::new(0.0, 0.0); basis.dim()];
            for (k, &i) in idx.iter().enumerate() {
                full[i] = vector[k];
            }
            best = (value, full);
        }
    }
    best
}

/// Restricted ground energy at fixed `s★` (grid spacing `γ/s★`, cutoff `s★`).
pub fn solve_fixed(
    model: &ImpurityModel,
    gamma: f64,
    s_star: usize,
    config: &QuasipolyConfig,
) -> Result<(f64, QuasipolyState, SubspaceBasis)> {
    let truncated = truncate(model, gamma)?;
    let deformed = deform(&truncated, gamma, s_star)?;
    let basis = build_subspace(&deformed, config.dim_cap)?;
    let csr = assemble(&deformed, &basis)?;
    let (energy, amplitudes) = lowest(&csr, &basis, config.lanczos);
    let state = QuasipolyState {
        frame: basis.frame.clone(),
        coupled_modes: basis.coupled_modes.clone(),
        bitstrings: basis.bitstrings.clone(),
        amplitudes,
    };
    Ok((energy, state, basis))
}

/// Estimate `E` with `|E − e_g| ≤ γ`, the low-energy state and a report.
pub fn solve(model: &ImpurityModel, gamma: f64) -> Result<(f64, QuasipolyState, QuasipolyReport)> {
    solve_with(model, &QuasipolyConfig::new(gamma))
}

pub fn solve_with(model: &ImpurityModel, config: &QuasipolyConfig) -> Result<(f64, QuasipolyState, QuasipolyReport)> {
    let start = Instant::now();
    let gamma = config.gamma;
    check_gamma(gamma)?;
    let report = |s_star: usize, basis: &SubspaceBasis, converged: bool, history: Vec<SolvePoint>| QuasipolyReport {
        gamma,
        s_star,
        dim: basis.dim(),
        grid_spacing: gamma / s_star as f64,
        coupled_modes: basis.coupled_modes.len(),
        converged,
        history,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    };
    if let Some(s) = config.s_star {
        let (e, state, basis) = solve_fixed(model, gamma, s, config)?;
        let history = vec![SolvePoint { s_star: s, dim: basis.dim(), energy: e }];
        return Ok((e, state, report(s, &basis, true, history)));
    }
    // adaptive: s★ = m, doubled until |E(2s★) − E(s★)| ≤ γ/4
    let mut s = model.m().max(1);
    let (mut e, mut state, mut basis) = solve_fixed(model, gamma, s, config)?;
    let mut history = vec![SolvePoint { s_star: s, dim: basis.dim(), energy: e }];
    loop {
        let next = match solve_fixed(model, gamma, 2 * s, config) {
            Ok(r) => r,
            Err(Error::BudgetExceeded { .. }) => return Ok((e, state, report(s, &basis, false, history))),
            Err(err) => return Err(err),
        };
        history.push(SolvePoint { s_star: 2 * s, dim: next.2.dim(), energy: next.0 });
        let settled = (next.0 - e).abs() <= gamma / 4.0;
        s *= 2;
        (e, state, basis) = next;
        if settled {
            return Ok((e, state, report(s, &basis, true, history)));
        }
    }
}
