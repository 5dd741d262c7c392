//! Certified lower bounds on the ground energy from a semidefinite program
//! over a localized operator basis.
//!
//! The primal is `min tr(H1 X)` subject to `X ⪰ 0`, `tr(I1 X) = 1` and
//! `tr(K X) = 0` for every `K` in the kernel basis. Solving it is left to
//! external solvers (see [`export_sdpa`]); this module builds the program and
//! checks dual certificates `(y0, y)` with `H1 - y0 I1 - Σ y_α K_α ⪰ 0`,
//! each of which proves `e_g ≥ y0`.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact_oracle::operator_matrix;
use crate::gaussian::{covariance_of_superposition, Superposition};
use crate::majorana::{adjoint_sign, mask_indices, weight, Mask, MajoranaPoly};
use crate::model::ImpurityModel;
use crate::skew_linear::{canonical_modes_with, CanonicalModes};

/// Default threshold `ε` for counting excited modes.
pub const LOCALIZATION_EPS: f64 = 1e-4;
/// Largest monomial coefficient tolerated in the representation of `H`.
pub const REPRESENTATION_TOL: f64 = 1e-10;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Result of [`localize`].
#[derive(Clone, Debug)]
pub struct Localization {
    /// Orthogonal `W` whose rows are the rotated Majoranas `e_j = Σ_q W_jq c_q`;
    /// the state's covariance in this frame is `⊕ [[0, s_j], [-s_j, 0]]`.
    pub rotation: DMatrix<f64>,
    /// Number of modes with `s_j < 1 - ε`; they come first.
    pub k: usize,
    /// `s_j`, ascending.
    pub singular_values: Vec<f64>,
}

/// Localizes the excitations of `psi` onto as few modes as possible.
pub fn localize(psi: &Superposition<f64>, eps: f64) -> Result<Localization> {
    let cov = covariance_of_superposition(psi)?;
    localize_covariance(cov.matrix(), eps)
}

/// [`localize`] for an explicit covariance matrix.
pub fn localize_covariance(m: &DMatrix<f64>, eps: f64) -> Result<Localization> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter { name: "eps", reason: format!("must lie in (0, 1), got {eps}") });
    }
    let CanonicalModes { energies, rotation, .. } = canonical_modes_with(m, 0.0)?;
    let k = energies.iter().filter(|&&s| s < 1.0 - eps).count();
    Ok(Localization { rotation, k, singular_values: energies })
}

/// Resource limits for [`build_program`].
#[derive(Clone, Copy, Debug)]
pub struct SdpBudget {
    /// Cap on the number of Majorana monomials of degree at most 6.
    pub max_monomials: usize,
    /// Cap on the number of operators `C_p`.
    pub max_operators: usize,
}

impl Default for SdpBudget {
    fn default() -> Self {
        Self { max_monomials: 20_000, max_operators: 64 }
    }
}

/// The operators `C_p` of the program.
///
/// Generators `d_1..d_m` are the impurity Majoranas and `d_{m+j}` are the
/// rotated ones. The list holds the `2n` rotated Majoranas followed by every
/// ordered triple product of the first `m + 2k` generators.
#[derive(Clone, Debug)]
pub struct OperatorBasis {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub rotation: DMatrix<f64>,
    /// Coefficients of each generator over the original Majoranas.
    pub generators: Vec<DVector<f64>>,
    /// Each operator as a product of generator indices.
    pub operators: Vec<Vec<usize>>,
}

impl OperatorBasis {
    pub fn new(n: usize, m: usize, rotation: &DMatrix<f64>, k: usize) -> Result<Self> {
        let d = 2 * n;
        if rotation.nrows() != d || rotation.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "rotation is {}x{}, expected {d}x{d}",
                rotation.nrows(),
                rotation.ncols()
            )));
        }
        let defect = (rotation * rotation.transpose() - DMatrix::<f64>::identity(d, d)).amax();
        if defect > 1e-8 {
            return Err(Error::InvalidParameter { name: "rotation", reason: format!("not orthogonal (defect {defect:.3e})") });
        }
        if k > n {
            return Err(Error::InvalidParameter { name: "k", reason: format!("{k} exceeds the mode count {n}") });
        }
        let mut generators: Vec<DVector<f64>> = (0..m).map(|p| DVector::from_fn(d, |q, _| f64::from(u8::from(p == q)))).collect();
        generators.extend((0..d).map(|j| rotation.row(j).transpose()));
        let mut operators: Vec<Vec<usize>> = (0..d).map(|j| vec![m + j]).collect();
        let pool = m + 2 * k;
        for a in 0..pool {
            for b in (a + 1)..pool {
                for c in (b + 1)..pool {
                    operators.push(vec![a, b, c]);
                }
            }
        }
        Ok(Self { n, m, k, rotation: rotation.clone(), generators, operators })
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    /// Generator `j` over the rotated Majoranas.
    fn generator_rotated(&self, j: usize) -> MajoranaPoly {
        let v = &self.rotation * &self.generators[j];
        let coeffs: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let mut poly = MajoranaPoly::linear(&coeffs);
        poly.prune(1e-15);
        poly
    }

    /// `C_p` over the rotated Majoranas.
    pub fn operator_poly(&self, p: usize) -> MajoranaPoly {
        let mut out = MajoranaPoly::identity(ONE);
        for &g in &self.operators[p] {
            out = out.mul(&self.generator_rotated(g));
        }
        out.prune(1e-15);
        out
    }

    /// Dense Jordan-Wigner matrices of all `C_p` in the original frame.
    pub fn dense_operators(&self) -> Vec<DMatrix<Complex64>> {
        let gens: Vec<DMatrix<Complex64>> = self
            .generators
            .iter()
            .map(|v| {
                let coeffs: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
                operator_matrix(self.n, &MajoranaPoly::linear(&coeffs))
            })
            .collect();
        self.operators
            .iter()
            .map(|ops| {
                let mut acc = gens[ops[0]].clone();
                for &g in &ops[1..] {
                    acc = acc * &gens[g];
                }
                acc
            })
            .collect()
    }

    /// Maps a polynomial in the original Majoranas to the rotated frame.
    pub fn to_rotated(&self, poly: &MajoranaPoly) -> MajoranaPoly {
        let d = 2 * self.n;
        let singles: Vec<MajoranaPoly> = (0..d)
            .map(|q| {
                // c_q = Σ_j W_jq e_j
                let coeffs: Vec<Complex64> = (0..d).map(|j| Complex64::new(self.rotation[(j, q)], 0.0)).collect();
                let mut p = MajoranaPoly::linear(&coeffs);
                p.prune(1e-15);
                p
            })
            .collect();
        let mut out = MajoranaPoly::new();
        for (&x, &c) in &poly.terms {
            let mut term = MajoranaPoly::identity(c);
            for q in mask_indices(x) {
                term = term.mul(&singles[q]);
            }
            out.add_scaled(&term, ONE);
        }
        out.prune(1e-15);
        out
    }
}

/// Number of Majorana monomials of degree at most 6 over `2n` modes.
pub fn monomial_space_size(n: usize) -> usize {
    let d = 2 * n;
    let mut total = 0usize;
    let mut binom = 1usize;
    for w in 0..=6.min(d) {
        total += binom;
        binom = binom * (d - w) / (w + 1);
    }
    total
}

/// A program ready for export or certificate checking.
#[derive(Clone, Debug)]
pub struct SdpProgram {
    pub basis: OperatorBasis,
    pub h1: DMatrix<Complex64>,
    pub i1: DMatrix<Complex64>,
    /// Hermitian matrices spanning `ℒ`, orthonormal in the Frobenius product.
    pub kernel_basis: Vec<DMatrix<Complex64>>,
    /// Largest monomial coefficient of `Σ H1_pq C_p†C_q - H`.
    pub representation_residual: f64,
}

impl SdpProgram {
    pub fn dim(&self) -> usize {
        self.h1.nrows()
    }

    /// `Σ_pq K_pq C_p†C_q` over the rotated Majoranas.
    pub fn operator_of(&self, k: &DMatrix<Complex64>) -> MajoranaPoly {
        let ops: Vec<MajoranaPoly> = (0..self.dim()).map(|p| self.basis.operator_poly(p)).collect();
        combine(&ops, k)
    }

    /// `H1 - y0 I1 - Σ y_α K_α`.
    pub fn slack(&self, cert: &Certificate) -> Result<DMatrix<Complex64>> {
        if cert.y.len() != self.kernel_basis.len() {
            return Err(Error::DimensionMismatch(format!(
                "certificate has {} multipliers, program has {} kernel elements",
                cert.y.len(),
                self.kernel_basis.len()
            )));
        }
        let mut s = &self.h1 - &self.i1 * Complex64::new(cert.y0, 0.0);
        for (k, &y) in self.kernel_basis.iter().zip(&cert.y) {
            s -= k * Complex64::new(y, 0.0);
        }
        Ok(s)
    }
}

fn combine(ops: &[MajoranaPoly], k: &DMatrix<Complex64>) -> MajoranaPoly {
    let adj: Vec<MajoranaPoly> = ops.iter().map(MajoranaPoly::adjoint).collect();
    let mut out = MajoranaPoly::new();
    for p in 0..ops.len() {
        for q in 0..ops.len() {
            let w = k[(p, q)];
            if w.norm() > 0.0 {
                out.add_scaled(&adj[p].mul(&ops[q]), w);
            }
        }
    }
    out.prune(1e-14);
    out
}

/// Builds the program for `model` in the frame `rotation`, with the first
/// `k` rotated modes treated as excited.
pub fn build_program(model: &ImpurityModel, rotation: &DMatrix<f64>, k: usize, budget: &SdpBudget) -> Result<SdpProgram> {
    let (n, m) = (model.n(), model.m());
    let monomials = monomial_space_size(n);
    if monomials > budget.max_monomials {
        return Err(Error::BudgetExceeded { what: "degree-6 monomial space", size: monomials, budget: budget.max_monomials });
    }
    let basis = OperatorBasis::new(n, m, rotation, k)?;
    let big_n = basis.len();
    if big_n > budget.max_operators {
        return Err(Error::BudgetExceeded { what: "SDP operator list", size: big_n, budget: budget.max_operators });
    }
    let ops: Vec<MajoranaPoly> = (0..big_n).map(|p| basis.operator_poly(p)).collect();

    let h1 = represent_hamiltonian(model, &basis)?;
    let i1 = DMatrix::<Complex64>::identity(big_n, big_n) / Complex64::new(big_n as f64, 0.0);

    let mut diff = combine(&ops, &h1);
    diff.add_scaled(&basis.to_rotated(&model.hamiltonian_poly()), -ONE);
    let residual = diff.max_abs();
    if !(residual < REPRESENTATION_TOL) {
        return Err(Error::RepresentationFailure { residual });
    }

    let kernel_basis = kernel(&ops)?;
    Ok(SdpProgram { basis, h1, i1, kernel_basis, representation_residual: residual })
}

/// Exact term-by-term representation of `H` in the `C_p†C_q` frame.
fn represent_hamiltonian(model: &ImpurityModel, basis: &OperatorBasis) -> Result<DMatrix<Complex64>> {
    let (n, m) = (basis.n, basis.m);
    let d = 2 * n;
    let big_n = basis.len();
    let w = &basis.rotation;
    let triple_index: BTreeMap<Vec<usize>, usize> =
        basis.operators.iter().enumerate().filter(|(_, o)| o.len() == 3).map(|(i, o)| (o.clone(), i)).collect();
    let triple = |idx: &[usize]| -> Result<usize> {
        triple_index.get(idx).copied().ok_or(Error::RepresentationFailure { residual: f64::INFINITY })
    };

    let mut k = DMatrix::<Complex64>::zeros(big_n, big_n);
    for (&x, &g) in &model.hamiltonian_poly().terms {
        let idx = mask_indices(x);
        match idx.len() {
            0 => {
                for p in 0..big_n {
                    k[(p, p)] += g / Complex64::new(big_n as f64, 0.0);
                }
            }
            2 => {
                // c_a c_b = Σ_jl W_ja W_lb e_j e_l
                let (a, b) = (idx[0], idx[1]);
                for j in 0..d {
                    for l in 0..d {
                        k[(j, l)] += g * (w[(j, a)] * w[(l, b)]);
                    }
                }
            }
            4 if idx[3] < m => {
                // c_a (c_b c_c c_e) with c_a = Σ_j W_ja e_j
                let t = triple(&idx[1..])?;
                for j in 0..d {
                    k[(j, t)] += g * w[(j, idx[0])];
                }
            }
            6 if idx[5] < m => {
                // (c_a c_b c_c)† = -c_a c_b c_c
                let (s, t) = (triple(&idx[..3])?, triple(&idx[3..])?);
                k[(s, t)] -= g;
            }
            _ => return Err(Error::RepresentationFailure { residual: g.norm() }),
        }
    }
    Ok((&k + k.adjoint()) * Complex64::new(0.5, 0.0))
}

/// Hermitian parameters: diagonal entries, then `(Re, Im)` of each `p < q`.
fn unpack_hermitian(v: &DVector<f64>, big_n: usize) -> DMatrix<Complex64> {
    let mut k = DMatrix::<Complex64>::zeros(big_n, big_n);
    for p in 0..big_n {
        k[(p, p)] = Complex64::new(v[p], 0.0);
    }
    let mut col = big_n;
    for p in 0..big_n {
        for q in (p + 1)..big_n {
            let z = Complex64::new(v[col], v[col + 1]);
            k[(p, q)] = z;
            k[(q, p)] = z.conj();
            col += 2;
        }
    }
    k
}

/// Basis of `ℒ = {K Hermitian : Σ K_pq C_p†C_q = 0}`.
fn kernel(ops: &[MajoranaPoly]) -> Result<Vec<DMatrix<Complex64>>> {
    let big_n = ops.len();
    let adj: Vec<MajoranaPoly> = ops.iter().map(MajoranaPoly::adjoint).collect();
    // every C_p is odd, so products are even and of degree at most 6
    let n_majoranas = ops.iter().map(MajoranaPoly::span).max().unwrap_or(0);
    let rows = even_monomials(n_majoranas, 6);
    let mut a = DMatrix::<f64>::zeros(rows.len(), big_n * big_n);
    let mut fill = |col: usize, poly: &MajoranaPoly, scale: Complex64| -> Result<()> {
        for (x, &v) in &poly.terms {
            let v = v * scale;
            // each column is a Hermitian operator, so one real number per monomial
            let value = if adjoint_sign(*x) > 0.0 { v.re } else { v.im };
            let row = rows.get(x).ok_or(Error::RepresentationFailure { residual: v.norm() })?;
            a[(*row, col)] += value;
        }
        Ok(())
    };
    let i = Complex64::new(0.0, 1.0);
    let mut col = big_n;
    for p in 0..big_n {
        fill(p, &adj[p].mul(&ops[p]), ONE)?;
        for q in (p + 1)..big_n {
            let pq = adj[p].mul(&ops[q]);
            let qp = adj[q].mul(&ops[p]);
            fill(col, &pq, ONE)?;
            fill(col, &qp, ONE)?;
            fill(col + 1, &pq, i)?;
            fill(col + 1, &qp, -i)?;
            col += 2;
        }
    }
    let null = nullspace(a);

    // orthonormalize in the Frobenius product, twice for stability
    let mut out: Vec<DMatrix<Complex64>> = Vec::with_capacity(null.len());
    for v in null {
        let mut k = unpack_hermitian(&v, big_n);
        for _ in 0..2 {
            for b in &out {
                let c = frobenius(b, &k);
                k -= b * Complex64::new(c, 0.0);
            }
        }
        let norm = frobenius(&k, &k).sqrt();
        if norm > 1e-12 {
            out.push(k / Complex64::new(norm, 0.0));
        }
    }
    Ok(out)
}

/// Row index of every even monomial of degree at most `max_degree`.
fn even_monomials(d: usize, max_degree: u32) -> BTreeMap<Mask, usize> {
    let mut out = BTreeMap::new();
    let mut frontier: Vec<Mask> = vec![0];
    out.insert(0, 0);
    for _ in 0..(max_degree / 2) {
        let mut next = Vec::new();
        for &x in &frontier {
            let top = 64 - x.leading_zeros() as usize;
            for a in top..d {
                for b in (a + 1)..d {
                    next.push(x | (1 << a) | (1 << b));
                }
            }
        }
        for &x in &next {
            let len = out.len();
            out.insert(x, len);
        }
        frontier = next;
    }
    out
}

/// Real Frobenius product `Re tr(A† B)`.
pub fn frobenius(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Null space by Householder QR with column pivoting.
fn nullspace(mut a: DMatrix<f64>) -> Vec<DVector<f64>> {
    let (rows, cols) = a.shape();
    let mut perm: Vec<usize> = (0..cols).collect();
    let mut rank = 0;
    let mut first = 0.0;
    for j in 0..rows.min(cols) {
        let (piv, norm) = (j..cols)
            .map(|c| (c, a.view((j, c), (rows - j, 1)).norm()))
            .fold((j, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if j == 0 {
            first = norm;
        }
        if norm <= 1e-12 * first.max(1e-300) {
            break;
        }
        a.swap_columns(j, piv);
        perm.swap(j, piv);
        let mut v: DVector<f64> = a.column(j).rows(j, rows - j).into_owned();
        let alpha = if v[0] > 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vn = v.norm();
        if vn > 0.0 {
            v /= vn;
            let mut block = a.view_mut((j, j), (rows - j, cols - j));
            let proj = v.transpose() * &block;
            block -= &v * proj * 2.0;
        }
        rank = j + 1;
    }
    let r11 = a.view((0, 0), (rank, rank)).into_owned();
    (rank..cols)
        .map(|f| {
            let mut x: DVector<f64> = -a.column(f).rows(0, rank).into_owned();
            for i in (0..rank).rev() {
                let s: f64 = ((i + 1)..rank).map(|c| r11[(i, c)] * x[c]).sum();
                x[i] = (x[i] - s) / r11[(i, i)];
            }
            let mut z = DVector::<f64>::zeros(cols);
            for i in 0..rank {
                z[perm[i]] = x[i];
            }
            z[perm[f]] = 1.0;
            z
        })
        .collect()
}

/// Dual certificate `(y0, y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub y0: f64,
    pub y: Vec<f64>,
}

impl Certificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn lambda_min(a: &DMatrix<Complex64>) -> f64 {
    let sym = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    SymmetricEigen::new(sym).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Checks `H1 - y0 I1 - Σ y_α K_α ⪰ -tol`; returns the validity flag and
/// the smallest eigenvalue of the slack matrix.
pub fn verify_certificate(program: &SdpProgram, cert: &Certificate, tol: f64) -> Result<(bool, f64)> {
    let slack = program.slack(cert)?;
    let margin = lambda_min(&slack);
    Ok((margin.is_finite() && margin >= -tol, margin))
}

/// Largest `y0` for which `(y0, y)` is a certificate.
pub fn best_y0(program: &SdpProgram, y: &[f64]) -> Result<f64> {
    let slack = program.slack(&Certificate { y0: 0.0, y: y.to_vec() })?;
    let chol = program.i1.clone().cholesky().ok_or_else(|| Error::InvalidParameter {
        name: "i1",
        reason: "normalization matrix is not positive definite".into(),
    })?;
    // λ_min of L⁻¹ S L⁻†
    let l = chol.l();
    let linv = l.try_inverse().ok_or(Error::SingularTriple)?;
    Ok(lambda_min(&(&linv * slack * linv.adjoint())))
}

/// Certificate with the given multipliers and the largest valid `y0`,
/// backed off by a relative `1e-12` so that it verifies at zero tolerance.
pub fn certificate_for(program: &SdpProgram, y: &[f64]) -> Result<Certificate> {
    let t = best_y0(program, y)?;
    Ok(Certificate { y0: t - 1e-12 * (1.0 + t.abs()), y: y.to_vec() })
}

/// Least-squares multipliers with `Σ y_α K_α ≈ target`, and the Frobenius
/// norm of the part of `target` outside `ℒ`.
pub fn fit_multipliers(program: &SdpProgram, target: &DMatrix<Complex64>) -> (Vec<f64>, f64) {
    let y: Vec<f64> = program.kernel_basis.iter().map(|k| frobenius(k, target)).collect();
    let mut rest = target.clone();
    for (k, &c) in program.kernel_basis.iter().zip(&y) {
        rest -= k * Complex64::new(c, 0.0);
    }
    (y, frobenius(&rest, &rest).sqrt())
}

/// Certificate from a decomposition `H = y0 I + Σ G_pq C_p†C_q` with
/// `G ⪰ 0`; the multipliers absorb `H1 - y0 I1 - G`.
pub fn sos_certificate(program: &SdpProgram, y0: f64, gram: &DMatrix<Complex64>) -> (Certificate, f64) {
    let target = &program.h1 - &program.i1 * Complex64::new(y0, 0.0) - gram;
    let (y, residual) = fit_multipliers(program, &target);
    (Certificate { y0, y }, residual)
}

/// Optimal certificate for a Hamiltonian with no terms above degree 2:
/// `H - e_g = Σ_j ε_j b_j†b_j` with every `b_j` a combination of the
/// rotated Majoranas. Returns the certificate and the fitting residual.
pub fn quadratic_certificate(model: &ImpurityModel, program: &SdpProgram) -> Result<(Certificate, f64)> {
    let poly = model.hamiltonian_poly();
    let d = 2 * model.n();
    let mut h = DMatrix::<f64>::zeros(d, d);
    let mut constant = 0.0;
    for (&x, &g) in &poly.terms {
        match weight(x) {
            0 => constant += g.re,
            2 => {
                let idx = mask_indices(x);
                // g c_a c_b = (i/4)(h_ab c_a c_b + h_ba c_b c_a)
                h[(idx[0], idx[1])] = 2.0 * g.im;
                h[(idx[1], idx[0])] = -2.0 * g.im;
            }
            _ => {
                return Err(Error::InvalidParameter { name: "model", reason: "Hamiltonian has terms above degree 2".into() })
            }
        }
    }
    let modes = canonical_modes_with(&h, 0.0)?;
    let e_g = constant - modes.energies.iter().sum::<f64>() / 2.0;
    let w = &program.basis.rotation;
    let big_n = program.dim();
    let mut gram = DMatrix::<Complex64>::zeros(big_n, big_n);
    for (j, &eps) in modes.energies.iter().enumerate() {
        // b_j = Σ_q u_jq c_q = Σ_l (Σ_q u_jq W_lq) e_l
        let u = modes.annihilator(j);
        let v: Vec<Complex64> = (0..d).map(|l| (0..d).map(|q| u[q] * w[(l, q)]).sum()).collect();
        for a in 0..d {
            for b in 0..d {
                gram[(a, b)] += v[a].conj() * v[b] * eps;
            }
        }
    }
    Ok(sos_certificate(program, e_g, &gram))
}

/// Real symmetric embedding `[[Re A, -Im A], [Im A, Re A]]`.
fn embed(a: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |r, c| {
        let z = a[(r % n, c % n)];
        match (r < n, c < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// The program in SDPA sparse format.
///
/// SDPA minimizes `c·x` subject to `Σ_i F_i x_i - F_0 ⪰ 0`; here
/// `x = (y0, y)`, `c = (-1, 0, …)`, `F_0 = -H1`, `F_1 = -I1` and
/// `F_{1+α} = -K_α`, each embedded as a real symmetric matrix of twice the
/// size. The solver's `x` vector is therefore the certificate.
pub fn export_sdpa(program: &SdpProgram) -> String {
    let mats: Vec<DMatrix<f64>> = std::iter::once(&program.h1)
        .chain(std::iter::once(&program.i1))
        .chain(program.kernel_basis.iter())
        .map(|a| -embed(a))
        .collect();
    let m_dim = mats.len() - 1;
    let size = 2 * program.dim();
    let mut out = String::new();
    out.push_str(&format!("\"impurity SDP: {} operators, {} kernel constraints\"\n", program.dim(), program.kernel_basis.len()));
    out.push_str(&format!("{m_dim}\n1\n{size}\n"));
    let c: Vec<String> = (0..m_dim).map(|i| fmt17(if i == 0 { -1.0 } else { 0.0 })).collect();
    out.push_str(&c.join(" "));
    out.push('\n');
    for (i, f) in mats.iter().enumerate() {
        for r in 0..size {
            for col in r..size {
                let v = f[(r, col)];
                if v != 0.0 {
                    out.push_str(&format!("{i} 1 {} {} {}\n", r + 1, col + 1, fmt17(v)));
                }
            }
        }
    }
    out
}

pub fn write_sdpa(program: &SdpProgram, path: &Path) -> Result<()> {
    std::fs::write(path, export_sdpa(program))?;
    Ok(())
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parsed SDPA sparse data with a single block.
#[derive(Clone, Debug)]
pub struct SdpaData {
    pub c: Vec<f64>,
    /// `F_0, F_1, …, F_mDIM`.
    pub matrices: Vec<DMatrix<f64>>,
}

impl SdpaData {
    /// Hermitian matrix whose embedding is `-F_i`.
    pub fn hermitian(&self, i: usize) -> DMatrix<Complex64> {
        let f = &self.matrices[i];
        let n = f.nrows() / 2;
        DMatrix::from_fn(n, n, |r, c| Complex64::new(-f[(r, c)], -f[(r + n, c)]))
    }
}

/// Parses the single-block SDPA sparse files written by [`export_sdpa`].
pub fn parse_sdpa(text: &str) -> Result<SdpaData> {
    let bad = |reason: String| Error::Parse(format!("SDPA: {reason}"));
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('"') && !l.starts_with('*'));
    let mut header = || lines.next().ok_or_else(|| bad("truncated header".into()));
    let m_dim: usize = header()?.split_whitespace().next().unwrap_or("").parse().map_err(|e| bad(format!("mDIM: {e}")))?;
    let n_block: usize = header()?.split_whitespace().next().unwrap_or("").parse().map_err(|e| bad(format!("nBLOCK: {e}")))?;
    if n_block != 1 {
        return Err(bad(format!("expected one block, got {n_block}")));
    }
    let size: i64 = header()?
        .split(|ch: char| ch.is_whitespace() || ch == ',')
        .find(|s| !s.is_empty())
        .unwrap_or("")
        .parse()
        .map_err(|e| bad(format!("block size: {e}")))?;
    let size = size.unsigned_abs() as usize;
    let c: Vec<f64> = header()?
        .split(|ch: char| ch.is_whitespace() || ch == ',' || ch == '{' || ch == '}')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| bad(format!("c vector: {e}"))))
        .collect::<Result<_>>()?;
    if c.len() != m_dim {
        return Err(bad(format!("c has {} entries, expected {m_dim}", c.len())));
    }
    let mut matrices = vec![DMatrix::<f64>::zeros(size, size); m_dim + 1];
    for line in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(bad(format!("malformed entry `{line}`")));
        }
        let idx = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("index `{s}`: {e}")));
        let (mat, blk, r, col) = (idx(f[0])?, idx(f[1])?, idx(f[2])?, idx(f[3])?);
        let v: f64 = f[4].parse().map_err(|e| bad(format!("value `{}`: {e}", f[4])))?;
        if mat > m_dim || blk != 1 || r == 0 || col == 0 || r > size || col > size {
            return Err(bad(format!("entry out of range `{line}`")));
        }
        matrices[mat][(r - 1, col - 1)] = v;
        matrices[mat][(col - 1, r - 1)] = v;
    }
    Ok(SdpaData { c, matrices })
}
