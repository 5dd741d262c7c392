//! Impurity models `H = e₀ I + (i/4) Σ h_pq c_p c_q + Σ_x g_x c(x)`,
//! their JSON form, the Anderson benchmark, truncation of small bath
//! energies, decoupling of degenerate bath modes and the block-tridiagonal
//! (Krylov) mapping onto a chain.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::majorana::{mask_from_indices, mask_indices, weight, MajoranaPoly, Mask, MAX_MAJORANAS};
use crate::skew_linear::{block_diag, canonical_modes, CanonicalModes};

/// Degeneracy tolerance used when grouping bath energies.
pub const GROUP_TOLERANCE: f64 = 1e-12;

/// Coupling strengths at or below this are treated as zero by [`decouple`].
pub const COUPLING_TOLERANCE: f64 = 1e-9;

/// One impurity term `g_x c(x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImpurityTerm {
    pub mask: Mask,
    pub coeff: Complex64,
}

/// A validated impurity model on `n` fermionic modes.
///
/// The constant part of the Hamiltonian is `e₀ + offset` with
/// `e₀ = ‖h‖₁/4`, so `offset = 0` is the normalized convention where the
/// bare bath has zero ground energy, and `offset = -e₀` gives the raw
/// Majorana form `(i/4) Σ h_pq c_p c_q + H_imp`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImpurityModel {
    n: usize,
    m: usize,
    h: DMatrix<f64>,
    impurity: Vec<ImpurityTerm>,
    offset: f64,
    norm_check: bool,
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::InvalidModel { path: path.into(), reason: reason.into() }
}

/// Operator norm of a real antisymmetric matrix (largest singular value).
pub fn operator_norm(h: &DMatrix<f64>) -> f64 {
    if h.is_empty() {
        return 0.0;
    }
    h.clone().svd(false, false).singular_values.max()
}

impl ImpurityModel {
    /// Validates and builds a model. `h` must be real antisymmetric of size
    /// `2n`; every impurity mask must have even weight, be supported on the
    /// first `m` Majoranas and carry a coefficient making `g_x c(x)` Hermitian.
    pub fn new(
        n: usize,
        m: usize,
        h: DMatrix<f64>,
        impurity: Vec<ImpurityTerm>,
        offset: f64,
        norm_check: bool,
    ) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "mode count must be positive"));
        }
        if 2 * n > MAX_MAJORANAS {
            return Err(invalid("n", format!("at most {} modes are supported", MAX_MAJORANAS / 2)));
        }
        if m % 2 == 1 || m > 2 * n {
            return Err(invalid("m", format!("impurity size {m} must be even and at most 2n = {}", 2 * n)));
        }
        if h.nrows() != 2 * n || h.ncols() != 2 * n {
            return Err(invalid("h", format!("expected {0}x{0} matrix, got {1}x{2}", 2 * n, h.nrows(), h.ncols())));
        }
        for p in 0..2 * n {
            if h[(p, p)] != 0.0 {
                return Err(invalid(format!("h[{},{}]", p + 1, p + 1), "diagonal must vanish"));
            }
            for q in (p + 1)..2 * n {
                if h[(p, q)] != -h[(q, p)] {
                    return Err(invalid(format!("h[{},{}]", p + 1, q + 1), "matrix is not antisymmetric"));
                }
                if !h[(p, q)].is_finite() {
                    return Err(invalid(format!("h[{},{}]", p + 1, q + 1), "entry is not finite"));
                }
            }
        }
        let support = if m == 64 { u64::MAX } else { (1u64 << m) - 1 };
        for (i, t) in impurity.iter().enumerate() {
            let path = format!("impurity[{i}]");
            if weight(t.mask) % 2 == 1 {
                return Err(invalid(format!("{path}.mask"), "mask must have even weight"));
            }
            if t.mask & !support != 0 {
                return Err(invalid(format!("{path}.mask"), format!("mask leaves the first m = {m} Majoranas")));
            }
            if !t.coeff.re.is_finite() || !t.coeff.im.is_finite() {
                return Err(invalid(path, "coefficient is not finite"));
            }
            let scale = t.coeff.norm().max(f64::MIN_POSITIVE);
            let bad = if weight(t.mask) % 4 == 0 { t.coeff.im } else { t.coeff.re };
            if bad.abs() > 1e-14 * scale {
                let want = if weight(t.mask) % 4 == 0 { "real" } else { "imaginary" };
                return Err(invalid(path, format!("coefficient must be {want} for a Hermitian term")));
            }
        }
        if !offset.is_finite() {
            return Err(invalid("offset", "offset is not finite"));
        }
        let model = Self { n, m, h, impurity, offset, norm_check };
        if norm_check {
            let norm = operator_norm(&model.h);
            if norm > 1.0 + 1e-12 {
                return Err(invalid("h", format!("norm_check requires ‖h‖ ≤ 1, got {norm}")));
            }
        }
        Ok(model)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn impurity(&self) -> &[ImpurityTerm] {
        &self.impurity
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn norm_check(&self) -> bool {
        self.norm_check
    }

    /// Whether `‖h‖ ≤ 1`, the normalization assumed by the subspace algorithm.
    pub fn is_normalized(&self) -> bool {
        operator_norm(&self.h) <= 1.0 + 1e-12
    }

    pub fn canonical_modes(&self) -> Result<CanonicalModes<f64>> {
        canonical_modes(&self.h)
    }

    /// `e₀ = ‖h‖₁/4`, half the sum of the single-particle energies.
    pub fn e0(&self) -> f64 {
        if self.h.is_empty() {
            return 0.0;
        }
        self.h.clone().svd(false, false).singular_values.sum() / 4.0
    }

    /// Total scalar part `e₀ + offset` of the bath Hamiltonian.
    pub fn bath_constant(&self) -> f64 {
        self.e0() + self.offset
    }

    /// `H_imp` as a Majorana polynomial.
    pub fn impurity_poly(&self) -> MajoranaPoly {
        let mut p = MajoranaPoly::new();
        for t in &self.impurity {
            p.add_term(t.mask, t.coeff);
        }
        p
    }

    /// `(i/4) Σ h_pq c_p c_q` without constants.
    pub fn bath_poly(&self) -> MajoranaPoly {
        let mut p = MajoranaPoly::new();
        for a in 0..2 * self.n {
            for b in (a + 1)..2 * self.n {
                if self.h[(a, b)] != 0.0 {
                    p.add_term((1 << a) | (1 << b), Complex64::new(0.0, 0.5 * self.h[(a, b)]));
                }
            }
        }
        p
    }

    /// The full Hamiltonian, constants included.
    pub fn hamiltonian_poly(&self) -> MajoranaPoly {
        let mut p = self.bath_poly();
        p.add_scaled(&self.impurity_poly(), Complex64::new(1.0, 0.0));
        p.add_term(0, Complex64::new(self.bath_constant(), 0.0));
        p.prune(0.0);
        p
    }

    /// Same model with a different bath matrix; the offset is kept, so the
    /// constant `e₀` follows the new `h`.
    pub fn with_h(&self, h: DMatrix<f64>) -> Result<Self> {
        Self::new(self.n, self.m, h, self.impurity.clone(), self.offset, false)
    }

    /// Same model with `H_imp` removed.
    pub fn without_impurity(&self) -> Self {
        Self { impurity: Vec::new(), ..self.clone() }
    }

    // ---- JSON ----

    pub fn to_json(&self) -> String {
        let mut h = Vec::new();
        for p in 0..2 * self.n {
            for q in (p + 1)..2 * self.n {
                if self.h[(p, q)] != 0.0 {
                    h.push((p + 1, q + 1, self.h[(p, q)]));
                }
            }
        }
        let impurity = self
            .impurity
            .iter()
            .map(|t| TermDoc { mask: mask_indices(t.mask).into_iter().map(|p| p + 1).collect(), re: t.coeff.re, im: t.coeff.im })
            .collect();
        let inferred = inferred_m(&self.impurity);
        let doc = ModelDoc {
            n: self.n,
            h,
            impurity,
            norm_check: self.norm_check,
            m: (inferred != self.m).then_some(self.m),
            offset: (self.offset != 0.0).then_some(self.offset),
        };
        serde_json::to_string_pretty(&doc).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text).map_err(|e| invalid("$", e.to_string()))?;
        let n = doc.n;
        if n == 0 || 2 * n > MAX_MAJORANAS {
            return Err(invalid("n", format!("mode count must be in 1..={}", MAX_MAJORANAS / 2)));
        }
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        for (i, &(p, q, v)) in doc.h.iter().enumerate() {
            if !(1 <= p && p < q && q <= 2 * n) {
                return Err(invalid(format!("h[{i}]"), format!("indices must satisfy 1 ≤ p < q ≤ {}", 2 * n)));
            }
            if h[(p - 1, q - 1)] != 0.0 {
                return Err(invalid(format!("h[{i}]"), "duplicate entry"));
            }
            h[(p - 1, q - 1)] = v;
            h[(q - 1, p - 1)] = -v;
        }
        let mut impurity = Vec::with_capacity(doc.impurity.len());
        for (i, t) in doc.impurity.iter().enumerate() {
            if t.mask.iter().any(|&p| p == 0 || p > 2 * n) {
                return Err(invalid(format!("impurity[{i}].mask"), format!("indices must lie in 1..={}", 2 * n)));
            }
            let zero_based: Vec<usize> = t.mask.iter().map(|&p| p - 1).collect();
            let mask = mask_from_indices(&zero_based).map_err(|e| invalid(format!("impurity[{i}].mask"), e.to_string()))?;
            impurity.push(ImpurityTerm { mask, coeff: Complex64::new(t.re, t.im) });
        }
        let m = doc.m.unwrap_or_else(|| inferred_m(&impurity));
        Self::new(n, m, h, impurity, doc.offset.unwrap_or(0.0), doc.norm_check)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

/// Smallest even `m` covering every impurity mask.
fn inferred_m(terms: &[ImpurityTerm]) -> usize {
    let top = terms.iter().map(|t| 64 - t.mask.leading_zeros() as usize).max().unwrap_or(0);
    top + top % 2
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    n: usize,
    #[serde(default)]
    h: Vec<(usize, usize, f64)>,
    #[serde(default)]
    impurity: Vec<TermDoc>,
    #[serde(default)]
    norm_check: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    offset: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermDoc {
    mask: Vec<usize>,
    re: f64,
    #[serde(default)]
    im: f64,
}

/// Anderson impurity model: a periodic critical Majorana chain
/// `i Σ_{j=1}^{2n} c_j c_{j+1}` with `U a₁†a₁ a₂†a₂` on the first two modes.
///
/// Energies follow the raw convention (no `e₀` shift).
pub fn anderson(n: usize, u: f64) -> Result<ImpurityModel> {
    if n < 3 {
        return Err(Error::InvalidParameter { name: "n".into(), reason: "Anderson model needs n ≥ 3".into() });
    }
    if !(u >= 0.0) {
        return Err(Error::InvalidParameter { name: "U".into(), reason: "interaction must be nonnegative".into() });
    }
    let dim = 2 * n;
    let mut h = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let k = (j + 1) % dim;
        h[(j, k)] = 2.0;
        h[(k, j)] = -2.0;
    }
    let q = u / 4.0;
    let impurity = vec![
        ImpurityTerm { mask: 0b1111, coeff: Complex64::new(-q, 0.0) },
        ImpurityTerm { mask: 0b0011, coeff: Complex64::new(0.0, q) },
        ImpurityTerm { mask: 0b1100, coeff: Complex64::new(0.0, q) },
        ImpurityTerm { mask: 0, coeff: Complex64::new(q, 0.0) },
    ];
    let base = ImpurityModel::new(n, 4, h, impurity, 0.0, false)?;
    let offset = -base.e0();
    Ok(ImpurityModel { offset, ..base })
}

/// Random model with a Gaussian bath scaled to `‖h‖ = 1` and one term for
/// every nonempty even mask on the first `m` Majoranas, coefficients
/// uniform in `[-1, 1]`.
pub fn random_model<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<ImpurityModel> {
    let dim = 2 * n;
    let mut h = DMatrix::zeros(dim, dim);
    for p in 0..dim {
        for q in (p + 1)..dim {
            let v: f64 = rng.sample(StandardNormal);
            h[(p, q)] = v;
            h[(q, p)] = -v;
        }
    }
    let norm = operator_norm(&h);
    if norm > 0.0 {
        h /= norm * (1.0 + 1e-15);
    }
    let mut impurity = Vec::new();
    for mask in 1u64..(1u64 << m) {
        if weight(mask) % 2 == 0 {
            let g: f64 = rng.random_range(-1.0..1.0);
            let coeff = if weight(mask) % 4 == 0 { Complex64::new(g, 0.0) } else { Complex64::new(0.0, g) };
            impurity.push(ImpurityTerm { mask, coeff });
        }
    }
    ImpurityModel::new(n, m, h, impurity, 0.0, true)
}

/// Raises every single-particle energy below `γ/m` to `γ/m`.
///
/// The ground energy moves by at most `γ`, upwards.
pub fn truncate(model: &ImpurityModel, gamma: f64) -> Result<ImpurityModel> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter { name: "gamma".into(), reason: "must be positive".into() });
    }
    let floor = gamma / model.m().max(1) as f64;
    let modes = model.canonical_modes()?;
    if modes.energies.iter().all(|&e| e >= floor) {
        return Ok(model.clone());
    }
    let energies: Vec<f64> = modes.energies.iter().map(|&e| e.max(floor)).collect();
    let rebuilt = modes.rotation.transpose() * block_diag(&energies) * &modes.rotation;
    let h = (&rebuilt - rebuilt.transpose()) * 0.5;
    model.with_h(h)
}

/// Bath modes after the unitary rotation of each degenerate energy group
/// that leaves at most `m` modes per group coupled to the impurity.
#[derive(Clone, Debug)]
pub struct DecoupledFrame {
    /// Row `i` holds `u_i` with `b'_i = Σ_q u_iq c_q`.
    pub annihilators: DMatrix<Complex64>,
    /// Energy of each new mode.
    pub energies: Vec<f64>,
    /// Mode indices of each degeneracy group, coupled modes first.
    pub groups: Vec<Vec<usize>>,
    pub coupled: Vec<usize>,
    pub decoupled: Vec<usize>,
    /// Unitary acting on the canonical annihilators: `b' = V b`.
    pub rotation: DMatrix<Complex64>,
}

impl DecoupledFrame {
    /// Coefficient vector `u_i` of `b'_i`.
    pub fn annihilator(&self, i: usize) -> Vec<Complex64> {
        self.annihilators.row(i).iter().copied().collect()
    }
}

/// Decoupling with energies grouped when equal within `group_tolerance`.
pub fn decouple(model: &ImpurityModel, group_tolerance: f64) -> Result<DecoupledFrame> {
    let modes = model.canonical_modes()?;
    let mut labels = Vec::with_capacity(modes.n_modes());
    let mut label = 0usize;
    for j in 0..modes.n_modes() {
        if j > 0 && modes.energies[j] - modes.energies[j - 1] > group_tolerance {
            label += 1;
        }
        labels.push(label);
    }
    let energies = modes.energies.clone();
    decouple_groups(model, &modes, &energies, &labels)
}

/// Decoupling for caller-supplied group labels (e.g. exact grid indices)
/// and energies assigned to the canonical modes.
pub fn decouple_groups(
    model: &ImpurityModel,
    modes: &CanonicalModes<f64>,
    energies: &[f64],
    labels: &[usize],
) -> Result<DecoupledFrame> {
    let n = modes.n_modes();
    if labels.len() != n || energies.len() != n {
        return Err(Error::DimensionMismatch("one group label and energy per mode required".into()));
    }
    let m = model.m();
    let u: Vec<DVector<Complex64>> = (0..n).map(|j| modes.annihilator(j)).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&j| (labels[j], j));
    let mut grouped: Vec<Vec<usize>> = Vec::new();
    for &j in &order {
        match grouped.last_mut() {
            Some(g) if labels[g[0]] == labels[j] => g.push(j),
            _ => grouped.push(vec![j]),
        }
    }

    let mut annihilators = DMatrix::zeros(n, 2 * n);
    let mut rotation = DMatrix::zeros(n, n);
    let mut new_energies = vec![0.0; n];
    let mut groups = Vec::new();
    let mut coupled = Vec::new();
    let mut decoupled = Vec::new();
    let mut next = 0usize;
    let no_impurity = model.impurity().is_empty() || m == 0;
    for members in grouped {
        let size = members.len();
        // T: coefficients of the group's annihilators on c_1..c_m
        let t = DMatrix::from_fn(size, m, |a, p| u[members[a]][p]);
        let tt = &t * t.adjoint();
        let eig = SymmetricEigen::new(tt);
        let mut idx: Vec<usize> = (0..size).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let mut group = Vec::with_capacity(size);
        for &e in &idx {
            // new mode Σ_a conj(w_a) b_a; its impurity components are T† w
            let w = eig.eigenvectors.column(e);
            let strength = (t.adjoint() * w).norm();
            let is_coupled = !no_impurity && strength > COUPLING_TOLERANCE;
            let mut row = DVector::<Complex64>::zeros(2 * n);
            for (a, &j) in members.iter().enumerate() {
                let c = w[a].conj();
                rotation[(next, j)] = c;
                row.axpy(c, &u[j], Complex64::new(1.0, 0.0));
            }
            if !is_coupled {
                for p in 0..m {
                    row[p] = Complex64::new(0.0, 0.0);
                }
            }
            annihilators.set_row(next, &row.transpose());
            new_energies[next] = energies[members[0]];
            if is_coupled {
                coupled.push(next);
            } else {
                decoupled.push(next);
            }
            group.push(next);
            next += 1;
        }
        groups.push(group);
    }
    Ok(DecoupledFrame { annihilators, energies: new_energies, groups, coupled, decoupled, rotation })
}

/// Majoranas of the mapped model grouped into chain sites of `m` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct QuditChain {
    /// Majoranas carried by the chain, padded to even with auxiliaries.
    pub majoranas: usize,
    /// Auxiliary Majoranas added for padding (0 or 1).
    pub auxiliary: usize,
    /// Qubits per site; the last site may hold fewer than `m`.
    pub site_qubits: Vec<usize>,
}

/// Output of [`block_tridiagonalize`].
#[derive(Clone, Debug)]
pub struct BlockTridiagonal {
    /// Orthogonal matrix whose rows are the new Majorana directions `f^p`.
    pub basis: DMatrix<f64>,
    /// Sizes of the Krylov blocks `K_1, K_2, …`.
    pub block_sizes: Vec<usize>,
    /// `h` restricted to the Krylov space (block-tridiagonal).
    pub h_prime: DMatrix<f64>,
    /// `h` restricted to the orthogonal complement.
    pub h_residual: DMatrix<f64>,
    pub chain: QuditChain,
    /// The model expressed in the new Majoranas `c̃_p = Σ_q f^p_q c_q`.
    pub model: ImpurityModel,
}

/// Block Krylov basis of `span(L₁, hL₁, h²L₁, …)` with `L₁ = span(e₁…e_m)`.
pub fn block_tridiagonalize(model: &ImpurityModel) -> Result<BlockTridiagonal> {
    let dim = 2 * model.n();
    let m = model.m();
    let h = model.h();
    let tol = 1e-10 * operator_norm(h).max(1.0);

    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(dim);
    let mut block_sizes = Vec::new();
    let mut current: Vec<DVector<f64>> = (0..m).map(|p| DVector::from_fn(dim, |q, _| if q == p { 1.0 } else { 0.0 })).collect();
    while !current.is_empty() {
        let mut block = Vec::new();
        for v in current {
            if let Some(w) = orthonormalize(v, &basis, tol) {
                basis.push(w.clone());
                block.push(w);
            }
        }
        if block.is_empty() {
            break;
        }
        block_sizes.push(block.len());
        current = block.iter().map(|v| h * v).collect();
    }
    let krylov_dim = basis.len();
    // complete with the orthogonal complement
    for p in 0..dim {
        if basis.len() == dim {
            break;
        }
        let e = DVector::from_fn(dim, |q, _| if q == p { 1.0 } else { 0.0 });
        if let Some(w) = orthonormalize(e, &basis, 1e-8) {
            basis.push(w);
        }
    }
    let o = DMatrix::from_fn(dim, dim, |r, q| basis[r][q]);
    let mut rotated = &o * h * o.transpose();
    // the Krylov space is h-invariant: the off-diagonal blocks vanish
    for r in 0..dim {
        for c in 0..dim {
            let cross = (r < krylov_dim) != (c < krylov_dim);
            if cross || r == c {
                rotated[(r, c)] = 0.0;
            }
        }
    }
    let rotated = (&rotated - rotated.transpose()) * 0.5;
    let h_prime = rotated.view((0, 0), (krylov_dim, krylov_dim)).into_owned();
    let h_residual = rotated.view((krylov_dim, krylov_dim), (dim - krylov_dim, dim - krylov_dim)).into_owned();

    let auxiliary = krylov_dim % 2;
    let majoranas = krylov_dim + auxiliary;
    let qubits = majoranas / 2;
    let per_site = (m.max(2)).min(qubits.max(1));
    let mut site_qubits = Vec::new();
    let mut left = qubits;
    while left > 0 {
        let s = per_site.min(left);
        site_qubits.push(s);
        left -= s;
    }
    let mapped = ImpurityModel::new(model.n(), m, rotated, model.impurity().to_vec(), model.offset(), false)?;
    Ok(BlockTridiagonal {
        basis: o,
        block_sizes,
        h_prime,
        h_residual,
        chain: QuditChain { majoranas, auxiliary, site_qubits },
        model: mapped,
    })
}

/// Two-pass Gram–Schmidt; `None` when `v` lies in the span of `basis`.
fn orthonormalize(mut v: DVector<f64>, basis: &[DVector<f64>], tol: f64) -> Option<DVector<f64>> {
    let start = v.norm();
    for _ in 0..2 {
        for b in basis {
            let c = b.dot(&v);
            v.axpy(-c, b, 1.0);
        }
    }
    let norm = v.norm();
    if norm <= tol || norm <= 1e-8 * start {
        None
    } else {
        Some(v / norm)
    }
}
