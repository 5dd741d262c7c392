//! Skew-symmetric matrix primitives: Pfaffians and canonical-mode
//! decomposition of real antisymmetric (bath) matrices.

use nalgebra::{ComplexField, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{lit, Cplx, Real};

/// Relative tolerance of the antisymmetry check.
pub const SKEW_TOLERANCE: f64 = 1e-12;

/// Default threshold below which a single-particle energy is a zero mode.
pub const ZERO_MODE_THRESHOLD: f64 = 1e-12;

/// A square matrix `A` with `A = -A^T` (plain transpose, no conjugation).
#[derive(Clone, Debug, PartialEq)]
pub struct SkewMatrix<T: ComplexField> {
    entries: DMatrix<T>,
}

impl<T: ComplexField + Copy> SkewMatrix<T> {
    /// Validates antisymmetry and zeroes the diagonal exactly.
    pub fn new(mut entries: DMatrix<T>) -> Result<Self> {
        check_skew(&entries)?;
        let n = entries.nrows();
        for i in 0..n {
            entries[(i, i)] = T::zero();
            for j in 0..i {
                let v = (entries[(j, i)] - entries[(i, j)]) * nalgebra::convert::<f64, T>(0.5);
                entries[(j, i)] = v;
                entries[(i, j)] = -v;
            }
        }
        Ok(Self { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<T> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.entries
    }

    pub fn pfaffian(&self) -> T {
        let n = self.dim();
        let mut buf: Vec<T> = self.entries.transpose().iter().copied().collect();
        pfaffian_in_place(&mut buf, n)
    }
}

/// Largest entry of `|A + A^T|`, relative to `max(1, max|A|)`.
pub fn skew_deviation<T: ComplexField + Copy>(a: &DMatrix<T>) -> f64 {
    let n = a.nrows();
    let mut scale = 1.0f64;
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let v: f64 = nalgebra::try_convert(a[(i, j)].modulus()).unwrap_or(f64::NAN);
            scale = scale.max(v);
            let s: f64 = nalgebra::try_convert((a[(i, j)] + a[(j, i)]).modulus()).unwrap_or(f64::NAN);
            dev = dev.max(s);
        }
    }
    dev / scale
}

fn check_skew<T: ComplexField + Copy>(a: &DMatrix<T>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let deviation = skew_deviation(a);
    if !(deviation <= SKEW_TOLERANCE) {
        return Err(Error::NotAntisymmetric { deviation });
    }
    Ok(())
}

/// Pfaffian of an antisymmetric matrix, sign included. Odd dimensions give 0.
pub fn pfaffian<T: ComplexField + Copy>(a: &DMatrix<T>) -> Result<T> {
    check_skew(a)?;
    let n = a.nrows();
    let mut buf: Vec<T> = a.transpose().iter().copied().collect();
    Ok(pfaffian_in_place(&mut buf, n))
}

/// Pfaffian of the row-major `n x n` antisymmetric matrix stored in `a`,
/// destroying its contents.
///
/// Skew Gauss elimination with partial pivoting (Parlett-Reid): each step
/// moves the largest entry of the current column onto the sub-diagonal,
/// records the 2x2 pivot and eliminates the remaining rows, leaving a
/// tridiagonal skew matrix whose odd super-diagonal entries multiply to the
/// Pfaffian.
pub fn pfaffian_in_place<T: ComplexField + Copy>(a: &mut [T], n: usize) -> T {
    debug_assert_eq!(a.len(), n * n);
    if n % 2 == 1 {
        return T::zero();
    }
    let mut pf = T::one();
    let mut k = 0;
    while k + 1 < n {
        // pivot search in column k below the diagonal
        let mut kp = k + 1;
        let mut best = a[(k + 1) * n + k].modulus();
        for i in (k + 2)..n {
            let v = a[i * n + k].modulus();
            if v > best {
                best = v;
                kp = i;
            }
        }
        if kp != k + 1 {
            for j in k..n {
                a.swap((k + 1) * n + j, kp * n + j);
            }
            for i in k..n {
                a.swap(i * n + k + 1, i * n + kp);
            }
            pf = -pf;
        }
        let pivot = a[k * n + k + 1];
        if pivot == T::zero() {
            return T::zero();
        }
        pf *= pivot;
        if k + 2 < n {
            let inv = T::one() / pivot;
            // rank-2 update of the trailing block
            for i in (k + 2)..n {
                let tau_i = a[k * n + i] * inv;
                let col_i = a[i * n + k + 1];
                if tau_i == T::zero() && col_i == T::zero() {
                    continue;
                }
                for j in (k + 2)..n {
                    let tau_j = a[k * n + j] * inv;
                    let col_j = a[j * n + k + 1];
                    a[i * n + j] += tau_i * col_j - col_i * tau_j;
                }
            }
        }
        k += 2;
    }
    pf
}

/// Pfaffian of the principal submatrix of a row-major `n x n` matrix
/// selected by `idx` (indices in increasing order).
pub fn sub_pfaffian<T: ComplexField + Copy>(a: &[T], n: usize, idx: &[usize]) -> T {
    let w = idx.len();
    match w {
        0 => T::one(),
        2 => a[idx[0] * n + idx[1]],
        4 => {
            let e = |p: usize, q: usize| a[idx[p] * n + idx[q]];
            e(0, 1) * e(2, 3) - e(0, 2) * e(1, 3) + e(0, 3) * e(1, 2)
        }
        _ if w % 2 == 1 => T::zero(),
        _ => {
            let mut buf = Vec::with_capacity(w * w);
            for &i in idx {
                for &j in idx {
                    buf.push(a[i * n + j]);
                }
            }
            pfaffian_in_place(&mut buf, w)
        }
    }
}

/// Canonical-mode decomposition of a real antisymmetric `2n x 2n` matrix.
///
/// Rows `2j, 2j+1` of `rotation` are the real vectors `x_j, y_j` with
/// `R h R^T = ⊕_j [[0, ε_j], [-ε_j, 0]]`; the canonical annihilation
/// operators are `b_j = Σ_q (x_j + i y_j)_q c_q / 2`.
#[derive(Clone, Debug)]
pub struct CanonicalModes<T: Real> {
    pub energies: Vec<T>,
    pub rotation: DMatrix<T>,
    pub zero_mode_count: usize,
}

impl<T: Real> CanonicalModes<T> {
    pub fn n_modes(&self) -> usize {
        self.energies.len()
    }

    /// `⊕_j [[0, ε_j], [-ε_j, 0]]`.
    pub fn block_form(&self) -> DMatrix<T> {
        block_diag(&self.energies)
    }

    /// `R^T (⊕ blocks) R`, which reproduces the decomposed matrix.
    pub fn reconstruct(&self) -> DMatrix<T> {
        self.rotation.transpose() * self.block_form() * &self.rotation
    }

    /// Complex coefficient vector `u_j` of `b_j = Σ_q u_{jq} c_q`.
    pub fn annihilator(&self, j: usize) -> DVector<Cplx<T>> {
        let half: T = lit(0.5);
        let x = self.rotation.row(2 * j);
        let y = self.rotation.row(2 * j + 1);
        DVector::from_fn(self.rotation.ncols(), |q, _| Cplx::new(x[q] * half, y[q] * half))
    }
}

/// `⊕_j [[0, e_j], [-e_j, 0]]`.
pub fn block_diag<T: Real>(e: &[T]) -> DMatrix<T> {
    let n = e.len();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for (j, &v) in e.iter().enumerate() {
        m[(2 * j, 2 * j + 1)] = v;
        m[(2 * j + 1, 2 * j)] = -v;
    }
    m
}

/// Canonical modes with the default zero-mode threshold.
pub fn canonical_modes<T: Real>(h: &DMatrix<T>) -> Result<CanonicalModes<T>> {
    canonical_modes_with(h, lit(ZERO_MODE_THRESHOLD))
}

/// Canonical modes: energies ascending, ties kept in eigensolver order,
/// energies at or below `zero_threshold` set to exactly zero.
pub fn canonical_modes_with<T: Real>(h: &DMatrix<T>, zero_threshold: T) -> Result<CanonicalModes<T>> {
    check_skew(h)?;
    let dim = h.nrows();
    if dim % 2 == 1 {
        return Err(Error::DimensionMismatch(format!("canonical modes need even dimension, got {dim}")));
    }
    let n = dim / 2;
    if n == 0 {
        return Ok(CanonicalModes { energies: vec![], rotation: DMatrix::zeros(0, 0), zero_mode_count: 0 });
    }
    // i*h is Hermitian; eigenvalue -ε of i*h <=> h v = iε v
    let ih: DMatrix<Cplx<T>> = h.map(|v| Cplx::new(T::zero(), v));
    let eig = SymmetricEigen::new(ih);
    let sqrt2 = lit::<T>(2.0).sqrt();

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap_or(std::cmp::Ordering::Equal));

    let mut positive: Vec<(T, DVector<T>, DVector<T>)> = Vec::new();
    let mut zero_vectors: Vec<DVector<T>> = Vec::new();
    for &idx in &order {
        let lambda = eig.eigenvalues[idx];
        let v = eig.eigenvectors.column(idx);
        if lambda < -zero_threshold {
            let x = DVector::from_fn(dim, |q, _| v[q].re * sqrt2);
            let y = DVector::from_fn(dim, |q, _| v[q].im * sqrt2);
            positive.push((-lambda, x, y));
        } else if lambda <= zero_threshold {
            zero_vectors.push(DVector::from_fn(dim, |q, _| v[q].re));
            zero_vectors.push(DVector::from_fn(dim, |q, _| v[q].im));
        }
    }
    // positive modes sorted ascending in ε (stable on ties)
    positive.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let zero_modes = n - positive.len();

    let mut basis: Vec<DVector<T>> = Vec::with_capacity(dim);
    // real orthonormal basis of ker h, built from real and imaginary parts
    let mut pool = zero_vectors;
    for _ in 0..(2 * zero_modes) {
        let mut best: Option<(usize, T)> = None;
        for (i, v) in pool.iter_mut().enumerate() {
            for b in &basis {
                let c = b.dot(v);
                v.axpy(-c, b, T::one());
            }
            let nv = v.norm();
            if best.map_or(true, |(_, bn)| nv > bn) {
                best = Some((i, nv));
            }
        }
        let (i, nv) = best.ok_or_else(|| Error::DimensionMismatch("kernel basis deficient".into()))?;
        let v = pool.swap_remove(i) / nv;
        basis.push(v);
    }
    let mut energies = vec![T::zero(); zero_modes];
    for (e, x, y) in positive {
        energies.push(e);
        basis.push(x);
        basis.push(y);
    }
    // clean up residual non-orthogonality
    for i in 0..basis.len() {
        let (done, rest) = basis.split_at_mut(i);
        let v = &mut rest[0];
        for b in done.iter() {
            let c = b.dot(v);
            v.axpy(-c, b, T::one());
        }
        let nv = v.norm();
        *v /= nv;
    }
    let rotation = DMatrix::from_fn(dim, dim, |r, q| basis[r][q]);
    Ok(CanonicalModes { energies, rotation, zero_mode_count: zero_modes })
}

/// Smallest nonzero single-particle energy; `+∞` when all energies vanish.
pub fn spectral_gap<T: Real>(modes: &CanonicalModes<T>) -> T {
    modes
        .energies
        .iter()
        .copied()
        .filter(|&e| e > T::zero())
        .fold(lit::<T>(f64::INFINITY), |a, b| if b < a { b } else { a })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_skew(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v: f64 = rng.random_range(-1.0..1.0);
                a[(i, j)] = v;
                a[(j, i)] = -v;
            }
        }
        a
    }

    /// Pfaffian by recursive expansion along the first row.
    fn pf_expand(a: &DMatrix<f64>) -> f64 {
        let n = a.nrows();
        if n == 0 {
            return 1.0;
        }
        if n % 2 == 1 {
            return 0.0;
        }
        let mut total = 0.0;
        for j in 1..n {
            let keep: Vec<usize> = (1..n).filter(|&k| k != j).collect();
            let sub = DMatrix::from_fn(n - 2, n - 2, |r, c| a[(keep[r], keep[c])]);
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            total += sign * a[(0, j)] * pf_expand(&sub);
        }
        total
    }

    #[test]
    fn two_by_two_is_upper_entry() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.37, -0.37, 0.0]);
        assert_eq!(pfaffian(&a).unwrap(), 0.37);
    }

    #[test]
    fn odd_and_zero_matrices_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(pfaffian(&random_skew(5, &mut rng)).unwrap(), 0.0);
        assert_eq!(pfaffian(&DMatrix::<f64>::zeros(6, 6)).unwrap(), 0.0);
    }

    #[test]
    fn rejects_symmetric_input() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(pfaffian(&a), Err(Error::NotAntisymmetric { .. })));
    }

    #[test]
    fn matches_expansion_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2, 4, 6, 8] {
            let a = random_skew(n, &mut rng);
            let want = pf_expand(&a);
            let got = pfaffian(&a).unwrap();
            assert!((got - want).abs() < 1e-12 * want.abs().max(1.0), "n={n}: {got} vs {want}");
        }
    }

    #[test]
    fn square_equals_determinant_up_to_dim_40() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in (2..=40).step_by(2) {
            let a = random_skew(n, &mut rng);
            let pf = pfaffian(&a).unwrap();
            let det = a.clone().determinant();
            assert!((pf * pf - det).abs() <= 1e-9 * det.abs(), "n={n}");
        }
    }

    #[test]
    fn complex_pfaffian_square_equals_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in [4usize, 10, 16] {
            let mut a = DMatrix::<Complex64>::zeros(n, n);
            for i in 0..n {
                for j in (i + 1)..n {
                    let v = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    a[(i, j)] = v;
                    a[(j, i)] = -v;
                }
            }
            let pf = pfaffian(&a).unwrap();
            let det = a.clone().determinant();
            assert!((pf * pf - det).norm() <= 1e-9 * det.norm());
        }
    }

    #[test]
    fn congruence_multiplies_by_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [4usize, 8, 12] {
            let a = random_skew(n, &mut rng);
            let r = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let lhs = pfaffian(&(&r * &a * r.transpose())).unwrap();
            let rhs = r.clone().determinant() * pfaffian(&a).unwrap();
            assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1e-300));
        }
    }

    #[test]
    fn single_block_mode() {
        let h = DMatrix::from_row_slice(2, 2, &[0.0, 0.7, -0.7, 0.0]);
        let modes = canonical_modes(&h).unwrap();
        assert!((modes.energies[0] - 0.7).abs() < 1e-14);
        assert_eq!(modes.zero_mode_count, 0);
        assert!((modes.reconstruct() - h).norm() < 1e-14);
    }

    #[test]
    fn zero_matrix_is_all_zero_modes() {
        let modes = canonical_modes(&DMatrix::<f64>::zeros(6, 6)).unwrap();
        assert_eq!(modes.zero_mode_count, 3);
        assert!(modes.energies.iter().all(|&e| e == 0.0));
        assert!((&modes.rotation * modes.rotation.transpose() - DMatrix::identity(6, 6)).norm() < 1e-12);
        assert!(spectral_gap(&modes).is_infinite());
    }

    #[test]
    fn energies_match_singular_values_and_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in 1..=6 {
            let h = random_skew(2 * n, &mut rng);
            let modes = canonical_modes(&h).unwrap();
            let mut sv: Vec<f64> = h.clone().svd(false, false).singular_values.iter().copied().collect();
            sv.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for j in 0..n {
                assert!((modes.energies[j] - sv[2 * j]).abs() < 1e-10);
                assert!((modes.energies[j] - sv[2 * j + 1]).abs() < 1e-10);
            }
            let orth = &modes.rotation * modes.rotation.transpose() - DMatrix::identity(2 * n, 2 * n);
            assert!(orth.norm() < 1e-10);
            assert!((modes.reconstruct() - &h).norm() < 1e-10);
        }
    }

    #[test]
    fn degenerate_and_zero_energies() {
        // two zero modes plus a doubly degenerate level, hidden by a rotation
        let base = block_diag(&[0.0, 0.0, 0.5, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = DMatrix::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
        let q = g.qr().q();
        let h = &q * &base * q.transpose();
        let modes = canonical_modes(&h).unwrap();
        assert_eq!(modes.zero_mode_count, 2);
        assert_eq!(&modes.energies[..2], &[0.0, 0.0]);
        assert!((modes.energies[2] - 0.5).abs() < 1e-12);
        assert!((modes.reconstruct() - &h).norm() < 1e-10);
        assert!((spectral_gap(&modes) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gap_skips_zero_modes() {
        let modes = CanonicalModes::<f64> {
            energies: vec![0.0, 0.3, 0.9],
            rotation: DMatrix::identity(6, 6),
            zero_mode_count: 1,
        };
        assert_eq!(spectral_gap(&modes), 0.3);
    }

    #[test]
    fn generic_over_f32() {
        let a = DMatrix::<f32>::from_row_slice(4, 4, &[
            0.0, 1.0, 2.0, 3.0, //
            -1.0, 0.0, 4.0, 5.0, //
            -2.0, -4.0, 0.0, 6.0, //
            -3.0, -5.0, -6.0, 0.0,
        ]);
        // 1*6 - 2*5 + 3*4
        assert!((SkewMatrix::new(a).unwrap().pfaffian() - 8.0).abs() < 1e-5);
    }
}
