//! Eigensolver helpers shared by the oracle and the solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Lowest eigenpair of a Hermitian operator.
#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<Complex64>,
    /// `‖A v − λ v‖` of the returned pair.
    pub residual: f64,
}

/// Settings of the restarted Lanczos iteration.
#[derive(Clone, Copy, Debug)]
pub struct LanczosConfig {
    pub krylov_dim: usize,
    pub max_restarts: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for LanczosConfig {
    fn default() -> Self {
        Self { krylov_dim: 60, max_restarts: 400, tolerance: 1e-10, seed: 0x5eed }
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Lowest eigenpair of the Hermitian operator `apply` (`out = A v`) by
/// explicitly restarted Lanczos with full reorthogonalization. The
/// iteration restarts from the current Ritz vector until the residual
/// drops below `tolerance` (scaled by `max(1, |λ|)`).
pub fn lanczos_lowest<F>(dim: usize, mut apply: F, config: LanczosConfig) -> Eigenpair
where
    F: FnMut(&[Complex64], &mut [Complex64]),
{
    assert!(dim > 0, "empty operator");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut start: Vec<Complex64> =
        (0..dim).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let s = norm(&start);
    start.iter_mut().for_each(|x| *x /= s);

    let k_max = config.krylov_dim.max(2).min(dim);
    let mut best = Eigenpair { value: f64::INFINITY, vector: start.clone(), residual: f64::INFINITY };
    let mut w = vec![Complex64::new(0.0, 0.0); dim];
    for _ in 0..config.max_restarts.max(1) {
        let mut basis: Vec<Vec<Complex64>> = vec![start.clone()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        for j in 0..k_max {
            apply(&basis[j], &mut w);
            let a = dot(&basis[j], &w).re;
            alpha.push(a);
            for _ in 0..2 {
                for v in &basis {
                    let c = dot(v, &w);
                    w.iter_mut().zip(v).for_each(|(x, y)| *x -= c * y);
                }
            }
            let b = norm(&w);
            if j + 1 == k_max || b <= 1e-13 * a.abs().max(1.0) {
                beta.push(b);
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        }
        let k = alpha.len();
        let t = DMatrix::from_fn(k, k, |r, c| {
            if r == c {
                alpha[r]
            } else if r + 1 == c {
                beta[r]
            } else if c + 1 == r {
                beta[c]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let (i, &theta) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap();
        let coeffs = eig.eigenvectors.column(i);
        let mut y = vec![Complex64::new(0.0, 0.0); dim];
        for (c, v) in coeffs.iter().zip(&basis) {
            y.iter_mut().zip(v).for_each(|(acc, x)| *acc += *c * x);
        }
        let ny = norm(&y);
        y.iter_mut().for_each(|x| *x /= ny);
        apply(&y, &mut w);
        let residual = w.iter().zip(&y).map(|(a, b)| (a - theta * b).norm_sqr()).sum::<f64>().sqrt();
        best = Eigenpair { value: theta, vector: y.clone(), residual };
        if residual <= config.tolerance * theta.abs().max(1.0) || k < k_max.min(dim) || k == dim {
            break;
        }
        start = y;
    }
    best
}

/// Lowest eigenpair of a dense Hermitian matrix.
pub fn dense_lowest(a: &DMatrix<Complex64>) -> Eigenpair {
    let eig = SymmetricEigen::new(a.clone());
    let (i, &value) = eig.eigenvalues.iter().enumerate().min_by(|x, y| x.1.partial_cmp(y.1).unwrap()).unwrap();
    let vector: Vec<Complex64> = eig.eigenvectors.column(i).iter().copied().collect();
    let v = DVector::from_column_slice(&vector);
    let residual = (a * &v - v.map(|x| x * value)).norm();
    Eigenpair { value, vector, residual }
}

/// Sorted eigenvalues of a dense Hermitian matrix.
pub fn hermitian_spectrum(a: &DMatrix<Complex64>) -> Vec<f64> {
    let mut e: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    e.sort_by(|x, y| x.partial_cmp(y).unwrap());
    e
}

/// Compressed sparse row Hermitian matrix.
#[derive(Clone, Debug, Default)]
pub struct CsrMatrix {
    pub dim: usize,
    pub row_start: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: Vec<Complex64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists; duplicates are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, Complex64)>>) -> Self {
        let dim = rows.len();
        let mut row_start = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut values = Vec::new();
        row_start.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_start.push(cols.len());
        }
        Self { dim, row_start, cols, values }
    }

    pub fn apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        for r in 0..self.dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.row_start[r]..self.row_start[r + 1] {
                acc += self.values[k] * v[self.cols[k]];
            }
            out[r] = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for k in self.row_start[r]..self.row_start[r + 1] {
                m[(r, self.cols[k])] += self.values[k];
            }
        }
        m
    }

    /// Largest `|A_rc − conj(A_cr)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.to_dense();
        (&d - d.adjoint()).iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lanczos_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 150;
        let g = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let a = &g + g.adjoint();
        let want = dense_lowest(&a);
        let got = lanczos_lowest(
            n,
            |v, out| {
                let r = &a * DVector::from_column_slice(v);
                out.copy_from_slice(r.as_slice());
            },
            LanczosConfig::default(),
        );
        assert!((got.value - want.value).abs() < 1e-9);
        assert!(got.residual < 1e-8);
    }

    #[test]
    fn tiny_operators() {
        let a = DMatrix::from_row_slice(1, 1, &[Complex64::new(-2.5, 0.0)]);
        let got = lanczos_lowest(1, |v, out| out[0] = a[(0, 0)] * v[0], LanczosConfig::default());
        assert_eq!(got.value, -2.5);
    }

    #[test]
    fn csr_duplicates_are_summed() {
        let one = Complex64::new(1.0, 0.0);
        let m = CsrMatrix::from_rows(vec![vec![(0, one), (1, one), (0, one)], vec![(0, one)]]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.to_dense()[(0, 0)], Complex64::new(2.0, 0.0));
    }
}
