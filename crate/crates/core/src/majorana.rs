//! Majorana monomials `c(x) = c_1^{x_1} ⋯ c_{2n}^{x_{2n}}` encoded as bit
//! masks (bit `p` stands for `c_{p+1}`), and sparse operator polynomials.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Bit mask of a Majorana monomial; supports up to 64 Majorana modes.
pub type Mask = u64;

pub const MAX_MAJORANAS: usize = 64;

/// Mask from 0-based Majorana indices. Repeated indices are rejected.
pub fn mask_from_indices(indices: &[usize]) -> Result<Mask> {
    let mut mask = 0u64;
    for &p in indices {
        if p >= MAX_MAJORANAS {
            return Err(Error::InvalidParameter {
                name: "mask".into(),
                reason: format!("Majorana index {} exceeds {}", p + 1, MAX_MAJORANAS),
            });
        }
        if mask & (1 << p) != 0 {
            return Err(Error::InvalidParameter { name: "mask".into(), reason: format!("repeated index {}", p + 1) });
        }
        mask |= 1 << p;
    }
    Ok(mask)
}

/// 0-based Majorana indices in increasing order.
pub fn mask_indices(mut mask: Mask) -> Vec<usize> {
    let mut out = Vec::with_capacity(mask.count_ones() as usize);
    while mask != 0 {
        out.push(mask.trailing_zeros() as usize);
        mask &= mask - 1;
    }
    out
}

#[inline]
pub fn weight(mask: Mask) -> u32 {
    mask.count_ones()
}

/// `c(x) c(y) = sign · c(x ⊕ y)`; returns `(sign, x ⊕ y)`.
#[inline]
pub fn monomial_product(x: Mask, y: Mask) -> (f64, Mask) {
    // every c_k of y moves left past the c_j of x with j > k
    let mut swaps = 0u32;
    let mut rest = y;
    while rest != 0 {
        let k = rest.trailing_zeros();
        swaps += (x >> k >> 1).count_ones();
        rest &= rest - 1;
    }
    (if swaps % 2 == 0 { 1.0 } else { -1.0 }, x ^ y)
}

/// `c(x)† = (-1)^{w(w-1)/2} c(x)` for weight `w`.
#[inline]
pub fn adjoint_sign(x: Mask) -> f64 {
    let w = x.count_ones();
    if (w * w.saturating_sub(1) / 2) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Sparse linear combination of Majorana monomials.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MajoranaPoly {
    pub terms: BTreeMap<Mask, Complex64>,
}

impl MajoranaPoly {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn identity(coeff: Complex64) -> Self {
        let mut p = Self::new();
        p.add_term(0, coeff);
        p
    }

    /// Single Majorana `c_{p+1}`.
    pub fn majorana(p: usize) -> Self {
        let mut poly = Self::new();
        poly.add_term(1 << p, Complex64::new(1.0, 0.0));
        poly
    }

    /// Linear form `Σ_q v_q c_q`.
    pub fn linear(v: &[Complex64]) -> Self {
        let mut poly = Self::new();
        for (q, &c) in v.iter().enumerate() {
            poly.add_term(1 << q, c);
        }
        poly
    }

    pub fn add_term(&mut self, mask: Mask, coeff: Complex64) {
        if coeff == Complex64::new(0.0, 0.0) {
            return;
        }
        *self.terms.entry(mask).or_insert(Complex64::new(0.0, 0.0)) += coeff;
    }

    pub fn add_scaled(&mut self, other: &MajoranaPoly, scale: Complex64) {
        for (&m, &c) in &other.terms {
            self.add_term(m, c * scale);
        }
    }

    pub fn mul(&self, other: &MajoranaPoly) -> MajoranaPoly {
        let mut out = MajoranaPoly::new();
        for (&x, &a) in &self.terms {
            for (&y, &b) in &other.terms {
                let (s, z) = monomial_product(x, y);
                out.add_term(z, a * b * s);
            }
        }
        out
    }

    pub fn adjoint(&self) -> MajoranaPoly {
        let mut out = MajoranaPoly::new();
        for (&x, &a) in &self.terms {
            out.add_term(x, a.conj() * adjoint_sign(x));
        }
        out
    }

    /// Drops coefficients with modulus at most `tol`.
    pub fn prune(&mut self, tol: f64) {
        self.terms.retain(|_, c| c.norm() > tol);
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let mut diff = self.adjoint();
        diff.add_scaled(self, Complex64::new(-1.0, 0.0));
        diff.max_abs() <= tol
    }

    /// Largest Majorana index used, plus one.
    pub fn span(&self) -> usize {
        self.terms.keys().map(|m| 64 - m.leading_zeros() as usize).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anticommutation() {
        for p in 0..6 {
            for q in 0..6 {
                let a = MajoranaPoly::majorana(p);
                let b = MajoranaPoly::majorana(q);
                let mut s = a.mul(&b);
                s.add_scaled(&b.mul(&a), Complex64::new(1.0, 0.0));
                s.prune(0.0);
                let want = if p == q { MajoranaPoly::identity(Complex64::new(2.0, 0.0)) } else { MajoranaPoly::new() };
                assert_eq!(s, want);
            }
        }
    }

    #[test]
    fn product_signs() {
        // c2 c1 = -c1 c2
        assert_eq!(monomial_product(0b10, 0b01), (-1.0, 0b11));
        assert_eq!(monomial_product(0b01, 0b10), (1.0, 0b11));
        // (c1 c2)(c1 c2) = -1
        assert_eq!(monomial_product(0b11, 0b11), (-1.0, 0));
        // (c1 c2 c3 c4)^2 = 1
        assert_eq!(monomial_product(0b1111, 0b1111), (1.0, 0));
    }

    #[test]
    fn product_is_associative() {
        let masks = [0b1011u64, 0b0110, 0b11100, 0b1, 0b101101];
        for &a in &masks {
            for &b in &masks {
                for &c in &masks {
                    let (s1, ab) = monomial_product(a, b);
                    let (s2, l) = monomial_product(ab, c);
                    let (s3, bc) = monomial_product(b, c);
                    let (s4, r) = monomial_product(a, bc);
                    assert_eq!(l, r);
                    assert_eq!(s1 * s2, s3 * s4);
                }
            }
        }
    }

    #[test]
    fn adjoint_matches_reversal() {
        // c(x)† reverses the order of the factors
        for x in 0u64..64 {
            let idx = mask_indices(x);
            let mut acc = (1.0, 0u64);
            for &p in idx.iter().rev() {
                let (s, m) = monomial_product(acc.1, 1 << p);
                acc = (acc.0 * s, m);
            }
            assert_eq!(acc.1, x);
            assert_eq!(acc.0, adjoint_sign(x), "mask {x:b}");
        }
    }

    #[test]
    fn hermitian_forms() {
        let mut h = MajoranaPoly::new();
        h.add_term(0b11, Complex64::new(0.0, 1.0));
        h.add_term(0b1111, Complex64::new(-0.5, 0.0));
        assert!(h.is_hermitian(0.0));
        h.add_term(0b101, Complex64::new(1.0, 0.0));
        assert!(!h.is_hermitian(1e-12));
    }

    #[test]
    fn mask_round_trip() {
        let m = mask_from_indices(&[0, 3, 5]).unwrap();
        assert_eq!(m, 0b101001);
        assert_eq!(mask_indices(m), vec![0, 3, 5]);
        assert!(mask_from_indices(&[2, 2]).is_err());
        assert!(mask_from_indices(&[64]).is_err());
    }
}
