//! Zolotarev's rational approximation `√x ≈ x P_d(x)/Q_d(x)` on `[ω, 1]`,
//! with the elliptic functions it is built from.

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

fn check_modulus<T: Real>(mu: T) -> Result<()> {
    if !(mu >= T::zero() && mu < T::one()) {
        return Err(Error::ModulusOutOfRange(mu.to_f64()));
    }
    Ok(())
}

/// Complete elliptic integral of the first kind
/// `K(μ) = ∫₀^{π/2} dθ / √(1 − μ² sin²θ)`, via the arithmetic-geometric mean.
pub fn elliptic_k<T: Real>(mu: T) -> Result<T> {
    check_modulus(mu)?;
    let mut a = T::one();
    let mut b = (T::one() - mu * mu).sqrt();
    for _ in 0..64 {
        if (a - b).abs() <= T::default_epsilon() * a {
            break;
        }
        let next = (a + b) * lit::<T>(0.5);
        b = (a * b).sqrt();
        a = next;
    }
    Ok(T::frac_pi_2() / a)
}

/// Jacobi elliptic functions `(sn(u|μ), cn(u|μ))` with modulus `μ`.
///
/// Runs the AGM forward, then recovers the amplitude `φ(u)` by the
/// descending Landen recursion `φ_{k-1} = (φ_k + asin(c_k/a_k · sin φ_k))/2`.
pub fn jacobi_sn_cn<T: Real>(u: T, mu: T) -> Result<(T, T)> {
    check_modulus(mu)?;
    let half: T = lit(0.5);
    let mut a = vec![T::one()];
    let mut c = vec![mu];
    let mut b = (T::one() - mu * mu).sqrt();
    while c.len() < 64 && c.last().unwrap().abs() > T::default_epsilon() {
        let (ak, bk) = (*a.last().unwrap(), b);
        a.push((ak + bk) * half);
        c.push((ak - bk) * half);
        b = (ak * bk).sqrt();
    }
    let last = a.len() - 1;
    let mut phi = lit::<T>(2f64.powi(last as i32)) * a[last] * u;
    for k in (1..=last).rev() {
        let s = (c[k] / a[k] * phi.sin()).clamp(-T::one(), T::one());
        phi = (phi + s.asin()) * half;
    }
    Ok((phi.sin(), phi.cos()))
}

/// Degree-`d` Zolotarev approximant `f(x) = M x ∏ (x+λ_{2j}) / (x+λ_{2j−1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct ZolotarevApprox<T: Real> {
    pub omega: T,
    pub degree: usize,
    /// `λ₁ < λ₂ < … < λ_{2d}`.
    pub roots: Vec<T>,
    /// Scale factor `M`.
    pub scale: T,
}

impl<T: Real> ZolotarevApprox<T> {
    /// Builds the approximant for the gap `0 < ω ≤ 1` and degree `d ≥ 1`.
    pub fn build(omega: T, degree: usize) -> Result<Self> {
        if !(omega > T::zero() && omega <= T::one()) {
            return Err(Error::GapOutOfRange(omega.to_f64()));
        }
        if degree == 0 {
            return Err(Error::InvalidParameter { name: "d", reason: "degree must be at least 1".into() });
        }
        let mu = (T::one() - omega).sqrt();
        let k = elliptic_k(mu)?;
        let denom = lit::<T>((2 * degree + 1) as f64);
        let mut roots = Vec::with_capacity(2 * degree);
        for j in 1..=2 * degree {
            let (sn, cn) = jacobi_sn_cn(lit::<T>(j as f64) * k / denom, mu)?;
            let ratio = sn / cn;
            roots.push(omega * ratio * ratio);
        }
        let mut at_one = T::one();
        let mut at_omega = omega.sqrt();
        for j in 0..degree {
            let (odd, even) = (roots[2 * j], roots[2 * j + 1]);
            at_one *= (T::one() + even) / (T::one() + odd);
            at_omega *= (omega + even) / (omega + odd);
        }
        let scale = lit::<T>(2.0) / (at_one + at_omega);
        Ok(Self { omega, degree, roots, scale })
    }

    /// `x P_d(x) / Q_d(x)`, evaluated in product form.
    pub fn evaluate(&self, x: T) -> T {
        let mut v = self.scale * x;
        for j in 0..self.degree {
            v *= (x + self.roots[2 * j + 1]) / (x + self.roots[2 * j]);
        }
        v
    }

    /// `x^{-1/2} |√x − f(x)|`.
    pub fn relative_error(&self, x: T) -> T {
        let s = x.sqrt();
        (s - self.evaluate(x)).abs() / s
    }

    /// Maximum relative error over `grid_points` log-spaced points on `[ω, 1]`.
    pub fn worst_case_error(&self, grid_points: usize) -> T {
        log_grid(self.omega, grid_points)
            .into_iter()
            .map(|x| self.relative_error(x))
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }
}

/// `points` log-spaced abscissae from `ω` to `1`, both ends included.
pub fn log_grid<T: Real>(omega: T, points: usize) -> Vec<T> {
    let points = points.max(2);
    let lo = omega.ln();
    (0..points)
        .map(|i| {
            if i + 1 == points {
                T::one()
            } else {
                (lo * (T::one() - lit::<T>(i as f64) / lit::<T>((points - 1) as f64))).exp()
            }
        })
        .collect()
}

/// `2 exp(−d / ln(2/ω))`.
pub fn error_bound<T: Real>(omega: T, degree: usize) -> T {
    lit::<T>(2.0) * (-(lit::<T>(degree as f64)) / (lit::<T>(2.0) / omega).ln()).exp()
}

/// `2 exp(−d π² / ln(256/ω))`.
pub fn sharp_error_bound<T: Real>(omega: T, degree: usize) -> T {
    let pi2 = T::pi() * T::pi();
    lit::<T>(2.0) * (-(lit::<T>(degree as f64)) * pi2 / (lit::<T>(256.0) / omega).ln()).exp()
}

/// One `(ω, d, r)` row of the error-curve table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorPoint {
    pub omega: f64,
    pub degree: usize,
    pub error: f64,
}

/// Worst-case errors for every `ω` in `omegas` and `d` in `1..=d_max`.
pub fn error_table(omegas: &[f64], d_max: usize, grid_points: usize) -> Result<Vec<ErrorPoint>> {
    let mut rows = Vec::with_capacity(omegas.len() * d_max);
    for &omega in omegas {
        for degree in 1..=d_max {
            let approx = ZolotarevApprox::<f64>::build(omega, degree)?;
            rows.push(ErrorPoint { omega, degree, error: approx.worst_case_error(grid_points) });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Adaptive Simpson quadrature.
    fn simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
        fn rec<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
    }

    fn incomplete_f(phi: f64, mu: f64) -> f64 {
        simpson(|t| 1.0 / (1.0 - mu * mu * t.sin().powi(2)).sqrt(), 0.0, phi, 1e-15)
    }

    #[test]
    fn k_at_zero_and_monotone() {
        assert!((elliptic_k(0.0f64).unwrap() - PI / 2.0).abs() < 1e-15);
        let mut prev = 0.0;
        for i in 0..100 {
            let k = elliptic_k(i as f64 / 100.0).unwrap();
            assert!(k > prev);
            prev = k;
        }
        assert!(matches!(elliptic_k(1.0f64), Err(Error::ModulusOutOfRange(_))));
    }

    #[test]
    fn k_matches_quadrature() {
        for mu in [0.5, 0.9, 0.99] {
            let want = incomplete_f(PI / 2.0, mu);
            assert!((elliptic_k(mu).unwrap() - want).abs() < 1e-12, "mu={mu}");
        }
    }

    #[test]
    fn sn_cn_special_cases() {
        for u in [0.0, 0.3, 1.7, 5.0] {
            let (s, c) = jacobi_sn_cn(u, 0.0f64).unwrap();
            assert!((s - u.sin()).abs() < 1e-15 && (c - u.cos()).abs() < 1e-15);
        }
        assert_eq!(jacobi_sn_cn(0.0f64, 0.7).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn sn_cn_match_quadrature_inversion() {
        let (u, mu) = (1.0, 0.8);
        // solve F(φ|μ) = u by Newton iteration on the quadrature
        let mut phi = u;
        for _ in 0..50 {
            let f = incomplete_f(phi, mu) - u;
            phi -= f * (1.0 - mu * mu * phi.sin().powi(2)).sqrt();
        }
        let (s, c) = jacobi_sn_cn(u, mu).unwrap();
        assert!((s - phi.sin()).abs() < 1e-10 && (c - phi.cos()).abs() < 1e-10);
    }

    #[test]
    fn pythagorean_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let u: f64 = rng.random_range(0.0..10.0);
            let mu: f64 = rng.random_range(0.0..0.999);
            let (s, c) = jacobi_sn_cn(u, mu).unwrap();
            assert!((s * s + c * c - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn omega_one_is_trigonometric() {
        let d = 3;
        let z = ZolotarevApprox::build(1.0f64, d).unwrap();
        for (j, &l) in z.roots.iter().enumerate() {
            let t = ((j + 1) as f64 * PI / (2.0 * (2 * d + 1) as f64)).tan();
            assert!((l - t * t).abs() < 1e-13);
        }
    }

    #[test]
    fn roots_positive_and_increasing() {
        for omega in [1e-3, 0.1, 0.9] {
            let z = ZolotarevApprox::build(omega, 8).unwrap();
            assert!(z.roots[0] > 0.0);
            assert!(z.roots.windows(2).all(|w| w[0] < w[1]));
            assert!(log_grid(omega, 1000).iter().all(|&x| z.evaluate(x) >= 0.0));
        }
    }

    #[test]
    fn bounds_hold() {
        let z = ZolotarevApprox::build(0.1f64, 5).unwrap();
        assert!(z.worst_case_error(10_000) <= 2.0 * (-5.0 / 20f64.ln()).exp());
        let z = ZolotarevApprox::build(0.5f64, 1).unwrap();
        assert!(z.worst_case_error(10_000) <= 2.0 * (-1.0 / 4f64.ln()).exp());
        for omega in [1e-3, 1e-2, 0.1, 0.5] {
            for d in 1..=12 {
                let r = ZolotarevApprox::build(omega, d).unwrap().worst_case_error(5_000);
                assert!(r <= sharp_error_bound(omega, d) + 1e-14, "ω={omega} d={d}: {r}");
            }
        }
    }

    #[test]
    fn grid_refinement_is_stable() {
        let z = ZolotarevApprox::build(0.01f64, 10).unwrap();
        let coarse = z.worst_case_error(100_000);
        let fine = z.worst_case_error(200_000);
        assert!((coarse - fine).abs() <= 1e-3 * fine);
    }

    #[test]
    fn rejects_bad_gap() {
        assert!(matches!(ZolotarevApprox::build(0.0f64, 2), Err(Error::GapOutOfRange(_))));
        assert!(matches!(ZolotarevApprox::build(1.5f64, 2), Err(Error::GapOutOfRange(_))));
    }

    #[test]
    fn f32_build() {
        let z = ZolotarevApprox::build(0.1f32, 3).unwrap();
        assert!(z.worst_case_error(2000) <= error_bound(0.1f32, 3));
    }
}
