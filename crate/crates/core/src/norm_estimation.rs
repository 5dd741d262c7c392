//! Monte Carlo estimate of `‖ψ‖²` for a superposition of Gaussian states,
//! averaging `2ⁿ |⟨θ|ψ⟩|²` over randomly permuted Fock states `θ`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::{fock_covariance, overlap, random_covariance_with_parity, CovarianceMatrix, GaussianState, Superposition};

/// Accuracy target: relative error `eps` with failure probability `p_fail`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EstimatorConfig {
    pub eps: f64,
    pub p_fail: f64,
    pub seed: u64,
}

impl EstimatorConfig {
    pub fn new(eps: f64, p_fail: f64, seed: u64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidParameter { name: "eps", reason: format!("must lie in (0, 1], got {eps}") });
        }
        if !(p_fail > 0.0 && p_fail < 1.0) {
            return Err(Error::InvalidParameter { name: "p_fail", reason: format!("must lie in (0, 1), got {p_fail}") });
        }
        Ok(Self { eps, p_fail, seed })
    }

    /// `L = ⌈2√n ε⁻² p_f⁻¹⌉`, enough for Chebyshev's inequality.
    pub fn samples(&self, n: usize) -> usize {
        (2.0 * (n as f64).sqrt() / (self.eps * self.eps * self.p_fail)).ceil().max(1.0) as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormEstimate {
    pub value: f64,
    pub samples: usize,
    /// Standard error of the mean from the sample variance.
    pub std_error: f64,
    pub seed: u64,
}

/// `θ = R M_y Rᵀ` for a uniform permutation `R` of the `2n` Majoranas and a
/// uniform occupation string `y`.
pub fn sample_theta<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CovarianceMatrix<f64> {
    let y: Vec<bool> = (0..n).map(|_| rng.random()).collect();
    let mut perm: Vec<usize> = (0..2 * n).collect();
    perm.shuffle(rng);
    let m = fock_covariance::<f64>(&y);
    let m = m.matrix();
    CovarianceMatrix::from_antisymmetric(DMatrix::from_fn(2 * n, 2 * n, |r, c| m[(perm[r], perm[c])]))
}

/// Estimate with the sample count from `config`.
pub fn estimate_norm2(psi: &Superposition<f64>, config: &EstimatorConfig) -> Result<NormEstimate> {
    let samples = config.samples(psi.n());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut est = estimate_norm2_with(psi, samples, &mut rng)?;
    est.seed = config.seed;
    Ok(est)
}

/// Estimate from exactly `samples` draws of `rng`.
pub fn estimate_norm2_with<R: Rng + ?Sized>(psi: &Superposition<f64>, samples: usize, rng: &mut R) -> Result<NormEstimate> {
    if samples == 0 {
        return Err(Error::InvalidParameter { name: "samples", reason: "need at least one sample".into() });
    }
    if psi.coefficients.iter().all(|c| c.norm() == 0.0) {
        return Ok(NormEstimate { value: 0.0, samples, std_error: 0.0, seed: 0 });
    }
    let n = psi.n();
    let scale = 2f64.powi(n as i32);
    let parity = psi.reference.parity_sign();
    // a generic reference of the right parity overlaps every θ that can
    // overlap ψ, which the anchoring scheme needs
    let psi = reanchor_generic(psi, rng)?;

    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let theta = sample_theta(n, rng);
        let x = if theta.parity_sign() != parity {
            0.0
        } else {
            let t = GaussianState::with_positive_anchor(theta, &psi.reference)?;
            let mut amp = Complex64::new(0.0, 0.0);
            for (c, s) in psi.coefficients.iter().zip(&psi.states) {
                amp += overlap(&psi.reference, &t, s)? * c;
            }
            scale * amp.norm_sqr()
        };
        sum += x;
        sum_sq += x * x;
    }
    let l = samples as f64;
    let mean = sum / l;
    let var = if samples > 1 { ((sum_sq - l * mean * mean) / (l - 1.0)).max(0.0) } else { 0.0 };
    Ok(NormEstimate { value: mean, samples, std_error: (var / l).sqrt(), seed: 0 })
}

fn reanchor_generic<R: Rng + ?Sized>(psi: &Superposition<f64>, rng: &mut R) -> Result<Superposition<f64>> {
    let odd = psi.reference.parity_sign() < 0.0;
    let mut last = Error::SingularTriple;
    for _ in 0..16 {
        let r = random_covariance_with_parity::<f64, _>(psi.n(), odd, rng);
        match psi.reanchor(&r) {
            Ok(p) => return Ok(p),
            Err(e) => last = e,
        }
    }
    Err(last)
}
