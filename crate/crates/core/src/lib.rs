//! Ground-state energies of quantum impurity models: fermionic Gaussian
//! state algebra, an exact oracle, a subspace solver with quasi-polynomial
//! runtime, a superposition-of-Gaussians variational solver, SDP lower
//! bounds and a Monte Carlo norm estimator.

pub mod error;
pub mod exact_oracle;
pub mod gaussian;
pub mod linalg;
pub mod majorana;
pub mod model;
pub mod norm_estimation;
pub mod scalar;
pub mod sdp_bound;
pub mod skew_linear;
pub mod solver_quasipoly;
pub mod solver_variational;
pub mod zolotarev;

pub use error::{Error, Result};
pub use model::ImpurityModel;
pub use scalar::{Cplx, Real};
