//! JSON documents for Gaussian superpositions and plain matrices.

use impurity_core::gaussian::{CovarianceMatrix, GaussianState, Superposition};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// `{ "reference": [[..]], "states": [{"covariance": [[..]], "anchor": [re, im]}],
/// "coefficients": [[re, im], ..] }`, matrices as lists of rows.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDoc {
    pub reference: Vec<Vec<f64>>,
    pub states: Vec<StateEntry>,
    pub coefficients: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateEntry {
    pub covariance: Vec<Vec<f64>>,
    pub anchor: [f64; 2],
}

fn invalid(path: impl Into<String>, reason: impl ToString) -> CliError {
    CliError::Input { path: path.into(), reason: reason.to_string() }
}

/// Square matrix from a list of rows.
pub fn matrix_from_rows(rows: &[Vec<f64>], path: &str) -> Result<DMatrix<f64>, CliError> {
    let d = rows.len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(invalid(format!("{path}[{i}]"), format!("expected {d} entries, got {}", row.len())));
        }
        if let Some(j) = row.iter().position(|x| !x.is_finite()) {
            return Err(invalid(format!("{path}[{i}][{j}]"), "entry is not finite"));
        }
    }
    Ok(DMatrix::from_fn(d, d, |r, c| rows[r][c]))
}

pub fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn covariance(rows: &[Vec<f64>], path: &str) -> Result<CovarianceMatrix<f64>, CliError> {
    let m = matrix_from_rows(rows, path)?;
    let cov = CovarianceMatrix::new(m).map_err(|e| invalid(path, e))?;
    let defect = cov.purity_defect();
    if defect > 1e-6 {
        return Err(invalid(path, format!("not a pure-state covariance (‖M² + I‖ = {defect:.3e})")));
    }
    Ok(cov)
}

impl StateDoc {
    pub fn from_superposition(psi: &Superposition<f64>) -> Self {
        Self {
            reference: rows_of(psi.reference.matrix()),
            states: psi
                .states
                .iter()
                .map(|s| StateEntry { covariance: rows_of(s.cov.matrix()), anchor: [s.anchor.re, s.anchor.im] })
                .collect(),
            coefficients: psi.coefficients.iter().map(|c| [c.re, c.im]).collect(),
        }
    }

    pub fn to_superposition(&self) -> Result<Superposition<f64>, CliError> {
        let reference = covariance(&self.reference, "reference")?;
        if self.states.is_empty() {
            return Err(invalid("states", "at least one state is required"));
        }
        if self.coefficients.len() != self.states.len() {
            return Err(invalid(
                "coefficients",
                format!("expected {} entries, got {}", self.states.len(), self.coefficients.len()),
            ));
        }
        let mut states = Vec::with_capacity(self.states.len());
        for (a, entry) in self.states.iter().enumerate() {
            let path = format!("states[{a}].covariance");
            let cov = covariance(&entry.covariance, &path)?;
            if cov.n() != reference.n() {
                return Err(invalid(path, format!("expected {} modes, got {}", reference.n(), cov.n())));
            }
            states.push(GaussianState { cov, anchor: Complex64::new(entry.anchor[0], entry.anchor[1]) });
        }
        let coefficients = self.coefficients.iter().map(|c| Complex64::new(c[0], c[1])).collect();
        Superposition::new(coefficients, states, reference).map_err(|e| invalid("states", e))
    }
}
