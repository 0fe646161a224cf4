//! Classical unconstrained canonical correlation analysis, used as the
//! correctness reference for the constrained solver.
//!
//! The first canonical pair is computed from the symmetric eigenproblem on
//! Sxx^{-1/2} Sxy Syy^{-1} Syx Sxx^{-1/2}, which is better conditioned than
//! the plain nonsymmetric formulation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Side};
use crate::error::{Error, Result};
use crate::stats::{self, WeightPair};

/// Condition-number cutoff above which a within-set covariance matrix is
/// treated as singular.
const MAX_CONDITION: f64 = 1e12;

/// The first canonical pair: weight vectors and the canonical correlation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CcaSolution {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// First canonical correlation, in [0, 1]; the sign is absorbed into b.
    pub rho: f64,
}

/// Compute the first canonical pair of a dataset.
///
/// `rho²` is the largest eigenvalue of Sxx⁻¹ Sxy Syy⁻¹ Syx; the weight
/// vectors are unit length under the within-set covariance metric.
pub fn cca_first_pair(ds: &Dataset) -> Result<CcaSolution> {
    let xc = stats::centered_matrix(ds, Side::X);
    let yc = stats::centered_matrix(ds, Side::Y);
    let n = ds.n_rows() as f64;

    let sxx = xc.transpose() * &xc / n;
    let syy = yc.transpose() * &yc / n;
    let sxy = xc.transpose() * &yc / n;

    let (sxx_inv_sqrt, _) = inv_sqrt(&sxx, Side::X)?;
    let (_, syy_inv) = inv_sqrt(&syy, Side::Y)?;

    // M = Sxx^{-1/2} Sxy Syy^{-1} Syx Sxx^{-1/2}, symmetric PSD.
    let m = &sxx_inv_sqrt * &sxy * &syy_inv * sxy.transpose() * &sxx_inv_sqrt;
    let m = symmetrize(&m);
    let eig = m.symmetric_eigen();

    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let rho = eig.eigenvalues[best].max(0.0).sqrt().min(1.0);
    let u = eig.eigenvectors.column(best).into_owned();

    // Back-transform; u is unit length, so aᵀ Sxx a = 1 automatically.
    let a = &sxx_inv_sqrt * u;
    let mut b = &syy_inv * sxy.transpose() * &a;

    // Normalize b to unit variance of its composite and fix the sign so the
    // composite correlation is +rho.
    let b_norm = (b.transpose() * &syy * &b)[(0, 0)].sqrt();
    if b_norm > 0.0 {
        b /= b_norm;
    }
    let corr = stats::corr_of(&xc, &yc, &a, &b);
    if let Some(r) = corr {
        if r < 0.0 {
            b = -b;
        }
    }

    Ok(CcaSolution {
        a: a.as_slice().to_vec(),
        b: b.as_slice().to_vec(),
        rho,
    })
}

/// Cross-check the eigen route against the direct correlation computation:
/// returns |correlation_of_weights(a, b)| − rho. On a valid solution the
/// magnitude is at the rounding level.
pub fn pearson_consistency_check(ds: &Dataset, sol: &CcaSolution) -> Result<f64> {
    let w = WeightPair::new(sol.a.clone(), sol.b.clone());
    let r = stats::correlation_of_weights(ds, &w)?;
    Ok(r.abs() - sol.rho)
}

/// Inverse square root and inverse of a symmetric PSD matrix, rejecting
/// matrices whose condition number exceeds [`MAX_CONDITION`].
fn inv_sqrt(s: &DMatrix<f64>, side: Side) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = symmetrize(s).symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    if !(max > 0.0) || min <= 0.0 || max / min > MAX_CONDITION {
        return Err(Error::CollinearSide { side });
    }
    let k = eig.eigenvalues.len();
    let mut inv_sqrt = DMatrix::zeros(k, k);
    let mut inv = DMatrix::zeros(k, k);
    for i in 0..k {
        let v: DVector<f64> = eig.eigenvectors.column(i).into_owned();
        let outer = &v * v.transpose();
        inv_sqrt += &outer / eig.eigenvalues[i].sqrt();
        inv += &outer / eig.eigenvalues[i];
    }
    Ok((inv_sqrt, inv))
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}
