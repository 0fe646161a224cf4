//! The least-squares alternative and what is wrong with it.
//!
//! Minimizing Σ(Σbᵢyᵢ − Σaᵢxᵢ − c)² needs a normalization to rule out the
//! all-zero solution; fixing coefficient k to 1 turns the problem into an
//! ordinary multiple regression with variable k as the dependent. Different
//! normalization choices produce non-equivalent models, which the
//! comparison report quantifies. The maximum-correlation fit has no such
//! dependence, which the scale-invariance probe demonstrates side by side.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cca;
use crate::dataset::{Dataset, Side};
use crate::error::{Error, Result};
use crate::model::LineModel;
use crate::solver::{maximize, Normalization, SolverConfig};
use crate::stats::{self, WeightPair};

/// A least-squares fit of the residual equation with one coefficient
/// normalized to 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LsModel {
    pub weights: WeightPair,
    /// The constant c in eᵢ = (Σby − Σax − c)ᵢ.
    pub intercept: f64,
    /// Index (into the concatenated weights, a then b) of the coefficient
    /// that was fixed to 1.
    pub normalized_index: usize,
    pub sse: f64,
    /// Pearson correlation of the fitted composites.
    pub achieved_correlation: f64,
}

/// Fit the least-squares model with the coefficient at `normalized` fixed
/// to exactly 1. This is the multiple regression with that coefficient's
/// variable as the dependent, repackaged into (a, b, c) form.
pub fn fit_least_squares(ds: &Dataset, normalized: usize) -> Result<LsModel> {
    let x_cols = ds.active_columns(Side::X);
    let y_cols = ds.active_columns(Side::Y);
    let p = x_cols.len();
    let q = y_cols.len();
    if normalized >= p + q {
        return Err(Error::BadNormalizationIndex {
            index: normalized,
            total: p + q,
        });
    }
    let n = ds.n_rows();

    // Dependent variable and regressors. With b_k = 1 (y side):
    //   y_k = Σ a x + c − Σ_{j≠k} b_j y_j + e
    // With a_k = 1 (x side):
    //   x_k = Σ b y − Σ_{m≠k} a_m x_m − c − e
    let on_y = normalized >= p;
    let dep: &[f64] = if on_y {
        y_cols[normalized - p].values()
    } else {
        x_cols[normalized].values()
    };

    let mut regressors: Vec<&[f64]> = Vec::new();
    let mut labels: Vec<(Side, usize)> = Vec::new();
    for (m, col) in x_cols.iter().enumerate() {
        if !on_y && m == normalized {
            continue;
        }
        regressors.push(col.values());
        labels.push((Side::X, m));
    }
    for (j, col) in y_cols.iter().enumerate() {
        if on_y && p + j == normalized {
            continue;
        }
        regressors.push(col.values());
        labels.push((Side::Y, j));
    }

    let k = regressors.len() + 1; // plus intercept
    let mut design = DMatrix::zeros(n, k);
    for (jj, reg) in regressors.iter().enumerate() {
        for (i, v) in reg.iter().enumerate() {
            design[(i, jj)] = *v;
        }
    }
    for i in 0..n {
        design[(i, k - 1)] = 1.0;
    }
    let rhs = DVector::from_column_slice(dep);
    let coef = solve_full_rank(&design, &rhs)?;

    let fitted = &design * &coef;
    let sse = (&rhs - &fitted).norm_squared();

    // Repackage into Eq-form (a, b, c).
    let mut a = vec![0.0; p];
    let mut b = vec![0.0; q];
    let c;
    if on_y {
        b[normalized - p] = 1.0;
        for (coef_idx, (side, pos)) in labels.iter().enumerate() {
            match side {
                Side::X => a[*pos] = coef[coef_idx],
                Side::Y => b[*pos] = -coef[coef_idx],
            }
        }
        c = coef[k - 1];
    } else {
        a[normalized] = 1.0;
        for (coef_idx, (side, pos)) in labels.iter().enumerate() {
            match side {
                Side::X => a[*pos] = -coef[coef_idx],
                Side::Y => b[*pos] = coef[coef_idx],
            }
        }
        c = -coef[k - 1];
    }

    let weights = WeightPair::new(a, b);
    let comps = stats::composites(ds, &weights)?;
    let achieved_correlation =
        stats::pearson(&comps.x, &comps.y).map_err(|_| Error::DegenerateNormalization {
            index: normalized,
            reason: "fitted composite has zero variance".to_string(),
        })?;

    Ok(LsModel {
        weights,
        intercept: c,
        normalized_index: normalized,
        sse,
        achieved_correlation,
    })
}

/// Angular distance in radians between two weight vectors, after
/// direction-normalizing each (unit length, sign fixed so the first
/// nonzero entry is positive). Zero means the models are equivalent up to
/// scaling.
pub fn direction_divergence(u: &[f64], v: &[f64]) -> f64 {
    let nu = direction_normalize(u);
    let nv = direction_normalize(v);
    let cos: f64 = nu.iter().zip(&nv).map(|(a, b)| a * b).sum();
    cos.clamp(-1.0, 1.0).acos()
}

fn direction_normalize(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v.to_vec();
    }
    let sign = v
        .iter()
        .find(|x| **x != 0.0)
        .map_or(1.0, |x| x.signum());
    v.iter().map(|x| x * sign / norm).collect()
}

/// One least-squares fit per normalization choice, with pairwise model
/// divergences and the maximum attainable correlation for reference.
#[derive(Debug, Clone, Serialize)]
pub struct NormalizationComparison {
    pub models: Vec<LsModel>,
    /// Normalization indices that produced degenerate fits, with reasons.
    pub skipped: Vec<(usize, String)>,
    /// Pairwise direction divergence between the successful models.
    pub divergence: Vec<Vec<f64>>,
    pub max_divergence: f64,
    /// The unconstrained maximum composite correlation.
    pub maxcorr_correlation: f64,
}

pub fn compare_normalizations(ds: &Dataset) -> Result<NormalizationComparison> {
    let p = ds.active_columns(Side::X).len();
    let q = ds.active_columns(Side::Y).len();
    if p + q < 2 {
        return Err(Error::TooFewCoefficients { found: p + q });
    }

    let mut models = Vec::new();
    let mut skipped = Vec::new();
    for k in 0..p + q {
        match fit_least_squares(ds, k) {
            Ok(m) => models.push(m),
            Err(e) => skipped.push((k, e.to_string())),
        }
    }

    let mut divergence = vec![vec![0.0; models.len()]; models.len()];
    let mut max_divergence: f64 = 0.0;
    for i in 0..models.len() {
        for j in (i + 1)..models.len() {
            let d = direction_divergence(
                &models[i].weights.concat(),
                &models[j].weights.concat(),
            );
            divergence[i][j] = d;
            divergence[j][i] = d;
            max_divergence = max_divergence.max(d);
        }
    }

    let maxcorr_correlation = cca::cca_first_pair(ds)?.rho;

    Ok(NormalizationComparison {
        models,
        skipped,
        divergence,
        max_divergence,
        maxcorr_correlation,
    })
}

/// Side-by-side units-change probe of the two fitting methods.
#[derive(Debug, Clone, Serialize)]
pub struct ScaleInvarianceProbe {
    pub column: String,
    pub factor: f64,
    /// Least squares, normalization fixed on the rescaled column itself:
    /// divergence of the reported model from the original. The b_k = 1
    /// convention pins the real scale, so this stays large.
    pub ls_normalized_on_scaled_divergence: f64,
    /// Least squares, normalization on an unrelated coefficient: divergence
    /// after mapping the rescaled column's coefficient back to original
    /// units. OLS is equivariant in the regressors, so this is ~0.
    pub ls_other_normalization_divergence: f64,
    /// Maximum-correlation fit, same units-compensated comparison. Scale
    /// invariance of the method keeps this ~0 for every column.
    pub maxcorr_divergence: f64,
    /// |correlation before − correlation after| for the maxcorr fit.
    pub maxcorr_correlation_shift: f64,
}

pub fn scale_invariance_probe(
    ds: &Dataset,
    column: &str,
    factor: f64,
) -> Result<ScaleInvarianceProbe> {
    if !(factor > 0.0) || factor == 1.0 || !factor.is_finite() {
        return Err(Error::BadScaleFactor { factor });
    }
    let col = ds
        .column(column)
        .ok_or_else(|| Error::UnknownColumn {
            name: column.to_string(),
        })?;
    let side = col.side;
    let scaled = ds.scale_column(column, factor)?;

    let p = ds.active_columns(Side::X).len();
    let q = ds.active_columns(Side::Y).len();
    let scaled_idx = concat_index(ds, column)?;

    // (i) LS with the normalization on the rescaled column: raw comparison,
    // because the normalization forbids compensating.
    let base_own = fit_least_squares(ds, scaled_idx)?;
    let refit_own = fit_least_squares(&scaled, scaled_idx)?;
    let ls_normalized_on_scaled_divergence = direction_divergence(
        &base_own.weights.concat(),
        &refit_own.weights.concat(),
    );

    // (ii) LS with the normalization elsewhere: the rescaled coefficient is
    // free, so compensating by the factor must recover the original model.
    let other_idx = (0..p + q)
        .find(|k| *k != scaled_idx)
        .expect("compare needs at least two coefficients");
    let base_other = fit_least_squares(ds, other_idx)?;
    let refit_other = fit_least_squares(&scaled, other_idx)?;
    let ls_other_normalization_divergence = direction_divergence(
        &base_other.weights.concat(),
        &compensate(refit_other.weights.concat(), scaled_idx, factor),
    );

    // Maxcorr probe: normalization on a coefficient unrelated to the
    // rescaled column (first coefficient of the other side).
    let norm_idx = if side == Side::X { p } else { 0 };
    let norm = Normalization::fix(norm_idx);
    let cfg = SolverConfig::with_seed(0x5eed);
    let base_fit = maximize(ds, &[], &norm, &cfg)?;
    let refit = maximize(&scaled, &[], &norm, &cfg)?;
    let maxcorr_divergence = direction_divergence(
        &base_fit.weights.concat(),
        &compensate(refit.weights.concat(), scaled_idx, factor),
    );
    let maxcorr_correlation_shift = (base_fit.correlation - refit.correlation).abs();

    Ok(ScaleInvarianceProbe {
        column: column.to_string(),
        factor,
        ls_normalized_on_scaled_divergence,
        ls_other_normalization_divergence,
        maxcorr_divergence,
        maxcorr_correlation_shift,
    })
}

/// Map a fit on factor-scaled data back to original units: the scaled
/// column's coefficient absorbs the factor.
fn compensate(mut weights: Vec<f64>, idx: usize, factor: f64) -> Vec<f64> {
    weights[idx] *= factor;
    weights
}

fn concat_index(ds: &Dataset, column: &str) -> Result<usize> {
    let p = ds.active_columns(Side::X).len();
    let col = ds.column(column).ok_or_else(|| Error::UnknownColumn {
        name: column.to_string(),
    })?;
    let pos = ds
        .active_columns(col.side)
        .iter()
        .position(|c| c.name == column)
        .ok_or_else(|| Error::SchemaMismatch {
            reason: format!("column '{column}' is constant and carries no weight"),
        })?;
    Ok(match col.side {
        Side::X => pos,
        Side::Y => p + pos,
    })
}

/// Fit the line minimizing the sum of squared perpendicular distances: the
/// first principal axis through the centroid. Symmetric in X and Y.
pub fn orthogonal_line_fit(x: &[f64], y: &[f64]) -> Result<LineModel> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::TooFewRows { found: x.len() });
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let dx = xi - mean_x;
        let dy = yi - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    sxx /= n;
    syy /= n;
    sxy /= n;

    let total = sxx + syy;
    if total <= 0.0 || total < 1e-24 {
        return Err(Error::ZeroVariance {
            what: "the point cloud".to_string(),
        });
    }
    let slope = if sxy.abs() <= 1e-14 * total {
        if sxx > syy {
            0.0
        } else {
            return Err(Error::OrthogonalAxisUndefined {
                reason: if syy > sxx {
                    "principal axis is vertical".to_string()
                } else {
                    "point cloud is isotropic".to_string()
                },
            });
        }
    } else {
        // Eigenvector of the 2x2 covariance matrix for its largest
        // eigenvalue: slope = (syy − sxx + √((syy − sxx)² + 4 sxy²)) / 2sxy.
        let diff = syy - sxx;
        (diff + (diff * diff + 4.0 * sxy * sxy).sqrt()) / (2.0 * sxy)
    };
    let intercept = mean_y - slope * mean_x;
    let r = stats::pearson(x, y).unwrap_or(0.0);
    Ok(LineModel {
        slope,
        intercept,
        r_squared: r * r,
    })
}


/// Solve a full-rank least-squares problem, rejecting rank deficiency.
fn solve_full_rank(design: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let smin = svd.singular_values.iter().cloned().fold(f64::MAX, f64::min);
    if smax <= 0.0 || smin < 1e-12 * smax {
        return Err(Error::RankDeficient);
    }
    let sol = svd
        .solve(rhs, 1e-12 * smax)
        .map_err(|_| Error::RankDeficient)?;
    Ok(sol.column(0).into_owned())
}
