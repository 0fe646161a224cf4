//! Composites, Pearson correlation, and its analytic gradient.
//!
//! All functions use the population convention (divide by n). For the
//! correlation itself the convention cancels; for the gradient it keeps
//! the algebra simple.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Side};
use crate::error::{Error, Result};

/// Coefficient vectors for the two sides: `a` over active x-side columns,
/// `b` over active y-side columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightPair {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl WeightPair {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Self {
        WeightPair { a, b }
    }

    /// Concatenated view, a then b.
    pub fn concat(&self) -> Vec<f64> {
        let mut v = self.a.clone();
        v.extend_from_slice(&self.b);
        v
    }

    pub fn from_concat(w: &[f64], n_a: usize) -> Self {
        WeightPair {
            a: w[..n_a].to_vec(),
            b: w[n_a..].to_vec(),
        }
    }
}

/// The per-row weighted sums X = Σ aₖxₖ and Y = Σ bⱼyⱼ.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositePair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Compute the weighted composites of a dataset.
pub fn composites(ds: &Dataset, w: &WeightPair) -> Result<CompositePair> {
    let x_cols = ds.active_columns(Side::X);
    let y_cols = ds.active_columns(Side::Y);
    if w.a.len() != x_cols.len() {
        return Err(Error::WeightLengthMismatch {
            side: Side::X,
            expected: x_cols.len(),
            found: w.a.len(),
        });
    }
    if w.b.len() != y_cols.len() {
        return Err(Error::WeightLengthMismatch {
            side: Side::Y,
            expected: y_cols.len(),
            found: w.b.len(),
        });
    }
    let n = ds.n_rows();
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    for (weight, col) in w.a.iter().zip(&x_cols) {
        for (xi, v) in x.iter_mut().zip(col.values()) {
            *xi += weight * v;
        }
    }
    for (weight, col) in w.b.iter().zip(&y_cols) {
        for (yi, v) in y.iter_mut().zip(col.values()) {
            *yi += weight * v;
        }
    }
    Ok(CompositePair { x, y })
}

/// Sample Pearson correlation of two equal-length vectors.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
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
    check_variance(sxx / n, x, "the first vector")?;
    check_variance(syy / n, y, "the second vector")?;
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn check_variance(var: f64, values: &[f64], what: &str) -> Result<()> {
    let n = values.len() as f64;
    let scale = values.iter().map(|v| v.abs()).sum::<f64>() / n + 1.0;
    if var.sqrt() < 1e-12 * scale {
        return Err(Error::ZeroVariance {
            what: what.to_string(),
        });
    }
    Ok(())
}

/// The objective being maximized: the correlation of the two composites.
pub fn correlation_of_weights(ds: &Dataset, w: &WeightPair) -> Result<f64> {
    let comps = composites(ds, w)?;
    pearson(&comps.x, &comps.y)
}

/// Analytic partial derivatives of [`correlation_of_weights`] with respect
/// to every weight, returned in the same (a, b) layout.
pub fn correlation_gradient(ds: &Dataset, w: &WeightPair) -> Result<WeightPair> {
    let xc = centered_matrix(ds, Side::X);
    let yc = centered_matrix(ds, Side::Y);
    let a = DVector::from_vec(w.a.clone());
    let b = DVector::from_vec(w.b.clone());
    if a.len() != xc.ncols() {
        return Err(Error::WeightLengthMismatch {
            side: Side::X,
            expected: xc.ncols(),
            found: a.len(),
        });
    }
    if b.len() != yc.ncols() {
        return Err(Error::WeightLengthMismatch {
            side: Side::Y,
            expected: yc.ncols(),
            found: b.len(),
        });
    }
    let (_, ga, gb) = corr_and_grad(&xc, &yc, &a, &b).ok_or_else(|| Error::ZeroVariance {
        what: "a composite".to_string(),
    })?;
    Ok(WeightPair::new(ga.as_slice().to_vec(), gb.as_slice().to_vec()))
}

/// Column-centered matrix of one side's active columns (n_rows × n_cols).
pub(crate) fn centered_matrix(ds: &Dataset, side: Side) -> DMatrix<f64> {
    let cols = ds.active_columns(side);
    let n = ds.n_rows();
    let mut m = DMatrix::zeros(n, cols.len());
    for (j, col) in cols.iter().enumerate() {
        let mean = col.values().iter().sum::<f64>() / n as f64;
        for (i, v) in col.values().iter().enumerate() {
            m[(i, j)] = v - mean;
        }
    }
    m
}

/// Correlation and gradient over centered data matrices.
///
/// With x̃ = Xc·a, ỹ = Yc·b, c = x̃ᵀỹ, u = x̃ᵀx̃, v = ỹᵀỹ:
///   r       = c / √(uv)
///   ∂r/∂a   = (Xcᵀỹ − (c/u)·Xcᵀx̃) / √(uv)
///   ∂r/∂b   = (Ycᵀx̃ − (c/v)·Ycᵀỹ) / √(uv)
/// Returns `None` when either composite is degenerate.
pub(crate) fn corr_and_grad(
    xc: &DMatrix<f64>,
    yc: &DMatrix<f64>,
    a: &DVector<f64>,
    b: &DVector<f64>,
) -> Option<(f64, DVector<f64>, DVector<f64>)> {
    let xt = xc * a;
    let yt = yc * b;
    let u = xt.dot(&xt);
    let v = yt.dot(&yt);
    let n = xc.nrows() as f64;
    let x_scale = xt.iter().map(|t| t.abs()).sum::<f64>() / n + 1.0;
    let y_scale = yt.iter().map(|t| t.abs()).sum::<f64>() / n + 1.0;
    if (u / n).sqrt() < 1e-12 * x_scale || (v / n).sqrt() < 1e-12 * y_scale {
        return None;
    }
    let c = xt.dot(&yt);
    let denom = (u * v).sqrt();
    let r = c / denom;

    let ga = (xc.transpose() * &yt - xc.transpose() * &xt * (c / u)) / denom;
    let gb = (yc.transpose() * &xt - yc.transpose() * &yt * (c / v)) / denom;
    Some((r, ga, gb))
}

/// Correlation only, over centered matrices. This is the line-search hot
/// path, so it skips the gradient work.
pub(crate) fn corr_of(
    xc: &DMatrix<f64>,
    yc: &DMatrix<f64>,
    a: &DVector<f64>,
    b: &DVector<f64>,
) -> Option<f64> {
    let xt = xc * a;
    let yt = yc * b;
    let u = xt.dot(&xt);
    let v = yt.dot(&yt);
    let n = xc.nrows() as f64;
    let x_scale = xt.iter().map(|t| t.abs()).sum::<f64>() / n + 1.0;
    let y_scale = yt.iter().map(|t| t.abs()).sum::<f64>() / n + 1.0;
    if (u / n).sqrt() < 1e-12 * x_scale || (v / n).sqrt() < 1e-12 * y_scale {
        return None;
    }
    Some(xt.dot(&yt) / (u * v).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use approx::assert_abs_diff_eq;

    fn two_by_one() -> Dataset {
        Dataset::from_parts(vec![
            ("x1", Side::X, vec![1.0, 2.0, 3.0]),
            ("x2", Side::X, vec![3.0, 4.0, 6.0]),
            ("y1", Side::Y, vec![2.0, 1.0, 4.0]),
        ])
        .unwrap()
    }

    #[test]
    fn composites_select_and_sum() {
        let ds = two_by_one();
        let unit = composites(&ds, &WeightPair::new(vec![1.0, 0.0], vec![1.0])).unwrap();
        assert_eq!(unit.x, vec![1.0, 2.0, 3.0]);

        let zero = composites(&ds, &WeightPair::new(vec![0.0, 0.0], vec![1.0])).unwrap();
        assert_eq!(zero.x, vec![0.0, 0.0, 0.0]);

        let mixed = composites(&ds, &WeightPair::new(vec![2.0, 1.0], vec![1.0])).unwrap();
        assert_eq!(mixed.x, vec![5.0, 8.0, 12.0]);
    }

    #[test]
    fn composites_dimension_mismatch() {
        let ds = two_by_one();
        let err = composites(&ds, &WeightPair::new(vec![1.0], vec![1.0])).unwrap_err();
        assert!(matches!(
            err,
            Error::WeightLengthMismatch {
                side: Side::X,
                expected: 2,
                found: 1
            }
        ));
    }

    #[test]
    fn pearson_exact_relations() {
        assert_abs_diff_eq!(
            pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(),
            -1.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn pearson_hand_value() {
        // cov = 1, both variances 1.25, so r = 1/1.25 = 0.8.
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_abs_diff_eq!(r, 0.8, epsilon = 1e-14);
    }

    #[test]
    fn pearson_zero_variance() {
        let err = pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err();
        assert!(matches!(err, Error::ZeroVariance { .. }));
    }

    #[test]
    fn correlation_scale_and_sign() {
        let ds = two_by_one();
        let base = correlation_of_weights(&ds, &WeightPair::new(vec![1.0, 0.5], vec![1.0])).unwrap();
        let scaled =
            correlation_of_weights(&ds, &WeightPair::new(vec![3.0, 1.5], vec![1.0])).unwrap();
        assert_abs_diff_eq!(base, scaled, epsilon = 1e-12);

        let negated =
            correlation_of_weights(&ds, &WeightPair::new(vec![1.0, 0.5], vec![-1.0])).unwrap();
        assert_abs_diff_eq!(base, -negated, epsilon = 1e-12);
    }

    #[test]
    fn single_pair_equals_raw_pearson() {
        let ds = Dataset::from_parts(vec![
            ("x1", Side::X, vec![1.0, 4.0, 2.0, 8.0]),
            ("y1", Side::Y, vec![2.0, 3.0, 1.0, 5.0]),
        ])
        .unwrap();
        let via_weights =
            correlation_of_weights(&ds, &WeightPair::new(vec![1.0], vec![1.0])).unwrap();
        let direct = pearson(&[1.0, 4.0, 2.0, 8.0], &[2.0, 3.0, 1.0, 5.0]).unwrap();
        assert_abs_diff_eq!(via_weights, direct, epsilon = 1e-15);
    }

    #[test]
    fn gradient_orthogonal_to_weights() {
        // Pearson is scale-invariant per side, so the directional
        // derivative along each weight vector is exactly zero.
        let ds = two_by_one();
        let w = WeightPair::new(vec![0.7, -0.4], vec![1.3]);
        let g = correlation_gradient(&ds, &w).unwrap();
        let dot_a: f64 = g.a.iter().zip(&w.a).map(|(g, w)| g * w).sum();
        let dot_b: f64 = g.b.iter().zip(&w.b).map(|(g, w)| g * w).sum();
        assert_abs_diff_eq!(dot_a, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dot_b, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let ds = two_by_one();
        let w = WeightPair::new(vec![0.7, -0.4], vec![1.3]);
        let g = correlation_gradient(&ds, &w).unwrap();
        let h = 1e-6;
        let mut flat = w.concat();
        for k in 0..flat.len() {
            let orig = flat[k];
            flat[k] = orig + h;
            let up = correlation_of_weights(&ds, &WeightPair::from_concat(&flat, 2)).unwrap();
            flat[k] = orig - h;
            let down = correlation_of_weights(&ds, &WeightPair::from_concat(&flat, 2)).unwrap();
            flat[k] = orig;
            let fd = (up - down) / (2.0 * h);
            let analytic = g.concat()[k];
            assert_abs_diff_eq!(analytic, fd, epsilon = 1e-7);
        }
    }
}
