//! Turn a fitted weight pair into a predictive single equation.
//!
//! The composite Y is regressed on the composite X, and the resulting line
//! is expanded back over the original variables: Y-side coefficients stay
//! b, X-side effective coefficients become slope·a, and the constant is the
//! regression intercept. Derived columns are recomputed from lineage at
//! prediction time, so callers supply only the base variables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Side, TransformKind, TransformStep};
use crate::error::{Error, Result};
use crate::solver::FitResult;
use crate::stats::{self, WeightPair};

/// A fitted straight line with its goodness of fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineModel {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of composite Y on composite X, with intercept.
pub fn regress_y_on_x(ds: &Dataset, w: &WeightPair) -> Result<LineModel> {
    let comps = stats::composites(ds, w)?;
    simple_ols(&comps.x, &comps.y)
}

/// Simple OLS of y on x; `r_squared` is the squared Pearson correlation.
pub fn simple_ols(x: &[f64], y: &[f64]) -> Result<LineModel> {
    let r = stats::pearson(x, y)?;
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mean_x) * (xi - mean_x);
        sxy += (xi - mean_x) * (yi - mean_y);
    }
    let slope = sxy / sxx;
    Ok(LineModel {
        slope,
        intercept: mean_y - slope * mean_x,
        r_squared: r * r,
    })
}

/// Schema entry for one column: its name and how it is computed from other
/// columns (empty lineage means it is a base variable).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub lineage: Vec<TransformStep>,
}

/// The expanded single-equation model over the original variables:
/// Σ y_coeffs·y = Σ x_coeffs·x + constant, with provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpandedModel {
    pub y_coeffs: BTreeMap<String, f64>,
    pub x_coeffs: BTreeMap<String, f64>,
    pub constant: f64,
    pub fit: FitSummary,
    /// X-side column schemas, in weight order, for prediction-time
    /// recomputation of derived columns.
    pub x_schema: Vec<ColumnSchema>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub correlation: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub fit: FitResult,
    pub line: LineModel,
}

/// Expand a fit and its Y-on-X line into per-variable coefficients.
pub fn expand(ds: &Dataset, fit: &FitResult, line: &LineModel) -> Result<ExpandedModel> {
    let x_cols = ds.active_columns(Side::X);
    let y_cols = ds.active_columns(Side::Y);
    if fit.weights.a.len() != x_cols.len() {
        return Err(Error::WeightLengthMismatch {
            side: Side::X,
            expected: x_cols.len(),
            found: fit.weights.a.len(),
        });
    }
    if fit.weights.b.len() != y_cols.len() {
        return Err(Error::WeightLengthMismatch {
            side: Side::Y,
            expected: y_cols.len(),
            found: fit.weights.b.len(),
        });
    }

    let mut x_coeffs = BTreeMap::new();
    let mut x_schema = Vec::new();
    for (col, a) in x_cols.iter().zip(&fit.weights.a) {
        x_coeffs.insert(col.name.clone(), line.slope * a);
        x_schema.push(ColumnSchema {
            name: col.name.clone(),
            lineage: col.lineage.clone(),
        });
    }
    let mut y_coeffs = BTreeMap::new();
    for (col, b) in y_cols.iter().zip(&fit.weights.b) {
        y_coeffs.insert(col.name.clone(), *b);
    }

    Ok(ExpandedModel {
        y_coeffs,
        x_coeffs,
        constant: line.intercept,
        fit: FitSummary {
            correlation: fit.correlation,
            r_squared: line.r_squared,
        },
        x_schema,
        provenance: Provenance {
            fit: fit.clone(),
            line: line.clone(),
        },
    })
}

/// Predict the expected composite Y for one row of base x-side variables.
/// Derived columns are recomputed from lineage, never supplied.
pub fn predict_expected_y(model: &ExpandedModel, x_row: &BTreeMap<String, f64>) -> Result<f64> {
    let schema: BTreeMap<&str, &ColumnSchema> = model
        .x_schema
        .iter()
        .map(|s| (s.name.as_str(), s))
        .collect();
    let mut total = model.constant;
    for (name, coeff) in &model.x_coeffs {
        let value = resolve_value(name, &schema, x_row, 0)?;
        total += coeff * value;
    }
    Ok(total)
}

fn resolve_value(
    name: &str,
    schema: &BTreeMap<&str, &ColumnSchema>,
    row: &BTreeMap<String, f64>,
    depth: usize,
) -> Result<f64> {
    if depth > 64 {
        return Err(Error::SchemaMismatch {
            reason: format!("lineage of '{name}' is circular"),
        });
    }
    let lineage: &[TransformStep] = schema.get(name).map_or(&[], |s| &s.lineage);
    if lineage.is_empty() {
        return row
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingVariable {
                name: name.to_string(),
            });
    }

    let mut value: Option<f64> = None;
    for step in lineage {
        let in_place = step.sources.len() == 1 && step.sources[0] == name;
        let base = match (value, in_place) {
            (Some(v), true) => v,
            (None, true) => row.get(name).copied().ok_or_else(|| Error::MissingVariable {
                name: name.to_string(),
            })?,
            (None, false) => f64::NAN, // derivation step; sources resolved below
            (Some(_), false) => {
                return Err(Error::SchemaMismatch {
                    reason: format!("derivation step of '{name}' is not first in its lineage"),
                })
            }
        };
        let next = match (&step.kind, in_place) {
            (TransformKind::SignFlip, true) => -base,
            (TransformKind::Shift { constant }, true) => base + constant,
            (TransformKind::Square, false) => {
                let v = resolve_value(&step.sources[0], schema, row, depth + 1)?;
                v * v
            }
            (TransformKind::Log, false) => {
                let v = resolve_value(&step.sources[0], schema, row, depth + 1)?;
                if v <= 0.0 {
                    return Err(Error::LogNonPositive {
                        column: step.sources[0].clone(),
                        row: 0,
                        value: v,
                    });
                }
                v.ln()
            }
            (TransformKind::Product, false) => {
                let l = resolve_value(&step.sources[0], schema, row, depth + 1)?;
                let r = resolve_value(&step.sources[1], schema, row, depth + 1)?;
                l * r
            }
            (TransformKind::SignFlip, false) => {
                -resolve_value(&step.sources[0], schema, row, depth + 1)?
            }
            (TransformKind::Shift { constant }, false) => {
                resolve_value(&step.sources[0], schema, row, depth + 1)? + constant
            }
            (kind, true) => {
                return Err(Error::SchemaMismatch {
                    reason: format!(
                        "in-place {:?} step on '{name}' is not a supported lineage shape",
                        kind
                    ),
                })
            }
        };
        value = Some(next);
    }
    Ok(value.expect("lineage is non-empty"))
}

/// Actual minus predicted composite Y per row of the fitting dataset.
/// On the training data these are the regression residuals: mean zero and
/// uncorrelated with composite X.
pub fn residual_scores(ds: &Dataset, model: &ExpandedModel) -> Result<Vec<f64>> {
    let y_cols = ds.active_columns(Side::Y);
    let x_cols = ds.active_columns(Side::X);
    for name in model.y_coeffs.keys() {
        if !y_cols.iter().any(|c| &c.name == name) {
            return Err(Error::SchemaMismatch {
                reason: format!("dataset lacks y-side column '{name}'"),
            });
        }
    }
    for name in model.x_coeffs.keys() {
        if !x_cols.iter().any(|c| &c.name == name) {
            return Err(Error::SchemaMismatch {
                reason: format!("dataset lacks x-side column '{name}'"),
            });
        }
    }

    let n = ds.n_rows();
    let mut residuals = vec![0.0; n];
    for (name, coeff) in &model.y_coeffs {
        let col = ds.column(name).expect("checked above");
        for (r, v) in residuals.iter_mut().zip(col.values()) {
            *r += coeff * v;
        }
    }
    for (name, coeff) in &model.x_coeffs {
        let col = ds.column(name).expect("checked above");
        for (r, v) in residuals.iter_mut().zip(col.values()) {
            *r -= coeff * v;
        }
    }
    for r in residuals.iter_mut() {
        *r -= model.constant;
    }
    Ok(residuals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{SolveStatus};
    use approx::assert_abs_diff_eq;

    fn fit_result(a: Vec<f64>, b: Vec<f64>, correlation: f64) -> FitResult {
        FitResult {
            weights: WeightPair::new(a, b),
            correlation,
            status: SolveStatus::Optimal,
            starts_agreeing: 1,
            iterations: 1,
        }
    }

    #[test]
    fn regress_exact_double() {
        let ds = Dataset::from_parts(vec![
            ("x1", Side::X, vec![1.0, 2.0, 3.0, 4.0]),
            ("y1", Side::Y, vec![2.0, 4.0, 6.0, 8.0]),
        ])
        .unwrap();
        let line = regress_y_on_x(&ds, &WeightPair::new(vec![1.0], vec![1.0])).unwrap();
        assert_abs_diff_eq!(line.slope, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(line.intercept, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(line.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn regress_hand_example() {
        // X=[1,2,3,4], Y=[1,3,2,4]: slope = 1/1.25 = 0.8, intercept 0.5,
        // r² = 0.64.
        let ds = Dataset::from_parts(vec![
            ("x1", Side::X, vec![1.0, 2.0, 3.0, 4.0]),
            ("y1", Side::Y, vec![1.0, 3.0, 2.0, 4.0]),
        ])
        .unwrap();
        let line = regress_y_on_x(&ds, &WeightPair::new(vec![1.0], vec![1.0])).unwrap();
        assert_abs_diff_eq!(line.slope, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(line.intercept, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(line.r_squared, 0.64, epsilon = 1e-12);
    }

    #[test]
    fn expand_arithmetic() {
        let ds = Dataset::from_parts(vec![
            ("x1", Side::X, vec![1.0, 2.0, 3.0]),
            ("y1", Side::Y, vec![3.0, 1.0, 2.0]),
        ])
        .unwrap();
        let fit = fit_result(vec![1.0], vec![1.0], 0.5);
        let line = LineModel {
            slope: 2.35,
            intercept: -7.01,
            r_squared: 0.81,
        };
        let model = expand(&ds, &fit, &line).unwrap();
        assert_abs_diff_eq!(model.y_coeffs["y1"], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(model.x_coeffs["x1"], 2.35, epsilon = 1e-15);
        assert_abs_diff_eq!(model.constant, -7.01, epsilon = 1e-15);
    }

    #[test]
    fn expand_identity_line_keeps_weights() {
        let ds = Dataset::from_parts(vec![
            ("x1", Side::X, vec![1.0, 2.0, 3.0]),
            ("x2", Side::X, vec![2.0, 1.0, 4.0]),
            ("y1", Side::Y, vec![3.0, 1.0, 2.0]),
        ])
        .unwrap();
        let fit = fit_result(vec![0.7, -0.3], vec![1.2], 0.4);
        let line = LineModel {
            slope: 1.0,
            intercept: 0.0,
            r_squared: 0.16,
        };
        let model = expand(&ds, &fit, &line).unwrap();
        assert_abs_diff_eq!(model.x_coeffs["x1"], 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(model.x_coeffs["x2"], -0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(model.y_coeffs["y1"], 1.2, epsilon = 1e-15);
    }

    #[test]
    fn predict_simple() {
        let ds = Dataset::from_parts(vec![
            ("x1", Side::X, vec![1.0, 2.0, 3.0]),
            ("y1", Side::Y, vec![3.0, 1.0, 2.0]),
        ])
        .unwrap();
        let fit = fit_result(vec![1.0], vec![1.0], 0.5);
        let line = LineModel {
            slope: 2.0,
            intercept: 1.0,
            r_squared: 0.25,
        };
        let model = expand(&ds, &fit, &line).unwrap();
        let row = BTreeMap::from([("x1".to_string(), 3.0)]);
        assert_abs_diff_eq!(predict_expected_y(&model, &row).unwrap(), 7.0, epsilon = 1e-15);

        let err = predict_expected_y(&model, &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, Error::MissingVariable { name } if name == "x1"));
    }

    #[test]
    fn predict_recomputes_derived_from_lineage() {
        let ds = Dataset::from_parts(vec![
            ("x5", Side::X, vec![1.0, 2.0, 3.0]),
            ("y1", Side::Y, vec![3.0, 1.0, 2.0]),
        ])
        .unwrap()
        .add_derived(TransformKind::Square, &["x5"], "x6")
        .unwrap();
        let fit = fit_result(vec![0.5, 0.25], vec![1.0], 0.5);
        let line = LineModel {
            slope: 1.0,
            intercept: 0.0,
            r_squared: 0.25,
        };
        let model = expand(&ds, &fit, &line).unwrap();
        // x5 = 4 implies x6 = 16, recomputed, not supplied.
        let row = BTreeMap::from([("x5".to_string(), 4.0)]);
        let pred = predict_expected_y(&model, &row).unwrap();
        assert_abs_diff_eq!(pred, 0.5 * 4.0 + 0.25 * 16.0, epsilon = 1e-12);
    }

    #[test]
    fn residuals_have_ols_structure() {
        let ds = Dataset::from_parts(vec![
            ("x1", Side::X, vec![1.0, 2.0, 3.0, 4.0, 5.0]),
            ("y1", Side::Y, vec![1.2, 2.9, 3.4, 4.8, 4.9]),
        ])
        .unwrap();
        let w = WeightPair::new(vec![1.0], vec![1.0]);
        let line = regress_y_on_x(&ds, &w).unwrap();
        let fit = fit_result(vec![1.0], vec![1.0], line.r_squared.sqrt());
        let model = expand(&ds, &fit, &line).unwrap();
        let res = residual_scores(&ds, &model).unwrap();

        let mean: f64 = res.iter().sum::<f64>() / res.len() as f64;
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-10);

        // Residuals are orthogonal to composite X.
        let comps = stats::composites(&ds, &w).unwrap();
        let mean_x: f64 = comps.x.iter().sum::<f64>() / comps.x.len() as f64;
        let dot: f64 = res
            .iter()
            .zip(&comps.x)
            .map(|(r, x)| r * (x - mean_x))
            .sum();
        assert_abs_diff_eq!(dot, 0.0, epsilon = 1e-10);

        // Round trip: expanded-model evaluation reproduces the regression
        // residuals.
        for (i, r) in res.iter().enumerate() {
            let direct = comps.y[i] - (line.slope * comps.x[i] + line.intercept);
            assert_abs_diff_eq!(*r, direct, epsilon = 1e-10);
        }
    }

    #[test]
    fn residuals_schema_mismatch() {
        let ds = Dataset::from_parts(vec![
            ("x1", Side::X, vec![1.0, 2.0, 3.0]),
            ("y1", Side::Y, vec![3.0, 1.0, 2.0]),
        ])
        .unwrap();
        let other = Dataset::from_parts(vec![
            ("a", Side::X, vec![1.0, 2.0, 3.0]),
            ("y1", Side::Y, vec![3.0, 1.0, 2.0]),
        ])
        .unwrap();
        let fit = fit_result(vec![1.0], vec![1.0], 0.5);
        let line = LineModel {
            slope: 1.0,
            intercept: 0.0,
            r_squared: 0.25,
        };
        let model = expand(&ds, &fit, &line).unwrap();
        assert!(matches!(
            residual_scores(&other, &model).unwrap_err(),
            Error::SchemaMismatch { .. }
        ));
    }
}
