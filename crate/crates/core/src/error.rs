//! Crate-wide error type.

use crate::dataset::Side;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // --- ingestion / dataset ---
    #[error("failed to read '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse '{path}' as CSV: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("header '{column}' has no entry in the roles map")]
    MissingRole { column: String },
    #[error("non-numeric cell at data row {row}, column '{column}': '{value}'")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("duplicate column name '{name}'")]
    DuplicateColumn { name: String },
    #[error("too few rows: {found} (need at least 3)")]
    TooFewRows { found: usize },
    #[error("column lengths differ: '{column}' has {found} values, expected {expected}")]
    RaggedColumn {
        column: String,
        found: usize,
        expected: usize,
    },
    #[error("no {side}-side columns in dataset")]
    EmptySide { side: Side },
    #[error("unknown column '{name}'")]
    UnknownColumn { name: String },
    #[error("log transform needs strictly positive values; column '{column}' has {value} at data row {row}")]
    LogNonPositive {
        column: String,
        row: usize,
        value: f64,
    },
    #[error("product sources '{left}' and '{right}' are on different sides")]
    ProductAcrossSides { left: String, right: String },
    #[error("transform '{kind}' takes {expected} source column(s), got {found}")]
    BadSourceCount {
        kind: &'static str,
        expected: usize,
        found: usize,
    },

    // --- stats ---
    #[error("vector lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("weight vector for the {side} side has {found} entries, expected {expected}")]
    WeightLengthMismatch {
        side: Side,
        expected: usize,
        found: usize,
    },
    #[error("zero variance in {what}")]
    ZeroVariance { what: String },

    // --- solver ---
    #[error("constraint {index} has all-zero coefficients")]
    EmptyConstraint { index: usize },
    #[error("constraint {index} is not finite")]
    NonFiniteConstraint { index: usize },
    #[error("constraint {index} has {found} coefficients, expected {expected}")]
    ConstraintLengthMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("normalization refers to weight index {index}, but there are only {total} weights")]
    BadNormalizationIndex { index: usize, total: usize },
    #[error("invalid solver configuration: {reason}")]
    BadSolverConfig { reason: String },
    #[error("every feasible start produced a degenerate composite")]
    AllStartsDegenerate,
    #[error("cannot rescale: {reason}")]
    BadRescale { reason: String },
    #[error("target correlation {target} is outside (-1, 1)")]
    TargetOutOfRange { target: f64 },

    // --- CCA oracle ---
    #[error("within-set covariance of the {side} side is singular (collinear columns)")]
    CollinearSide { side: Side },

    // --- baselines ---
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("normalizing coefficient {index} yields a degenerate regression: {reason}")]
    DegenerateNormalization { index: usize, reason: String },
    #[error("need at least two coefficients to compare normalizations, found {found}")]
    TooFewCoefficients { found: usize },
    #[error("scale factor must be positive and not 1, got {factor}")]
    BadScaleFactor { factor: f64 },
    #[error("orthogonal fit axis is undefined: {reason}")]
    OrthogonalAxisUndefined { reason: String },

    // --- model builder ---
    #[error("prediction input is missing variable '{name}'")]
    MissingVariable { name: String },
    #[error("model/dataset schema mismatch: {reason}")]
    SchemaMismatch { reason: String },

    // --- resonance ---
    #[error("integer enumeration would visit {size} combinations, above the ceiling of {ceiling}")]
    EnumerationTooLarge { size: u128, ceiling: u128 },
    #[error("all weights are zero")]
    AllZeroWeights,
}
