//! Exhaustive integer-coefficient maximum-correlation search, for
//! detecting commensurabilities: near-exact integer linear relations
//! between the two variable groups.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Side};
use crate::error::{Error, Result};
use crate::solver::FitResult;
use crate::stats::{self, WeightPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegerSearchConfig {
    /// Coefficients range over [-bound, bound].
    pub bound: i64,
    /// How many best combinations to report.
    pub top_k: usize,
    /// Refuse enumerations larger than this many combinations.
    pub ceiling: u128,
}

impl Default for IntegerSearchConfig {
    fn default() -> Self {
        IntegerSearchConfig {
            bound: 3,
            top_k: 10,
            ceiling: 100_000_000,
        }
    }
}

/// One integer weight combination in gcd-reduced, sign-canonical form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceHit {
    pub a: Vec<i64>,
    pub b: Vec<i64>,
    pub correlation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegerSearchResult {
    pub hits: Vec<ResonanceHit>,
    /// Combinations skipped because a composite had zero variance.
    pub degenerate_skipped: usize,
    /// Lattice points visited (before canonical-form deduplication).
    pub enumerated: u128,
}

/// Exhaustively enumerate integer weight combinations within the bound and
/// rank them by |correlation|.
///
/// |correlation| is exactly invariant under rescaling either side alone,
/// so combinations are deduplicated per side: each side must be
/// gcd-reduced with its first nonzero entry positive, and neither side may
/// be all zero. This subsumes dedup up to overall sign and scaling; the
/// sign of the relation survives in the reported correlation.
pub fn integer_search(ds: &Dataset, cfg: &IntegerSearchConfig) -> Result<IntegerSearchResult> {
    if cfg.bound < 1 {
        return Err(Error::BadSolverConfig {
            reason: format!("integer search bound must be at least 1, got {}", cfg.bound),
        });
    }
    let p = ds.active_columns(Side::X).len();
    let q = ds.active_columns(Side::Y).len();
    if p == 0 {
        return Err(Error::EmptySide { side: Side::X });
    }
    if q == 0 {
        return Err(Error::EmptySide { side: Side::Y });
    }
    let dim = p + q;
    let radix = 2 * cfg.bound as u128 + 1;
    let size = radix
        .checked_pow(dim as u32)
        .ok_or(Error::EnumerationTooLarge {
            size: u128::MAX,
            ceiling: cfg.ceiling,
        })?;
    if size > cfg.ceiling {
        return Err(Error::EnumerationTooLarge {
            size,
            ceiling: cfg.ceiling,
        });
    }

    let mut hits: Vec<ResonanceHit> = Vec::new();
    let mut degenerate_skipped = 0usize;
    let mut enumerated = 0u128;
    let mut coeffs = vec![-cfg.bound; dim];
    loop {
        enumerated += 1;
        if is_canonical(&coeffs[..p]) && is_canonical(&coeffs[p..]) {
            let w = WeightPair::new(
                coeffs[..p].iter().map(|v| *v as f64).collect(),
                coeffs[p..].iter().map(|v| *v as f64).collect(),
            );
            match stats::correlation_of_weights(ds, &w) {
                Ok(r) => hits.push(ResonanceHit {
                    a: coeffs[..p].to_vec(),
                    b: coeffs[p..].to_vec(),
                    correlation: r,
                }),
                Err(Error::ZeroVariance { .. }) => degenerate_skipped += 1,
                Err(e) => return Err(e),
            }
        }
        if !advance(&mut coeffs, cfg.bound) {
            break;
        }
    }

    hits.sort_by(|l, r| {
        r.correlation
            .abs()
            .partial_cmp(&l.correlation.abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| (l.a.clone(), l.b.clone()).cmp(&(r.a.clone(), r.b.clone())))
    });
    hits.truncate(cfg.top_k);

    Ok(IntegerSearchResult {
        hits,
        degenerate_skipped,
        enumerated,
    })
}

fn advance(coeffs: &mut [i64], bound: i64) -> bool {
    for c in coeffs.iter_mut().rev() {
        if *c < bound {
            *c += 1;
            return true;
        }
        *c = -bound;
    }
    false
}

/// Canonical side: not all zero, gcd of magnitudes 1, first nonzero entry
/// positive. Every non-canonical lattice point is a multiple or sign flip
/// of a canonical one that the enumeration also visits.
fn is_canonical(coeffs: &[i64]) -> bool {
    let mut g: i64 = 0;
    for c in coeffs {
        g = gcd(g, c.abs());
    }
    if g != 1 {
        return false;
    }
    coeffs.iter().find(|c| **c != 0).is_some_and(|c| *c > 0)
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Nearest-integer diagnosis of a continuous fit.
#[derive(Debug, Clone, Serialize)]
pub struct NearestIntegerReport {
    /// Weights rescaled so the smallest-magnitude nonzero weight is 1.
    pub scaled_weights: Vec<f64>,
    pub nearest_integers: Vec<i64>,
    pub distances: Vec<f64>,
    /// True when every distance is within the threshold.
    pub flagged: bool,
    pub threshold: f64,
}

/// Rescale the fitted weights so the smallest-magnitude nonzero weight is
/// 1, then measure each weight's distance to the nearest integer. The
/// model is flagged as a resonance candidate when all distances are within
/// the threshold.
pub fn nearest_integer_report(res: &FitResult, threshold: f64) -> Result<NearestIntegerReport> {
    let flat = res.weights.concat();
    let smallest = flat
        .iter()
        .map(|v| v.abs())
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !smallest.is_finite() {
        return Err(Error::AllZeroWeights);
    }
    let scaled_weights: Vec<f64> = flat.iter().map(|v| v / smallest).collect();
    let nearest_integers: Vec<i64> = scaled_weights.iter().map(|v| v.round() as i64).collect();
    let distances: Vec<f64> = scaled_weights
        .iter()
        .zip(&nearest_integers)
        .map(|(v, n)| (v - *n as f64).abs())
        .collect();
    let flagged = distances.iter().all(|d| *d <= threshold);
    Ok(NearestIntegerReport {
        scaled_weights,
        nearest_integers,
        distances,
        flagged,
        threshold,
    })
}
