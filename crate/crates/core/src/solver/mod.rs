//! Maximize the composite correlation subject to linear constraints on the
//! weights, with multi-start verification and a target-correlation mode.
//!
//! The method is a feasible-direction ascent: project the analytic
//! correlation gradient onto the active constraint set, line-search with
//! quadratic interpolation, and stop once the relative objective change
//! stays below the convergence threshold for `patience` iterations *and*
//! the projected gradient confirms first-order optimality.

mod engine;

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Side};
use crate::error::{Error, Result};
use crate::stats::{self, WeightPair};

use engine::{Engine, Goal, StartRun};

/// Constraint relations, spelled the way the config files spell them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

/// A linear constraint over the concatenated weight vector (a then b).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        LinearConstraint {
            coeffs,
            relation,
            rhs,
        }
    }
}

/// The normalization that pins the scale of the weights and rules out the
/// all-zero solution. Exactly one per fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Normalization {
    FixCoefficient { index: usize, value: f64 },
    SumToOne { side: Side },
}

impl Normalization {
    /// Fix the coefficient at `index` (into the concatenated weights) to 1.
    pub fn fix(index: usize) -> Self {
        Normalization::FixCoefficient { index, value: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Relative-change threshold in (0, 1).
    pub convergence: f64,
    /// Number of consecutive small-change iterations before stopping.
    pub patience: usize,
    pub max_iterations: usize,
    pub n_starts: usize,
    pub rng_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            convergence: 1e-9,
            patience: 5,
            max_iterations: 10_000,
            n_starts: 8,
            rng_seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn with_seed(seed: u64) -> Self {
        SolverConfig {
            rng_seed: seed,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.convergence > 0.0 && self.convergence < 1.0) {
            return Err(Error::BadSolverConfig {
                reason: format!("convergence must be in (0, 1), got {}", self.convergence),
            });
        }
        if self.patience == 0 {
            return Err(Error::BadSolverConfig {
                reason: "patience must be at least 1".to_string(),
            });
        }
        if self.n_starts == 0 {
            return Err(Error::BadSolverConfig {
                reason: "n_starts must be at least 1".to_string(),
            });
        }
        if self.max_iterations == 0 {
            return Err(Error::BadSolverConfig {
                reason: "max_iterations must be at least 1".to_string(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub weights: WeightPair,
    pub correlation: f64,
    pub status: SolveStatus,
    /// How many starts finished within 1e-6 of the best correlation.
    pub starts_agreeing: usize,
    /// Iterations used by the winning start.
    pub iterations: usize,
}

/// Find weights maximizing the composite correlation subject to the
/// constraints and the normalization.
pub fn maximize(
    ds: &Dataset,
    constraints: &[LinearConstraint],
    norm: &Normalization,
    cfg: &SolverConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let engine = Engine::build(ds, constraints, norm)?;
    Ok(multi_start(ds, &engine, Goal::Maximize, cfg, &[])?.0)
}

/// Find constraint-satisfying weights whose correlation hits `target`
/// (within 1e-6) instead of the maximum. Infeasible when the target lies
/// outside the attainable range.
pub fn solve_for_target(
    ds: &Dataset,
    constraints: &[LinearConstraint],
    norm: &Normalization,
    target: f64,
    cfg: &SolverConfig,
) -> Result<FitResult> {
    if !(target > -1.0 && target < 1.0) || !target.is_finite() {
        return Err(Error::TargetOutOfRange { target });
    }
    cfg.validate()?;
    let engine = Engine::build(ds, constraints, norm)?;

    let (max_res, max_w) = multi_start(ds, &engine, Goal::Maximize, cfg, &[])?;
    if max_res.status == SolveStatus::Infeasible {
        return Ok(max_res);
    }
    if target > max_res.correlation + 1e-7 {
        return Ok(FitResult {
            status: SolveStatus::Infeasible,
            ..max_res
        });
    }
    if (target - max_res.correlation).abs() <= 1e-6 {
        return Ok(max_res);
    }

    let (min_res, _) = multi_start(ds, &engine, Goal::Minimize, cfg, &[])?;
    if target < min_res.correlation - 1e-7 {
        return Ok(FitResult {
            status: SolveStatus::Infeasible,
            ..min_res
        });
    }
    if (target - min_res.correlation).abs() <= 1e-6 {
        return Ok(min_res);
    }

    // Descending from the maximizer mirrors the workflow of lowering the
    // target after a maximizing run: the first-order exit from a
    // constrained maximum releases the binding constraints, so tied
    // weights separate as the correlation is traded away.
    let extra: Vec<_> = max_w.into_iter().collect();
    let (mut res, _) = multi_start(ds, &engine, Goal::Target(target), cfg, &extra)?;
    if res.status == SolveStatus::Optimal && (res.correlation - target).abs() > 1e-6 {
        // Converged to a stationary point of r off the target manifold.
        res.status = SolveStatus::MaxIterations;
    }
    Ok(res)
}

/// Re-express a fit under a different normalization by rescaling one side.
/// The correlation magnitude is unchanged; its sign flips when the scaling
/// factor is negative.
pub fn rescale_result(res: &FitResult, norm: &Normalization) -> Result<FitResult> {
    let p = res.weights.a.len();
    let q = res.weights.b.len();
    let (on_x_side, factor) = match norm {
        Normalization::FixCoefficient { index, value } => {
            if *index >= p + q {
                return Err(Error::BadNormalizationIndex {
                    index: *index,
                    total: p + q,
                });
            }
            if *value == 0.0 || !value.is_finite() {
                return Err(Error::BadRescale {
                    reason: format!("target value must be finite and nonzero, got {value}"),
                });
            }
            let on_x = *index < p;
            let side = if on_x { &res.weights.a } else { &res.weights.b };
            let cur = if on_x {
                res.weights.a[*index]
            } else {
                res.weights.b[*index - p]
            };
            let scale = side.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if cur.abs() <= 1e-12 * scale || cur == 0.0 {
                return Err(Error::BadRescale {
                    reason: format!("coefficient {index} is zero"),
                });
            }
            (on_x, value / cur)
        }
        Normalization::SumToOne { side } => {
            let on_x = *side == Side::X;
            let vec = if on_x { &res.weights.a } else { &res.weights.b };
            let sum: f64 = vec.iter().sum();
            let scale = vec.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if sum.abs() <= 1e-12 * scale || sum == 0.0 {
                return Err(Error::BadRescale {
                    reason: format!("{side}-side weights sum to zero"),
                });
            }
            (on_x, 1.0 / sum)
        }
    };

    let mut out = res.clone();
    let vec = if on_x_side {
        &mut out.weights.a
    } else {
        &mut out.weights.b
    };
    for v in vec.iter_mut() {
        *v *= factor;
    }
    out.correlation *= factor.signum();
    Ok(out)
}

fn multi_start(
    ds: &Dataset,
    engine: &Engine,
    goal: Goal,
    cfg: &SolverConfig,
    extra_starts: &[DVector<f64>],
) -> Result<(FitResult, Option<DVector<f64>>)> {
    let dim = engine.dim();

    // Authoritative feasibility check before burning starts.
    let origin_projection = engine.project_feasible(&DVector::zeros(dim));
    let Some(fallback_start) = origin_projection else {
        return Ok((infeasible_result(engine), None));
    };

    let mut runs: Vec<StartRun> = Vec::new();
    for w0 in extra_starts {
        if let Some(w0) = engine.project_feasible(w0) {
            if let Some(r) = engine.ascend(goal, cfg, w0) {
                runs.push(r);
            }
        }
    }
    let mut saw_feasible_start = !extra_starts.is_empty();
    for s in 0..cfg.n_starts {
        let seed = cfg
            .rng_seed
            .wrapping_add((s as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut run = None;
        for _ in 0..100 {
            let draw =
                DVector::from_fn(dim, |_, _| rng.random_range(-1.0..=1.0));
            let Some(w0) = engine.project_feasible(&draw) else {
                continue;
            };
            saw_feasible_start = true;
            if let Some(r) = engine.ascend(goal, cfg, w0) {
                run = Some(r);
                break;
            }
        }
        if run.is_none() {
            // Every redraw failed; the origin projection is feasible, so
            // try the ascent from there.
            saw_feasible_start = true;
            run = engine.ascend(goal, cfg, fallback_start.clone());
        }
        if let Some(r) = run {
            runs.push(r);
        }
    }

    if runs.is_empty() {
        return if saw_feasible_start {
            Err(Error::AllStartsDegenerate)
        } else {
            Ok((infeasible_result(engine), None))
        };
    }

    // Best value wins; ties go to the earliest start for determinism. In
    // target mode every run that hits the target is equally good by value,
    // so prefer the one with the most comfortable constraint slack (the
    // point of target mode is more acceptable weights).
    let key = |run: &StartRun| -> (bool, f64) {
        match goal {
            Goal::Target(t) if (run.correlation - t).abs() <= 1e-6 => {
                (true, engine.min_slack(&engine.canonicalize(&run.w)).min(1e18))
            }
            _ => (false, run.value),
        }
    };
    let mut best = 0;
    let mut best_key = key(&runs[0]);
    for (i, run) in runs.iter().enumerate().skip(1) {
        let k = key(run);
        if k > best_key {
            best = i;
            best_key = k;
        }
    }
    let starts_agreeing = runs
        .iter()
        .filter(|r| (r.correlation - runs[best].correlation).abs() <= 1e-6)
        .count();

    let best_w = engine.canonicalize(&runs[best].w);
    let (a, b) = engine.unstandardize(&best_w);
    let weights = WeightPair::new(a, b);
    // Report the correlation of the returned weights on the raw data so it
    // matches `correlation_of_weights` exactly.
    let correlation =
        stats::correlation_of_weights(ds, &weights).unwrap_or(runs[best].correlation);
    let status = if runs[best].converged {
        SolveStatus::Optimal
    } else {
        SolveStatus::MaxIterations
    };

    Ok((
        FitResult {
            weights,
            correlation,
            status,
            starts_agreeing,
            iterations: runs[best].iterations,
        },
        Some(best_w),
    ))
}

fn infeasible_result(engine: &Engine) -> FitResult {
    FitResult {
        weights: WeightPair::new(vec![0.0; engine.p], vec![0.0; engine.q]),
        correlation: 0.0,
        status: SolveStatus::Infeasible,
        starts_agreeing: 0,
        iterations: 0,
    }
}
