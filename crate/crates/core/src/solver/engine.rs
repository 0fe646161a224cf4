//! Internal optimization engine: feasible-direction ascent over a
//! polyhedral feasible region.
//!
//! Columns are standardized to zero mean and unit variance before
//! optimization and the constraint system is mapped into the standardized
//! weight space, so the iteration is well scaled regardless of the units
//! of the input data. Weights are mapped back before results are returned.

use nalgebra::{DMatrix, DVector};

use crate::dataset::{Dataset, Side};
use crate::error::{Error, Result};
use crate::solver::{LinearConstraint, Normalization, Relation, SolverConfig};
use crate::stats;

/// First-order optimality: projected gradient norm at an accepted optimum.
/// The attainable correlation error scales as the square of this, so 1e-7
/// keeps the objective accurate to ~1e-13 while staying above the
/// resolution floor of double-precision line searches.
pub(crate) const PROJECTED_GRAD_TOL: f64 = 1e-7;
/// A constraint is treated as active when its slack is below this.
const ACTIVE_TOL: f64 = 1e-9;
/// Residual level at which phase-1 declares the system feasible.
const FEASIBLE_TOL: f64 = 1e-10;

/// What the ascent loop maximizes.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Goal {
    /// Maximize the composite correlation r.
    Maximize,
    /// Maximize −r (used to find the attainable minimum).
    Minimize,
    /// Maximize −(r − target)², i.e. drive r to the target.
    Target(f64),
}

impl Goal {
    fn value(self, r: f64) -> f64 {
        match self {
            Goal::Maximize => r,
            Goal::Minimize => -r,
            Goal::Target(t) => -(r - t) * (r - t),
        }
    }

    fn dvalue_dr(self, r: f64) -> f64 {
        match self {
            Goal::Maximize => 1.0,
            Goal::Minimize => -1.0,
            Goal::Target(t) => -2.0 * (r - t),
        }
    }
}

/// One linear row `c · w ≤ rhs` (or `= rhs`), unit-normalized.
#[derive(Debug, Clone)]
struct Row {
    c: DVector<f64>,
    rhs: f64,
}

impl Row {
    fn residual(&self, w: &DVector<f64>) -> f64 {
        self.c.dot(w) - self.rhs
    }
}

/// The standardized problem: data matrices, scale factors, and the
/// constraint system expressed over standardized weights.
pub(crate) struct Engine {
    xc: DMatrix<f64>,
    yc: DMatrix<f64>,
    /// Population standard deviation of each active column, x side then y.
    scales: Vec<f64>,
    pub(crate) p: usize,
    pub(crate) q: usize,
    eq: Vec<Row>,
    ineq: Vec<Row>,
    /// The side whose scale the normalization pins.
    norm_side: Side,
}

/// Result of one start of the ascent loop.
#[derive(Debug, Clone)]
pub(crate) struct StartRun {
    pub w: DVector<f64>,
    pub value: f64,
    pub correlation: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl Engine {
    pub(crate) fn build(
        ds: &Dataset,
        constraints: &[LinearConstraint],
        norm: &Normalization,
    ) -> Result<Self> {
        let x_cols = ds.active_columns(Side::X);
        let y_cols = ds.active_columns(Side::Y);
        if x_cols.is_empty() {
            return Err(Error::EmptySide { side: Side::X });
        }
        if y_cols.is_empty() {
            return Err(Error::EmptySide { side: Side::Y });
        }
        let p = x_cols.len();
        let q = y_cols.len();
        let n = ds.n_rows();

        let mut scales = Vec::with_capacity(p + q);
        let mut standardize = |cols: &[&crate::dataset::Column]| -> DMatrix<f64> {
            let mut m = DMatrix::zeros(n, cols.len());
            for (j, col) in cols.iter().enumerate() {
                let mean = col.values().iter().sum::<f64>() / n as f64;
                let var = col
                    .values()
                    .iter()
                    .map(|v| (v - mean) * (v - mean))
                    .sum::<f64>()
                    / n as f64;
                let sd = var.sqrt();
                scales.push(sd);
                for (i, v) in col.values().iter().enumerate() {
                    m[(i, j)] = (v - mean) / sd;
                }
            }
            m
        };
        let xc = standardize(&x_cols);
        let yc = standardize(&y_cols);

        let dim = p + q;
        let mut eq = Vec::new();
        let mut ineq = Vec::new();
        for (index, con) in constraints.iter().enumerate() {
            if con.coeffs.len() != dim {
                return Err(Error::ConstraintLengthMismatch {
                    index,
                    expected: dim,
                    found: con.coeffs.len(),
                });
            }
            if !con.rhs.is_finite() || con.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFiniteConstraint { index });
            }
            if con.coeffs.iter().all(|c| *c == 0.0) {
                return Err(Error::EmptyConstraint { index });
            }
            // Raw weight w_raw[j] = w_std[j] / scale[j], so raw-space
            // coefficients divide by the scale in standardized space.
            let std_coeffs: Vec<f64> = con
                .coeffs
                .iter()
                .zip(&scales)
                .map(|(c, s)| c / s)
                .collect();
            let (c, rhs, is_eq) = match con.relation {
                Relation::Le => (std_coeffs, con.rhs, false),
                Relation::Ge => (std_coeffs.iter().map(|c| -c).collect(), -con.rhs, false),
                Relation::Eq => (std_coeffs, con.rhs, true),
            };
            let row = unit_row(c, rhs);
            if is_eq {
                eq.push(row);
            } else {
                ineq.push(row);
            }
        }

        // The normalization is one more equality row.
        let norm_side;
        match norm {
            Normalization::FixCoefficient { index, value } => {
                if *index >= dim {
                    return Err(Error::BadNormalizationIndex {
                        index: *index,
                        total: dim,
                    });
                }
                if !value.is_finite() || *value == 0.0 {
                    return Err(Error::BadSolverConfig {
                        reason: format!("normalization value must be finite and nonzero, got {value}"),
                    });
                }
                let mut c = vec![0.0; dim];
                c[*index] = 1.0 / scales[*index];
                eq.push(unit_row(c, *value));
                norm_side = if *index < p { Side::X } else { Side::Y };
            }
            Normalization::SumToOne { side } => {
                let mut c = vec![0.0; dim];
                let range = match side {
                    Side::X => 0..p,
                    Side::Y => p..dim,
                };
                for j in range {
                    c[j] = 1.0 / scales[j];
                }
                eq.push(unit_row(c, 1.0));
                norm_side = *side;
            }
        }

        Ok(Engine {
            xc,
            yc,
            scales,
            p,
            q,
            eq,
            ineq,
            norm_side,
        })
    }

    /// Pin the scale of the side the normalization leaves free, so equally
    /// scaled problems return identical weights. The free side of an
    /// optimum can sit anywhere along its (scale-invariant) ray; rescaling
    /// it so both composites have equal standard deviation is
    /// units-independent and puts the two sides of the model on a common
    /// scale. Skipped if the rescaled point would violate any constraint.
    pub(crate) fn canonicalize(&self, w: &DVector<f64>) -> DVector<f64> {
        let a = DVector::from_column_slice(&w.as_slice()[..self.p]);
        let b = DVector::from_column_slice(&w.as_slice()[self.p..]);
        let sd_x = (&self.xc * &a).norm();
        let sd_y = (&self.yc * &b).norm();
        let (range, factor) = match self.norm_side {
            Side::X => (self.p..self.dim(), sd_x / sd_y),
            Side::Y => (0..self.p, sd_y / sd_x),
        };
        if !factor.is_finite() || factor <= 0.0 {
            return w.clone();
        }
        let mut candidate = w.clone();
        for j in range {
            candidate[j] *= factor;
        }
        if self.worst_violation(&candidate) <= 1e-9 {
            candidate
        } else {
            w.clone()
        }
    }

    /// Smallest inequality slack at `w`; +inf when there are none.
    pub(crate) fn min_slack(&self, w: &DVector<f64>) -> f64 {
        self.ineq
            .iter()
            .map(|r| -r.residual(w))
            .fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn dim(&self) -> usize {
        self.p + self.q
    }

    /// Map a standardized weight vector back to raw data units.
    pub(crate) fn unstandardize(&self, w: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
        let raw: Vec<f64> = w.iter().zip(&self.scales).map(|(w, s)| w / s).collect();
        (raw[..self.p].to_vec(), raw[self.p..].to_vec())
    }

    fn value_at(&self, goal: Goal, w: &DVector<f64>) -> Option<f64> {
        let r = self.correlation_at(w)?;
        Some(goal.value(r))
    }

    pub(crate) fn correlation_at(&self, w: &DVector<f64>) -> Option<f64> {
        let a = DVector::from_column_slice(&w.as_slice()[..self.p]);
        let b = DVector::from_column_slice(&w.as_slice()[self.p..]);
        let r = stats::corr_of(&self.xc, &self.yc, &a, &b)?;
        r.is_finite().then_some(r)
    }

    fn value_and_grad(&self, goal: Goal, w: &DVector<f64>) -> Option<(f64, f64, DVector<f64>)> {
        let a = DVector::from_column_slice(&w.as_slice()[..self.p]);
        let b = DVector::from_column_slice(&w.as_slice()[self.p..]);
        let (r, ga, gb) = stats::corr_and_grad(&self.xc, &self.yc, &a, &b)?;
        if !r.is_finite() {
            return None;
        }
        let scale = goal.dvalue_dr(r);
        let mut g = DVector::zeros(self.dim());
        for (i, v) in ga.iter().enumerate() {
            g[i] = scale * v;
        }
        for (i, v) in gb.iter().enumerate() {
            g[self.p + i] = scale * v;
        }
        Some((goal.value(r), r, g))
    }

    /// Phase-1: pull a point onto the feasible region by repeatedly
    /// applying the least-norm correction for the violated rows. Returns
    /// `None` when the violations will not go away (infeasible system).
    pub(crate) fn project_feasible(&self, w0: &DVector<f64>) -> Option<DVector<f64>> {
        let mut w = w0.clone();
        for _ in 0..500 {
            let violated: Vec<&Row> = self
                .ineq
                .iter()
                .filter(|r| r.residual(&w) > FEASIBLE_TOL)
                .collect();
            let eq_ok = self.eq.iter().all(|r| r.residual(&w).abs() <= FEASIBLE_TOL);
            if violated.is_empty() && eq_ok {
                return Some(w);
            }
            // Equalities must stay satisfied while the violated
            // inequalities are fixed, so they are always in the system.
            let system: Vec<&Row> = self.eq.iter().chain(violated).collect();
            let m = system.len();
            let mut a = DMatrix::zeros(m, self.dim());
            let mut b = DVector::zeros(m);
            for (i, row) in system.iter().enumerate() {
                a.row_mut(i).copy_from(&row.c.transpose());
                b[i] = -row.residual(&w);
            }
            let svd = a.svd(true, true);
            let delta = svd.solve(&b, 1e-12).ok()?;
            w += delta.column(0);
        }
        let worst = self.worst_violation(&w);
        (worst <= 1e-9).then_some(w)
    }

    pub(crate) fn worst_violation(&self, w: &DVector<f64>) -> f64 {
        let eq_worst = self
            .eq
            .iter()
            .map(|r| r.residual(w).abs())
            .fold(0.0, f64::max);
        let ineq_worst = self
            .ineq
            .iter()
            .map(|r| r.residual(w).max(0.0))
            .fold(0.0, f64::max);
        eq_worst.max(ineq_worst)
    }

    /// Project the gradient onto the null space of the active constraint
    /// normals, dropping active inequalities whose multiplier says they
    /// block ascent. Returns the direction, its norm, whether first-order
    /// conditions hold, and the surviving active set.
    fn ascent_direction(
        &self,
        w: &DVector<f64>,
        g: &DVector<f64>,
    ) -> (DVector<f64>, f64, bool, Vec<usize>) {
        let mut active: Vec<usize> = self
            .ineq
            .iter()
            .enumerate()
            .filter(|(_, row)| row.residual(w) >= -ACTIVE_TOL)
            .map(|(i, _)| i)
            .collect();
        let drop_tol = 1e-9 * (1.0 + g.norm());

        loop {
            let rows: Vec<&Row> = self
                .eq
                .iter()
                .chain(active.iter().map(|&i| &self.ineq[i]))
                .collect();
            if rows.is_empty() {
                let norm = g.norm();
                return (g.clone(), norm, norm <= PROJECTED_GRAD_TOL, active);
            }
            let m = rows.len();
            let mut nt = DMatrix::zeros(self.dim(), m);
            for (j, row) in rows.iter().enumerate() {
                nt.column_mut(j).copy_from(&row.c);
            }
            let svd = nt.clone().svd(true, true);
            let lambda = match svd.solve(g, 1e-12) {
                Ok(l) => l.column(0).into_owned(),
                Err(_) => DVector::zeros(m),
            };
            let d = g - &nt * &lambda;
            let norm = d.norm();
            if norm > PROJECTED_GRAD_TOL {
                return (d, norm, false, active);
            }
            // Stationary for this active set: look for an inequality whose
            // multiplier has the wrong sign (dropping it opens ascent).
            let n_eq = self.eq.len();
            let mut worst: Option<(usize, f64)> = None;
            for (k, &idx) in active.iter().enumerate() {
                let l = lambda[n_eq + k];
                if l < -drop_tol && worst.map_or(true, |(_, w)| l < w) {
                    worst = Some((idx, l));
                }
            }
            match worst {
                Some((idx, _)) => active.retain(|&i| i != idx),
                None => return (d, norm, true, active),
            }
        }
    }

    /// Largest step along `d` that stays feasible.
    fn max_step(&self, w: &DVector<f64>, d: &DVector<f64>) -> f64 {
        let mut t = f64::INFINITY;
        for row in &self.ineq {
            let res = row.residual(w);
            if res >= -ACTIVE_TOL {
                continue; // active; the direction is already tangent
            }
            let cd = row.c.dot(d);
            if cd > 1e-13 {
                t = t.min(-res / cd);
            }
        }
        t.max(0.0)
    }

    /// Run the ascent loop from a feasible start. Returns `None` when the
    /// start point itself has a degenerate composite.
    pub(crate) fn ascend(
        &self,
        goal: Goal,
        cfg: &SolverConfig,
        w0: DVector<f64>,
    ) -> Option<StartRun> {
        let mut w = w0;
        let (mut value, mut corr, mut grad) = self.value_and_grad(goal, &w)?;

        let mut prev_pg: Option<DVector<f64>> = None;
        let mut prev_dir: Option<DVector<f64>> = None;
        let mut prev_active: Vec<usize> = Vec::new();
        let mut t_prev: f64 = 1.0;
        let mut stall = 0usize;
        let mut eff_conv = cfg.convergence;
        let mut tightenings = 0usize;
        let mut iterations = 0usize;
        let mut converged = false;

        for iter in 1..=cfg.max_iterations {
            iterations = iter;
            let (pg, pg_norm, kkt, active) = self.ascent_direction(&w, &grad);
            if kkt {
                converged = true;
                break;
            }

            // Polak-Ribiere momentum while the active face is unchanged.
            let mut dir = pg.clone();
            if active == prev_active {
                if let (Some(ppg), Some(pdir)) = (&prev_pg, &prev_dir) {
                    let denom = ppg.dot(ppg);
                    if denom > 0.0 {
                        let beta = (pg.dot(&pg) - pg.dot(ppg)) / denom;
                        if beta > 0.0 {
                            dir = &pg + pdir * beta;
                        }
                    }
                }
            }
            let mut gd = pg.dot(&dir);
            if gd <= 1e-12 * pg_norm * dir.norm() {
                dir = pg.clone();
                gd = pg_norm * pg_norm;
            }

            let t_max = self.max_step(&w, &dir);
            if t_max <= 0.0 {
                break;
            }
            let t_cap = t_max.min(100.0 * (1.0 + w.norm()) / dir.norm());
            let t_init = (2.0 * t_prev).clamp(f64::MIN_POSITIVE, t_cap);

            let Some((t, w_new, _)) =
                self.line_search(goal, &w, &dir, value, gd, t_max, t_init)
            else {
                break;
            };
            let Some((v, r, g)) = self.value_and_grad(goal, &w_new) else {
                break;
            };
            let rel = (v - value).abs() / v.abs().max(1.0);
            w = w_new;
            value = v;
            corr = r;
            grad = g;
            t_prev = t;
            prev_pg = Some(pg);
            prev_dir = Some(dir);
            prev_active = active;

            // The stopping rule: the objective moved by less than the
            // convergence threshold over `patience` consecutive iterations.
            // Optimality still has to be confirmed by the gradient check at
            // the top of the loop; while unconfirmed, tighten and continue.
            if rel < eff_conv {
                stall += 1;
            } else {
                stall = 0;
            }
            if stall >= cfg.patience {
                if tightenings < 6 {
                    eff_conv = (eff_conv * 1e-3).max(1e-16);
                    tightenings += 1;
                    stall = 0;
                } else {
                    break;
                }
            }
        }

        // Clean up rounding drift before reporting.
        if let Some(projected) = self.project_feasible(&w) {
            if let Some((v, r, _)) = self.value_and_grad(goal, &projected) {
                w = projected;
                value = v;
                corr = r;
            }
        }

        Some(StartRun {
            w,
            value,
            correlation: corr,
            iterations,
            converged,
        })
    }

    /// Backtracking line search with one quadratic-interpolation
    /// refinement. `gd` is the directional derivative at t = 0 (positive).
    fn line_search(
        &self,
        goal: Goal,
        w: &DVector<f64>,
        dir: &DVector<f64>,
        phi0: f64,
        gd: f64,
        t_max: f64,
        t_init: f64,
    ) -> Option<(f64, DVector<f64>, f64)> {
        const ARMIJO: f64 = 1e-4;
        let mut t = t_init;
        for _ in 0..60 {
            let w_t = w + dir * t;
            if let Some(phi_t) = self.value_at(goal, &w_t) {
                if phi_t >= phi0 + ARMIJO * t * gd {
                    // Accepted; see if the interpolated 1-D maximizer does
                    // better within the feasible interval.
                    let denom = 2.0 * (phi0 + gd * t - phi_t);
                    if denom > 0.0 {
                        let t_q = (gd * t * t / denom).min(t_max);
                        if t_q > 0.0 && (t_q - t).abs() > 0.1 * t {
                            let w_q = w + dir * t_q;
                            if let Some(phi_q) = self.value_at(goal, &w_q) {
                                if phi_q > phi_t {
                                    return Some((t_q, w_q, phi_q));
                                }
                            }
                        }
                    }
                    return Some((t, w_t, phi_t));
                }
                // Quadratic backtrack, safeguarded into [0.1 t, 0.5 t].
                let denom = 2.0 * (phi0 + gd * t - phi_t);
                let t_next = if denom > 0.0 {
                    (gd * t * t / denom).clamp(0.1 * t, 0.5 * t)
                } else {
                    0.5 * t
                };
                t = t_next;
            } else {
                t *= 0.5;
            }
            if t < 1e-18 {
                break;
            }
        }
        None
    }
}

fn unit_row(coeffs: Vec<f64>, rhs: f64) -> Row {
    let c = DVector::from_vec(coeffs);
    let norm = c.norm();
    Row {
        c: c / norm,
        rhs: rhs / norm,
    }
}
