//! Alternating minimization with projected gradient descent.
//!
//! Each outer iteration solves the `W` sub-problem (box and support
//! constraints) and then the joint `(A, b)` sub-problem (scaled-simplex
//! columns and non-negative bias) inexactly, by projected gradient steps
//! accepted under an Armijo sufficient-decrease rule in the projected form:
//! a step `η` is accepted when
//! `f(P(θ − η∇)) ≤ f(θ) − σ·⟨∇, θ − P(θ − η∇)⟩`.
//! Both sub-problems are convex with the other factor fixed, so accepted
//! steps can only decrease the objective.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    feasibility_parts, reconstruct_parts, CountMatrix, FactorModel, SolveReport, SupportSets,
};
use crate::objective::{divergence_column, divergence_parts, residual};
use crate::projections::{clamp_unit, project_scaled_simplex, ScaledSimplexSpec};
use crate::scalar::Scalar;

/// Maximum step halvings per line search before giving up on the iteration.
const MAX_BACKTRACKS: usize = 100;

/// Solver parameters. `simplex_enabled = false` drops the column-sum
/// constraint on `A` (non-negativity only), giving the support-constrained
/// NMF ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<S> {
    pub lambda: S,
    pub n_conditions: usize,
    pub simplex_enabled: bool,
    pub max_outer_iters: usize,
    /// Relative objective decrease below which the outer loop stops.
    pub outer_tol: S,
    /// Cap on projected gradient steps per sub-problem per outer iteration.
    pub max_inner_iters: usize,
    /// Step shrink factor for backtracking, in (0, 1).
    pub armijo_beta: S,
    /// Sufficient-decrease constant, in (0, 0.5].
    pub armijo_sigma: S,
    pub initial_step: S,
    pub n_restarts: usize,
    pub rng_seed: u64,
    pub epsilon_floor: S,
    /// Forces sequential execution of restarts and per-column solves.
    /// Results are bit-identical either way; the flag pins execution order.
    pub deterministic_mode: bool,
}

impl<S: Scalar> SolverConfig<S> {
    /// Default configuration for a given simplex scale and condition count.
    pub fn new(lambda: S, n_conditions: usize) -> Self {
        SolverConfig {
            lambda,
            n_conditions,
            simplex_enabled: true,
            max_outer_iters: 500,
            outer_tol: S::cast(1e-6),
            max_inner_iters: 50,
            armijo_beta: S::cast(0.5),
            armijo_sigma: S::cast(1e-4),
            initial_step: S::one(),
            n_restarts: 5,
            rng_seed: 42,
            epsilon_floor: S::cast(1e-10),
            deterministic_mode: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(self.lambda.is_finite() && self.lambda > S::zero()) {
            return fail("lambda must be positive and finite");
        }
        if self.n_conditions == 0 {
            return fail("n_conditions must be at least 1");
        }
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 {
            return fail("iteration limits must be at least 1");
        }
        if !(self.armijo_beta > S::zero() && self.armijo_beta < S::one()) {
            return fail("armijo_beta must lie in (0, 1)");
        }
        if !(self.armijo_sigma > S::zero() && self.armijo_sigma <= S::cast(0.5)) {
            return fail("armijo_sigma must lie in (0, 0.5]");
        }
        if !(self.initial_step.is_finite() && self.initial_step > S::zero()) {
            return fail("initial_step must be positive");
        }
        if self.n_restarts == 0 {
            return fail("n_restarts must be at least 1");
        }
        if !(self.outer_tol.is_finite() && self.outer_tol > S::zero()) {
            return fail("outer_tol must be positive");
        }
        if !(self.epsilon_floor.is_finite() && self.epsilon_floor > S::zero()) {
            return fail("epsilon_floor must be positive");
        }
        Ok(())
    }
}

/// Decorrelates per-restart (and per-fold) random streams from a base seed.
pub(crate) fn mix_seed(base: u64, salt: u64) -> u64 {
    // splitmix64
    let mut z = base
        .wrapping_add(salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Feasible starting point: `A` columns uniform then projected onto the
/// scaled simplex, `b` at half the per-row mean count, `W` uniform on the
/// supported entries and exactly zero elsewhere.
pub fn init_model<S: Scalar>(
    x: &CountMatrix<S>,
    supports: &SupportSets,
    cfg: &SolverConfig<S>,
    rng: &mut ChaCha8Rng,
) -> Result<FactorModel<S>> {
    let d = x.n_features();
    let n = x.n_columns();
    let k = cfg.n_conditions;
    if d == 0 {
        return Err(Error::EmptyInput("matrix has no feature rows"));
    }
    if n == 0 {
        return Err(Error::EmptyInput("matrix has no columns"));
    }
    if k == 0 {
        return Err(Error::EmptyInput("condition count is zero"));
    }
    check_dims(x, Some(supports), k)?;

    let spec = ScaledSimplexSpec::new(d, cfg.lambda)?;
    let mut a = Array2::zeros((d, k));
    for mut col in a.axis_iter_mut(Axis(1)) {
        let raw: Array1<S> = Array1::from_shape_fn(d, |_| S::cast(rng.random::<f64>()));
        col.assign(&project_scaled_simplex(raw.view(), &spec));
    }

    let b = x.row_sums().mapv(|s| s * S::cast(0.5) / S::cast(n as f64));

    let mut w = Array2::zeros((k, n));
    for j in 0..n {
        for &ki in supports.set(j) {
            w[[ki, j]] = S::cast(rng.random::<f64>());
        }
    }
    FactorModel::new(a, w, b, cfg.lambda, cfg.simplex_enabled)
}

struct PgdOutcome<S> {
    objective: S,
}

/// Relative decrease, guarded against a vanishing previous objective.
#[inline]
fn relative_decrease<S: Scalar>(previous: S, current: S) -> S {
    (previous - current) / previous.abs().max(S::cast(1e-30))
}

/// Projected gradient descent on `W` with `A`, `b` fixed.
fn pgd_w<S: Scalar>(
    x: &CountMatrix<S>,
    a: &Array2<S>,
    b: &Array1<S>,
    w: &mut Array2<S>,
    supports: &SupportSets,
    cfg: &SolverConfig<S>,
) -> Result<PgdOutcome<S>> {
    let eps = cfg.epsilon_floor;
    let inner_tol = cfg.outer_tol / S::cast(10.0);
    let mut f_cur = divergence_parts(x, a.view(), w.view(), b.view(), eps)?;
    if !f_cur.is_finite() {
        return Err(Error::NonFiniteObjective("W step"));
    }
    let mut last_step = cfg.initial_step * cfg.armijo_beta;
    for _ in 0..cfg.max_inner_iters {
        let y = reconstruct_parts(a.view(), w.view(), b.view());
        let r = residual(x, &y, eps);
        let grad = a.t().dot(&r);

        let mut step = last_step / cfg.armijo_beta;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let w_try = project_w_trial(w, &grad, step, supports);
            let f_try = divergence_parts(x, a.view(), w_try.view(), b.view(), eps)?;
            let inner: S = grad
                .iter()
                .zip(w.iter())
                .zip(w_try.iter())
                .map(|((&g, &wc), &wt)| g * (wc - wt))
                .sum();
            if f_try <= f_cur - cfg.armijo_sigma * inner {
                accepted = Some((w_try, f_try));
                break;
            }
            step = step * cfg.armijo_beta;
        }
        let Some((w_new, f_new)) = accepted else {
            break; // line search stalled at the current point
        };
        last_step = step;
        let rel = relative_decrease(f_cur, f_new);
        *w = w_new;
        f_cur = f_new;
        if rel < inner_tol {
            break;
        }
    }
    Ok(PgdOutcome { objective: f_cur })
}

/// Projection of the gradient step on `W`: support mask plus `[0, 1]` clamp,
/// built column by column so off-support entries are exact zeros.
fn project_w_trial<S: Scalar>(
    w: &Array2<S>,
    grad: &Array2<S>,
    step: S,
    supports: &SupportSets,
) -> Array2<S> {
    let (k, n) = w.dim();
    let mut out = Array2::zeros((k, n));
    for j in 0..n {
        for &ki in supports.set(j) {
            out[[ki, j]] = clamp_unit(w[[ki, j]] - step * grad[[ki, j]]);
        }
    }
    out
}

/// Joint projected gradient descent on `(A, b)` with `W` fixed, sharing one
/// step size across both blocks. `update_bias = false` freezes `b`.
fn pgd_ab<S: Scalar>(
    x: &CountMatrix<S>,
    a: &mut Array2<S>,
    b: &mut Array1<S>,
    w: &Array2<S>,
    cfg: &SolverConfig<S>,
    update_bias: bool,
) -> Result<PgdOutcome<S>> {
    let eps = cfg.epsilon_floor;
    let inner_tol = cfg.outer_tol / S::cast(10.0);
    let d = a.nrows();
    let spec = ScaledSimplexSpec::new(d, cfg.lambda)?;
    let mut f_cur = divergence_parts(x, a.view(), w.view(), b.view(), eps)?;
    if !f_cur.is_finite() {
        return Err(Error::NonFiniteObjective("(A, b) step"));
    }
    let mut last_step = cfg.initial_step * cfg.armijo_beta;
    for _ in 0..cfg.max_inner_iters {
        let y = reconstruct_parts(a.view(), w.view(), b.view());
        let r = residual(x, &y, eps);
        let grad_a = r.dot(&w.t());
        let grad_b = r.sum_axis(Axis(1));

        let mut step = last_step / cfg.armijo_beta;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut a_try = Array2::zeros(a.dim());
            for (k_i, mut col) in a_try.axis_iter_mut(Axis(1)).enumerate() {
                let shifted =
                    Array1::from_shape_fn(d, |i| a[[i, k_i]] - step * grad_a[[i, k_i]]);
                if cfg.simplex_enabled {
                    col.assign(&project_scaled_simplex(shifted.view(), &spec));
                } else {
                    col.assign(&shifted.mapv(|v| v.max(S::zero())));
                }
            }
            let b_try = if update_bias {
                Array1::from_shape_fn(b.len(), |i| (b[i] - step * grad_b[i]).max(S::zero()))
            } else {
                b.clone()
            };
            let f_try = divergence_parts(x, a_try.view(), w.view(), b_try.view(), eps)?;
            let mut inner: S = grad_a
                .iter()
                .zip(a.iter())
                .zip(a_try.iter())
                .map(|((&g, &ac), &at)| g * (ac - at))
                .sum();
            if update_bias {
                inner += grad_b
                    .iter()
                    .zip(b.iter())
                    .zip(b_try.iter())
                    .map(|((&g, &bc), &bt)| g * (bc - bt))
                    .sum();
            }
            if f_try <= f_cur - cfg.armijo_sigma * inner {
                accepted = Some((a_try, b_try, f_try));
                break;
            }
            step = step * cfg.armijo_beta;
        }
        let Some((a_new, b_new, f_new)) = accepted else {
            break;
        };
        last_step = step;
        let rel = relative_decrease(f_cur, f_new);
        *a = a_new;
        *b = b_new;
        f_cur = f_new;
        if rel < inner_tol {
            break;
        }
    }
    Ok(PgdOutcome { objective: f_cur })
}

/// One inexact `W` sub-problem solve; the objective does not increase and the
/// result satisfies the box and support constraints.
pub fn w_step<S: Scalar>(
    x: &CountMatrix<S>,
    model: &FactorModel<S>,
    supports: &SupportSets,
    cfg: &SolverConfig<S>,
) -> Result<Array2<S>> {
    cfg.validate()?;
    check_model_dims(x, model)?;
    check_dims(x, Some(supports), model.n_conditions())?;
    let mut w = model.w().clone();
    pgd_w(x, model.a(), model.b(), &mut w, supports, cfg)?;
    Ok(w)
}

/// One inexact joint `(A, b)` sub-problem solve. With the simplex enabled
/// every returned `A` column sums to `lambda` (up to projection rounding);
/// without it only non-negativity is enforced.
pub fn a_b_step<S: Scalar>(
    x: &CountMatrix<S>,
    model: &FactorModel<S>,
    cfg: &SolverConfig<S>,
) -> Result<(Array2<S>, Array1<S>)> {
    cfg.validate()?;
    check_model_dims(x, model)?;
    let mut a = model.a().clone();
    let mut b = model.b().clone();
    pgd_ab(x, &mut a, &mut b, model.w(), cfg, true)?;
    Ok((a, b))
}

struct RestartRun<S> {
    a: Array2<S>,
    w: Array2<S>,
    b: Array1<S>,
    trace: Vec<S>,
    outer_iterations: usize,
    converged: bool,
    max_violation: S,
    final_objective: S,
}

fn run_restart<S: Scalar>(
    x: &CountMatrix<S>,
    supports: &SupportSets,
    cfg: &SolverConfig<S>,
    restart: usize,
) -> Result<RestartRun<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.rng_seed, restart as u64));
    let model = init_model(x, supports, cfg, &mut rng)?;
    let (mut a, mut w, mut b) = model.into_parts();
    let eps = cfg.epsilon_floor;

    let mut f = divergence_parts(x, a.view(), w.view(), b.view(), eps)?;
    if !f.is_finite() {
        return Err(Error::NonFiniteObjective("initialization"));
    }
    let mut trace = vec![f];
    let mut max_violation = feasibility_parts(
        a.view(),
        w.view(),
        b.view(),
        cfg.lambda,
        cfg.simplex_enabled,
        supports,
    )
    .max_violation();
    let mut converged = false;
    let mut outer_iterations = 0;

    for _ in 0..cfg.max_outer_iters {
        pgd_w(x, &a, &b, &mut w, supports, cfg)?;
        let ab = pgd_ab(x, &mut a, &mut b, &w, cfg, true)?;
        let f_new = ab.objective;
        outer_iterations += 1;
        trace.push(f_new);
        max_violation = max_violation.max(
            feasibility_parts(
                a.view(),
                w.view(),
                b.view(),
                cfg.lambda,
                cfg.simplex_enabled,
                supports,
            )
            .max_violation(),
        );
        let rel = relative_decrease(f, f_new);
        f = f_new;
        if rel < cfg.outer_tol {
            converged = true;
            break;
        }
    }

    Ok(RestartRun {
        a,
        w,
        b,
        trace,
        outer_iterations,
        converged,
        max_violation,
        final_objective: f,
    })
}

/// Full fit: `n_restarts` independently seeded runs of the alternating loop;
/// the restart with the lowest final divergence is returned (ties broken by
/// lowest restart index). Non-convergence within the iteration budget is
/// reported through `converged = false`, not an error.
pub fn fit<S: Scalar>(
    x: &CountMatrix<S>,
    supports: &SupportSets,
    cfg: &SolverConfig<S>,
) -> Result<(FactorModel<S>, SolveReport<S>)> {
    cfg.validate()?;
    if x.n_columns() == 0 {
        return Err(Error::EmptyInput("matrix has no columns"));
    }
    if x.n_features() == 0 {
        return Err(Error::EmptyInput("matrix has no feature rows"));
    }
    check_dims(x, Some(supports), cfg.n_conditions)?;

    let runs: Vec<Result<RestartRun<S>>> = if cfg.deterministic_mode {
        (0..cfg.n_restarts)
            .map(|r| run_restart(x, supports, cfg, r))
            .collect()
    } else {
        (0..cfg.n_restarts)
            .into_par_iter()
            .map(|r| run_restart(x, supports, cfg, r))
            .collect()
    };
    let runs: Vec<RestartRun<S>> = runs.into_iter().collect::<Result<_>>()?;

    let mut selected = 0;
    for (r, run) in runs.iter().enumerate() {
        if run.final_objective < runs[selected].final_objective {
            selected = r;
        }
    }
    let restart_objectives: Vec<S> = runs.iter().map(|r| r.final_objective).collect();
    let best = runs.into_iter().nth(selected).expect("selected restart exists");
    let report = SolveReport {
        objective_trace: best.trace,
        outer_iterations: best.outer_iterations,
        restart_objectives,
        selected_restart: selected,
        converged: best.converged,
        feasibility_max_violation: best.max_violation,
    };
    let model = FactorModel::new(best.a, best.w, best.b, cfg.lambda, cfg.simplex_enabled)?;
    Ok((model, report))
}

/// Infers loadings for new columns against a frozen `(A, b)`.
///
/// Solves the `W` sub-problem only. When `supports` is `None` the box
/// constraint alone applies, which is how held-out columns are handled:
/// their diagnosis sets are never consulted.
pub fn transform<S: Scalar>(
    x_new: &CountMatrix<S>,
    model: &FactorModel<S>,
    supports: Option<&SupportSets>,
    cfg: &SolverConfig<S>,
) -> Result<Array2<S>> {
    cfg.validate()?;
    if x_new.n_features() != model.n_features() {
        return Err(Error::shape(
            "transform feature dimension",
            model.n_features(),
            x_new.n_features(),
        ));
    }
    if let Some(s) = supports {
        if s.n_columns() != x_new.n_columns() {
            return Err(Error::shape(
                "transform support count",
                x_new.n_columns(),
                s.n_columns(),
            ));
        }
        if s.n_conditions() != model.n_conditions() {
            return Err(Error::shape(
                "transform support conditions",
                model.n_conditions(),
                s.n_conditions(),
            ));
        }
    }

    let k = model.n_conditions();
    let n = x_new.n_columns();
    let full: Vec<usize> = (0..k).collect();
    let solve_col = |j: usize| -> Result<Array1<S>> {
        let support = supports.map_or(full.as_slice(), |s| s.set(j));
        let (rows, vals) = x_new.column(j);
        transform_column(rows, vals, model.a().view(), model.b().view(), support, cfg)
    };

    let cols: Vec<Result<Array1<S>>> = if cfg.deterministic_mode {
        (0..n).map(solve_col).collect()
    } else {
        (0..n).into_par_iter().map(solve_col).collect()
    };

    let mut w = Array2::zeros((k, n));
    for (j, col) in cols.into_iter().enumerate() {
        w.column_mut(j).assign(&col?);
    }
    Ok(w)
}

/// Single-column loading solve, started from the midpoint of the box on the
/// allowed entries.
fn transform_column<S: Scalar>(
    rows: &[usize],
    vals: &[S],
    a: ArrayView2<'_, S>,
    b: ArrayView1<'_, S>,
    support: &[usize],
    cfg: &SolverConfig<S>,
) -> Result<Array1<S>> {
    let k = a.ncols();
    let eps = cfg.epsilon_floor;
    let inner_tol = cfg.outer_tol / S::cast(10.0);
    let mut w = Array1::zeros(k);
    for &ki in support {
        w[ki] = S::cast(0.5);
    }

    let objective = |w_vec: &Array1<S>| -> Result<S> {
        let y = a.dot(w_vec) + &b;
        divergence_column(rows, vals, y.view(), eps)
    };
    let mut f_cur = objective(&w)?;
    if !f_cur.is_finite() {
        return Err(Error::NonFiniteObjective("transform column"));
    }

    let mut last_step = cfg.initial_step * cfg.armijo_beta;
    for _ in 0..cfg.max_outer_iters {
        let y = a.dot(&w) + &b;
        let mut r = Array1::ones(a.nrows());
        for (&i, &v) in rows.iter().zip(vals) {
            r[i] = S::one() - v / y[i].max(eps);
        }
        let grad = a.t().dot(&r);

        let mut step = last_step / cfg.armijo_beta;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut w_try = Array1::zeros(k);
            for &ki in support {
                w_try[ki] = clamp_unit(w[ki] - step * grad[ki]);
            }
            let f_try = objective(&w_try)?;
            let inner: S = support
                .iter()
                .map(|&ki| grad[ki] * (w[ki] - w_try[ki]))
                .sum();
            if f_try <= f_cur - cfg.armijo_sigma * inner {
                accepted = Some((w_try, f_try));
                break;
            }
            step = step * cfg.armijo_beta;
        }
        let Some((w_new, f_new)) = accepted else {
            break;
        };
        last_step = step;
        let rel = relative_decrease(f_cur, f_new);
        w = w_new;
        f_cur = f_new;
        if rel < inner_tol {
            break;
        }
    }
    Ok(w)
}

fn check_model_dims<S: Scalar>(x: &CountMatrix<S>, model: &FactorModel<S>) -> Result<()> {
    if model.n_features() != x.n_features() {
        return Err(Error::shape(
            "model feature dimension",
            x.n_features(),
            model.n_features(),
        ));
    }
    if model.n_columns() != x.n_columns() {
        return Err(Error::shape(
            "model column count",
            x.n_columns(),
            model.n_columns(),
        ));
    }
    Ok(())
}

fn check_dims<S: Scalar>(
    x: &CountMatrix<S>,
    supports: Option<&SupportSets>,
    n_conditions: usize,
) -> Result<()> {
    if let Some(s) = supports {
        if s.n_columns() != x.n_columns() {
            return Err(Error::shape(
                "support column count",
                x.n_columns(),
                s.n_columns(),
            ));
        }
        if s.n_conditions() != n_conditions {
            return Err(Error::shape(
                "support condition count",
                n_conditions,
                s.n_conditions(),
            ));
        }
    }
    Ok(())
}
