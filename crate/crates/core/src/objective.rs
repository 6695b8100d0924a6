//! I-divergence loss `D(X, Y) = Σ_ij y_ij − x_ij − x_ij·log(y_ij/x_ij)` and
//! its analytic gradients with respect to the factors.
//!
//! Minimizing the divergence is equivalent to maximum likelihood under a
//! Poisson assumption on the entries of `X` with mean `Y`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::model::{reconstruct, reconstruct_parts, CountMatrix, FactorModel};
use crate::scalar::Scalar;

/// Numerical guard for the logarithm and ratio in the divergence. The floor
/// is applied inside `log` and the ratio only, never added to `Y` itself, so
/// the objective is exact whenever `Y > ε` and `D(X, X) = 0` holds exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceConfig<S> {
    pub epsilon_floor: S,
}

impl<S: Scalar> DivergenceConfig<S> {
    pub fn new(epsilon_floor: S) -> Result<Self> {
        if !(epsilon_floor.is_finite() && epsilon_floor > S::zero()) {
            return Err(Error::InvalidValue {
                context: "epsilon floor",
                value: epsilon_floor.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(DivergenceConfig { epsilon_floor })
    }
}

impl<S: Scalar> Default for DivergenceConfig<S> {
    fn default() -> Self {
        DivergenceConfig {
            epsilon_floor: S::cast(1e-10),
        }
    }
}

/// I-divergence between a sparse non-negative `X` and a dense `Y` of the
/// same shape. Terms with `x_ij = 0` contribute `y_ij` (the `0·log 0 ≡ 0`
/// convention); since `X` is sparse those are the common case and are
/// handled by a merge walk over each dense column with the stored entries,
/// one exact per-entry contribution at a time.
pub fn i_divergence<S: Scalar>(
    x: &CountMatrix<S>,
    y: &Array2<S>,
    cfg: &DivergenceConfig<S>,
) -> Result<S> {
    check_same_shape(x, y)?;
    let mut total = S::zero();
    for j in 0..x.n_columns() {
        let (rows, vals) = x.column(j);
        total += divergence_column(rows, vals, y.column(j), cfg.epsilon_floor)?;
    }
    Ok(total)
}

/// Per-column divergence kernel shared with the solver.
pub(crate) fn divergence_column<S: Scalar>(
    rows: &[usize],
    vals: &[S],
    y_col: ArrayView1<'_, S>,
    eps: S,
) -> Result<S> {
    let mut acc = S::zero();
    let mut p = 0;
    for (i, &yij) in y_col.iter().enumerate() {
        if !yij.is_finite() || yij < S::zero() {
            return Err(Error::InvalidValue {
                context: "reconstruction entry",
                value: yij.to_f64().unwrap_or(f64::NAN),
            });
        }
        if p < rows.len() && rows[p] == i {
            let xij = vals[p];
            p += 1;
            if xij > S::zero() {
                acc += yij - xij - xij * (yij.max(eps) / xij).ln();
                continue;
            }
        }
        acc += yij;
    }
    Ok(acc)
}

/// Gradients of the I-divergence at the given model. With
/// `R = 1 − X ⊘ max(Y, ε)` elementwise:
/// `∇_A = R·Wᵀ`, `∇_W = Aᵀ·R`, `∇_b = row sums of R`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<S> {
    pub a: Array2<S>,
    pub w: Array2<S>,
    pub b: Array1<S>,
}

pub fn gradients<S: Scalar>(
    x: &CountMatrix<S>,
    model: &FactorModel<S>,
    cfg: &DivergenceConfig<S>,
) -> Result<Gradients<S>> {
    let y = reconstruct(model);
    check_same_shape(x, &y)?;
    let r = residual(x, &y, cfg.epsilon_floor);
    Ok(Gradients {
        a: r.dot(&model.w().t()),
        w: model.a().t().dot(&r),
        b: r.sum_axis(Axis(1)),
    })
}

/// Dense residual `R = 1 − X ⊘ max(Y, ε)`.
pub(crate) fn residual<S: Scalar>(x: &CountMatrix<S>, y: &Array2<S>, eps: S) -> Array2<S> {
    let mut r = Array2::ones(y.dim());
    for (i, j, v) in x.iter() {
        r[[i, j]] = S::one() - v / y[[i, j]].max(eps);
    }
    r
}

/// Poisson log-likelihood `Σ_ij x_ij·log y_ij − y_ij` with log-factorial
/// constants omitted. Requires `Y > 0` wherever `X > 0`; no floor is applied,
/// so a zero mean under a positive count yields `-∞`, the true likelihood.
pub fn poisson_loglik<S: Scalar>(x: &CountMatrix<S>, y: &Array2<S>) -> Result<S> {
    check_same_shape(x, y)?;
    let mut total = S::zero();
    for j in 0..x.n_columns() {
        let (rows, vals) = x.column(j);
        let y_col = y.column(j);
        let mut p = 0;
        for (i, &yij) in y_col.iter().enumerate() {
            if p < rows.len() && rows[p] == i {
                let xij = vals[p];
                p += 1;
                if xij > S::zero() {
                    total += xij * yij.ln() - yij;
                    continue;
                }
            }
            total -= yij;
        }
    }
    Ok(total)
}

/// Objective at raw `(A, W, b)` parts; used by the solver's line search.
pub(crate) fn divergence_parts<S: Scalar>(
    x: &CountMatrix<S>,
    a: ArrayView2<'_, S>,
    w: ArrayView2<'_, S>,
    b: ArrayView1<'_, S>,
    eps: S,
) -> Result<S> {
    let y = reconstruct_parts(a, w, b);
    let mut total = S::zero();
    for j in 0..x.n_columns() {
        let (rows, vals) = x.column(j);
        total += divergence_column(rows, vals, y.column(j), eps)?;
    }
    Ok(total)
}

fn check_same_shape<S: Scalar>(x: &CountMatrix<S>, y: &Array2<S>) -> Result<()> {
    if y.dim() != (x.n_features(), x.n_columns()) {
        return Err(Error::shape(
            "divergence operands",
            format!("{}x{}", x.n_features(), x.n_columns()),
            format!("{}x{}", y.dim().0, y.dim().1),
        ));
    }
    Ok(())
}
