//! Exact Euclidean projections onto the three feasible sets: the scaled
//! simplex `λΔ^{d−1}`, the support-masked unit box, and the non-negative
//! orthant.

use ndarray::{Array1, ArrayView1, ArrayViewMut1};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Target simplex `{u ≥ 0 : Σ u_i = λ}` in a given dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledSimplexSpec<S> {
    pub dimension: usize,
    pub scale: S,
}

impl<S: Scalar> ScaledSimplexSpec<S> {
    pub fn new(dimension: usize, scale: S) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidConfig(
                "simplex dimension must be at least 1".into(),
            ));
        }
        if !(scale.is_finite() && scale > S::zero()) {
            return Err(Error::InvalidValue {
                context: "simplex scale",
                value: scale.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(ScaledSimplexSpec { dimension, scale })
    }
}

/// Euclidean projection onto the scaled simplex by sort and threshold.
///
/// Sorts `v` in descending order (ties broken by original index, for
/// determinism only), finds the threshold `θ = (Σ_{i≤ρ} v_(i) − λ)/ρ` for the
/// largest `ρ` with `v_(ρ) > θ`, and returns `u_i = max(v_i − θ, 0)`. The
/// thresholding produces exact zeros, which is what makes the constraint
/// sparsity-inducing.
pub fn project_scaled_simplex<S: Scalar>(
    v: ArrayView1<'_, S>,
    spec: &ScaledSimplexSpec<S>,
) -> Array1<S> {
    debug_assert_eq!(v.len(), spec.dimension);
    let d = v.len();
    let lambda = spec.scale;

    // Feasible inputs pass through unchanged. The sum of a projected vector
    // differs from lambda only by accumulated round-off, so this early exit
    // is what makes the floating-point map exactly idempotent.
    let sum = v.sum();
    let max_abs = v.iter().fold(S::zero(), |m, &x| m.max(x.abs()));
    let feas_tol = S::cast(1e-12) * S::one().max(lambda.abs()).max(max_abs);
    if v.iter().all(|&x| x >= S::zero()) && (sum - lambda).abs() <= feas_tol {
        return v.to_owned();
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_unstable_by(|&i, &j| {
        v[j].partial_cmp(&v[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });

    // largest rho with v_(rho) > (cumsum(rho) - lambda) / rho
    let mut cumsum = S::zero();
    let mut theta = S::zero();
    for (rank, &idx) in order.iter().enumerate() {
        let candidate_sum = cumsum + v[idx];
        let rho = S::cast((rank + 1) as f64);
        let candidate_theta = (candidate_sum - lambda) / rho;
        if v[idx] > candidate_theta {
            cumsum = candidate_sum;
            theta = candidate_theta;
        } else {
            break;
        }
    }

    v.mapv(|x| (x - theta).max(S::zero()))
}

/// Euclidean projection onto `{w ∈ [0,1]^K : supp(w) ⊆ support}`: entries
/// outside the support become exact zeros, entries inside are clamped.
pub fn project_box_support<S: Scalar>(
    w: ArrayView1<'_, S>,
    support: &[usize],
) -> Result<Array1<S>> {
    let mut out = Array1::zeros(w.len());
    project_box_support_into(w, support, out.view_mut())?;
    Ok(out)
}

/// Writes the box-support projection of `w` into `out` (assumed zeroed).
pub(crate) fn project_box_support_into<S: Scalar>(
    w: ArrayView1<'_, S>,
    support: &[usize],
    mut out: ArrayViewMut1<'_, S>,
) -> Result<()> {
    for &k in support {
        if k >= w.len() {
            return Err(Error::IndexOutOfRange {
                context: "box-support projection",
                index: k,
                limit: w.len(),
            });
        }
        out[k] = clamp_unit(w[k]);
    }
    Ok(())
}

#[inline]
pub(crate) fn clamp_unit<S: Scalar>(v: S) -> S {
    v.max(S::zero()).min(S::one())
}

/// Euclidean projection onto the non-negative orthant: elementwise `max(v, 0)`.
pub fn project_nonneg<S: Scalar>(v: ArrayView1<'_, S>) -> Array1<S> {
    v.mapv(|x| x.max(S::zero()))
}
