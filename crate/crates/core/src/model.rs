//! Domain types: sparse count matrices, per-column support sets, factor
//! models, and the reconstruction map `Y = AW + b·1ᵀ`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Non-negative observation matrix with `d` feature rows and `N` columns,
/// stored sparsely in compressed-column coordinate order.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix<S> {
    n_features: usize,
    n_columns: usize,
    col_ptr: Vec<usize>,
    row_indices: Vec<usize>,
    values: Vec<S>,
    feature_names: Option<Vec<String>>,
    column_ids: Option<Vec<String>>,
}

impl<S: Scalar> CountMatrix<S> {
    /// Builds a matrix from `(row, col, value)` triplets.
    ///
    /// Validates that every value is finite and non-negative, that indices
    /// are in range, and that no coordinate appears twice. Triplets are
    /// stored sorted by column, then row.
    pub fn from_triplets(
        n_features: usize,
        n_columns: usize,
        mut triplets: Vec<(usize, usize, S)>,
    ) -> Result<Self> {
        for &(i, j, v) in &triplets {
            if i >= n_features {
                return Err(Error::IndexOutOfRange {
                    context: "count matrix row",
                    index: i,
                    limit: n_features,
                });
            }
            if j >= n_columns {
                return Err(Error::IndexOutOfRange {
                    context: "count matrix column",
                    index: j,
                    limit: n_columns,
                });
            }
            if !v.is_finite() || v < S::zero() {
                return Err(Error::InvalidValue {
                    context: "count matrix entry",
                    value: v.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        triplets.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        for pair in triplets.windows(2) {
            if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
                return Err(Error::DuplicateCoordinate {
                    row: pair[0].0,
                    col: pair[0].1,
                });
            }
        }

        let mut col_ptr = vec![0usize; n_columns + 1];
        for &(_, j, _) in &triplets {
            col_ptr[j + 1] += 1;
        }
        for j in 0..n_columns {
            col_ptr[j + 1] += col_ptr[j];
        }
        let row_indices = triplets.iter().map(|t| t.0).collect();
        let values = triplets.iter().map(|t| t.2).collect();
        Ok(CountMatrix {
            n_features,
            n_columns,
            col_ptr,
            row_indices,
            values,
            feature_names: None,
            column_ids: None,
        })
    }

    /// Builds a matrix from a dense array, skipping exact zeros.
    pub fn from_dense(dense: &Array2<S>) -> Result<Self> {
        let (d, n) = dense.dim();
        let mut triplets = Vec::new();
        for j in 0..n {
            for i in 0..d {
                let v = dense[[i, j]];
                if v != S::zero() {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(d, n, triplets)
    }

    /// Attaches optional feature names (length `d`) and column ids (length `N`).
    pub fn with_names(
        mut self,
        feature_names: Option<Vec<String>>,
        column_ids: Option<Vec<String>>,
    ) -> Result<Self> {
        if let Some(ref names) = feature_names {
            if names.len() != self.n_features {
                return Err(Error::shape("feature names", self.n_features, names.len()));
            }
        }
        if let Some(ref ids) = column_ids {
            if ids.len() != self.n_columns {
                return Err(Error::shape("column ids", self.n_columns, ids.len()));
            }
        }
        self.feature_names = feature_names;
        self.column_ids = column_ids;
        Ok(self)
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_columns(&self) -> usize {
        self.n_columns
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn column_ids(&self) -> Option<&[String]> {
        self.column_ids.as_deref()
    }

    /// Row indices and values of the stored entries in column `j`.
    pub fn column(&self, j: usize) -> (&[usize], &[S]) {
        let lo = self.col_ptr[j];
        let hi = self.col_ptr[j + 1];
        (&self.row_indices[lo..hi], &self.values[lo..hi])
    }

    /// Value at `(i, j)`, zero if not stored.
    pub fn get(&self, i: usize, j: usize) -> S {
        let (rows, vals) = self.column(j);
        match rows.binary_search(&i) {
            Ok(p) => vals[p],
            Err(_) => S::zero(),
        }
    }

    /// Iterates stored entries as `(row, col, value)` in column-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, S)> + '_ {
        (0..self.n_columns).flat_map(move |j| {
            let (rows, vals) = self.column(j);
            rows.iter().zip(vals).map(move |(&i, &v)| (i, j, v))
        })
    }

    /// Sum of each feature row.
    pub fn row_sums(&self) -> Array1<S> {
        let mut sums = Array1::zeros(self.n_features);
        for (i, _, v) in self.iter() {
            sums[i] += v;
        }
        sums
    }

    /// Total of all stored entries.
    pub fn total(&self) -> S {
        self.values.iter().copied().sum()
    }

    pub fn to_dense(&self) -> Array2<S> {
        let mut dense = Array2::zeros((self.n_features, self.n_columns));
        for (i, j, v) in self.iter() {
            dense[[i, j]] = v;
        }
        dense
    }

    /// New matrix holding the given columns, in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> Result<Self> {
        let mut triplets = Vec::new();
        for (new_j, &j) in indices.iter().enumerate() {
            if j >= self.n_columns {
                return Err(Error::IndexOutOfRange {
                    context: "column selection",
                    index: j,
                    limit: self.n_columns,
                });
            }
            let (rows, vals) = self.column(j);
            for (&i, &v) in rows.iter().zip(vals) {
                triplets.push((i, new_j, v));
            }
        }
        let column_ids = self
            .column_ids
            .as_ref()
            .map(|ids| indices.iter().map(|&j| ids[j].clone()).collect());
        let out = Self::from_triplets(self.n_features, indices.len(), triplets)?;
        out.with_names(self.feature_names.clone(), column_ids)
    }
}

/// Per-column index sets constraining which conditions may carry load.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportSets {
    sets: Vec<Vec<usize>>,
    n_conditions: usize,
}

impl SupportSets {
    /// Validates indices against `n_conditions`; each set is stored sorted
    /// and deduplicated. Empty sets are allowed (column explained by bias).
    pub fn new(sets: Vec<Vec<usize>>, n_conditions: usize) -> Result<Self> {
        let mut cleaned = Vec::with_capacity(sets.len());
        for mut set in sets {
            set.sort_unstable();
            set.dedup();
            if let Some(&last) = set.last() {
                if last >= n_conditions {
                    return Err(Error::IndexOutOfRange {
                        context: "support set",
                        index: last,
                        limit: n_conditions,
                    });
                }
            }
            cleaned.push(set);
        }
        Ok(SupportSets {
            sets: cleaned,
            n_conditions,
        })
    }

    /// All-complete supports: every column may load on every condition.
    pub fn full(n_columns: usize, n_conditions: usize) -> Self {
        SupportSets {
            sets: vec![(0..n_conditions).collect(); n_columns],
            n_conditions,
        }
    }

    pub fn n_columns(&self) -> usize {
        self.sets.len()
    }

    pub fn n_conditions(&self) -> usize {
        self.n_conditions
    }

    pub fn set(&self, j: usize) -> &[usize] {
        &self.sets[j]
    }

    pub fn contains(&self, j: usize, k: usize) -> bool {
        self.sets[j].binary_search(&k).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.sets.iter().map(|s| s.as_slice())
    }

    /// Subset of columns, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut sets = Vec::with_capacity(indices.len());
        for &j in indices {
            if j >= self.sets.len() {
                return Err(Error::IndexOutOfRange {
                    context: "support selection",
                    index: j,
                    limit: self.sets.len(),
                });
            }
            sets.push(self.sets[j].clone());
        }
        Ok(SupportSets {
            sets,
            n_conditions: self.n_conditions,
        })
    }
}

/// Fitted factorization: phenotype matrix `A` (d×K), loadings `W` (K×N),
/// feature bias `b` (d), and the simplex scale `lambda`.
///
/// With `simplex_enabled` false the model corresponds to the ablation that
/// keeps non-negativity and support constraints but no column-sum constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel<S> {
    a: Array2<S>,
    w: Array2<S>,
    b: Array1<S>,
    lambda: S,
    simplex_enabled: bool,
}

impl<S: Scalar> FactorModel<S> {
    /// Validates dimensional consistency, finiteness, and `lambda > 0`.
    /// Feasibility with respect to the constraint sets is a separate,
    /// diagnostic concern; see [`check_feasibility`].
    pub fn new(
        a: Array2<S>,
        w: Array2<S>,
        b: Array1<S>,
        lambda: S,
        simplex_enabled: bool,
    ) -> Result<Self> {
        if a.ncols() != w.nrows() {
            return Err(Error::shape(
                "factor model A·W",
                format!("A with {} columns", w.nrows()),
                format!("A with {} columns", a.ncols()),
            ));
        }
        if a.nrows() != b.len() {
            return Err(Error::shape("factor model bias", a.nrows(), b.len()));
        }
        if !(lambda.is_finite() && lambda > S::zero()) {
            return Err(Error::InvalidValue {
                context: "lambda",
                value: lambda.to_f64().unwrap_or(f64::NAN),
            });
        }
        for v in a.iter().chain(w.iter()).chain(b.iter()) {
            if !v.is_finite() {
                return Err(Error::InvalidValue {
                    context: "factor model entry",
                    value: v.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(FactorModel {
            a,
            w,
            b,
            lambda,
            simplex_enabled,
        })
    }

    pub fn a(&self) -> &Array2<S> {
        &self.a
    }

    pub fn w(&self) -> &Array2<S> {
        &self.w
    }

    pub fn b(&self) -> &Array1<S> {
        &self.b
    }

    pub fn lambda(&self) -> S {
        self.lambda
    }

    pub fn simplex_enabled(&self) -> bool {
        self.simplex_enabled
    }

    pub fn n_features(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_conditions(&self) -> usize {
        self.a.ncols()
    }

    pub fn n_columns(&self) -> usize {
        self.w.ncols()
    }

    /// Decomposes the model into `(A, W, b)`.
    pub fn into_parts(self) -> (Array2<S>, Array2<S>, Array1<S>) {
        (self.a, self.w, self.b)
    }

    /// Same model with a replacement loading matrix.
    pub fn with_w(self, w: Array2<S>) -> Result<Self> {
        Self::new(self.a, w, self.b, self.lambda, self.simplex_enabled)
    }
}

/// Dense reconstruction `Y = AW + b·1ᵀ`; every entry of a feasible model's
/// reconstruction is non-negative.
pub fn reconstruct<S: Scalar>(model: &FactorModel<S>) -> Array2<S> {
    reconstruct_parts(model.a().view(), model.w().view(), model.b().view())
}

pub(crate) fn reconstruct_parts<S: Scalar>(
    a: ArrayView2<'_, S>,
    w: ArrayView2<'_, S>,
    b: ArrayView1<'_, S>,
) -> Array2<S> {
    let mut y = a.dot(&w);
    y += &b.insert_axis(Axis(1));
    y
}

/// Worst-case violations of each constraint family of the factor model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityReport<S> {
    /// Max distance of a `W` entry outside `[0, 1]`.
    pub max_box_violation: S,
    /// Max `|w_kj|` over entries outside the column's support set.
    pub max_support_leak: S,
    /// Max `|Σ_i a_ik − λ|` over columns; zero when the simplex is disabled.
    pub max_colsum_deviation: S,
    /// Smallest entry of `A` (negative means infeasible).
    pub min_a_entry: S,
    /// Smallest entry of `b`.
    pub min_b_entry: S,
}

impl<S: Scalar> FeasibilityReport<S> {
    /// Largest violation across all families; zero iff the model is feasible.
    pub fn max_violation(&self) -> S {
        self.max_box_violation
            .max(self.max_support_leak)
            .max(self.max_colsum_deviation)
            .max((-self.min_a_entry).max(S::zero()))
            .max((-self.min_b_entry).max(S::zero()))
    }
}

/// Diagnostic check of the model against its constraint sets.
///
/// Support is treated as an upper bound: `supp(w^{(j)}) ⊆ C_j` satisfies the
/// constraint, since the box projection may drive supported entries to zero
/// and a zero loading reads as "no risk".
pub fn check_feasibility<S: Scalar>(
    model: &FactorModel<S>,
    supports: &SupportSets,
) -> Result<FeasibilityReport<S>> {
    if supports.n_columns() != model.n_columns() {
        return Err(Error::shape(
            "support column count",
            model.n_columns(),
            supports.n_columns(),
        ));
    }
    if supports.n_conditions() != model.n_conditions() {
        return Err(Error::shape(
            "support condition count",
            model.n_conditions(),
            supports.n_conditions(),
        ));
    }
    Ok(feasibility_parts(
        model.a().view(),
        model.w().view(),
        model.b().view(),
        model.lambda(),
        model.simplex_enabled(),
        supports,
    ))
}

pub(crate) fn feasibility_parts<S: Scalar>(
    a: ArrayView2<'_, S>,
    w: ArrayView2<'_, S>,
    b: ArrayView1<'_, S>,
    lambda: S,
    simplex_enabled: bool,
    supports: &SupportSets,
) -> FeasibilityReport<S> {
    let (k, n) = w.dim();
    let mut max_box = S::zero();
    let mut max_leak = S::zero();
    let mut in_support = vec![false; k];
    for j in 0..n {
        for &ki in supports.set(j) {
            in_support[ki] = true;
        }
        for ki in 0..k {
            let v = w[[ki, j]];
            if in_support[ki] {
                let out = (-v).max(v - S::one()).max(S::zero());
                max_box = max_box.max(out);
            } else {
                max_leak = max_leak.max(v.abs());
            }
        }
        for &ki in supports.set(j) {
            in_support[ki] = false;
        }
    }

    let mut max_colsum = S::zero();
    if simplex_enabled {
        for col in a.axis_iter(Axis(1)) {
            max_colsum = max_colsum.max((col.sum() - lambda).abs());
        }
    }

    let min_a = a.iter().copied().fold(S::infinity(), S::min);
    let min_b = b.iter().copied().fold(S::infinity(), S::min);
    FeasibilityReport {
        max_box_violation: max_box,
        max_support_leak: max_leak,
        max_colsum_deviation: max_colsum,
        min_a_entry: if min_a.is_finite() { min_a } else { S::zero() },
        min_b_entry: if min_b.is_finite() { min_b } else { S::zero() },
    }
}

/// Outcome of a solver run: per-outer-iteration objective values, restart
/// summary, and worst feasibility violation seen along the kept trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<S> {
    pub objective_trace: Vec<S>,
    pub outer_iterations: usize,
    pub restart_objectives: Vec<S>,
    pub selected_restart: usize,
    pub converged: bool,
    pub feasibility_max_violation: S,
}
