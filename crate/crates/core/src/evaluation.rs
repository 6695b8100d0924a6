//! Quantitative evaluation: phenotype sparsity, the sparsity–accuracy sweep,
//! top-term export, and a stratified cross-validation harness for binary
//! prediction from loadings, raw counts, or both.

use ndarray::{concatenate, Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{CountMatrix, FactorModel, SupportSets};
use crate::scalar::Scalar;
use crate::solver::{fit, mix_seed, transform, SolverConfig};

/// Entries with magnitude at most this count as zero in sparsity reports.
pub const DEFAULT_ZERO_TOL: f64 = 1e-12;
/// Every phenotype should keep at least this many nonzero terms.
pub const DEFAULT_MIN_TERMS: usize = 5;

/// Nonzero counts of the phenotype columns, summarized by median and third
/// quartile; sparsity is the interpretability proxy.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityReport<S> {
    pub per_column_nnz: Vec<usize>,
    pub median_nnz: f64,
    pub third_quartile_nnz: f64,
    pub lambda: S,
    /// True when every column has at least the required number of terms.
    pub min_terms_ok: bool,
}

pub fn sparsity<S: Scalar>(
    model: &FactorModel<S>,
    zero_tol: S,
    min_terms: usize,
) -> SparsityReport<S> {
    let per_column_nnz: Vec<usize> = model
        .a()
        .axis_iter(Axis(1))
        .map(|col| col.iter().filter(|v| v.abs() > zero_tol).count())
        .collect();
    let median_nnz = quantile(&per_column_nnz, 0.5);
    let third_quartile_nnz = quantile(&per_column_nnz, 0.75);
    let min_terms_ok = per_column_nnz.iter().all(|&c| c >= min_terms);
    SparsityReport {
        per_column_nnz,
        median_nnz,
        third_quartile_nnz,
        lambda: model.lambda(),
        min_terms_ok,
    }
}

/// Linear-interpolation quantile of integer counts.
fn quantile(counts: &[usize], q: f64) -> f64 {
    if counts.is_empty() {
        return 0.0;
    }
    let mut sorted: Vec<usize> = counts.to_vec();
    sorted.sort_unstable();
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] as f64 + frac * (sorted[hi] as f64 - sorted[lo] as f64)
}

/// One row of the sparsity–accuracy tradeoff table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow<S> {
    pub lambda: S,
    pub divergence: S,
    pub sparsity: SparsityReport<S>,
}

/// Fits once per `lambda` with shared seeds and tabulates the tradeoff.
/// A failed fit yields an error row; the sweep continues.
pub fn lambda_sweep<S: Scalar>(
    x: &CountMatrix<S>,
    supports: &SupportSets,
    lambdas: &[S],
    cfg: &SolverConfig<S>,
    zero_tol: S,
    min_terms: usize,
) -> Result<Vec<(S, Result<SweepRow<S>>)>> {
    if lambdas.is_empty() {
        return Err(Error::InvalidConfig("lambda list must be non-empty".into()));
    }
    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let mut run_cfg = cfg.clone();
        run_cfg.lambda = lambda;
        let outcome = fit(x, supports, &run_cfg).map(|(model, report)| SweepRow {
            lambda,
            divergence: *report
                .objective_trace
                .last()
                .expect("trace contains the initial objective"),
            sparsity: sparsity(&model, zero_tol, min_terms),
        });
        rows.push((lambda, outcome));
    }
    Ok(rows)
}

/// Per-condition lists of the `k` largest-weight terms, in decreasing weight
/// order with ties broken by feature index. `k` beyond the feature count is
/// truncated.
pub fn top_terms<S: Scalar>(
    model: &FactorModel<S>,
    names: &[String],
    k: usize,
) -> Result<Vec<Vec<(String, S)>>> {
    let d = model.n_features();
    if names.len() != d {
        return Err(Error::shape("feature names", d, names.len()));
    }
    let k_eff = k.min(d);
    let mut out = Vec::with_capacity(model.n_conditions());
    for col in model.a().axis_iter(Axis(1)) {
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| {
            col[j]
                .abs()
                .partial_cmp(&col[i].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(i.cmp(&j))
        });
        out.push(
            order
                .into_iter()
                .take(k_eff)
                .map(|i| (names[i].clone(), col[i]))
                .collect(),
        );
    }
    Ok(out)
}

/// Stratified fold assignment: positives and negatives are shuffled
/// separately and dealt round-robin, so per-fold class counts differ by at
/// most one. Returns a fold index per sample.
pub fn stratified_folds(
    labels: &[bool],
    n_folds: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if n_folds < 2 {
        return Err(Error::InvalidConfig("need at least 2 folds".into()));
    }
    let mut positives: Vec<usize> = Vec::new();
    let mut negatives: Vec<usize> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        if l {
            positives.push(i);
        } else {
            negatives.push(i);
        }
    }
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::SingleClass);
    }
    let minority = positives.len().min(negatives.len());
    if n_folds > minority {
        return Err(Error::InvalidConfig(format!(
            "n_folds {} exceeds minority class count {}",
            n_folds, minority
        )));
    }
    positives.shuffle(rng);
    negatives.shuffle(rng);
    let mut assignment = vec![0usize; labels.len()];
    for (pos, &i) in positives.iter().enumerate() {
        assignment[i] = pos % n_folds;
    }
    for (pos, &i) in negatives.iter().enumerate() {
        assignment[i] = pos % n_folds;
    }
    Ok(assignment)
}

/// AUROC: probability that a random positive outranks a random negative,
/// ties counting one half. Computed by average ranks, which is exactly the
/// pairwise definition.
pub fn auroc<S: Scalar>(scores: &[S], labels: &[bool]) -> Result<S> {
    if scores.len() != labels.len() {
        return Err(Error::shape("auroc inputs", labels.len(), scores.len()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    for &s in scores {
        if !s.is_finite() {
            return Err(Error::InvalidValue {
                context: "auroc score",
                value: s.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].partial_cmp(&scores[j]).unwrap());
    let mut rank_sum_pos = 0.0f64;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based average rank of the tie group [start, end)
        let avg_rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        start = end;
    }
    let np = n_pos as f64;
    let nn = n_neg as f64;
    Ok(S::cast((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn)))
}

/// Threshold maximizing Youden's J (sensitivity + specificity − 1) over the
/// observed scores, predicting positive at `score ≥ threshold`. Ties keep
/// the highest threshold.
pub fn youden_threshold<S: Scalar>(scores: &[S], labels: &[bool]) -> Result<S> {
    if scores.len() != labels.len() {
        return Err(Error::shape("youden inputs", labels.len(), scores.len()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].partial_cmp(&scores[i]).unwrap());
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut best_j = f64::NEG_INFINITY;
    let mut best_threshold = scores[order[0]];
    let mut idx = 0;
    while idx < order.len() {
        let threshold = scores[order[idx]];
        // take in the whole tie group at this threshold
        while idx < order.len() && scores[order[idx]] == threshold {
            if labels[order[idx]] {
                tp += 1;
            } else {
                fp += 1;
            }
            idx += 1;
        }
        let sens = tp as f64 / n_pos as f64;
        let spec = 1.0 - fp as f64 / n_neg as f64;
        let j = sens + spec - 1.0;
        if j > best_j {
            best_j = j;
            best_threshold = threshold;
        }
    }
    Ok(best_threshold)
}

/// Sensitivity and specificity of `score ≥ threshold` predictions.
fn sens_spec<S: Scalar>(scores: &[S], labels: &[bool], threshold: S) -> (S, S) {
    let (mut tp, mut fnc, mut tn, mut fpc) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        let predicted = s >= threshold;
        match (predicted, l) {
            (true, true) => tp += 1,
            (false, true) => fnc += 1,
            (false, false) => tn += 1,
            (true, false) => fpc += 1,
        }
    }
    let sens = if tp + fnc == 0 {
        S::zero()
    } else {
        S::cast(tp as f64 / (tp + fnc) as f64)
    };
    let spec = if tn + fpc == 0 {
        S::zero()
    } else {
        S::cast(tn as f64 / (tn + fpc) as f64)
    };
    (sens, spec)
}

/// Penalty used by the logistic regression trainer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Penalty {
    L1,
    L2,
}

/// Fitted logistic regression with the grid-selected penalty strength.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel<S> {
    pub weights: Array1<S>,
    pub intercept: S,
    pub chosen_strength: S,
    pub converged: bool,
}

impl<S: Scalar> LogisticModel<S> {
    /// Linear decision scores `Xw + b`.
    pub fn decision_scores(&self, features: &Array2<S>) -> Array1<S> {
        features.dot(&self.weights) + self.intercept
    }
}

const LOGREG_GRAD_TOL: f64 = 1e-6;
const LOGREG_MAX_ITERS: usize = 5000;
/// AUROC band within which a stronger penalty wins the grid search.
const GRID_SELECTION_BAND: f64 = 0.01;

/// Trains a penalized logistic regression. The strength is chosen by AUROC
/// on a single stratified 80/20 split of the training rows, then the model
/// is refit on all rows at the chosen strength. The L1 mode uses proximal
/// soft-thresholding, so uninformative weights are exact zeros.
/// Non-convergence within the iteration budget returns the best-so-far
/// weights with `converged = false`.
pub fn train_logreg<S: Scalar>(
    features: &Array2<S>,
    labels: &[bool],
    penalty: Penalty,
    strength_grid: &[S],
    rng: &mut ChaCha8Rng,
) -> Result<LogisticModel<S>> {
    if features.nrows() != labels.len() {
        return Err(Error::shape(
            "logistic regression rows",
            labels.len(),
            features.nrows(),
        ));
    }
    if strength_grid.is_empty() {
        return Err(Error::InvalidConfig("strength grid must be non-empty".into()));
    }
    for v in features.iter() {
        if !v.is_finite() {
            return Err(Error::InvalidValue {
                context: "logistic regression feature",
                value: v.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(Error::SingleClass);
    }

    let chosen = if strength_grid.len() == 1 {
        strength_grid[0]
    } else {
        let (train_idx, val_idx) = stratified_holdout(labels, 0.2, rng);
        let f_tr = features.select(Axis(0), &train_idx);
        let l_tr: Vec<bool> = train_idx.iter().map(|&i| labels[i]).collect();
        let f_val = features.select(Axis(0), &val_idx);
        let l_val: Vec<bool> = val_idx.iter().map(|&i| labels[i]).collect();
        let mut outcomes: Vec<(S, S)> = Vec::with_capacity(strength_grid.len());
        for &strength in strength_grid {
            let (w, b, _) = fit_penalized(&f_tr, &l_tr, penalty, strength);
            let trial = LogisticModel {
                weights: w,
                intercept: b,
                chosen_strength: strength,
                converged: true,
            };
            let scores = trial.decision_scores(&f_val);
            outcomes.push((strength, auroc(scores.as_slice().unwrap(), &l_val)?));
        }
        // Validation AUROC on a small holdout is noisy; among strengths
        // within a small band of the best, prefer the strongest penalty.
        let best_auc = outcomes
            .iter()
            .map(|&(_, auc)| auc)
            .fold(S::neg_infinity(), S::max);
        let band = S::cast(GRID_SELECTION_BAND);
        outcomes
            .iter()
            .filter(|&&(_, auc)| auc >= best_auc - band)
            .map(|&(strength, _)| strength)
            .fold(S::neg_infinity(), S::max)
    };

    let (weights, intercept, converged) = fit_penalized(features, labels, penalty, chosen);
    Ok(LogisticModel {
        weights,
        intercept,
        chosen_strength: chosen,
        converged,
    })
}

/// Single stratified holdout split; the second part holds roughly `fraction`
/// of each class (at least one sample).
fn stratified_holdout(
    labels: &[bool],
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut held = Vec::new();
    for class in [true, false] {
        let mut idx: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        idx.shuffle(rng);
        let n_held = ((idx.len() as f64 * fraction).round() as usize)
            .max(1)
            .min(idx.len().saturating_sub(1).max(1));
        held.extend_from_slice(&idx[..n_held]);
        train.extend_from_slice(&idx[n_held..]);
    }
    train.sort_unstable();
    held.sort_unstable();
    (train, held)
}

/// Proximal gradient descent (ISTA with backtracking) on the mean logistic
/// loss; L2 strength enters the smooth part, L1 the proximal step. Stops at
/// composite-gradient norm `1e-6` or the iteration cap.
fn fit_penalized<S: Scalar>(
    features: &Array2<S>,
    labels: &[bool],
    penalty: Penalty,
    strength: S,
) -> (Array1<S>, S, bool) {
    let n = features.nrows();
    let p = features.ncols();
    let inv_n = S::one() / S::cast(n as f64);
    let y: Array1<S> = labels
        .iter()
        .map(|&l| if l { S::one() } else { S::zero() })
        .collect();

    let smooth_loss = |w: &Array1<S>, b: S| -> S {
        let z = features.dot(w) + b;
        let mut loss = z
            .iter()
            .zip(y.iter())
            .map(|(&zi, &yi)| log1pexp(zi) - yi * zi)
            .sum::<S>()
            * inv_n;
        if penalty == Penalty::L2 {
            loss += S::cast(0.5) * strength * w.dot(w);
        }
        loss
    };

    let mut w: Array1<S> = Array1::zeros(p);
    let mut b = S::zero();
    let mut loss = smooth_loss(&w, b);
    let mut step = S::one();
    let mut converged = false;
    let grad_tol = S::cast(LOGREG_GRAD_TOL);

    for _ in 0..LOGREG_MAX_ITERS {
        let z = features.dot(&w) + b;
        let probs = z.mapv(sigmoid);
        let diff = (&probs - &y) * inv_n;
        let mut grad_w = features.t().dot(&diff);
        if penalty == Penalty::L2 {
            grad_w = grad_w + &w * strength;
        }
        let grad_b = diff.sum();

        // backtracking on the smooth majorization
        let mut accepted = None;
        for _ in 0..60 {
            let mut w_new = &w - &(&grad_w * step);
            if penalty == Penalty::L1 {
                let tau = step * strength;
                w_new.mapv_inplace(|v| soft_threshold(v, tau));
            }
            let b_new = b - step * grad_b;
            let dw = &w_new - &w;
            let db = b_new - b;
            let sq_norm = dw.dot(&dw) + db * db;
            let lin = grad_w.dot(&dw) + grad_b * db;
            let new_loss = smooth_loss(&w_new, b_new);
            let bound = loss + lin + sq_norm / (S::cast(2.0) * step) + S::cast(1e-12);
            if new_loss <= bound {
                accepted = Some((w_new, b_new, new_loss, sq_norm));
                break;
            }
            step = step * S::cast(0.5);
        }
        let Some((w_new, b_new, new_loss, sq_norm)) = accepted else {
            break;
        };
        let grad_map_norm = sq_norm.sqrt() / step;
        w = w_new;
        b = b_new;
        loss = new_loss;
        if grad_map_norm <= grad_tol {
            converged = true;
            break;
        }
        // allow the step to grow back gently
        step = step * S::cast(1.1);
    }
    (w, b, converged)
}

#[inline]
fn sigmoid<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

#[inline]
fn log1pexp<S: Scalar>(z: S) -> S {
    if z > S::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
fn soft_threshold<S: Scalar>(v: S, tau: S) -> S {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        S::zero()
    }
}

/// Feature set handed to the classifier. Loadings alone use an L2 penalty;
/// the raw and augmented modes use L1, matching how the high-dimensional
/// variants are regularized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    LoadingsOnly,
    RawOnly,
    Augmented,
}

impl FeatureMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureMode::LoadingsOnly => "loadings-only",
            FeatureMode::RawOnly => "raw-only",
            FeatureMode::Augmented => "augmented",
        }
    }
}

/// Cross-validation harness parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig<S> {
    pub solver: SolverConfig<S>,
    pub n_folds: usize,
    pub strength_grid: Vec<S>,
    pub rng_seed: u64,
}

impl<S: Scalar> EvalConfig<S> {
    pub fn new(solver: SolverConfig<S>) -> Self {
        EvalConfig {
            solver,
            n_folds: 5,
            strength_grid: [3e-3, 1e-2, 3e-2, 1e-1, 3e-1]
                .iter()
                .map(|&s| S::cast(s))
                .collect(),
            rng_seed: 7,
        }
    }
}

/// Per-fold classification metrics at the training-fold Youden threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldMetrics<S> {
    pub auroc: S,
    pub sensitivity: S,
    pub specificity: S,
    pub chosen_strength: S,
}

/// Cross-validated prediction outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionReport<S> {
    pub per_fold: Vec<FoldMetrics<S>>,
    pub mean_auroc: S,
    pub std_auroc: S,
    pub mean_sensitivity: S,
    pub std_sensitivity: S,
    pub mean_specificity: S,
    pub std_specificity: S,
    pub feature_mode: FeatureMode,
    /// Fraction of raw features with nonzero weight, averaged over folds;
    /// present in augmented mode only.
    pub nonzero_raw_feature_fraction: Option<f64>,
}

/// Stratified cross-validation protocol: per fold, the factor model is fit
/// on the training columns only, training and test loadings are re-inferred
/// against the frozen factors (test columns without supports, so held-out
/// diagnosis sets are never consulted), and a penalized logistic regression
/// is trained on the chosen feature set. Features are standardized with
/// training-fold statistics so raw counts and loadings are penalized on a
/// common scale. Sensitivity and specificity are evaluated at the threshold
/// that maximizes Youden's J on the training fold.
pub fn predict_eval<S: Scalar>(
    x: &CountMatrix<S>,
    supports: &SupportSets,
    labels: &[bool],
    mode: FeatureMode,
    cfg: &EvalConfig<S>,
) -> Result<PredictionReport<S>> {
    if labels.len() != x.n_columns() {
        return Err(Error::shape("labels", x.n_columns(), labels.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let folds = stratified_folds(labels, cfg.n_folds, &mut rng)?;

    let d = x.n_features();
    let mut per_fold = Vec::with_capacity(cfg.n_folds);
    let mut raw_fractions = Vec::new();

    for fold in 0..cfg.n_folds {
        let train_idx: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] != fold).collect();
        let test_idx: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] == fold).collect();
        let labels_tr: Vec<bool> = train_idx.iter().map(|&i| labels[i]).collect();
        let labels_te: Vec<bool> = test_idx.iter().map(|&i| labels[i]).collect();

        let x_tr = x.select_columns(&train_idx)?;
        let x_te = x.select_columns(&test_idx)?;
        let sup_tr = supports.select(&train_idx)?;

        let (model, _) = fit(&x_tr, &sup_tr, &cfg.solver)?;
        let w_tr = transform(&x_tr, &model, Some(&sup_tr), &cfg.solver)?;
        let w_te = transform(&x_te, &model, None, &cfg.solver)?;

        let mut feats_tr = feature_matrix(&w_tr, &x_tr, mode);
        let mut feats_te = feature_matrix(&w_te, &x_te, mode);
        standardize_columns(&mut feats_tr, &mut feats_te);
        let penalty = match mode {
            FeatureMode::LoadingsOnly => Penalty::L2,
            _ => Penalty::L1,
        };
        let mut fold_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.rng_seed, 1000 + fold as u64));
        let lr = train_logreg(&feats_tr, &labels_tr, penalty, &cfg.strength_grid, &mut fold_rng)?;

        let scores_tr = lr.decision_scores(&feats_tr);
        let threshold = youden_threshold(scores_tr.as_slice().unwrap(), &labels_tr)?;
        let scores_te = lr.decision_scores(&feats_te);
        let fold_auroc = auroc(scores_te.as_slice().unwrap(), &labels_te)?;
        let (sens, spec) = sens_spec(scores_te.as_slice().unwrap(), &labels_te, threshold);

        if mode == FeatureMode::Augmented {
            let k = model.n_conditions();
            let nonzero = lr.weights.slice(ndarray::s![k..]).iter().filter(|&&v| v != S::zero()).count();
            raw_fractions.push(nonzero as f64 / d as f64);
        }
        per_fold.push(FoldMetrics {
            auroc: fold_auroc,
            sensitivity: sens,
            specificity: spec,
            chosen_strength: lr.chosen_strength,
        });
    }

    let stats = |f: fn(&FoldMetrics<S>) -> S| mean_std(per_fold.iter().map(f));
    let (mean_auroc, std_auroc) = stats(|m| m.auroc);
    let (mean_sensitivity, std_sensitivity) = stats(|m| m.sensitivity);
    let (mean_specificity, std_specificity) = stats(|m| m.specificity);
    let nonzero_raw_feature_fraction = if raw_fractions.is_empty() {
        None
    } else {
        Some(raw_fractions.iter().sum::<f64>() / raw_fractions.len() as f64)
    };

    Ok(PredictionReport {
        per_fold,
        mean_auroc,
        std_auroc,
        mean_sensitivity,
        std_sensitivity,
        mean_specificity,
        std_specificity,
        feature_mode: mode,
        nonzero_raw_feature_fraction,
    })
}

/// Rows are columns of `X`; loadings block first, then raw features.
fn feature_matrix<S: Scalar>(
    w: &Array2<S>,
    x: &CountMatrix<S>,
    mode: FeatureMode,
) -> Array2<S> {
    match mode {
        FeatureMode::LoadingsOnly => w.t().to_owned(),
        FeatureMode::RawOnly => x.to_dense().t().to_owned(),
        FeatureMode::Augmented => {
            let loadings = w.t().to_owned();
            let raw = x.to_dense().t().to_owned();
            concatenate(Axis(1), &[loadings.view(), raw.view()])
                .expect("row counts agree by construction")
        }
    }
}

/// Centers and scales each feature column by training statistics, applying
/// the same affine map to the test block. Constant columns collapse to zero.
fn standardize_columns<S: Scalar>(train: &mut Array2<S>, test: &mut Array2<S>) {
    let n = S::cast(train.nrows() as f64);
    for j in 0..train.ncols() {
        let mean = train.column(j).sum() / n;
        let var = train
            .column(j)
            .iter()
            .map(|&v| (v - mean) * (v - mean))
            .sum::<S>()
            / n;
        let std = var.sqrt();
        let scale = if std > S::cast(1e-12) {
            S::one() / std
        } else {
            S::zero()
        };
        train.column_mut(j).mapv_inplace(|v| (v - mean) * scale);
        test.column_mut(j).mapv_inplace(|v| (v - mean) * scale);
    }
}

/// Sample mean and standard deviation (n − 1 in the denominator).
fn mean_std<S: Scalar>(values: impl Iterator<Item = S>) -> (S, S) {
    let vals: Vec<S> = values.collect();
    let n = S::cast(vals.len() as f64);
    let mean = vals.iter().copied().sum::<S>() / n;
    if vals.len() < 2 {
        return (mean, S::zero());
    }
    let var = vals
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<S>()
        / (n - S::one());
    (mean, var.sqrt())
}

/// Ranked weight tables for an augmented-mode classifier, split into the
/// loadings block and the raw-feature block.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTables<S> {
    pub loadings: Vec<(String, S)>,
    pub raw: Vec<(String, S)>,
}

pub fn weight_inspection<S: Scalar>(
    weights: &[S],
    feature_names: &[String],
    condition_names: &[String],
    top_k: usize,
) -> Result<WeightTables<S>> {
    let k = condition_names.len();
    let d = feature_names.len();
    if weights.len() != k + d {
        return Err(Error::shape("weight vector", k + d, weights.len()));
    }
    let rank = |block: &[S], names: &[String]| -> Vec<(String, S)> {
        let mut order: Vec<usize> = (0..block.len()).collect();
        order.sort_by(|&i, &j| {
            block[j]
                .abs()
                .partial_cmp(&block[i].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(i.cmp(&j))
        });
        order
            .into_iter()
            .take(top_k)
            .map(|i| (names[i].clone(), block[i]))
            .collect()
    };
    Ok(WeightTables {
        loadings: rank(&weights[..k], condition_names),
        raw: rank(&weights[k..], feature_names),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, GenConfig, LabelRule};
    use crate::projections::{project_scaled_simplex, ScaledSimplexSpec};
    use ndarray::array;
    use rand::Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn sparsity_counts_projection_zeros() {
        let mut r = rng(2);
        let d = 30;
        let spec = ScaledSimplexSpec::new(d, 0.4).unwrap();
        let mut a = Array2::zeros((d, 3));
        for mut col in a.axis_iter_mut(Axis(1)) {
            let raw = Array1::from_shape_fn(d, |_| r.random::<f64>().powi(6) * 5.0);
            col.assign(&project_scaled_simplex(raw.view(), &spec));
        }
        let w = Array2::zeros((3, 2));
        let b = Array1::zeros(d);
        let model = FactorModel::new(a, w, b, 0.4, true).unwrap();
        let report = sparsity(&model, 1e-12, 5);
        assert!(report.per_column_nnz.iter().all(|&c| c < d));
        // exact zeros: counts insensitive to the tolerance choice
        let loose = sparsity(&model, 1e-8, 5);
        assert_eq!(report.per_column_nnz, loose.per_column_nnz);
    }

    #[test]
    fn sparsity_of_uniform_columns_is_full() {
        let d = 10;
        let a = Array2::from_elem((d, 2), 0.4 / d as f64);
        let model =
            FactorModel::new(a, Array2::zeros((2, 1)), Array1::zeros(d), 0.4, true).unwrap();
        let report = sparsity(&model, 1e-12, 5);
        assert_eq!(report.per_column_nnz, vec![d, d]);
        assert_eq!(report.median_nnz, d as f64);
        assert!(report.min_terms_ok);
    }

    #[test]
    fn top_terms_orders_and_breaks_ties_by_index() {
        let names: Vec<String> = (0..4).map(|i| format!("f{}", i + 1)).collect();
        // one-hot column puts the hot term first
        let a = array![[0.0, 0.1], [0.4, 0.1], [0.0, 0.1], [0.0, 0.1]];
        let model =
            FactorModel::new(a, Array2::zeros((2, 1)), Array1::zeros(4), 0.4, true).unwrap();
        let terms = top_terms(&model, &names, 3).unwrap();
        assert_eq!(terms[0][0].0, "f2");
        // uniform column: index order
        let uniform: Vec<&str> = terms[1].iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(uniform, vec!["f1", "f2", "f3"]);
    }

    #[test]
    fn top_terms_pads_past_nnz_with_zero_weight_terms() {
        let names: Vec<String> = (0..4).map(|i| format!("f{}", i + 1)).collect();
        let a = array![[0.0], [0.4], [0.0], [0.0]];
        let model =
            FactorModel::new(a, Array2::zeros((1, 1)), Array1::zeros(4), 0.4, true).unwrap();
        let terms = top_terms(&model, &names, 3).unwrap();
        let listed: Vec<&str> = terms[0].iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(listed, vec!["f2", "f1", "f3"]);
        // k beyond d truncates
        let all = top_terms(&model, &names, 99).unwrap();
        assert_eq!(all[0].len(), 4);
    }

    #[test]
    fn stratified_folds_balance_small_case() {
        let labels: Vec<bool> = (0..10).map(|i| i < 5).collect();
        let folds = stratified_folds(&labels, 5, &mut rng(3)).unwrap();
        for f in 0..5 {
            let pos = (0..10).filter(|&i| folds[i] == f && labels[i]).count();
            let neg = (0..10).filter(|&i| folds[i] == f && !labels[i]).count();
            assert_eq!((pos, neg), (1, 1));
        }
    }

    #[test]
    fn stratified_folds_exact_counts_at_scale() {
        let labels: Vec<bool> = (0..1000).map(|i| i % 10 == 0).collect();
        let folds = stratified_folds(&labels, 5, &mut rng(4)).unwrap();
        for f in 0..5 {
            let pos = (0..1000).filter(|&i| folds[i] == f && labels[i]).count();
            assert_eq!(pos, 20);
        }
        // deterministic under the same seed
        let again = stratified_folds(&labels, 5, &mut rng(4)).unwrap();
        assert_eq!(folds, again);
    }

    #[test]
    fn stratified_folds_reject_degenerate_inputs() {
        assert!(matches!(
            stratified_folds(&[true, true], 2, &mut rng(0)),
            Err(Error::SingleClass)
        ));
        let labels = [true, false, false, false];
        assert!(matches!(
            stratified_folds(&labels, 2, &mut rng(0)),
            Err(Error::InvalidConfig(_))
        ));
    }

    /// O(n^2) pairwise AUROC oracle with half-weight ties.
    fn auroc_pairwise(scores: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut total = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                total += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        wins / total
    }

    #[test]
    fn auroc_matches_pairwise_oracle_with_ties() {
        let mut r = rng(5);
        for _ in 0..50 {
            let n = r.random_range(10..=200usize);
            // coarse grid scores force plenty of ties
            let scores: Vec<f64> = (0..n).map(|_| (r.random::<f64>() * 8.0).floor() / 4.0).collect();
            let labels: Vec<bool> = (0..n).map(|_| r.random::<f64>() < 0.4).collect();
            if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
                continue;
            }
            let fast = auroc(&scores, &labels).unwrap();
            let slow = auroc_pairwise(&scores, &labels);
            assert!((fast - slow).abs() < 1e-10, "fast {fast} slow {slow}");
        }
    }

    #[test]
    fn auroc_perfect_and_inverted() {
        let scores = [0.1, 0.2, 0.8, 0.9];
        let labels = [false, false, true, true];
        assert_eq!(auroc(&scores, &labels).unwrap(), 1.0);
        let inverted = [true, true, false, false];
        assert_eq!(auroc(&scores, &inverted).unwrap(), 0.0);
    }

    #[test]
    fn youden_threshold_separates_classes() {
        let scores = [0.1, 0.2, 0.8, 0.9];
        let labels = [false, false, true, true];
        let t = youden_threshold(&scores, &labels).unwrap();
        let (sens, spec) = sens_spec(&scores, &labels, t);
        assert_eq!(sens, 1.0);
        assert_eq!(spec, 1.0);
    }

    #[test]
    fn logreg_separable_data_scores_perfectly() {
        let features = Array2::<f64>::from_shape_vec(
            (8, 1),
            vec![-2.0, -1.5, -1.2, -0.8, 0.9, 1.1, 1.6, 2.2],
        )
        .unwrap();
        let labels: Vec<bool> = (0..8).map(|i| i >= 4).collect();
        let model =
            train_logreg(&features, &labels, Penalty::L2, &[1.0], &mut rng(6)).unwrap();
        assert!(model.weights[0].is_finite());
        let scores = model.decision_scores(&features);
        assert_eq!(auroc(scores.as_slice().unwrap(), &labels).unwrap(), 1.0);
    }

    #[test]
    fn logreg_null_labels_score_near_chance() {
        // labels independent of features: cross-validated AUROC near 0.5
        let mut r = rng(7);
        let n = 200;
        let features = Array2::from_shape_fn((n, 3), |_| r.random::<f64>());
        let labels: Vec<bool> = (0..n).map(|_| r.random::<f64>() < 0.5).collect();
        let folds = stratified_folds(&labels, 5, &mut r).unwrap();
        let mut aucs = Vec::new();
        for f in 0..5 {
            let tr: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
            let te: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
            let model = train_logreg(
                &features.select(Axis(0), &tr),
                &tr.iter().map(|&i| labels[i]).collect::<Vec<_>>(),
                Penalty::L2,
                &[1e-2, 1e-1],
                &mut r,
            )
            .unwrap();
            let scores = model.decision_scores(&features.select(Axis(0), &te));
            let l_te: Vec<bool> = te.iter().map(|&i| labels[i]).collect();
            aucs.push(auroc(scores.as_slice().unwrap(), &l_te).unwrap());
        }
        let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
        assert!((0.4..=0.6).contains(&mean), "null mean AUROC {mean}");
    }

    #[test]
    fn logreg_l1_zeroes_dead_features() {
        let mut r = rng(8);
        let n = 60;
        let mut features = Array2::from_shape_fn((n, 3), |_| r.random::<f64>() * 2.0 - 1.0);
        for i in 0..n {
            features[[i, 1]] = 0.0; // dead column
        }
        let labels: Vec<bool> = (0..n).map(|i| features[[i, 0]] > 0.0).collect();
        let model =
            train_logreg(&features, &labels, Penalty::L1, &[0.05], &mut rng(9)).unwrap();
        assert_eq!(model.weights[1], 0.0);
        assert!(model.weights[0] != 0.0);
    }

    #[test]
    fn weight_inspection_splits_and_ranks() {
        let feature_names: Vec<String> = (0..3).map(|i| format!("f{}", i + 1)).collect();
        let condition_names: Vec<String> = (0..2).map(|i| format!("c{}", i + 1)).collect();
        // all-zero weights: index order
        let zeros = [0.0; 5];
        let tables = weight_inspection(&zeros, &feature_names, &condition_names, 2).unwrap();
        assert_eq!(tables.loadings[0].0, "c1");
        assert_eq!(tables.raw[0].0, "f1");
        // single nonzero raw weight heads the raw table
        let w = [0.0, 0.0, 0.0, -0.7, 0.0];
        let tables = weight_inspection(&w, &feature_names, &condition_names, 2).unwrap();
        assert_eq!(tables.raw[0], ("f2".to_string(), -0.7));
        // length mismatch is an error
        assert!(weight_inspection(&w[..4], &feature_names, &condition_names, 2).is_err());
    }

    #[test]
    fn weight_inspection_matches_sort_oracle() {
        let mut r = rng(10);
        let feature_names: Vec<String> = (0..6).map(|i| format!("f{i}")).collect();
        let condition_names: Vec<String> = (0..4).map(|i| format!("c{i}")).collect();
        let weights: Vec<f64> = (0..10).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
        let tables = weight_inspection(&weights, &feature_names, &condition_names, 10).unwrap();
        let mut expect: Vec<(String, f64)> = weights[4..]
            .iter()
            .enumerate()
            .map(|(i, &w)| (feature_names[i].clone(), w))
            .collect();
        expect.sort_by(|a, b| b.1.abs().partial_cmp(&a.1.abs()).unwrap());
        assert_eq!(tables.raw, expect);
    }

    #[test]
    fn lambda_sweep_is_seed_shared_and_matches_single_fits() {
        let gen_cfg = GenConfig {
            n_features: 15,
            n_columns: 30,
            n_conditions: 2,
            lambda: 5.0,
            support_density: 0.6,
            phenotype_support_size: 5,
            overlap: 0.0,
            bias_scale: 0.3,
            label_rule: None,
        };
        let inst = generate(&gen_cfg, 55).unwrap();
        let mut cfg = SolverConfig::new(5.0, 2);
        cfg.n_restarts = 1;
        cfg.max_outer_iters = 30;

        // a single lambda equals one fit call's outputs
        let rows = lambda_sweep(&inst.x, &inst.supports_true, &[5.0], &cfg, 1e-12, 5).unwrap();
        let row = rows[0].1.as_ref().unwrap();
        let (model, report) = crate::solver::fit(&inst.x, &inst.supports_true, &cfg).unwrap();
        assert_eq!(row.divergence, *report.objective_trace.last().unwrap());
        assert_eq!(
            row.sparsity.per_column_nnz,
            sparsity(&model, 1e-12, 5).per_column_nnz
        );

        // duplicated lambda with the shared seed gives identical rows
        let rows =
            lambda_sweep(&inst.x, &inst.supports_true, &[5.0, 5.0], &cfg, 1e-12, 5).unwrap();
        let first = rows[0].1.as_ref().unwrap();
        let second = rows[1].1.as_ref().unwrap();
        assert_eq!(first, second);

        // empty list is rejected
        assert!(lambda_sweep(&inst.x, &inst.supports_true, &[], &cfg, 1e-12, 5).is_err());
    }

    fn quick_eval_cfg(k: usize, lambda: f64) -> EvalConfig<f64> {
        let mut solver = SolverConfig::new(lambda, k);
        solver.n_restarts = 1;
        solver.max_outer_iters = 60;
        EvalConfig::new(solver)
    }

    #[test]
    fn predict_eval_recovers_planted_signal() {
        let cfg = GenConfig {
            n_features: 30,
            n_columns: 150,
            n_conditions: 3,
            lambda: 20.0,
            support_density: 0.5,
            phenotype_support_size: 10,
            overlap: 0.0,
            bias_scale: 0.4,
            label_rule: Some(LabelRule { noise: 0.1 }),
        };
        let inst = generate(&cfg, 17).unwrap();
        let labels = inst.labels.clone().unwrap();
        let report = predict_eval(
            &inst.x,
            &inst.supports_true,
            &labels,
            FeatureMode::LoadingsOnly,
            &quick_eval_cfg(3, 20.0),
        )
        .unwrap();
        assert!(report.mean_auroc > 0.8, "mean AUROC {}", report.mean_auroc);
        assert!(report.per_fold.len() == 5);
        assert!(report.nonzero_raw_feature_fraction.is_none());
    }

    #[test]
    fn predict_eval_augmented_reports_raw_fraction() {
        let cfg = GenConfig {
            n_features: 20,
            n_columns: 100,
            n_conditions: 2,
            lambda: 15.0,
            support_density: 0.6,
            phenotype_support_size: 8,
            overlap: 0.0,
            bias_scale: 0.3,
            label_rule: Some(LabelRule { noise: 0.2 }),
        };
        let inst = generate(&cfg, 19).unwrap();
        let labels = inst.labels.clone().unwrap();
        let report = predict_eval(
            &inst.x,
            &inst.supports_true,
            &labels,
            FeatureMode::Augmented,
            &quick_eval_cfg(2, 15.0),
        )
        .unwrap();
        let fraction = report.nonzero_raw_feature_fraction.unwrap();
        assert!((0.0..=1.0).contains(&fraction));
    }
}
