//! Synthetic instances with planted ground truth.
//!
//! Columns are sampled from the generative model: each column's expected
//! counts are `Σ_{k∈C*_j} w*_kj·a*^{(k)} + b*`, with independent Poisson
//! observations around that mean. The planted factors give oracle values for
//! recovery and prediction tests.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{CountMatrix, SupportSets};
use crate::scalar::Scalar;

/// Optional binary outcome generator: labels follow a logistic model on a
/// fixed random weighting of the planted loading rows. `noise` is the
/// standard deviation of Gaussian noise added to the logit; zero noise gives
/// the sharpest achievable (Bayes) ranking for a downstream classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelRule {
    pub noise: f64,
}

/// Steepness of the label logit in standardized score units. Fixed so that
/// `noise` alone calibrates the achievable AUROC.
const LABEL_LOGIT_SCALE: f64 = 4.0;

/// Generator parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig<S> {
    pub n_features: usize,
    pub n_columns: usize,
    pub n_conditions: usize,
    /// Planted phenotype columns sum to this scale exactly.
    pub lambda: S,
    /// Probability that a condition enters a column's diagnosis set.
    pub support_density: f64,
    /// Nonzeros per planted phenotype column.
    pub phenotype_support_size: usize,
    /// Fraction of features shared between consecutive phenotype supports;
    /// zero gives disjoint supports whenever they fit in `n_features`.
    pub overlap: f64,
    /// Mean of the planted bias entries (uniform on `[0, 2·bias_scale]`).
    pub bias_scale: S,
    pub label_rule: Option<LabelRule>,
}

impl<S: Scalar> GenConfig<S> {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_features == 0 || self.n_columns == 0 || self.n_conditions == 0 {
            return fail("all dimensions must be positive".into());
        }
        if self.phenotype_support_size == 0 {
            return fail("phenotype_support_size must be positive".into());
        }
        if self.phenotype_support_size > self.n_features {
            return fail(format!(
                "phenotype_support_size {} exceeds n_features {}",
                self.phenotype_support_size, self.n_features
            ));
        }
        if !(0.0..=1.0).contains(&self.support_density) {
            return fail("support_density must lie in [0, 1]".into());
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return fail("overlap must lie in [0, 1)".into());
        }
        if !(self.lambda.is_finite() && self.lambda > S::zero()) {
            return fail("lambda must be positive".into());
        }
        if !(self.bias_scale.is_finite() && self.bias_scale >= S::zero()) {
            return fail("bias_scale must be non-negative".into());
        }
        if let Some(rule) = self.label_rule {
            if !(rule.noise.is_finite() && rule.noise >= 0.0) {
                return fail("label noise must be non-negative".into());
            }
        }
        Ok(())
    }
}

/// A generated instance together with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedInstance<S> {
    pub a_true: Array2<S>,
    pub w_true: Array2<S>,
    pub b_true: Array1<S>,
    pub supports_true: SupportSets,
    pub x: CountMatrix<S>,
    pub labels: Option<Vec<bool>>,
    /// The fixed weighting of loading rows behind the labels, when present.
    pub label_weights: Option<Vec<f64>>,
    pub rng_seed: u64,
}

/// Samples a planted instance. The same config and seed always produce the
/// same instance.
pub fn generate<S: Scalar>(cfg: &GenConfig<S>, seed: u64) -> Result<PlantedInstance<S>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, n, k) = (cfg.n_features, cfg.n_columns, cfg.n_conditions);

    // Phenotype supports are index windows advanced by a stride that leaves
    // the requested overlap between consecutive conditions.
    let size = cfg.phenotype_support_size;
    let stride = ((size as f64) * (1.0 - cfg.overlap)).round().max(1.0) as usize;
    let mut a_true = Array2::zeros((d, k));
    for cond in 0..k {
        let start = (cond * stride) % d;
        let mut col_sum = S::zero();
        let mut entries = Vec::with_capacity(size);
        for t in 0..size {
            let row = (start + t) % d;
            let v = S::cast(0.5 + rng.random::<f64>());
            entries.push((row, v));
            col_sum += v;
        }
        for (row, v) in entries {
            a_true[[row, cond]] = v * cfg.lambda / col_sum;
        }
    }

    // Diagnosis sets and supported loadings in [0.2, 1], keeping planted
    // signals bounded away from zero.
    let mut sets = Vec::with_capacity(n);
    let mut w_true = Array2::zeros((k, n));
    for j in 0..n {
        let mut set = Vec::new();
        for cond in 0..k {
            if rng.random::<f64>() < cfg.support_density {
                set.push(cond);
                w_true[[cond, j]] = S::cast(0.2 + 0.8 * rng.random::<f64>());
            }
        }
        sets.push(set);
    }
    let supports_true = SupportSets::new(sets, k)?;

    let b_true = Array1::from_shape_fn(d, |_| {
        S::cast(2.0 * rng.random::<f64>()) * cfg.bias_scale
    });

    // Poisson observations around the planted mean; a zero mean is a point
    // mass at zero and draws nothing from the stream.
    let mean = {
        let mut m = a_true.dot(&w_true);
        m += &b_true.view().insert_axis(Axis(1));
        m
    };
    let mut triplets = Vec::new();
    for j in 0..n {
        for i in 0..d {
            let m = mean[[i, j]].to_f64().unwrap_or(0.0);
            if m > 0.0 {
                let draw: f64 = Poisson::new(m)
                    .map_err(|_| Error::InvalidValue {
                        context: "poisson mean",
                        value: m,
                    })?
                    .sample(&mut rng);
                if draw > 0.0 {
                    triplets.push((i, j, S::cast(draw)));
                }
            }
        }
    }
    let x = CountMatrix::from_triplets(d, n, triplets)?;

    let (labels, label_weights) = match cfg.label_rule {
        None => (None, None),
        Some(rule) => {
            let theta: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
            let raw: Vec<f64> = (0..n)
                .map(|j| {
                    (0..k)
                        .map(|cond| theta[cond] * w_true[[cond, j]].to_f64().unwrap_or(0.0))
                        .sum()
                })
                .collect();
            let mean_raw = raw.iter().sum::<f64>() / n as f64;
            let var_raw =
                raw.iter().map(|r| (r - mean_raw).powi(2)).sum::<f64>() / n as f64;
            let std_raw = var_raw.sqrt().max(1e-12);
            let labels = raw
                .iter()
                .map(|r| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    let logit =
                        LABEL_LOGIT_SCALE * (r - mean_raw) / std_raw + rule.noise * g;
                    let p = 1.0 / (1.0 + (-logit).exp());
                    rng.random::<f64>() < p
                })
                .collect();
            (Some(labels), Some(theta))
        }
    };

    Ok(PlantedInstance {
        a_true,
        w_true,
        b_true,
        supports_true,
        x,
        labels,
        label_weights,
        rng_seed: seed,
    })
}

/// Greedy maximum-cosine assignment between fitted and planted columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatching<S> {
    /// `(fitted column, planted column)` in assignment order.
    pub pairs: Vec<(usize, usize)>,
    /// Cosine similarity of each pair, in assignment order.
    pub cosines: Vec<S>,
}

impl<S: Scalar> FactorMatching<S> {
    pub fn mean_cosine(&self) -> S {
        if self.cosines.is_empty() {
            return S::zero();
        }
        self.cosines.iter().copied().sum::<S>() / S::cast(self.cosines.len() as f64)
    }

    /// Permutation mapping fitted column index to its matched planted column.
    pub fn permutation(&self) -> Vec<usize> {
        let mut perm = vec![0; self.pairs.len()];
        for &(fit, planted) in &self.pairs {
            perm[fit] = planted;
        }
        perm
    }
}

/// Matches columns greedily without replacement: repeatedly assign the
/// highest-cosine remaining pair. Zero-norm columns score zero against
/// everything. Needed because without grounding the factors are
/// interchangeable, so recovery must be measured up to assignment.
pub fn match_factors<S: Scalar>(
    a_fit: &Array2<S>,
    a_true: &Array2<S>,
) -> Result<FactorMatching<S>> {
    if a_fit.dim() != a_true.dim() {
        return Err(Error::shape(
            "factor matching",
            format!("{:?}", a_true.dim()),
            format!("{:?}", a_fit.dim()),
        ));
    }
    let k = a_fit.ncols();
    let mut cosines = Array2::zeros((k, k));
    for fit in 0..k {
        for planted in 0..k {
            cosines[[fit, planted]] =
                cosine(a_fit.column(fit), a_true.column(planted));
        }
    }

    let mut fit_free = vec![true; k];
    let mut planted_free = vec![true; k];
    let mut pairs = Vec::with_capacity(k);
    let mut sims = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best = None;
        for fit in 0..k {
            if !fit_free[fit] {
                continue;
            }
            for planted in 0..k {
                if !planted_free[planted] {
                    continue;
                }
                let c = cosines[[fit, planted]];
                if best.map_or(true, |(bc, _, _)| c > bc) {
                    best = Some((c, fit, planted));
                }
            }
        }
        let (c, fit, planted) = best.expect("free pair remains");
        fit_free[fit] = false;
        planted_free[planted] = false;
        pairs.push((fit, planted));
        sims.push(c);
    }
    Ok(FactorMatching {
        pairs,
        cosines: sims,
    })
}

fn cosine<S: Scalar>(u: ndarray::ArrayView1<'_, S>, v: ndarray::ArrayView1<'_, S>) -> S {
    let nu = u.dot(&u).sqrt();
    let nv = v.dot(&v).sqrt();
    if nu == S::zero() || nv == S::zero() {
        return S::zero();
    }
    u.dot(&v) / (nu * nv)
}
