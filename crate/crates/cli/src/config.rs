//! Run configuration: one TOML document covering solver, generator, and
//! evaluation parameters. Unknown keys are rejected; every field has a
//! default, so an absent `--config` means "all defaults". The hash of the
//! effective (post-override) config is embedded in every output manifest.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cnmf_core::datagen::LabelRule;
use cnmf_core::{GenConfigF64, SolverConfigF64};

use crate::error::{usage, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Forces sequential execution; outputs are identical either way.
    pub deterministic: bool,
    pub solver: SolverSection,
    pub gen: GenSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            deterministic: false,
            solver: SolverSection::default(),
            gen: GenSection::default(),
            eval: EvalSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub lambda: f64,
    pub simplex_enabled: bool,
    pub max_outer_iters: usize,
    pub outer_tol: f64,
    pub max_inner_iters: usize,
    pub armijo_beta: f64,
    pub armijo_sigma: f64,
    pub initial_step: f64,
    pub n_restarts: usize,
    pub rng_seed: u64,
    pub epsilon_floor: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            lambda: 0.4,
            simplex_enabled: true,
            max_outer_iters: 500,
            outer_tol: 1e-6,
            max_inner_iters: 50,
            armijo_beta: 0.5,
            armijo_sigma: 1e-4,
            initial_step: 1.0,
            n_restarts: 5,
            rng_seed: 42,
            epsilon_floor: 1e-10,
        }
    }
}

impl SolverSection {
    /// Core solver config; the condition count always comes from the
    /// supports file or the model directory, never from the config.
    pub fn to_solver_config(&self, n_conditions: usize, deterministic: bool) -> SolverConfigF64 {
        SolverConfigF64 {
            lambda: self.lambda,
            n_conditions,
            simplex_enabled: self.simplex_enabled,
            max_outer_iters: self.max_outer_iters,
            outer_tol: self.outer_tol,
            max_inner_iters: self.max_inner_iters,
            armijo_beta: self.armijo_beta,
            armijo_sigma: self.armijo_sigma,
            initial_step: self.initial_step,
            n_restarts: self.n_restarts,
            rng_seed: self.rng_seed,
            epsilon_floor: self.epsilon_floor,
            deterministic_mode: deterministic,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSection {
    pub n_features: usize,
    pub n_columns: usize,
    pub n_conditions: usize,
    pub lambda: f64,
    pub support_density: f64,
    pub phenotype_support_size: usize,
    pub overlap: f64,
    pub bias_scale: f64,
    pub seed: u64,
    /// Noise level of the label logit; absent means no labels are generated.
    pub label_noise: Option<f64>,
}

impl Default for GenSection {
    fn default() -> Self {
        GenSection {
            n_features: 60,
            n_columns: 300,
            n_conditions: 4,
            lambda: 30.0,
            support_density: 0.3,
            phenotype_support_size: 12,
            overlap: 0.0,
            bias_scale: 0.5,
            seed: 42,
            label_noise: None,
        }
    }
}

impl GenSection {
    pub fn to_gen_config(&self) -> GenConfigF64 {
        GenConfigF64 {
            n_features: self.n_features,
            n_columns: self.n_columns,
            n_conditions: self.n_conditions,
            lambda: self.lambda,
            support_density: self.support_density,
            phenotype_support_size: self.phenotype_support_size,
            overlap: self.overlap,
            bias_scale: self.bias_scale,
            label_rule: self.label_noise.map(|noise| LabelRule { noise }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub n_folds: usize,
    pub zero_tol: f64,
    pub min_terms: usize,
    pub top_k: usize,
    pub strength_grid: Vec<f64>,
    pub rng_seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            n_folds: 5,
            zero_tol: 1e-12,
            min_terms: 5,
            top_k: 15,
            strength_grid: vec![3e-3, 1e-2, 3e-2, 1e-1, 3e-1],
            rng_seed: 7,
        }
    }
}

/// Loads the config file, or defaults when no path is given.
pub fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
            toml::from_str(&text)
                .map_err(|e| usage(format!("invalid config {}: {e}", p.display())))
        }
    }
}

/// `--seed` overrides every seed in the document, so one flag pins a run.
pub fn override_seed(cfg: &mut RunConfig, seed: u64) {
    cfg.solver.rng_seed = seed;
    cfg.gen.seed = seed;
    cfg.eval.rng_seed = seed;
}

/// Hash of the effective configuration, for provenance in output manifests.
pub fn config_hash(cfg: &RunConfig) -> String {
    let canonical = toml::to_string(cfg).expect("config serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
