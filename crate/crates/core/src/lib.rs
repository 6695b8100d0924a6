//! Constrained non-negative matrix factorization for count data.
//!
//! Fits the factorization `X ≈ AW + b·1ᵀ` under the I-divergence, with three
//! constraint families that make the factors sparse and identifiable:
//! per-column support sets on the loadings `W`, a `[0, 1]` box on `W`, and a
//! scaled-simplex constraint on the columns of `A`. Companion modules provide
//! a synthetic-instance generator with planted ground truth, sparsity and
//! sweep diagnostics, and a stratified cross-validation prediction harness.
//!
//! All numeric code is generic over the scalar type via [`Scalar`]; the
//! aliases below fix `f64` (the precision used by the command-line pipeline)
//! and `f32`.

pub mod datagen;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod objective;
pub mod projections;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type CountMatrixF64 = model::CountMatrix<f64>;
pub type SupportSets = model::SupportSets;
pub type FactorModelF64 = model::FactorModel<f64>;
pub type SolveReportF64 = model::SolveReport<f64>;
pub type SolverConfigF64 = solver::SolverConfig<f64>;
pub type GenConfigF64 = datagen::GenConfig<f64>;
pub type PlantedInstanceF64 = datagen::PlantedInstance<f64>;
pub type EvalConfigF64 = evaluation::EvalConfig<f64>;

pub type CountMatrixF32 = model::CountMatrix<f32>;
pub type FactorModelF32 = model::FactorModel<f32>;
pub type SolverConfigF32 = solver::SolverConfig<f32>;
pub type GenConfigF32 = datagen::GenConfig<f32>;
