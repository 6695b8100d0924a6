//! Subcommand implementations: generation, fitting, loading inference, and
//! the evaluation reports.

use std::path::Path;

use serde::{Deserialize, Serialize};

use cnmf_core::datagen::generate;
use cnmf_core::evaluation::{
    lambda_sweep, predict_eval, sparsity, top_terms, EvalConfig, FeatureMode,
};
use cnmf_core::solver::{fit, transform};

use crate::config::{config_hash, load_config, override_seed, RunConfig};
use crate::error::{runtime, usage, CliResult};
use crate::formats::{
    default_column_ids, default_condition_names, default_feature_names, fmt_f64, load_model,
    read_labels, read_matrix, read_supports, save_model, save_report, write_labels, write_matrix,
    write_named_matrix, write_named_vector, write_supports, write_text, ModelManifest,
};
use crate::args::{
    EvalCommand, FitArgs, GenArgs, ModeArg, PredictArgs, SparsityArgs, SweepArgs, TopTermsArgs,
    TransformArgs,
};

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))
}

#[derive(Debug, Serialize, Deserialize)]
struct GenManifest {
    kind: String,
    seed: u64,
    config_hash: String,
    n_features: usize,
    n_columns: usize,
    n_conditions: usize,
    lambda: f64,
    has_labels: bool,
}

pub fn cmd_gen(args: &GenArgs) -> CliResult<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        override_seed(&mut cfg, seed);
    }
    let hash = config_hash(&cfg);
    let gen_cfg = cfg.gen.to_gen_config();
    let instance = generate(&gen_cfg, cfg.gen.seed).map_err(usage)?;

    ensure_dir(&args.out)?;
    write_matrix(&args.out.join("X.txt"), &instance.x)?;
    write_supports(&args.out.join("supports.txt"), &instance.supports_true)?;

    let d = gen_cfg.n_features;
    let n = gen_cfg.n_columns;
    let k = gen_cfg.n_conditions;
    let features = default_feature_names(d);
    let conditions = default_condition_names(k);
    let columns = default_column_ids(n);
    write_named_matrix(
        &args.out.join("A_true.tsv"),
        "feature",
        &features,
        &conditions,
        &instance.a_true,
    )?;
    write_named_matrix(
        &args.out.join("W_true.tsv"),
        "condition",
        &conditions,
        &columns,
        &instance.w_true,
    )?;
    write_named_vector(
        &args.out.join("b_true.tsv"),
        "feature",
        "bias",
        &features,
        &instance.b_true,
    )?;
    if let Some(labels) = &instance.labels {
        write_labels(&args.out.join("labels.txt"), labels)?;
    }
    if let Some(theta) = &instance.label_weights {
        let values = ndarray::Array1::from(theta.clone());
        write_named_vector(
            &args.out.join("label_weights.tsv"),
            "condition",
            "weight",
            &conditions,
            &values,
        )?;
    }
    let manifest = GenManifest {
        kind: "gen".into(),
        seed: cfg.gen.seed,
        config_hash: hash,
        n_features: d,
        n_columns: n,
        n_conditions: k,
        lambda: cfg.gen.lambda,
        has_labels: instance.labels.is_some(),
    };
    write_text(
        &args.out.join("manifest.toml"),
        &toml::to_string(&manifest).expect("manifest serializes"),
    )?;
    println!(
        "generated {d}x{n} instance with {k} conditions, {} stored entries{}",
        instance.x.nnz(),
        if instance.labels.is_some() { ", labels" } else { "" }
    );
    Ok(())
}

fn fit_overrides(cfg: &mut RunConfig, args: &FitArgs) {
    if let Some(seed) = args.seed {
        override_seed(cfg, seed);
    }
    if let Some(lambda) = args.lambda {
        cfg.solver.lambda = lambda;
    }
    if let Some(restarts) = args.restarts {
        cfg.solver.n_restarts = restarts;
    }
    if args.no_simplex {
        cfg.solver.simplex_enabled = false;
    }
    if args.deterministic {
        cfg.deterministic = true;
    }
}

pub fn cmd_fit(args: &FitArgs) -> CliResult<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    fit_overrides(&mut cfg, args);
    let hash = config_hash(&cfg);

    let x = read_matrix(&args.x)?;
    let supports = read_supports(&args.supports)?;
    if x.n_columns() == 0 {
        return Err(usage(format!("{}: matrix has no columns", args.x.display())));
    }
    if supports.n_columns() != x.n_columns() {
        return Err(usage(format!(
            "column count mismatch: {} has {} columns, {} has {}",
            args.x.display(),
            x.n_columns(),
            args.supports.display(),
            supports.n_columns()
        )));
    }
    let k = supports.n_conditions();
    let solver_cfg = cfg.solver.to_solver_config(k, cfg.deterministic);
    solver_cfg.validate().map_err(usage)?;

    let (model, report) = fit(&x, &supports, &solver_cfg).map_err(runtime)?;
    let sparsity_report = sparsity(&model, cfg.eval.zero_tol, cfg.eval.min_terms);

    ensure_dir(&args.out)?;
    let manifest = ModelManifest {
        kind: "fit".into(),
        lambda: solver_cfg.lambda,
        simplex_enabled: solver_cfg.simplex_enabled,
        n_features: model.n_features(),
        n_conditions: model.n_conditions(),
        n_columns: model.n_columns(),
        rng_seed: solver_cfg.rng_seed,
        config_hash: hash,
        final_divergence: *report.objective_trace.last().expect("non-empty trace"),
        converged: report.converged,
    };
    save_model(
        &args.out,
        &model,
        &default_feature_names(model.n_features()),
        &default_condition_names(k),
        &default_column_ids(model.n_columns()),
        &manifest,
    )?;
    save_report(&args.out, &report)?;
    println!(
        "final divergence: {}\nmedian nnz: {}",
        fmt_f64(manifest.final_divergence),
        sparsity_report.median_nnz
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct TransformManifest {
    kind: String,
    config_hash: String,
    n_columns: usize,
    used_supports: bool,
}

pub fn cmd_transform(args: &TransformArgs) -> CliResult<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if args.deterministic {
        cfg.deterministic = true;
    }
    let hash = config_hash(&cfg);

    let loaded = load_model(&args.model)?;
    let x = read_matrix(&args.x)?;
    if x.n_features() != loaded.model.n_features() {
        return Err(usage(format!(
            "feature dimension mismatch: {} has {} rows, model expects {}",
            args.x.display(),
            x.n_features(),
            loaded.model.n_features()
        )));
    }
    let supports = match &args.supports {
        None => None,
        Some(path) => {
            let s = read_supports(path)?;
            if s.n_columns() != x.n_columns() {
                return Err(usage(format!(
                    "column count mismatch: {} has {} columns, {} has {}",
                    args.x.display(),
                    x.n_columns(),
                    path.display(),
                    s.n_columns()
                )));
            }
            if s.n_conditions() != loaded.model.n_conditions() {
                return Err(usage(format!(
                    "condition count mismatch: {} declares {}, model has {}",
                    path.display(),
                    s.n_conditions(),
                    loaded.model.n_conditions()
                )));
            }
            Some(s)
        }
    };

    let mut solver_cfg = cfg
        .solver
        .to_solver_config(loaded.model.n_conditions(), cfg.deterministic);
    solver_cfg.lambda = loaded.manifest.lambda;
    solver_cfg.simplex_enabled = loaded.manifest.simplex_enabled;
    solver_cfg.validate().map_err(usage)?;

    let w_new = transform(&x, &loaded.model, supports.as_ref(), &solver_cfg).map_err(runtime)?;

    ensure_dir(&args.out)?;
    write_named_matrix(
        &args.out.join("W.tsv"),
        "condition",
        &loaded.condition_names,
        &default_column_ids(x.n_columns()),
        &w_new,
    )?;
    let manifest = TransformManifest {
        kind: "transform".into(),
        config_hash: hash,
        n_columns: x.n_columns(),
        used_supports: supports.is_some(),
    };
    write_text(
        &args.out.join("manifest.toml"),
        &toml::to_string(&manifest).expect("manifest serializes"),
    )?;
    println!("inferred loadings for {} columns", x.n_columns());
    Ok(())
}

pub fn cmd_eval(cmd: &EvalCommand) -> CliResult<()> {
    match cmd {
        EvalCommand::Sparsity(args) => eval_sparsity(args),
        EvalCommand::Sweep(args) => eval_sweep(args),
        EvalCommand::Predict(args) => eval_predict(args),
        EvalCommand::TopTerms(args) => eval_top_terms(args),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SparsityFile {
    lambda: f64,
    median_nnz: f64,
    third_quartile_nnz: f64,
    min_terms_ok: bool,
    per_column_nnz: Vec<usize>,
}

fn eval_sparsity(args: &SparsityArgs) -> CliResult<()> {
    let cfg = load_config(args.config.as_deref())?;
    let loaded = load_model(&args.model)?;
    let report = sparsity(&loaded.model, cfg.eval.zero_tol, cfg.eval.min_terms);

    println!("condition\tnnz");
    for (name, nnz) in loaded.condition_names.iter().zip(&report.per_column_nnz) {
        println!("{name}\t{nnz}");
    }
    println!(
        "median: {}  third quartile: {}  min_terms_ok: {}",
        report.median_nnz, report.third_quartile_nnz, report.min_terms_ok
    );

    ensure_dir(&args.out)?;
    let file = SparsityFile {
        lambda: report.lambda,
        median_nnz: report.median_nnz,
        third_quartile_nnz: report.third_quartile_nnz,
        min_terms_ok: report.min_terms_ok,
        per_column_nnz: report.per_column_nnz,
    };
    write_text(
        &args.out.join("sparsity.toml"),
        &toml::to_string(&file).expect("report serializes"),
    )
}

fn eval_top_terms(args: &TopTermsArgs) -> CliResult<()> {
    let cfg = load_config(args.config.as_deref())?;
    let loaded = load_model(&args.model)?;
    let k = args.top_k.unwrap_or(cfg.eval.top_k);
    if k > loaded.model.n_features() {
        eprintln!(
            "warning: top-k {k} exceeds the {} features; truncating",
            loaded.model.n_features()
        );
    }
    let terms = top_terms(&loaded.model, &loaded.feature_names, k).map_err(usage)?;

    let mut out = String::from("condition\trank\tterm\tweight\n");
    for (cond, list) in loaded.condition_names.iter().zip(&terms) {
        println!("{cond}:");
        for (rank, (term, weight)) in list.iter().enumerate() {
            println!("  {:>2}. {term} ({})", rank + 1, fmt_f64(*weight));
            out.push_str(&format!(
                "{cond}\t{}\t{term}\t{}\n",
                rank + 1,
                fmt_f64(*weight)
            ));
        }
    }
    ensure_dir(&args.out)?;
    write_text(&args.out.join("top_terms.tsv"), &out)
}

fn eval_sweep(args: &SweepArgs) -> CliResult<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        override_seed(&mut cfg, seed);
    }
    if let Some(restarts) = args.restarts {
        cfg.solver.n_restarts = restarts;
    }
    if args.no_simplex {
        cfg.solver.simplex_enabled = false;
    }
    if args.deterministic {
        cfg.deterministic = true;
    }

    let x = read_matrix(&args.x)?;
    let supports = read_supports(&args.supports)?;
    if supports.n_columns() != x.n_columns() {
        return Err(usage("column count mismatch between matrix and supports"));
    }
    let solver_cfg = cfg
        .solver
        .to_solver_config(supports.n_conditions(), cfg.deterministic);
    solver_cfg.validate().map_err(usage)?;

    let rows = lambda_sweep(
        &x,
        &supports,
        &args.lambdas,
        &solver_cfg,
        cfg.eval.zero_tol,
        cfg.eval.min_terms,
    )
    .map_err(usage)?;

    let mut out = String::from("lambda\tdivergence\tmedian_nnz\tthird_quartile_nnz\tmin_terms_ok\n");
    println!("lambda\tdivergence\tmedian_nnz");
    let mut successes = 0usize;
    for (lambda, row) in &rows {
        match row {
            Ok(row) => {
                successes += 1;
                println!("{lambda}\t{}\t{}", fmt_f64(row.divergence), row.sparsity.median_nnz);
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\n",
                    fmt_f64(*lambda),
                    fmt_f64(row.divergence),
                    row.sparsity.median_nnz,
                    row.sparsity.third_quartile_nnz,
                    row.sparsity.min_terms_ok
                ));
            }
            Err(err) => eprintln!("lambda {lambda}: fit failed: {err}"),
        }
    }
    if successes == 0 {
        return Err(runtime("every lambda in the sweep failed"));
    }
    ensure_dir(&args.out)?;
    write_text(&args.out.join("sweep.tsv"), &out)
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictFile {
    feature_mode: String,
    mean_auroc: f64,
    std_auroc: f64,
    mean_sensitivity: f64,
    std_sensitivity: f64,
    mean_specificity: f64,
    std_specificity: f64,
    nonzero_raw_feature_fraction: Option<f64>,
    folds: Vec<FoldFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FoldFile {
    auroc: f64,
    sensitivity: f64,
    specificity: f64,
    chosen_strength: f64,
}

fn eval_predict(args: &PredictArgs) -> CliResult<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        override_seed(&mut cfg, seed);
    }
    if let Some(restarts) = args.restarts {
        cfg.solver.n_restarts = restarts;
    }
    if args.no_simplex {
        cfg.solver.simplex_enabled = false;
    }
    if args.deterministic {
        cfg.deterministic = true;
    }

    let x = read_matrix(&args.x)?;
    let supports = read_supports(&args.supports)?;
    let labels = read_labels(&args.labels)?;
    if supports.n_columns() != x.n_columns() {
        return Err(usage("column count mismatch between matrix and supports"));
    }
    if labels.len() != x.n_columns() {
        return Err(usage(format!(
            "label count {} does not match the {} matrix columns",
            labels.len(),
            x.n_columns()
        )));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(usage("labels contain a single class"));
    }
    let mode = match args.mode {
        ModeArg::Loadings => FeatureMode::LoadingsOnly,
        ModeArg::Raw => FeatureMode::RawOnly,
        ModeArg::Augmented => FeatureMode::Augmented,
    };
    let eval_cfg = EvalConfig {
        solver: cfg
            .solver
            .to_solver_config(supports.n_conditions(), cfg.deterministic),
        n_folds: cfg.eval.n_folds,
        strength_grid: cfg.eval.strength_grid.clone(),
        rng_seed: cfg.eval.rng_seed,
    };
    eval_cfg.solver.validate().map_err(usage)?;

    let report = predict_eval(&x, &supports, &labels, mode, &eval_cfg).map_err(runtime)?;

    println!("fold\tauroc\tsensitivity\tspecificity\tstrength");
    for (i, fold) in report.per_fold.iter().enumerate() {
        println!(
            "{}\t{:.4}\t{:.4}\t{:.4}\t{}",
            i + 1,
            fold.auroc,
            fold.sensitivity,
            fold.specificity,
            fold.chosen_strength
        );
    }
    println!(
        "mean auroc {:.4} ({:.4})  sensitivity {:.4} ({:.4})  specificity {:.4} ({:.4})",
        report.mean_auroc,
        report.std_auroc,
        report.mean_sensitivity,
        report.std_sensitivity,
        report.mean_specificity,
        report.std_specificity
    );
    if let Some(fraction) = report.nonzero_raw_feature_fraction {
        println!("nonzero raw feature fraction: {fraction:.4}");
    }

    ensure_dir(&args.out)?;
    let file = PredictFile {
        feature_mode: report.feature_mode.as_str().into(),
        mean_auroc: report.mean_auroc,
        std_auroc: report.std_auroc,
        mean_sensitivity: report.mean_sensitivity,
        std_sensitivity: report.std_sensitivity,
        mean_specificity: report.mean_specificity,
        std_specificity: report.std_specificity,
        nonzero_raw_feature_fraction: report.nonzero_raw_feature_fraction,
        folds: report
            .per_fold
            .iter()
            .map(|f| FoldFile {
                auroc: f.auroc,
                sensitivity: f.sensitivity,
                specificity: f.specificity,
                chosen_strength: f.chosen_strength,
            })
            .collect(),
    };
    write_text(
        &args.out.join("predict.toml"),
        &toml::to_string(&file).expect("report serializes"),
    )
}
