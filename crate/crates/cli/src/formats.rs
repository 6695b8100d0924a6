//! Plain-text file formats.
//!
//! * count matrix — header `%%cnmf-matrix d N nnz`, then one `row col value`
//!   line per stored entry, 1-based indices, whitespace separated;
//! * supports — header `%%cnmf-supports N K`, then N lines of 1-based
//!   condition indices, a blank line meaning the empty set;
//! * labels — header `%%cnmf-labels N`, then N lines of `0`/`1`;
//! * factors — tab-separated tables with a header row of condition or
//!   column names and a leading row-name column.
//!
//! Floats are serialized with 17 significant digits, so write → read →
//! write round-trips are byte-identical for `f64` payloads.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use cnmf_core::model::{FactorModel, SolveReport};
use cnmf_core::{CountMatrixF64, FactorModelF64, SupportSets};

use crate::error::{runtime, usage, CliError, CliResult};

pub const MATRIX_TAG: &str = "%%cnmf-matrix";
pub const SUPPORTS_TAG: &str = "%%cnmf-supports";
pub const LABELS_TAG: &str = "%%cnmf-labels";

/// 17 significant digits: exact round-trip for double precision.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str, ctx: &FileCtx, line: usize) -> CliResult<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| ctx.err(line, format!("cannot parse number `{s}`")))?;
    if !v.is_finite() {
        return Err(ctx.err(line, format!("non-finite value `{s}`")));
    }
    Ok(v)
}

fn parse_count(s: &str, what: &str, ctx: &FileCtx, line: usize) -> CliResult<usize> {
    s.parse()
        .map_err(|_| ctx.err(line, format!("cannot parse {what} `{s}`")))
}

/// Parses a 1-based index and converts to 0-based.
fn parse_index(s: &str, what: &str, limit: usize, ctx: &FileCtx, line: usize) -> CliResult<usize> {
    let raw: usize = s
        .parse()
        .map_err(|_| ctx.err(line, format!("cannot parse {what} `{s}`")))?;
    if raw == 0 || raw > limit {
        return Err(ctx.err(
            line,
            format!("{what} {raw} out of range 1..={limit}"),
        ));
    }
    Ok(raw - 1)
}

struct FileCtx {
    name: String,
}

impl FileCtx {
    fn new(path: &Path) -> Self {
        FileCtx {
            name: path.display().to_string(),
        }
    }

    fn err(&self, line: usize, msg: impl std::fmt::Display) -> CliError {
        usage(format!("{}:{line}: {msg}", self.name))
    }
}

fn read_text(path: &Path) -> CliResult<(String, FileCtx)> {
    let ctx = FileCtx::new(path);
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", ctx.name)))?;
    Ok((text, ctx))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text)
        .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn read_matrix(path: &Path) -> CliResult<CountMatrixF64> {
    let (text, ctx) = read_text(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| ctx.err(1, "empty file, expected header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != MATRIX_TAG {
        return Err(ctx.err(1, format!("expected header `{MATRIX_TAG} d N nnz`")));
    }
    let d = parse_count(fields[1], "feature count", &ctx, 1)?;
    let n = parse_count(fields[2], "column count", &ctx, 1)?;
    let nnz = parse_count(fields[3], "entry count", &ctx, 1)?;

    let mut triplets = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        let (idx, line) = lines
            .next()
            .ok_or_else(|| ctx.err(nnz + 1, format!("expected {nnz} entries, file ended early")))?;
        let lineno = idx + 1;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(ctx.err(lineno, format!("expected `row col value`, got {} fields", f.len())));
        }
        let i = parse_index(f[0], "row index", d, &ctx, lineno)?;
        let j = parse_index(f[1], "column index", n, &ctx, lineno)?;
        let v = parse_f64(f[2], &ctx, lineno)?;
        triplets.push((i, j, v));
    }
    for (idx, line) in lines {
        if !line.trim().is_empty() {
            return Err(ctx.err(idx + 1, "unexpected content after the declared entries"));
        }
    }
    CountMatrixF64::from_triplets(d, n, triplets).map_err(|e| usage(format!("{}: {e}", ctx.name)))
}

pub fn write_matrix(path: &Path, x: &CountMatrixF64) -> CliResult<()> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{MATRIX_TAG} {} {} {}",
        x.n_features(),
        x.n_columns(),
        x.nnz()
    );
    for (i, j, v) in x.iter() {
        let _ = writeln!(out, "{} {} {}", i + 1, j + 1, fmt_f64(v));
    }
    write_text(path, &out)
}

pub fn read_supports(path: &Path) -> CliResult<SupportSets> {
    let (text, ctx) = read_text(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| ctx.err(1, "empty file, expected header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 || fields[0] != SUPPORTS_TAG {
        return Err(ctx.err(1, format!("expected header `{SUPPORTS_TAG} N K`")));
    }
    let n = parse_count(fields[1], "column count", &ctx, 1)?;
    let k = parse_count(fields[2], "condition count", &ctx, 1)?;

    let body: Vec<&str> = lines.collect();
    if body.len() != n {
        return Err(ctx.err(
            body.len() + 1,
            format!("expected {n} support lines, found {}", body.len()),
        ));
    }
    let mut sets = Vec::with_capacity(n);
    for (offset, line) in body.iter().enumerate() {
        let lineno = offset + 2;
        let mut set = Vec::new();
        for token in line.split_whitespace() {
            set.push(parse_index(token, "condition index", k, &ctx, lineno)?);
        }
        sets.push(set);
    }
    SupportSets::new(sets, k).map_err(|e| usage(format!("{}: {e}", ctx.name)))
}

pub fn write_supports(path: &Path, supports: &SupportSets) -> CliResult<()> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{SUPPORTS_TAG} {} {}",
        supports.n_columns(),
        supports.n_conditions()
    );
    for set in supports.iter() {
        let line: Vec<String> = set.iter().map(|&k| (k + 1).to_string()).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    write_text(path, &out)
}

pub fn read_labels(path: &Path) -> CliResult<Vec<bool>> {
    let (text, ctx) = read_text(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| ctx.err(1, "empty file, expected header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 2 || fields[0] != LABELS_TAG {
        return Err(ctx.err(1, format!("expected header `{LABELS_TAG} N`")));
    }
    let n = parse_count(fields[1], "label count", &ctx, 1)?;
    let body: Vec<&str> = lines.collect();
    if body.len() != n {
        return Err(ctx.err(
            body.len() + 1,
            format!("expected {n} labels, found {}", body.len()),
        ));
    }
    let mut labels = Vec::with_capacity(n);
    for (offset, line) in body.iter().enumerate() {
        match line.trim() {
            "0" => labels.push(false),
            "1" => labels.push(true),
            other => {
                return Err(ctx.err(offset + 2, format!("expected 0 or 1, got `{other}`")));
            }
        }
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[bool]) -> CliResult<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{LABELS_TAG} {}", labels.len());
    for &l in labels {
        let _ = writeln!(out, "{}", if l { 1 } else { 0 });
    }
    write_text(path, &out)
}

/// Tab-separated matrix with named rows and columns. The first header cell
/// names the row-label column.
pub fn write_named_matrix(
    path: &Path,
    row_header: &str,
    row_names: &[String],
    col_names: &[String],
    values: &Array2<f64>,
) -> CliResult<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{row_header}\t{}", col_names.join("\t"));
    for (i, name) in row_names.iter().enumerate() {
        let row: Vec<String> = (0..col_names.len()).map(|j| fmt_f64(values[[i, j]])).collect();
        let _ = writeln!(out, "{name}\t{}", row.join("\t"));
    }
    write_text(path, &out)
}

pub struct NamedMatrix {
    pub row_names: Vec<String>,
    pub col_names: Vec<String>,
    pub values: Array2<f64>,
}

pub fn read_named_matrix(path: &Path) -> CliResult<NamedMatrix> {
    let (text, ctx) = read_text(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| ctx.err(1, "empty file, expected header row"))?;
    let mut header_cells = header.split('\t');
    let _row_header = header_cells
        .next()
        .ok_or_else(|| ctx.err(1, "missing row-label header"))?;
    let col_names: Vec<String> = header_cells.map(str::to_string).collect();
    if col_names.is_empty() {
        return Err(ctx.err(1, "table has no value columns"));
    }

    let mut row_names = Vec::new();
    let mut data = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != col_names.len() + 1 {
            return Err(ctx.err(
                lineno,
                format!("expected {} cells, got {}", col_names.len() + 1, cells.len()),
            ));
        }
        row_names.push(cells[0].to_string());
        for cell in &cells[1..] {
            data.push(parse_f64(cell, &ctx, lineno)?);
        }
    }
    let values = Array2::from_shape_vec((row_names.len(), col_names.len()), data)
        .map_err(|e| usage(format!("{}: {e}", ctx.name)))?;
    Ok(NamedMatrix {
        row_names,
        col_names,
        values,
    })
}

pub fn write_named_vector(
    path: &Path,
    row_header: &str,
    value_header: &str,
    names: &[String],
    values: &Array1<f64>,
) -> CliResult<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{row_header}\t{value_header}");
    for (name, v) in names.iter().zip(values.iter()) {
        let _ = writeln!(out, "{name}\t{}", fmt_f64(*v));
    }
    write_text(path, &out)
}

pub fn read_named_vector(path: &Path) -> CliResult<(Vec<String>, Array1<f64>)> {
    let table = read_named_matrix(path)?;
    if table.col_names.len() != 1 {
        return Err(usage(format!(
            "{}: expected a single value column, got {}",
            path.display(),
            table.col_names.len()
        )));
    }
    let values = Array1::from_iter(table.values.column(0).iter().copied());
    Ok((table.row_names, values))
}

/// Metadata stored next to the factor tables of a fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelManifest {
    pub kind: String,
    pub lambda: f64,
    pub simplex_enabled: bool,
    pub n_features: usize,
    pub n_conditions: usize,
    pub n_columns: usize,
    pub rng_seed: u64,
    pub config_hash: String,
    pub final_divergence: f64,
    pub converged: bool,
}

/// Serializable mirror of the solver report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportFile {
    pub outer_iterations: usize,
    pub selected_restart: usize,
    pub converged: bool,
    pub feasibility_max_violation: f64,
    pub restart_objectives: Vec<f64>,
    pub objective_trace: Vec<f64>,
}

impl ReportFile {
    pub fn from_report(report: &SolveReport<f64>) -> Self {
        ReportFile {
            outer_iterations: report.outer_iterations,
            selected_restart: report.selected_restart,
            converged: report.converged,
            feasibility_max_violation: report.feasibility_max_violation,
            restart_objectives: report.restart_objectives.clone(),
            objective_trace: report.objective_trace.clone(),
        }
    }
}

pub struct ModelFiles {
    pub model: FactorModelF64,
    pub feature_names: Vec<String>,
    pub condition_names: Vec<String>,
    pub manifest: ModelManifest,
}

pub fn save_model(
    dir: &Path,
    model: &FactorModelF64,
    feature_names: &[String],
    condition_names: &[String],
    column_ids: &[String],
    manifest: &ModelManifest,
) -> CliResult<()> {
    write_named_matrix(&dir.join("A.tsv"), "feature", feature_names, condition_names, model.a())?;
    write_named_matrix(&dir.join("W.tsv"), "condition", condition_names, column_ids, model.w())?;
    write_named_vector(&dir.join("b.tsv"), "feature", "bias", feature_names, model.b())?;
    let text = toml::to_string(manifest).expect("manifest serializes");
    write_text(&dir.join("manifest.toml"), &text)
}

pub fn load_model(dir: &Path) -> CliResult<ModelFiles> {
    let manifest_path = dir.join("manifest.toml");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| usage(format!("cannot read {}: {e}", manifest_path.display())))?;
    let manifest: ModelManifest = toml::from_str(&text)
        .map_err(|e| usage(format!("invalid manifest {}: {e}", manifest_path.display())))?;

    let a = read_named_matrix(&dir.join("A.tsv"))?;
    let w = read_named_matrix(&dir.join("W.tsv"))?;
    let (b_names, b) = read_named_vector(&dir.join("b.tsv"))?;

    if a.values.dim() != (manifest.n_features, manifest.n_conditions) {
        return Err(usage(format!(
            "{}: A is {:?}, manifest says {}x{}",
            dir.display(),
            a.values.dim(),
            manifest.n_features,
            manifest.n_conditions
        )));
    }
    if w.values.dim() != (manifest.n_conditions, manifest.n_columns) {
        return Err(usage(format!(
            "{}: W is {:?}, manifest says {}x{}",
            dir.display(),
            w.values.dim(),
            manifest.n_conditions,
            manifest.n_columns
        )));
    }
    if b_names != a.row_names {
        return Err(usage(format!(
            "{}: feature names of A.tsv and b.tsv disagree",
            dir.display()
        )));
    }

    let model = FactorModel::new(
        a.values,
        w.values,
        b,
        manifest.lambda,
        manifest.simplex_enabled,
    )
    .map_err(|e| usage(format!("{}: {e}", dir.display())))?;
    Ok(ModelFiles {
        model,
        feature_names: a.row_names,
        condition_names: a.col_names,
        manifest,
    })
}

pub fn save_report(dir: &Path, report: &SolveReport<f64>) -> CliResult<()> {
    let text = toml::to_string(&ReportFile::from_report(report)).expect("report serializes");
    write_text(&dir.join("report.toml"), &text)
}

pub fn default_feature_names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("f{}", i + 1)).collect()
}

pub fn default_condition_names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("cond{}", i + 1)).collect()
}

pub fn default_column_ids(n: usize) -> Vec<String> {
    (0..n).map(|j| format!("col{}", j + 1)).collect()
}
