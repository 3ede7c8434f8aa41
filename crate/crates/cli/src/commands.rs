use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use miprune_core::baselines::{
    attention_select, mi_attention_select, random_select, similarity_select, AttentionInput,
    AttentionMode,
};
use miprune_core::distributions::SelfPmiKernel;
use miprune_core::infotheory::{run_verification_suite, SuiteConfig};
use miprune_core::latency::{run_bench, BenchConfig, BenchMethod};
use miprune_core::npy::decode;
use miprune_core::scoring::relevance_scores;
use miprune_core::selection::effective_lambda;
use miprune_core::synth::{run_comparison, SceneSpec, METHODS};
use miprune_core::{
    fast_select_modular, greedy_select, row_normalize, EmbeddingMatrix, MatrixKind,
    NormalizedMatrix, PruneConfig, PruneError, SelectionResult,
};
use serde::{Deserialize, Serialize};

use crate::manifest::RunManifest;
use crate::{
    BenchArgs, MaskArgs, MaskFormat, MethodArg, ScoreArgs, SelectArgs, SynthArgs, VerifyArgs,
    EXIT_FAILURE, EXIT_USAGE,
};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn failure(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_FAILURE,
            message: message.into(),
        }
    }
}

impl From<PruneError> for CliError {
    fn from(e: PruneError) -> Self {
        Self::failure(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::failure(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::failure(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

fn load(path: &Path, kind: MatrixKind, manifest: &mut RunManifest) -> Result<EmbeddingMatrix, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::failure(format!("{}: {e}", path.display())))?;
    manifest.add_input(path, &bytes);
    decode(&bytes, kind).map_err(|e| CliError::failure(format!("{}: {e}", path.display())))
}

fn normalized(m: &EmbeddingMatrix, path: &Path) -> Result<NormalizedMatrix, CliError> {
    row_normalize(m).map_err(|e| CliError::failure(format!("{}: {e}", path.display())))
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> CliResult {
    match out {
        Some(path) => fs::write(path, bytes)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> CliResult {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    write_output(out, text.as_bytes())
}

fn write_csv<T: Serialize>(out: Option<&Path>, rows: &[T]) -> CliResult {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::failure(e.to_string()))?;
    write_output(out, &bytes)
}

fn finish(mut manifest: RunManifest, start: Instant, out: Option<&Path>) -> CliResult {
    manifest.wall_time_ns = start.elapsed().as_nanos().min(u64::MAX as u128) as u64;
    manifest.emit(out)?;
    Ok(())
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn validated(cfg: PruneConfig) -> Result<PruneConfig, CliError> {
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(cfg)
}

#[derive(Debug, Serialize)]
struct Timing {
    score: u64,
    select: u64,
}

#[derive(Debug, Serialize)]
struct SelectOutput<'a> {
    kept_indices: &'a [usize],
    step_scores: &'a [f64],
    method: &'a str,
    n_visual: usize,
    config: &'a PruneConfig,
    warnings: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    timing_ns: Option<Timing>,
}

fn load_attention(
    args: &SelectArgs,
    manifest: &mut RunManifest,
) -> Result<AttentionInput, CliError> {
    let path = args.attention.as_ref().ok_or_else(|| {
        CliError::usage("attention-based methods need --attention PATH")
    })?;
    let a = load(path, MatrixKind::Attention, manifest)?;
    Ok(AttentionInput::new(a, args.cls_index)?)
}

pub fn select(args: SelectArgs) -> CliResult {
    let start = Instant::now();
    let cfg = validated(args.config.config())?;
    if args.method == MethodArg::Fast && cfg.lambda != 1.0 {
        return Err(CliError::usage(format!(
            "--method fast needs --lambda 1 (got {}); use --method greedy",
            cfg.lambda
        )));
    }
    let mut manifest = RunManifest::new("select", serde_json::to_value(&cfg).unwrap());
    let vm = load(&args.visual, MatrixKind::Visual, &mut manifest)?;
    let tm = load(&args.text, MatrixKind::Textual, &mut manifest)?;
    let v = normalized(&vm, &args.visual)?;
    let t = normalized(&tm, &args.text)?;

    let result: SelectionResult = match args.method {
        MethodArg::Greedy => greedy_select(&v, &t, &cfg)?,
        MethodArg::Fast => fast_select_modular(&v, &t, &cfg)?,
        MethodArg::Random => random_select(v.rows(), cfg.budget, cfg.seed)?,
        MethodArg::Similarity => similarity_select(&v, &t, cfg.tau, cfg.budget)?,
        MethodArg::Attention => {
            let attn = load_attention(&args, &mut manifest)?;
            let mode = if attn.cls_index().is_some() {
                AttentionMode::ClsRow
            } else {
                AttentionMode::ColumnSum
            };
            attention_select(&attn, cfg.budget, mode)?
        }
        MethodArg::MiAttention => {
            let attn = load_attention(&args, &mut manifest)?;
            mi_attention_select(&v, &t, &attn, &cfg, args.round1_fraction)?
        }
    };
    warn_all(&result.warnings);

    let output = SelectOutput {
        kept_indices: &result.kept,
        step_scores: &result.step_scores,
        method: &result.method,
        n_visual: v.rows(),
        config: &cfg,
        warnings: &result.warnings,
        timing_ns: args.timing.then_some(Timing {
            score: result.score_ns,
            select: result.select_ns,
        }),
    };
    write_json(args.out.as_deref(), &output)?;
    finish(manifest, start, args.out.as_deref())
}

#[derive(Debug, Serialize)]
struct ScoreOutput<'a> {
    n_visual: usize,
    n_text: usize,
    lambda_effective: f64,
    /// Crossmodal relevance of every visual token.
    cross_scores: &'a [f64],
    /// Largest self PMI of each token against the other kept tokens;
    /// present only when redundancy is active.
    #[serde(skip_serializing_if = "Option::is_none")]
    self_max: Option<Vec<f64>>,
    kept_indices: &'a [usize],
    step_scores: &'a [f64],
    config: &'a PruneConfig,
    warnings: &'a [String],
}

pub fn score(args: ScoreArgs) -> CliResult {
    let start = Instant::now();
    let cfg = validated(args.config.config())?;
    let mut manifest = RunManifest::new("score", serde_json::to_value(&cfg).unwrap());
    let vm = load(&args.visual, MatrixKind::Visual, &mut manifest)?;
    let tm = load(&args.text, MatrixKind::Textual, &mut manifest)?;
    let v = normalized(&vm, &args.visual)?;
    let t = normalized(&tm, &args.text)?;

    let cross = relevance_scores(&v, &t, &cfg)?;
    let (lambda, _) = effective_lambda(&cfg, t.rows());
    let result = greedy_select(&v, &t, &cfg)?;
    warn_all(&result.warnings);

    let self_max = if lambda < 1.0 {
        let kernel = SelfPmiKernel::new(
            &v,
            cfg.effective_self_tau(),
            cfg.normalization,
            cfg.mask_diagonal,
        )?;
        Some(
            (0..v.rows())
                .map(|i| {
                    result
                        .kept
                        .iter()
                        .filter(|&&s| s != i)
                        .map(|&s| kernel.pmi(i, s))
                        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))))
                        .unwrap_or(0.0)
                })
                .collect(),
        )
    } else {
        None
    };

    let output = ScoreOutput {
        n_visual: v.rows(),
        n_text: t.rows(),
        lambda_effective: lambda,
        cross_scores: &cross.values,
        self_max,
        kept_indices: &result.kept,
        step_scores: &result.step_scores,
        config: &cfg,
        warnings: &result.warnings,
    };
    write_json(args.out.as_deref(), &output)?;
    finish(manifest, start, args.out.as_deref())
}

pub fn bench(args: BenchArgs) -> CliResult {
    let start = Instant::now();
    let methods = args
        .methods
        .iter()
        .map(|m| m.parse::<BenchMethod>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::usage(e.to_string()))?;
    if args.sizes.contains(&0) || args.budgets.contains(&0) {
        return Err(CliError::usage("sizes and budgets must be ≥ 1"));
    }
    let cfg = BenchConfig {
        sizes: args.sizes.clone(),
        budgets: args.budgets.clone(),
        methods,
        repeats: args.repeats as usize,
        warmup: args.warmup,
        seed: args.seed,
        ..BenchConfig::default()
    };
    let manifest = RunManifest::new(
        "bench",
        serde_json::json!({
            "sizes": cfg.sizes,
            "budgets": cfg.budgets,
            "methods": args.methods,
            "repeats": cfg.repeats,
            "warmup": cfg.warmup,
            "seed": cfg.seed,
            "dim": cfg.dim,
            "n_text": cfg.n_text,
        }),
    );
    let rows = run_bench(&cfg)?;
    write_csv(args.out.as_deref(), &rows)?;
    finish(manifest, start, args.out.as_deref())
}

pub fn verify(args: VerifyArgs) -> CliResult {
    let start = Instant::now();
    let manifest = RunManifest::new(
        "verify",
        serde_json::json!({
            "trials": args.trials,
            "seed": args.seed,
            "inject_fault": args.inject_fault,
        }),
    );
    let report = run_verification_suite(SuiteConfig {
        seed: args.seed,
        trials: args.trials,
        inject_fault: args.inject_fault,
    })?;
    let passed = report.passed();
    write_json(
        args.out.as_deref(),
        &serde_json::json!({ "passed": passed, "report": report }),
    )?;
    finish(manifest, start, args.out.as_deref())?;
    match report.failures.first() {
        None => Ok(()),
        Some(f) => Err(CliError::failure(format!(
            "{} identity violation(s); first in {} trial {}: {}",
            report.failures.len(),
            f.suite,
            f.trial,
            f.detail
        ))),
    }
}

#[derive(Debug, Deserialize)]
struct KeptFile {
    kept_indices: Vec<usize>,
    n_visual: usize,
}

pub fn mask(args: MaskArgs) -> CliResult {
    let start = Instant::now();
    let (h, w) = args.grid;
    let mut manifest = RunManifest::new(
        "mask",
        serde_json::json!({
            "grid": [h, w],
            "format": format!("{:?}", args.format).to_lowercase(),
        }),
    );
    let bytes = fs::read(&args.kept)
        .map_err(|e| CliError::failure(format!("{}: {e}", args.kept.display())))?;
    manifest.add_input(&args.kept, &bytes);
    let kept: KeptFile = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::failure(format!("{}: {e}", args.kept.display())))?;
    if h * w != kept.n_visual {
        return Err(CliError::usage(format!(
            "grid {h}x{w} has {} cells but the selection covers {} tokens",
            h * w,
            kept.n_visual
        )));
    }
    let mut cells = vec![0u8; h * w];
    for &i in &kept.kept_indices {
        if i >= cells.len() {
            return Err(PruneError::Index {
                index: i,
                len: cells.len(),
            }
            .into());
        }
        cells[i] = 255;
    }
    match args.format {
        MaskFormat::Json => {
            let rows: Vec<Vec<u8>> = cells
                .chunks(w)
                .map(|r| r.iter().map(|&c| u8::from(c > 0)).collect())
                .collect();
            let text = serde_json::to_string(&serde_json::json!({ "grid": [h, w], "mask": rows }))
                .expect("mask serializes");
            write_output(args.out.as_deref(), (text + "\n").as_bytes())?;
        }
        MaskFormat::Pgm => {
            let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
            out.extend_from_slice(&cells);
            write_output(args.out.as_deref(), &out)?;
        }
    }
    finish(manifest, start, args.out.as_deref())
}

pub fn synth(args: SynthArgs) -> CliResult {
    let start = Instant::now();
    let spec = SceneSpec {
        n_visual: args.n_visual,
        n_text: args.n_text,
        dim: args.dim,
        n_planted: args.n_planted,
        n_background_clusters: args.n_background_clusters,
        cluster_spread: args.cluster_spread,
        distractor_fraction: args.distractor_fraction,
        seed: args.seed,
    };
    spec.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let methods: Vec<String> = args
        .methods
        .clone()
        .unwrap_or_else(|| METHODS.iter().map(|m| m.to_string()).collect());
    if let Some(m) = methods.iter().find(|m| !METHODS.contains(&m.as_str())) {
        return Err(CliError::usage(format!(
            "unknown method {m:?}; expected one of {}",
            METHODS.join(", ")
        )));
    }
    if args.budgets.contains(&0) {
        return Err(CliError::usage("budgets must be ≥ 1"));
    }
    let manifest = RunManifest::new(
        "synth",
        serde_json::json!({
            "spec": spec,
            "budgets": args.budgets,
            "methods": methods,
            "omit_timing": args.omit_timing,
        }),
    );
    let names: Vec<&str> = methods.iter().map(String::as_str).collect();
    let mut rows = run_comparison(&spec, &args.budgets, &names)?;
    if args.omit_timing {
        rows.iter_mut().for_each(|r| r.wall_time_ns = 0);
    }
    write_csv(args.out.as_deref(), &rows)?;
    finish(manifest, start, args.out.as_deref())
}
