use std::fs;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;

use summa::decomposition::RecoveryOptions;
use summa::ensemble::evaluate_scores;
use summa::pipeline::{infer_ranks, InferOptions, Inference};
use summa::ranking::{rank_transform, LabelVector, RankMatrix, ScoreMatrix, TiePolicy};
use summa::simulation::{separation_for_auroc, simulate_ensemble, SimulationConfig};
use summa::sweep::{run_sweep, summarize, SweepAxis, SweepConfig};
use summa::SummaError;

use crate::io::{read_labels, read_method_table, write_json, write_table, Cell, Format, Table};
use crate::manifest::{digest_file, ManifestBuilder};
use crate::{Axis, Cli, Command, EnsembleArgs, EvaluateArgs, InferArgs, RecoveryArgs, SimulateArgs, SweepArgs, Ties};

struct RunContext {
    seed: Option<u64>,
    dir: PathBuf,
    format: Format,
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = RunContext { seed: cli.seed, dir: cli.output_dir, format: cli.format };
    fs::create_dir_all(&ctx.dir).with_context(|| format!("creating {}", ctx.dir.display()))?;
    match cli.command {
        Command::Simulate(args) => simulate(&ctx, &args),
        Command::Infer(args) => infer(&ctx, &args),
        Command::Evaluate(args) => evaluate(&ctx, &args),
        Command::Sweep(args) => sweep(&ctx, &args),
    }
}

fn simulation_config(e: &EnsembleArgs, seed: u64) -> SimulationConfig {
    SimulationConfig {
        n_methods: e.methods,
        n_samples: e.samples,
        prevalence: e.rho,
        auroc_low: e.auroc_low,
        auroc_high: e.auroc_high,
        seed,
    }
}

fn recovery_options(r: &RecoveryArgs) -> Result<RecoveryOptions> {
    if !(r.tol >= 0.0 && r.tol.is_finite()) {
        bail!("--tol must be a nonnegative number");
    }
    if r.max_iter == 0 {
        bail!("--max-iter must be positive");
    }
    Ok(RecoveryOptions::default().with_tol(r.tol).with_max_iter(r.max_iter))
}

fn simulate(ctx: &RunContext, args: &SimulateArgs) -> Result<()> {
    let manifest = ManifestBuilder::start("simulate");
    let seed = ctx.seed.ok_or_else(|| anyhow!("simulate requires --seed"))?;
    let config = simulation_config(&args.ensemble, seed);
    let data = simulate_ensemble(&config)?;

    let mut scores = Table::new(std::iter::once("sample_id".to_string()).chain(data.scores.method_ids().iter().cloned()));
    for (k, id) in data.scores.sample_ids().iter().enumerate() {
        let mut row: Vec<Cell> = vec![id.as_str().into()];
        row.extend(data.scores.rows().map(|r| Cell::Float(r[k])));
        scores.push(row);
    }
    let mut labels = Table::new(["sample_id", "label"]);
    for (id, &y) in data.scores.sample_ids().iter().zip(data.labels.labels()) {
        labels.push(vec![id.as_str().into(), y.into()]);
    }
    let mut truth = Table::new(["method_id", "true_auroc", "separation"]);
    for (id, &a) in data.scores.method_ids().iter().zip(&data.true_aurocs) {
        truth.push(vec![id.as_str().into(), a.into(), separation_for_auroc(a)?.into()]);
    }

    let outputs = vec![
        write_table(&ctx.dir, "scores", &scores, ctx.format)?,
        write_table(&ctx.dir, "labels", &labels, ctx.format)?,
        write_table(&ctx.dir, "true_auroc", &truth, ctx.format)?,
    ];
    manifest.finish(&ctx.dir, json!({ "simulation": config, "format": ctx.format }), Some(seed), vec![], &outputs)
}

fn load_ranks(args: &InferArgs, policy: TiePolicy) -> Result<RankMatrix> {
    let table = read_method_table(&args.input)?;
    if args.already_ranked {
        Ok(RankMatrix::from_ranks(table.values, policy, table.method_ids, table.sample_ids)?)
    } else {
        let scores = ScoreMatrix::new(table.values, table.method_ids, table.sample_ids)?;
        Ok(rank_transform(&scores, policy)?)
    }
}

fn infer(ctx: &RunContext, args: &InferArgs) -> Result<()> {
    let manifest = ManifestBuilder::start("infer");
    let input = digest_file(&args.input)?;
    let opts = InferOptions {
        tie_policy: match args.ties {
            Ties::Midrank => TiePolicy::Midrank,
            Ties::Strict => TiePolicy::Strict,
        },
        prevalence: args.prevalence,
        use_tensor: !args.no_tensor,
        recovery: recovery_options(&args.recovery)?,
        accept_partial: false,
    };
    let ranks = load_ranks(args, opts.tie_policy)?;
    let config = json!({
        "input": args.input.display().to_string(),
        "already_ranked": args.already_ranked,
        "options": opts,
        "format": ctx.format,
    });

    let out = match infer_ranks(&ranks, &opts) {
        Ok(out) => out,
        Err(err) => {
            if let SummaError::NotConverged { partial, .. } = &err {
                let path = ctx.dir.join("partial_recovery.json");
                write_json(&path, partial)?;
                manifest.finish(&ctx.dir, config, ctx.seed, vec![input], &[path])?;
            }
            return Err(err.into());
        }
    };

    let mut outputs = write_report(ctx, &out)?;
    let mut scores = Table::new(["sample_id", "summa", "woc"]);
    let mut labels = Table::new(["sample_id", "summa", "woc"]);
    for (k, id) in ranks.sample_ids().iter().enumerate() {
        scores.push(vec![id.as_str().into(), out.summa.scores[k].into(), out.woc.scores[k].into()]);
        labels.push(vec![id.as_str().into(), out.summa.labels[k].into(), out.woc.labels[k].into()]);
    }
    outputs.push(write_table(&ctx.dir, "ensemble_scores", &scores, ctx.format)?);
    outputs.push(write_table(&ctx.dir, "ensemble_labels", &labels, ctx.format)?);
    for w in &out.report.warnings {
        eprintln!("warning: {w}");
    }
    manifest.finish(&ctx.dir, config, ctx.seed, vec![input], &outputs)
}

fn write_report(ctx: &RunContext, out: &Inference) -> Result<Vec<PathBuf>> {
    let r = &out.report;
    match ctx.format {
        Format::Json => {
            let path = ctx.dir.join("report.json");
            write_json(&path, &json!({ "report": r, "matrix_recovery": out.matrix, "tensor_recovery": out.tensor }))?;
            Ok(vec![path])
        }
        Format::Csv => {
            let mut methods =
                Table::new(["method_id", "weight", "delta", "auroc_raw", "auroc", "recoverability_warning"]);
            for m in &r.methods {
                methods.push(vec![
                    m.id.as_str().into(),
                    m.weight.into(),
                    m.delta.into(),
                    m.auroc_raw.into(),
                    m.auroc.into(),
                    m.recoverability_warning.into(),
                ]);
            }
            let mut summary = Table::new(["key", "value"]);
            let rho_source = serde_json::to_value(r.rho_source)?.as_str().unwrap_or_default().to_string();
            let entries: Vec<(&str, Cell)> = vec![
                ("n_samples", r.n_samples.into()),
                ("rho", r.rho.into()),
                ("rho_source", rho_source.into()),
                ("rho_degenerate", r.rho_degenerate.into()),
                ("inferred_rho", r.inferred_rho.into()),
                ("beta", r.beta.into()),
                ("delta_norm", r.delta_norm.into()),
                ("lambda_e", r.lambda_e.into()),
                ("lambda_t", r.lambda_t.into()),
                ("matrix_iterations", out.matrix.iterations.into()),
                ("matrix_residual", out.matrix.residual.into()),
                ("tensor_iterations", out.tensor.as_ref().map(|t| t.iterations).into()),
            ];
            for (key, value) in entries {
                summary.push(vec![key.into(), value]);
            }
            for w in &r.warnings {
                summary.push(vec!["warning".into(), w.as_str().into()]);
            }
            Ok(vec![
                write_table(&ctx.dir, "report", &methods, ctx.format)?,
                write_table(&ctx.dir, "report_summary", &summary, ctx.format)?,
            ])
        }
    }
}

fn evaluate(ctx: &RunContext, args: &EvaluateArgs) -> Result<()> {
    let manifest = ManifestBuilder::start("evaluate");
    let inputs = vec![digest_file(&args.scores)?, digest_file(&args.labels)?];
    let table = read_method_table(&args.scores)?;
    let labels = LabelVector::new(read_labels(&args.labels, &table.sample_ids)?)?;
    labels.require_both_classes()?;

    let mut metrics = Table::new(["name", "auroc", "n_samples", "n_positive"]);
    for (name, column) in table.method_ids.iter().zip(&table.values) {
        let auroc = evaluate_scores(column, &labels)?;
        metrics.push(vec![name.as_str().into(), auroc.into(), labels.len().into(), labels.n_positive().into()]);
    }
    let outputs = vec![write_table(&ctx.dir, "metrics", &metrics, ctx.format)?];
    let config = json!({
        "scores": args.scores.display().to_string(),
        "labels": args.labels.display().to_string(),
        "format": ctx.format,
    });
    manifest.finish(&ctx.dir, config, ctx.seed, inputs, &outputs)
}

/// Parses `5:30`, `0.1:0.9:0.1` and comma lists of either.
pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').collect();
        let num = |s: &str| s.trim().parse::<f64>().with_context(|| format!("bad axis value {s:?}"));
        match parts.as_slice() {
            [x] => values.push(num(x)?),
            [a, b] | [a, b, _] => {
                let (start, end) = (num(a)?, num(b)?);
                let step = if parts.len() == 3 { num(parts[2])? } else { 1.0 };
                if !(step.is_finite() && step > 0.0) || end < start {
                    bail!("range {item:?} needs start <= end and a positive step");
                }
                let count = ((end - start) / step + 1e-9).floor() as usize;
                // rounding keeps 0.1:0.9:0.1 free of accumulated binary noise
                values.extend((0..=count).map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12));
            }
            _ => bail!("bad axis value {item:?}"),
        }
    }
    if values.is_empty() {
        bail!("no axis values given");
    }
    Ok(values)
}

fn default_values(axis: Axis, methods: usize) -> String {
    match axis {
        Axis::Methods => "5:30".into(),
        Axis::Samples => "30,250,1000,4000".into(),
        Axis::Prevalence => "0.1:0.9:0.1".into(),
        Axis::EnsembleSize => format!("1:{methods}"),
    }
}

fn sweep(ctx: &RunContext, args: &SweepArgs) -> Result<()> {
    let manifest = ManifestBuilder::start("sweep");
    let seed = ctx.seed.unwrap_or(0);
    let values = args.values.clone().unwrap_or_else(|| default_values(args.axis, args.ensemble.methods));
    let axis = match args.axis {
        Axis::Methods => SweepAxis::Methods,
        Axis::Samples => SweepAxis::Samples,
        Axis::Prevalence => SweepAxis::Prevalence,
        Axis::EnsembleSize => SweepAxis::EnsembleSize,
    };
    let mut cfg = SweepConfig::new(axis, parse_values(&values)?, args.replicates, simulation_config(&args.ensemble, seed));
    cfg.woc_subsets = args.woc_subsets;
    cfg.infer_prevalence = args.infer_prevalence;
    cfg.recovery = recovery_options(&args.recovery)?;

    let rows = run_sweep(&cfg)?;
    let mut long = Table::new([
        "axis",
        "value",
        "replicate",
        "seed",
        "n_methods",
        "n_samples",
        "prevalence",
        "correlation",
        "summa_auroc",
        "woc_auroc",
        "woc_auroc_sem",
        "best_true_auroc",
        "inferred_rho",
        "converged",
        "status",
    ]);
    for r in &rows {
        long.push(vec![
            axis.name().into(),
            r.value.into(),
            r.replicate.into(),
            Cell::Text(r.seed.to_string()),
            r.n_methods.into(),
            r.n_samples.into(),
            r.prevalence.into(),
            r.correlation.into(),
            r.summa_auroc.into(),
            r.woc_auroc.into(),
            r.woc_auroc_sem.into(),
            r.best_true_auroc.into(),
            r.inferred_rho.into(),
            r.converged.into(),
            r.status.as_str().into(),
        ]);
    }
    let mut summary = Table::new([
        "axis",
        "value",
        "n_ok",
        "n_failed",
        "correlation_median",
        "correlation_mean",
        "correlation_sem",
        "summa_auroc_mean",
        "summa_auroc_sem",
        "woc_auroc_mean",
        "woc_auroc_sem",
    ]);
    for s in summarize(&rows) {
        summary.push(vec![
            axis.name().into(),
            s.value.into(),
            s.n_ok.into(),
            s.n_failed.into(),
            s.correlation_median.into(),
            s.correlation_mean.into(),
            s.correlation_sem.into(),
            s.summa_auroc_mean.into(),
            s.summa_auroc_sem.into(),
            s.woc_auroc_mean.into(),
            s.woc_auroc_sem.into(),
        ]);
    }
    let outputs = vec![
        write_table(&ctx.dir, "sweep", &long, ctx.format)?,
        write_table(&ctx.dir, "sweep_summary", &summary, ctx.format)?,
    ];
    manifest.finish(&ctx.dir, json!({ "sweep": cfg, "format": ctx.format }), Some(seed), vec![], &outputs)
}
