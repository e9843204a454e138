//! Command-line entry point. One declarative TOML config per run drives
//! ingestion, experiments, and reports; machine output is JSON/CSV only.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 model error.

use agitbench_core::config::{ConfigError, ExperimentPlan, ModelEntry, RunConfig};
use agitbench_core::eval::{
    fit_full_artifact, run_experiment, write_folds_csv, write_plot_data_csv, write_scores_csv,
    EvalError, ModelArtifact, RunOutcome,
};
use agitbench_core::explain::{build_attribution_report, permutation_importance};
use agitbench_core::features::{
    apply_preprocessor, extract_all, write_feature_matrix_csv, ContextFlags,
};
use agitbench_core::ingest::synthetic::{generate_synthetic, write_synthetic};
use agitbench_core::ingest::{
    load_cohort_with_sleep, summarize, CohortStore, IngestError, SchemaMap,
};
use agitbench_core::windowing::{build_windows, write_windows_csv};
use clap::{Parser, Subcommand};
use rand::{seq::SliceRandom, SeedableRng};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_MODEL: u8 = 4;

#[derive(Parser)]
#[command(
    name = "agitbench",
    version,
    about = "Agitation-prediction benchmark runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Schema-check a config file; exit 0 iff valid.
    Validate { config: PathBuf },
    /// Run the configured experiment and write reports.
    Run { config: PathBuf },
    /// Attribute a saved model artifact over the configured dataset.
    Explain {
        config: PathBuf,
        /// Model artifact JSON written by `run` with save_artifacts = true.
        #[arg(long)]
        artifact: PathBuf,
        /// Number of top features in the summary CSV.
        #[arg(long, default_value_t = 24)]
        top_m: usize,
    },
    /// Generate a synthetic cohort into the output directory.
    Synth { config: PathBuf },
    /// Print and save the cohort summary.
    Summarize { config: PathBuf },
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
    fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
    fn model(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_MODEL,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::config(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model { .. } => CliError::model(e.to_string()),
            other => CliError::data(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { config } => cmd_validate(&config),
        Command::Run { config } => cmd_run(&config),
        Command::Explain {
            config,
            artifact,
            top_m,
        } => cmd_explain(&config, &artifact, top_m),
        Command::Synth { config } => cmd_synth(&config),
        Command::Summarize { config } => cmd_summarize(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn load_config(path: &Path) -> Result<(RunConfig, ExperimentPlan, String), CliError> {
    let raw = std::fs::read(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    let config = RunConfig::from_toml_str(
        std::str::from_utf8(&raw)
            .map_err(|e| CliError::config(format!("config is not utf-8: {e}")))?,
    )?;
    let plan = config.validate()?;
    let hash = format!("{:x}", Sha256::digest(&raw));
    Ok((config, plan, hash))
}

fn configure_workers(config: &RunConfig) {
    let workers = config.experiment.workers;
    if workers > 0 {
        // ignore failure when a pool is already configured (tests)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
}

/// Resolve the cohort from [data] paths or [synthetic]. Rejected input rows
/// are written to `rejected_rows.csv` in the output directory for audit.
fn load_data(config: &RunConfig) -> Result<CohortStore, CliError> {
    if let Some(data) = &config.data {
        let schema = match &data.schema {
            Some(path) => SchemaMap::from_toml_file(path).map_err(CliError::config)?,
            None => SchemaMap::default(),
        };
        let loaded = load_cohort_with_sleep(
            &data.activity,
            &data.physiology,
            &data.labels,
            data.sleep.as_deref(),
            &schema,
        )?;
        if !loaded.rejected.is_empty() {
            ensure_dir(&config.output.dir)?;
            let path = config.output.dir.join("rejected_rows.csv");
            write_rejected_csv(&loaded.rejected, &path)?;
            eprintln!(
                "note: {} rejected rows, reasons written to {}",
                loaded.rejected.len(),
                path.display()
            );
        }
        Ok(loaded.cohort)
    } else if let Some(spec) = &config.synthetic {
        Ok(generate_synthetic(spec)?.cohort)
    } else {
        Err(CliError::config(
            "config must provide [data] or [synthetic]",
        ))
    }
}

fn write_rejected_csv(
    rejected: &[agitbench_core::ingest::RejectedRow],
    path: &Path,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    w.write_record(["file", "row", "reason"])
        .map_err(|e| CliError::data(e.to_string()))?;
    for r in rejected {
        w.write_record([r.file.as_str(), &r.row.to_string(), r.reason.as_str()])
            .map_err(|e| CliError::data(e.to_string()))?;
    }
    w.flush()
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn cmd_validate(path: &Path) -> Result<(), CliError> {
    let (_, plan, hash) = load_config(path)?;
    println!(
        "config ok: {} model(s), {} split scheme(s)",
        plan.models.len(),
        plan.splits.len()
    );
    println!("config hash: {hash}");
    Ok(())
}

fn cmd_run(path: &Path) -> Result<(), CliError> {
    let (config, plan, hash) = load_config(path)?;
    configure_workers(&config);
    let cohort = load_data(&config)?;

    let out_dir = &config.output.dir;
    ensure_dir(out_dir)?;
    let reports_dir = out_dir.join("reports");
    ensure_dir(&reports_dir)?;

    let outcomes = run_experiment(&cohort, &plan, Some(hash.clone()))?;

    for outcome in &outcomes {
        let stem = outcome.report.file_stem();
        write_text(
            &reports_dir.join(format!("{stem}.json")),
            &outcome.report.to_json_pretty(),
        )?;
        if config.output.write_plot_data {
            write_plot_data_csv(outcome, &reports_dir.join(format!("{stem}_curves.csv")))?;
        }
        if config.output.write_scores {
            write_scores_csv(outcome, &reports_dir.join(format!("{stem}_scores.csv")))?;
        }
    }
    let refs: Vec<&agitbench_core::eval::EvalReport> = outcomes.iter().map(|o| &o.report).collect();
    write_folds_csv(&refs, &out_dir.join("folds.csv"))?;

    if config.output.write_windows || config.output.write_features {
        let set = build_windows(&cohort, plan.resolution);
        if config.output.write_windows {
            write_windows_csv(&set, &out_dir.join("windows.csv"))
                .map_err(|e| CliError::data(format!("cannot write windows.csv: {e}")))?;
        }
        if config.output.write_features {
            let rows = extract_all(&set, plan.context);
            write_feature_matrix_csv(
                &rows,
                plan.context,
                &out_dir.join("features.csv"),
                &out_dir.join("features_missing_mask.csv"),
            )
            .map_err(|e| CliError::data(format!("cannot write features.csv: {e}")))?;
        }
    }

    if config.output.save_artifacts {
        let artifacts_dir = out_dir.join("artifacts");
        ensure_dir(&artifacts_dir)?;
        for entry in &plan.models {
            if let ModelEntry::Tabular(spec) = entry {
                let artifact = fit_full_artifact(&cohort, &plan, spec)?;
                let json = serde_json::to_string_pretty(&artifact).expect("artifact serializes");
                write_text(
                    &artifacts_dir.join(format!("{}.json", spec.kind.name())),
                    &json,
                )?;
            }
        }
    }

    let manifest = serde_json::json!({
        "config_hash": hash,
        "code_version": env!("CARGO_PKG_VERSION"),
        "seed": plan.seed,
        "synthetic": config.synthetic,
        "experiment": plan,
    });
    write_text(
        &out_dir.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;

    print_summary_table(&outcomes);
    Ok(())
}

fn print_summary_table(outcomes: &[RunOutcome]) {
    let headers = ["model", "scheme", "auc-roc", "auc-pr", "sens", "spec"];
    let mut rows: Vec<[String; 6]> = Vec::new();
    for o in outcomes {
        let r = &o.report;
        rows.push([
            r.model.clone(),
            r.scheme.as_str().to_string(),
            format!("{:.4}", r.pooled.auc_roc),
            format!("{:.4}", r.pooled.auc_pr),
            format!("{:.4}", r.pooled.sensitivity),
            format!("{:.4}", r.pooled.specificity),
        ]);
    }
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let print_row = |cells: &[String]| {
        let line: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{:<width$}", c, width = widths[i]))
            .collect();
        println!("{}", line.join("  "));
    };
    print_row(&headers.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    for row in &rows {
        print_row(row);
    }
}

fn cmd_explain(path: &Path, artifact_path: &Path, top_m: usize) -> Result<(), CliError> {
    let (config, plan, _hash) = load_config(path)?;
    configure_workers(&config);

    let artifact_json = std::fs::read_to_string(artifact_path).map_err(|e| {
        CliError::data(format!(
            "cannot read artifact {}: {e}",
            artifact_path.display()
        ))
    })?;
    let artifact: ModelArtifact = serde_json::from_str(&artifact_json)
        .map_err(|e| CliError::data(format!("invalid artifact: {e}")))?;

    let expected_names = agitbench_core::features::feature_names(ContextFlags {
        day_quarter: plan.context.day_quarter,
        agitation_now: plan.context.agitation_now,
    });
    if artifact.feature_names != expected_names
        || artifact.resolution_hours != plan.resolution.hours()
    {
        return Err(CliError::data(
            "artifact mismatch: artifact features/resolution differ from the config".to_string(),
        ));
    }

    let cohort = load_data(&config)?;
    let set = build_windows(&cohort, plan.resolution);
    let rows = extract_all(&set, plan.context);
    let labeled = set.labeled_indices();
    if labeled.is_empty() {
        return Err(CliError::data("no labeled windows to explain"));
    }
    let feature_rows: Vec<_> = labeled.iter().map(|&i| rows[i].clone()).collect();
    let labels: Vec<bool> = labeled
        .iter()
        .map(|&i| set.windows[i].label_next.unwrap())
        .collect();
    let x = apply_preprocessor(&artifact.preprocessor, &feature_rows)
        .map_err(|e| CliError::data(e.to_string()))?;

    // background: uniform random subsample of 100 rows; instances: up to 200
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(plan.seed);
    let mut indices: Vec<usize> = (0..x.len()).collect();
    indices.shuffle(&mut rng);
    let background: Vec<Vec<f64>> = indices.iter().take(100).map(|&i| x[i].clone()).collect();
    let instance_count = x.len().min(200);
    let instances: Vec<Vec<f64>> = indices
        .iter()
        .rev()
        .take(instance_count)
        .map(|&i| x[i].clone())
        .collect();

    let drops = permutation_importance(&artifact.classifier, &x, &labels, 10, plan.seed)
        .map_err(|e| CliError::model(e.to_string()))?;
    let report = build_attribution_report(
        &artifact.classifier,
        &instances,
        &background,
        &artifact.feature_names,
        top_m,
        128,
        plan.seed,
        Some(drops),
    )
    .map_err(|e| CliError::model(e.to_string()))?;

    let out_dir = &config.output.dir;
    ensure_dir(out_dir)?;
    write_text(&out_dir.join("attribution.json"), &report.to_json_pretty())?;
    report
        .write_summary_csv(&out_dir.join("attribution_summary.csv"))
        .map_err(|e| CliError::data(e.to_string()))?;

    println!("top features by mean |attribution|:");
    for r in report.ranking.iter().take(top_m.min(10)) {
        println!(
            "  {:>2}. {:<28} {:.6}  (value direction {:+.3})",
            r.rank, r.name, r.mean_abs_attribution, r.value_direction_correlation
        );
    }
    Ok(())
}

fn cmd_synth(path: &Path) -> Result<(), CliError> {
    let (config, _plan, _hash) = load_config(path)?;
    let Some(spec) = &config.synthetic else {
        return Err(CliError::config("synth requires a [synthetic] section"));
    };
    let out = generate_synthetic(spec)?;
    ensure_dir(&config.output.dir)?;
    write_synthetic(&out, &config.output.dir)?;
    println!(
        "wrote synthetic cohort: {} participants, {} episodes, {} decoy windows -> {}",
        spec.participants,
        out.manifest.episodes.len(),
        out.manifest.decoy_windows.len(),
        config.output.dir.display()
    );
    Ok(())
}

fn cmd_summarize(path: &Path) -> Result<(), CliError> {
    let (config, plan, _hash) = load_config(path)?;
    let cohort = load_data(&config)?;
    let summary = summarize(&cohort, plan.resolution);
    ensure_dir(&config.output.dir)?;
    write_text(
        &config.output.dir.join("summary.json"),
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;

    println!("participants: {}", summary.participants);
    println!(
        "days: {} (span) / {} (with data)",
        summary.total_span_days, summary.total_active_days
    );
    println!(
        "missing days: activity {:.2}% physiology {:.2}% sleep {:.2}%",
        summary.missing_activity.day_fraction * 100.0,
        summary.missing_physiology.day_fraction * 100.0,
        summary.missing_sleep.day_fraction * 100.0
    );
    println!(
        "agitation episodes: {} (day quarters: {:.2}% / {:.2}% / {:.2}% / {:.2}%)",
        summary.agitation_episodes,
        summary.agitation_quarter_fractions[0] * 100.0,
        summary.agitation_quarter_fractions[1] * 100.0,
        summary.agitation_quarter_fractions[2] * 100.0,
        summary.agitation_quarter_fractions[3] * 100.0
    );
    Ok(())
}
