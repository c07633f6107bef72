//! `forge`: CLI runner for the function-calling data toolkit.
//!
//! Exit codes: 0 on success, 1 on validation errors (bad data, bad config,
//! unknown ids), 2 on I/O and endpoint errors.

use clap::{Parser, Subcommand, ValueEnum};
use forge_core::endpoint::{self, EndpointConfig, PredictError};
use forge_core::evaluate::{self, RawPrediction};
use forge_core::ingest::{IngestError, IngestFormat};
use forge_core::jsonl::JsonlError;
use forge_core::manifest::{self, ManifestError, PredictionSource, RawOutputRecord, RunManifest};
use forge_core::mixture::{self, MixtureConfig, MixtureError};
use forge_core::model::TaskKind;
use forge_core::parser::ParseMode;
use forge_core::report::{self, EvalReport};
use forge_core::Sample;
use indexmap::IndexMap;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "forge", version, about = "Function-calling data toolkit")]
struct Cli {
    /// Seed for mixture drawing (overrides the config file's seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Fail on model outputs that need repair instead of repairing them.
    #[arg(long, global = true)]
    strict_parse: bool,
    /// Report output format.
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Md)]
    format: ReportFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Md,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceFormat {
    Canonical,
    GlaiveConv,
    SimpleQa,
}

impl From<SourceFormat> for IngestFormat {
    fn from(f: SourceFormat) -> Self {
        match f {
            SourceFormat::Canonical => IngestFormat::Canonical,
            SourceFormat::GlaiveConv => IngestFormat::GlaiveConv,
            SourceFormat::SimpleQa => IngestFormat::SimpleQa,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DeriveTask {
    NameDetection,
    NextBest,
    ParamValue,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a raw dataset into canonical sample JSONL.
    Ingest {
        /// Input file.
        #[arg(long)]
        input: PathBuf,
        /// Input format.
        #[arg(long, value_enum, default_value_t = SourceFormat::Canonical)]
        source_format: SourceFormat,
        /// Output canonical JSONL path.
        #[arg(long)]
        output: PathBuf,
    },
    /// Derive low-level task samples from high-level gold samples.
    Derive {
        /// Canonical sample JSONL with chaining/parallel/nested samples.
        #[arg(long)]
        data: PathBuf,
        /// Which derivations to run (default: all three).
        #[arg(long, value_enum, value_delimiter = ',')]
        tasks: Vec<DeriveTask>,
        /// Output JSONL for the derived samples.
        #[arg(long)]
        output: PathBuf,
    },
    /// Draw a weighted training mixture and render prompts.
    Mix {
        /// Mixture config JSON (total, seed, entries).
        #[arg(long)]
        config: PathBuf,
        /// Canonical sample JSONL; pools are grouped by source_dataset.
        #[arg(long)]
        data: PathBuf,
        /// Output JSONL of {sample_id, task, prompt, target} rows.
        #[arg(long)]
        output: PathBuf,
        /// Draw with replacement when a pool is smaller than its allocation.
        #[arg(long)]
        allow_oversample: bool,
    },
    /// Render one sample's prompt to stdout.
    Prompt {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        id: String,
        /// Drop parameter descriptions longest-first to fit this budget.
        #[arg(long)]
        max_prompt_chars: Option<usize>,
    },
    /// Query a model for raw outputs and persist them as a run manifest.
    Predict {
        #[arg(long)]
        data: PathBuf,
        /// Endpoint config JSON (url, request_template, response_path, ...).
        #[arg(long, conflicts_with = "predictions")]
        endpoint: Option<PathBuf>,
        /// Offline predictions JSONL of {id, output}.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Manifest directory to create.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against gold data and write a full run manifest.
    Eval {
        #[arg(long)]
        data: PathBuf,
        /// Predictions JSONL of {id, output}.
        #[arg(long)]
        predictions: PathBuf,
        /// Manifest directory to create (report included).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-score an existing run manifest without re-querying the model.
    Score {
        /// Manifest directory from `predict` or `eval`.
        #[arg(long)]
        manifest: PathBuf,
    },
}

/// An error plus the exit code it maps to.
struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 1,
        }
    }

    fn io(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 2,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match &e {
            IngestError::Io(_) => CliError::io(e.to_string()),
            IngestError::Jsonl(JsonlError::Io { .. }) => CliError::io(e.to_string()),
            _ => CliError::validation(e.to_string()),
        }
    }
}

impl From<JsonlError> for CliError {
    fn from(e: JsonlError) -> Self {
        match &e {
            JsonlError::Io { .. } => CliError::io(e.to_string()),
            _ => CliError::validation(e.to_string()),
        }
    }
}

impl From<MixtureError> for CliError {
    fn from(e: MixtureError) -> Self {
        CliError::validation(e.to_string())
    }
}

impl From<ManifestError> for CliError {
    fn from(e: ManifestError) -> Self {
        match &e {
            ManifestError::BadJson { .. } => CliError::validation(e.to_string()),
            ManifestError::Jsonl(JsonlError::Schema { .. }) => CliError::validation(e.to_string()),
            _ => CliError::io(e.to_string()),
        }
    }
}

impl From<PredictError> for CliError {
    fn from(e: PredictError) -> Self {
        match &e {
            PredictError::Io(_) | PredictError::Client(_) => CliError::io(e.to_string()),
            _ => CliError::validation(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let parse_mode = if cli.strict_parse {
        ParseMode::Strict
    } else {
        ParseMode::Lenient
    };
    match cli.command {
        Command::Ingest {
            input,
            source_format,
            output,
        } => {
            let samples = forge_core::ingest::ingest(&input, source_format.into())?;
            forge_core::jsonl::write_samples(&output, &samples)?;
            eprintln!("wrote {} samples to {}", samples.len(), output.display());
            Ok(())
        }
        Command::Derive {
            data,
            tasks,
            output,
        } => cmd_derive(&data, &tasks, &output),
        Command::Mix {
            config,
            data,
            output,
            allow_oversample,
        } => cmd_mix(&config, &data, &output, allow_oversample, cli.seed),
        Command::Prompt {
            data,
            id,
            max_prompt_chars,
        } => cmd_prompt(&data, &id, max_prompt_chars),
        Command::Predict {
            data,
            endpoint,
            predictions,
            out,
        } => cmd_predict(
            &data,
            endpoint.as_deref(),
            predictions.as_deref(),
            &out,
            cli.seed.unwrap_or(0),
            cli.strict_parse,
        ),
        Command::Eval {
            data,
            predictions,
            out,
        } => cmd_eval(
            &data,
            &predictions,
            out.as_deref(),
            cli.seed.unwrap_or(0),
            parse_mode,
            cli.format,
        ),
        Command::Score { manifest } => cmd_score(&manifest, cli.strict_parse, cli.format),
    }
}

fn cmd_derive(data: &Path, tasks: &[DeriveTask], output: &Path) -> Result<(), CliError> {
    let all = [
        DeriveTask::NameDetection,
        DeriveTask::NextBest,
        DeriveTask::ParamValue,
    ];
    let tasks = if tasks.is_empty() { &all[..] } else { tasks };
    let samples = forge_core::jsonl::read_samples(data)?;
    let mut derived: Vec<Sample> = Vec::new();
    let mut skipped = 0usize;
    for sample in &samples {
        let source_task = matches!(
            sample.task,
            TaskKind::Chaining | TaskKind::Parallel | TaskKind::Nested
        );
        if !source_task {
            skipped += 1;
            continue;
        }
        for task in tasks {
            match task {
                DeriveTask::NameDetection => {
                    derived.push(
                        forge_core::taskgen::derive_name_detection(sample)
                            .map_err(|e| CliError::validation(e.to_string()))?,
                    );
                }
                DeriveTask::NextBest => {
                    derived.extend(
                        forge_core::taskgen::derive_next_best(sample)
                            .map_err(|e| CliError::validation(e.to_string()))?,
                    );
                }
                DeriveTask::ParamValue => {
                    derived.extend(
                        forge_core::taskgen::derive_param_value(sample)
                            .map_err(|e| CliError::validation(e.to_string()))?,
                    );
                }
            }
        }
    }
    forge_core::jsonl::write_samples(output, &derived)?;
    eprintln!(
        "derived {} samples from {} inputs ({} skipped) into {}",
        derived.len(),
        samples.len(),
        skipped,
        output.display()
    );
    Ok(())
}

fn cmd_mix(
    config_path: &Path,
    data: &Path,
    output: &Path,
    allow_oversample: bool,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let config_text = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::io(format!("{}: {e}", config_path.display())))?;
    let mut config: MixtureConfig = serde_json::from_str(&config_text)
        .map_err(|e| CliError::validation(format!("bad mixture config: {e}")))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let samples = forge_core::jsonl::read_samples(data)?;
    let mut pools: IndexMap<String, Vec<Sample>> = IndexMap::new();
    for sample in samples {
        pools
            .entry(sample.source_dataset.clone())
            .or_default()
            .push(sample);
    }
    let (instances, diagnostics) = mixture::sample_mixture(&config, &pools, allow_oversample)?;
    for diag in &diagnostics {
        eprintln!("note: {diag}");
    }
    let mut lines = String::new();
    for instance in &instances {
        lines.push_str(&serde_json::to_string(instance).expect("instance serialization"));
        lines.push('\n');
    }
    std::fs::write(output, lines).map_err(|e| CliError::io(format!("{}: {e}", output.display())))?;
    eprintln!(
        "wrote {} training instances to {}",
        instances.len(),
        output.display()
    );
    Ok(())
}

fn cmd_prompt(data: &Path, id: &str, max_prompt_chars: Option<usize>) -> Result<(), CliError> {
    let samples = forge_core::jsonl::read_samples(data)?;
    let sample = samples
        .iter()
        .find(|s| s.id == id)
        .ok_or_else(|| CliError::validation(format!("no sample with id `{id}`")))?;
    let prompt = match max_prompt_chars {
        Some(budget) => {
            let (prompt, truncations) = mixture::render_sample_prompt_budgeted(sample, budget)?;
            for note in truncations {
                eprintln!("note: {note}");
            }
            prompt
        }
        None => mixture::render_sample_prompt(sample)?,
    };
    // Byte-exact output: the prompt ends with "ASSISTANT: " and no newline.
    let mut stdout = std::io::stdout();
    stdout
        .write_all(prompt.as_bytes())
        .and_then(|()| stdout.flush())
        .map_err(|e| CliError::io(e.to_string()))?;
    Ok(())
}

fn load_endpoint_config(path: &Path) -> Result<EndpointConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let config: EndpointConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("bad endpoint config: {e}")))?;
    config.validate()?;
    Ok(config)
}

fn cmd_predict(
    data: &Path,
    endpoint_path: Option<&Path>,
    predictions_path: Option<&Path>,
    out: &Path,
    seed: u64,
    strict_parse: bool,
) -> Result<(), CliError> {
    let samples = forge_core::jsonl::read_samples(data)?;
    let dataset_sha256 = manifest::sha256_file(data)?;

    let (source, predictions): (PredictionSource, BTreeMap<String, RawPrediction>) =
        match (endpoint_path, predictions_path) {
            (Some(endpoint_path), None) => {
                let config = load_endpoint_config(endpoint_path)?;
                let prompts: Vec<(String, String)> = samples
                    .iter()
                    .map(|s| Ok((s.id.clone(), mixture::render_sample_prompt(s)?)))
                    .collect::<Result<_, MixtureError>>()?;
                let runtime = tokio::runtime::Runtime::new()
                    .map_err(|e| CliError::io(e.to_string()))?;
                let outcomes =
                    runtime.block_on(endpoint::predict_with_endpoint(&config, &prompts))?;
                let map = outcomes.into_iter().map(|o| (o.id, o.result)).collect();
                (PredictionSource::Endpoint { url: config.url }, map)
            }
            (None, Some(path)) => {
                let outputs = endpoint::load_predictions_file(path)?;
                endpoint::require_predictions(
                    samples.iter().map(|s| s.id.as_str()),
                    &outputs,
                )?;
                let map = evaluate::predictions_from_map(&samples, &outputs);
                let source = PredictionSource::File {
                    path: path.display().to_string(),
                    sha256: manifest::sha256_file(path)?,
                };
                (source, map)
            }
            _ => {
                return Err(CliError::validation(
                    "exactly one of --endpoint or --predictions is required",
                ))
            }
        };

    let records = raw_records(&samples, &predictions);
    let run = RunManifest::new(
        run_id(),
        seed,
        strict_parse,
        data.display().to_string(),
        dataset_sha256,
        source,
    );
    manifest::write_run(out, &run, &samples, &records)?;
    eprintln!(
        "stored {} raw outputs in manifest {}",
        records.len(),
        out.display()
    );
    Ok(())
}

fn cmd_eval(
    data: &Path,
    predictions_path: &Path,
    out: Option<&Path>,
    seed: u64,
    parse_mode: ParseMode,
    format: ReportFormat,
) -> Result<(), CliError> {
    let samples = forge_core::jsonl::read_samples(data)?;
    let outputs = endpoint::load_predictions_file(predictions_path)?;
    endpoint::require_predictions(samples.iter().map(|s| s.id.as_str()), &outputs)?;
    let predictions = evaluate::predictions_from_map(&samples, &outputs);
    let outcome = evaluate::evaluate(&samples, &predictions, parse_mode);

    if let Some(out) = out {
        let run = RunManifest::new(
            run_id(),
            seed,
            parse_mode == ParseMode::Strict,
            data.display().to_string(),
            manifest::sha256_file(data)?,
            PredictionSource::File {
                path: predictions_path.display().to_string(),
                sha256: manifest::sha256_file(predictions_path)?,
            },
        );
        manifest::write_run(out, &run, &samples, &outcome.raw_outputs)?;
        manifest::write_report(out, &report::to_json(&outcome.report))?;
    }
    print_report(&outcome.report, format);
    Ok(())
}

fn cmd_score(dir: &Path, strict_flag: bool, format: ReportFormat) -> Result<(), CliError> {
    let run = manifest::load_manifest(dir)?;
    let samples = manifest::load_samples(dir)?;
    let records = manifest::load_raw_outputs(dir)?;
    let predictions: BTreeMap<String, RawPrediction> = records
        .iter()
        .map(|r| {
            let value = match (&r.output, &r.error) {
                (Some(output), _) => Ok(output.clone()),
                (None, Some(error)) => Err(error.clone()),
                (None, None) => Err("no output recorded".to_string()),
            };
            (r.id.clone(), value)
        })
        .collect();
    let mode = if strict_flag || run.strict_parse {
        ParseMode::Strict
    } else {
        ParseMode::Lenient
    };
    let outcome = evaluate::evaluate(&samples, &predictions, mode);
    manifest::write_report(dir, &report::to_json(&outcome.report))?;
    print_report(&outcome.report, format);
    Ok(())
}

fn raw_records(
    samples: &[Sample],
    predictions: &BTreeMap<String, RawPrediction>,
) -> Vec<RawOutputRecord> {
    samples
        .iter()
        .map(|s| {
            let prediction = predictions.get(&s.id);
            let prompt_sha256 = mixture::render_sample_prompt(s)
                .map(|p| manifest::sha256_hex(p.as_bytes()))
                .unwrap_or_else(|_| manifest::sha256_hex(b""));
            RawOutputRecord {
                id: s.id.clone(),
                prompt_sha256,
                output: prediction.and_then(|p| p.as_ref().ok().cloned()),
                error: prediction.map_or(Some("no output recorded".to_string()), |p| {
                    p.as_ref().err().cloned()
                }),
                diagnostics: Vec::new(),
            }
        })
        .collect()
}

fn run_id() -> String {
    format!(
        "run-{}",
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0)
    )
}

fn print_report(report: &EvalReport, format: ReportFormat) {
    let text = match format {
        ReportFormat::Json => report::to_json(report),
        ReportFormat::Md => report::to_markdown(report),
        ReportFormat::Csv => report::to_csv(report),
    };
    println!("{text}");
}
