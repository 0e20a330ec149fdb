//! `utfm` command-line pipeline: gen, prepare, train, cv, decode, export.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use utfm::dataset::{load_csv, segment, weather_only, write_csv, CvConfig, DatasetSplit, FlightLegRecord, Partition, SplitConfig};
use utfm::hmm::TrainConfig;
use utfm::json::to_canonical_string;
use utfm::synthgen::{generate, NetworkConfig};
use utfm::utfm::{
    export_dot, load_model, save_model, sha256_hex, utfm_cross_validate, utfm_decode, utfm_learn, AssessmentReport,
    LearnConfig, NormalizationMode,
};

#[derive(Parser)]
#[command(name = "utfm", version, about = "Uncertainty transfer function model for airline disruption management")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic flight-leg CSV.
    Gen(GenArgs),
    /// Split a CSV into lots, hold-out slices and folds; writes a manifest.
    Prepare(PrepareArgs),
    /// Learn all 29 component HMMs; writes the model and a training log.
    Train(TrainArgs),
    /// k-fold cross-validation of the component HMMs.
    Cv(CvArgs),
    /// Decode one flight into an assessment report.
    Decode(DecodeArgs),
    /// Render an assessment report as Graphviz DOT.
    Export(ExportArgs),
}

#[derive(Args, Serialize)]
struct GenArgs {
    /// Number of flight legs.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Network TOML; the built-in network is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct SplitArgs {
    /// Flight-leg CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Keep only weather-coded disruptions.
    #[arg(long)]
    weather_only: bool,
}

#[derive(Args, Serialize)]
struct PrepareArgs {
    #[command(flatten)]
    #[serde(flatten)]
    split: SplitArgs,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct EmArgs {
    /// Convergence threshold on the change in total log-likelihood.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    #[serde(flatten)]
    em: EmArgs,
    /// Model JSON.
    #[arg(long)]
    output: PathBuf,
    /// Training log with per-HMM Baum-Welch traces; defaults next to the model.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct CvArgs {
    #[command(flatten)]
    #[serde(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    #[serde(flatten)]
    em: EmArgs,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Restrict to one component, e.g. TAS or TAS->TOS.
    #[arg(long)]
    component: Option<String>,
    /// Fold z-score above which the consistency flag is raised.
    #[arg(long, default_value_t = 3.0)]
    flag_threshold: f64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Mode {
    LogSumExp,
    RawProbSum,
}

#[derive(Args, Serialize)]
struct DecodeArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV containing the flight.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    flight_id: String,
    #[arg(long, value_enum, default_value_t = Mode::LogSumExp)]
    mode: Mode,
    /// Report JSON.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct ExportArgs {
    /// Report JSON written by `decode`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

type CmdResult = Result<(), String>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let (name, result) = match &cli.command {
        Command::Gen(a) => ("gen", cmd_gen(a)),
        Command::Prepare(a) => ("prepare", cmd_prepare(a)),
        Command::Train(a) => ("train", cmd_train(a)),
        Command::Cv(a) => ("cv", cmd_cv(a)),
        Command::Decode(a) => ("decode", cmd_decode(a)),
        Command::Export(a) => ("export", cmd_export(a)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            let line = serde_json::json!({ "status": "error", "command": name, "message": message });
            eprintln!("{line}");
            ExitCode::from(1)
        }
    }
}

fn file_sha256(path: &Path) -> Result<String, String> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

fn config_sha256<T: Serialize>(args: &T) -> String {
    sha256_hex(to_canonical_string(args).expect("arguments serialize").as_bytes())
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn provenance(artifact: &Path, seed: Option<u64>, config_sha: &str, input_sha: Option<&str>) {
    log::info!(
        "provenance artifact={} seed={} config_sha256={} input_sha256={}",
        artifact.display(),
        seed.map_or("-".to_string(), |s| s.to_string()),
        config_sha,
        input_sha.unwrap_or("-")
    );
}

fn cmd_gen(a: &GenArgs) -> CmdResult {
    let (config, input_sha) = match &a.config {
        Some(p) => (
            NetworkConfig::load(p).map_err(|e| e.to_string())?,
            Some(file_sha256(p)?),
        ),
        None => (NetworkConfig::default(), None),
    };
    let records = generate(&config, a.n, a.seed).map_err(|e| e.to_string())?;
    let file = fs::File::create(&a.output).map_err(|e| format!("{}: {e}", a.output.display()))?;
    write_csv(file, &records).map_err(|e| e.to_string())?;
    let disrupted = records.iter().filter(|r| r.is_disrupted()).count();
    log::info!("wrote {} flight legs ({disrupted} disrupted)", records.len());
    provenance(&a.output, Some(a.seed), &config_sha256(a), input_sha.as_deref());
    Ok(())
}

fn load_split(a: &SplitArgs, folds: usize) -> Result<(DatasetSplit, String), String> {
    let input_sha = file_sha256(&a.input)?;
    let mut records = load_csv(&a.input).map_err(|e| format!("{}: {e}", a.input.display()))?;
    if a.weather_only {
        let before = records.len();
        records = weather_only(records);
        log::info!("weather-only filter kept {} of {before} records", records.len());
    }
    let config = SplitConfig {
        seed: a.seed,
        folds,
        ..SplitConfig::default()
    };
    let split = segment(records, &config).map_err(|e| e.to_string())?;
    log::info!(
        "split: {} non-disrupted ({} train), {} disrupted ({} train)",
        split.non_disrupted.len(),
        split.non_disrupted_part.train.len(),
        split.disrupted.len(),
        split.disrupted_part.train.len()
    );
    Ok((split, input_sha))
}

#[derive(Serialize)]
struct LotManifest {
    records: usize,
    train: Vec<String>,
    test_hold_out: Vec<String>,
    folds: Vec<Vec<String>>,
}

impl LotManifest {
    fn new(records: &[FlightLegRecord], part: &Partition) -> Self {
        let ids = |idx: &[usize]| idx.iter().map(|&i| records[i].flight_id.clone()).collect();
        Self {
            records: records.len(),
            train: ids(&part.train),
            test_hold_out: ids(&part.test_hold_out),
            folds: part.folds.iter().map(|f| ids(f)).collect(),
        }
    }
}

#[derive(Serialize)]
struct SplitManifest {
    input_sha256: String,
    seed: u64,
    weather_only: bool,
    hold_out_fraction: f64,
    non_disrupted: LotManifest,
    disrupted: LotManifest,
}

fn cmd_prepare(a: &PrepareArgs) -> CmdResult {
    let (split, input_sha) = load_split(&a.split, a.folds)?;
    let manifest = SplitManifest {
        input_sha256: input_sha.clone(),
        seed: a.split.seed,
        weather_only: a.split.weather_only,
        hold_out_fraction: SplitConfig::default().hold_out_fraction,
        non_disrupted: LotManifest::new(&split.non_disrupted, &split.non_disrupted_part),
        disrupted: LotManifest::new(&split.disrupted, &split.disrupted_part),
    };
    write_text(&a.output, &to_canonical_string(&manifest).map_err(|e| e.to_string())?)?;
    provenance(&a.output, Some(a.split.seed), &config_sha256(a), Some(&input_sha));
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> CmdResult {
    let (split, input_sha) = load_split(&a.split, SplitConfig::default().folds)?;
    let config = LearnConfig {
        seed: a.split.seed,
        train: TrainConfig {
            tol: a.em.tol,
            max_iter: a.em.max_iter,
        },
    };
    let (model, log) = utfm_learn(&split, &config).map_err(|e| e.to_string())?;
    save_model(&model, &a.output).map_err(|e| format!("{}: {e}", a.output.display()))?;
    let log_path = a.log.clone().unwrap_or_else(|| a.output.with_extension("log.json"));
    write_text(&log_path, &to_canonical_string(&log).map_err(|e| e.to_string())?)?;
    let converged = log.entries.iter().filter(|e| e.converged).count();
    println!("trained 29 HMMs, {converged} converged within {} iterations", a.em.max_iter);
    for e in log.entries.iter().filter(|e| !e.converged) {
        println!("not converged: {} ({} iterations)", e.component, e.iterations);
    }
    let cfg = config.sha256();
    provenance(&a.output, Some(a.split.seed), &cfg, Some(&input_sha));
    provenance(&log_path, Some(a.split.seed), &cfg, Some(&input_sha));
    Ok(())
}

fn cmd_cv(a: &CvArgs) -> CmdResult {
    let (split, input_sha) = load_split(&a.split, a.folds)?;
    let config = CvConfig {
        folds: a.folds,
        seed: a.split.seed,
        train: TrainConfig {
            tol: a.em.tol,
            max_iter: a.em.max_iter,
        },
        flag_threshold: a.flag_threshold,
    };
    let results = utfm_cross_validate(&split, &config, a.component.as_deref()).map_err(|e| e.to_string())?;
    write_text(&a.output, &to_canonical_string(&results).map_err(|e| e.to_string())?)?;
    for r in &results {
        let per_fold: Vec<String> = r
            .report
            .folds
            .iter()
            .map(|f| format!("{:.4}", f.test_per_observation))
            .collect();
        println!(
            "{:<9} held-out logL/obs [{}] flag={}",
            r.component,
            per_fold.join(", "),
            r.report.consistency_flag
        );
    }
    provenance(&a.output, Some(a.split.seed), &config_sha256(a), Some(&input_sha));
    Ok(())
}

fn cmd_decode(a: &DecodeArgs) -> CmdResult {
    let model_sha = file_sha256(&a.model)?;
    let model = load_model(&a.model).map_err(|e| format!("{}: {e}", a.model.display()))?;
    let input_sha = file_sha256(&a.input)?;
    let records = load_csv(&a.input).map_err(|e| format!("{}: {e}", a.input.display()))?;
    let flight = records
        .iter()
        .find(|r| r.flight_id == a.flight_id)
        .ok_or_else(|| format!("flight {} not found in {}", a.flight_id, a.input.display()))?;
    let mode = match a.mode {
        Mode::LogSumExp => NormalizationMode::LogSumExp,
        Mode::RawProbSum => NormalizationMode::RawProbSum,
    };
    let report = utfm_decode(&model, flight, mode).map_err(|e| e.to_string())?;
    write_text(&a.output, &to_canonical_string(&report).map_err(|e| e.to_string())?)?;
    print!("{}", report.summary());
    log::info!("model_sha256={model_sha}");
    provenance(&a.output, Some(model.provenance.seed), &config_sha256(a), Some(&input_sha));
    Ok(())
}

fn cmd_export(a: &ExportArgs) -> CmdResult {
    let input_sha = file_sha256(&a.input)?;
    let text = fs::read_to_string(&a.input).map_err(|e| format!("{}: {e}", a.input.display()))?;
    let report: AssessmentReport =
        serde_json::from_str(&text).map_err(|e| format!("{}: not an assessment report: {e}", a.input.display()))?;
    write_text(&a.output, &export_dot(&report))?;
    provenance(&a.output, None, &config_sha256(a), Some(&input_sha));
    Ok(())
}
