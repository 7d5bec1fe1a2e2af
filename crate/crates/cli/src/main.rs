//! `asr-audit`: corpus-scale ASR transcript auditing.
//!
//! Subcommands stage artifacts into a reproducible run directory:
//! score -> features -> fit -> sdi -> cartography -> pca -> report.
//! Exit codes: 0 success, 1 input error, 2 numerical failure.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use asr_audit_core::error::AuditError;
use asr_audit_core::features::SnrSource;
use asr_audit_core::ingest::ManifestFormat;

use config::{ConfigOverlay, DecileScope};

#[derive(Parser)]
#[command(
    name = "asr-audit",
    version,
    about = "Audit ASR transcripts: six error metrics, metric-elasticity regression, sample difficulty, cartography"
)]
struct Cli {
    /// Flat key = value config file; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: FlagOverrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct FlagOverrides {
    /// Audit manifest (JSONL or CSV).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    /// Manifest format override (default: by file extension).
    #[arg(long, global = true, value_parser = parse_manifest_format)]
    manifest_format: Option<ManifestFormat>,

    /// Word-vector text file (token v1 ... vd, optional `count dim` header).
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,

    /// Precomputed sentence-vector sidecar (JSONL).
    #[arg(long, global = true)]
    sidecar: Option<PathBuf>,

    /// Run directory (env ASR_AUDIT_OUT sets the default).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Embedding similarity threshold for down-weighted substitutions.
    #[arg(long, global = true)]
    tau: Option<f64>,

    /// Cost weight for semantically similar substitutions.
    #[arg(long, global = true)]
    lambda: Option<f64>,

    /// SNR source: manifest | wada | manifest-then-wada.
    #[arg(long, global = true, value_parser = parse_snr_source)]
    snr_source: Option<SnrSource>,

    /// Decile scope: pooled | per-dataset.
    #[arg(long, global = true, value_parser = parse_decile_scope)]
    decile_scope: Option<DecileScope>,

    /// Seed for permutation tests and generators.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Age bin table (label,midpoint_years CSV) overriding the bundled one.
    #[arg(long, global = true)]
    age_bins: Option<PathBuf>,

    /// SNR lookup table CSV overriding the bundled one.
    #[arg(long, global = true)]
    wada_table: Option<PathBuf>,
}

fn parse_manifest_format(s: &str) -> Result<ManifestFormat, String> {
    s.parse()
}

fn parse_snr_source(s: &str) -> Result<SnrSource, String> {
    s.parse()
}

fn parse_decile_scope(s: &str) -> Result<DecileScope, String> {
    s.parse()
}

#[derive(Subcommand)]
enum Command {
    /// Score every (utterance, model) pair with the six metrics.
    Score,
    /// Build standardized acoustic/demographic features.
    Features,
    /// Fit the per-metric elasticity regressions with clustered errors.
    Fit,
    /// Compute sample difficulty values and deciles from the fits.
    Sdi,
    /// Map mean error against inter-model disagreement; validate SDI.
    Cartography,
    /// Principal-component analysis of the metric correlation structure.
    Pca,
    /// Assemble the single-file HTML report.
    Report,
    /// Generate a planted-coefficient synthetic corpus.
    GenSynthetic(GenSyntheticArgs),
    /// Regenerate the SNR lookup table by Monte Carlo.
    GenWadaTable(GenWadaTableArgs),
}

#[derive(Args)]
struct GenSyntheticArgs {
    /// Output directory for the corpus files.
    #[arg(long, default_value = "synthetic-corpus")]
    corpus_out: PathBuf,
    #[arg(long, default_value_t = 5000)]
    utterances: usize,
    #[arg(long, default_value_t = 4)]
    models: usize,
    /// Speaker count (default: utterances / 4).
    #[arg(long)]
    speakers: Option<usize>,
    #[arg(long, default_value_t = 2)]
    datasets: usize,
}

#[derive(Args)]
struct GenWadaTableArgs {
    /// Output CSV path.
    #[arg(long, default_value = "wada_table.csv")]
    table_out: PathBuf,
    /// Monte Carlo samples per SNR point.
    #[arg(long, default_value_t = 4_000_000)]
    samples: usize,
}

fn run(cli: Cli) -> Result<(), AuditError> {
    let flags = ConfigOverlay {
        manifest: cli.overrides.manifest,
        manifest_format: cli.overrides.manifest_format,
        embeddings: cli.overrides.embeddings,
        sidecar: cli.overrides.sidecar,
        out: cli.overrides.out,
        tau: cli.overrides.tau,
        lambda: cli.overrides.lambda,
        snr_source: cli.overrides.snr_source,
        decile_scope: cli.overrides.decile_scope,
        seed: cli.overrides.seed,
        age_bins: cli.overrides.age_bins,
        wada_table: cli.overrides.wada_table,
    };
    let config = config::resolve(cli.config.as_deref(), flags)?;

    match cli.command {
        Command::Score => commands::cmd_score(&config),
        Command::Features => commands::cmd_features(&config),
        Command::Fit => commands::cmd_fit(&config),
        Command::Sdi => commands::cmd_sdi(&config),
        Command::Cartography => commands::cmd_cartography(&config),
        Command::Pca => commands::cmd_pca(&config),
        Command::Report => commands::cmd_report(&config),
        Command::GenSynthetic(args) => commands::cmd_gen_synthetic(
            &args.corpus_out,
            args.utterances,
            args.models,
            args.speakers.unwrap_or_else(|| (args.utterances / 4).max(1)),
            args.datasets,
            config.seed,
        ),
        Command::GenWadaTable(args) => {
            commands::cmd_gen_wada_table(&args.table_out, args.samples, config.seed)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
