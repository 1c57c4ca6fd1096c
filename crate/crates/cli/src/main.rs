use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sgcvq_core::Variant;
use sgcvq_harness::{commands, HarnessError};

#[derive(Parser)]
#[command(name = "sgcvq", version, about = "Semantic-guided VQ experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one variant and write metrics, a report and a snapshot.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<Variant>,
    },
    /// Train every configured variant on the same stream.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Tokenize a feature file with a saved snapshot.
    Quantize {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::parse(s).ok_or_else(|| format!("unknown variant {s:?} (expected vanilla_ema, cvq or sgc)"))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result: Result<(), HarnessError> = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            variant,
        } => commands::run(&config, &out, seed, variant).map(|r| {
            let last = r.last_row();
            println!(
                "{}: {} steps, active {:.4}, uniq@0.5 {}, recon_mse {:.6}",
                r.variant,
                last.report.step_index,
                last.report.active_fraction,
                fmt_opt(last.uniqueness_at(0.5)),
                last.report.recon_mse
            );
        }),
        Command::Compare { config, out, seed } => commands::compare(&config, &out, seed).map(|runs| {
            for r in &runs {
                let last = r.last_row();
                println!(
                    "{:<12} active {:.4} uniq@0.5 {} ss {} dbi {} recon_mse {:.6}",
                    r.variant.name(),
                    last.report.active_fraction,
                    fmt_opt(last.uniqueness_at(0.5)),
                    fmt_opt(last.report.silhouette),
                    fmt_opt(last.report.dbi),
                    last.report.recon_mse
                );
            }
        }),
        Command::Quantize {
            snapshot,
            features,
            out,
        } => commands::quantize(&snapshot, &features, &out).map(|s| {
            println!(
                "{} positions -> {}, label_agreement {}",
                s.positions,
                s.out.display(),
                fmt_opt(s.label_agreement)
            );
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
