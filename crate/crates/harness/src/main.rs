use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cras_core::enroll::TemplateStore;
use cras_core::synth::Population;

use cras_harness::calibrate::calibrate_scales;
use cras_harness::config::HarnessConfig;
use cras_harness::decay::{decay_csv, run_time_decay};
use cras_harness::matrix::{build_probes, run_matrix, MatrixReport};
use cras_harness::plot::write_plots;
use cras_harness::registration::run_registration;
use cras_harness::roc::{parse_thresholds, roc_csv, roc_sweep};
use cras_harness::HarnessError;

/// Chill-response authentication experiment harness.
#[derive(Parser)]
#[command(name = "cras", version, about)]
struct Cli {
    /// Seed for every synthesized signal; identical seeds reproduce
    /// byte-identical reports.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register every subject in the population and persist their templates.
    Enroll {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        population: PathBuf,
        #[arg(long)]
        store: PathBuf,
    },
    /// Score the full probe round against every stored template.
    Matrix {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        population: PathBuf,
        #[arg(long)]
        store: PathBuf,
        /// Report CSV destination.
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay later-day attempts with injected response drift.
    Decay {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        population: PathBuf,
        #[arg(long)]
        store: PathBuf,
        /// Comma-separated drift percentages, e.g. 3.41,6.73
        #[arg(long)]
        drifts: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the decision threshold over an existing matrix report.
    Roc {
        /// Matrix report CSV produced by `cras matrix`.
        #[arg(long = "in")]
        input: PathBuf,
        /// start:end:step range or comma list, e.g. 0:5:0.1
        #[arg(long)]
        thresholds: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search penalty scales that keep genuine per-side coefficients <= 1.0.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        population: PathBuf,
        /// Where to write the calibrated config (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render SVG charts from a matrix report.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// With config/population/store present, also render trace overlays.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        population: Option<PathBuf>,
        #[arg(long)]
        store: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_templates(
    store_path: &PathBuf,
) -> Result<Vec<cras_core::enroll::RegisteredTemplate>, HarnessError> {
    let store = TemplateStore::open(store_path)?;
    let templates = store.load_all()?;
    if templates.is_empty() {
        return Err(HarnessError::StoreEmpty(store_path.display().to_string()));
    }
    Ok(templates)
}

fn write_or_print(out: Option<PathBuf>, text: &str, what: &str) -> Result<(), HarnessError> {
    match out {
        Some(path) => {
            std::fs::write(&path, text)?;
            println!("{what} written to {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Enroll {
            config,
            population,
            store,
        } => {
            let config = HarnessConfig::load(config)?;
            let population = Population::load(population)?;
            let store = TemplateStore::open(&store)?;
            let outcome = run_registration(&config, &population, cli.seed)?;
            if cli.verbose {
                for line in &outcome.log {
                    eprintln!("{line}");
                }
            }
            for template in &outcome.templates {
                let path = store.save(template)?;
                println!(
                    "enrolled {} with {} -> {}",
                    template.subject_id,
                    template.music_id,
                    path.display()
                );
            }
            for (subject, reason) in &outcome.failures {
                println!("FAILED {subject}: {reason}");
            }
            println!(
                "{} enrolled, {} failed",
                outcome.templates.len(),
                outcome.failures.len()
            );
            Ok(())
        }
        Command::Matrix {
            config,
            population,
            store,
            out,
        } => {
            let config = HarnessConfig::load(config)?;
            let population = Population::load(population)?;
            let templates = load_templates(&store)?;
            let probes = build_probes(&config, &population, &templates, cli.seed)?;
            if cli.verbose {
                eprintln!("{} templates, {} probes", templates.len(), probes.len());
            }
            let report = run_matrix(&config, &templates, &probes)?;
            std::fs::write(&out, report.to_csv())?;
            print!("{}", report.summary());
            println!("report written to {}", out.display());
            Ok(())
        }
        Command::Decay {
            config,
            population,
            store,
            drifts,
            out,
        } => {
            let config = HarnessConfig::load(config)?;
            let population = Population::load(population)?;
            let templates = load_templates(&store)?;
            let drifts: Vec<f64> = drifts
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| {
                        HarnessError::InvalidArgument(format!("bad drift value {s:?}"))
                    })
                })
                .collect::<Result<_, _>>()?;
            let rows = run_time_decay(&config, &population, &templates, &drifts, cli.seed)?;
            write_or_print(out, &decay_csv(&rows), "decay table")
        }
        Command::Roc {
            input,
            thresholds,
            out,
        } => {
            let report = MatrixReport::from_csv(&std::fs::read_to_string(input)?)?;
            let thresholds = parse_thresholds(&thresholds)?;
            let rows = roc_sweep(&report, &thresholds);
            write_or_print(out, &roc_csv(&rows), "roc table")
        }
        Command::Calibrate {
            config,
            population,
            out,
        } => {
            let config_path = config;
            let mut config = HarnessConfig::load(&config_path)?;
            let population = Population::load(population)?;
            let scoring = calibrate_scales(&config, &population, cli.seed)?;
            println!(
                "calibrated penalty scales: physio {:.3}, neuro {:.3}",
                scoring.penalty_scale_physio, scoring.penalty_scale_neuro
            );
            config.scoring = scoring;
            match out {
                Some(path) => {
                    config.save(&path)?;
                    println!("calibrated config written to {}", path.display());
                }
                None => println!("{}", serde_json::to_string_pretty(&config)?),
            }
            Ok(())
        }
        Command::Plot {
            input,
            out,
            config,
            population,
            store,
        } => {
            let report = MatrixReport::from_csv(&std::fs::read_to_string(input)?)?;
            let (templates, probes) = match (config, population, store) {
                (Some(config), Some(population), Some(store)) => {
                    let config = HarnessConfig::load(config)?;
                    let population = Population::load(population)?;
                    let templates = load_templates(&store)?;
                    let probes = build_probes(&config, &population, &templates, cli.seed)?;
                    (templates, probes)
                }
                _ => (Vec::new(), Vec::new()),
            };
            let written = write_plots(&report, &templates, &probes, &out)?;
            for path in &written {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}
