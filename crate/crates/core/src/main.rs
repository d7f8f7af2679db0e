use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qagen_core::metrics::{format_score, EvalReport};
use qagen_core::pipeline::{
    build_table, cmd_evaluate, cmd_generate, cmd_mix, cmd_stats, cmd_validate, render_stats, verify_mix,
    GenerateOptions, PipelineConfig, PipelineError, ReportFormat, ReportGroup,
};

#[derive(Parser)]
#[command(name = "qagen", version, about = "Synthetic extractive QA data generation, mixing and evaluation")]
struct Cli {
    /// Pipeline config (JSON). Required by `generate` and `mix`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output format for tables and stats. Defaults to the config's report_format.
    #[arg(long, global = true, value_enum)]
    format: Option<ReportFormat>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate contexts and QA pairs from seed questions of the input dataset.
    Generate {
        /// Override the config's run_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Serve backend calls from this replay fixture.
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Fail on any request missing from the replay fixture.
        #[arg(long)]
        strict_replay: bool,
        /// Skip generation requests already recorded in the run's provenance file.
        #[arg(long)]
        resume: bool,
    },
    /// Mix the real dataset with a sample of the generated pool.
    Mix {
        /// Override the mix ratio (generated QAs per real QA).
        #[arg(long)]
        ratio: Option<f64>,
        /// Override the mix seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Check that this mix manifest reproduces its recorded output instead of mixing.
        #[arg(long, value_name = "MANIFEST")]
        verify: Option<PathBuf>,
    },
    /// Score predictions ({"id": "answer"}) against a gold dataset.
    Evaluate {
        gold: PathBuf,
        predictions: PathBuf,
        /// Dataset name recorded in the report.
        #[arg(long, default_value = "SQUAD")]
        name: String,
        /// Where to write the full report with per-question scores.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        lenient: bool,
    },
    /// Render a results table from evaluation reports.
    Report {
        /// One table row: NAME=REPORT.json[,REPORT.json...]. Several reports
        /// for the same dataset are averaged.
        #[arg(long = "row", value_name = "NAME=FILES", required = true)]
        rows: Vec<String>,
        /// Add standard-deviation columns across seeds.
        #[arg(long)]
        stddev: bool,
    },
    /// Print article, context and QA counts for a dataset.
    Stats {
        dataset: PathBuf,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        lenient: bool,
    },
    /// List every validation issue in a dataset.
    Validate { dataset: PathBuf },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| PipelineError::Config("this command needs --config".into()))?;
    PipelineConfig::load(path)
}

fn output_format(cli: &Cli) -> ReportFormat {
    cli.format
        .or_else(|| cli.config.as_deref().and_then(|p| PipelineConfig::load(p).ok()).map(|c| c.report_format))
        .unwrap_or_default()
}

fn read_report(path: &Path) -> Result<EvalReport, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))
}

fn parse_row(spec: &str) -> Result<ReportGroup, PipelineError> {
    let (name, files) = spec
        .split_once('=')
        .ok_or_else(|| PipelineError::Config(format!("--row expects NAME=FILES, got {spec:?}")))?;
    let reports = files
        .split(',')
        .filter(|f| !f.is_empty())
        .map(|f| read_report(Path::new(f)))
        .collect::<Result<Vec<_>, _>>()?;
    if reports.is_empty() {
        return Err(PipelineError::Config(format!("row {name:?} names no reports")));
    }
    Ok(ReportGroup { name: name.to_string(), reports })
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    match &cli.command {
        Command::Generate { seed, replay, strict_replay, resume } => {
            let mut cfg = load_config(cli)?;
            if let Some(seed) = seed {
                cfg.run_seed = *seed;
            }
            if let Some(replay) = replay {
                cfg.replay = Some(replay.clone());
            }
            cfg.strict_replay |= strict_replay;
            let out = cmd_generate(&cfg, GenerateOptions { resume: *resume })?;
            let c = &out.manifest.counts;
            println!("run directory: {}", out.run_dir.display());
            println!(
                "seeds {} | contexts {}/{} | candidates {} | kept {}",
                c.seeds, c.contexts_generated, c.contexts_attempted, c.candidates, c.kept
            );
        }
        Command::Mix { ratio, seed, verify } => {
            let mut cfg = load_config(cli)?;
            let mix = cfg
                .mix
                .as_mut()
                .ok_or_else(|| PipelineError::Config("config has no \"mix\" section".into()))?;
            if let Some(ratio) = ratio {
                mix.spec.ratio = *ratio;
            }
            if let Some(seed) = seed {
                mix.spec.seed = *seed;
            }
            if let Some(manifest) = verify {
                let mix = cfg.check_for_mix()?;
                let outcome = verify_mix(manifest, &mix.real, &mix.generated)?;
                println!("verified: {} QAs reproduced", outcome.dataset.num_qas());
            } else {
                let run = cmd_mix(&cfg)?;
                println!("run directory: {}", run.run_dir.display());
                println!(
                    "real {} + generated {} = {} QAs",
                    run.outcome.real_qas,
                    run.outcome.generated_qas,
                    run.outcome.dataset.num_qas()
                );
            }
        }
        Command::Evaluate { gold, predictions, name, out, lenient } => {
            let report = cmd_evaluate(gold, predictions, name, *lenient)?;
            let out = out.clone().unwrap_or_else(|| predictions.with_extension("eval.json"));
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            std::fs::write(&out, text + "\n")?;
            println!(
                "{}: EM {} F1 {} over {} questions ({} without prediction)",
                report.dataset_name,
                format_score(report.em),
                format_score(report.f1),
                report.num_questions,
                report.missing_predictions.len()
            );
            println!("report written to {}", out.display());
        }
        Command::Report { rows, stddev } => {
            let groups = rows.iter().map(|r| parse_row(r)).collect::<Result<Vec<_>, _>>()?;
            print!("{}", build_table(&groups).render(output_format(cli), *stddev));
        }
        Command::Stats { dataset, name, lenient } => {
            let stats = cmd_stats(dataset, *lenient)?;
            let name = name.clone().unwrap_or_else(|| {
                dataset.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
            });
            print!("{}", render_stats(&name, &stats, output_format(cli)));
        }
        Command::Validate { dataset } => {
            let (stats, issues) = cmd_validate(dataset)?;
            for issue in &issues {
                println!("{issue}");
            }
            if !issues.is_empty() {
                return Err(PipelineError::Input(format!(
                    "{} issue(s); {} valid QAs remain",
                    issues.len(),
                    stats.num_qas
                )));
            }
            println!("ok: {} articles, {} contexts, {} QAs", stats.num_articles, stats.num_contexts, stats.num_qas);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
