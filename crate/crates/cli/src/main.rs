use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use geoforge_core::pipeline::{self, Dataset, KeyEntry, PipelineConfig, Prediction};
use geoforge_core::translator::{Backend, ExternalBackend};

#[derive(Parser)]
#[command(
    name = "geoforge",
    version,
    about = "Generate numerically verified plane-geometry problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TranslatorKind {
    Template,
    External,
}

#[derive(clap::Args)]
struct Common {
    /// JSON file with pipeline settings; unset fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    translator: Option<TranslatorKind>,
    #[arg(long)]
    llm_endpoint: Option<String>,
    #[arg(long)]
    llm_model: Option<String>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::from_json_file(p)?,
            None => PipelineConfig::default(),
        };
        match self.translator {
            Some(TranslatorKind::Template) => cfg.translator = Backend::Template,
            Some(TranslatorKind::External) => {
                let Some(endpoint) = &self.llm_endpoint else {
                    bail!("--translator external needs --llm-endpoint");
                };
                let model = self.llm_model.as_deref().unwrap_or("gpt-4o");
                cfg.translator = Backend::External(ExternalBackend::new(endpoint, model));
            }
            None => {}
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from fresh base scenes.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed_start: Option<u64>,
        /// Number of base scenes.
        #[arg(long)]
        count: Option<usize>,
        /// Stop after this many records.
        #[arg(long)]
        max_records: Option<usize>,
    },
    /// Extend the deepest scenes of a dataset and sample them again.
    Bootstrap {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        quantile: Option<f64>,
        #[arg(long)]
        extra_steps: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Select a tiered numeric test split.
    Curate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        per_tier: usize,
        /// Defaults to `<in>/testset`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print length, premise-ratio, tier and template distributions.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Replay every record; exits nonzero if any fails.
    Verify {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Score predictions against an answer key.
    Check {
        /// JSONL lines of {"id", "prediction"}.
        #[arg(long)]
        pred: PathBuf,
        /// JSONL lines of {"id", "answer"}.
        #[arg(long)]
        key: PathBuf,
    },
}

fn print_summary(s: &pipeline::RunSummary, out: &Path) {
    println!(
        "{} records from {} of {} scenes written to {}",
        s.records,
        s.scenes_emitted,
        s.scenes_attempted,
        out.display()
    );
    for (reason, n) in &s.failures {
        println!("  skipped {n} x {reason}");
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate {
            common,
            out,
            seed_start,
            count,
            max_records,
        } => {
            let mut cfg = common.config()?;
            if let Some(s) = seed_start {
                cfg.seed_start = s;
            }
            if let Some(c) = count {
                cfg.count = c;
            }
            if max_records.is_some() {
                cfg.max_records = max_records;
            }
            let s = pipeline::generate(&cfg, &out)?;
            print_summary(&s, &out);
        }
        Command::Bootstrap {
            common,
            input,
            out,
            quantile,
            extra_steps,
            iterations,
        } => {
            let mut cfg = common.config()?;
            if let Some(q) = quantile {
                cfg.bootstrap.quantile = q;
            }
            if let Some(x) = extra_steps {
                cfg.bootstrap.extra_steps = x;
            }
            if let Some(i) = iterations {
                cfg.bootstrap.iterations = i;
            }
            let s = pipeline::bootstrap(&cfg, &input, &out)?;
            print_summary(&s, &out);
        }
        Command::Curate {
            input,
            per_tier,
            out,
        } => {
            let out = out.unwrap_or_else(|| input.join("testset"));
            let n = pipeline::curate(&input, &out, per_tier)?;
            println!("{n} test items written to {}", out.display());
        }
        Command::Stats { input, json } => {
            let ds = Dataset::load(&input)?;
            if ds.records.is_empty() {
                bail!("{} holds no records", input.display());
            }
            let rep = pipeline::stats(&ds.records);
            if json {
                println!("{}", serde_json::to_string_pretty(&rep)?);
            } else {
                print!("{}", rep.to_text());
            }
        }
        Command::Verify { input } => {
            let ds = Dataset::load(&input)?;
            let results = pipeline::verify_dataset(&ds, Some(&input));
            let failed: Vec<_> = results.iter().filter_map(|r| r.as_ref().err()).collect();
            for f in &failed {
                println!("FAIL {f}");
            }
            println!(
                "{} of {} records verified",
                results.len() - failed.len(),
                results.len()
            );
            if !failed.is_empty() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Check { pred, key } => {
            let preds: Vec<Prediction> = pipeline::read_jsonl(&pred)?;
            let keys: Vec<KeyEntry> = pipeline::read_jsonl(&key)?;
            let rep = pipeline::check_predictions(&preds, &keys).context("checking predictions")?;
            println!("{}", serde_json::to_string_pretty(&rep)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
