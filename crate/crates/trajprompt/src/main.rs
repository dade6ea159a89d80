use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use trajprompt::config::PipelineConfig;
use trajprompt::pipeline::{Pipeline, RunSpec};
use trajprompt::report::read_report;
use trajprompt_core::eval::compare_runs;
use trajprompt_core::Variant;

/// Check-in logs to next-POI question-answering corpora, with retrieval,
/// inference and evaluation.
#[derive(Parser, Debug)]
#[command(name = "trajprompt", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Pipeline config file (TOML).
    #[arg(long, global = true, default_value = "trajprompt.toml")]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per CPU).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Debug logging (repeat for trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Recompute stages even when cached outputs are valid.
    #[arg(long, global = true)]
    force: bool,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Args, Debug)]
struct RunFlags {
    /// Prompt variant.
    #[arg(long, global = true, value_enum)]
    variant: Option<VariantArg>,
    /// Replace category names with same-length meaningless strings.
    #[arg(long, global = true)]
    mask: bool,
    /// Comma-separated history check-in budgets, e.g. 100,200,300.
    #[arg(long, global = true, value_delimiter = ',')]
    budget_sweep: Option<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    /// Similarity-ranked history from all users.
    Full,
    /// Current trajectory only.
    NoHistory,
    /// The user's own most recent history, no similarity ranking.
    SelfOnly,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Full => Variant::Full,
            VariantArg::NoHistory => Variant::NoHistory,
            VariantArg::SelfOnly => Variant::SelfHistoryOnly,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse, filter, remap, segment and split the check-in log.
    Preprocess,
    /// Embed key and query prompts of every trajectory into the vector store.
    Embed,
    /// Select history for every trajectory.
    Retrieve,
    /// Write train/validation/test corpora.
    Emit,
    /// Query the inference backend for every test record.
    Predict,
    /// Score predictions, or compare two existing reports.
    Evaluate {
        /// Two report files or directories; prints per-metric deltas of B against A.
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        compare: Option<Vec<PathBuf>>,
    },
    /// Every stage, skipping those whose inputs are unchanged.
    Pipeline,
    /// Print the built-in prompt template as TOML.
    DefaultTemplate,
}

fn load_config(g: &Global) -> anyhow::Result<PipelineConfig> {
    if !g.config.exists() {
        bail!("config file {} not found (pass --config PATH)", g.config.display());
    }
    let mut cfg = PipelineConfig::load(&g.config)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(t) = g.threads {
        cfg.threads = t;
    }
    if let Some(v) = g.run.variant {
        cfg.prompting.variant = v.into();
        if v != VariantArg::Full {
            cfg.retrieval.self_only = false;
        }
    }
    if g.run.mask {
        cfg.prompting.mask = true;
    }
    if let Some(b) = &g.run.budget_sweep {
        cfg.corpus.budget_sweep = b.clone();
    }
    Ok(cfg)
}

fn for_each_run(p: &Pipeline, f: impl Fn(&Pipeline, &RunSpec) -> trajprompt::Result<bool>) -> anyhow::Result<()> {
    for run in p.runs() {
        let ran = f(p, &run)?;
        log::info!("{}: {}", run.tag(), if ran { "done" } else { "up to date" });
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Command::DefaultTemplate = cli.command {
        print!("{}", trajprompt::template_io::default_template_toml());
        return Ok(());
    }
    if let Command::Evaluate { compare: Some(paths) } = &cli.command {
        let a = read_report(&paths[0])?;
        let b = read_report(&paths[1])?;
        let delta = compare_runs(&a, &b).context("reports are not comparable")?;
        print!("{}", delta.to_table());
        return Ok(());
    }
    let cfg = load_config(&cli.global)?;
    let p = Pipeline::new(cfg)?.force(cli.global.force);
    log::debug!("config fingerprint {}", p.config_fingerprint());
    match cli.command {
        Command::Preprocess => {
            p.preprocess()?;
        }
        Command::Embed => {
            p.embed()?;
        }
        Command::Retrieve => for_each_run(&p, Pipeline::retrieve)?,
        Command::Emit => for_each_run(&p, Pipeline::emit)?,
        Command::Predict => for_each_run(&p, Pipeline::predict)?,
        Command::Evaluate { .. } => {
            for_each_run(&p, Pipeline::evaluate)?;
            let runs = p.runs();
            p.write_summary(&runs)?;
            for run in &runs {
                let report = read_report(&p.layout().report_dir(&run.tag()))?;
                println!("== {} ==\n{}", run.tag(), report.to_table());
            }
        }
        Command::Pipeline => {
            let summary = p.run_all()?;
            log::info!("pipeline: {} stage(s) ran, {} up to date", summary.executed.len(), summary.skipped.len());
            let summary_path = p.layout().root.join("reports").join("summary.txt");
            print!("{}", std::fs::read_to_string(&summary_path).unwrap_or_default());
        }
        Command::DefaultTemplate => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
