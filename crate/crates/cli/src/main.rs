use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use llmprior::gateway::ProviderKind;
use llmprior::harness::{
    run_elicitation_experiment, run_elicitation_only, run_memorisation_tests, run_probe_experiment,
    run_selection_experiment, Context, ExperimentConfig, RunReport,
};

#[derive(Parser)]
#[command(name = "llmprior", version, about = "Elicit priors from language models and evaluate them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Elicit the prior table and write elicited_prior.json.
    Elicit(Common),
    /// Posterior performance curves per fold, training size and prior.
    Fit(Common),
    /// In-context probes, KDE posteriors and energy comparisons.
    Probe(Common),
    /// Prior predictive Bayes factors.
    Select(Common),
    /// Header and row memorisation tests.
    Memtest(Common),
    /// Rerun an experiment offline from the response cache.
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        experiment: Experiment,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Override the experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the provider kind.
    #[arg(long, value_enum)]
    provider: Option<Provider>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Provider {
    Http,
    Mock,
    Replay,
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Elicit,
    Fit,
    Probe,
    Select,
    Memtest,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(&self.config)
            .with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        match self.provider {
            Some(Provider::Http) => config.provider.kind = ProviderKind::HttpOpenaiCompatible,
            Some(Provider::Mock) => config.provider.kind = ProviderKind::Mock,
            Some(Provider::Replay) => config.use_replay()?,
            None => {}
        }
        Ok(config)
    }
}

fn run(experiment: Experiment, config: ExperimentConfig) -> Result<bool> {
    let ctx = Context::new(config)?;
    let report: RunReport = match experiment {
        Experiment::Elicit => {
            let table = run_elicitation_only(&ctx)?;
            println!(
                "elicited {} components over {} features -> {}",
                table.k(),
                table.d(),
                ctx.config.output_dir.join("elicited_prior.json").display()
            );
            return Ok(true);
        }
        Experiment::Fit => run_elicitation_experiment(&ctx)?,
        Experiment::Probe => run_probe_experiment(&ctx)?,
        Experiment::Select => run_selection_experiment(&ctx)?,
        Experiment::Memtest => run_memorisation_tests(&ctx)?,
    };
    println!(
        "{}: {} cells, {} failures, config {} -> {}",
        report.experiment,
        report.cells.len(),
        report.failures.len(),
        &report.config_hash[..12],
        ctx.config.output_dir.join(&report.experiment).display()
    );
    for f in &report.failures {
        eprintln!("failed: {}: {}", f.cell, f.reason);
    }
    let stats = ctx.llm.stats();
    println!(
        "gateway: {} calls ({} network, {} mock, {} replayed, {} retries)",
        stats.calls, stats.network_calls, stats.mock_calls, stats.replayed, stats.retries
    );
    Ok(report.success())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Elicit(c) => c.load().and_then(|cfg| run(Experiment::Elicit, cfg)),
        Command::Fit(c) => c.load().and_then(|cfg| run(Experiment::Fit, cfg)),
        Command::Probe(c) => c.load().and_then(|cfg| run(Experiment::Probe, cfg)),
        Command::Select(c) => c.load().and_then(|cfg| run(Experiment::Select, cfg)),
        Command::Memtest(c) => c.load().and_then(|cfg| run(Experiment::Memtest, cfg)),
        Command::Replay { common, experiment } => common
            .load()
            .and_then(|mut cfg| {
                cfg.use_replay()?;
                Ok(cfg)
            })
            .and_then(|cfg| run(*experiment, cfg)),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
