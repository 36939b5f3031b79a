use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use launchpulse::hn::DateRange;
use launchpulse::model::DataLayout;
use launchpulse::pipeline::{exit_code, FileConfig, FlagOverrides, Pipeline, RunConfig, Stage};
use launchpulse::synth::{generate_corpus, render_api_fixtures, write_corpus, SynthSpec};
use launchpulse::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "launchpulse",
    version,
    about = "Hacker News launches versus GitHub star growth"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML file with run settings; flags and environment take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// First posting date (inclusive).
    #[arg(long, global = true)]
    from: Option<String>,
    /// Last posting date (inclusive when given as a date).
    #[arg(long, global = true)]
    to: Option<String>,
    /// Comma-separated search keywords.
    #[arg(long, global = true)]
    keywords: Option<String>,
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Response cache root [env: LAUNCHPULSE_CACHE_DIR].
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Canned API responses used with --offline.
    #[arg(long, global = true)]
    fixtures_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Serve every request from the fixture directory; never touch the network.
    #[arg(long, global = true)]
    offline: bool,
    /// Page cap per search keyword and per stargazer listing.
    #[arg(long, global = true)]
    max_pages: Option<u32>,
    /// GitHub requests per hour.
    #[arg(long, global = true)]
    rate_budget: Option<u32>,
    /// Comma-separated: pre_launch_only, with_leaky.
    #[arg(long, global = true)]
    feature_sets: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Search Hacker News and pair posts with repositories.
    FetchHn,
    /// Fetch repository metadata and stargazer histories.
    FetchGh {
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Bucket star histories around each launch.
    Align,
    /// Build feature rows and design matrices.
    Features,
    /// Event curves, launch effects and group comparisons.
    Study,
    /// Robust regressions for the timing and format contrasts.
    Infer,
    /// Train and evaluate the predictive models.
    Model,
    /// Dataset table, summaries and the output manifest.
    Report,
    /// Generate a synthetic corpus with ground truth.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        /// Data root receiving raw/ and synth/.
        #[arg(long)]
        out: PathBuf,
        /// Also render the corpus as canned API responses here.
        #[arg(long)]
        fixtures_out: Option<PathBuf>,
    },
    /// Every stage in order.
    All {
        /// Run on a generated corpus instead of fetching, then verify it.
        #[arg(long)]
        synth: Option<PathBuf>,
    },
}

fn split(list: &Option<String>) -> Option<Vec<String>> {
    list.as_ref().map(|s| vec![s.clone()])
}

fn resolve(g: &GlobalArgs) -> Result<RunConfig> {
    let file = match &g.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let flags = FlagOverrides {
        from: g.from.clone(),
        to: g.to.clone(),
        keywords: split(&g.keywords),
        data_dir: g.data_dir.clone(),
        cache_dir: g.cache_dir.clone(),
        out_dir: g.out_dir.clone(),
        fixtures_dir: g.fixtures_dir.clone(),
        seed: g.seed,
        offline: g.offline,
        max_pages: g.max_pages,
        rate_budget: g.rate_budget,
        feature_sets: split(&g.feature_sets),
    };
    RunConfig::resolve(&flags, &|k| std::env::var(k).ok(), &file)
}

fn run(cli: Cli) -> Result<()> {
    let mut config = resolve(&cli.global)?;
    let stage = match cli.command {
        Command::FetchHn => Stage::FetchHn,
        Command::FetchGh { pairs } => {
            config.pairs = pairs;
            Stage::FetchGh
        }
        Command::Align => Stage::Align,
        Command::Features => Stage::Features,
        Command::Study => Stage::Study,
        Command::Infer => Stage::Infer,
        Command::Model => Stage::Model,
        Command::Report => Stage::Report,
        Command::Synth {
            spec,
            out,
            fixtures_out,
        } => {
            let spec = SynthSpec::load(&spec)?;
            let corpus = generate_corpus(&spec)?;
            write_corpus(&corpus, &DataLayout::new(&out))?;
            if let Some(dir) = fixtures_out {
                let range = DateRange::new(config.range.start, config.range.end)?;
                render_api_fixtures(&corpus, &dir, range, &config.keywords)?;
            }
            log::info!(
                "synthetic corpus of {} repositories written to {}",
                spec.n_repos,
                out.display()
            );
            return Ok(());
        }
        Command::All { synth } => {
            let pipeline = Pipeline::new(config);
            let reports = match synth {
                Some(path) => pipeline.run_synth(&SynthSpec::load(&path)?)?,
                None => pipeline.run_all()?,
            };
            let warnings: usize = reports.iter().map(|r| r.warnings.len()).sum();
            log::info!("all stages finished with {warnings} warnings");
            return Ok(());
        }
    };
    Pipeline::new(config).run_stage(stage).map(|_| ())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let result = run(Cli::parse());
    if let Err(e) = &result {
        match e {
            Error::MissingInput(path) => eprintln!("error: missing input {}", path.display()),
            other => eprintln!("error: {other}"),
        }
    }
    ExitCode::from(exit_code(&result) as u8)
}
