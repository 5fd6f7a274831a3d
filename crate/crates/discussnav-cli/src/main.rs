//! Command-line front end: run suites, run ablations, generate fixtures.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use discussnav::harness::{
    generate_fixtures, render_ablation_table, render_table, run_ablations, run_suite,
    BackendChoice, FixtureSpec, SuiteConfig, SuiteReport,
};

#[derive(Parser)]
#[command(
    name = "discussnav",
    version,
    about = "Discussion-driven zero-shot navigation over viewpoint graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one suite of episodes and write its report
    Run(RunArgs),
    /// Run the full method plus the four single-group ablations
    Ablate(RunArgs),
    /// Run a suite while recording every backend exchange to a transcript
    Record(RunArgs),
    /// Re-run a suite answering every request from a recorded transcript
    Replay(ReplayArgs),
    /// Generate a synthetic world, episodes, and scripted rules
    GenFixtures(GenArgs),
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Transcript produced by a `record` run
    #[arg(long)]
    transcript: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// TOML suite configuration; every flag below overrides its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// World graph file
    #[arg(long)]
    world: Option<PathBuf>,
    /// Episode file (one JSON object per line)
    #[arg(long)]
    episodes: Option<PathBuf>,
    /// oracle | scripted:<rules.json> | replay:<transcript.jsonl>
    /// (a remote endpoint is configured in the --config file)
    #[arg(long)]
    backend: Option<String>,
    /// Output directory for reports and per-episode records
    #[arg(long)]
    out: Option<PathBuf>,
    /// Row label in result tables
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Step budget per episode
    #[arg(long)]
    max_steps: Option<u32>,
    /// Completions sampled per movement decision
    #[arg(long)]
    n_samples: Option<u32>,
    /// Sampling temperature of the movement decision
    #[arg(long)]
    diversity: Option<f64>,
    /// Extra attempts for failing or malformed requests
    #[arg(long)]
    retry_limit: Option<u32>,
    /// Success distance threshold in meters
    #[arg(long)]
    threshold: Option<f64>,
    /// Worker threads across episodes
    #[arg(long)]
    parallel: Option<usize>,
    /// Record every backend exchange to this transcript file
    #[arg(long)]
    record: Option<PathBuf>,
    /// Prompt template directory (defaults to the built-in pack)
    #[arg(long)]
    prompts: Option<PathBuf>,
    /// Disable an expert group (repeatable): instruction_analysis,
    /// vision_perception, completion_estimation, decision_testing
    #[arg(long = "ablate", value_name = "GROUP")]
    ablate: Vec<String>,
}

#[derive(Args)]
struct GenArgs {
    /// Directory receiving world.json, episodes.jsonl, scripted.json
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 24)]
    viewpoints: usize,
    #[arg(long, default_value_t = 20)]
    episodes: usize,
}

fn main() {
    env_logger::init();
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let config = build_config(&args)?;
            let report = run_suite(&config)?;
            print!("{}", render_table(&[&report]));
            println!();
            println!(
                "report: {}",
                config.out_dir.join("suite_report.json").display()
            );
        }
        Command::Ablate(args) => {
            let config = build_config(&args)?;
            let reports = run_ablations(&config)?;
            let refs: Vec<&SuiteReport> = reports.iter().collect();
            print!("{}", render_ablation_table(&refs));
            println!();
            println!(
                "table: {}",
                config.out_dir.join("ablation_table.txt").display()
            );
        }
        Command::Record(args) => {
            let mut config = build_config(&args)?;
            if config.record_to.is_none() {
                config.record_to = Some(config.out_dir.join("transcript.jsonl"));
            }
            let transcript = config.record_to.clone().expect("just set");
            let report = run_suite(&config)?;
            print!("{}", render_table(&[&report]));
            println!();
            println!("transcript: {}", transcript.display());
        }
        Command::Replay(args) => {
            let replay = BackendChoice::Replay {
                path: args.transcript.clone(),
            };
            let mut config = build_config_with(&args.run, Some(replay))?;
            config.record_to = None;
            let report = run_suite(&config)?;
            print!("{}", render_table(&[&report]));
            println!();
            println!(
                "report: {}",
                config.out_dir.join("suite_report.json").display()
            );
        }
        Command::GenFixtures(args) => {
            let paths = generate_fixtures(&FixtureSpec {
                seed: args.seed,
                viewpoints: args.viewpoints,
                episodes: args.episodes,
                out_dir: args.out,
            })?;
            for path in [&paths.world, &paths.episodes, &paths.scripted, &paths.manifest] {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn build_config(args: &RunArgs) -> Result<SuiteConfig> {
    build_config_with(args, None)
}

fn build_config_with(
    args: &RunArgs,
    backend_override: Option<BackendChoice>,
) -> Result<SuiteConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let body = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<SuiteConfig>(&body)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => {
            let world = args
                .world
                .clone()
                .context("--world is required without --config")?;
            let episodes = args
                .episodes
                .clone()
                .context("--episodes is required without --config")?;
            let backend = match (&backend_override, args.backend.as_deref()) {
                (Some(chosen), _) => chosen.clone(),
                (None, Some(flag)) => parse_backend(flag)?,
                (None, None) => bail!("--backend is required without --config"),
            };
            let out_dir = args
                .out
                .clone()
                .context("--out is required without --config")?;
            SuiteConfig {
                label: "DiscussNav".to_string(),
                world,
                episodes,
                backend,
                agent: Default::default(),
                seed: 0,
                out_dir,
                parallelism: 1,
                record_to: None,
                prompt_pack: None,
            }
        }
    };
    if args.config.is_some() {
        if let Some(world) = &args.world {
            config.world = world.clone();
        }
        if let Some(episodes) = &args.episodes {
            config.episodes = episodes.clone();
        }
        if let Some(backend) = &args.backend {
            config.backend = parse_backend(backend)?;
        }
        if let Some(out) = &args.out {
            config.out_dir = out.clone();
        }
    }
    if let Some(chosen) = backend_override {
        config.backend = chosen;
    }
    if let Some(label) = &args.label {
        config.label = label.clone();
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(max_steps) = args.max_steps {
        config.agent.max_steps = max_steps;
    }
    if let Some(n_samples) = args.n_samples {
        config.agent.decision_sampling.breadth = n_samples;
    }
    if let Some(diversity) = args.diversity {
        config.agent.decision_sampling.diversity = diversity;
    }
    if let Some(retry_limit) = args.retry_limit {
        config.agent.retry_limit = retry_limit;
    }
    if let Some(threshold) = args.threshold {
        config.agent.success_threshold = threshold;
    }
    if let Some(parallel) = args.parallel {
        config.parallelism = parallel;
    }
    if let Some(record) = &args.record {
        config.record_to = Some(record.clone());
    }
    if let Some(prompts) = &args.prompts {
        config.prompt_pack = Some(prompts.clone());
    }
    for group in &args.ablate {
        let group = group
            .parse()
            .map_err(|err: String| anyhow::anyhow!(err))
            .with_context(|| format!("--ablate {group}"))?;
        config.agent.ablation.insert(group);
    }
    Ok(config)
}

fn parse_backend(value: &str) -> Result<BackendChoice> {
    if value == "oracle" {
        return Ok(BackendChoice::Oracle);
    }
    if let Some(path) = value.strip_prefix("scripted:") {
        return Ok(BackendChoice::Scripted { path: path.into() });
    }
    if let Some(path) = value.strip_prefix("replay:") {
        return Ok(BackendChoice::Replay { path: path.into() });
    }
    if value == "remote" {
        bail!(
            "a remote endpoint is configured through --config: set [backend] kind = \"remote\" \
             and a [backend.profile] table with endpoint, model, and credential_env; the \
             credential itself is read only from that environment variable"
        );
    }
    bail!("unknown backend `{value}`; use oracle, scripted:<rules.json>, or replay:<transcript.jsonl>")
}
