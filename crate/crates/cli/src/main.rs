use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dlfuzz::bridge::ExecRequest;
use dlfuzz::campaign::{
    executor_from_config, load_campaign, Campaign, CampaignError, Clock, Deps, FrozenClock,
    SystemClock,
};
use dlfuzz::config::{AgentConfig, Budget, CampaignConfig, ConfigError, ExecutorConfig};
use dlfuzz::llm::{LlmError, SutProfile};
use dlfuzz::oracle::{classify, BackendKind};

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SHIM: u8 = 3;
const EXIT_STORAGE: u8 = 4;
const EXIT_CORRUPT: u8 = 5;

#[derive(Parser)]
#[command(name = "dlfuzz", version, about = "LLM-driven differential fuzzing of deep-learning compilers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start a new campaign.
    Run(RunArgs),
    /// Continue a campaign to its original budget.
    Resume {
        #[arg(long)]
        workdir: PathBuf,
        /// Record zero wall time for every iteration.
        #[arg(long)]
        frozen_clock: bool,
    },
    /// Re-execute a logged test and classify it again.
    Replay {
        #[arg(long)]
        workdir: PathBuf,
        #[arg(long)]
        id: u64,
        #[arg(long)]
        atol: Option<f64>,
        #[arg(long)]
        rtol: Option<f64>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Campaign configuration (TOML). Flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "hours")]
    iterations: Option<u64>,
    /// Wall-clock budget in hours.
    #[arg(long)]
    hours: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    atol: Option<f64>,
    #[arg(long)]
    rtol: Option<f64>,
    /// Profile directory or profile.toml.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Operator-set file.
    #[arg(long)]
    opset: Option<PathBuf>,
    /// Campaign directory; must be empty or absent.
    #[arg(long)]
    workdir: Option<PathBuf>,
    #[arg(long)]
    llm_analysis_endpoint: Option<String>,
    #[arg(long)]
    llm_analysis_model: Option<String>,
    #[arg(long)]
    llm_generation_endpoint: Option<String>,
    #[arg(long)]
    llm_generation_model: Option<String>,
    /// Replay agent replies from this transcript.
    #[arg(long)]
    mock_transcript: Option<PathBuf>,
    /// Shim command line, split on whitespace.
    #[arg(long)]
    shim_cmd: Option<String>,
    /// Record zero wall time for every iteration.
    #[arg(long)]
    frozen_clock: bool,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<CampaignError> for Failure {
    fn from(e: CampaignError) -> Self {
        let code = match &e {
            CampaignError::Config(_) | CampaignError::Opsel(_) => EXIT_CONFIG,
            CampaignError::Llm(LlmError::Profile(_) | LlmError::Transcript(_)) => EXIT_CONFIG,
            CampaignError::Bridge(_) => EXIT_SHIM,
            CampaignError::Storage(_) => EXIT_STORAGE,
            CampaignError::Corrupt(_) | CampaignError::IdMismatch { .. } => EXIT_CORRUPT,
            _ => EXIT_OTHER,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: e.to_string(),
        }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

fn cwd_path(p: PathBuf) -> PathBuf {
    std::path::absolute(&p).unwrap_or(p)
}

fn agent(
    existing: Option<AgentConfig>,
    endpoint: Option<String>,
    model: Option<String>,
    which: &str,
) -> Result<Option<AgentConfig>, Failure> {
    match (existing, endpoint, model) {
        (existing, None, None) => Ok(existing),
        (Some(mut a), endpoint, model) => {
            if let Some(e) = endpoint {
                a.endpoint = e;
            }
            if let Some(m) = model {
                a.model = m;
            }
            Ok(Some(a))
        }
        (None, Some(e), Some(m)) => Ok(Some(AgentConfig::new(e, m))),
        (None, _, _) => Err(config_error(format!(
            "--llm-{which}-endpoint and --llm-{which}-model must be given together"
        ))),
    }
}

fn resolve_run_config(args: RunArgs) -> Result<(CampaignConfig, bool), Failure> {
    let budget = match (args.iterations, args.hours) {
        (Some(n), _) => Some(Budget::Iterations(n)),
        (_, Some(h)) => Some(Budget::Hours(h)),
        _ => None,
    };
    let mut config = match &args.config {
        Some(path) => CampaignConfig::load(path)?,
        None => {
            let (Some(profile), Some(opset), Some(budget)) = (&args.profile, &args.opset, budget) else {
                return Err(config_error(
                    "without --config, --profile, --opset and --iterations or --hours are required",
                ));
            };
            CampaignConfig::new(cwd_path(profile.clone()), cwd_path(opset.clone()), budget)
        }
    };
    if let Some(b) = budget {
        config.budget = b;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(a) = args.atol {
        config.tolerance.atol = a;
    }
    if let Some(r) = args.rtol {
        config.tolerance.rtol = r;
    }
    if let Some(p) = args.profile {
        config.profile = cwd_path(p);
    }
    if let Some(o) = args.opset {
        config.opset = cwd_path(o);
    }
    if let Some(w) = args.workdir {
        config.workdir = Some(cwd_path(w));
    }
    if let Some(t) = args.mock_transcript {
        config.llm.mock_transcript = Some(cwd_path(t));
    }
    config.llm.analysis = agent(
        config.llm.analysis.take(),
        args.llm_analysis_endpoint,
        args.llm_analysis_model,
        "analysis",
    )?;
    config.llm.generation = agent(
        config.llm.generation.take(),
        args.llm_generation_endpoint,
        args.llm_generation_model,
        "generation",
    )?;
    if let Some(cmd) = args.shim_cmd {
        config.executor = ExecutorConfig::Shim {
            command: cmd.split_whitespace().map(str::to_string).collect(),
        };
    }
    config.validate()?;
    if config.workdir.is_none() {
        return Err(config_error("no workdir: pass --workdir or set workdir in the config"));
    }
    Ok((config, args.frozen_clock))
}

fn clock(frozen: bool) -> Box<dyn Clock> {
    if frozen {
        Box::new(FrozenClock)
    } else {
        Box::new(SystemClock::new())
    }
}

fn replay_program() -> String {
    std::env::current_exe()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|_| "dlfuzz".into())
}

fn finish(campaign: &mut Campaign) -> Result<(), Failure> {
    let summary = campaign.run()?;
    eprintln!("{summary}");
    println!("{}", summary.to_json());
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let (config, frozen) = resolve_run_config(args)?;
    let workdir = config.workdir.clone().expect("checked");
    let deps = Deps::from_config(&config)?;
    let mut campaign =
        Campaign::create(config, &workdir, deps, clock(frozen))?.with_replay_program(replay_program());
    finish(&mut campaign)
}

fn cmd_resume(workdir: &Path, frozen: bool) -> Result<(), Failure> {
    let mut campaign = Campaign::open(workdir, clock(frozen))?.with_replay_program(replay_program());
    if campaign.budget_exhausted() {
        log::info!("campaign already complete after {} iterations", campaign.state.iteration);
    }
    finish(&mut campaign)
}

fn cmd_replay(workdir: &Path, id: u64, atol: Option<f64>, rtol: Option<f64>) -> Result<(), Failure> {
    let loaded = load_campaign(workdir)?;
    let record = loaded.store.read_record(id)?;
    if id >= loaded.state.iteration {
        return Err(CampaignError::MissingRecord(id).into());
    }
    let (Some(test), Some(seed), Some(recorded)) = (&record.test, record.exec_seed, record.classification())
    else {
        return Err(Failure {
            code: EXIT_OTHER,
            message: format!("record {id} has no executed test"),
        });
    };
    let mut config = loaded.config;
    if let Some(a) = atol {
        config.tolerance.atol = a;
    }
    if let Some(r) = rtol {
        config.tolerance.rtol = r;
    }
    if !config.tolerance.is_valid() {
        return Err(config_error("atol and rtol must be non-negative"));
    }
    let profile = SutProfile::load(&config.profile).map_err(CampaignError::from)?;
    let mut executor = executor_from_config(&config, &profile.name)?;
    let request = ExecRequest {
        test_id: id,
        source: test.source.clone(),
        backends: vec![BackendKind::Eager, BackendKind::Compiled],
        timeout_s: config.loop_.timeout_s,
        want_coverage: false,
        seed,
    };
    let response = executor.execute(&request).map_err(CampaignError::from)?;
    let (Some(eager), Some(compiled)) = (
        response.result(BackendKind::Eager),
        response.result(BackendKind::Compiled),
    ) else {
        return Err(Failure {
            code: EXIT_SHIM,
            message: "executor response lacks a backend".into(),
        });
    };
    let outcome = classify(eager, compiled, &config.tolerance);
    println!("recorded: {recorded}");
    println!("replayed: {}", outcome.classification);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Resume {
            workdir,
            frozen_clock,
        } => cmd_resume(&workdir, frozen_clock),
        Command::Replay {
            workdir,
            id,
            atol,
            rtol,
        } => cmd_replay(&workdir, id, atol, rtol),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
