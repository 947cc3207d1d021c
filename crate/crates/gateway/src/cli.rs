//! The `holdmeter` command line.
//!
//! Output is JSON on stdout. Failures print the same error body the HTTP API
//! returns, on stderr, and exit with a status that names their class: 2 usage,
//! 3 validation, 4 authorization, 5 state, 6 not found, 7 storage.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use holdmeter::engine::SessionId;
use holdmeter::oracle::{enumerate, EnumerationOptions};
use holdmeter::planner::{plan, Mode};
use holdmeter::registry::{parse_records, DatasetId, FailureKind, Mutation, Principal, RecordKind, Registry};
use holdmeter::simulator::{replay_trace, run_trials, AdversaryStrategy, SimulationConfig, TracePoint};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::api::{now_ms, open_registry, serve};
use crate::config::{Config, ENV_TOKEN};
use crate::wire::{ApiError, MeterView, PlanRequest, PlanResponse, RotateResponse};

#[derive(Debug, Parser)]
#[command(name = "holdmeter", version, about = "Plan and meter test-set reuse")]
pub struct Cli {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Credential for commands that touch the registry (default: $HOLDMETER_TOKEN).
    #[arg(long, global = true)]
    pub token: Option<String>,
    /// Replaying a mutation with a used key returns the stored result.
    #[arg(long, global = true)]
    pub idempotency_key: Option<String>,
    /// Reject the mutation unless the session is at this sequence number.
    #[arg(long, global = true)]
    pub expected_seq: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the minimal test-set size for a meter configuration.
    Plan(PlanArgs),
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Register and read labeled datasets
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Create and inspect metered sessions
    #[command(subcommand)]
    Session(SessionCommand),
    /// Score a predictions file (`{"id": ..., "pred": ...}` per line).
    Submit {
        #[arg(long)]
        session: String,
        #[arg(long)]
        file: PathBuf,
    },
    /// Undo the latest submission, spending one revert.
    Revert {
        #[arg(long)]
        session: String,
    },
    /// Pass the session to the next tenant.
    Handoff {
        #[arg(long)]
        session: String,
    },
    /// Replace an exhausted session's test set.
    Rotate {
        #[arg(long)]
        session: String,
        #[arg(long)]
        test: String,
    },
    /// Close a session for good
    Close {
        #[arg(long)]
        session: String,
    },
    /// Monte-Carlo check of the guarantee against a simulated developer.
    Simulate {
        /// Plan request file (TOML or JSON).
        #[arg(long)]
        spec: PathBuf,
        /// Strategy file (TOML or JSON).
        #[arg(long)]
        strategy: PathBuf,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override the planned test-set size.
        #[arg(long)]
        test_size: Option<u64>,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
    },
    /// Count submission-tree nodes by brute force.
    Enumerate {
        #[arg(long)]
        m: usize,
        #[arg(long = "T")]
        steps: u32,
        #[arg(long, default_value = "regular")]
        mode: Mode,
        #[arg(long, value_delimiter = ',')]
        reverts: Option<Vec<u32>>,
        #[arg(long, value_delimiter = ',')]
        tenancy: Option<Vec<u32>>,
    },
    /// Signals a recorded accuracy trace would have received.
    Trace {
        #[arg(long)]
        spec: PathBuf,
        /// JSON list of `{"val_accuracy": .., "test_accuracy": ..}`.
        #[arg(long)]
        file: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Plan request file (TOML or JSON); flags are ignored when given.
    #[arg(long, conflicts_with_all = ["mode", "m", "steps", "epsilon", "delta"])]
    pub file: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long = "T")]
    pub steps: Option<u32>,
    /// One value for a uniform schedule, or one per signal.
    #[arg(long, value_delimiter = ',')]
    pub epsilon: Vec<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub cuts: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub tenancy: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    pub revert_steps: Vec<u32>,
    #[arg(long)]
    pub conservative_multitenant: bool,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Register a labels file (`{"id": ..., "label": ...}` per line).
    Add {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        sealed: bool,
        #[arg(long)]
        id: Option<String>,
    },
    /// Labels, or ids only when the caller may not see them.
    Read { id: String },
    Info { id: String },
    List,
}

#[derive(Debug, Subcommand)]
pub enum SessionCommand {
    Create {
        /// Plan request file (TOML or JSON).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        val: String,
        #[arg(long)]
        test: String,
    },
    Status { id: String },
    History { id: String },
    Summary { id: String },
    Meter { id: String },
    List,
}

fn missing(field: &str) -> ApiError {
    ApiError::validation("invalid_spec", format!("--{field} is required")).with_details(json!({ "field": field }))
}

impl PlanArgs {
    fn request(&self) -> Result<PlanRequest, ApiError> {
        if let Some(path) = &self.file {
            return read_structured(path);
        }
        let (epsilon, epsilons) = match self.epsilon.as_slice() {
            [] => return Err(missing("epsilon")),
            [e] => (Some(*e), None),
            many => (None, Some(many.to_vec())),
        };
        Ok(PlanRequest {
            mode: self.mode.ok_or_else(|| missing("mode"))?,
            m: self.m,
            bands: None,
            cuts: self.cuts.clone(),
            epsilon,
            epsilons,
            delta: self.delta.ok_or_else(|| missing("delta"))?,
            steps: self.steps.ok_or_else(|| missing("T"))?,
            tenancy: self.tenancy.clone(),
            revert_budget: None,
            revert_steps: self.revert_steps.clone(),
            conservative_multitenant: self.conservative_multitenant,
        })
    }
}

fn input_error(path: &Path, reason: impl std::fmt::Display) -> ApiError {
    ApiError::validation("bad_input_file", format!("{}: {reason}", path.display()))
}

/// Parse a TOML (by extension) or JSON file.
fn read_structured<T: DeserializeOwned>(path: &Path) -> Result<T, ApiError> {
    let text = std::fs::read_to_string(path).map_err(|e| input_error(path, e))?;
    if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| input_error(path, e))
    } else {
        serde_json::from_str(&text).map_err(|e| input_error(path, e))
    }
}

fn open_records(path: &Path, kind: RecordKind) -> Result<holdmeter::registry::LabelMap, ApiError> {
    let file = File::open(path).map_err(|e| input_error(path, e))?;
    Ok(parse_records(BufReader::new(file), kind)?)
}

fn to_value(v: impl serde::Serialize) -> Value {
    serde_json::to_value(v).expect("responses serialize")
}

/// Registry access for one CLI invocation.
struct Ctx {
    registry: Registry,
    principal: Principal,
    mutation: Mutation,
}

impl Ctx {
    fn new(cli: &Cli, config: &Config, env: &dyn Fn(&str) -> Option<String>) -> Result<Self, ApiError> {
        if config.storage.is_none() {
            return Err(ApiError::validation(
                "no_storage",
                "registry commands need a storage directory (config `storage` or HOLDMETER_STORAGE)",
            ));
        }
        let token = cli.token.clone().or_else(|| env(ENV_TOKEN)).ok_or_else(ApiError::unauthenticated)?;
        let principal = config.authenticate(&token).ok_or_else(ApiError::unauthenticated)?;
        Ok(Self {
            registry: open_registry(config)?,
            principal,
            mutation: Mutation {
                expected_seq: cli.expected_seq,
                idempotency_key: cli.idempotency_key.clone(),
            },
        })
    }
}

/// Execute `cli`, reading environment variables through `env`.
pub fn run(cli: Cli, env: impl Fn(&str) -> Option<String>) -> Result<Value, ApiError> {
    let config = Config::load(cli.config.as_deref(), &env)
        .map_err(|e| ApiError::validation("bad_config", e.to_string()))?;
    let sid = |s: &str| SessionId::from(s);
    let did = |s: &str| DatasetId::from(s);

    match &cli.command {
        Command::Plan(args) => {
            let spec = args.request()?.into_spec()?;
            let report = plan(&spec)?;
            Ok(to_value(PlanResponse { spec, report }))
        }
        Command::Serve { bind } => {
            let mut config = config;
            if let Some(bind) = bind {
                config.bind = bind.clone();
            }
            let runtime = tokio::runtime::Runtime::new()
                .map_err(|e| ApiError::new(FailureKind::Storage, "runtime_failed", e.to_string()))?;
            runtime.block_on(serve(config))?;
            Ok(json!({ "stopped": true }))
        }
        Command::Simulate {
            spec,
            strategy,
            trials,
            seed,
            test_size,
            confidence,
        } => {
            let spec = read_structured::<PlanRequest>(spec)?.into_spec()?;
            let strategy: AdversaryStrategy = read_structured(strategy)?;
            let config = SimulationConfig {
                trials: *trials,
                seed: *seed,
                test_size: *test_size,
                confidence: *confidence,
            };
            Ok(to_value(run_trials(&spec, &strategy, config)?))
        }
        Command::Enumerate {
            m,
            steps,
            mode,
            reverts,
            tenancy,
        } => {
            let options = EnumerationOptions {
                reverts: reverts.as_deref(),
                tenancy: tenancy.as_deref(),
            };
            Ok(to_value(enumerate(*m, *steps, *mode, options)?))
        }
        Command::Trace { spec, file } => {
            let spec = read_structured::<PlanRequest>(spec)?.into_spec()?;
            let points: Vec<TracePoint> = read_structured(file)?;
            Ok(to_value(replay_trace(&points, &spec)?))
        }
        Command::Dataset(cmd) => {
            let mut ctx = Ctx::new(&cli, &config, &env)?;
            let (reg, p) = (&mut ctx.registry, &ctx.principal);
            match cmd {
                DatasetCommand::Add { file, sealed, id } => {
                    let items = open_records(file, RecordKind::Label)?;
                    let id = reg.register_dataset(p, id.as_deref().map(did), items, *sealed, now_ms(), &ctx.mutation)?;
                    Ok(to_value(reg.dataset_info(p, &id)?))
                }
                DatasetCommand::Read { id } => Ok(to_value(reg.read_labels(p, &did(id))?)),
                DatasetCommand::Info { id } => Ok(to_value(reg.dataset_info(p, &did(id))?)),
                DatasetCommand::List => Ok(json!({ "datasets": reg.list_datasets(p) })),
            }
        }
        Command::Session(cmd) => {
            let mut ctx = Ctx::new(&cli, &config, &env)?;
            let (reg, p) = (&mut ctx.registry, &ctx.principal);
            match cmd {
                SessionCommand::Create { spec, val, test } => {
                    let spec = read_structured::<PlanRequest>(spec)?.into_spec()?;
                    Ok(to_value(reg.create_session(p, spec, did(val), did(test), now_ms(), &ctx.mutation)?))
                }
                SessionCommand::Status { id } => Ok(to_value(reg.status(p, &sid(id))?)),
                SessionCommand::History { id } => Ok(to_value(reg.history(p, &sid(id))?)),
                SessionCommand::Summary { id } => Ok(to_value(reg.session_summary(p, &sid(id))?)),
                SessionCommand::Meter { id } => Ok(to_value(MeterView::new(&reg.session_summary(p, &sid(id))?))),
                SessionCommand::List => Ok(json!({ "sessions": reg.list_sessions(p) })),
            }
        }
        Command::Submit { session, file } => {
            let mut ctx = Ctx::new(&cli, &config, &env)?;
            let preds = open_records(file, RecordKind::Prediction)?;
            Ok(to_value(ctx.registry.submit(&ctx.principal, &sid(session), preds, now_ms(), &ctx.mutation)?))
        }
        Command::Revert { session } => {
            let mut ctx = Ctx::new(&cli, &config, &env)?;
            Ok(to_value(ctx.registry.revert(&ctx.principal, &sid(session), now_ms(), &ctx.mutation)?))
        }
        Command::Handoff { session } => {
            let mut ctx = Ctx::new(&cli, &config, &env)?;
            Ok(to_value(ctx.registry.handoff(&ctx.principal, &sid(session), now_ms(), &ctx.mutation)?))
        }
        Command::Rotate { session, test } => {
            let mut ctx = Ctx::new(&cli, &config, &env)?;
            let (retired, report) =
                ctx.registry.rotate(&ctx.principal, &sid(session), did(test), now_ms(), &ctx.mutation)?;
            Ok(to_value(RotateResponse { retired, report }))
        }
        Command::Close { session } => {
            let mut ctx = Ctx::new(&cli, &config, &env)?;
            Ok(to_value(ctx.registry.close(&ctx.principal, &sid(session), now_ms(), &ctx.mutation)?))
        }
    }
}
