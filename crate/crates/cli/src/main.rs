use std::io::Read;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use plantagent::completion::{
    CompletionBackend, OracleBackend, RemoteBackend, RemoteConfig, ReplayBackend,
};
use plantagent::eval::{collect, evaluate_corpus, load_corpus, save_corpus};
use plantagent::orchestrator::{Orchestrator, Outcome};
use plantagent::parser::{parse_function_steps, parse_skill_sequence, steps_to_json, SkillPlan};
use plantagent::plant::server::PlantServer;
use plantagent::plant::{Location, Material, PlantState};
use plantagent::planner::{Planner, DEFAULT_MAX_PLAN_LEN};
use plantagent::prompt::{build_manager_prompt, build_operator_prompt};
use plantagent::task::{bundled_tasks, load_tasks, normalize};
use plantagent::validator::{validate_function_steps, validate_plan};
use plantagent::{Registry, TaskSpec};
use serde_json::json;
use url::Url;

#[derive(Parser)]
#[command(name = "plantagent", version, about = "Agent-driven planning and control of a simulated modular production plant")]
struct Cli {
    /// Digital-twin catalog (TOML); the bundled catalog when omitted.
    #[arg(long, global = true, env = "PLANTAGENT_CATALOG")]
    catalog: Option<PathBuf>,

    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    json: bool,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Oracle,
    Replay,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum Agent {
    Manager,
    Operator,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParseKind {
    Skills,
    Functions,
}

#[derive(clap::Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "oracle")]
    backend: BackendKind,
    /// Recorded completions for the replay backend.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Sampling temperature passed to the backend.
    #[arg(long, default_value_t = 0.0)]
    temperature: f32,
    /// Plan length bound for the oracle backend.
    #[arg(long, default_value_t = DEFAULT_MAX_PLAN_LEN)]
    max_len: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the simulated plant over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 5010)]
        port: u16,
        #[arg(long, default_value = "steel")]
        material: String,
        /// Module whose hand-off holds the workpiece; storage inventory when omitted.
        #[arg(long)]
        workpiece_at: Option<String>,
    },
    /// Print an agent prompt.
    RenderPrompt {
        #[arg(long, value_enum, default_value = "manager")]
        agent: Agent,
        /// Task text for the manager agent.
        #[arg(long)]
        task: Option<String>,
        /// Module id for the operator agent.
        #[arg(long)]
        module: Option<String>,
        /// Skill demand for the operator agent.
        #[arg(long)]
        demand: Option<String>,
        /// Plant base URL shown in functionality endpoints.
        #[arg(long)]
        plant_url: Option<Url>,
    },
    /// Parse a completion read from a file or stdin.
    Parse {
        #[arg(long, value_enum, default_value = "skills")]
        kind: ParseKind,
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Validate a skill plan or functionality steps against a task.
    Validate {
        #[arg(long, value_enum, default_value = "skills")]
        kind: ParseKind,
        /// Comma-separated skill codes, e.g. S1,T1,P2,T1,I3,T1,S2.
        #[arg(long, conflicts_with = "file")]
        plan: Option<String>,
        /// Completion text to parse and validate.
        #[arg(long)]
        file: Option<PathBuf>,
        /// Task text, matched against the task suite.
        #[arg(long)]
        task: Option<String>,
        /// Task specs (JSON list); the bundled suite when omitted.
        #[arg(long)]
        task_spec: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_PLAN_LEN)]
        max_len: usize,
    },
    /// Plan and execute a task against a plant.
    RunTask {
        #[arg(long)]
        task: String,
        #[arg(long)]
        task_spec: Option<PathBuf>,
        /// Running plant; an embedded plant is started when omitted.
        #[arg(long)]
        plant_url: Option<Url>,
        #[arg(long)]
        trace_out: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Sample manager completions for every task into a corpus file.
    Collect {
        #[arg(long)]
        tasks: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Score a corpus of completions.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_PLAN_LEN)]
        max_len: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("tokio runtime");
    match runtime.block_on(run(cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

fn load_registry(path: Option<&Path>) -> Result<Registry> {
    match path {
        Some(p) => Registry::load_catalog(p).with_context(|| format!("loading catalog {}", p.display())),
        None => Ok(Registry::bundled()),
    }
}

fn task_suite(path: Option<&Path>) -> Result<Vec<TaskSpec>> {
    let mut tasks = bundled_tasks();
    if let Some(p) = path {
        let extra = load_tasks(p).with_context(|| format!("loading task specs {}", p.display()))?;
        tasks.splice(0..0, extra);
    }
    Ok(tasks)
}

fn find_task<'t>(tasks: &'t [TaskSpec], text: &str) -> Option<&'t TaskSpec> {
    let wanted = normalize(text).to_lowercase();
    tasks
        .iter()
        .find(|t| t.normalized_instruction().to_lowercase() == wanted)
}

fn read_input(file: Option<&Path>) -> Result<String> {
    match file {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            Ok(s)
        }
    }
}

fn make_backend(
    args: &BackendArgs,
    registry: &Arc<Registry>,
    tasks: Vec<TaskSpec>,
) -> Result<Arc<dyn CompletionBackend>> {
    Ok(match args.backend {
        BackendKind::Oracle => {
            Arc::new(OracleBackend::new(registry.clone(), tasks).with_max_len(args.max_len))
        }
        BackendKind::Replay => {
            let path = args
                .replay
                .as_ref()
                .context("--replay FILE is required for the replay backend")?;
            Arc::new(ReplayBackend::load(path)?)
        }
        BackendKind::Remote => Arc::new(RemoteBackend::new(RemoteConfig::from_env()?)?),
    })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

async fn run(cli: Cli) -> Result<ExitCode> {
    let registry = load_registry(cli.catalog.as_deref())?;
    match cli.command {
        Command::Serve {
            host,
            port,
            material,
            workpiece_at,
        } => {
            let material = match material.to_lowercase().as_str() {
                "steel" => Material::Steel,
                "wood" => Material::Wood,
                other => bail!("unknown material {other:?}"),
            };
            let location = match workpiece_at {
                Some(m) if registry.module(&m).is_none() => bail!("unknown module {m:?}"),
                Some(m) => Location::Module(m),
                None => Location::Inventory,
            };
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .with_context(|| format!("invalid address {host}:{port}"))?;
            let start = PlantState::standard_start(&registry, material, location);
            let server = PlantServer::spawn(Arc::new(registry), start, addr).await?;
            if cli.json {
                println!("{}", json!({ "listening": server.base_url().as_str() }));
            } else {
                println!("plant listening on {}", server.base_url());
            }
            tokio::signal::ctrl_c().await?;
            server.shutdown().await;
            Ok(ExitCode::SUCCESS)
        }

        Command::RenderPrompt {
            agent,
            task,
            module,
            demand,
            plant_url,
        } => {
            let registry = match plant_url {
                Some(u) => registry.rebased(&u),
                None => registry,
            };
            let prompt = match agent {
                Agent::Manager => {
                    let task = task.context("--task is required for the manager prompt")?;
                    build_manager_prompt(&registry, &task)?
                }
                Agent::Operator => {
                    let module = module.context("--module is required for the operator prompt")?;
                    let demand = demand.context("--demand is required for the operator prompt")?;
                    build_operator_prompt(&registry, &module, &demand)?
                }
            };
            if cli.json {
                println!("{}", json!({ "prompt": prompt }));
            } else {
                println!("{prompt}");
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Parse { kind, file } => {
            let text = read_input(file.as_deref())?;
            match kind {
                ParseKind::Skills => {
                    let plan = parse_skill_sequence(&text)?;
                    if cli.json {
                        println!("{}", serde_json::to_string(&plan)?);
                    } else {
                        println!("{}", plan.steps.join(" "));
                    }
                }
                ParseKind::Functions => println!("{}", steps_to_json(&parse_function_steps(&text)?)),
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Validate {
            kind,
            plan,
            file,
            task,
            task_spec,
            max_len,
        } => {
            let tasks = task_suite(task_spec.as_deref())?;
            let spec = match &task {
                Some(t) => find_task(&tasks, t).with_context(|| format!("no task spec for {t:?}"))?,
                None => tasks.first().context("task suite is empty")?,
            };
            let report = match kind {
                ParseKind::Skills => {
                    let plan = match plan {
                        Some(p) => SkillPlan::new(p.split(',').map(str::trim).filter(|s| !s.is_empty())),
                        None => parse_skill_sequence(&read_input(file.as_deref())?)?,
                    };
                    validate_plan(&plan, spec, &Planner::new(&registry).with_max_len(max_len))
                }
                ParseKind::Functions => {
                    let steps = parse_function_steps(&read_input(file.as_deref())?)?;
                    validate_function_steps(&steps, spec, &registry)
                }
            };
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("start: {}", report.initial_state);
                println!("grammar: {}", if report.grammar_ok() { "ok" } else { "violated" });
                for v in &report.grammar.violations {
                    println!("  {}", v.message);
                }
                println!("executable: {}", report.is_executable());
                if let Some(f) = report.executable.as_ref().and_then(|e| e.fault.as_ref()) {
                    println!("  step {} ({}): {}", f.step + 1, f.operation, f.reason);
                }
                println!("satisfies task: {}", report.is_correct());
                println!("minimal: {}", report.is_minimal());
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::RunTask {
            task,
            task_spec,
            plant_url,
            trace_out,
            backend,
        } => {
            let tasks = task_suite(task_spec.as_deref())?;
            let (registry, _embedded) = match plant_url {
                Some(u) => (Arc::new(registry.rebased(&u)), None),
                None => {
                    let start = match find_task(&tasks, &task) {
                        Some(spec) => spec.initial_state(&registry),
                        None => PlantState::standard_start(&registry, Material::Steel, Location::Inventory),
                    };
                    let server = PlantServer::spawn(
                        Arc::new(registry.clone()),
                        start,
                        "127.0.0.1:0".parse().expect("loopback address"),
                    )
                    .await?;
                    tracing::info!(url = %server.base_url(), "embedded plant started");
                    (Arc::new(registry.rebased(&server.base_url())), Some(server))
                }
            };
            let backend_impl = make_backend(&backend, &registry, tasks)?;
            let orch = Orchestrator::new(registry, backend_impl).with_temperature(backend.temperature);
            let trace = orch.run_task(&task).await;
            if let Some(p) = &trace_out {
                write_json(p, &trace)?;
            }
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&trace)?);
            } else {
                if let Some(plan) = &trace.skill_plan {
                    println!("plan: {}", plan.join(" "));
                }
                println!("records: {}", trace.records.len());
                match &trace.abort_reason {
                    None => println!("outcome: completed"),
                    Some(r) => println!("outcome: aborted ({r})"),
                }
            }
            Ok(match trace.outcome {
                Outcome::Completed => ExitCode::SUCCESS,
                Outcome::Aborted => ExitCode::FAILURE,
            })
        }

        Command::Collect {
            tasks,
            n,
            out,
            backend,
        } => {
            let suite = match tasks {
                Some(p) => load_tasks(&p).with_context(|| format!("loading task specs {}", p.display()))?,
                None => bundled_tasks(),
            };
            let registry = Arc::new(registry);
            let b = make_backend(&backend, &registry, suite.clone())?;
            let samples = collect(&suite, n, b.as_ref(), &registry, backend.temperature).await?;
            save_corpus(&out, &samples)?;
            if cli.json {
                println!("{}", json!({ "samples": samples.len(), "out": out }));
            } else {
                println!("wrote {} samples to {}", samples.len(), out.display());
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Evaluate {
            corpus,
            report,
            max_len,
        } => {
            let samples = load_corpus(&corpus)?;
            let result = evaluate_corpus(&samples, &Planner::new(&registry).with_max_len(max_len))?;
            if let Some(p) = &report {
                write_json(p, &result)?;
            }
            let m = &result.metrics;
            if cli.json {
                println!("{}", serde_json::to_string_pretty(m)?);
            } else {
                println!("samples:    {}", m.samples);
                println!("executable: {} ({:.2})", m.executable, m.executable_fraction);
                println!("correct:    {} ({:.2})", m.correct, m.correct_fraction);
                println!("minimal:    {} ({:.2})", m.minimal, m.minimal_fraction);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
