//! `evabs`: provision a vehicle registry, run charging sessions against it
//! and replay the attack suite.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use evabs_core::attacks::{self, AttackConfig, AttackError, AttackReport};
use evabs_core::protocol::EndTrigger;
use evabs_core::registry::{invoices_jsonl, load_registry, save_registry};
use evabs_core::sim::{derive_seed, run_scenario, Scenario, ScenarioError, Schedule, ScheduleEvent};
use evabs_core::{
    Block128, GroupKey, Key256, PrngState, Registry, RegistryError, Server, SessionPhase,
    VehicleCredentials,
};

const SEED_GROUP_KEY: u64 = 0x6b67;
const SEED_ENROLL: u64 = 0x656e;
const SEED_SESSION: u64 = 0x7365;

#[derive(Debug, Parser)]
#[command(name = "evabs", version, about = "EV charging authentication and billing simulator")]
struct Cli {
    /// Registry file.
    #[arg(long, global = true, env = "EVABS_REGISTRY", default_value = "registry.json")]
    registry: PathBuf,
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create an empty registry with a fresh group key.
    Init {
        /// Price per started second of charging, in minor units.
        #[arg(long, default_value_t = 2)]
        tariff: u64,
        /// Replace an existing registry file.
        #[arg(long)]
        force: bool,
    },
    /// Enroll a vehicle. Missing id or key are generated and printed once.
    Register {
        #[arg(long, value_name = "HEX32")]
        vehicle: Option<String>,
        #[arg(long, value_name = "HEX64")]
        key: Option<String>,
        /// Opening prepaid balance, in minor units.
        #[arg(long, default_value_t = 0)]
        balance: i64,
        #[arg(long, default_value = "")]
        owner: String,
    },
    /// Disable a vehicle's registration.
    Revoke {
        #[arg(long, value_name = "HEX32")]
        vehicle: String,
    },
    /// Run one honest charging session and bill it.
    Session(SessionArgs),
    /// Run a named attack scenario or a scenario script.
    Attack(AttackArgs),
    /// Print issued invoices as JSON Lines.
    Invoices {
        #[arg(long, value_name = "HEX32")]
        vehicle: Option<String>,
    },
}

#[derive(Debug, Args)]
struct SessionArgs {
    #[arg(long, value_name = "HEX32")]
    vehicle: String,
    /// Charge for this many milliseconds.
    #[arg(long, value_name = "MS")]
    duration: Option<u64>,
    /// Stop once this amount is used up.
    #[arg(long)]
    budget: Option<u64>,
    /// Write the frame transcript as JSON Lines.
    #[arg(long, value_name = "PATH")]
    transcript: Option<PathBuf>,
    /// Write the session summary.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AttackArgs {
    /// Shipped scenario name or path to a scenario script.
    #[arg(value_name = "NAME|PATH", required_unless_present = "scenario")]
    name: Option<String>,
    #[arg(long, value_name = "NAME|PATH", conflicts_with = "name")]
    scenario: Option<String>,
    #[arg(long, default_value_t = 2)]
    tariff: u64,
    #[arg(long, value_name = "PATH")]
    transcript: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Protocol(String),
    #[error("{0}")]
    Storage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Protocol(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Storage(_) => 3,
        }
    }
}

impl From<RegistryError> for CliError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::Storage(_) => CliError::Storage(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<AttackError> for CliError {
    fn from(e: AttackError) -> Self {
        match e {
            AttackError::UnknownScenario(name) => CliError::Usage(format!(
                "unknown scenario `{name}`; expected a file path or one of: {}",
                attacks::scenario_names().collect::<Vec<_>>().join(", ")
            )),
            AttackError::Scenario(e) => e.into(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("evabs: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::Init { tariff, force } => init(cli, *tariff, *force),
        Command::Register {
            vehicle,
            key,
            balance,
            owner,
        } => register(cli, vehicle.as_deref(), key.as_deref(), *balance, owner),
        Command::Revoke { vehicle } => revoke(cli, vehicle),
        Command::Session(args) => session(cli, args),
        Command::Attack(args) => attack(cli, args),
        Command::Invoices { vehicle } => invoices(cli, vehicle.as_deref()),
    }
}

fn parse_id(hex: &str) -> Result<Block128, CliError> {
    Block128::from_hex(hex).map_err(|e| CliError::Usage(format!("--vehicle: {e}")))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Storage(format!("{}: {e}", path.display())))
}

fn random_bytes<const N: usize>(prng: &mut PrngState) -> [u8; N] {
    let mut out = [0u8; N];
    prng.fill_bytes(&mut out).expect("seeded generator is never all-zero");
    out
}

fn init(cli: &Cli, tariff: u64, force: bool) -> Result<u8, CliError> {
    if cli.registry.exists() && !force {
        return Err(CliError::Usage(format!(
            "{} already exists; pass --force to replace it",
            cli.registry.display()
        )));
    }
    let mut prng = PrngState::from_seed(derive_seed(cli.seed, SEED_GROUP_KEY, 0));
    let group_key = GroupKey(Key256(random_bytes(&mut prng)));
    save_registry(&Registry::new(group_key, tariff), &cli.registry)?;
    if cli.json {
        println!(
            "{}",
            json!({ "registry": cli.registry, "tariff_per_second": tariff, "group_key": group_key.0 })
        );
    } else {
        println!("created {} (tariff {tariff}/s)", cli.registry.display());
        println!("group key (install on terminals, shown once): {}", group_key.0.to_hex());
    }
    Ok(0)
}

fn register(
    cli: &Cli,
    vehicle: Option<&str>,
    key: Option<&str>,
    balance: i64,
    owner: &str,
) -> Result<u8, CliError> {
    let mut registry = load_registry(&cli.registry)?;
    let mut prng = PrngState::from_seed(derive_seed(
        cli.seed,
        SEED_ENROLL,
        registry.vehicles.len() as u64,
    ));
    let id_a = match vehicle {
        Some(h) => parse_id(h)?,
        None => Block128(random_bytes(&mut prng)),
    };
    let k_a = match key {
        Some(h) => Key256::from_hex(h).map_err(|e| CliError::Usage(format!("--key: {e}")))?,
        None => Key256(random_bytes(&mut prng)),
    };
    registry.register_vehicle(id_a, k_a, balance, owner)?;
    save_registry(&registry, &cli.registry)?;
    if cli.json {
        println!(
            "{}",
            json!({ "id_a": id_a, "k_a": key.is_none().then_some(k_a), "balance": balance })
        );
    } else {
        println!("registered vehicle {}", id_a.to_hex());
        if key.is_none() {
            println!("vehicle key (install in the vehicle, shown once): {}", k_a.to_hex());
        }
    }
    Ok(0)
}

fn revoke(cli: &Cli, vehicle: &str) -> Result<u8, CliError> {
    let id = parse_id(vehicle)?;
    let server = Server::open(&cli.registry)?;
    server.revoke(&id)?;
    if cli.json {
        println!("{}", json!({ "revoked": id }));
    } else {
        println!("revoked vehicle {}", id.to_hex());
    }
    Ok(0)
}

fn session(cli: &Cli, args: &SessionArgs) -> Result<u8, CliError> {
    if args.duration.is_none() && args.budget.is_none() {
        return Err(CliError::Usage("session needs --duration or --budget".into()));
    }
    let id = parse_id(&args.vehicle)?;
    let registry = load_registry(&cli.registry)?;
    let record = registry
        .record_by_id(&id)
        .ok_or_else(|| CliError::Usage(format!("vehicle {} is not enrolled", id.to_hex())))?;
    let creds = VehicleCredentials {
        id_a: record.id_a,
        k_a: record.k_a,
    };
    // the vehicle's generator position follows from how often it has
    // authenticated, so reruns on an updated registry draw fresh nonces
    let seed = derive_seed(cli.seed, SEED_SESSION, record.used_nonces.len() as u64);
    let scenario = Scenario {
        schedule: Schedule::new().push(
            0,
            ScheduleEvent::Session {
                vehicle: 0,
                terminal: 0,
                duration_ms: args.duration,
                budget: args.budget,
            },
        ),
        ..Scenario::default()
    };
    let out = run_scenario(
        vec![creds],
        Server::with_store(registry, &cli.registry),
        &scenario,
        seed,
    )?;
    if let Some(path) = &args.transcript {
        write_file(path, &out.transcript.to_jsonl())?;
    }
    if let Some(note) = out.notes.iter().find(|n| n.contains("storage")) {
        return Err(CliError::Storage(note.clone()));
    }

    let s = &out.sessions[0];
    let run = out.run_for(0);
    let trace = out.merged_trace(0).unwrap_or_default();
    let invoice = run.and_then(|r| r.invoice.clone());
    let end = run.and_then(|r| r.end);
    let balance = out.registry.record_by_id(&id).map(|r| r.balance);

    let failure = match s.phase {
        SessionPhase::Completed { .. } if invoice.is_some() => None,
        SessionPhase::Failed { reason } => Some(reason.to_string()),
        SessionPhase::Completed { .. } => Some("no invoice issued".to_string()),
        other => Some(format!("session stalled in {other:?}")),
    };
    let t4_consistent = match (&invoice, trace.t4) {
        (Some(inv), Some(t4)) => t4 == inv.t5.0 - inv.t1.0,
        _ => false,
    };

    let summary = if cli.json {
        json!({
            "vehicle": id,
            "phase": s.phase,
            "failure": failure,
            "t1": trace.t1,
            "t2": trace.t2,
            "t4": trace.t4,
            "t5": invoice.as_ref().map(|i| i.t5),
            "end": end.map(end_name),
            "invoice": invoice,
            "balance": balance,
        })
        .to_string()
    } else {
        let mut text = format!("vehicle {}\n", id.to_hex());
        match (&invoice, &failure) {
            (Some(inv), None) => {
                text.push_str(&format!(
                    "  charged {} -> {} ({})\n",
                    inv.t1,
                    inv.t5,
                    end.map(end_name).unwrap_or("?")
                ));
                text.push_str(&format!(
                    "  vehicle display t4: {} ms\n",
                    trace.t4.unwrap_or_default()
                ));
                text.push_str(&format!(
                    "  invoice: {} ms, amount {}, balance {}\n",
                    inv.duration_ms,
                    inv.amount,
                    balance.unwrap_or_default()
                ));
            }
            (_, Some(reason)) => text.push_str(&format!("  session failed: {reason}\n")),
            (None, None) => unreachable!(),
        }
        text
    };
    print!("{summary}");
    if cli.json {
        println!();
    }
    if let Some(path) = &args.report {
        write_file(path, &summary)?;
    }

    if let Some(reason) = &failure {
        return Err(CliError::Protocol(format!("session failed: {reason}")));
    }
    if !t4_consistent {
        return Err(CliError::Protocol(
            "vehicle display time disagrees with the billed duration".into(),
        ));
    }
    Ok(0)
}

fn end_name(e: EndTrigger) -> &'static str {
    match e {
        EndTrigger::TargetReached => "target reached",
        EndTrigger::BudgetExhausted => "budget exhausted",
        EndTrigger::CableRemoved => "cable removed",
        EndTrigger::VehicleRefused => "vehicle refused",
    }
}

fn attack(cli: &Cli, args: &AttackArgs) -> Result<u8, CliError> {
    let target = args
        .name
        .as_deref()
        .or(args.scenario.as_deref())
        .expect("clap requires a scenario");
    let cfg = AttackConfig {
        seed: cli.seed,
        tariff_per_second: args.tariff,
        ..AttackConfig::default()
    };
    let report: AttackReport = if attacks::shipped_scenario(target).is_some() {
        attacks::run_named(target, &cfg)?
    } else if Path::new(target).is_file() {
        let text = std::fs::read_to_string(target)
            .map_err(|e| CliError::Storage(format!("{target}: {e}")))?;
        attacks::run_custom(target, &text, &cfg)?
    } else {
        return Err(AttackError::UnknownScenario(target.into()).into());
    };
    if let Some(path) = &args.transcript {
        write_file(path, &report.transcript.to_jsonl())?;
    }
    let rendered = if cli.json {
        report.to_json() + "\n"
    } else {
        report.to_text()
    };
    print!("{rendered}");
    if let Some(path) = &args.report {
        write_file(path, &rendered)?;
    }
    Ok(if report.defense_held { 0 } else { 1 })
}

fn invoices(cli: &Cli, vehicle: Option<&str>) -> Result<u8, CliError> {
    let registry = load_registry(&cli.registry)?;
    let filter = vehicle.map(parse_id).transpose()?;
    let selected: Vec<_> = registry
        .invoices
        .iter()
        .filter(|i| filter.map_or(true, |id| i.id_a == id))
        .cloned()
        .collect();
    print!("{}", invoices_jsonl(&selected));
    Ok(0)
}
