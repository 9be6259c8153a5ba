//! Operator commands. Exit codes: 0 success, 1 validation or scenario
//! failure, 2 transport or configuration error.

use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use vsn_core::assets::{run_overhead_bench, run_scenario, summarize, BenchRow, CaseStudy, Scenario};
use vsn_core::feature_model::{validate_configuration, FeatureConfiguration, FeatureModel};
use vsn_core::network::{SimClock, SystemClock};

use crate::client::{Client, ClientError};
use crate::dot::export_dot;
use crate::server;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "vsn", version, about = "Multi-tenant service network management")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the management service over a case-study directory.
    Serve {
        #[arg(long)]
        assets: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Directory for the persisted state snapshot.
        #[arg(long)]
        state: Option<PathBuf>,
        /// Sleep for each stub's configured latency.
        #[arg(long)]
        simulate_latency: bool,
    },
    /// Validate a configuration file against a feature model file.
    Validate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Create the tenant if needed and apply a configuration.
    Apply {
        #[arg(long)]
        url: String,
        #[arg(long)]
        tenant: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        expected_version: Option<u64>,
    },
    /// Run a scenario file against a server.
    Simulate {
        #[arg(long)]
        url: String,
        /// Overrides the scenario's tenant.
        #[arg(long)]
        tenant: Option<String>,
        #[arg(long)]
        scenario: PathBuf,
        /// Also compare traces with the scenario's golden file.
        #[arg(long)]
        golden: bool,
    },
    /// Provision fresh tenants one after another and record the overhead.
    Bench {
        #[arg(long)]
        url: String,
        #[arg(long)]
        requests: usize,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Unrecorded provisioning requests sent first.
        #[arg(long, default_value_t = 1)]
        warmup: usize,
    },
    /// Print the topology as a Graphviz digraph.
    ExportDot {
        #[arg(long)]
        assets: PathBuf,
        /// Highlight the VSN of one of the case study's tenants.
        #[arg(long)]
        tenant: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Minimum request count for a meaningful fit.
pub const MIN_BENCH_REQUESTS: usize = 10;

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

type Outcome = Result<i32, String>;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = if code == EXIT_OK { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    let mut io = Io { out, err };
    match execute(cli.command, &mut io) {
        Ok(code) => code,
        Err(message) => {
            let _ = writeln!(io.err, "error: {message}");
            EXIT_ERROR
        }
    }
}

fn execute(command: Command, io: &mut Io<'_>) -> Outcome {
    match command {
        Command::Serve { assets, port, host, state, simulate_latency } => {
            serve(&assets, SocketAddr::new(host, port), state, simulate_latency, io)
        }
        Command::Validate { model, config } => validate(&model, &config, io),
        Command::Apply { url, tenant, config, expected_version } => apply(&url, &tenant, &config, expected_version, io),
        Command::Simulate { url, tenant, scenario, golden } => simulate(&url, tenant, &scenario, golden, io),
        Command::Bench { url, requests, config, out, warmup } => bench(&url, requests, &config, &out, warmup, io),
        Command::ExportDot { assets, tenant, out } => dot(&assets, tenant.as_deref(), out.as_deref(), io),
    }
}

fn serve(assets: &Path, addr: SocketAddr, state: Option<PathBuf>, latency: bool, io: &mut Io<'_>) -> Outcome {
    let case = CaseStudy::load(assets).map_err(|e| e.to_string())?;
    for warning in case.coverage_lint() {
        let _ = writeln!(io.err, "warning: {warning}");
    }
    let mut manager = case.manager(Arc::new(SystemClock)).map_err(|e| e.to_string())?;
    if let Some(dir) = state {
        manager = manager.with_state_dir(dir).map_err(|e| e.to_string())?;
    }
    manager.network().set_simulate_latency(latency);
    server::serve_forever(Arc::new(manager), addr).map_err(|e| e.to_string())?;
    Ok(EXIT_OK)
}

fn validate(model: &Path, config: &Path, io: &mut Io<'_>) -> Outcome {
    let text = std::fs::read_to_string(model).map_err(|e| format!("{}: {e}", model.display()))?;
    let model = FeatureModel::from_json(&text).map_err(|e| format!("{}: {e}", model.display()))?;
    let config: FeatureConfiguration = read_json(config)?;
    let result = validate_configuration(&model, &config);
    let _ = writeln!(io.out, "{result}");
    Ok(if result.valid { EXIT_OK } else { EXIT_INVALID })
}

fn client_outcome(e: ClientError, io: &mut Io<'_>) -> Outcome {
    match &e {
        ClientError::Api { status: 422, body } => {
            let _ = writeln!(io.err, "{}", body.message);
            Ok(EXIT_INVALID)
        }
        _ => Err(e.to_string()),
    }
}

fn apply(url: &str, tenant: &str, config: &Path, expected: Option<u64>, io: &mut Io<'_>) -> Outcome {
    let client = Client::new(url).map_err(|e| e.to_string())?;
    let mut cfg: FeatureConfiguration = read_json(config)?;
    cfg.tenant_id = tenant.to_string();
    if let Err(e) = client.ensure_tenant(tenant) {
        return client_outcome(e, io);
    }
    match client.put_configuration(tenant, &cfg, expected) {
        Ok(report) => {
            let _ = writeln!(io.out, "{}", pretty(&report));
            Ok(EXIT_OK)
        }
        Err(e) => client_outcome(e, io),
    }
}

fn simulate(url: &str, tenant: Option<String>, path: &Path, golden: bool, io: &mut Io<'_>) -> Outcome {
    let client = Client::new(url).map_err(|e| e.to_string())?;
    let (mut scenario, case_dir): (Scenario, PathBuf) = Scenario::load(path)?;
    if let Some(t) = tenant {
        scenario.tenant = t;
    }
    let report = run_scenario(&case_dir, &scenario, &client).map_err(|e| e.to_string())?;
    let _ = write!(io.out, "{report}");
    let mut passed = report.passed;
    if golden {
        if let Err(diff) = report.check_golden(&case_dir) {
            let _ = writeln!(io.out, "FAIL golden: {diff}");
            passed = false;
        }
    }
    Ok(if passed { EXIT_OK } else { EXIT_INVALID })
}

fn bench(url: &str, requests: usize, config: &Path, out: &Path, warmup: usize, io: &mut Io<'_>) -> Outcome {
    if requests < MIN_BENCH_REQUESTS {
        return Err(format!("bench needs at least {MIN_BENCH_REQUESTS} requests"));
    }
    let client = Client::new(url).map_err(|e| e.to_string())?;
    let cfg: FeatureConfiguration = read_json(config)?;
    let rows = run_overhead_bench(&client, &cfg, requests, warmup).map_err(|e| e.to_string())?;
    std::fs::write(out, BenchRow::to_csv(&rows)).map_err(|e| format!("{}: {e}", out.display()))?;
    let _ = writeln!(io.out, "{}", pretty(&summarize(&rows)));
    Ok(EXIT_OK)
}

fn dot(assets: &Path, tenant: Option<&str>, out: Option<&Path>, io: &mut Io<'_>) -> Outcome {
    let case = CaseStudy::load(assets).map_err(|e| e.to_string())?;
    let doc = vsn_core::network::TopologyDoc::from_json(&case.topology).map_err(|e| e.to_string())?;
    let projection = match tenant {
        None => None,
        Some(t) => {
            let cfg = case.tenants.get(t).ok_or_else(|| {
                let known: Vec<&str> = case.tenants.keys().map(String::as_str).collect();
                format!("unknown tenant `{t}`; available: {}", known.join(", "))
            })?;
            let manager = case.manager(Arc::new(SimClock::new(0))).map_err(|e| e.to_string())?;
            manager.create_tenant(t).map_err(|e| e.to_string())?;
            manager.apply_configuration(t, cfg.clone(), None).map_err(|e| e.to_string())?;
            Some(manager.network().projection(t))
        }
    };
    let text = export_dot(&case.model.name, &doc, projection.as_ref());
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))?,
        None => {
            let _ = write!(io.out, "{text}");
        }
    }
    Ok(EXIT_OK)
}
