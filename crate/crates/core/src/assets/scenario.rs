use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature_model::FeatureConfiguration;
use crate::management::{ManageError, Manager, MessageRequest};
use crate::network::{FlowTrace, Mechanism, ServiceNetwork};
use crate::policy::EnactmentReport;

/// Set to `1` to rewrite golden traces instead of comparing against them.
pub const UPDATE_GOLDEN_ENV: &str = "VSN_UPDATE_GOLDEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Scenario {
    pub name: String,
    pub tenant: String,
    /// Configuration files, relative to the case directory, applied in order.
    pub setup: Vec<String>,
    pub steps: Vec<ScenarioStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStep {
    pub message: MessageRequest,
    #[serde(default)]
    pub expect: Expectation,
}

/// What one injection must produce. Absent fields are not checked; lists
/// compare exactly and in order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Expectation {
    /// Disposition kinds, e.g. `Delivered`, `PendingJoin`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispositions: Option<Vec<String>>,
    /// `NODE:interaction` for every delivered branch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delivered: Option<Vec<String>>,
    /// Interactions sent by route rules.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interactions: Option<Vec<String>>,
    /// Internal events raised by process rules.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<Vec<String>>,
    /// `Service.task -> count`; an empty map asserts no invocation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invocations: Option<BTreeMap<String, usize>>,
}

fn compare<T: PartialEq + fmt::Debug>(what: &str, expected: &Option<T>, actual: T, out: &mut Vec<String>) {
    if let Some(e) = expected {
        if *e != actual {
            out.push(format!("{what}: expected {e:?}, got {actual:?}"));
        }
    }
}

impl Expectation {
    /// Every unmet expectation, as a readable line.
    pub fn check(&self, trace: &FlowTrace) -> Vec<String> {
        let mut out = Vec::new();
        let strings = |v: Vec<&str>| v.into_iter().map(String::from).collect::<Vec<_>>();
        compare("dispositions", &self.dispositions, strings(trace.disposition_kinds()), &mut out);
        let delivered = trace.delivered().into_iter().map(|(n, i)| format!("{n}:{i}")).collect();
        compare("delivered", &self.delivered, delivered, &mut out);
        let routed = trace.routed().into_iter().map(|(_, i)| i.to_string()).collect();
        compare("interactions", &self.interactions, routed, &mut out);
        compare("events", &self.events, strings(trace.emitted_events()), &mut out);
        let mut counts = BTreeMap::new();
        for (service, task) in trace.invocations() {
            *counts.entry(format!("{service}.{task}")).or_insert(0) += 1;
        }
        compare("invocations", &self.invocations, counts, &mut out);
        out
    }
}

fn known_names(net: &ServiceNetwork) -> (BTreeSet<String>, BTreeSet<String>) {
    let doc = net.topology();
    let mut interactions = BTreeSet::new();
    let mut events = BTreeSet::new();
    for r in &doc.rules {
        interactions.extend(r.matches.iter().cloned());
        match &r.mechanism {
            Mechanism::Route { to } => interactions.extend(to.iter().map(|t| t.interaction.clone())),
            Mechanism::Synchronize { task } => {
                interactions.insert(task.clone());
            }
            Mechanism::Process { emit, .. } => events.extend(emit.iter().cloned()),
            _ => {}
        }
    }
    (interactions, events)
}

impl Scenario {
    /// Reads a scenario file; its case directory is the parent of the
    /// `scenarios/` directory holding it.
    pub fn load(path: &Path) -> Result<(Scenario, PathBuf), String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let scenario = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let case_dir = path
            .canonicalize()
            .map_err(|e| e.to_string())?
            .parent()
            .and_then(Path::parent)
            .map(Path::to_path_buf)
            .ok_or_else(|| format!("{}: no case directory", path.display()))?;
        Ok((scenario, case_dir))
    }

    /// Checks that setup files exist and that every expectation names
    /// interactions, nodes, events and tasks the topology defines.
    pub fn check(&self, case_dir: &Path, net: &ServiceNetwork) -> Result<(), String> {
        for f in &self.setup {
            if !case_dir.join(f).is_file() {
                return Err(format!("setup file `{f}` does not exist"));
            }
        }
        let (interactions, events) = known_names(net);
        let nodes: BTreeSet<&str> = net.node_ids().collect();
        let interaction = |i: &str| {
            if interactions.contains(i) {
                Ok(())
            } else {
                Err(format!("interaction `{i}` is not defined in the topology"))
            }
        };
        let node = |n: &str| {
            if nodes.contains(n) {
                Ok(())
            } else {
                Err(format!("unknown node `{n}`"))
            }
        };
        for step in &self.steps {
            node(&step.message.at)?;
            interaction(&step.message.interaction)?;
            let e = &step.expect;
            for i in e.interactions.iter().flatten() {
                interaction(i)?;
            }
            for d in e.delivered.iter().flatten() {
                let (n, i) = d
                    .split_once(':')
                    .ok_or_else(|| format!("delivered entry `{d}` is not NODE:interaction"))?;
                node(n)?;
                interaction(i)?;
            }
            for ev in e.events.iter().flatten() {
                if !events.contains(ev) {
                    return Err(format!("event `{ev}` is never raised by the topology"));
                }
            }
            for k in e.invocations.iter().flat_map(|m| m.keys()) {
                let ok = k
                    .split_once('.')
                    .and_then(|(s, t)| net.stub(s).map(|stub| stub.has_task(t)))
                    .unwrap_or(false);
                if !ok {
                    return Err(format!("unknown stub task `{k}`"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("setup `{file}` failed: {message}")]
    Setup { file: String, message: String },
}

/// A management service that scenarios and benchmarks can drive, either in
/// process or over HTTP.
pub trait ServiceTarget {
    /// Creates the tenant if needed and tears down any existing VSN.
    fn prepare_tenant(&self, tenant: &str) -> Result<(), ScenarioError>;
    fn apply(&self, tenant: &str, config: &FeatureConfiguration) -> Result<EnactmentReport, ScenarioError>;
    fn inject(&self, tenant: &str, message: &MessageRequest) -> Result<FlowTrace, ScenarioError>;
}

fn transport(e: ManageError) -> ScenarioError {
    ScenarioError::Transport(e.to_string())
}

impl ServiceTarget for Manager {
    fn prepare_tenant(&self, tenant: &str) -> Result<(), ScenarioError> {
        match self.create_tenant(tenant) {
            Ok(_) | Err(ManageError::DuplicateTenant(_)) => {}
            Err(e) => return Err(transport(e)),
        }
        self.teardown(tenant).map(drop).map_err(transport)
    }

    fn apply(&self, tenant: &str, config: &FeatureConfiguration) -> Result<EnactmentReport, ScenarioError> {
        self.apply_configuration(tenant, config.clone(), None).map_err(|e| ScenarioError::Setup {
            file: tenant.to_string(),
            message: e.to_string(),
        })
    }

    fn inject(&self, tenant: &str, message: &MessageRequest) -> Result<FlowTrace, ScenarioError> {
        Manager::inject(self, tenant, message.clone()).map_err(transport)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StepReport {
    pub index: usize,
    pub at: String,
    pub interaction: String,
    pub passed: bool,
    pub failures: Vec<String>,
    pub trace: FlowTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScenarioReport {
    pub scenario: String,
    pub tenant: String,
    pub passed: bool,
    pub steps: Vec<StepReport>,
}

impl fmt::Display for ScenarioReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
        writeln!(f, "{} {} (tenant {})", verdict(self.passed), self.scenario, self.tenant)?;
        for s in &self.steps {
            writeln!(f, "  {} step {}: {} at {}", verdict(s.passed), s.index + 1, s.interaction, s.at)?;
            for line in &s.failures {
                writeln!(f, "      {line}")?;
            }
        }
        Ok(())
    }
}

impl ScenarioReport {
    pub fn golden_path(case_dir: &Path, scenario: &str) -> PathBuf {
        case_dir.join("scenarios").join("golden").join(format!("{scenario}.json"))
    }

    fn traces(&self) -> Vec<&FlowTrace> {
        self.steps.iter().map(|s| &s.trace).collect()
    }

    /// Compares the traces with the stored golden file, or rewrites the
    /// file when [`UPDATE_GOLDEN_ENV`] is `1`.
    pub fn check_golden(&self, case_dir: &Path) -> Result<(), String> {
        let path = Self::golden_path(case_dir, &self.scenario);
        let actual = serde_json::to_value(self.traces()).expect("traces serialize");
        if std::env::var(UPDATE_GOLDEN_ENV).is_ok_and(|v| v == "1") {
            fs::create_dir_all(path.parent().expect("golden dir")).map_err(|e| e.to_string())?;
            let text = serde_json::to_string_pretty(&actual).expect("traces serialize") + "\n";
            return fs::write(&path, text).map_err(|e| e.to_string());
        }
        let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let golden: serde_json::Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        if golden == actual {
            return Ok(());
        }
        let (g, a) = (golden.as_array(), actual.as_array());
        let step = (0..self.steps.len())
            .find(|&i| g.and_then(|g| g.get(i)) != a.and_then(|a| a.get(i)))
            .map_or(String::new(), |i| format!(" at step {}", i + 1));
        Err(format!("trace differs from {}{step}", path.display()))
    }
}

/// Prepares the tenant, applies the setup configurations, and runs every
/// step against `target`.
pub fn run_scenario(
    case_dir: &Path,
    scenario: &Scenario,
    target: &dyn ServiceTarget,
) -> Result<ScenarioReport, ScenarioError> {
    target.prepare_tenant(&scenario.tenant)?;
    for file in &scenario.setup {
        let mut cfg: FeatureConfiguration = fs::read_to_string(case_dir.join(file))
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
            .map_err(|message| ScenarioError::Setup { file: file.clone(), message })?;
        cfg.tenant_id = scenario.tenant.clone();
        target.apply(&scenario.tenant, &cfg).map_err(|e| match e {
            ScenarioError::Setup { message, .. } => ScenarioError::Setup { file: file.clone(), message },
            other => other,
        })?;
    }
    let mut steps = Vec::new();
    for (index, step) in scenario.steps.iter().enumerate() {
        let trace = target.inject(&scenario.tenant, &step.message)?;
        let failures = step.expect.check(&trace);
        steps.push(StepReport {
            index,
            at: step.message.at.clone(),
            interaction: step.message.interaction.clone(),
            passed: failures.is_empty(),
            failures,
            trace,
        });
    }
    Ok(ScenarioReport {
        scenario: scenario.name.clone(),
        tenant: scenario.tenant.clone(),
        passed: steps.iter().all(|s| s.passed),
        steps,
    })
}
