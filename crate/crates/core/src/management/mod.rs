//! Management plane: tenant records, configuration requests, overhead
//! metrics, and snapshot persistence, independent of any transport.

mod persist;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{Catalog, ChangeReport, ControlError, ControlPlane, VsnStatus};
use crate::events::{diff_events, initial_events, Phase};
use crate::feature_model::{validate_configuration, FeatureConfiguration, FeatureModel, ValidationResult};
use crate::network::{Clock, FlowTrace, Message, NetworkError, Payload, ServiceNetwork, TableProjection};
use crate::policy::{lint, EnactmentError, EnactmentReport, LintWarning, Policy};

pub use persist::{PersistError, Snapshot, STATE_FILE};

#[derive(Debug, Error)]
pub enum ManageError {
    #[error("unknown tenant `{0}`")]
    UnknownTenant(String),
    #[error("tenant `{0}` already exists")]
    DuplicateTenant(String),
    #[error("tenant `{tenant}` is at version {actual}, not {expected}")]
    VersionConflict { tenant: String, expected: u64, actual: u64 },
    #[error("tenant `{tenant}` has no configuration")]
    NoConfiguration { tenant: String },
    #[error("configuration is invalid:\n{0}")]
    Invalid(ValidationResult),
    #[error(transparent)]
    ActionFailed(#[from] EnactmentError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TenantRecord {
    pub tenant_id: String,
    #[serde(default)]
    pub current_configuration: Option<FeatureConfiguration>,
    #[serde(default)]
    pub last_report: Option<EnactmentReport>,
    /// Bumped by every successful configuration change or teardown.
    pub version: u64,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
    pub updated_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OverheadSample {
    pub request_id: String,
    pub tenant_id: String,
    pub phase: Phase,
    pub overhead_ms: f64,
    pub event_count: usize,
    pub action_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VsnView {
    pub status: VsnStatus,
    pub installed_collaborations: Vec<String>,
    pub installed_units: Vec<String>,
    pub table_projection: TableProjection,
}

/// Body of a message injection request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MessageRequest {
    pub at: String,
    pub interaction: String,
    pub instance_id: String,
    #[serde(default)]
    pub payload: Payload,
}

/// Static inputs of a managed service network.
#[derive(Debug, Clone)]
pub struct Assets {
    pub model: FeatureModel,
    pub network: Arc<ServiceNetwork>,
    pub catalog: Catalog,
    pub policy: Policy,
}

pub struct Manager {
    model: FeatureModel,
    policy: Policy,
    control: ControlPlane,
    tenants: RwLock<BTreeMap<String, TenantRecord>>,
    metrics: Mutex<Vec<OverheadSample>>,
    request_seq: AtomicU64,
    state_dir: Option<PathBuf>,
    persist_lock: Mutex<()>,
}

impl std::fmt::Debug for Manager {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Manager").field("model", &self.model.name).finish_non_exhaustive()
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl Manager {
    pub fn new(assets: Assets) -> Result<Self, ManageError> {
        let control = ControlPlane::new(assets.network, assets.catalog)?;
        Ok(Manager {
            model: assets.model,
            policy: assets.policy,
            control,
            tenants: RwLock::new(BTreeMap::new()),
            metrics: Mutex::new(Vec::new()),
            request_seq: AtomicU64::new(0),
            state_dir: None,
            persist_lock: Mutex::new(()),
        })
    }

    /// Loads any snapshot in `dir` and persists every later change there.
    pub fn with_state_dir(mut self, dir: impl Into<PathBuf>) -> Result<Self, ManageError> {
        let dir = dir.into();
        if let Some(snapshot) = Snapshot::load(&dir)? {
            self.restore(snapshot)?;
        }
        self.state_dir = Some(dir);
        Ok(self)
    }

    pub fn model(&self) -> &FeatureModel {
        &self.model
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn policy_warnings(&self) -> Vec<LintWarning> {
        lint(&self.policy)
    }

    pub fn control(&self) -> &ControlPlane {
        &self.control
    }

    pub fn network(&self) -> &Arc<ServiceNetwork> {
        self.control.network()
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        self.network().clock()
    }

    pub fn validate(&self, config: &FeatureConfiguration) -> ValidationResult {
        validate_configuration(&self.model, config)
    }

    pub fn tenants(&self) -> Vec<TenantRecord> {
        self.tenants.read().values().cloned().collect()
    }

    pub fn tenant(&self, id: &str) -> Result<TenantRecord, ManageError> {
        self.tenants
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| ManageError::UnknownTenant(id.to_string()))
    }

    pub fn create_tenant(&self, id: &str) -> Result<TenantRecord, ManageError> {
        let record = {
            let mut tenants = self.tenants.write();
            if tenants.contains_key(id) {
                return Err(ManageError::DuplicateTenant(id.to_string()));
            }
            let now = now_ms();
            let record = TenantRecord {
                tenant_id: id.to_string(),
                current_configuration: None,
                last_report: None,
                version: 0,
                created_at: now,
                updated_at: now,
            };
            tenants.insert(id.to_string(), record.clone());
            record
        };
        self.persist()?;
        Ok(record)
    }

    pub fn configuration(&self, id: &str) -> Result<FeatureConfiguration, ManageError> {
        self.tenant(id)?
            .current_configuration
            .ok_or_else(|| ManageError::NoConfiguration { tenant: id.to_string() })
    }

    /// Validates `config`, derives events against the tenant's current
    /// configuration, and enacts the policy. Overhead covers validation,
    /// diffing and enactment, timed on a monotonic clock.
    pub fn apply_configuration(
        &self,
        id: &str,
        mut config: FeatureConfiguration,
        expected_version: Option<u64>,
    ) -> Result<EnactmentReport, ManageError> {
        let mut session = self.control.session();
        let started = Instant::now();
        let current = self.tenant(id)?;
        if let Some(expected) = expected_version {
            if expected != current.version {
                return Err(ManageError::VersionConflict {
                    tenant: id.to_string(),
                    expected,
                    actual: current.version,
                });
            }
        }
        config.tenant_id = id.to_string();
        let result = validate_configuration(&self.model, &config);
        if !result.valid {
            return Err(ManageError::Invalid(result));
        }
        let request_id = format!("req-{:06}", self.request_seq.fetch_add(1, Ordering::SeqCst) + 1);
        let events = match &current.current_configuration {
            None => initial_events(&self.model, &config, &request_id),
            Some(old) => diff_events(&self.model, old, &config, &request_id),
        }
        .map_err(|e| ManageError::Invalid(e.result))?;
        let mut report = crate::policy::enact(&self.policy, &events, &config, id, &mut session)?;
        session.set_configuration(id, Some(config.clone()));
        report.overhead_ms = started.elapsed().as_secs_f64() * 1000.0;

        let sample = OverheadSample {
            request_id: report.request_id.clone(),
            tenant_id: id.to_string(),
            phase: report.phase,
            overhead_ms: report.overhead_ms,
            event_count: report.events.len(),
            action_count: report.action_count(),
        };
        {
            let mut tenants = self.tenants.write();
            let t = tenants.get_mut(id).expect("tenants are never removed");
            t.current_configuration = Some(config);
            t.last_report = Some(report.clone());
            t.version += 1;
            t.updated_at = now_ms();
        }
        self.metrics.lock().push(sample);
        drop(session);
        self.persist()?;
        Ok(report)
    }

    pub fn teardown(&self, id: &str) -> Result<ChangeReport, ManageError> {
        let mut session = self.control.session();
        self.tenant(id)?;
        let report = match session.record(id) {
            Some(_) => session.teardown(id)?,
            None => ChangeReport {
                operation: "teardownVsn".into(),
                vsn_id: id.to_string(),
                target: id.to_string(),
                mutations: Vec::new(),
            },
        };
        {
            let mut tenants = self.tenants.write();
            let t = tenants.get_mut(id).expect("checked above");
            t.current_configuration = None;
            t.version += 1;
            t.updated_at = now_ms();
        }
        drop(session);
        self.persist()?;
        Ok(report)
    }

    pub fn vsn(&self, id: &str) -> Result<VsnView, ManageError> {
        self.tenant(id)?;
        let record = self.control.record(id);
        Ok(VsnView {
            status: record.as_ref().map_or(VsnStatus::Absent, |r| r.status),
            installed_collaborations: record
                .as_ref()
                .map(|r| r.installed_collaborations.iter().cloned().collect())
                .unwrap_or_default(),
            installed_units: record
                .as_ref()
                .map(|r| r.installed_units.iter().cloned().collect())
                .unwrap_or_default(),
            table_projection: self.network().projection(id),
        })
    }

    pub fn inject(&self, id: &str, req: MessageRequest) -> Result<FlowTrace, ManageError> {
        self.tenant(id)?;
        let msg = Message {
            vsn_id: id.to_string(),
            instance_id: req.instance_id,
            interaction: req.interaction,
            payload: req.payload,
            at: req.at,
        };
        Ok(self.network().inject(msg)?)
    }

    pub fn metrics(&self) -> Vec<OverheadSample> {
        self.metrics.lock().clone()
    }

    /// Consistent copy of all mutable state.
    pub fn snapshot(&self) -> Snapshot {
        let session = self.control.session();
        Snapshot {
            tenants: self.tenants.read().values().cloned().collect(),
            vsns: session.records(),
            metrics: self.metrics.lock().clone(),
            request_seq: self.request_seq.load(Ordering::SeqCst),
        }
    }

    fn restore(&mut self, snapshot: Snapshot) -> Result<(), ManageError> {
        self.control.session().restore(snapshot.vsns)?;
        *self.tenants.write() = snapshot
            .tenants
            .into_iter()
            .map(|t| (t.tenant_id.clone(), t))
            .collect();
        *self.metrics.lock() = snapshot.metrics;
        self.request_seq.store(snapshot.request_seq, Ordering::SeqCst);
        Ok(())
    }

    /// Writes the snapshot if a state directory is configured.
    pub fn persist(&self) -> Result<(), ManageError> {
        let Some(dir) = &self.state_dir else {
            return Ok(());
        };
        let _guard = self.persist_lock.lock();
        self.snapshot().save(dir)?;
        Ok(())
    }

    pub fn state_dir(&self) -> Option<&Path> {
        self.state_dir.as_deref()
    }
}

#[cfg(test)]
mod tests;
