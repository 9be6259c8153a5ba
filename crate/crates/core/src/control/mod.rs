//! Control plane: installs collaborations and inter-collaboration units into
//! tenants' virtual service networks by editing regulation tables.
//!
//! Table entries shared by overlapping collaborations are reference counted
//! per `(vsn, rep, rule)`; an entry leaves the table only when its last
//! owner is removed.

mod catalog;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use parking_lot::{Mutex, MutexGuard};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature_model::FeatureConfiguration;
use crate::network::{Mutation, NetworkError, ServiceNetwork, TableOp};
use crate::value::Value;

pub use catalog::{Catalog, CollaborationDef, InterCollabUnitDef, ParamBinding, ParamSource, TableEntryDef};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ControlError {
    #[error("unknown collaboration `{0}`")]
    UnknownCollaboration(String),
    #[error("unknown inter-collaboration unit `{0}`")]
    UnknownUnit(String),
    #[error("`{0}` is already installed")]
    AlreadyInstalled(String),
    #[error("`{0}` is not installed")]
    NotInstalled(String),
    #[error("parameter `{0}` is unresolved")]
    UnresolvedParam(String),
    #[error("installed unit `{0}` depends on this collaboration")]
    UnitDependency(String),
    #[error("missing required collaborations: {}", .0.join(", "))]
    MissingDependency(Vec<String>),
    #[error("unknown VSN `{0}`")]
    UnknownVsn(String),
    #[error("invalid catalog: {0}")]
    Catalog(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VsnStatus {
    Provisioning,
    Ready,
    Absent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundParam {
    pub rep: String,
    pub rule: String,
    pub param: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VsnRecord {
    pub vsn_id: String,
    pub installed_collaborations: BTreeSet<String>,
    pub installed_units: BTreeSet<String>,
    pub bound_params: Vec<BoundParam>,
    #[serde(default)]
    pub current_configuration: Option<FeatureConfiguration>,
    pub status: VsnStatus,
}

impl VsnRecord {
    fn new(vsn: &str) -> Self {
        VsnRecord {
            vsn_id: vsn.to_string(),
            installed_collaborations: BTreeSet::new(),
            installed_units: BTreeSet::new(),
            bound_params: Vec::new(),
            current_configuration: None,
            status: VsnStatus::Ready,
        }
    }

    pub fn param(&self, rep: &str, rule: &str, param: &str) -> Option<&Value> {
        self.bound_params
            .iter()
            .find(|b| b.rep == rep && b.rule == rule && b.param == param)
            .map(|b| &b.value)
    }

    fn bind(&mut self, rep: &str, rule: &str, param: &str, value: Value) {
        match self
            .bound_params
            .iter_mut()
            .find(|b| b.rep == rep && b.rule == rule && b.param == param)
        {
            Some(b) => b.value = value,
            None => {
                self.bound_params.push(BoundParam {
                    rep: rep.into(),
                    rule: rule.into(),
                    param: param.into(),
                    value,
                });
                self.bound_params.sort_by(|a, b| {
                    (&a.rep, &a.rule, &a.param).cmp(&(&b.rep, &b.rule, &b.param))
                });
            }
        }
    }
}

/// Ordered, replayable record of one control-plane operation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChangeReport {
    pub operation: String,
    pub vsn_id: String,
    pub target: String,
    pub mutations: Vec<Mutation>,
}

/// Parameter values supplied with an install or update, keyed by name.
pub type ParamValues = BTreeMap<String, Value>;

#[derive(Debug, Default)]
struct ControlState {
    records: BTreeMap<String, VsnRecord>,
    /// Per VSN, how many installed bundles map each `(rep, rule)`.
    refcounts: BTreeMap<String, RefCounts>,
}

type RefCounts = BTreeMap<(String, String), u32>;

/// Control plane over one [`ServiceNetwork`]. All mutations run inside a
/// [`ControlSession`], which holds the network's serialization lock.
pub struct ControlPlane {
    net: Arc<ServiceNetwork>,
    catalog: Catalog,
    state: Mutex<ControlState>,
}

impl std::fmt::Debug for ControlPlane {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlPlane").finish_non_exhaustive()
    }
}

impl ControlPlane {
    pub fn new(net: Arc<ServiceNetwork>, catalog: Catalog) -> Result<Self, ControlError> {
        catalog.check(&net)?;
        Ok(ControlPlane {
            net,
            catalog,
            state: Mutex::new(ControlState::default()),
        })
    }

    pub fn network(&self) -> &Arc<ServiceNetwork> {
        &self.net
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn session(&self) -> ControlSession<'_> {
        ControlSession {
            plane: self,
            state: self.state.lock(),
        }
    }

    pub fn record(&self, vsn: &str) -> Option<VsnRecord> {
        self.state.lock().records.get(vsn).cloned()
    }

    pub fn records(&self) -> Vec<VsnRecord> {
        self.state.lock().records.values().cloned().collect()
    }
}

pub struct ControlSession<'a> {
    plane: &'a ControlPlane,
    state: MutexGuard<'a, ControlState>,
}

fn key(rep: &str, rule: &str) -> (String, String) {
    (rep.to_string(), rule.to_string())
}

impl ControlSession<'_> {
    pub fn catalog(&self) -> &Catalog {
        &self.plane.catalog
    }

    pub fn record(&self, vsn: &str) -> Option<&VsnRecord> {
        self.state.records.get(vsn)
    }

    pub fn records(&self) -> Vec<VsnRecord> {
        self.state.records.values().cloned().collect()
    }

    pub fn set_status(&mut self, vsn: &str, status: VsnStatus) {
        self.state
            .records
            .entry(vsn.to_string())
            .or_insert_with(|| VsnRecord::new(vsn))
            .status = status;
    }

    pub fn set_configuration(&mut self, vsn: &str, config: Option<FeatureConfiguration>) {
        if let Some(r) = self.state.records.get_mut(vsn) {
            r.current_configuration = config;
        }
    }

    fn counts(&self, vsn: &str) -> RefCounts {
        self.state.refcounts.get(vsn).cloned().unwrap_or_default()
    }

    fn store_counts(&mut self, vsn: &str, counts: RefCounts) {
        if counts.is_empty() {
            self.state.refcounts.remove(vsn);
        } else {
            self.state.refcounts.insert(vsn.to_string(), counts);
        }
    }

    fn installed(&self, vsn: &str, id: &str) -> bool {
        self.state.records.get(vsn).is_some_and(|r| {
            r.installed_collaborations.contains(id) || r.installed_units.contains(id)
        })
    }

    /// Table operations adding `entries` for `vsn`; only rules whose
    /// reference count rises from zero reach the network.
    fn plan_add(&self, vsn: &str, entries: &[TableEntryDef], counts: &mut RefCounts) -> Vec<TableOp> {
        let mut ops = Vec::new();
        for e in entries {
            let fresh: Vec<String> = e
                .rules
                .iter()
                .filter(|r| {
                    let c = counts.entry(key(&e.rep, r)).or_insert(0);
                    *c += 1;
                    *c == 1
                })
                .cloned()
                .collect();
            if !fresh.is_empty() {
                ops.push(TableOp::Add {
                    rep: e.rep.clone(),
                    vsn: vsn.to_string(),
                    rules: fresh,
                });
            }
        }
        ops
    }

    fn plan_remove(
        &self,
        vsn: &str,
        entries: &[TableEntryDef],
        counts: &mut RefCounts,
    ) -> (Vec<TableOp>, Vec<(String, String)>) {
        let mut ops = Vec::new();
        let mut gone = Vec::new();
        for e in entries {
            let mut stale = Vec::new();
            for r in &e.rules {
                let k = key(&e.rep, r);
                let c = counts.get_mut(&k).expect("installed entries are counted");
                *c -= 1;
                if *c == 0 {
                    counts.remove(&k);
                    stale.push(r.clone());
                    gone.push((e.rep.clone(), r.clone()));
                }
            }
            if !stale.is_empty() {
                ops.push(TableOp::Remove {
                    rep: e.rep.clone(),
                    vsn: vsn.to_string(),
                    rules: stale,
                });
            }
        }
        (ops, gone)
    }

    fn resolve_params(&self, def: &CollaborationDef, values: &ParamValues, partial: bool) -> Result<Vec<(ParamBinding, Value)>, ControlError> {
        let attr = def.attr_params();
        if let Some(extra) = values.keys().find(|k| !attr.contains(k.as_str())) {
            return Err(ControlError::UnresolvedParam(extra.clone()));
        }
        let mut out = Vec::new();
        for b in &def.params {
            let value = match &b.source {
                ParamSource::Literal(v) if !partial => v.clone(),
                ParamSource::Literal(_) => continue,
                ParamSource::Attr(_) => match values.get(&b.param) {
                    Some(v) => v.clone(),
                    None if partial => continue,
                    None => return Err(ControlError::UnresolvedParam(b.param.clone())),
                },
            };
            out.push((b.clone(), value));
        }
        Ok(out)
    }

    fn report(&self, op: &str, vsn: &str, target: &str, mutations: Vec<Mutation>) -> ChangeReport {
        ChangeReport {
            operation: op.to_string(),
            vsn_id: vsn.to_string(),
            target: target.to_string(),
            mutations,
        }
    }

    pub fn add_collaboration(&mut self, vsn: &str, id: &str, values: &ParamValues) -> Result<ChangeReport, ControlError> {
        let def = self
            .plane
            .catalog
            .collaboration(id)
            .ok_or_else(|| ControlError::UnknownCollaboration(id.to_string()))?;
        if self.installed(vsn, id) {
            return Err(ControlError::AlreadyInstalled(id.to_string()));
        }
        let params = self.resolve_params(def, values, false)?;
        let mut counts = self.counts(vsn);
        let mut ops = self.plan_add(vsn, &def.entries, &mut counts);
        ops.extend(params.iter().map(|(b, v)| TableOp::SetParams {
            rep: b.rep.clone(),
            rule: b.rule.clone(),
            vsn: vsn.to_string(),
            params: BTreeMap::from([(b.param.clone(), v.clone())]),
        }));
        let mutations = self.plane.net.apply_batch(&ops)?;
        self.store_counts(vsn, counts);
        let record = self
            .state
            .records
            .entry(vsn.to_string())
            .or_insert_with(|| VsnRecord::new(vsn));
        if record.status == VsnStatus::Absent {
            record.status = VsnStatus::Ready;
        }
        record.installed_collaborations.insert(id.to_string());
        for (b, v) in params {
            record.bind(&b.rep, &b.rule, &b.param, v);
        }
        Ok(self.report("addCollaboration", vsn, id, mutations))
    }

    pub fn remove_collaboration(&mut self, vsn: &str, id: &str) -> Result<ChangeReport, ControlError> {
        let def = self
            .plane
            .catalog
            .collaboration(id)
            .ok_or_else(|| ControlError::UnknownCollaboration(id.to_string()))?;
        let record = self
            .state
            .records
            .get(vsn)
            .filter(|r| r.installed_collaborations.contains(id))
            .ok_or_else(|| ControlError::NotInstalled(id.to_string()))?;
        if let Some(unit) = record.installed_units.iter().find(|u| {
            self.plane
                .catalog
                .unit(u)
                .is_some_and(|d| d.requires.contains(id))
        }) {
            return Err(ControlError::UnitDependency(unit.clone()));
        }
        let mut counts = self.counts(vsn);
        let (mut ops, gone) = self.plan_remove(vsn, &def.entries, &mut counts);
        let cleared: BTreeSet<(String, String)> = def
            .params
            .iter()
            .map(|b| (b.rep.clone(), b.rule.clone()))
            .filter(|pair| gone.contains(pair))
            .collect();
        ops.extend(cleared.iter().map(|(rep, rule)| TableOp::ClearParams {
            rep: rep.clone(),
            rule: rule.clone(),
            vsn: vsn.to_string(),
        }));
        let mutations = self.plane.net.apply_batch(&ops)?;
        self.store_counts(vsn, counts);
        let record = self.state.records.get_mut(vsn).expect("checked above");
        record.installed_collaborations.remove(id);
        record
            .bound_params
            .retain(|b| !cleared.contains(&(b.rep.clone(), b.rule.clone())));
        Ok(self.report("removeCollaboration", vsn, id, mutations))
    }

    /// Rebinds attribute-sourced parameters of an installed collaboration.
    /// Parameters not named in `values` keep their current value.
    pub fn update_collaboration(&mut self, vsn: &str, id: &str, values: &ParamValues) -> Result<ChangeReport, ControlError> {
        let def = self
            .plane
            .catalog
            .collaboration(id)
            .ok_or_else(|| ControlError::UnknownCollaboration(id.to_string()))?;
        if !self
            .state
            .records
            .get(vsn)
            .is_some_and(|r| r.installed_collaborations.contains(id))
        {
            return Err(ControlError::NotInstalled(id.to_string()));
        }
        let params = self.resolve_params(def, values, true)?;
        let ops: Vec<TableOp> = params
            .iter()
            .map(|(b, v)| TableOp::SetParams {
                rep: b.rep.clone(),
                rule: b.rule.clone(),
                vsn: vsn.to_string(),
                params: BTreeMap::from([(b.param.clone(), v.clone())]),
            })
            .collect();
        let mutations = self.plane.net.apply_batch(&ops)?;
        let record = self.state.records.get_mut(vsn).expect("checked above");
        for (b, v) in params {
            record.bind(&b.rep, &b.rule, &b.param, v);
        }
        Ok(self.report("updateCollaboration", vsn, id, mutations))
    }

    pub fn add_unit(&mut self, vsn: &str, id: &str) -> Result<ChangeReport, ControlError> {
        let def = self
            .plane
            .catalog
            .unit(id)
            .ok_or_else(|| ControlError::UnknownUnit(id.to_string()))?;
        if self.installed(vsn, id) {
            return Err(ControlError::AlreadyInstalled(id.to_string()));
        }
        let missing: Vec<String> = def
            .requires
            .iter()
            .filter(|c| {
                !self
                    .state
                    .records
                    .get(vsn)
                    .is_some_and(|r| r.installed_collaborations.contains(*c))
            })
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(ControlError::MissingDependency(missing));
        }
        let mut counts = self.counts(vsn);
        let ops = self.plan_add(vsn, &def.entries, &mut counts);
        let mutations = self.plane.net.apply_batch(&ops)?;
        self.store_counts(vsn, counts);
        let record = self.state.records.get_mut(vsn).expect("dependencies are installed");
        record.installed_units.insert(id.to_string());
        Ok(self.report("addUnit", vsn, id, mutations))
    }

    pub fn remove_unit(&mut self, vsn: &str, id: &str) -> Result<ChangeReport, ControlError> {
        let def = self
            .plane
            .catalog
            .unit(id)
            .ok_or_else(|| ControlError::UnknownUnit(id.to_string()))?;
        if !self
            .state
            .records
            .get(vsn)
            .is_some_and(|r| r.installed_units.contains(id))
        {
            return Err(ControlError::NotInstalled(id.to_string()));
        }
        let mut counts = self.counts(vsn);
        let (ops, _) = self.plan_remove(vsn, &def.entries, &mut counts);
        let mutations = self.plane.net.apply_batch(&ops)?;
        self.store_counts(vsn, counts);
        let record = self.state.records.get_mut(vsn).expect("checked above");
        record.installed_units.remove(id);
        Ok(self.report("removeUnit", vsn, id, mutations))
    }

    /// Removes every unit, then every collaboration, and marks the VSN
    /// absent. The combined report lists mutations in removal order.
    pub fn teardown(&mut self, vsn: &str) -> Result<ChangeReport, ControlError> {
        let record = self
            .state
            .records
            .get(vsn)
            .ok_or_else(|| ControlError::UnknownVsn(vsn.to_string()))?;
        let units: Vec<String> = record.installed_units.iter().rev().cloned().collect();
        let collabs: Vec<String> = record.installed_collaborations.iter().rev().cloned().collect();
        let mut mutations = Vec::new();
        for u in units {
            mutations.extend(self.remove_unit(vsn, &u)?.mutations);
        }
        for c in collabs {
            mutations.extend(self.remove_collaboration(vsn, &c)?.mutations);
        }
        let record = self.state.records.get_mut(vsn).expect("checked above");
        record.status = VsnStatus::Absent;
        record.current_configuration = None;
        record.bound_params.clear();
        Ok(self.report("teardownVsn", vsn, vsn, mutations))
    }

    /// Reinstalls persisted records into empty tables.
    pub fn restore(&mut self, records: Vec<VsnRecord>) -> Result<(), ControlError> {
        for rec in records {
            let vsn = rec.vsn_id.clone();
            let mut ops = Vec::new();
            let mut counts = self.counts(&vsn);
            for c in &rec.installed_collaborations {
                let def = self
                    .plane
                    .catalog
                    .collaboration(c)
                    .ok_or_else(|| ControlError::UnknownCollaboration(c.clone()))?;
                ops.extend(self.plan_add(&vsn, &def.entries, &mut counts));
            }
            for u in &rec.installed_units {
                let def = self
                    .plane
                    .catalog
                    .unit(u)
                    .ok_or_else(|| ControlError::UnknownUnit(u.clone()))?;
                ops.extend(self.plan_add(&vsn, &def.entries, &mut counts));
            }
            ops.extend(rec.bound_params.iter().map(|b| TableOp::SetParams {
                rep: b.rep.clone(),
                rule: b.rule.clone(),
                vsn: vsn.clone(),
                params: BTreeMap::from([(b.param.clone(), b.value.clone())]),
            }));
            self.plane.net.apply_batch(&ops)?;
            self.store_counts(&vsn, counts);
            self.state.records.insert(vsn, rec);
        }
        Ok(())
    }
}
