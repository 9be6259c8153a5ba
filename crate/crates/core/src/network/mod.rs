//! The shared service-network data plane.
//!
//! Nodes proxy partner services and contracts are the only channels between
//! them. Every node and contract has a regulation enforcement point (REP)
//! with a rule knowledgebase and a regulation table mapping tenant ids to
//! rule subsets. A tenant's virtual service network exists only as those
//! table entries: a message is handled at each REP by exactly the rules the
//! table maps for its tenant, in knowledgebase order.

mod clock;
mod flow;
mod stub;
mod topology;
mod trace;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::Value;

pub use clock::{Clock, SimClock, SystemClock};
pub use stub::{ResponseTemplate, ServiceStub, StubCatalog, StubInvocation};
pub use topology::{ContractDef, Mechanism, NodeDef, RouteTarget, RuleDef, TopologyDoc, TransformOp};
pub use trace::{Disposition, DropReason, FlowTrace, Hop, HopAction, RejectReason};

/// Flat message payload; values are JSON scalars.
pub type Payload = BTreeMap<String, serde_json::Value>;

/// Rule ids per REP for one tenant, or for all tenants when nested by vsn.
pub type TableProjection = BTreeMap<String, Vec<String>>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetworkError {
    #[error("topology syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("`{element}` references undefined `{reference}`")]
    DanglingReference { element: String, reference: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("rule `{rule}` at `{rep}` is invalid: {message}")]
    InvalidRule {
        rep: String,
        rule: String,
        message: String,
    },
    #[error("unknown REP `{0}`")]
    UnknownRep(String),
    #[error("rule `{rule}` is not in the knowledgebase of `{rep}`")]
    UnknownRule { rep: String, rule: String },
    #[error("parameter `{param}` of `{rep}/{rule}` is not declared per-tenant")]
    NotPerTenantParam {
        rep: String,
        rule: String,
        param: String,
    },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("payload value for `{0}` is not a scalar")]
    NonScalarPayload(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Message {
    pub vsn_id: String,
    pub instance_id: String,
    pub interaction: String,
    #[serde(default)]
    pub payload: Payload,
    /// Node whose service sends the message.
    pub at: String,
}

impl Message {
    pub fn new(
        vsn_id: impl Into<String>,
        instance_id: impl Into<String>,
        at: impl Into<String>,
        interaction: impl Into<String>,
    ) -> Self {
        Message {
            vsn_id: vsn_id.into(),
            instance_id: instance_id.into(),
            interaction: interaction.into(),
            payload: Payload::new(),
            at: at.into(),
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<serde_json::Value>) -> Self {
        self.payload.insert(key.into(), value.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepKind {
    Node,
    Contract,
}

#[derive(Debug)]
struct Rep {
    kind: RepKind,
    rules: Vec<RuleDef>,
    index: HashMap<String, usize>,
}

type ParamKey = (String, String, String);

#[derive(Debug, Default, Clone, PartialEq)]
struct ControlState {
    /// rep -> vsn -> rule indices into the REP's knowledgebase
    tables: BTreeMap<String, BTreeMap<String, BTreeSet<usize>>>,
    /// (rep, rule, vsn) -> per-tenant parameter values
    params: BTreeMap<ParamKey, BTreeMap<String, Value>>,
}

#[derive(Debug)]
struct JoinState {
    started: u64,
    parts: BTreeMap<String, Payload>,
}

#[derive(Debug, Default)]
struct RuntimeState {
    /// (vsn, rep, rule index, instance)
    joins: BTreeMap<(String, String, usize, String), JoinState>,
    /// (vsn, rep, rule index) -> (window, admitted count)
    admission: HashMap<(String, String, usize), (u64, u64)>,
}

/// One control-plane change to regulation tables or tenant parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "camelCase")]
pub enum TableOp {
    Add {
        rep: String,
        vsn: String,
        rules: Vec<String>,
    },
    Remove {
        rep: String,
        vsn: String,
        rules: Vec<String>,
    },
    SetParams {
        rep: String,
        rule: String,
        vsn: String,
        params: BTreeMap<String, Value>,
    },
    ClearParams {
        rep: String,
        rule: String,
        vsn: String,
    },
}

/// Effect of an applied [`TableOp`], with before and after states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "camelCase")]
pub enum Mutation {
    #[serde(rename_all = "camelCase")]
    TableAdd {
        rep: String,
        vsn: String,
        rules: Vec<String>,
        before: Vec<String>,
        after: Vec<String>,
    },
    #[serde(rename_all = "camelCase")]
    TableRemove {
        rep: String,
        vsn: String,
        rules: Vec<String>,
        before: Vec<String>,
        after: Vec<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        warnings: Vec<String>,
    },
    #[serde(rename_all = "camelCase")]
    ParamSet {
        rep: String,
        rule: String,
        vsn: String,
        param: String,
        before: Option<Value>,
        after: Option<Value>,
    },
}

pub struct ServiceNetwork {
    doc: TopologyDoc,
    nodes: BTreeMap<String, NodeDef>,
    contracts: BTreeMap<String, ContractDef>,
    /// unordered node pair -> contract id
    links: HashMap<(String, String), String>,
    reps: BTreeMap<String, Rep>,
    stubs: HashMap<String, ServiceStub>,
    state: RwLock<ControlState>,
    runtime: Mutex<RuntimeState>,
    clock: Arc<dyn Clock>,
    join_timeout: Option<u64>,
    simulate_latency: AtomicBool,
}

impl std::fmt::Debug for ServiceNetwork {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServiceNetwork")
            .field("nodes", &self.nodes.keys().collect::<Vec<_>>())
            .field("contracts", &self.contracts.keys().collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

fn link_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl ServiceNetwork {
    pub fn from_json(
        topology: &str,
        stubs: &StubCatalog,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, NetworkError> {
        let doc = TopologyDoc::from_json(topology).map_err(|e| NetworkError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::build(doc, stubs, clock)
    }

    /// Builds the network with empty regulation tables.
    pub fn build(
        doc: TopologyDoc,
        stubs: &StubCatalog,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, NetworkError> {
        let mut nodes = BTreeMap::new();
        let mut reps = BTreeMap::new();
        let empty_rep = |kind| Rep {
            kind,
            rules: Vec::new(),
            index: HashMap::new(),
        };
        for node in &doc.nodes {
            if nodes.insert(node.id.clone(), node.clone()).is_some() {
                return Err(NetworkError::DuplicateId(node.id.clone()));
            }
            reps.insert(node.id.clone(), empty_rep(RepKind::Node));
        }

        let mut contracts = BTreeMap::new();
        let mut links = HashMap::new();
        for c in &doc.contracts {
            for end in [&c.from, &c.to] {
                if !nodes.contains_key(end) {
                    return Err(NetworkError::DanglingReference {
                        element: c.id.clone(),
                        reference: end.clone(),
                    });
                }
            }
            if c.from == c.to || reps.contains_key(&c.id) {
                return Err(NetworkError::DuplicateId(c.id.clone()));
            }
            if links.insert(link_key(&c.from, &c.to), c.id.clone()).is_some() {
                return Err(NetworkError::DuplicateId(c.id.clone()));
            }
            contracts.insert(c.id.clone(), c.clone());
            reps.insert(c.id.clone(), empty_rep(RepKind::Contract));
        }

        let mut stub_map: HashMap<String, ServiceStub> = HashMap::new();
        for node in nodes.values() {
            stub_map.entry(node.service.clone()).or_insert_with(|| {
                ServiceStub::new(
                    node.service.clone(),
                    stubs.get(&node.service).cloned().unwrap_or_default(),
                )
            });
        }

        for rule in &doc.rules {
            let invalid = |message: String| NetworkError::InvalidRule {
                rep: rule.rep.clone(),
                rule: rule.rule_id.clone(),
                message,
            };
            let Some(rep) = reps.get(&rule.rep) else {
                return Err(NetworkError::DanglingReference {
                    element: rule.rule_id.clone(),
                    reference: rule.rep.clone(),
                });
            };
            if rule.matches.is_empty() {
                return Err(invalid("rule matches no interaction".into()));
            }
            match (&rule.mechanism, rep.kind) {
                (Mechanism::Process { annotate, .. }, RepKind::Contract) => {
                    if let Some(p) = annotate.iter().find(|p| !rule.declares(p)) {
                        return Err(invalid(format!("annotation parameter `{p}` is not declared")));
                    }
                }
                (Mechanism::Process { .. }, RepKind::Node) => {
                    return Err(invalid("process rules belong to contracts".into()))
                }
                (Mechanism::Synchronize { task }, RepKind::Node) => {
                    let service = &nodes[&rule.rep].service;
                    if !stub_map[service].has_task(task) {
                        return Err(invalid(format!("service `{service}` offers no task `{task}`")));
                    }
                }
                (Mechanism::Route { to }, RepKind::Node) => {
                    for t in to {
                        if !nodes.contains_key(&t.node) {
                            return Err(NetworkError::DanglingReference {
                                element: rule.rule_id.clone(),
                                reference: t.node.clone(),
                            });
                        }
                        if !links.contains_key(&link_key(&rule.rep, &t.node)) {
                            return Err(NetworkError::DanglingReference {
                                element: rule.rule_id.clone(),
                                reference: format!("{}-{}", rule.rep, t.node),
                            });
                        }
                    }
                }
                (Mechanism::Synchronize { .. } | Mechanism::Route { .. }, RepKind::Contract) => {
                    return Err(invalid(format!("{} rules belong to nodes", rule.mechanism.name())))
                }
                (Mechanism::Admit, _) => {
                    for p in ["limit", "windowSeconds"] {
                        if !rule.declares(p) {
                            return Err(invalid(format!("admission rule lacks `{p}`")));
                        }
                    }
                }
                (Mechanism::Transform { .. }, _) => {}
            }
            let rep = reps.get_mut(&rule.rep).expect("checked above");
            if rep.index.insert(rule.rule_id.clone(), rep.rules.len()).is_some() {
                return Err(NetworkError::DuplicateId(format!("{}/{}", rule.rep, rule.rule_id)));
            }
            rep.rules.push(rule.clone());
        }

        Ok(ServiceNetwork {
            doc,
            nodes,
            contracts,
            links,
            reps,
            stubs: stub_map,
            state: RwLock::new(ControlState::default()),
            runtime: Mutex::new(RuntimeState::default()),
            clock,
            join_timeout: None,
            simulate_latency: AtomicBool::new(false),
        })
    }

    /// Incomplete joins older than `secs` are discarded on the next arrival.
    pub fn with_join_timeout(mut self, secs: u64) -> Self {
        self.join_timeout = Some(secs);
        self
    }

    pub fn set_simulate_latency(&self, on: bool) {
        self.simulate_latency.store(on, Ordering::Relaxed);
    }

    pub fn topology(&self) -> &TopologyDoc {
        &self.doc
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }

    pub fn contract(&self, id: &str) -> Option<&ContractDef> {
        self.contracts.get(id)
    }

    pub fn contracts(&self) -> impl Iterator<Item = &ContractDef> {
        self.contracts.values()
    }

    pub fn node(&self, id: &str) -> Option<&NodeDef> {
        self.nodes.get(id)
    }

    pub fn rep_ids(&self) -> impl Iterator<Item = &str> {
        self.reps.keys().map(String::as_str)
    }

    pub fn rep_kind(&self, rep: &str) -> Option<RepKind> {
        self.reps.get(rep).map(|r| r.kind)
    }

    pub fn knowledgebase(&self, rep: &str) -> Option<&[RuleDef]> {
        self.reps.get(rep).map(|r| r.rules.as_slice())
    }

    pub fn rule(&self, rep: &str, rule: &str) -> Option<&RuleDef> {
        let r = self.reps.get(rep)?;
        r.index.get(rule).map(|&i| &r.rules[i])
    }

    pub fn stub(&self, service: &str) -> Option<&ServiceStub> {
        self.stubs.get(service)
    }

    pub fn stub_at(&self, node: &str) -> Option<&ServiceStub> {
        self.stubs.get(&self.nodes.get(node)?.service)
    }

    pub fn clear_stub_logs(&self) {
        self.stubs.values().for_each(ServiceStub::clear_log);
    }

    fn resolve_rules(&self, rep: &str, rules: &[String]) -> Result<BTreeSet<usize>, NetworkError> {
        let r = self
            .reps
            .get(rep)
            .ok_or_else(|| NetworkError::UnknownRep(rep.to_string()))?;
        rules
            .iter()
            .map(|id| {
                r.index.get(id).copied().ok_or_else(|| NetworkError::UnknownRule {
                    rep: rep.to_string(),
                    rule: id.clone(),
                })
            })
            .collect()
    }

    fn rule_names(&self, rep: &str, set: Option<&BTreeSet<usize>>) -> Vec<String> {
        let r = &self.reps[rep];
        set.map(|s| s.iter().map(|&i| r.rules[i].rule_id.clone()).collect())
            .unwrap_or_default()
    }

    fn check_op(&self, op: &TableOp) -> Result<(), NetworkError> {
        match op {
            TableOp::Add { rep, rules, .. } | TableOp::Remove { rep, rules, .. } => {
                self.resolve_rules(rep, rules).map(drop)
            }
            TableOp::SetParams {
                rep, rule, params, ..
            } => {
                let def = self.rule_checked(rep, rule)?;
                match params.keys().find(|p| !def.is_per_tenant(p)) {
                    Some(p) => Err(NetworkError::NotPerTenantParam {
                        rep: rep.clone(),
                        rule: rule.clone(),
                        param: p.clone(),
                    }),
                    None => Ok(()),
                }
            }
            TableOp::ClearParams { rep, rule, .. } => self.rule_checked(rep, rule).map(drop),
        }
    }

    fn rule_checked(&self, rep: &str, rule: &str) -> Result<&RuleDef, NetworkError> {
        if !self.reps.contains_key(rep) {
            return Err(NetworkError::UnknownRep(rep.to_string()));
        }
        self.rule(rep, rule).ok_or_else(|| NetworkError::UnknownRule {
            rep: rep.to_string(),
            rule: rule.to_string(),
        })
    }

    /// Applies a batch of control-plane operations atomically: either every
    /// operation is valid and all are applied under one write lock, or none
    /// is. Only effective changes are reported.
    pub fn apply_batch(&self, ops: &[TableOp]) -> Result<Vec<Mutation>, NetworkError> {
        for op in ops {
            self.check_op(op)?;
        }
        let mut state = self.state.write();
        let mut mutations = Vec::new();
        for op in ops {
            match op {
                TableOp::Add { rep, vsn, rules } => {
                    let idx = self.resolve_rules(rep, rules)?;
                    let table = state.tables.entry(rep.clone()).or_default();
                    let before = self.rule_names(rep, table.get(vsn));
                    let entry = table.entry(vsn.clone()).or_default();
                    entry.extend(idx);
                    let after = self.rule_names(rep, Some(entry));
                    if before != after {
                        mutations.push(Mutation::TableAdd {
                            rep: rep.clone(),
                            vsn: vsn.clone(),
                            rules: rules.clone(),
                            before,
                            after,
                        });
                    }
                }
                TableOp::Remove { rep, vsn, rules } => {
                    let idx = self.resolve_rules(rep, rules)?;
                    let Some(table) = state.tables.get_mut(rep) else {
                        continue;
                    };
                    let Some(entry) = table.get_mut(vsn) else {
                        continue;
                    };
                    let before = self.rule_names(rep, Some(entry));
                    let removed: Vec<usize> = idx.iter().copied().filter(|i| entry.remove(i)).collect();
                    let after = self.rule_names(rep, Some(entry));
                    if entry.is_empty() {
                        table.remove(vsn);
                    }
                    if table.is_empty() {
                        state.tables.remove(rep);
                    }
                    if removed.is_empty() {
                        continue;
                    }
                    let warnings = self.discard_joins(vsn, rep, &removed);
                    mutations.push(Mutation::TableRemove {
                        rep: rep.clone(),
                        vsn: vsn.clone(),
                        rules: rules.clone(),
                        before,
                        after,
                        warnings,
                    });
                }
                TableOp::SetParams {
                    rep,
                    rule,
                    vsn,
                    params,
                } => {
                    let key = (rep.clone(), rule.clone(), vsn.clone());
                    let stored = state.params.entry(key).or_default();
                    for (name, value) in params {
                        let before = stored.insert(name.clone(), value.clone());
                        if before.as_ref() != Some(value) {
                            mutations.push(Mutation::ParamSet {
                                rep: rep.clone(),
                                rule: rule.clone(),
                                vsn: vsn.clone(),
                                param: name.clone(),
                                before,
                                after: Some(value.clone()),
                            });
                        }
                    }
                }
                TableOp::ClearParams { rep, rule, vsn } => {
                    let key = (rep.clone(), rule.clone(), vsn.clone());
                    if let Some(stored) = state.params.remove(&key) {
                        for (name, value) in stored {
                            mutations.push(Mutation::ParamSet {
                                rep: rep.clone(),
                                rule: rule.clone(),
                                vsn: vsn.clone(),
                                param: name,
                                before: Some(value),
                                after: None,
                            });
                        }
                    }
                }
            }
        }
        Ok(mutations)
    }

    fn discard_joins(&self, vsn: &str, rep: &str, removed: &[usize]) -> Vec<String> {
        let kb = &self.reps[rep].rules;
        let mut runtime = self.runtime.lock();
        let doomed: Vec<_> = runtime
            .joins
            .keys()
            .filter(|(v, r, i, _)| {
                v == vsn
                    && r == rep
                    && removed.contains(i)
                    && matches!(kb[*i].mechanism, Mechanism::Synchronize { .. })
            })
            .cloned()
            .collect();
        doomed
            .into_iter()
            .map(|key| {
                runtime.joins.remove(&key);
                format!("WarnDiscardedJoin({}/{}/{})", rep, kb[key.2].rule_id, key.3)
            })
            .collect()
    }

    pub fn add_table_entry(&self, rep: &str, vsn: &str, rules: &[&str]) -> Result<Vec<Mutation>, NetworkError> {
        self.apply_batch(&[TableOp::Add {
            rep: rep.into(),
            vsn: vsn.into(),
            rules: rules.iter().map(|r| r.to_string()).collect(),
        }])
    }

    pub fn remove_table_entry(&self, rep: &str, vsn: &str, rules: &[&str]) -> Result<Vec<Mutation>, NetworkError> {
        self.apply_batch(&[TableOp::Remove {
            rep: rep.into(),
            vsn: vsn.into(),
            rules: rules.iter().map(|r| r.to_string()).collect(),
        }])
    }

    pub fn set_rule_params(
        &self,
        rep: &str,
        rule: &str,
        vsn: &str,
        params: BTreeMap<String, Value>,
    ) -> Result<Vec<Mutation>, NetworkError> {
        self.apply_batch(&[TableOp::SetParams {
            rep: rep.into(),
            rule: rule.into(),
            vsn: vsn.into(),
            params,
        }])
    }

    /// Rule ids mapped for `vsn` at `rep`, in knowledgebase order.
    pub fn table_entry(&self, rep: &str, vsn: &str) -> Vec<String> {
        let state = self.state.read();
        self.rule_names(rep, state.tables.get(rep).and_then(|t| t.get(vsn)))
    }

    /// Every REP entry for one tenant.
    pub fn projection(&self, vsn: &str) -> TableProjection {
        let state = self.state.read();
        state
            .tables
            .iter()
            .filter_map(|(rep, t)| t.get(vsn).map(|s| (rep.clone(), self.rule_names(rep, Some(s)))))
            .collect()
    }

    /// Full regulation-table contents: rep -> vsn -> rule ids.
    pub fn tables(&self) -> BTreeMap<String, TableProjection> {
        let state = self.state.read();
        state
            .tables
            .iter()
            .map(|(rep, t)| {
                let entries = t
                    .iter()
                    .map(|(vsn, s)| (vsn.clone(), self.rule_names(rep, Some(s))))
                    .collect();
                (rep.clone(), entries)
            })
            .collect()
    }

    /// Per-tenant parameter values of one tenant: (rep, rule, param) -> value.
    pub fn tenant_params(&self, vsn: &str) -> BTreeMap<(String, String, String), Value> {
        let state = self.state.read();
        state
            .params
            .iter()
            .filter(|((_, _, v), _)| v == vsn)
            .flat_map(|((rep, rule, _), ps)| {
                ps.iter()
                    .map(move |(p, val)| ((rep.clone(), rule.clone(), p.clone()), val.clone()))
            })
            .collect()
    }

    pub fn vsn_ids(&self) -> BTreeSet<String> {
        let state = self.state.read();
        state
            .tables
            .values()
            .flat_map(|t| t.keys().cloned())
            .collect()
    }

    /// Tenants waiting on incomplete joins, as (vsn, rep, rule, instance).
    pub fn pending_joins(&self) -> Vec<(String, String, String, String)> {
        let runtime = self.runtime.lock();
        runtime
            .joins
            .keys()
            .map(|(v, r, i, inst)| (v.clone(), r.clone(), self.reps[r].rules[*i].rule_id.clone(), inst.clone()))
            .collect()
    }
}
