use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::{Action, Atom, Expr, ParamExpr, Policy};
use crate::control::{ChangeReport, ControlError, ControlSession, ParamValues, VsnStatus};
use crate::events::{CustomizationEvent, EventKind, EventSet, Phase};
use crate::feature_model::{FeatureConfiguration, Predicate, Violation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AppliedAction {
    pub rule: String,
    pub action: String,
    #[serde(flatten)]
    pub change: ChangeReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EnactmentReport {
    pub request_id: String,
    pub vsn_id: String,
    pub phase: Phase,
    pub events: Vec<CustomizationEvent>,
    pub fired_rules: Vec<String>,
    pub actions_applied: Vec<AppliedAction>,
    pub emitted_events: Vec<String>,
    /// Passes in which at least one rule fired.
    pub passes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected: Option<Vec<Violation>>,
    pub overhead_ms: f64,
}

impl EnactmentReport {
    pub fn new(events: &EventSet, vsn: &str) -> Self {
        EnactmentReport {
            request_id: events.request_id.clone(),
            vsn_id: vsn.to_string(),
            phase: events.phase,
            events: events.events.clone(),
            fired_rules: Vec::new(),
            actions_applied: Vec::new(),
            emitted_events: Vec::new(),
            passes: 0,
            rejected: None,
            overhead_ms: 0.0,
        }
    }

    /// Number of control-plane actions applied.
    pub fn action_count(&self) -> usize {
        self.actions_applied.len()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("rule `{rule}` failed on `{action}`: {cause}")]
pub struct EnactmentError {
    pub rule: String,
    pub action: String,
    pub cause: ControlError,
    /// Everything applied before the failure.
    pub report: Box<EnactmentReport>,
}

struct WorkingSet<'a> {
    events: Vec<CustomizationEvent>,
    config: &'a FeatureConfiguration,
}

impl WorkingSet<'_> {
    fn has(&self, kind: EventKind, subject: &str) -> bool {
        self.events.iter().any(|e| e.kind == kind && e.subject == subject)
    }

    fn eval(&self, e: &Expr) -> bool {
        match e {
            Expr::Atom(a) => match a {
                Atom::Selected(f) => self.has(EventKind::Selected, f),
                Atom::NotSelected(f) => self.has(EventKind::NotSelected, f),
                Atom::Deselected(f) => self.has(EventKind::Deselected, f),
                Atom::Updated(s) => self.has(EventKind::Updated, s),
                Atom::Event(n) => self.has(EventKind::Custom, n),
                Atom::AttrCmp { path, op, value } => {
                    Predicate::compare(path.clone(), *op, value.clone()).holds(self.config)
                }
            },
            Expr::Not(x) => !self.eval(x),
            Expr::And(a, b) => self.eval(a) && self.eval(b),
            Expr::Or(a, b) => self.eval(a) || self.eval(b),
        }
    }
}

fn param_values(
    params: &[(String, ParamExpr)],
    config: &FeatureConfiguration,
) -> Result<ParamValues, ControlError> {
    params
        .iter()
        .map(|(name, src)| {
            let v = match src {
                ParamExpr::Literal(v) => Some(v.clone()),
                ParamExpr::Attr(path) => {
                    let feature = path.split('.').next().unwrap_or_default();
                    config
                        .attribute_values
                        .get(path)
                        .filter(|_| config.is_selected(feature))
                        .cloned()
                }
            };
            v.map(|v| (name.clone(), v))
                .ok_or_else(|| ControlError::UnresolvedParam(name.clone()))
        })
        .collect()
}

/// Runs `policy` over `events` for tenant `vsn`.
///
/// Rules are tried in declaration order, pass after pass, until a pass
/// fires nothing. Each rule fires at most once per request. Emitted events
/// join the working set at once, so later rules in the same pass see them.
/// Attribute comparisons read `config`. On success the VSN is `Ready`; on
/// failure it stays `Provisioning` and the error carries the partial report.
pub fn enact(
    policy: &Policy,
    events: &EventSet,
    config: &FeatureConfiguration,
    vsn: &str,
    session: &mut ControlSession<'_>,
) -> Result<EnactmentReport, EnactmentError> {
    session.set_status(vsn, VsnStatus::Provisioning);
    let mut report = EnactmentReport::new(events, vsn);
    let mut w = WorkingSet {
        events: events.events.clone(),
        config,
    };
    let mut fired = vec![false; policy.rules.len()];
    loop {
        let mut any = false;
        for (i, rule) in policy.rules.iter().enumerate() {
            if fired[i] || !w.eval(&rule.condition) {
                continue;
            }
            fired[i] = true;
            any = true;
            report.fired_rules.push(rule.name.clone());
            for action in &rule.actions {
                let outcome = match action {
                    Action::Emit(name) => {
                        w.events.push(CustomizationEvent::custom(name));
                        report.emitted_events.push(name.clone());
                        continue;
                    }
                    Action::AddCollaboration { id, params } => {
                        param_values(params, config).and_then(|p| session.add_collaboration(vsn, id, &p))
                    }
                    Action::UpdateCollaboration { id, params } => {
                        param_values(params, config).and_then(|p| session.update_collaboration(vsn, id, &p))
                    }
                    Action::RemoveCollaboration(id) => session.remove_collaboration(vsn, id),
                    Action::AddUnit(id) => session.add_unit(vsn, id),
                    Action::RemoveUnit(id) => session.remove_unit(vsn, id),
                };
                match outcome {
                    Ok(change) => report.actions_applied.push(AppliedAction {
                        rule: rule.name.clone(),
                        action: action.to_string(),
                        change,
                    }),
                    Err(cause) => {
                        report.passes += 1;
                        return Err(EnactmentError {
                            rule: rule.name.clone(),
                            action: action.to_string(),
                            cause,
                            report: Box::new(report),
                        });
                    }
                }
            }
        }
        if !any {
            break;
        }
        report.passes += 1;
    }
    session.set_status(vsn, VsnStatus::Ready);
    Ok(report)
}
