//! Customization policies: event-condition-action rules that map feature
//! events to control-plane actions.
//!
//! ```text
//! policy RoSAS {
//!   rule rTowSelected {
//!     when selected(Heavy)
//!     then add collaboration TowingBySwiftTow; emit SwiftTowAdded;
//!   }
//! }
//! ```

mod ast;
mod engine;
mod lexer;
mod parser;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::Catalog;
use crate::feature_model::{Domain, FeatureModel};
use crate::value::Value;

pub use ast::{Action, Assignments, Atom, Expr, ParamExpr, Policy, PolicyRule};
pub use engine::{enact, AppliedAction, EnactmentError, EnactmentReport};
pub use parser::parse_syntax;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("unknown collaboration `{0}`")]
    UnknownCollaboration(String),
    #[error("unknown unit `{0}`")]
    UnknownUnit(String),
    #[error("event `{0}` is never emitted by this policy")]
    UnknownEvent(String),
    #[error("duplicate rule `{0}`")]
    DuplicateRule(String),
    #[error("emitted event `{0}` shares its name with a feature")]
    EmitShadowsFeature(String),
    #[error("invalid comparison on `{path}`: {message}")]
    InvalidComparison { path: String, message: String },
    #[error("collaboration `{collaboration}`: parameter `{param}` is unresolved")]
    UnresolvedParam { collaboration: String, param: String },
}

/// Parses and resolves a policy: every feature, attribute, collaboration,
/// unit, and custom event it names must exist.
pub fn parse_policy(src: &str, model: &FeatureModel, catalog: &Catalog) -> Result<Policy, PolicyError> {
    let policy = parse_syntax(src)?;
    resolve(&policy, model, catalog)?;
    Ok(policy)
}

fn resolve(policy: &Policy, model: &FeatureModel, catalog: &Catalog) -> Result<(), PolicyError> {
    let mut names = BTreeSet::new();
    for r in &policy.rules {
        if !names.insert(r.name.as_str()) {
            return Err(PolicyError::DuplicateRule(r.name.clone()));
        }
    }
    let emitted: BTreeSet<&str> = policy
        .rules
        .iter()
        .flat_map(|r| &r.actions)
        .filter_map(|a| match a {
            Action::Emit(n) => Some(n.as_str()),
            _ => None,
        })
        .collect();
    if let Some(n) = emitted.iter().find(|n| model.contains_feature(n)) {
        return Err(PolicyError::EmitShadowsFeature(n.to_string()));
    }
    let feature = |f: &str| {
        if model.contains_feature(f) {
            Ok(())
        } else {
            Err(PolicyError::UnknownFeature(f.to_string()))
        }
    };
    let attribute = |path: &str| match crate::feature_model::split_attr_path(path) {
        Some((f, _)) => {
            feature(f)?;
            model
                .attribute(path)
                .ok_or_else(|| PolicyError::UnknownAttribute(path.to_string()))
        }
        None => Err(PolicyError::UnknownAttribute(path.to_string())),
    };
    for r in &policy.rules {
        for atom in r.condition.atoms() {
            match atom {
                Atom::Selected(f) | Atom::NotSelected(f) | Atom::Deselected(f) => feature(f)?,
                Atom::Updated(p) if p.contains('.') => attribute(p).map(drop)?,
                Atom::Updated(f) => feature(f)?,
                Atom::Event(e) if emitted.contains(e.as_str()) => {}
                Atom::Event(e) => return Err(PolicyError::UnknownEvent(e.clone())),
                Atom::AttrCmp { path, op, value } => {
                    let def = attribute(path)?;
                    let invalid = |message: &str| PolicyError::InvalidComparison {
                        path: path.clone(),
                        message: message.to_string(),
                    };
                    match (&def.domain, value) {
                        (Domain::IntRange { .. }, Value::Int(_)) => {}
                        (Domain::IntRange { .. }, _) => return Err(invalid("integer attribute compared with a symbol")),
                        (Domain::Enum { .. }, _) if !op.is_equality() => {
                            return Err(invalid("enumerated attributes support only = and !="))
                        }
                        (d @ Domain::Enum { .. }, v) if !d.contains(v) => {
                            return Err(invalid(&format!("`{v}` is not in the attribute's domain")))
                        }
                        _ => {}
                    }
                }
            }
        }
        for action in &r.actions {
            match action {
                Action::AddCollaboration { id, params } | Action::UpdateCollaboration { id, params } => {
                    let def = catalog
                        .collaboration(id)
                        .ok_or_else(|| PolicyError::UnknownCollaboration(id.clone()))?;
                    let wanted = def.attr_params();
                    for (name, src) in params {
                        if !wanted.contains(name.as_str()) {
                            return Err(PolicyError::UnresolvedParam {
                                collaboration: id.clone(),
                                param: name.clone(),
                            });
                        }
                        if let ParamExpr::Attr(p) = src {
                            attribute(p)?;
                        }
                    }
                    if matches!(action, Action::AddCollaboration { .. }) {
                        if let Some(missing) = wanted.iter().find(|w| !params.iter().any(|(n, _)| n == *w)) {
                            return Err(PolicyError::UnresolvedParam {
                                collaboration: id.clone(),
                                param: missing.to_string(),
                            });
                        }
                    }
                }
                Action::RemoveCollaboration(id) => {
                    catalog
                        .collaboration(id)
                        .ok_or_else(|| PolicyError::UnknownCollaboration(id.clone()))?;
                }
                Action::AddUnit(id) | Action::RemoveUnit(id) => {
                    catalog.unit(id).ok_or_else(|| PolicyError::UnknownUnit(id.clone()))?;
                }
                Action::Emit(_) => {}
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintWarning {
    pub rule: String,
    pub message: String,
}

/// Style warnings that do not prevent enactment.
pub fn lint(policy: &Policy) -> Vec<LintWarning> {
    let mut out = Vec::new();
    for r in &policy.rules {
        for atom in r.condition.negated_atoms() {
            if let Atom::Event(e) = atom {
                out.push(LintWarning {
                    rule: r.name.clone(),
                    message: format!(
                        "negated `event({e})` is non-monotone: the rule may fire before `{e}` is emitted"
                    ),
                });
            }
        }
    }
    let consumed: BTreeSet<&str> = policy
        .rules
        .iter()
        .flat_map(|r| r.condition.atoms())
        .filter_map(|a| match a {
            Atom::Event(e) => Some(e.as_str()),
            _ => None,
        })
        .collect();
    for r in &policy.rules {
        for a in &r.actions {
            if let Action::Emit(e) = a {
                if !consumed.contains(e.as_str()) {
                    out.push(LintWarning {
                        rule: r.name.clone(),
                        message: format!("event `{e}` is emitted but no rule reacts to it"),
                    });
                }
            }
        }
    }
    out
}
