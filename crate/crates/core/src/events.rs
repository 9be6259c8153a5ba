//! Customization events derived from tenant configurations.
//!
//! A first configuration yields `Selected`/`NotSelected` for every feature
//! and attribute. A reconfiguration compares the tenant's current and new
//! configurations and adds `Deselected` and `Updated`. Events are emitted in
//! model pre-order, each feature followed by its attributes.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature_model::{validate_configuration, FeatureConfiguration, FeatureModel, ValidationResult};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Selected,
    NotSelected,
    Deselected,
    Updated,
    Custom,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CustomizationEvent {
    pub kind: EventKind,
    /// Feature name, `Feature.Attr` path, or custom event name.
    pub subject: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
}

impl CustomizationEvent {
    pub fn new(kind: EventKind, subject: impl Into<String>) -> Self {
        CustomizationEvent {
            kind,
            subject: subject.into(),
            value: None,
        }
    }

    pub fn with_value(kind: EventKind, subject: impl Into<String>, value: Value) -> Self {
        CustomizationEvent {
            kind,
            subject: subject.into(),
            value: Some(value),
        }
    }

    pub fn custom(name: impl Into<String>) -> Self {
        Self::new(EventKind::Custom, name)
    }
}

impl fmt::Display for CustomizationEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.value {
            Some(v) => write!(f, "{}({}={})", self.kind, self.subject, v),
            None => write!(f, "{}({})", self.kind, self.subject),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Configuration,
    Reconfiguration,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EventSet {
    pub request_id: String,
    pub phase: Phase,
    pub events: Vec<CustomizationEvent>,
}

impl EventSet {
    pub fn contains(&self, kind: EventKind, subject: &str) -> bool {
        self.events.iter().any(|e| e.kind == kind && e.subject == subject)
    }

    pub fn get(&self, kind: EventKind, subject: &str) -> Option<&CustomizationEvent> {
        self.events.iter().find(|e| e.kind == kind && e.subject == subject)
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &CustomizationEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Debug, Error)]
#[error("configuration for `{tenant}` is invalid:\n{result}")]
pub struct InvalidConfiguration {
    pub tenant: String,
    pub result: ValidationResult,
}

fn require_valid(model: &FeatureModel, config: &FeatureConfiguration) -> Result<(), InvalidConfiguration> {
    let result = validate_configuration(model, config);
    if result.valid {
        Ok(())
    } else {
        Err(InvalidConfiguration {
            tenant: config.tenant_id.clone(),
            result,
        })
    }
}

/// Events for a tenant's first configuration.
pub fn initial_events(
    model: &FeatureModel,
    config: &FeatureConfiguration,
    request_id: impl Into<String>,
) -> Result<EventSet, InvalidConfiguration> {
    require_valid(model, config)?;
    let mut events = Vec::with_capacity(model.nodes().len() + model.attribute_count());
    for node in model.nodes() {
        let selected = config.is_selected(&node.name);
        let kind = if selected {
            EventKind::Selected
        } else {
            EventKind::NotSelected
        };
        events.push(CustomizationEvent::new(kind, &node.name));
        for attr in &node.attributes {
            let path = format!("{}.{}", node.name, attr.name);
            let event = match config.attribute_values.get(&path) {
                Some(v) if selected => CustomizationEvent::with_value(kind, path, v.clone()),
                _ => CustomizationEvent::new(kind, path),
            };
            events.push(event);
        }
    }
    Ok(EventSet {
        request_id: request_id.into(),
        phase: Phase::Configuration,
        events,
    })
}

/// Events describing the change from `old` to `new`.
///
/// Features kept in both configurations only produce events when one of their
/// attribute values changed, in which case both the feature and the changed
/// attributes are reported as `Updated`.
pub fn diff_events(
    model: &FeatureModel,
    old: &FeatureConfiguration,
    new: &FeatureConfiguration,
    request_id: impl Into<String>,
) -> Result<EventSet, InvalidConfiguration> {
    require_valid(model, old)?;
    require_valid(model, new)?;
    let mut events = Vec::new();
    for node in model.nodes() {
        let paths: Vec<String> = node
            .attributes
            .iter()
            .map(|a| format!("{}.{}", node.name, a.name))
            .collect();
        match (old.is_selected(&node.name), new.is_selected(&node.name)) {
            (false, true) => {
                events.push(CustomizationEvent::new(EventKind::Selected, &node.name));
                for path in paths {
                    let value = new.attribute_values.get(&path).cloned();
                    events.push(CustomizationEvent {
                        kind: EventKind::Selected,
                        subject: path,
                        value,
                    });
                }
            }
            (true, false) => {
                events.push(CustomizationEvent::new(EventKind::Deselected, &node.name));
                events.extend(
                    paths
                        .into_iter()
                        .map(|p| CustomizationEvent::new(EventKind::Deselected, p)),
                );
            }
            (true, true) => {
                let changed: Vec<(String, Option<Value>)> = paths
                    .into_iter()
                    .filter(|p| old.attribute_values.get(p) != new.attribute_values.get(p))
                    .map(|p| {
                        let v = new.attribute_values.get(&p).cloned();
                        (p, v)
                    })
                    .collect();
                if !changed.is_empty() {
                    events.push(CustomizationEvent::new(EventKind::Updated, &node.name));
                    for (path, value) in changed {
                        events.push(CustomizationEvent {
                            kind: EventKind::Updated,
                            subject: path,
                            value,
                        });
                    }
                }
            }
            (false, false) => {
                events.push(CustomizationEvent::new(EventKind::NotSelected, &node.name));
                events.extend(
                    paths
                        .into_iter()
                        .map(|p| CustomizationEvent::new(EventKind::NotSelected, p)),
                );
            }
        }
    }
    Ok(EventSet {
        request_id: request_id.into(),
        phase: Phase::Reconfiguration,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_model::{Cardinality, Domain, Feature};

    /// Root with three optional children; `B` carries an integer attribute.
    fn model() -> FeatureModel {
        let root = Feature::new("R", Cardinality::MANDATORY)
            .with_child(Feature::new("A", Cardinality::OPTIONAL))
            .with_child(
                Feature::new("B", Cardinality::OPTIONAL)
                    .with_attribute("N", Domain::IntRange { min: 1, max: 9 }),
            )
            .with_child(Feature::new("C", Cardinality::OPTIONAL));
        FeatureModel::new("m", root, vec![]).unwrap()
    }

    fn root_only() -> FeatureConfiguration {
        FeatureConfiguration::new("t").select(["R"])
    }

    fn names(set: &EventSet) -> Vec<String> {
        set.events.iter().map(ToString::to_string).collect()
    }

    #[test]
    fn minimal_model_emits_only_root() {
        let m = FeatureModel::new("m", Feature::new("R", Cardinality::MANDATORY), vec![]).unwrap();
        let set = initial_events(&m, &root_only(), "r1").unwrap();
        assert_eq!(names(&set), vec!["Selected(R)"]);
        assert_eq!(set.phase, Phase::Configuration);
    }

    #[test]
    fn initial_covers_every_feature_and_attribute() {
        let c = root_only().select(["B"]).set("B.N", 4);
        let set = initial_events(&model(), &c, "r1").unwrap();
        assert_eq!(
            names(&set),
            vec![
                "Selected(R)",
                "NotSelected(A)",
                "Selected(B)",
                "Selected(B.N=4)",
                "NotSelected(C)"
            ]
        );
    }

    #[test]
    fn initial_rejects_invalid_configuration() {
        let c = root_only().select(["B"]);
        assert!(initial_events(&model(), &c, "r").is_err());
    }

    // Worked by hand on the four-feature model: going from {R} to {R, A}
    // selects A; B (with its attribute) and C stay unused.
    #[test]
    fn selecting_one_optional_child() {
        let set = diff_events(&model(), &root_only(), &root_only().select(["A"]), "r2").unwrap();
        assert_eq!(
            names(&set),
            vec!["Selected(A)", "NotSelected(B)", "NotSelected(B.N)", "NotSelected(C)"]
        );
        assert_eq!(set.phase, Phase::Reconfiguration);
    }

    #[test]
    fn attribute_change_updates_feature_and_attribute() {
        let old = root_only().select(["B"]).set("B.N", 4);
        let new = root_only().select(["B"]).set("B.N", 7);
        let set = diff_events(&model(), &old, &new, "r").unwrap();
        assert!(set.contains(EventKind::Updated, "B"));
        assert_eq!(
            set.get(EventKind::Updated, "B.N").unwrap().value,
            Some(Value::Int(7))
        );
    }

    #[test]
    fn deselection_covers_attributes() {
        let old = root_only().select(["B"]).set("B.N", 4);
        let set = diff_events(&model(), &old, &root_only(), "r").unwrap();
        assert!(set.contains(EventKind::Deselected, "B"));
        assert!(set.contains(EventKind::Deselected, "B.N"));
    }

    #[test]
    fn serializes_as_kind_subject_value() {
        let e = CustomizationEvent::with_value(EventKind::Updated, "CaseHandling.Throughput", Value::Int(70));
        assert_eq!(
            serde_json::to_string(&e).unwrap(),
            r#"{"kind":"Updated","subject":"CaseHandling.Throughput","value":70}"#
        );
        let d = CustomizationEvent::new(EventKind::Deselected, "RentalVehicle");
        assert_eq!(
            serde_json::to_string(&d).unwrap(),
            r#"{"kind":"Deselected","subject":"RentalVehicle"}"#
        );
    }
}
