use std::fmt;

use serde::{Deserialize, Serialize};

use super::{FeatureConfiguration, FeatureModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationCode {
    MandatoryMissing,
    ParentNotSelected,
    GroupCardinality,
    ConstraintViolated,
    AttributeOutOfDomain,
    AttributeMissing,
    AttributeOnUnselected,
    UnknownFeature,
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    /// Feature name, attribute path, or the text of a cross-tree constraint.
    pub subject: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

impl ValidationResult {
    pub fn has(&self, code: ViolationCode, subject: &str) -> bool {
        self.violations
            .iter()
            .any(|v| v.code == code && v.subject == subject)
    }
}

impl fmt::Display for ValidationResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.valid {
            return f.write_str("valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{} {}: {}", v.code, v.subject, v.message)?;
        }
        Ok(())
    }
}

struct Collector(Vec<Violation>);

impl Collector {
    fn push(&mut self, code: ViolationCode, subject: impl Into<String>, message: String) {
        self.0.push(Violation {
            code,
            subject: subject.into(),
            message,
        });
    }
}

/// Checks a configuration against every rule of the model and reports all
/// violations found. Never fails: malformed input shows up as violations.
pub fn validate_configuration(
    model: &FeatureModel,
    config: &FeatureConfiguration,
) -> ValidationResult {
    use ViolationCode::*;

    let mut out = Collector(Vec::new());

    for name in &config.selected {
        if !model.contains_feature(name) {
            out.push(UnknownFeature, name, format!("`{name}` is not a feature of {}", model.name));
        }
    }
    for path in config.attribute_values.keys() {
        if model.attribute(path).is_none() {
            out.push(UnknownFeature, path, format!("`{path}` is not a declared attribute"));
        }
    }

    let nodes = model.nodes();
    let selected: Vec<bool> = nodes
        .iter()
        .map(|n| config.selected.contains(&n.name))
        .collect();

    for (i, node) in nodes.iter().enumerate() {
        let is_selected = selected[i];
        match node.parent {
            None if !is_selected => {
                out.push(MandatoryMissing, &node.name, "the root feature must be selected".into());
            }
            None => {}
            Some(p) => {
                if is_selected && !selected[p] {
                    out.push(
                        ParentNotSelected,
                        &node.name,
                        format!("parent `{}` is not selected", nodes[p].name),
                    );
                }
                if selected[p] && node.is_mandatory() && !is_selected {
                    out.push(
                        MandatoryMissing,
                        &node.name,
                        format!("mandatory under selected `{}`", nodes[p].name),
                    );
                }
            }
        }

        if is_selected {
            if let Some(group) = node.group_cardinality {
                let count = node.children.iter().filter(|&&c| selected[c]).count() as u32;
                if !group.contains(count) {
                    out.push(
                        GroupCardinality,
                        &node.name,
                        format!("{count} children selected, group cardinality is {group}"),
                    );
                }
            }
        }

        for attr in &node.attributes {
            let path = format!("{}.{}", node.name, attr.name);
            match (is_selected, config.attribute_values.get(&path)) {
                (true, None) => {
                    out.push(AttributeMissing, &path, "selected feature attribute has no value".into())
                }
                (true, Some(v)) if !attr.domain.contains(v) => {
                    out.push(AttributeOutOfDomain, &path, format!("`{v}` is outside the domain"))
                }
                (false, Some(_)) => out.push(
                    AttributeOnUnselected,
                    &path,
                    format!("`{}` is not selected", node.name),
                ),
                _ => {}
            }
        }
    }

    for constraint in &model.constraints {
        if !constraint.is_satisfied(config) {
            out.push(
                ConstraintViolated,
                constraint.to_string(),
                format!("constraint `{constraint}` is violated"),
            );
        }
    }

    let violations = out.0;
    ValidationResult {
        valid: violations.is_empty(),
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_model::{Cardinality, CompareOp, CrossTreeConstraint, Domain, Feature, Predicate};

    fn model() -> FeatureModel {
        let root = Feature::new("Root", Cardinality::MANDATORY)
            .with_child(
                Feature::new("Repair", Cardinality::MANDATORY)
                    .with_group(1, 2)
                    .with_child(Feature::new("Major", Cardinality::OPTIONAL).with_attribute(
                        "ResponseTime",
                        Domain::Enum {
                            values: vec!["2d".into(), "3d".into()],
                        },
                    ))
                    .with_child(Feature::new("Minor", Cardinality::OPTIONAL)),
            )
            .with_child(Feature::new("Tow", Cardinality::OPTIONAL))
            .with_child(Feature::new("External", Cardinality::OPTIONAL))
            .with_child(
                Feature::new("CaseHandling", Cardinality::MANDATORY)
                    .with_attribute("Throughput", Domain::IntRange { min: 10, max: 250 }),
            );
        FeatureModel::new(
            "M",
            root,
            vec![
                CrossTreeConstraint::includes(Predicate::selected("Major"), Predicate::selected("Tow")),
                CrossTreeConstraint::excludes(
                    Predicate::selected("External"),
                    Predicate::compare("Major.ResponseTime", CompareOp::Eq, "2d"),
                ),
            ],
        )
        .unwrap()
    }

    fn base() -> FeatureConfiguration {
        FeatureConfiguration::new("t")
            .select(["Root", "Repair", "Minor", "CaseHandling"])
            .set("CaseHandling.Throughput", 80)
    }

    #[test]
    fn base_configuration_is_valid() {
        let r = validate_configuration(&model(), &base());
        assert!(r.valid, "{r}");
    }

    #[test]
    fn missing_root_is_reported_on_the_root() {
        let mut c = base();
        c.selected.remove("Root");
        let r = validate_configuration(&model(), &c);
        assert!(r.has(ViolationCode::MandatoryMissing, "Root"));
        assert!(r.has(ViolationCode::ParentNotSelected, "Repair"));
    }

    #[test]
    fn mandatory_child_must_be_selected() {
        let mut c = base();
        c.selected.remove("Repair");
        c.selected.remove("Minor");
        let r = validate_configuration(&model(), &c);
        assert!(r.has(ViolationCode::MandatoryMissing, "Repair"));
    }

    #[test]
    fn group_cardinality_counts_selected_children() {
        let mut c = base();
        c.selected.remove("Minor");
        let r = validate_configuration(&model(), &c);
        assert_eq!(r.violations.len(), 1);
        assert!(r.has(ViolationCode::GroupCardinality, "Repair"));
    }

    #[test]
    fn include_constraint() {
        let c = base().select(["Major"]).set("Major.ResponseTime", "3d");
        let r = validate_configuration(&model(), &c);
        assert!(r.has(ViolationCode::ConstraintViolated, "Major include Tow"));
        let fixed = c.select(["Tow"]);
        assert!(validate_configuration(&model(), &fixed).valid);
    }

    #[test]
    fn exclude_constraint_against_attribute_value() {
        let c = base()
            .select(["Major", "Tow", "External"])
            .set("Major.ResponseTime", "2d");
        let r = validate_configuration(&model(), &c);
        assert!(r.has(
            ViolationCode::ConstraintViolated,
            "External exclude (Major.ResponseTime = 2d)"
        ));
        let ok = c.set("Major.ResponseTime", "3d");
        assert!(validate_configuration(&model(), &ok).valid);
    }

    #[test]
    fn attribute_rules() {
        let m = model();
        let missing = FeatureConfiguration::new("t").select(["Root", "Repair", "Minor", "CaseHandling"]);
        assert!(validate_configuration(&m, &missing).has(ViolationCode::AttributeMissing, "CaseHandling.Throughput"));

        let out = base().set("CaseHandling.Throughput", 300);
        assert!(validate_configuration(&m, &out).has(ViolationCode::AttributeOutOfDomain, "CaseHandling.Throughput"));

        let wrong_kind = base().set("CaseHandling.Throughput", "80");
        assert!(validate_configuration(&m, &wrong_kind).has(ViolationCode::AttributeOutOfDomain, "CaseHandling.Throughput"));

        let unselected = base().set("Major.ResponseTime", "2d");
        assert!(validate_configuration(&m, &unselected).has(ViolationCode::AttributeOnUnselected, "Major.ResponseTime"));
    }

    #[test]
    fn unknown_names_are_reported() {
        let c = base().select(["Teleport"]).set("Repair.Speed", 1);
        let r = validate_configuration(&model(), &c);
        assert!(r.has(ViolationCode::UnknownFeature, "Teleport"));
        assert!(r.has(ViolationCode::UnknownFeature, "Repair.Speed"));
    }
}
