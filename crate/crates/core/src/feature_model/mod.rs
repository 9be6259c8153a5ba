//! Cardinality-based feature models with attributes and cross-tree
//! constraints.
//!
//! A [`FeatureModel`] is parsed from its JSON interchange form and checked
//! for structural well-formedness on construction. Tenant configurations are
//! checked against it by [`validate_configuration`]; small models can be
//! exhaustively enumerated with [`enumerate_configurations`].

mod enumerate;
mod validate;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::Value;

pub use enumerate::{attribute_samples, enumerate_configurations, EnumerationError};
pub use validate::{validate_configuration, ValidationResult, Violation, ViolationCode};

/// Errors raised while reading a feature model document.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureModelError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error in `{element}`: {message}")]
    Schema { element: String, message: String },
}

impl FeatureModelError {
    fn schema(element: impl Into<String>, message: impl Into<String>) -> Self {
        FeatureModelError::Schema {
            element: element.into(),
            message: message.into(),
        }
    }
}

/// An inclusive `[lo, hi]` bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct Cardinality {
    pub lo: u32,
    pub hi: u32,
}

impl Cardinality {
    pub const MANDATORY: Cardinality = Cardinality { lo: 1, hi: 1 };
    pub const OPTIONAL: Cardinality = Cardinality { lo: 0, hi: 1 };

    pub fn new(lo: u32, hi: u32) -> Self {
        Cardinality { lo, hi }
    }

    pub fn contains(&self, n: u32) -> bool {
        self.lo <= n && n <= self.hi
    }
}

impl From<[u32; 2]> for Cardinality {
    fn from([lo, hi]: [u32; 2]) -> Self {
        Cardinality { lo, hi }
    }
}

impl From<Cardinality> for [u32; 2] {
    fn from(c: Cardinality) -> Self {
        [c.lo, c.hi]
    }
}

impl fmt::Display for Cardinality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}-{}]", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Domain {
    Enum { values: Vec<String> },
    IntRange { min: i64, max: i64 },
}

impl Domain {
    pub fn contains(&self, value: &Value) -> bool {
        match (self, value) {
            (Domain::Enum { values }, Value::Sym(s)) => values.iter().any(|v| v == s),
            (Domain::IntRange { min, max }, Value::Int(v)) => min <= v && v <= max,
            _ => false,
        }
    }

    fn accepts_kind(&self, value: &Value) -> bool {
        matches!(
            (self, value),
            (Domain::Enum { .. }, Value::Sym(_)) | (Domain::IntRange { .. }, Value::Int(_))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: String,
    pub domain: Domain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Feature {
    pub name: String,
    pub cardinality: Cardinality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_cardinality: Option<Cardinality>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attributes: Vec<AttributeDef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<Feature>,
}

impl Feature {
    pub fn new(name: impl Into<String>, cardinality: Cardinality) -> Self {
        Feature {
            name: name.into(),
            cardinality,
            group_cardinality: None,
            attributes: Vec::new(),
            children: Vec::new(),
        }
    }

    pub fn with_group(mut self, lo: u32, hi: u32) -> Self {
        self.group_cardinality = Some(Cardinality::new(lo, hi));
        self
    }

    pub fn with_attribute(mut self, name: impl Into<String>, domain: Domain) -> Self {
        self.attributes.push(AttributeDef {
            name: name.into(),
            domain,
        });
        self
    }

    pub fn with_child(mut self, child: Feature) -> Self {
        self.children.push(child);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CompareOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=", alias = "≠")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=", alias = "≤")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=", alias = "≥")]
    Ge,
}

impl CompareOp {
    pub fn is_equality(self) -> bool {
        matches!(self, CompareOp::Eq | CompareOp::Ne)
    }

    /// Applies the operator; values of different kinds never compare true.
    pub fn apply(self, lhs: &Value, rhs: &Value) -> bool {
        match (lhs, rhs) {
            (Value::Int(a), Value::Int(b)) => match self {
                CompareOp::Eq => a == b,
                CompareOp::Ne => a != b,
                CompareOp::Lt => a < b,
                CompareOp::Le => a <= b,
                CompareOp::Gt => a > b,
                CompareOp::Ge => a >= b,
            },
            (Value::Sym(a), Value::Sym(b)) => match self {
                CompareOp::Eq => a == b,
                CompareOp::Ne => a != b,
                _ => false,
            },
            _ => false,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }
}

impl fmt::Display for CompareOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Predicate {
    AttrCompare {
        attr: String,
        op: CompareOp,
        value: Value,
    },
    FeatureSelected {
        feature: String,
    },
}

impl Predicate {
    pub fn selected(feature: impl Into<String>) -> Self {
        Predicate::FeatureSelected {
            feature: feature.into(),
        }
    }

    pub fn compare(attr: impl Into<String>, op: CompareOp, value: impl Into<Value>) -> Self {
        Predicate::AttrCompare {
            attr: attr.into(),
            op,
            value: value.into(),
        }
    }

    /// Evaluates against one configuration. An attribute of an unselected
    /// feature, or one without a value, makes every comparison false.
    pub fn holds(&self, config: &FeatureConfiguration) -> bool {
        match self {
            Predicate::FeatureSelected { feature } => config.selected.contains(feature),
            Predicate::AttrCompare { attr, op, value } => {
                let Some((feature, _)) = split_attr_path(attr) else {
                    return false;
                };
                config.selected.contains(feature)
                    && config
                        .attribute_values
                        .get(attr)
                        .is_some_and(|v| op.apply(v, value))
            }
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::FeatureSelected { feature } => f.write_str(feature),
            Predicate::AttrCompare { attr, op, value } => write!(f, "({attr} {op} {value})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Includes,
    Excludes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossTreeConstraint {
    pub kind: ConstraintKind,
    #[serde(rename = "if")]
    pub antecedent: Predicate,
    #[serde(rename = "then")]
    pub consequent: Predicate,
}

impl CrossTreeConstraint {
    pub fn includes(antecedent: Predicate, consequent: Predicate) -> Self {
        CrossTreeConstraint {
            kind: ConstraintKind::Includes,
            antecedent,
            consequent,
        }
    }

    pub fn excludes(antecedent: Predicate, consequent: Predicate) -> Self {
        CrossTreeConstraint {
            kind: ConstraintKind::Excludes,
            antecedent,
            consequent,
        }
    }

    pub fn is_satisfied(&self, config: &FeatureConfiguration) -> bool {
        if !self.antecedent.holds(config) {
            return true;
        }
        match self.kind {
            ConstraintKind::Includes => self.consequent.holds(config),
            ConstraintKind::Excludes => !self.consequent.holds(config),
        }
    }
}

impl fmt::Display for CrossTreeConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verb = match self.kind {
            ConstraintKind::Includes => "include",
            ConstraintKind::Excludes => "exclude",
        };
        write!(f, "{} {verb} {}", self.antecedent, self.consequent)
    }
}

/// One tenant's selection of features and attribute values.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FeatureConfiguration {
    #[serde(default)]
    pub tenant_id: String,
    pub selected: BTreeSet<String>,
    #[serde(default, rename = "attributes")]
    pub attribute_values: BTreeMap<String, Value>,
}

impl FeatureConfiguration {
    pub fn new(tenant_id: impl Into<String>) -> Self {
        FeatureConfiguration {
            tenant_id: tenant_id.into(),
            ..Default::default()
        }
    }

    pub fn select<I, S>(mut self, features: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.selected.extend(features.into_iter().map(Into::into));
        self
    }

    pub fn set(mut self, path: impl Into<String>, value: impl Into<Value>) -> Self {
        self.attribute_values.insert(path.into(), value.into());
        self
    }

    pub fn is_selected(&self, feature: &str) -> bool {
        self.selected.contains(feature)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Splits `"Feature.Attr"` into its two halves.
pub fn split_attr_path(path: &str) -> Option<(&str, &str)> {
    let (feature, attr) = path.split_once('.')?;
    (!feature.is_empty() && !attr.is_empty() && !attr.contains('.')).then_some((feature, attr))
}

/// Flattened, pre-order view of one feature.
#[derive(Debug, Clone)]
pub struct FeatureNode {
    pub name: String,
    pub parent: Option<usize>,
    pub cardinality: Cardinality,
    pub group_cardinality: Option<Cardinality>,
    pub attributes: Vec<AttributeDef>,
    pub children: Vec<usize>,
}

impl FeatureNode {
    pub fn attribute(&self, name: &str) -> Option<&AttributeDef> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn is_mandatory(&self) -> bool {
        self.cardinality.lo >= 1
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawFeatureModel")]
pub struct FeatureModel {
    pub name: String,
    pub root: Feature,
    #[serde(default)]
    pub constraints: Vec<CrossTreeConstraint>,
    #[serde(skip)]
    nodes: Vec<FeatureNode>,
    #[serde(skip)]
    by_name: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct RawFeatureModel {
    name: String,
    root: Feature,
    #[serde(default)]
    constraints: Vec<CrossTreeConstraint>,
}

impl TryFrom<RawFeatureModel> for FeatureModel {
    type Error = FeatureModelError;

    fn try_from(raw: RawFeatureModel) -> Result<Self, Self::Error> {
        FeatureModel::new(raw.name, raw.root, raw.constraints)
    }
}

impl PartialEq for FeatureModel {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.root == other.root && self.constraints == other.constraints
    }
}

impl FeatureModel {
    /// Builds a model, checking every structural invariant.
    pub fn new(
        name: impl Into<String>,
        root: Feature,
        constraints: Vec<CrossTreeConstraint>,
    ) -> Result<Self, FeatureModelError> {
        if root.cardinality != Cardinality::MANDATORY {
            return Err(FeatureModelError::schema(
                &root.name,
                format!("root cardinality must be [1,1], found {}", root.cardinality),
            ));
        }
        let mut model = FeatureModel {
            name: name.into(),
            root,
            constraints,
            nodes: Vec::new(),
            by_name: HashMap::new(),
        };
        let root = model.root.clone();
        model.index(&root, None)?;
        for constraint in &model.constraints {
            model.check_predicate(&constraint.antecedent, constraint)?;
            model.check_predicate(&constraint.consequent, constraint)?;
        }
        Ok(model)
    }

    pub fn from_json(text: &str) -> Result<Self, FeatureModelError> {
        let raw: RawFeatureModel = serde_json::from_str(text).map_err(|err| {
            if err.is_data() {
                FeatureModelError::schema(
                    "document",
                    format!("{err}"),
                )
            } else {
                FeatureModelError::Syntax {
                    line: err.line(),
                    column: err.column(),
                    message: err.to_string(),
                }
            }
        })?;
        raw.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("feature model serializes")
    }

    fn index(&mut self, feature: &Feature, parent: Option<usize>) -> Result<usize, FeatureModelError> {
        let c = feature.cardinality;
        if c.lo > c.hi || c.hi != 1 {
            return Err(FeatureModelError::schema(
                &feature.name,
                format!("cardinality {c} must be [0-1] or [1-1]"),
            ));
        }
        if let Some(g) = feature.group_cardinality {
            if g.lo > g.hi || g.hi as usize > feature.children.len() {
                return Err(FeatureModelError::schema(
                    &feature.name,
                    format!(
                        "group cardinality {g} invalid for {} children",
                        feature.children.len()
                    ),
                ));
            }
        }
        if feature.name.is_empty() || feature.name.contains('.') {
            return Err(FeatureModelError::schema(
                &feature.name,
                "feature names must be non-empty and contain no '.'",
            ));
        }
        if self.by_name.contains_key(&feature.name) {
            return Err(FeatureModelError::schema(&feature.name, "duplicate feature name"));
        }
        let mut seen = BTreeSet::new();
        for attr in &feature.attributes {
            let path = format!("{}.{}", feature.name, attr.name);
            if !seen.insert(attr.name.as_str()) {
                return Err(FeatureModelError::schema(path, "duplicate attribute name"));
            }
            match &attr.domain {
                Domain::Enum { values } => {
                    let distinct: BTreeSet<_> = values.iter().collect();
                    if values.is_empty() || distinct.len() != values.len() {
                        return Err(FeatureModelError::schema(
                            path,
                            "enum domain must be non-empty and duplicate-free",
                        ));
                    }
                }
                Domain::IntRange { min, max } => {
                    if min > max {
                        return Err(FeatureModelError::schema(path, "range min exceeds max"));
                    }
                }
            }
        }

        let id = self.nodes.len();
        self.by_name.insert(feature.name.clone(), id);
        self.nodes.push(FeatureNode {
            name: feature.name.clone(),
            parent,
            cardinality: feature.cardinality,
            group_cardinality: feature.group_cardinality,
            attributes: feature.attributes.clone(),
            children: Vec::new(),
        });
        for child in &feature.children {
            let child_id = self.index(child, Some(id))?;
            self.nodes[id].children.push(child_id);
        }
        Ok(id)
    }

    fn check_predicate(
        &self,
        predicate: &Predicate,
        constraint: &CrossTreeConstraint,
    ) -> Result<(), FeatureModelError> {
        match predicate {
            Predicate::FeatureSelected { feature } => {
                if !self.by_name.contains_key(feature) {
                    return Err(FeatureModelError::schema(
                        feature,
                        format!("constraint `{constraint}` references unknown feature `{feature}`"),
                    ));
                }
            }
            Predicate::AttrCompare { attr, op, value } => {
                let def = self.attribute(attr).ok_or_else(|| {
                    FeatureModelError::schema(
                        attr,
                        format!("constraint `{constraint}` references unknown attribute `{attr}`"),
                    )
                })?;
                if !def.domain.accepts_kind(value) {
                    return Err(FeatureModelError::schema(
                        attr,
                        format!("value `{value}` is incompatible with the attribute domain"),
                    ));
                }
                if let Domain::Enum { values } = &def.domain {
                    if !op.is_equality() {
                        return Err(FeatureModelError::schema(
                            attr,
                            format!("operator `{op}` is not defined on enumerated attributes"),
                        ));
                    }
                    if !values.iter().any(|v| Some(v.as_str()) == value.as_sym()) {
                        return Err(FeatureModelError::schema(
                            attr,
                            format!("`{value}` is not one of the enumerated values"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Features in pre-order; index 0 is the root.
    pub fn nodes(&self) -> &[FeatureNode] {
        &self.nodes
    }

    pub fn node(&self, name: &str) -> Option<&FeatureNode> {
        self.by_name.get(name).map(|&i| &self.nodes[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn root_name(&self) -> &str {
        &self.root.name
    }

    pub fn contains_feature(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }

    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.name.as_str())
    }

    /// Looks up an attribute by its `"Feature.Attr"` path.
    pub fn attribute(&self, path: &str) -> Option<&AttributeDef> {
        let (feature, attr) = split_attr_path(path)?;
        self.node(feature)?.attribute(attr)
    }

    pub fn attribute_count(&self) -> usize {
        self.nodes.iter().map(|n| n.attributes.len()).sum()
    }

    /// True when `ancestor` lies on the path from the root to `feature`.
    pub fn is_ancestor(&self, ancestor: &str, feature: &str) -> bool {
        let (Some(a), Some(mut cur)) = (self.index_of(ancestor), self.index_of(feature)) else {
            return false;
        };
        while let Some(p) = self.nodes[cur].parent {
            if p == a {
                return true;
            }
            cur = p;
        }
        false
    }
}
