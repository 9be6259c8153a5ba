//! Exhaustive configuration enumeration for small models.
//!
//! Configurations are built constructively from the tree (mandatory children,
//! group bounds) and then filtered by the cross-tree constraints. Integer
//! ranges are sampled at their bounds plus every in-range value named by a
//! constraint. This path shares no code with the validator so the two can
//! serve as checks on each other.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::{
    split_attr_path, AttributeDef, CompareOp, ConstraintKind, Domain, FeatureConfiguration,
    FeatureModel, Predicate,
};
use crate::value::Value;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnumerationError {
    #[error("search space of {0} configurations exceeds the limit")]
    SpaceTooLarge(u128),
}

/// Values the enumerator tries for one attribute.
pub fn attribute_samples(model: &FeatureModel, feature: &str, attr: &AttributeDef) -> Vec<Value> {
    match &attr.domain {
        Domain::Enum { values } => values.iter().cloned().map(Value::Sym).collect(),
        Domain::IntRange { min, max } => {
            let path = format!("{feature}.{}", attr.name);
            let mut samples: BTreeSet<i64> = [*min, *max].into();
            for c in &model.constraints {
                for p in [&c.antecedent, &c.consequent] {
                    if let Predicate::AttrCompare {
                        attr,
                        value: Value::Int(v),
                        ..
                    } = p
                    {
                        if *attr == path && min <= v && v <= max {
                            samples.insert(*v);
                        }
                    }
                }
            }
            samples.into_iter().map(Value::Int).collect()
        }
    }
}

fn search_space(model: &FeatureModel) -> u128 {
    let features = model.nodes().len().saturating_sub(1) as u32;
    let mut size = 1u128.checked_shl(features).unwrap_or(u128::MAX);
    for node in model.nodes() {
        for attr in &node.attributes {
            size = size.saturating_mul(attribute_samples(model, &node.name, attr).len() as u128);
        }
    }
    size
}

/// All valid configurations over the sampled attribute space, sorted by
/// selected-set and then by attribute values.
pub fn enumerate_configurations(
    model: &FeatureModel,
    limit: u128,
) -> Result<Vec<FeatureConfiguration>, EnumerationError> {
    let space = search_space(model);
    if space > limit {
        return Err(EnumerationError::SpaceTooLarge(space));
    }

    let mut out = Vec::new();
    for selection in expand(model, 0) {
        let attrs: Vec<(String, Vec<Value>)> = selection
            .iter()
            .flat_map(|&i| {
                let node = &model.nodes()[i];
                node.attributes.iter().map(move |a| {
                    (
                        format!("{}.{}", node.name, a.name),
                        attribute_samples(model, &node.name, a),
                    )
                })
            })
            .collect();
        let names: BTreeSet<String> = selection
            .iter()
            .map(|&i| model.nodes()[i].name.clone())
            .collect();
        for assignment in cartesian(&attrs) {
            if constraints_hold(model, &names, &assignment) {
                out.push(FeatureConfiguration {
                    tenant_id: String::new(),
                    selected: names.clone(),
                    attribute_values: assignment,
                });
            }
        }
    }

    out.sort_by(|a, b| {
        a.selected
            .iter()
            .cmp(b.selected.iter())
            .then_with(|| a.attribute_values.values().cmp(b.attribute_values.values()))
    });
    Ok(out)
}

/// Every legal selection of the subtree rooted at `id`, assuming `id` itself
/// is selected.
fn expand(model: &FeatureModel, id: usize) -> Vec<BTreeSet<usize>> {
    let node = &model.nodes()[id];
    let children = &node.children;
    let mut results = Vec::new();
    for mask in 0u64..(1u64 << children.len()) {
        let chosen: Vec<usize> = children
            .iter()
            .enumerate()
            .filter(|(bit, _)| mask & (1 << bit) != 0)
            .map(|(_, &c)| c)
            .collect();
        let mandatory_ok = children
            .iter()
            .all(|&c| !model.nodes()[c].is_mandatory() || chosen.contains(&c));
        let group_ok = node
            .group_cardinality
            .is_none_or(|g| g.contains(chosen.len() as u32));
        if !mandatory_ok || !group_ok {
            continue;
        }
        let mut partial = vec![BTreeSet::from([id])];
        for &c in &chosen {
            let sub = expand(model, c);
            partial = partial
                .iter()
                .flat_map(|p| {
                    sub.iter().map(move |s| {
                        let mut merged = p.clone();
                        merged.extend(s.iter().copied());
                        merged
                    })
                })
                .collect();
        }
        results.extend(partial);
    }
    results
}

fn cartesian(attrs: &[(String, Vec<Value>)]) -> Vec<BTreeMap<String, Value>> {
    let mut acc = vec![BTreeMap::new()];
    for (path, values) in attrs {
        acc = acc
            .into_iter()
            .flat_map(|m| {
                values.iter().map(move |v| {
                    let mut next = m.clone();
                    next.insert(path.clone(), v.clone());
                    next
                })
            })
            .collect();
    }
    acc
}

fn constraints_hold(
    model: &FeatureModel,
    selected: &BTreeSet<String>,
    values: &BTreeMap<String, Value>,
) -> bool {
    let eval = |p: &Predicate| match p {
        Predicate::FeatureSelected { feature } => selected.contains(feature),
        Predicate::AttrCompare { attr, op, value } => {
            let owner_selected = split_attr_path(attr).is_some_and(|(f, _)| selected.contains(f));
            owner_selected
                && values.get(attr).is_some_and(|actual| match (actual, value) {
                    (Value::Int(a), Value::Int(b)) => match op {
                        CompareOp::Eq => a == b,
                        CompareOp::Ne => a != b,
                        CompareOp::Lt => a < b,
                        CompareOp::Le => a <= b,
                        CompareOp::Gt => a > b,
                        CompareOp::Ge => a >= b,
                    },
                    (Value::Sym(a), Value::Sym(b)) => match op {
                        CompareOp::Eq => a == b,
                        CompareOp::Ne => a != b,
                        _ => false,
                    },
                    _ => false,
                })
        }
    };
    model.constraints.iter().all(|c| {
        !eval(&c.antecedent)
            || match c.kind {
                ConstraintKind::Includes => eval(&c.consequent),
                ConstraintKind::Excludes => !eval(&c.consequent),
            }
    })
}
