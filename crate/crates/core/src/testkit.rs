//! Random feature models and configurations for property and acceptance
//! tests. Enabled by the `testkit` feature.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::feature_model::{
    attribute_samples, Cardinality, CompareOp, CrossTreeConstraint, Domain, Feature,
    FeatureConfiguration, FeatureModel, Predicate,
};
use crate::control::{ControlPlane, ParamValues};
use crate::network::{Clock, Message, ServiceNetwork, StubCatalog, TableOp, TableProjection};
use crate::value::Value;

/// Size bounds for [`random_model`].
#[derive(Debug, Clone, Copy)]
pub struct ModelShape {
    pub max_features: usize,
    pub max_attributes: usize,
    pub max_constraints: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        ModelShape { max_features: 12, max_attributes: 2, max_constraints: 3 }
    }
}

fn random_domain(rng: &mut impl Rng) -> Domain {
    if rng.gen_bool(0.5) {
        let n = rng.gen_range(2..=3);
        Domain::Enum { values: (0..n).map(|i| format!("v{i}")).collect() }
    } else {
        let min = rng.gen_range(0..5);
        Domain::IntRange { min, max: min + rng.gen_range(1..20) }
    }
}

/// A model with between 2 and `max_features` features (root included),
/// at most `max_attributes` attributes in total, random group bounds and a
/// few includes/excludes constraints over features and attributes.
pub fn random_model(rng: &mut impl Rng, shape: ModelShape) -> FeatureModel {
    let count = rng.gen_range(2..=shape.max_features.max(2));
    let mut parents = vec![None];
    for i in 1..count {
        parents.push(Some(rng.gen_range(0..i)));
    }
    let mut features: Vec<Feature> = (0..count)
        .map(|i| {
            let card = if i == 0 || rng.gen_bool(0.3) { Cardinality::MANDATORY } else { Cardinality::OPTIONAL };
            Feature::new(format!("F{i}"), card)
        })
        .collect();

    let mut attrs = Vec::new();
    for _ in 0..rng.gen_range(0..=shape.max_attributes) {
        let owner = rng.gen_range(0..count);
        let name = format!("a{}", attrs.len());
        let domain = random_domain(rng);
        features[owner].attributes.push(crate::feature_model::AttributeDef { name: name.clone(), domain: domain.clone() });
        attrs.push((format!("F{owner}.{name}"), domain));
    }

    for p in 0..count {
        let kids: Vec<usize> = (0..count).filter(|&c| parents[c] == Some(p)).collect();
        if kids.len() >= 2 && rng.gen_bool(0.4) {
            for &k in &kids {
                features[k].cardinality = Cardinality::OPTIONAL;
            }
            let lo = rng.gen_range(0..=1);
            let hi = rng.gen_range(lo.max(1)..=kids.len() as u32);
            features[p].group_cardinality = Some(Cardinality::new(lo, hi));
        }
    }

    let predicate = |rng: &mut dyn rand::RngCore| -> Predicate {
        if !attrs.is_empty() && rng.gen_bool(0.3) {
            let (path, domain) = &attrs[rng.gen_range(0..attrs.len())];
            match domain {
                Domain::Enum { values } => {
                    let op = if rng.gen_bool(0.5) { CompareOp::Eq } else { CompareOp::Ne };
                    Predicate::compare(path.clone(), op, values[rng.gen_range(0..values.len())].as_str())
                }
                Domain::IntRange { min, max } => {
                    let ops = [CompareOp::Eq, CompareOp::Ne, CompareOp::Lt, CompareOp::Le, CompareOp::Gt, CompareOp::Ge];
                    Predicate::compare(path.clone(), ops[rng.gen_range(0..ops.len())], rng.gen_range(*min..=*max))
                }
            }
        } else {
            Predicate::selected(format!("F{}", rng.gen_range(1..count)))
        }
    };
    let mut constraints = Vec::new();
    for _ in 0..rng.gen_range(0..=shape.max_constraints) {
        let a = predicate(rng);
        let b = predicate(rng);
        constraints.push(if rng.gen_bool(0.5) {
            CrossTreeConstraint::includes(a, b)
        } else {
            CrossTreeConstraint::excludes(a, b)
        });
    }

    for i in (1..count).rev() {
        let f = features[i].clone();
        let p = parents[i].unwrap();
        features[p].children.insert(0, f);
    }
    FeatureModel::new("Random", features.swap_remove(0), constraints).expect("generated model is well formed")
}

/// A configuration that may or may not be valid: a random feature subset
/// (often closed under parents and mandatory children), with values drawn
/// from the enumerator's samples and occasionally out of domain, missing,
/// or set on an unselected feature.
pub fn random_configuration(model: &FeatureModel, rng: &mut impl Rng) -> FeatureConfiguration {
    let nodes = model.nodes();
    let mut selected: BTreeSet<usize> = BTreeSet::from([0]);
    let structured = rng.gen_bool(0.7);
    for (i, node) in nodes.iter().enumerate().skip(1) {
        let parent_in = node.parent.is_some_and(|p| selected.contains(&p));
        let pick = if structured {
            parent_in && (node.is_mandatory() || rng.gen_bool(0.5))
        } else {
            rng.gen_bool(0.5)
        };
        if pick {
            selected.insert(i);
        }
    }
    let mut config = FeatureConfiguration::new("");
    config.selected = selected.iter().map(|&i| nodes[i].name.clone()).collect();
    for (i, node) in nodes.iter().enumerate() {
        for attr in &node.attributes {
            let path = format!("{}.{}", node.name, attr.name);
            let on = selected.contains(&i);
            let roll: f64 = rng.gen();
            let value = if !on {
                (roll < 0.05).then(|| attribute_samples(model, &node.name, attr)[0].clone())
            } else if roll < 0.05 {
                None
            } else if roll < 0.1 {
                Some(match &attr.domain {
                    Domain::Enum { .. } => Value::Sym("bogus".into()),
                    Domain::IntRange { max, .. } => Value::Int(max + 1),
                })
            } else {
                attribute_samples(model, &node.name, attr).choose(rng).cloned()
            };
            if let Some(v) = value {
                config.attribute_values.insert(path, v);
            }
        }
    }
    config
}

/// A network where `k` source nodes each forward one interaction over their
/// own contract to node `J`, whose synchronize rule joins all `k` and invokes
/// `Joiner.tJoin`. Tenant `vsn` is provisioned on every REP.
pub fn join_network(k: usize, vsn: &str, clock: Arc<dyn Clock>) -> ServiceNetwork {
    let mut nodes = vec![serde_json::json!({"id": "J", "service": "Joiner"})];
    let mut contracts = Vec::new();
    let mut rules = Vec::new();
    for i in 0..k {
        let (node, contract, interaction) = (format!("S{i}"), format!("S{i}-J"), format!("iPart{i}"));
        nodes.push(serde_json::json!({"id": node, "service": format!("Source{i}")}));
        contracts.push(serde_json::json!({"id": contract, "from": node, "to": "J"}));
        rules.push(serde_json::json!({"rep": node, "ruleId": format!("rSend{i}"), "mechanism": "route",
            "match": [interaction], "to": [{"node": "J", "interaction": interaction}]}));
        rules.push(serde_json::json!({"rep": contract, "ruleId": format!("rPart{i}P"), "mechanism": "process",
            "match": [interaction]}));
    }
    let parts: Vec<String> = (0..k).map(|i| format!("iPart{i}")).collect();
    rules.push(serde_json::json!({"rep": "J", "ruleId": "rJoin", "mechanism": "synchronize",
        "match": parts, "task": "tJoin"}));
    let topology = serde_json::json!({"nodes": nodes, "contracts": contracts, "rules": rules});
    let stubs: StubCatalog =
        serde_json::from_value(serde_json::json!({"Joiner": {"tJoin": {"set": {"joined": true}}}})).unwrap();
    let net = ServiceNetwork::from_json(&topology.to_string(), &stubs, clock).expect("join topology is well formed");
    let mut ops = Vec::new();
    for i in 0..k {
        ops.push(TableOp::Add { rep: format!("S{i}"), vsn: vsn.into(), rules: vec![format!("rSend{i}")] });
        ops.push(TableOp::Add { rep: format!("S{i}-J"), vsn: vsn.into(), rules: vec![format!("rPart{i}P")] });
    }
    ops.push(TableOp::Add { rep: "J".into(), vsn: vsn.into(), rules: vec!["rJoin".into()] });
    net.apply_batch(&ops).expect("join rules exist");
    net
}

/// Part `i` of instance `instance` for [`join_network`]. Every part carries
/// its own key plus a shared `last` key that the merge resolves.
pub fn join_part(vsn: &str, instance: &str, i: usize) -> Message {
    Message::new(vsn, instance, format!("S{i}"), format!("iPart{i}"))
        .with(format!("part{i}"), i as i64)
        .with("last", i as i64)
}

/// Installs and uninstalls random catalog collaborations and units for
/// `vsn`, `steps` times. Removals undo the most recent install, and each
/// one must restore the tables exactly as they were before that install.
/// `after_each` runs after every operation; the final unwind must return to
/// the starting tables.
pub fn random_churn(
    plane: &ControlPlane,
    vsn: &str,
    rng: &mut impl Rng,
    steps: usize,
    mut after_each: impl FnMut() -> Result<(), String>,
) -> Result<(), String> {
    let net = plane.network().clone();
    let start = net.tables();
    let mut stack: Vec<(String, bool, BTreeMap<String, TableProjection>)> = Vec::new();
    let undo = |stack: &mut Vec<(String, bool, BTreeMap<String, TableProjection>)>| -> Result<(), String> {
        let (id, is_unit, before) = stack.pop().expect("caller checks for an install to undo");
        let mut session = plane.session();
        if is_unit {
            session.remove_unit(vsn, &id)
        } else {
            session.remove_collaboration(vsn, &id)
        }
        .map_err(|e| format!("removing {id}: {e}"))?;
        drop(session);
        if net.tables() != before {
            return Err(format!("removing {id} did not restore the tables"));
        }
        Ok(())
    };
    for _ in 0..steps {
        if !stack.is_empty() && rng.gen_bool(0.4) {
            undo(&mut stack)?;
        } else {
            let installed: BTreeSet<&str> = stack.iter().map(|(id, _, _)| id.as_str()).collect();
            let catalog = plane.catalog();
            let mut choices: Vec<(String, bool)> = catalog
                .collaborations
                .iter()
                .filter(|c| !installed.contains(c.id.as_str()))
                .map(|c| (c.id.clone(), false))
                .collect();
            choices.extend(
                catalog
                    .units
                    .iter()
                    .filter(|u| !installed.contains(u.id.as_str()))
                    .filter(|u| u.requires.iter().all(|r| installed.contains(r.as_str())))
                    .map(|u| (u.id.clone(), true)),
            );
            let Some((id, is_unit)) = choices.choose(rng).cloned() else {
                continue;
            };
            let before = net.tables();
            let mut session = plane.session();
            if is_unit {
                session.add_unit(vsn, &id)
            } else {
                let def = catalog.collaboration(&id).expect("listed above");
                let values: ParamValues = def
                    .attr_params()
                    .into_iter()
                    .map(|p| (p.to_string(), Value::Int(rng.gen_range(1..500))))
                    .collect();
                session.add_collaboration(vsn, &id, &values)
            }
            .map_err(|e| format!("installing {id}: {e}"))?;
            drop(session);
            stack.push((id, is_unit, before));
        }
        after_each()?;
    }
    while !stack.is_empty() {
        undo(&mut stack)?;
        after_each()?;
    }
    if net.tables() != start {
        return Err("tables differ from the starting state".into());
    }
    Ok(())
}
