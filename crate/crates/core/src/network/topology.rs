use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::value::Value;

/// Interchange form of a service network: nodes, contracts, and the rule
/// knowledgebase of every REP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyDoc {
    pub nodes: Vec<NodeDef>,
    pub contracts: Vec<ContractDef>,
    #[serde(default)]
    pub rules: Vec<RuleDef>,
}

impl TopologyDoc {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDef {
    pub id: String,
    /// Name of the service stub this node proxies.
    pub service: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractDef {
    pub id: String,
    pub from: String,
    pub to: String,
}

impl ContractDef {
    pub fn other_end(&self, node: &str) -> Option<&str> {
        if self.from == node {
            Some(&self.to)
        } else if self.to == node {
            Some(&self.from)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteTarget {
    pub node: String,
    pub interaction: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum TransformOp {
    Rename { from: String, to: String },
    Copy { from: String, to: String },
    Drop { key: String },
}

/// The regulation mechanism a rule applies, with its static configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mechanism", rename_all = "lowercase")]
pub enum Mechanism {
    /// Contract-side: raise internal events, annotate the payload with
    /// parameter values, and forward along the contract.
    Process {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        emit: Vec<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        annotate: Vec<String>,
    },
    /// Node-side join over every matched interaction of one instance, then a
    /// task invocation on the node's service.
    Synchronize { task: String },
    /// Node-side fan-out to neighbouring nodes.
    Route { to: Vec<RouteTarget> },
    /// Fixed-window admission control using the `limit` and `windowSeconds`
    /// parameters.
    Admit,
    Transform { ops: Vec<TransformOp> },
}

impl Mechanism {
    pub fn name(&self) -> &'static str {
        match self {
            Mechanism::Process { .. } => "process",
            Mechanism::Synchronize { .. } => "synchronize",
            Mechanism::Route { .. } => "route",
            Mechanism::Admit => "admit",
            Mechanism::Transform { .. } => "transform",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RuleDef {
    pub rep: String,
    pub rule_id: String,
    #[serde(rename = "match")]
    pub matches: Vec<String>,
    #[serde(flatten)]
    pub mechanism: Mechanism,
    /// Static parameter values; per-tenant parameters may omit a default.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub per_tenant: BTreeSet<String>,
}

impl RuleDef {
    pub fn reacts_to(&self, interaction: &str) -> bool {
        self.matches.iter().any(|m| m == interaction)
    }

    pub fn is_per_tenant(&self, param: &str) -> bool {
        self.per_tenant.contains(param)
    }

    pub(crate) fn declares(&self, param: &str) -> bool {
        self.params.contains_key(param) || self.per_tenant.contains(param)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_json_shapes() {
        let text = r#"[
          {"rep":"SC-GR1","ruleId":"rDoRepairP","mechanism":"process","match":["iDoRepair"],"emit":["eRepairReqd"]},
          {"rep":"GR1","ruleId":"rDoReparS","mechanism":"synchronize","match":["iDoRepair","iNotifyDelivery"],"task":"tDoRepair"},
          {"rep":"GR1","ruleId":"rRoute","mechanism":"route","match":["tDoRepair"],"to":[{"node":"SC","interaction":"iPayRepair"}]},
          {"rep":"SC","ruleId":"rLimit","mechanism":"admit","match":["iDoRepair"],"params":{"windowSeconds":86400},"perTenant":["limit"]},
          {"rep":"MO","ruleId":"rT","mechanism":"transform","match":["x"],"ops":[{"op":"rename","from":"a","to":"b"},{"op":"drop","key":"c"}]}
        ]"#;
        let rules: Vec<RuleDef> = serde_json::from_str(text).unwrap();
        assert_eq!(rules[0].mechanism, Mechanism::Process { emit: vec!["eRepairReqd".into()], annotate: vec![] });
        assert_eq!(rules[1].mechanism, Mechanism::Synchronize { task: "tDoRepair".into() });
        assert_eq!(rules[3].mechanism, Mechanism::Admit);
        assert!(rules[3].is_per_tenant("limit"));
        assert!(rules[3].declares("windowSeconds"));
        assert!(!rules[3].is_per_tenant("windowSeconds"));
        let back: Vec<RuleDef> = serde_json::from_str(&serde_json::to_string(&rules).unwrap()).unwrap();
        assert_eq!(back, rules);
    }
}
