use serde::{Deserialize, Serialize};

use super::Payload;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropReason {
    /// The tenant has no regulation-table entry at this REP.
    NoTableEntry,
    /// A contract carried an interaction none of the tenant's rules process.
    NoMatchingRule,
    /// A locally originated interaction had no route.
    NoRoute,
    /// A per-tenant parameter was not bound for the tenant.
    UnboundParam(String),
    /// A synchronize rule named a task the service stub does not offer.
    UnknownTask(String),
    HopLimit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    AdmissionDenied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "camelCase")]
pub enum HopAction {
    Processed {
        events: Vec<String>,
    },
    Forwarded {
        to: String,
    },
    Admitted {
        count: u64,
        limit: u64,
    },
    Transformed,
    Joined {
        received: Vec<String>,
        waiting: Vec<String>,
    },
    JoinExpired,
    Invoked {
        service: String,
        task: String,
        payload: Payload,
    },
    Routed {
        to: String,
        /// Interaction name the message travels under after the route.
        sends: String,
        contract: String,
    },
    Delivered,
    Dropped {
        reason: DropReason,
    },
    Rejected {
        reason: RejectReason,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Hop {
    pub rep: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
    pub interaction: String,
    #[serde(flatten)]
    pub action: HopAction,
}

/// How one branch of a message flow ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Disposition {
    Delivered {
        node: String,
        interaction: String,
        payload: Payload,
    },
    Dropped {
        rep: String,
        interaction: String,
        reason: DropReason,
    },
    Rejected {
        rep: String,
        interaction: String,
        reason: RejectReason,
    },
    PendingJoin {
        node: String,
        rule: String,
        waiting: Vec<String>,
    },
}

impl Disposition {
    pub fn kind(&self) -> &'static str {
        match self {
            Disposition::Delivered { .. } => "Delivered",
            Disposition::Dropped { .. } => "Dropped",
            Disposition::Rejected { .. } => "Rejected",
            Disposition::PendingJoin { .. } => "PendingJoin",
        }
    }
}

/// Everything that happened to one injected message, in processing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FlowTrace {
    pub vsn_id: String,
    pub instance_id: String,
    pub hops: Vec<Hop>,
    pub dispositions: Vec<Disposition>,
}

impl FlowTrace {
    /// Internal events raised by process rules.
    pub fn emitted_events(&self) -> Vec<&str> {
        self.hops
            .iter()
            .flat_map(|h| match &h.action {
                HopAction::Processed { events } => events.iter().map(String::as_str).collect(),
                _ => Vec::new(),
            })
            .collect()
    }

    /// `(service, task)` pairs in invocation order.
    pub fn invocations(&self) -> Vec<(&str, &str)> {
        self.hops
            .iter()
            .filter_map(|h| match &h.action {
                HopAction::Invoked { service, task, .. } => Some((service.as_str(), task.as_str())),
                _ => None,
            })
            .collect()
    }

    /// `(destination node, interaction)` pairs produced by route rules.
    pub fn routed(&self) -> Vec<(&str, &str)> {
        self.hops
            .iter()
            .filter_map(|h| match &h.action {
                HopAction::Routed { to, sends, .. } => Some((to.as_str(), sends.as_str())),
                _ => None,
            })
            .collect()
    }

    pub fn disposition_kinds(&self) -> Vec<&'static str> {
        self.dispositions.iter().map(Disposition::kind).collect()
    }

    pub fn delivered(&self) -> Vec<(&str, &str)> {
        self.dispositions
            .iter()
            .filter_map(|d| match d {
                Disposition::Delivered { node, interaction, .. } => Some((node.as_str(), interaction.as_str())),
                _ => None,
            })
            .collect()
    }

    pub fn is_rejected(&self) -> bool {
        self.dispositions
            .iter()
            .any(|d| matches!(d, Disposition::Rejected { .. }))
    }

    pub fn rules_hit(&self) -> Vec<(&str, &str)> {
        self.hops
            .iter()
            .filter_map(|h| h.rule_id.as_deref().map(|r| (h.rep.as_str(), r)))
            .collect()
    }
}
