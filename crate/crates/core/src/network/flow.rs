use std::collections::VecDeque;
use std::sync::atomic::Ordering;

use super::{
    ControlState, Disposition, DropReason, FlowTrace, Hop, HopAction, JoinState, Mechanism, Message,
    NetworkError, Payload, RejectReason, RuleDef, ServiceNetwork, TransformOp,
};
use crate::value::Value;

/// Upper bound on queue steps for one injected message.
pub const HOP_LIMIT: usize = 256;

enum Place {
    Node { id: String, arrived: bool },
    Contract { id: String, toward: String },
}

struct Pending {
    place: Place,
    interaction: String,
    payload: Payload,
}

enum Step {
    Continue,
    Stop,
}

impl ServiceNetwork {
    /// Sends `msg` from the service at node `msg.at` and follows it through
    /// the tenant's rules until every branch is delivered, dropped,
    /// rejected, or parked in a join.
    pub fn inject(&self, msg: Message) -> Result<FlowTrace, NetworkError> {
        if !self.nodes.contains_key(&msg.at) {
            return Err(NetworkError::UnknownNode(msg.at));
        }
        if let Some((k, _)) = msg
            .payload
            .iter()
            .find(|(_, v)| v.is_array() || v.is_object())
        {
            return Err(NetworkError::NonScalarPayload(k.clone()));
        }
        let state = self.state.read();
        let mut trace = FlowTrace {
            vsn_id: msg.vsn_id.clone(),
            instance_id: msg.instance_id.clone(),
            hops: Vec::new(),
            dispositions: Vec::new(),
        };
        let mut queue = VecDeque::from([Pending {
            place: Place::Node {
                id: msg.at.clone(),
                arrived: false,
            },
            interaction: msg.interaction.clone(),
            payload: msg.payload.clone(),
        }]);
        let mut steps = 0;
        while let Some(p) = queue.pop_front() {
            steps += 1;
            if steps > HOP_LIMIT {
                let rep = match &p.place {
                    Place::Node { id, .. } | Place::Contract { id, .. } => id.clone(),
                };
                drop_branch(&mut trace, &rep, None, &p.interaction, DropReason::HopLimit);
                continue;
            }
            match p.place {
                Place::Contract { ref id, ref toward } => {
                    self.at_contract(&state, &msg, id, toward, p.interaction.clone(), p.payload.clone(), &mut trace, &mut queue)
                }
                Place::Node { ref id, arrived } => {
                    self.at_node(&state, &msg, id, arrived, p.interaction.clone(), p.payload.clone(), &mut trace, &mut queue)
                }
            }
        }
        Ok(trace)
    }

    fn param(&self, state: &ControlState, rep: &str, rule: &RuleDef, vsn: &str, name: &str) -> Result<Value, DropReason> {
        let found = if rule.is_per_tenant(name) {
            state
                .params
                .get(&(rep.to_string(), rule.rule_id.clone(), vsn.to_string()))
                .and_then(|ps| ps.get(name))
        } else {
            rule.params.get(name)
        };
        found.cloned().ok_or_else(|| DropReason::UnboundParam(format!("{rep}/{}/{name}", rule.rule_id)))
    }

    fn int_param(&self, state: &ControlState, rep: &str, rule: &RuleDef, vsn: &str, name: &str) -> Result<u64, DropReason> {
        let v = self.param(state, rep, rule, vsn, name)?;
        v.as_int()
            .and_then(|i| u64::try_from(i).ok())
            .ok_or_else(|| DropReason::UnboundParam(format!("{rep}/{}/{name}", rule.rule_id)))
    }

    /// Shared mechanisms for both REP kinds. Returns `Stop` when the branch
    /// ended here.
    #[allow(clippy::too_many_arguments)]
    fn common(
        &self,
        state: &ControlState,
        msg: &Message,
        rep: &str,
        idx: usize,
        rule: &RuleDef,
        interaction: &str,
        payload: &mut Payload,
        trace: &mut FlowTrace,
    ) -> Step {
        match &rule.mechanism {
            Mechanism::Admit => {
                let limits = self
                    .int_param(state, rep, rule, &msg.vsn_id, "limit")
                    .and_then(|l| Ok((l, self.int_param(state, rep, rule, &msg.vsn_id, "windowSeconds")?)));
                let (limit, window) = match limits {
                    Ok((l, w)) if w > 0 => (l, w),
                    Ok(_) => {
                        let reason = DropReason::UnboundParam(format!("{rep}/{}/windowSeconds", rule.rule_id));
                        drop_branch(trace, rep, Some(&rule.rule_id), interaction, reason);
                        return Step::Stop;
                    }
                    Err(reason) => {
                        drop_branch(trace, rep, Some(&rule.rule_id), interaction, reason);
                        return Step::Stop;
                    }
                };
                let current = self.clock.now_secs() / window;
                let mut runtime = self.runtime.lock();
                let slot = runtime
                    .admission
                    .entry((msg.vsn_id.clone(), rep.to_string(), idx))
                    .or_insert((current, 0));
                if slot.0 != current {
                    *slot = (current, 0);
                }
                if slot.1 >= limit {
                    drop(runtime);
                    trace.hops.push(Hop {
                        rep: rep.to_string(),
                        rule_id: Some(rule.rule_id.clone()),
                        interaction: interaction.to_string(),
                        action: HopAction::Rejected {
                            reason: RejectReason::AdmissionDenied,
                        },
                    });
                    trace.dispositions.push(Disposition::Rejected {
                        rep: rep.to_string(),
                        interaction: interaction.to_string(),
                        reason: RejectReason::AdmissionDenied,
                    });
                    return Step::Stop;
                }
                slot.1 += 1;
                let count = slot.1;
                drop(runtime);
                trace.hops.push(Hop {
                    rep: rep.to_string(),
                    rule_id: Some(rule.rule_id.clone()),
                    interaction: interaction.to_string(),
                    action: HopAction::Admitted { count, limit },
                });
                Step::Continue
            }
            Mechanism::Transform { ops } => {
                for op in ops {
                    match op {
                        TransformOp::Rename { from, to } => {
                            if let Some(v) = payload.remove(from) {
                                payload.insert(to.clone(), v);
                            }
                        }
                        TransformOp::Copy { from, to } => {
                            if let Some(v) = payload.get(from).cloned() {
                                payload.insert(to.clone(), v);
                            }
                        }
                        TransformOp::Drop { key } => {
                            payload.remove(key);
                        }
                    }
                }
                trace.hops.push(Hop {
                    rep: rep.to_string(),
                    rule_id: Some(rule.rule_id.clone()),
                    interaction: interaction.to_string(),
                    action: HopAction::Transformed,
                });
                Step::Continue
            }
            _ => Step::Continue,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn at_contract(
        &self,
        state: &ControlState,
        msg: &Message,
        id: &str,
        toward: &str,
        interaction: String,
        mut payload: Payload,
        trace: &mut FlowTrace,
        queue: &mut VecDeque<Pending>,
    ) {
        let Some(entry) = state.tables.get(id).and_then(|t| t.get(&msg.vsn_id)) else {
            drop_branch(trace, id, None, &interaction, DropReason::NoTableEntry);
            return;
        };
        let kb = &self.reps[id].rules;
        let mut processed = false;
        for &idx in entry {
            let rule = &kb[idx];
            if !rule.reacts_to(&interaction) {
                continue;
            }
            if let Mechanism::Process { emit, annotate } = &rule.mechanism {
                for name in annotate {
                    match self.param(state, id, rule, &msg.vsn_id, name) {
                        Ok(v) => {
                            payload.insert(name.clone(), v.to_json());
                        }
                        Err(reason) => {
                            drop_branch(trace, id, Some(&rule.rule_id), &interaction, reason);
                            return;
                        }
                    }
                }
                trace.hops.push(Hop {
                    rep: id.to_string(),
                    rule_id: Some(rule.rule_id.clone()),
                    interaction: interaction.clone(),
                    action: HopAction::Processed { events: emit.clone() },
                });
                processed = true;
            } else if let Step::Stop = self.common(state, msg, id, idx, rule, &interaction, &mut payload, trace) {
                return;
            }
        }
        if !processed {
            drop_branch(trace, id, None, &interaction, DropReason::NoMatchingRule);
            return;
        }
        trace.hops.push(Hop {
            rep: id.to_string(),
            rule_id: None,
            interaction: interaction.clone(),
            action: HopAction::Forwarded { to: toward.to_string() },
        });
        queue.push_back(Pending {
            place: Place::Node {
                id: toward.to_string(),
                arrived: true,
            },
            interaction,
            payload,
        });
    }

    #[allow(clippy::too_many_arguments)]
    fn at_node(
        &self,
        state: &ControlState,
        msg: &Message,
        id: &str,
        arrived: bool,
        interaction: String,
        mut payload: Payload,
        trace: &mut FlowTrace,
        queue: &mut VecDeque<Pending>,
    ) {
        let Some(entry) = state.tables.get(id).and_then(|t| t.get(&msg.vsn_id)) else {
            drop_branch(trace, id, None, &interaction, DropReason::NoTableEntry);
            return;
        };
        let kb = &self.reps[id].rules;
        let mut handled = false;
        for &idx in entry {
            let rule = &kb[idx];
            if !rule.reacts_to(&interaction) {
                continue;
            }
            match &rule.mechanism {
                Mechanism::Synchronize { task } => {
                    handled = true;
                    self.synchronize(msg, id, idx, rule, task, &interaction, &payload, trace, queue);
                }
                Mechanism::Route { to } => {
                    handled = true;
                    for t in to {
                        let contract = self.links[&super::link_key(id, &t.node)].clone();
                        trace.hops.push(Hop {
                            rep: id.to_string(),
                            rule_id: Some(rule.rule_id.clone()),
                            interaction: interaction.clone(),
                            action: HopAction::Routed {
                                to: t.node.clone(),
                                sends: t.interaction.clone(),
                                contract: contract.clone(),
                            },
                        });
                        queue.push_back(Pending {
                            place: Place::Contract {
                                id: contract,
                                toward: t.node.clone(),
                            },
                            interaction: t.interaction.clone(),
                            payload: payload.clone(),
                        });
                    }
                }
                _ => {
                    if let Step::Stop = self.common(state, msg, id, idx, rule, &interaction, &mut payload, trace) {
                        return;
                    }
                }
            }
        }
        if handled {
            return;
        }
        if arrived {
            trace.hops.push(Hop {
                rep: id.to_string(),
                rule_id: None,
                interaction: interaction.clone(),
                action: HopAction::Delivered,
            });
            trace.dispositions.push(Disposition::Delivered {
                node: id.to_string(),
                interaction,
                payload,
            });
        } else {
            drop_branch(trace, id, None, &interaction, DropReason::NoRoute);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn synchronize(
        &self,
        msg: &Message,
        node: &str,
        idx: usize,
        rule: &RuleDef,
        task: &str,
        interaction: &str,
        payload: &Payload,
        trace: &mut FlowTrace,
        queue: &mut VecDeque<Pending>,
    ) {
        let now = self.clock.now_secs();
        let key = (msg.vsn_id.clone(), node.to_string(), idx, msg.instance_id.clone());
        let mut runtime = self.runtime.lock();
        if let (Some(timeout), Some(join)) = (self.join_timeout, runtime.joins.get(&key)) {
            if now.saturating_sub(join.started) > timeout {
                runtime.joins.remove(&key);
                trace.hops.push(Hop {
                    rep: node.to_string(),
                    rule_id: Some(rule.rule_id.clone()),
                    interaction: interaction.to_string(),
                    action: HopAction::JoinExpired,
                });
            }
        }
        let join = runtime.joins.entry(key.clone()).or_insert_with(|| JoinState {
            started: now,
            parts: Default::default(),
        });
        join.parts.insert(interaction.to_string(), payload.clone());
        let received: Vec<String> = join.parts.keys().cloned().collect();
        let waiting: Vec<String> = rule
            .matches
            .iter()
            .filter(|m| !join.parts.contains_key(*m))
            .cloned()
            .collect();
        if !waiting.is_empty() {
            drop(runtime);
            trace.hops.push(Hop {
                rep: node.to_string(),
                rule_id: Some(rule.rule_id.clone()),
                interaction: interaction.to_string(),
                action: HopAction::Joined {
                    received,
                    waiting: waiting.clone(),
                },
            });
            trace.dispositions.push(Disposition::PendingJoin {
                node: node.to_string(),
                rule: rule.rule_id.clone(),
                waiting,
            });
            return;
        }
        let parts = runtime.joins.remove(&key).expect("join present").parts;
        drop(runtime);
        trace.hops.push(Hop {
            rep: node.to_string(),
            rule_id: Some(rule.rule_id.clone()),
            interaction: interaction.to_string(),
            action: HopAction::Joined {
                received,
                waiting: Vec::new(),
            },
        });
        // Merge in match order so the result does not depend on arrival order.
        let mut merged = Payload::new();
        for m in &rule.matches {
            if let Some(p) = parts.get(m) {
                merged.extend(p.iter().map(|(k, v)| (k.clone(), v.clone())));
            }
        }
        let stub = self.stub_at(node).expect("every node has a stub");
        let latency = self.simulate_latency.load(Ordering::Relaxed);
        let Some(response) = stub.invoke(&msg.vsn_id, &msg.instance_id, task, &merged, latency) else {
            drop_branch(trace, node, Some(&rule.rule_id), interaction, DropReason::UnknownTask(task.to_string()));
            return;
        };
        trace.hops.push(Hop {
            rep: node.to_string(),
            rule_id: Some(rule.rule_id.clone()),
            interaction: interaction.to_string(),
            action: HopAction::Invoked {
                service: stub.name().to_string(),
                task: task.to_string(),
                payload: merged,
            },
        });
        queue.push_back(Pending {
            place: Place::Node {
                id: node.to_string(),
                arrived: false,
            },
            interaction: task.to_string(),
            payload: response,
        });
    }
}

fn drop_branch(trace: &mut FlowTrace, rep: &str, rule: Option<&str>, interaction: &str, reason: DropReason) {
    trace.hops.push(Hop {
        rep: rep.to_string(),
        rule_id: rule.map(str::to_string),
        interaction: interaction.to_string(),
        action: HopAction::Dropped { reason: reason.clone() },
    });
    trace.dispositions.push(Disposition::Dropped {
        rep: rep.to_string(),
        interaction: interaction.to_string(),
        reason,
    });
}
