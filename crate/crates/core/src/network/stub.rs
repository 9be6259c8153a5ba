//! In-process stand-ins for partner services.

use std::collections::BTreeMap;
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::Payload;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResponseTemplate {
    /// Keys written over the request payload to form the response.
    #[serde(default)]
    pub set: Payload,
    #[serde(default)]
    pub latency_ms: u64,
}

/// `service name -> task name -> response template`, as read from a stubs file.
pub type StubCatalog = BTreeMap<String, BTreeMap<String, ResponseTemplate>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StubInvocation {
    pub vsn_id: String,
    pub instance_id: String,
    pub task: String,
    pub payload: Payload,
}

#[derive(Debug)]
pub struct ServiceStub {
    name: String,
    tasks: BTreeMap<String, ResponseTemplate>,
    log: Mutex<Vec<StubInvocation>>,
}

impl ServiceStub {
    pub fn new(name: impl Into<String>, tasks: BTreeMap<String, ResponseTemplate>) -> Self {
        ServiceStub {
            name: name.into(),
            tasks,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn has_task(&self, task: &str) -> bool {
        self.tasks.contains_key(task)
    }

    /// Runs `task`; the response is the request payload overlaid with the
    /// template's fixed keys. Returns `None` for an unknown task.
    pub fn invoke(
        &self,
        vsn_id: &str,
        instance_id: &str,
        task: &str,
        payload: &Payload,
        simulate_latency: bool,
    ) -> Option<Payload> {
        let template = self.tasks.get(task)?;
        if simulate_latency && template.latency_ms > 0 {
            std::thread::sleep(Duration::from_millis(template.latency_ms));
        }
        self.log.lock().push(StubInvocation {
            vsn_id: vsn_id.to_string(),
            instance_id: instance_id.to_string(),
            task: task.to_string(),
            payload: payload.clone(),
        });
        let mut response = payload.clone();
        response.extend(template.set.iter().map(|(k, v)| (k.clone(), v.clone())));
        Some(response)
    }

    pub fn invocations(&self) -> Vec<StubInvocation> {
        self.log.lock().clone()
    }

    pub fn invocation_count(&self, task: &str) -> usize {
        self.log.lock().iter().filter(|i| i.task == task).count()
    }

    pub fn clear_log(&self) {
        self.log.lock().clear();
    }
}
