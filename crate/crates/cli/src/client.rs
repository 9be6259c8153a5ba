//! Blocking HTTP client for the management service.

use reqwest::blocking::{Client as Http, Response};
use reqwest::{StatusCode, Url};
use serde::de::DeserializeOwned;
use serde_json::json;
use thiserror::Error;
use vsn_core::assets::{ScenarioError, ServiceTarget};
use vsn_core::feature_model::{FeatureConfiguration, FeatureModel, ValidationResult};
use vsn_core::management::{MessageRequest, OverheadSample, TenantRecord, VsnView};
use vsn_core::network::{FlowTrace, TopologyDoc};
use vsn_core::policy::EnactmentReport;

use crate::server::ApiError;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("{status}: {}", .body.message)]
    Api { status: u16, body: ApiError },
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            ClientError::Transport(_) => None,
        }
    }
}

impl From<reqwest::Error> for ClientError {
    fn from(e: reqwest::Error) -> Self {
        ClientError::Transport(e.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: Url,
    http: Http,
}

fn decode<T: DeserializeOwned>(resp: Response) -> Result<T, ClientError> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp.json()?);
    }
    let text = resp.text()?;
    let body = serde_json::from_str(&text).unwrap_or(ApiError {
        error: status.canonical_reason().unwrap_or("error").to_string(),
        message: text,
        details: None,
    });
    Err(ClientError::Api {
        status: status.as_u16(),
        body,
    })
}

impl Client {
    pub fn new(base: &str) -> Result<Self, ClientError> {
        let base = Url::parse(base).map_err(|e| ClientError::Transport(format!("invalid URL `{base}`: {e}")))?;
        if base.cannot_be_a_base() {
            return Err(ClientError::Transport(format!("invalid URL `{base}`")));
        }
        Ok(Client { base, http: Http::new() })
    }

    fn url_of(&self, segments: &[&str]) -> Url {
        let mut url = self.base.clone();
        url.path_segments_mut()
            .expect("checked in new")
            .pop_if_empty()
            .extend(segments);
        url
    }

    fn url(&self, path: &str) -> Url {
        let segments: Vec<&str> = path.trim_start_matches('/').split('/').collect();
        self.url_of(&segments)
    }

    /// Percent-encodes the tenant id as a single path segment.
    fn tenant_url(&self, tenant: &str, rest: &str) -> Url {
        self.url_of(&["tenants", tenant, rest.trim_start_matches('/')])
    }

    pub fn model(&self) -> Result<FeatureModel, ClientError> {
        decode(self.http.get(self.url("/model")).send()?)
    }

    pub fn validate(&self, config: &FeatureConfiguration) -> Result<ValidationResult, ClientError> {
        decode(self.http.post(self.url("/validate")).json(&json!({ "configuration": config })).send()?)
    }

    pub fn tenants(&self) -> Result<Vec<TenantRecord>, ClientError> {
        decode(self.http.get(self.url("/tenants")).send()?)
    }

    pub fn create_tenant(&self, tenant: &str) -> Result<TenantRecord, ClientError> {
        decode(self.http.post(self.url("/tenants")).json(&json!({ "tenantId": tenant })).send()?)
    }

    /// Creates the tenant unless it already exists.
    pub fn ensure_tenant(&self, tenant: &str) -> Result<(), ClientError> {
        match self.create_tenant(tenant) {
            Ok(_) => Ok(()),
            Err(e) if e.status() == Some(StatusCode::CONFLICT.as_u16()) => Ok(()),
            Err(e) => Err(e),
        }
    }

    pub fn configuration(&self, tenant: &str) -> Result<FeatureConfiguration, ClientError> {
        decode(self.http.get(self.tenant_url(tenant, "/configuration")).send()?)
    }

    pub fn put_configuration(
        &self,
        tenant: &str,
        config: &FeatureConfiguration,
        expected_version: Option<u64>,
    ) -> Result<EnactmentReport, ClientError> {
        let mut req = self
            .http
            .put(self.tenant_url(tenant, "/configuration"))
            .json(&json!({ "configuration": config }));
        if let Some(v) = expected_version {
            req = req.query(&[("expectedVersion", v)]);
        }
        decode(req.send()?)
    }

    pub fn delete_configuration(&self, tenant: &str) -> Result<(), ClientError> {
        let resp = self.http.delete(self.tenant_url(tenant, "/configuration")).send()?;
        if resp.status() == StatusCode::NO_CONTENT {
            return Ok(());
        }
        decode::<serde_json::Value>(resp).map(drop)
    }

    pub fn vsn(&self, tenant: &str) -> Result<VsnView, ClientError> {
        decode(self.http.get(self.tenant_url(tenant, "/vsn")).send()?)
    }

    pub fn inject(&self, tenant: &str, message: &MessageRequest) -> Result<FlowTrace, ClientError> {
        decode(self.http.post(self.tenant_url(tenant, "/messages")).json(message).send()?)
    }

    pub fn network(&self) -> Result<TopologyDoc, ClientError> {
        decode(self.http.get(self.url("/network")).send()?)
    }

    pub fn metrics(&self) -> Result<Vec<OverheadSample>, ClientError> {
        decode(self.http.get(self.url("/metrics/customization")).send()?)
    }
}

fn transport(e: ClientError) -> ScenarioError {
    ScenarioError::Transport(e.to_string())
}

impl ServiceTarget for Client {
    fn prepare_tenant(&self, tenant: &str) -> Result<(), ScenarioError> {
        self.ensure_tenant(tenant).map_err(transport)?;
        self.delete_configuration(tenant).map_err(transport)
    }

    fn apply(&self, tenant: &str, config: &FeatureConfiguration) -> Result<EnactmentReport, ScenarioError> {
        self.put_configuration(tenant, config, None).map_err(|e| match e {
            ClientError::Transport(m) => ScenarioError::Transport(m),
            other => ScenarioError::Setup {
                file: tenant.to_string(),
                message: other.to_string(),
            },
        })
    }

    fn inject(&self, tenant: &str, message: &MessageRequest) -> Result<FlowTrace, ScenarioError> {
        Client::inject(self, tenant, message).map_err(transport)
    }
}
