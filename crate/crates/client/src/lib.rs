//! Talks to a coldfaas gateway: the management API and a load generator.

pub mod loadgen;

use coldfaas_core::api::{outcome_of, ErrorBody, GatewayStats, Timing};
use coldfaas_core::driver::WasteLedger;
use coldfaas_core::registry::SizeEntry;
use coldfaas_core::{FunctionSpec, Outcome, RegistryEntry};
use hyper::body::Bytes;
use reqwest::multipart::{Form, Part};
use serde::de::DeserializeOwned;
use thiserror::Error;

pub use loadgen::{plan_schedule, run_bench, sweep, LoadgenError, DEFAULT_COOLDOWN};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Http(#[from] reqwest::Error),
    #[error("{status}: {} ({})", .body.error, .body.detail)]
    Api { status: u16, body: ErrorBody },
    #[error("{status}: unexpected response {text:?}")]
    Unexpected { status: u16, text: String },
}

/// Result of one invocation, successful or not.
#[derive(Debug, Clone)]
pub struct InvokeResponse {
    pub status: u16,
    pub outcome: Outcome,
    pub timing: Option<Timing>,
    pub was_warm: bool,
    pub body: Bytes,
}

impl InvokeResponse {
    /// The gateway's error document, if the body is one.
    pub fn error(&self) -> Option<ErrorBody> {
        serde_json::from_slice(&self.body).ok()
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base_url` is the gateway root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base_url: impl Into<String>) -> Self {
        Client {
            base: base_url.into().trim_end_matches('/').to_owned(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ClientError> {
        let status = resp.status().as_u16();
        let bytes = resp.bytes().await?;
        if (200..300).contains(&status) {
            if let Ok(v) = serde_json::from_slice(&bytes) {
                return Ok(v);
            }
        } else if let Ok(body) = serde_json::from_slice::<ErrorBody>(&bytes) {
            return Err(ClientError::Api { status, body });
        }
        Err(ClientError::Unexpected {
            status,
            text: String::from_utf8_lossy(&bytes).into_owned(),
        })
    }

    /// Deploys a spec given as a JSON document. Fields the document omits
    /// take the gateway's defaults.
    pub async fn deploy_json(
        &self,
        spec_json: String,
        image: Option<Vec<u8>>,
        overwrite: bool,
    ) -> Result<RegistryEntry, ClientError> {
        let mut form = Form::new().part("spec", Part::text(spec_json));
        if let Some(image) = image {
            form = form.part("image", Part::bytes(image));
        }
        let resp = self
            .http
            .post(self.url(&format!("/deploy?overwrite={overwrite}")))
            .multipart(form)
            .send()
            .await?;
        Self::decode(resp).await
    }

    pub async fn deploy(
        &self,
        spec: &FunctionSpec,
        image: Option<Vec<u8>>,
        overwrite: bool,
    ) -> Result<RegistryEntry, ClientError> {
        let json = serde_json::to_string(spec).expect("specs serialize");
        self.deploy_json(json, image, overwrite).await
    }

    async fn call(&self, req: reqwest::RequestBuilder) -> Result<InvokeResponse, ClientError> {
        let resp = req.send().await?;
        let status = resp.status().as_u16();
        let header = |n: &str| resp.headers().get(n).and_then(|v| v.to_str().ok());
        let timing = Timing::from_headers(header);
        let was_warm = header(coldfaas_core::api::HEADER_WARM) == Some("true");
        Ok(InvokeResponse {
            status,
            outcome: outcome_of(status),
            timing,
            was_warm,
            body: resp.bytes().await?,
        })
    }

    pub async fn invoke(
        &self,
        name: &str,
        payload: Vec<u8>,
    ) -> Result<InvokeResponse, ClientError> {
        self.call(
            self.http
                .post(self.url(&format!("/invoke/{name}")))
                .body(payload),
        )
        .await
    }

    pub async fn noop(&self) -> Result<InvokeResponse, ClientError> {
        self.call(self.http.get(self.url("/noop"))).await
    }

    pub async fn stats(&self) -> Result<GatewayStats, ClientError> {
        Self::decode(self.http.get(self.url("/stats")).send().await?).await
    }

    pub async fn waste(&self) -> Result<WasteLedger, ClientError> {
        Self::decode(self.http.get(self.url("/waste")).send().await?).await
    }

    pub async fn sizes(&self) -> Result<Vec<SizeEntry>, ClientError> {
        Self::decode(self.http.get(self.url("/sizes")).send().await?).await
    }
}
