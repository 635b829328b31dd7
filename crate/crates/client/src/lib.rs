//! Typed HTTP client for the qrw rewriting service, plus the request and
//! response types shared with the server.

pub mod api;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use api::*;

#[derive(Debug, Error)]
pub enum ClientError {
    /// The service reported a structured error.
    #[error("{kind}: {message}")]
    Service { kind: String, message: String },
    #[error("transport error: {0}")]
    Transport(#[from] reqwest::Error),
}

impl ClientError {
    pub fn kind(&self) -> &str {
        match self {
            ClientError::Service { kind, .. } => kind,
            ClientError::Transport(_) => "transport",
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base_url: impl Into<String>) -> Client {
        let mut base = base_url.into();
        while base.ends_with('/') {
            base.pop();
        }
        Client { base, http: reqwest::Client::new() }
    }

    async fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        req: &Req,
    ) -> Result<Resp> {
        let resp = self
            .http
            .post(format!("{}{path}", self.base))
            .json(req)
            .send()
            .await?;
        if resp.status().is_success() {
            Ok(resp.json().await?)
        } else {
            let err: ErrorBody = resp.json().await?;
            Err(ClientError::Service { kind: err.kind, message: err.error })
        }
    }

    pub async fn health(&self) -> Result<String> {
        Ok(self
            .http
            .get(format!("{}/healthz", self.base))
            .send()
            .await?
            .text()
            .await?)
    }

    pub async fn rewrite(&self, req: &RewriteRequest) -> Result<RewriteResponse> {
        self.post("/rewrite", req).await
    }

    pub async fn inspect(&self, req: &InspectRequest) -> Result<InspectResponse> {
        self.post("/inspect", req).await
    }

    pub async fn dot(&self, req: &InspectRequest) -> Result<DotResponse> {
        self.post("/dot", req).await
    }

    pub async fn run(&self, req: &RunRequest) -> Result<RunResponse> {
        self.post("/run", req).await
    }

    pub async fn dp_eval(&self, req: &DpEvalRequest) -> Result<qrw_core::dp_eval::PrivacyProfile> {
        self.post("/dp-eval", req).await
    }

    pub async fn session(&self, id: &str, delta: f64) -> Result<SessionResponse> {
        let resp = self
            .http
            .get(format!("{}/session/{id}?delta={delta}", self.base))
            .send()
            .await?;
        if resp.status().is_success() {
            Ok(resp.json().await?)
        } else {
            let err: ErrorBody = resp.json().await?;
            Err(ClientError::Service { kind: err.kind, message: err.error })
        }
    }
}
