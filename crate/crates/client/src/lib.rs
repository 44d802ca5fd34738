//! Async client for the snnstory HTTP service.

use snnstory_core::bundle::{ParityFile, StoryBundle, Violation};
use snnstory_core::stats::StudyReport;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request to {url} failed: {source}")]
    Http {
        url: String,
        #[source]
        source: reqwest::Error,
    },
    #[error("{url} answered {status}: {body}")]
    Status {
        url: String,
        status: u16,
        body: String,
    },
    #[error("{url} returned malformed JSON: {source}")]
    Decode {
        url: String,
        #[source]
        source: serde_json::Error,
    },
}

/// Triplet loss and the two distances it is built from.
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize)]
pub struct LossReply {
    pub loss: f64,
    pub d_ap: f64,
    pub d_an: f64,
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Client {
            base: base.into().trim_end_matches('/').to_owned(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    /// Raw response body of a GET.
    pub async fn get_bytes(&self, path: &str) -> Result<Vec<u8>, ClientError> {
        let url = format!("{}{path}", self.base);
        let http = |source| ClientError::Http {
            url: url.clone(),
            source,
        };
        let resp = self.http.get(&url).send().await.map_err(http)?;
        let status = resp.status();
        let body = resp.bytes().await.map_err(http)?;
        if !status.is_success() {
            return Err(ClientError::Status {
                url,
                status: status.as_u16(),
                body: String::from_utf8_lossy(&body).into_owned(),
            });
        }
        Ok(body.to_vec())
    }

    async fn get_json<T: serde::de::DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        let bytes = self.get_bytes(path).await?;
        serde_json::from_slice(&bytes).map_err(|source| ClientError::Decode {
            url: format!("{}{path}", self.base),
            source,
        })
    }

    pub async fn bundle(&self) -> Result<StoryBundle, ClientError> {
        self.get_json("/bundle.json").await
    }

    pub async fn parity(&self) -> Result<ParityFile, ClientError> {
        self.get_json("/parity.json").await
    }

    pub async fn stats(&self) -> Result<StudyReport, ClientError> {
        self.get_json("/api/stats").await
    }

    pub async fn validation(&self) -> Result<Vec<Violation>, ClientError> {
        self.get_json("/api/validate").await
    }

    pub async fn triplet_loss(
        &self,
        anchor: &[f64],
        positive: &[f64],
        negative: &[f64],
        margin: f64,
    ) -> Result<LossReply, ClientError> {
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let path = format!(
            "/api/loss?anchor={}&positive={}&negative={}&margin={margin}",
            list(anchor),
            list(positive),
            list(negative)
        );
        self.get_json(&path).await
    }
}
