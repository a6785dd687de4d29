//! Blocking HTTP clients for the model backend's `/v1/generate` and
//! `/v1/embed` endpoints.

use std::path::PathBuf;
use std::time::Duration;

use ptd_core::embed::{rows_from_file, EmbedRequest, EmbedResponse, Embedder};
use ptd_core::generation::{BackendError, GenerateRequest, GenerateResponse, GenerationBackend};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn client(timeout: Duration) -> Result<Client, BackendError> {
    Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| BackendError::Transport(e.to_string()))
}

/// Connection failures, timeouts and 5xx answers are transport errors (the
/// orchestrator retries them); anything else unusable is a protocol error.
fn post_json<Req: Serialize, Resp: DeserializeOwned>(
    client: &Client,
    url: &str,
    body: &Req,
) -> Result<Resp, BackendError> {
    let resp = client
        .post(url)
        .json(body)
        .send()
        .map_err(|e| BackendError::Transport(format!("{url}: {e}")))?;
    let status = resp.status();
    if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
        let text = resp.text().unwrap_or_default();
        return Err(BackendError::Transport(format!("{url}: {status}: {text}")));
    }
    if !status.is_success() {
        let text = resp.text().unwrap_or_default();
        return Err(BackendError::Protocol(format!("{url}: {status}: {text}")));
    }
    let bytes = resp
        .bytes()
        .map_err(|e| BackendError::Transport(format!("{url}: {e}")))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| BackendError::Protocol(format!("{url}: malformed response: {e}")))
}

fn join(base: &str, path: &str) -> String {
    format!("{}{}", base.trim_end_matches('/'), path)
}

/// Client for `POST /v1/generate`.
#[derive(Clone, Debug)]
pub struct HttpBackend {
    url: String,
    client: Client,
}

impl HttpBackend {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, BackendError> {
        Ok(Self {
            url: join(base_url, "/v1/generate"),
            client: client(timeout)?,
        })
    }
}

impl GenerationBackend for HttpBackend {
    fn generate(&self, request: &GenerateRequest) -> Result<GenerateResponse, BackendError> {
        post_json(&self.client, &self.url, request)
    }
}

/// Client for `POST /v1/embed`. With a shared directory set, the backend is
/// asked to write PTDF files there instead of answering inline.
#[derive(Clone, Debug)]
pub struct HttpEmbedder {
    url: String,
    client: Client,
    shared_dir: Option<PathBuf>,
}

impl HttpEmbedder {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, BackendError> {
        Ok(Self {
            url: join(base_url, "/v1/embed"),
            client: client(timeout)?,
            shared_dir: None,
        })
    }

    pub fn with_shared_dir(mut self, dir: PathBuf) -> Self {
        self.shared_dir = Some(dir);
        self
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, request: &EmbedRequest) -> Result<Vec<Vec<f32>>, BackendError> {
        let mut request = request.clone();
        if let Some(dir) = &self.shared_dir {
            let name = format!(
                "embed-{}-{}.ptdf",
                std::process::id(),
                ptd_core::eval::now_ms()
            );
            request.output_path = Some(dir.join(name).to_string_lossy().into_owned());
        }
        let resp: EmbedResponse = post_json(&self.client, &self.url, &request)?;
        if resp.kind != request.kind {
            return Err(BackendError::Protocol(format!(
                "asked for {} but got {}",
                request.kind, resp.kind
            )));
        }
        let rows = match &resp.path {
            Some(path) => {
                let path = PathBuf::from(path);
                let rows = rows_from_file(&path, resp.kind)
                    .map_err(|e| BackendError::Protocol(e.to_string()))?;
                let _ = std::fs::remove_file(&path);
                rows
            }
            None => resp.rows,
        };
        if rows.len() != request.len() {
            return Err(BackendError::Protocol(format!(
                "sent {} inputs, got {} rows",
                request.len(),
                rows.len()
            )));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != resp.dim) {
            return Err(BackendError::Protocol(format!(
                "row of length {} in a {}-dimensional response",
                r.len(),
                resp.dim
            )));
        }
        Ok(rows)
    }
}
