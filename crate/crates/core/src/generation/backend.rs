use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Body of `POST /v1/generate`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub prompt_text: String,
    pub seeds: Vec<u64>,
    pub width: u32,
    pub height: u32,
}

/// Response of `POST /v1/generate`. Flagged images still carry their pixels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub results: Vec<GeneratedImage>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedImage {
    pub seed: u64,
    pub png_base64: String,
    pub nsfw_flagged: bool,
}

#[derive(Debug, Error)]
pub enum BackendError {
    /// Connection-level failure; the orchestrator retries these.
    #[error("transport: {0}")]
    Transport(String),
    /// The backend answered but the answer is unusable.
    #[error("protocol: {0}")]
    Protocol(String),
}

/// A text-to-image service that reports safety flags without blanking images.
pub trait GenerationBackend: Send + Sync {
    fn generate(&self, request: &GenerateRequest) -> Result<GenerateResponse, BackendError>;
}

impl<B: GenerationBackend + ?Sized> GenerationBackend for &B {
    fn generate(&self, request: &GenerateRequest) -> Result<GenerateResponse, BackendError> {
        (**self).generate(request)
    }
}

impl<B: GenerationBackend + ?Sized> GenerationBackend for std::sync::Arc<B> {
    fn generate(&self, request: &GenerateRequest) -> Result<GenerateResponse, BackendError> {
        (**self).generate(request)
    }
}
