//! HTTP surfaces of the texture dataset toolkit: the human-evaluation API,
//! clients for the model backend, and an in-process mock backend.

pub mod clients;
pub mod eval_api;
pub mod mock_sidecar;

pub use clients::{HttpBackend, HttpEmbedder};
pub use eval_api::{router, serve, DescriptorMode, EvalConfig, EvalState, ServiceError};
pub use mock_sidecar::mock_sidecar_router;
