//! Image generation against a text-to-image backend, with flag retry and
//! quarantine.

mod backend;
mod flags;
mod mock;
mod orchestrator;

pub use backend::{
    BackendError, GenerateRequest, GenerateResponse, GeneratedImage, GenerationBackend,
};
pub use flags::{flag_rates_by_word, FlagReport, FlagReportError, WordFlagRate};
pub use mock::{FlagSchedule, MockBackend};
pub use orchestrator::{
    generate_for_prompt, image_id_for, run_generation, seed_for, FlaggedImage, GenerationConfig,
    GenerationError, GenerationSummary, KeptImage, PromptOutcome, RetryPolicy, SEED_MASK,
    SEED_MULTIPLIER,
};
