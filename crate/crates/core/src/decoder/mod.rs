//! Product-of-experts decoding: ensembling, nucleus filtering and sampling.

mod backend;
mod ensemble;
mod generate;

pub use backend::{BackendKind, BackendResources, Decoder, EnsembleConfig, FilterStage, RetrievalResources};
pub use ensemble::{ensemble, ensemble_masked, nucleus_mask, top_p_filter, NUCLEUS_TOLERANCE};
pub use generate::{
    generate, generate_all, load_prompts, sample_continuation, save_prompts, sample_token, GenerationConfig, GenerationRecord, Prompt,
};
