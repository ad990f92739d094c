//! Caption decoding and the end-to-end sentence-to-meme pipeline.

mod beam;
mod pipeline;

pub use beam::{
    beam_finalists, beam_search, greedy_decode, length_penalty, BeamHypothesis, DecodeParams, GeneratorScorer,
    StepScorer, DEFAULT_ALPHA, DEFAULT_BEAM_SIZE,
};
pub use pipeline::{generate_meme, GeneratedMeme, MemePipeline};

use crate::compositor::CompositorError;
use crate::models::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum GenerationError {
    #[error("invalid decode parameters: {0}")]
    InvalidParams(String),
    #[error("sentence has no tokens")]
    EmptyInput,
    #[error("unknown template id {id} (catalog has {count})")]
    UnknownTemplate { id: usize, count: usize },
    #[error("{model} knows {model_templates} templates but the catalog has {catalog}")]
    CatalogMismatch {
        model: &'static str,
        model_templates: usize,
        catalog: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Compositor(#[from] CompositorError),
}
