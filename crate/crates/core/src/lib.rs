//! Core library for sentence-to-meme generation: template selection,
//! template-conditioned caption generation, decoding, compositing and
//! evaluation metrics.

pub mod compositor;
pub mod corpus;
pub mod eval;
pub mod generation;
pub mod models;
pub mod neural;
pub mod text;
