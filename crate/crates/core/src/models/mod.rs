//! Template selector and caption generator, their training loops and the
//! checkpoint format.

mod checkpoint;
mod generator;
mod selector;
mod training;

use std::fmt;
use std::io;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::layers::{EncoderLayer, TokenEmbedding};
use crate::neural::{Graph, NeuralError, NodeId};
use crate::text::TextError;

pub use checkpoint::{
    read_checkpoint, write_checkpoint, CheckpointHeader, ModelKind, TrainingMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use generator::{CaptionGenerator, GeneratorExample, MemeEmbedding};
pub use selector::{select_template, TemplateSelector};
pub use training::{macro_f1, train_generator, train_selector, EpochReport, TrainConfig, TrainReport};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input sentence is empty")]
    EmptyInput,
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("MT2MC conditions on the template only, got {0} sentence tokens")]
    VariantMismatch(usize),
    #[error("prefix of {len} tokens exceeds max_len {max}")]
    PrefixTooLong { len: usize, max: usize },
    #[error("decoder prefix must start with BOS")]
    MissingBos,
    #[error("template {id} outside the model's {count} templates")]
    UnknownTemplate { id: usize, count: usize },
    #[error("catalog has {catalog} templates, model was built for {model}")]
    CatalogMismatch { catalog: usize, model: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt checkpoint: {0}")]
    CorruptFile(String),
    #[error("checkpoint format version {found}, this build reads {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint holds a {found}, expected a {expected}")]
    WrongKind { found: ModelKind, expected: ModelKind },
}

/// Caption generator conditioning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Variant {
    /// Template token only.
    #[serde(rename = "MT2MC")]
    Mt2mc,
    /// Template token followed by the corrupted sentence.
    #[default]
    #[serde(rename = "SMT2MC")]
    Smt2mc,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Mt2mc => "MT2MC",
            Variant::Smt2mc => "SMT2MC",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "MT2MC" => Ok(Variant::Mt2mc),
            "SMT2MC" => Ok(Variant::Smt2mc),
            other => Err(format!("unknown variant {other:?}, expected MT2MC or SMT2MC")),
        }
    }
}

/// Embeds `ids` and runs them through an encoder stack.
pub(crate) fn encode_stack(
    g: &mut Graph,
    embedding: &TokenEmbedding,
    layers: &[EncoderLayer],
    ids: &[usize],
) -> NodeId {
    let mut h = embedding.forward(g, ids);
    for layer in layers {
        h = layer.forward(g, h);
    }
    h
}

/// Stable seed derivation for per-epoch shuffles and per-step dropout masks.
pub(crate) fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
pub(crate) mod test_support {
    use crate::corpus::{template_token, MemeSample, TemplateId};
    use crate::text::{Vocabulary, RESERVED_TOKENS};

    /// Vocabulary with `templates` template tokens plus every word of `captions`.
    pub fn vocab(templates: usize, captions: &[&str]) -> Vocabulary {
        let mut tokens: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend((0..templates).map(|t| template_token(&format!("t{t}"))));
        for c in captions {
            for w in crate::text::tokenize(c) {
                if !tokens.contains(&w) {
                    tokens.push(w);
                }
            }
        }
        Vocabulary::from_tokens(tokens, templates).unwrap()
    }

    pub fn samples(pairs: &[(usize, &str)]) -> Vec<MemeSample> {
        pairs
            .iter()
            .map(|(t, c)| MemeSample {
                template_id: TemplateId(*t),
                caption: c.to_string(),
            })
            .collect()
    }
}
