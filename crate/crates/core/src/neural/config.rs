use serde::{Deserialize, Serialize};

use super::NeuralError;

/// Transformer dimensions shared by the selector and generator stacks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Layers per stack.
    #[serde(rename = "N")]
    pub layers: usize,
    pub d_model: usize,
    pub d_ff: usize,
    #[serde(rename = "h")]
    pub heads: usize,
    #[serde(rename = "P_drop")]
    pub dropout: f64,
    pub vocab_size: usize,
    pub max_len: usize,
}

impl ModelConfig {
    /// Desk-scale default: 2 layers, width 128, 4 heads.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            layers: 2,
            d_model: 128,
            d_ff: 512,
            heads: 4,
            dropout: 0.1,
            vocab_size,
            max_len: 32,
        }
    }

    /// Template-only generator dimensions at full scale.
    pub fn mt2mc_full(vocab_size: usize) -> Self {
        Self {
            layers: 8,
            d_model: 768,
            d_ff: 2048,
            heads: 12,
            dropout: 0.1,
            vocab_size,
            max_len: 32,
        }
    }

    /// Sentence-and-template generator dimensions at full scale.
    pub fn smt2mc_full(vocab_size: usize) -> Self {
        Self {
            layers: 6,
            d_model: 512,
            d_ff: 2048,
            heads: 8,
            dropout: 0.1,
            vocab_size,
            max_len: 32,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |msg: String| Err(NeuralError::InvalidConfig(msg));
        if self.layers == 0 || self.d_model == 0 || self.d_ff == 0 || self.heads == 0 {
            return bad(format!("dimensions must be positive: {self:?}"));
        }
        if self.vocab_size == 0 || self.max_len == 0 {
            return bad(format!("vocab_size and max_len must be positive: {self:?}"));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return bad(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("P_drop {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}
