use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::GenerationError;
use crate::corpus::TemplateId;
use crate::models::{CaptionGenerator, MemeEmbedding};
use crate::neural::log_softmax;
use crate::text::{TokenId, BOS, EOS, MAX_CAPTION_LEN};

pub const DEFAULT_BEAM_SIZE: usize = 6;
pub const DEFAULT_ALPHA: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub beam_size: usize,
    /// Length-penalty exponent.
    pub alpha: f64,
    /// Maximum number of generated tokens, EOS included.
    pub max_len: usize,
    pub forced_template: Option<TemplateId>,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            beam_size: DEFAULT_BEAM_SIZE,
            alpha: DEFAULT_ALPHA,
            max_len: MAX_CAPTION_LEN,
            forced_template: None,
        }
    }
}

impl DecodeParams {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if self.beam_size == 0 {
            return Err(GenerationError::InvalidParams("beam_size must be at least 1".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(GenerationError::InvalidParams(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if self.max_len == 0 {
            return Err(GenerationError::InvalidParams("max_len must be at least 1".into()));
        }
        Ok(())
    }
}

/// `((5 + length) / 6)^alpha`
pub fn length_penalty(length: usize, alpha: f64) -> f64 {
    ((5.0 + length as f64) / 6.0).powf(alpha)
}

/// Next-token distribution for a BOS-prefixed sequence.
pub trait StepScorer {
    fn vocab_size(&self) -> usize;

    /// Token that finishes a hypothesis, if any.
    fn eos(&self) -> Option<TokenId>;

    /// Log-probabilities over the vocabulary; `-inf` marks tokens that may
    /// not be emitted.
    fn log_probs(&self, prefix: &[TokenId]) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamHypothesis {
    /// Starts with BOS; ends with EOS when finished.
    pub tokens: Vec<TokenId>,
    pub log_prob: f64,
    pub finished: bool,
}

impl BeamHypothesis {
    fn root() -> Self {
        Self {
            tokens: vec![BOS],
            log_prob: 0.0,
            finished: false,
        }
    }

    /// Generated tokens, EOS included, BOS excluded.
    pub fn generated_len(&self) -> usize {
        self.tokens.len() - 1
    }

    /// Generated tokens without BOS or EOS.
    pub fn caption_ids(&self) -> &[TokenId] {
        let end = if self.finished {
            self.tokens.len() - 1
        } else {
            self.tokens.len()
        };
        &self.tokens[1..end]
    }

    /// Final ranking score: log-probability over the length penalty.
    pub fn score(&self, alpha: f64) -> f64 {
        self.log_prob / length_penalty(self.generated_len().max(1), alpha)
    }
}

/// Higher `key` first, then the lexicographically smaller sequence.
fn rank(a: &BeamHypothesis, b: &BeamHypothesis, key: impl Fn(&BeamHypothesis) -> f64) -> Ordering {
    key(b).total_cmp(&key(a)).then_with(|| a.tokens.cmp(&b.tokens))
}

/// Beam search with a finished pool.
///
/// Each step expands every live hypothesis by every token with finite
/// log-probability, ranks candidates by cumulative log-probability (ties go
/// to the smaller token sequence), and walks the ranking until `beam_size`
/// unfinished candidates are live; EOS candidates met on the way are retired
/// to the pool. Search stops once the pool holds `beam_size` hypotheses, at
/// `max_len`, or when nothing is live. The result is the best of the pool
/// plus any hypotheses that reached `max_len`, by [`BeamHypothesis::score`].
pub fn beam_search<S: StepScorer + ?Sized>(
    scorer: &S,
    params: &DecodeParams,
) -> Result<BeamHypothesis, GenerationError> {
    let finalists = beam_finalists(scorer, params)?;
    Ok(finalists.into_iter().next().unwrap_or_else(BeamHypothesis::root))
}

/// Every hypothesis eligible for the final ranking, best first.
pub fn beam_finalists<S: StepScorer + ?Sized>(
    scorer: &S,
    params: &DecodeParams,
) -> Result<Vec<BeamHypothesis>, GenerationError> {
    params.validate()?;
    let eos = scorer.eos();
    let mut live = vec![BeamHypothesis::root()];
    let mut pool: Vec<BeamHypothesis> = Vec::new();
    let mut steps = 0;
    while steps < params.max_len && !live.is_empty() && pool.len() < params.beam_size {
        let mut candidates = Vec::new();
        for h in &live {
            let lp = scorer.log_probs(&h.tokens);
            debug_assert_eq!(lp.len(), scorer.vocab_size());
            for (tok, &l) in lp.iter().enumerate() {
                if !l.is_finite() {
                    continue;
                }
                let mut tokens = h.tokens.clone();
                tokens.push(tok as TokenId);
                candidates.push(BeamHypothesis {
                    tokens,
                    log_prob: h.log_prob + l,
                    finished: Some(tok as TokenId) == eos,
                });
            }
        }
        candidates.sort_by(|a, b| rank(a, b, |h| h.log_prob));
        live.clear();
        for c in candidates {
            if live.len() == params.beam_size {
                break;
            }
            if c.finished {
                pool.push(c);
            } else {
                live.push(c);
            }
        }
        steps += 1;
    }
    let mut finalists = pool;
    finalists.extend(live.into_iter().filter(|h| h.generated_len() >= params.max_len));
    finalists.sort_by(|a, b| rank(a, b, |h| h.score(params.alpha)));
    Ok(finalists)
}

/// Arg-max decoding (smaller id on ties) until EOS or `max_len` tokens.
pub fn greedy_decode<S: StepScorer + ?Sized>(scorer: &S, max_len: usize) -> BeamHypothesis {
    let eos = scorer.eos();
    let mut h = BeamHypothesis::root();
    while h.generated_len() < max_len {
        let lp = scorer.log_probs(&h.tokens);
        let mut best: Option<usize> = None;
        for (tok, &l) in lp.iter().enumerate() {
            if l.is_finite() && best.is_none_or(|b| l > lp[b]) {
                best = Some(tok);
            }
        }
        let Some(tok) = best else { break };
        h.tokens.push(tok as TokenId);
        h.log_prob += lp[tok];
        if Some(tok as TokenId) == eos {
            h.finished = true;
            break;
        }
    }
    h
}

/// Scores next tokens with a caption generator over a fixed meme embedding.
pub struct GeneratorScorer<'a> {
    generator: &'a CaptionGenerator,
    memory: MemeEmbedding,
    banned: Vec<bool>,
    eos: Option<TokenId>,
}

impl<'a> GeneratorScorer<'a> {
    /// Bans every token that cannot appear inside a caption (PAD, BOS, UNK,
    /// MASK, template tokens); EOS ends a hypothesis but may not come first.
    pub fn new(generator: &'a CaptionGenerator, memory: MemeEmbedding) -> Self {
        let mut banned = vec![false; generator.vocab().len()];
        for id in generator.vocab().non_caption_ids() {
            banned[id as usize] = true;
        }
        Self {
            generator,
            memory,
            banned,
            eos: Some(EOS),
        }
    }

    /// No bans and no terminating token: every sequence is reachable.
    pub fn unrestricted(generator: &'a CaptionGenerator, memory: MemeEmbedding) -> Self {
        Self {
            generator,
            memory,
            banned: vec![false; generator.vocab().len()],
            eos: None,
        }
    }
}

impl StepScorer for GeneratorScorer<'_> {
    fn vocab_size(&self) -> usize {
        self.banned.len()
    }

    fn eos(&self) -> Option<TokenId> {
        self.eos
    }

    fn log_probs(&self, prefix: &[TokenId]) -> Vec<f64> {
        let mut logits = self
            .generator
            .next_token_logits(prefix, &self.memory)
            .expect("decoder accepts beam prefixes");
        for (l, &b) in logits.iter_mut().zip(&self.banned) {
            if b {
                *l = f64::NEG_INFINITY;
            }
        }
        if let (Some(eos), 1) = (self.eos, prefix.len()) {
            logits[eos as usize] = f64::NEG_INFINITY;
        }
        log_softmax(&logits)
    }
}
