use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{encode_stack, ModelError};
use crate::corpus::{TemplateCatalog, TemplateId};
use crate::neural::layers::{EncoderLayer, Linear, TokenEmbedding};
use crate::neural::{softmax, Graph, ModelConfig, NeuralError, NodeId, ParamStore};
use crate::text::{TokenId, Vocabulary};

/// Transformer encoder, mean pooling and a linear head over templates.
#[derive(Debug, Clone)]
pub struct TemplateSelector {
    config: ModelConfig,
    vocab: Vocabulary,
    pub(crate) params: ParamStore,
    embedding: TokenEmbedding,
    encoder: Vec<EncoderLayer>,
    head: Linear,
}

impl TemplateSelector {
    /// Fresh model; the head has one output per template token in `vocab`.
    pub fn new(config: ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        if config.vocab_size != vocab.len() {
            return Err(NeuralError::InvalidConfig(format!(
                "vocab_size {} but vocabulary has {} tokens",
                config.vocab_size,
                vocab.len()
            ))
            .into());
        }
        if vocab.num_templates() == 0 {
            return Err(NeuralError::InvalidConfig("vocabulary has no template tokens".into()).into());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let embedding = TokenEmbedding::new(&mut params, "embedding", vocab.len(), config.d_model, &mut rng);
        let encoder = (0..config.layers)
            .map(|i| EncoderLayer::new(&mut params, &format!("encoder.{i}"), &config, &mut rng))
            .collect();
        let head = Linear::new(&mut params, "head", config.d_model, vocab.num_templates(), &mut rng);
        Ok(Self {
            config,
            vocab,
            params,
            embedding,
            encoder,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn num_templates(&self) -> usize {
        self.vocab.num_templates()
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// Token ids of a sentence, truncated to `max_len`.
    pub fn input_ids(&self, sentence: &str) -> Vec<TokenId> {
        let mut ids = self.vocab.encode(sentence);
        ids.truncate(self.config.max_len);
        ids
    }

    /// `[1, num_templates]` logits node.
    pub(crate) fn logits(&self, g: &mut Graph, ids: &[TokenId]) -> NodeId {
        let ids: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        let h = encode_stack(g, &self.embedding, &self.encoder, &ids);
        let pooled = g.mean_rows(h);
        self.head.forward(g, pooled)
    }

    /// Distribution over templates, indexed by template id.
    pub fn probabilities(&self, ids: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        if ids.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        if let Some(&bad) = ids.iter().find(|&&i| i as usize >= self.vocab.len()) {
            return Err(crate::text::TextError::InvalidId(bad).into());
        }
        let ids = &ids[..ids.len().min(self.config.max_len)];
        let mut g = Graph::new(&self.params);
        let logits = self.logits(&mut g, ids);
        Ok(softmax(g.value(logits).data())?)
    }
}

/// Every template ranked by probability (descending, lower id first on ties).
pub fn select_template(
    sentence: &str,
    selector: &TemplateSelector,
    catalog: &TemplateCatalog,
) -> Result<Vec<(TemplateId, f64)>, ModelError> {
    if catalog.len() != selector.num_templates() {
        return Err(ModelError::CatalogMismatch {
            catalog: catalog.len(),
            model: selector.num_templates(),
        });
    }
    let ids = selector.input_ids(sentence);
    let probs = selector.probabilities(&ids)?;
    let mut ranked: Vec<(TemplateId, f64)> = probs.into_iter().enumerate().map(|(i, p)| (TemplateId(i), p)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked)
}
