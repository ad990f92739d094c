use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{encode_stack, ModelError, Variant};
use crate::corpus::{MemeSample, TemplateId};
use crate::neural::layers::{DecoderLayer, EncoderLayer, TokenEmbedding};
use crate::neural::{AttnMask, Graph, ModelConfig, NeuralError, NodeId, ParamStore, Tensor};
use crate::text::{corrupt, pos_tag, tokenize, Corruption, TagLexicon, TokenId, Vocabulary, BOS, EOS};

/// Encoder output over `[template token] ++ corrupted sentence`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemeEmbedding {
    memory: Tensor,
}

impl MemeEmbedding {
    pub fn source_len(&self) -> usize {
        self.memory.rows()
    }

    pub fn matrix(&self) -> &Tensor {
        &self.memory
    }
}

/// One teacher-forcing training pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorExample {
    /// Encoder input, starting with the template token.
    pub source: Vec<TokenId>,
    /// `BOS ++ caption`
    pub decoder_input: Vec<TokenId>,
    /// `caption ++ EOS`
    pub targets: Vec<TokenId>,
}

/// Template-conditioned encoder-decoder with a tied output projection.
#[derive(Debug, Clone)]
pub struct CaptionGenerator {
    variant: Variant,
    np_plus_v: bool,
    config: ModelConfig,
    vocab: Vocabulary,
    pub(crate) params: ParamStore,
    embedding: TokenEmbedding,
    encoder: Vec<EncoderLayer>,
    decoder: Vec<DecoderLayer>,
}

impl CaptionGenerator {
    pub fn new(
        variant: Variant,
        np_plus_v: bool,
        config: ModelConfig,
        vocab: Vocabulary,
        seed: u64,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        if config.vocab_size != vocab.len() {
            return Err(NeuralError::InvalidConfig(format!(
                "vocab_size {} but vocabulary has {} tokens",
                config.vocab_size,
                vocab.len()
            ))
            .into());
        }
        if config.max_len < 2 {
            return Err(NeuralError::InvalidConfig("max_len must leave room for BOS and EOS".into()).into());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let embedding = TokenEmbedding::new(&mut params, "embedding", vocab.len(), config.d_model, &mut rng);
        let encoder = (0..config.layers)
            .map(|i| EncoderLayer::new(&mut params, &format!("encoder.{i}"), &config, &mut rng))
            .collect();
        let decoder = (0..config.layers)
            .map(|i| DecoderLayer::new(&mut params, &format!("decoder.{i}"), &config, &mut rng))
            .collect();
        Ok(Self {
            variant,
            np_plus_v,
            config,
            vocab,
            params,
            embedding,
            encoder,
            decoder,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn np_plus_v(&self) -> bool {
        self.np_plus_v
    }

    pub fn corruption(&self) -> Corruption {
        Corruption::from_np_plus_v(self.np_plus_v)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// Corrupted sentence ids fed to the encoder after the template token.
    /// Always empty for MT2MC.
    pub fn source_tokens(&self, sentence: &str, tagger: &TagLexicon) -> Vec<TokenId> {
        if self.variant == Variant::Mt2mc {
            return Vec::new();
        }
        let tokens = tokenize(sentence);
        let tags = pos_tag(&tokens, tagger);
        let kept = corrupt(&tokens, &tags, self.corruption()).expect("one tag per token");
        let mut ids = self.vocab.encode_tokens(&kept);
        ids.truncate(self.config.max_len - 1);
        ids
    }

    fn encoder_input(&self, template: TemplateId, masked: &[TokenId]) -> Result<Vec<usize>, ModelError> {
        if self.variant == Variant::Mt2mc && !masked.is_empty() {
            return Err(ModelError::VariantMismatch(masked.len()));
        }
        let token = self
            .vocab
            .template_token_id(template)
            .ok_or(ModelError::UnknownTemplate {
                id: template.0,
                count: self.vocab.num_templates(),
            })?;
        if let Some(&bad) = masked.iter().find(|&&i| i as usize >= self.vocab.len()) {
            return Err(crate::text::TextError::InvalidId(bad).into());
        }
        let mut ids = vec![token as usize];
        ids.extend(masked.iter().take(self.config.max_len - 1).map(|&i| i as usize));
        Ok(ids)
    }

    pub(crate) fn encode_node(&self, g: &mut Graph, source: &[TokenId]) -> NodeId {
        let ids: Vec<usize> = source.iter().map(|&i| i as usize).collect();
        encode_stack(g, &self.embedding, &self.encoder, &ids)
    }

    pub fn encode_meme(&self, template: TemplateId, masked: &[TokenId]) -> Result<MemeEmbedding, ModelError> {
        let ids = self.encoder_input(template, masked)?;
        let mut g = Graph::new(&self.params);
        let source: Vec<TokenId> = ids.iter().map(|&i| i as TokenId).collect();
        let m = self.encode_node(&mut g, &source);
        Ok(MemeEmbedding {
            memory: g.value(m).clone(),
        })
    }

    /// `[prefix_len, |V|]` logits for every decoder position.
    pub(crate) fn decode_node(&self, g: &mut Graph, memory: NodeId, prefix: &[TokenId]) -> NodeId {
        let ids: Vec<usize> = prefix.iter().map(|&i| i as usize).collect();
        let causal = AttnMask::causal(ids.len());
        let mut h = self.embedding.forward(g, &ids);
        for layer in &self.decoder {
            h = layer.forward(g, h, memory, &causal);
        }
        let table = g.param(self.embedding.table);
        g.matmul_bt(h, table)
    }

    fn check_prefix(&self, prefix: &[TokenId]) -> Result<(), ModelError> {
        if prefix.first() != Some(&BOS) {
            return Err(ModelError::MissingBos);
        }
        if prefix.len() > self.config.max_len {
            return Err(ModelError::PrefixTooLong {
                len: prefix.len(),
                max: self.config.max_len,
            });
        }
        if let Some(&bad) = prefix.iter().find(|&&i| i as usize >= self.vocab.len()) {
            return Err(crate::text::TextError::InvalidId(bad).into());
        }
        Ok(())
    }

    /// Logits at every prefix position.
    pub fn decoder_logits_all(&self, prefix: &[TokenId], m: &MemeEmbedding) -> Result<Tensor, ModelError> {
        self.check_prefix(prefix)?;
        let mut g = Graph::new(&self.params);
        let memory = g.input(m.memory.clone());
        let logits = self.decode_node(&mut g, memory, prefix);
        Ok(g.value(logits).clone())
    }

    /// Next-token logits after `prefix`.
    pub fn decoder_logits(&self, prefix: &[TokenId], m: &MemeEmbedding) -> Result<Vec<f64>, ModelError> {
        let all = self.decoder_logits_all(prefix, m)?;
        Ok(all.row(all.rows() - 1).to_vec())
    }

    /// Same as [`Self::decoder_logits`] but only projects the last position.
    pub fn next_token_logits(&self, prefix: &[TokenId], m: &MemeEmbedding) -> Result<Vec<f64>, ModelError> {
        self.check_prefix(prefix)?;
        let mut g = Graph::new(&self.params);
        let memory = g.input(m.memory.clone());
        let ids: Vec<usize> = prefix.iter().map(|&i| i as usize).collect();
        let causal = AttnMask::causal(ids.len());
        let mut h = self.embedding.forward(&mut g, &ids);
        for layer in &self.decoder {
            h = layer.forward(&mut g, h, memory, &causal);
        }
        let last = g.gather(h, &[ids.len() - 1]);
        let table = g.param(self.embedding.table);
        let logits = g.matmul_bt(last, table);
        Ok(g.value(logits).data().to_vec())
    }

    /// Builds the teacher-forcing pair for a corpus sample.
    pub fn example(&self, sample: &MemeSample, tagger: &TagLexicon) -> Result<GeneratorExample, ModelError> {
        let masked = self.source_tokens(&sample.caption, tagger);
        let source: Vec<TokenId> = self
            .encoder_input(sample.template_id, &masked)?
            .into_iter()
            .map(|i| i as TokenId)
            .collect();
        let mut caption = self.vocab.encode(&sample.caption);
        caption.truncate(self.config.max_len - 1);
        let mut decoder_input = vec![BOS];
        decoder_input.extend(&caption);
        let mut targets = caption;
        targets.push(EOS);
        Ok(GeneratorExample {
            source,
            decoder_input,
            targets,
        })
    }

    /// `[len, |V|]` teacher-forced logits node for one example.
    pub(crate) fn teacher_forced(&self, g: &mut Graph, ex: &GeneratorExample) -> NodeId {
        let memory = self.encode_node(g, &ex.source);
        self.decode_node(g, memory, &ex.decoder_input)
    }
}
