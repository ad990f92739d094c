use std::collections::HashMap;

use super::{tokenize, TextError};
use crate::corpus::{MemeSample, TemplateCatalog, TemplateId};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;
pub const MASK: TokenId = 4;

pub const RESERVED_TOKENS: [&str; 5] = ["<pad>", "<bos>", "<eos>", "<unk>", "<mask>"];

/// Bidirectional token/id map.
///
/// Ids are laid out as: the five reserved tokens, one token per catalog
/// template (in catalog order), then corpus tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, TokenId>,
    num_templates: usize,
}

impl Vocabulary {
    fn from_parts(tokens: Vec<String>, num_templates: usize) -> Result<Self, TextError> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if ids.insert(tok.clone(), i as TokenId).is_some() {
                return Err(TextError::MalformedFile {
                    line: i + 1,
                    reason: format!("duplicate token {tok:?}"),
                });
            }
        }
        Ok(Self {
            tokens,
            ids,
            num_templates,
        })
    }

    /// Rebuilds a vocabulary from its token list (id = position).
    pub fn from_tokens(tokens: Vec<String>, num_templates: usize) -> Result<Self, TextError> {
        if tokens.len() < RESERVED_TOKENS.len() + num_templates {
            return Err(TextError::MalformedFile {
                line: tokens.len(),
                reason: "vocabulary is shorter than its reserved block".into(),
            });
        }
        for (i, r) in RESERVED_TOKENS.iter().enumerate() {
            if tokens[i] != *r {
                return Err(TextError::MalformedFile {
                    line: i + 1,
                    reason: format!("expected reserved token {r}"),
                });
            }
        }
        Self::from_parts(tokens, num_templates)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn num_templates(&self) -> usize {
        self.num_templates
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn template_token_id(&self, template: TemplateId) -> Option<TokenId> {
        (template.0 < self.num_templates).then(|| (RESERVED_TOKENS.len() + template.0) as TokenId)
    }

    pub fn is_template_token(&self, id: TokenId) -> bool {
        let start = RESERVED_TOKENS.len() as TokenId;
        (start..start + self.num_templates as TokenId).contains(&id)
    }

    /// Ids that never appear inside a generated caption.
    pub fn non_caption_ids(&self) -> Vec<TokenId> {
        let mut ids = vec![PAD, BOS, UNK, MASK];
        ids.extend((0..self.num_templates).map(|t| (RESERVED_TOKENS.len() + t) as TokenId));
        ids
    }

    pub fn encode_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<TokenId> {
        tokens.iter().map(|t| self.id(t.as_ref()).unwrap_or(UNK)).collect()
    }

    /// Tokenizes and maps to ids; out-of-vocabulary words become UNK.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        self.encode_tokens(&tokenize(text))
    }

    /// Joins tokens with single spaces, dropping PAD/BOS/EOS.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String, TextError> {
        let mut words = Vec::with_capacity(ids.len());
        for &id in ids {
            let tok = self.token(id).ok_or(TextError::InvalidId(id))?;
            if !matches!(id, PAD | BOS | EOS) {
                words.push(tok);
            }
        }
        Ok(words.join(" "))
    }

    /// One token per line; line number is the id.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for tok in &self.tokens {
            out.push_str(tok);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, num_templates: usize) -> Result<Self, TextError> {
        Self::from_tokens(text.lines().map(str::to_owned).collect(), num_templates)
    }
}

/// Reserved and template tokens, then corpus tokens seen at least `min_freq`
/// times ordered by (frequency desc, token asc).
pub fn build_vocab(corpus: &[MemeSample], catalog: &TemplateCatalog, min_freq: usize) -> Vocabulary {
    let min_freq = min_freq.max(1);
    let mut tokens: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
    tokens.extend(catalog.entries().iter().map(|e| e.token.clone()));

    let mut freq: HashMap<String, usize> = HashMap::new();
    for sample in corpus {
        for tok in tokenize(&sample.caption) {
            *freq.entry(tok).or_default() += 1;
        }
    }
    let mut counted: Vec<(String, usize)> = freq
        .into_iter()
        .filter(|(tok, n)| *n >= min_freq && !tokens.contains(tok))
        .collect();
    counted.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    tokens.extend(counted.into_iter().map(|(t, _)| t));

    Vocabulary::from_parts(tokens, catalog.len()).expect("built tokens are unique")
}
