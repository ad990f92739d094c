use super::{PosTag, TagLexicon, TextError};

/// Which content words survive corruption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Corruption {
    /// Noun phrases only.
    NounPhrases,
    /// Noun phrases and verbs.
    #[default]
    NounPhrasesAndVerbs,
}

impl Corruption {
    pub fn from_np_plus_v(np_plus_v: bool) -> Self {
        if np_plus_v {
            Corruption::NounPhrasesAndVerbs
        } else {
            Corruption::NounPhrases
        }
    }
}

/// Keeps noun phrases (NOUN/PROPN/NUM plus the ADJ run directly before a
/// NOUN/PROPN) and, depending on `mode`, verbs. If nothing would survive the
/// input is returned unchanged, except that noun-phrase mode still drops verbs.
pub fn corrupt<S: AsRef<str> + Clone>(tokens: &[S], tags: &[PosTag], mode: Corruption) -> Result<Vec<S>, TextError> {
    if tokens.len() != tags.len() {
        return Err(TextError::LengthMismatch {
            tokens: tokens.len(),
            tags: tags.len(),
        });
    }
    let mut keep = vec![false; tokens.len()];
    // right-to-left so an ADJ can see whether a noun follows it
    let mut modifies_noun = false;
    for i in (0..tokens.len()).rev() {
        match tags[i] {
            PosTag::Noun | PosTag::Propn => {
                keep[i] = true;
                modifies_noun = true;
            }
            PosTag::Adj if modifies_noun => keep[i] = true,
            PosTag::Num => {
                keep[i] = true;
                modifies_noun = false;
            }
            PosTag::Verb => {
                keep[i] = mode == Corruption::NounPhrasesAndVerbs;
                modifies_noun = false;
            }
            _ => modifies_noun = false,
        }
    }
    if !keep.iter().any(|k| *k) {
        // nothing survived: fall back to the input, minus verbs in noun-phrase mode
        for (k, tag) in keep.iter_mut().zip(tags) {
            *k = !(mode == Corruption::NounPhrases && *tag == PosTag::Verb);
        }
    }
    Ok(tokens
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(t, _)| t.clone())
        .collect())
}

/// Noun phrases plus verbs.
pub fn mask_to_content<S: AsRef<str> + Clone>(tokens: &[S], tags: &[PosTag]) -> Result<Vec<S>, TextError> {
    corrupt(tokens, tags, Corruption::NounPhrasesAndVerbs)
}

impl TagLexicon {
    /// Tags `tokens` with this lexicon and corrupts them.
    pub fn corrupt_tokens(&self, tokens: &[String], mode: Corruption) -> Vec<String> {
        let tags = super::pos_tag(tokens, self);
        corrupt(tokens, &tags, mode).expect("tags produced per token")
    }
}
