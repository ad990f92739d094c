use std::collections::HashMap;

use super::CorpusError;
use crate::text::tokenize;

/// Constant in the valence normalization `V / sqrt(V^2 + 15)`.
pub const VALENCE_NORMALIZER: f64 = 15.0;

const EMBEDDED_LEXICON: &str = include_str!("../../data/sentiment.tsv");

/// Word valences, typically in [-4, 4]. Lookups are case-insensitive.
#[derive(Debug, Clone, Default)]
pub struct SentimentLexicon {
    valences: HashMap<String, f64>,
}

impl SentimentLexicon {
    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: AsRef<str>,
    {
        Self {
            valences: pairs.into_iter().map(|(w, v)| (w.as_ref().to_lowercase(), v)).collect(),
        }
    }

    /// Parses `word<TAB>valence` lines; blank lines and `#` comments are skipped.
    pub fn from_tsv(text: &str) -> Result<Self, CorpusError> {
        let mut valences = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, value) = line
                .split_once('\t')
                .ok_or(CorpusError::MalformedLexicon { line: idx + 1 })?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| CorpusError::MalformedLexicon { line: idx + 1 })?;
            valences.insert(word.trim().to_lowercase(), value);
        }
        Ok(Self { valences })
    }

    /// The curated lexicon shipped with the crate.
    pub fn embedded() -> Self {
        Self::from_tsv(EMBEDDED_LEXICON).expect("embedded sentiment lexicon is well-formed")
    }

    pub fn valence(&self, word: &str) -> f64 {
        self.valences.get(&word.to_lowercase()).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.valences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valences.is_empty()
    }
}

/// Compound sentiment in [-1, 1]: summed token valence squashed by `V / sqrt(V^2 + 15)`.
pub fn sentiment_score(sentence: &str, lexicon: &SentimentLexicon) -> f64 {
    let total: f64 = tokenize(sentence).iter().map(|t| lexicon.valence(t)).sum();
    if total == 0.0 {
        return 0.0;
    }
    total / (total * total + VALENCE_NORMALIZER).sqrt()
}

/// Keeps sentences scoring >= 0, in order.
pub fn filter_non_negative<S: AsRef<str> + Clone>(sentences: &[S], lexicon: &SentimentLexicon) -> Vec<S> {
    sentences
        .iter()
        .filter(|s| sentiment_score(s.as_ref(), lexicon) >= 0.0)
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lexicon() -> SentimentLexicon {
        SentimentLexicon::from_pairs([("good", 1.9), ("terrible", -2.1), ("yay", 1.5), ("meh", -2.0)])
    }

    #[test]
    fn no_hits_scores_zero() {
        assert_eq!(sentiment_score("the cat sat", &lexicon()), 0.0);
        assert_eq!(sentiment_score("", &lexicon()), 0.0);
    }

    #[test]
    fn single_word_normalization() {
        // 1.5 / sqrt(2.25 + 15) and -2 / sqrt(4 + 15), evaluated by hand.
        assert!((sentiment_score("yay", &lexicon()) - 0.361_157_559).abs() < 1e-6);
        assert!((sentiment_score("meh", &lexicon()) + 0.458_831_468).abs() < 1e-6);
    }

    #[test]
    fn lookup_is_case_insensitive() {
        assert_eq!(lexicon().valence("GOOD"), 1.9);
        assert_eq!(lexicon().valence("unknown"), 0.0);
    }

    #[test]
    fn filter_examples() {
        let kept = filter_non_negative(&["good day", "terrible loss"], &lexicon());
        assert_eq!(kept, vec!["good day"]);
        let neutral = vec!["a b", "c d"];
        assert_eq!(filter_non_negative(&neutral, &lexicon()), neutral);
        assert!(filter_non_negative::<&str>(&[], &lexicon()).is_empty());
    }

    #[test]
    fn embedded_lexicon_loads() {
        let lex = SentimentLexicon::embedded();
        assert!(lex.len() >= 150);
        assert!(lex.valence("great") > 0.0);
        assert!(lex.valence("disaster") < 0.0);
    }

    #[test]
    fn tsv_errors_carry_line() {
        assert!(matches!(
            SentimentLexicon::from_tsv("good\t1.0\nbad"),
            Err(CorpusError::MalformedLexicon { line: 2 })
        ));
    }

    proptest! {
        #[test]
        fn filtering_is_an_idempotent_subsequence(
            words in proptest::collection::vec(
                proptest::collection::vec(prop::sample::select(vec!["good", "terrible", "yay", "meh", "cat", "dog"]), 0..5),
                0..12)
        ) {
            let sentences: Vec<String> = words.iter().map(|w| w.join(" ")).collect();
            let lex = lexicon();
            let once = filter_non_negative(&sentences, &lex);
            let twice = filter_non_negative(&once, &lex);
            prop_assert_eq!(&once, &twice);
            let mut it = sentences.iter();
            for kept in &once {
                prop_assert!(it.any(|s| s == kept));
            }
        }

        #[test]
        fn adding_positive_word_never_lowers_score(
            words in proptest::collection::vec(prop::sample::select(vec!["good", "terrible", "yay", "meh", "cat"]), 0..8)
        ) {
            let lex = lexicon();
            let base = words.join(" ");
            let more = format!("{base} yay");
            prop_assert!(sentiment_score(&more, &lex) >= sentiment_score(&base, &lex));
        }
    }
}
