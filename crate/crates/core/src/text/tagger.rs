use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use super::TextError;

const EMBEDDED_TAGS: &str = include_str!("../../data/tags.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PosTag {
    Noun,
    Propn,
    Verb,
    Adj,
    Det,
    Adp,
    Adv,
    Pron,
    Num,
    Other,
}

impl PosTag {
    pub const ALL: [PosTag; 10] = [
        PosTag::Noun,
        PosTag::Propn,
        PosTag::Verb,
        PosTag::Adj,
        PosTag::Det,
        PosTag::Adp,
        PosTag::Adv,
        PosTag::Pron,
        PosTag::Num,
        PosTag::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Noun => "NOUN",
            PosTag::Propn => "PROPN",
            PosTag::Verb => "VERB",
            PosTag::Adj => "ADJ",
            PosTag::Det => "DET",
            PosTag::Adp => "ADP",
            PosTag::Adv => "ADV",
            PosTag::Pron => "PRON",
            PosTag::Num => "NUM",
            PosTag::Other => "OTHER",
        }
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PosTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PosTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown tag {s:?}"))
    }
}

/// Word lexicon plus suffix rules. Resolution order: exact word, then the
/// longest matching suffix, then NOUN.
#[derive(Debug, Clone, Default)]
pub struct TagLexicon {
    words: HashMap<String, PosTag>,
    suffixes: Vec<(String, PosTag)>,
}

impl TagLexicon {
    pub fn new<W, S>(words: W, suffixes: S) -> Self
    where
        W: IntoIterator<Item = (String, PosTag)>,
        S: IntoIterator<Item = (String, PosTag)>,
    {
        let mut suffixes: Vec<_> = suffixes.into_iter().collect();
        // longest first; stable so earlier rules win among equal lengths
        suffixes.sort_by_key(|s| std::cmp::Reverse(s.0.len()));
        Self {
            words: words.into_iter().collect(),
            suffixes,
        }
    }

    /// `word<TAB>TAG` lines; rules after a `#suffix` line are `suffix<TAB>TAG`.
    pub fn from_tsv(text: &str) -> Result<Self, TextError> {
        let mut words = Vec::new();
        let mut suffixes = Vec::new();
        let mut in_suffixes = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end();
            if line.trim() == "#suffix" {
                in_suffixes = true;
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let malformed = |reason: String| TextError::MalformedFile { line: idx + 1, reason };
            let (key, tag) = line
                .split_once('\t')
                .ok_or_else(|| malformed("expected <key>\\t<TAG>".into()))?;
            let tag: PosTag = tag.trim().parse().map_err(malformed)?;
            let key = key.trim().to_lowercase();
            if in_suffixes {
                suffixes.push((key, tag));
            } else {
                words.push((key, tag));
            }
        }
        Ok(Self::new(words, suffixes))
    }

    pub fn embedded() -> Self {
        Self::from_tsv(EMBEDDED_TAGS).expect("embedded tag lexicon is well-formed")
    }

    pub fn tag(&self, word: &str) -> PosTag {
        if let Some(tag) = self.words.get(word) {
            return *tag;
        }
        self.suffixes
            .iter()
            .find(|(suffix, _)| word.ends_with(suffix.as_str()))
            .map(|(_, tag)| *tag)
            .unwrap_or(PosTag::Noun)
    }
}

pub fn pos_tag<S: AsRef<str>>(tokens: &[S], lexicon: &TagLexicon) -> Vec<PosTag> {
    tokens.iter().map(|t| lexicon.tag(t.as_ref())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex() -> TagLexicon {
        TagLexicon::new(
            [("dogs".into(), PosTag::Noun), ("run".into(), PosTag::Verb)],
            [("ly".into(), PosTag::Adv), ("y".into(), PosTag::Adj)],
        )
    }

    #[test]
    fn lexicon_lookup() {
        assert_eq!(pos_tag(&["dogs", "run"], &lex()), [PosTag::Noun, PosTag::Verb]);
    }

    #[test]
    fn default_is_noun() {
        assert_eq!(pos_tag(&["zebra"], &lex()), [PosTag::Noun]);
    }

    #[test]
    fn longest_suffix_wins() {
        assert_eq!(pos_tag(&["quickly"], &lex()), [PosTag::Adv]);
        assert_eq!(pos_tag(&["happy"], &lex()), [PosTag::Adj]);
    }

    #[test]
    fn exact_word_beats_suffix() {
        let lex = TagLexicon::new([("only".into(), PosTag::Det)], [("ly".into(), PosTag::Adv)]);
        assert_eq!(lex.tag("only"), PosTag::Det);
    }

    #[test]
    fn parses_tsv_sections() {
        let lex = TagLexicon::from_tsv("# header\nthe\tDET\n#suffix\ning\tVERB\n").unwrap();
        assert_eq!(lex.tag("the"), PosTag::Det);
        assert_eq!(lex.tag("running"), PosTag::Verb);
        assert!(TagLexicon::from_tsv("the\tXX\n").is_err());
    }

    #[test]
    fn embedded_lexicon_tags_common_words() {
        let lex = TagLexicon::embedded();
        assert_eq!(lex.tag("the"), PosTag::Det);
        assert_eq!(lex.tag("save"), PosTag::Verb);
        assert_eq!(lex.tag("corona"), PosTag::Propn);
        assert_eq!(lex.tag("2020"), PosTag::Num);
        assert_eq!(lex.tag("jumping"), PosTag::Verb);
    }
}
