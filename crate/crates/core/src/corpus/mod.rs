//! Meme-caption corpus: loading, template catalog, splitting, statistics and
//! the sentiment gate used to pick evaluation sentences.

mod catalog;
mod sentiment;
mod split;

use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

pub use catalog::{template_token, CaptionBox, CatalogEntry, Position, TemplateCatalog, TemplateId};
pub use sentiment::{filter_non_negative, sentiment_score, SentimentLexicon, VALENCE_NORMALIZER};
pub use split::{split_corpus, CorpusSplit, SplitRatios};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed corpus line: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: unknown template {name:?}")]
    UnknownTemplate { line: usize, name: String },
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    BadRatios((f64, f64, f64)),
    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),
    #[error("line {line}: malformed lexicon entry")]
    MalformedLexicon { line: usize },
}

/// One (template, caption) training pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MemeSample {
    pub template_id: TemplateId,
    pub caption: String,
}

/// Lowercases and collapses runs of whitespace to single spaces.
pub fn normalize_caption(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

pub(crate) fn normalize_name(name: &str) -> String {
    normalize_caption(name)
}

#[derive(Deserialize)]
struct CorpusLine {
    template: String,
    caption: String,
}

/// Reads a JSON-lines corpus from any reader. Blank lines are skipped.
pub fn read_corpus<R: BufRead>(reader: R, catalog: &TemplateCatalog) -> Result<Vec<MemeSample>, CorpusError> {
    let mut samples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CorpusError::MalformedLine {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CorpusLine = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedLine {
            line: line_no,
            reason: e.to_string(),
        })?;
        let template_id = catalog
            .find(&parsed.template)
            .ok_or_else(|| CorpusError::UnknownTemplate {
                line: line_no,
                name: parsed.template.clone(),
            })?;
        let caption = normalize_caption(&parsed.caption);
        if caption.is_empty() {
            return Err(CorpusError::MalformedLine {
                line: line_no,
                reason: "empty caption".into(),
            });
        }
        samples.push(MemeSample { template_id, caption });
    }
    Ok(samples)
}

pub fn load_corpus(path: &Path, catalog: &TemplateCatalog) -> Result<Vec<MemeSample>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_corpus(std::io::BufReader::new(file), catalog)
}

/// Caption count per template, indexed by [`TemplateId`].
pub fn corpus_stats(samples: &[MemeSample], catalog: &TemplateCatalog) -> Vec<usize> {
    let mut counts = vec![0; catalog.len()];
    for s in samples {
        counts[s.template_id.0] += 1;
    }
    counts
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn catalog(names: &[&str]) -> TemplateCatalog {
        let entries = names
            .iter()
            .map(|n| CatalogEntry {
                name: n.to_string(),
                token: template_token(n),
                image_paths: vec![PathBuf::from("img.png")],
                caption_box: CaptionBox {
                    x: 0,
                    y: 0,
                    w: 100,
                    h: 40,
                },
                position: Position::Top,
            })
            .collect();
        TemplateCatalog::new(entries).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::catalog;
    use super::*;

    #[test]
    fn loads_table_sample_line() {
        let cat = catalog(&["Bad Luck Brian", "Success Kid"]);
        let data = r#"{"template":"Success Kid","caption":"when you win your first fortnite game"}"#;
        let samples = read_corpus(data.as_bytes(), &cat).unwrap();
        assert_eq!(
            samples,
            vec![MemeSample {
                template_id: TemplateId(1),
                caption: "when you win your first fortnite game".into()
            }]
        );
    }

    #[test]
    fn empty_input_gives_empty_corpus() {
        let cat = catalog(&["A", "B"]);
        assert!(read_corpus("".as_bytes(), &cat).unwrap().is_empty());
    }

    #[test]
    fn unknown_template_names_line() {
        let cat = catalog(&["A", "B"]);
        let err = read_corpus(r#"{"template":"Nonexistent","caption":"x"}"#.as_bytes(), &cat).unwrap_err();
        match err {
            CorpusError::UnknownTemplate { line, name } => {
                assert_eq!(line, 1);
                assert_eq!(name, "Nonexistent");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let cat = catalog(&["A", "B"]);
        let data = "{\"template\":\"A\",\"caption\":\"ok\"}\n{not json}\n";
        match read_corpus(data.as_bytes(), &cat).unwrap_err() {
            CorpusError::MalformedLine { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let missing_key = r#"{"template":"A"}"#;
        assert!(matches!(
            read_corpus(missing_key.as_bytes(), &cat),
            Err(CorpusError::MalformedLine { line: 1, .. })
        ));
    }

    #[test]
    fn captions_are_normalized() {
        let cat = catalog(&["A", "B"]);
        let data = r#"{"template":"a","caption":"  When   YOU\tWin "}"#;
        let samples = read_corpus(data.as_bytes(), &cat).unwrap();
        assert_eq!(samples[0].caption, "when you win");
    }

    #[test]
    fn stats_cover_every_template() {
        let cat = catalog(&["A", "B", "C"]);
        let s = |t| MemeSample {
            template_id: TemplateId(t),
            caption: "x".into(),
        };
        assert_eq!(corpus_stats(&[s(0), s(0), s(0), s(1)], &cat), vec![3, 1, 0]);
        assert_eq!(corpus_stats(&[], &cat), vec![0, 0, 0]);
    }
}
