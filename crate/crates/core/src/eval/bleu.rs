use std::collections::HashMap;

use serde::Serialize;

use super::EvalError;

/// Highest n-gram order reported.
pub const MAX_ORDER: usize = 4;

/// What to do with an n-gram order that has no matches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Smoothing {
    /// Zero precisions become `1 / (2 * hypothesis length)`.
    #[default]
    Floor,
    /// Zero precisions stay zero, and so does every score that uses them.
    Strict,
}

/// Corpus-level BLEU, scaled to 0-100.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BleuReport {
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub bleu_3: f64,
    pub bleu_4: f64,
    /// Brevity penalty.
    pub bp: f64,
    /// Modified n-gram precisions for orders 1..=4, after smoothing.
    #[serde(skip)]
    pub precisions: [f64; MAX_ORDER],
    #[serde(skip)]
    pub hypothesis_len: usize,
    #[serde(skip)]
    pub reference_len: usize,
}

impl BleuReport {
    /// Score using orders `1..=n`.
    pub fn order(&self, n: usize) -> f64 {
        match n {
            1 => self.bleu_1,
            2 => self.bleu_2,
            3 => self.bleu_3,
            4 => self.bleu_4,
            _ => panic!("BLEU order {n} not in 1..=4"),
        }
    }
}

fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    counts
}

pub fn bleu<S: AsRef<str>>(hypotheses: &[Vec<S>], references: &[Vec<S>]) -> Result<BleuReport, EvalError> {
    bleu_with(hypotheses, references, Smoothing::Floor)
}

/// Clipped n-gram counts are pooled over the corpus before taking
/// precisions; the brevity penalty uses total lengths.
pub fn bleu_with<S: AsRef<str>>(
    hypotheses: &[Vec<S>],
    references: &[Vec<S>],
    smoothing: Smoothing,
) -> Result<BleuReport, EvalError> {
    if hypotheses.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            hypotheses: hypotheses.len(),
            references: references.len(),
        });
    }
    if hypotheses.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let c: usize = hypotheses.iter().map(Vec::len).sum();
    let r: usize = references.iter().map(Vec::len).sum();
    let mut matched = [0usize; MAX_ORDER];
    let mut total = [0usize; MAX_ORDER];
    let mut ref_total = [0usize; MAX_ORDER];
    for (h, rf) in hypotheses.iter().zip(references) {
        for n in 1..=MAX_ORDER {
            let hc = ngrams(h, n);
            let rc = ngrams(rf, n);
            for (gram, &count) in &hc {
                matched[n - 1] += count.min(rc.get(gram).copied().unwrap_or(0));
                total[n - 1] += count;
            }
            ref_total[n - 1] += rc.values().sum::<usize>();
        }
    }
    let mut precisions = [0.0; MAX_ORDER];
    for n in 0..MAX_ORDER {
        precisions[n] = if total[n] == 0 && ref_total[n] == 0 {
            // neither side is long enough for this order: nothing to miss
            1.0
        } else if total[n] == 0 {
            0.0
        } else {
            matched[n] as f64 / total[n] as f64
        };
        if precisions[n] == 0.0 && smoothing == Smoothing::Floor && c > 0 {
            precisions[n] = 1.0 / (2.0 * c as f64);
        }
    }
    let bp = if c == 0 {
        0.0
    } else if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    let mut scores = [0.0; MAX_ORDER];
    let mut log_sum = 0.0;
    for n in 0..MAX_ORDER {
        log_sum += precisions[n].ln();
        let geo = (log_sum / (n + 1) as f64).exp();
        scores[n] = 100.0 * bp * geo;
    }
    Ok(BleuReport {
        bleu_1: scores[0],
        bleu_2: scores[1],
        bleu_3: scores[2],
        bleu_4: scores[3],
        bp,
        precisions,
        hypothesis_len: c,
        reference_len: r,
    })
}
