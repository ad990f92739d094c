use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// One rater's judgment of one generated meme.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub meme_id: String,
    pub rater_id: String,
    pub coherence: u8,
    pub relevance: u8,
    #[serde(with = "likes_flag")]
    pub likes: bool,
}

mod likes_flag {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match String::deserialize(d)?.trim() {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            other => Err(D::Error::custom(format!("likes must be 0 or 1, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Coherence,
    Relevance,
    Likes,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Coherence, Metric::Relevance, Metric::Likes];

    fn of(self, r: &RatingRecord) -> u8 {
        match self {
            Metric::Coherence => r.coherence,
            Metric::Relevance => r.relevance,
            Metric::Likes => u8::from(r.likes),
        }
    }
}

impl FromStr for Metric {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "coherence" => Ok(Metric::Coherence),
            "relevance" => Ok(Metric::Relevance),
            "likes" => Ok(Metric::Likes),
            _ => Err(EvalError::UnknownMetric(s.to_string())),
        }
    }
}

fn check_range(r: &RatingRecord) -> Result<(), EvalError> {
    for (field, value) in [("coherence", r.coherence), ("relevance", r.relevance)] {
        if !(1..=4).contains(&value) {
            return Err(EvalError::ScoreOutOfRange {
                meme_id: r.meme_id.clone(),
                field,
                value,
            });
        }
    }
    Ok(())
}

/// Reads `meme_id,rater_id,coherence,relevance,likes` rows.
pub fn read_ratings<R: Read>(reader: R) -> Result<Vec<RatingRecord>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: RatingRecord = row?;
        check_range(&r)?;
        out.push(r);
    }
    Ok(out)
}

/// Records grouped by meme, raters sorted by id.
fn by_meme(records: &[RatingRecord]) -> BTreeMap<&str, Vec<&RatingRecord>> {
    let mut groups: BTreeMap<&str, Vec<&RatingRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.meme_id.as_str()).or_default().push(r);
    }
    for g in groups.values_mut() {
        g.sort_by(|a, b| a.rater_id.cmp(&b.rater_id).then_with(|| a.cmp_scores(b)));
    }
    groups
}

impl RatingRecord {
    fn cmp_scores(&self, other: &Self) -> std::cmp::Ordering {
        (self.coherence, self.relevance, self.likes).cmp(&(other.coherence, other.relevance, other.likes))
    }
}

fn complete(records: &[RatingRecord]) -> Result<BTreeMap<&str, Vec<&RatingRecord>>, EvalError> {
    let groups = by_meme(records);
    for (id, g) in &groups {
        if g.len() != 2 {
            return Err(EvalError::IncompleteRatings {
                meme_id: id.to_string(),
                count: g.len(),
            });
        }
    }
    for r in records {
        check_range(r)?;
    }
    Ok(groups)
}

/// Final per-meme scores: the mean of the two raters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemeScore {
    pub meme_id: String,
    pub coherence: f64,
    pub relevance: f64,
    pub likes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatingSummary {
    pub coherence: f64,
    pub relevance: f64,
    /// Fraction of all records with `likes = 1`.
    pub user_likes: f64,
    pub memes: usize,
    #[serde(skip)]
    pub per_meme: Vec<MemeScore>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

fn meme_scores(groups: &BTreeMap<&str, Vec<&RatingRecord>>) -> Vec<MemeScore> {
    groups
        .iter()
        .map(|(id, g)| MemeScore {
            meme_id: id.to_string(),
            coherence: mean(g.iter().map(|r| r.coherence as f64)),
            relevance: mean(g.iter().map(|r| r.relevance as f64)),
            likes: mean(g.iter().map(|r| u8::from(r.likes) as f64)),
        })
        .collect()
}

/// Every meme must have exactly two records.
pub fn aggregate_ratings(records: &[RatingRecord]) -> Result<RatingSummary, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let groups = complete(records)?;
    let per_meme = meme_scores(&groups);
    Ok(RatingSummary {
        coherence: mean(per_meme.iter().map(|m| m.coherence)),
        relevance: mean(per_meme.iter().map(|m| m.relevance)),
        user_likes: records.iter().filter(|r| r.likes).count() as f64 / records.len() as f64,
        memes: per_meme.len(),
        per_meme,
    })
}

/// Label pairs for kappa, one per meme; the rater with the smaller id comes
/// first.
pub fn rating_pairs(records: &[RatingRecord], metric: Metric) -> Result<Vec<(u8, u8)>, EvalError> {
    let groups = complete(records)?;
    Ok(groups.values().map(|g| (metric.of(g[0]), metric.of(g[1]))).collect())
}

/// Counts per half-point bucket, ascending.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Histogram {
    pub buckets: Vec<(f64, usize)>,
}

impl Histogram {
    fn from_scores(scores: impl Iterator<Item = f64>) -> Self {
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for s in scores {
            *counts.entry((s * 2.0).round() as i64).or_insert(0) += 1;
        }
        Self {
            buckets: counts.into_iter().map(|(k, c)| (k as f64 / 2.0, c)).collect(),
        }
    }

    pub fn count(&self, score: f64) -> usize {
        self.buckets.iter().find(|(s, _)| *s == score).map_or(0, |b| b.1)
    }

    pub fn total(&self) -> usize {
        self.buckets.iter().map(|b| b.1).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ScoreDistribution {
    pub coherence: Histogram,
    pub relevance: Histogram,
    pub likes: Histogram,
}

/// Histograms of final per-meme scores. Memes with any number of records are
/// averaged over what they have.
pub fn score_distribution(records: &[RatingRecord]) -> ScoreDistribution {
    let scores = meme_scores(&by_meme(records));
    ScoreDistribution {
        coherence: Histogram::from_scores(scores.iter().map(|m| m.coherence)),
        relevance: Histogram::from_scores(scores.iter().map(|m| m.relevance)),
        likes: Histogram::from_scores(scores.iter().map(|m| m.likes)),
    }
}

/// Map from meme id to record count, for diagnostics.
pub fn records_per_meme(records: &[RatingRecord]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for r in records {
        *m.entry(r.meme_id.as_str()).or_insert(0) += 1;
    }
    m
}
