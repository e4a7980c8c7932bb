//! Model rankings with fractional ranks, and their JSON/CSV forms.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RankingError {
    #[error("{names} names but {scores} scores")]
    LengthMismatch { names: usize, scores: usize },
    #[error("score for model {0:?} is NaN")]
    NanScore(String),
    #[error("empty ranking")]
    Empty,
    #[error("duplicate model name {0:?}")]
    DuplicateModel(String),
    #[error("invalid ranking file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub model: String,
    pub score: f64,
    pub rank: f64,
}

/// Models sorted by descending score. Tied scores share the mean of the
/// ranks they span and are listed by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ranking {
    entries: Vec<RankEntry>,
}

impl Ranking {
    pub fn entries(&self) -> &[RankEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rank_of(&self, model: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.model == model).map(|e| e.rank)
    }

    pub fn score_of(&self, model: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.model == model).map(|e| e.score)
    }

    /// Model names from best to worst.
    pub fn order(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.model.as_str()).collect()
    }

    /// Reassembles a ranking read from a file; entries are re-sorted but ranks
    /// are taken as given.
    pub fn from_entries(mut entries: Vec<RankEntry>) -> Result<Self, RankingError> {
        if entries.is_empty() {
            return Err(RankingError::Empty);
        }
        for e in &entries {
            if e.score.is_nan() || e.rank.is_nan() {
                return Err(RankingError::NanScore(e.model.clone()));
            }
        }
        entries.sort_by(|a, b| {
            a.rank
                .total_cmp(&b.rank)
                .then_with(|| b.score.total_cmp(&a.score))
                .then_with(|| a.model.cmp(&b.model))
        });
        let mut names: Vec<&str> = entries.iter().map(|e| e.model.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(RankingError::DuplicateModel(w[0].to_owned()));
        }
        Ok(Self { entries })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,score,rank\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", e.model, e.score, e.rank));
        }
        out
    }
}

/// Sorts models by descending score and assigns average ranks to ties.
pub fn rank_from_scores<S: AsRef<str>>(names: &[S], scores: &[f64]) -> Result<Ranking, RankingError> {
    if names.len() != scores.len() {
        return Err(RankingError::LengthMismatch {
            names: names.len(),
            scores: scores.len(),
        });
    }
    if names.is_empty() {
        return Err(RankingError::Empty);
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(RankingError::NanScore(names[i].as_ref().to_owned()));
    }
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| names[a].as_ref().cmp(names[b].as_ref()))
    });
    let mut entries = Vec::with_capacity(order.len());
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            entries.push(RankEntry {
                model: names[i].as_ref().to_owned(),
                score: scores[i],
                rank,
            });
        }
        start = end;
    }
    let mut seen: Vec<&str> = names.iter().map(AsRef::as_ref).collect();
    seen.sort_unstable();
    if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
        return Err(RankingError::DuplicateModel(w[0].to_owned()));
    }
    Ok(Ranking { entries })
}

/// A ranking plus how it was obtained, as written by the `rank` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub converged: bool,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    pub ranking: Ranking,
}

impl RankingReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// CSV carries only the ranking; metadata lives in the JSON form.
    pub fn to_csv(&self) -> String {
        self.ranking.to_csv()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RankingFile {
    Report(RankingReport),
    Bare(Vec<RankEntry>),
}

/// Reads a ranking written as a report object, a bare JSON array, or
/// `model,score,rank` CSV.
pub fn parse_ranking(text: &str) -> Result<Ranking, RankingError> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') || trimmed.starts_with('[') {
        let file: RankingFile = serde_json::from_str(text).map_err(|e| RankingError::Format(e.to_string()))?;
        return match file {
            RankingFile::Report(r) => Ranking::from_entries(r.ranking.entries),
            RankingFile::Bare(entries) => Ranking::from_entries(entries),
        };
    }
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| RankingError::Format(e.to_string()))?
        .clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["model", "score", "rank"] {
        return Err(RankingError::Format("expected header model,score,rank".into()));
    }
    let mut entries = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| RankingError::Format(e.to_string()))?;
        let num = |k: usize| -> Result<f64, RankingError> {
            rec[k]
                .trim()
                .parse()
                .map_err(|_| RankingError::Format(format!("model {}: bad number {:?}", &rec[0], &rec[k])))
        };
        entries.push(RankEntry {
            model: rec[0].trim().to_owned(),
            score: num(1)?,
            rank: num(2)?,
        });
    }
    Ranking::from_entries(entries)
}
