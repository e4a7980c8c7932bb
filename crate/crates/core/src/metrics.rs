//! Agreement between an estimated ranking and the ground-truth ranking:
//! Spearman's ρ, Kendall's τ-b, top-k Jaccard similarity, and a permutation
//! p-value for ρ.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{GroundTruth, MatrixError, PredictionMatrix};
use crate::ranking::{rank_from_scores, Ranking, RankingError};
use crate::synth::realized_accuracy;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("rankings cover different models; only in truth: [{}], only in estimate: [{}]", only_in_truth.join(", "), only_in_estimate.join(", "))]
    NameMismatch {
        only_in_truth: Vec<String>,
        only_in_estimate: Vec<String>,
    },
    #[error("need at least 2 models, got {0}")]
    TooFew(usize),
    #[error("correlation is undefined: a ranking has all models tied")]
    Undefined,
    #[error("k = {k} outside 1..={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Ranking(#[from] RankingError),
}

/// Two rank vectors over the same models, aligned by model name.
#[derive(Debug, Clone, PartialEq)]
pub struct RankPair {
    names: Vec<String>,
    truth: Vec<f64>,
    estimate: Vec<f64>,
}

impl RankPair {
    pub fn new(truth: &Ranking, estimate: &Ranking) -> Result<Self, MetricError> {
        let t: BTreeSet<&str> = truth.entries().iter().map(|e| e.model.as_str()).collect();
        let e: BTreeSet<&str> = estimate.entries().iter().map(|e| e.model.as_str()).collect();
        if t != e {
            return Err(MetricError::NameMismatch {
                only_in_truth: t.difference(&e).map(|s| s.to_string()).collect(),
                only_in_estimate: e.difference(&t).map(|s| s.to_string()).collect(),
            });
        }
        let est: HashMap<&str, f64> = estimate.entries().iter().map(|e| (e.model.as_str(), e.rank)).collect();
        let mut rows: Vec<(&str, f64)> = truth.entries().iter().map(|e| (e.model.as_str(), e.rank)).collect();
        rows.sort_by(|a, b| a.0.cmp(b.0));
        Ok(Self {
            names: rows.iter().map(|r| r.0.to_owned()).collect(),
            truth: rows.iter().map(|r| r.1).collect(),
            estimate: rows.iter().map(|r| est[r.0]).collect(),
        })
    }

    /// Pairs raw rank vectors under generated names.
    pub fn from_ranks(truth: Vec<f64>, estimate: Vec<f64>) -> Result<Self, MetricError> {
        if truth.len() != estimate.len() {
            return Err(MetricError::InvalidArgument(format!(
                "rank vectors differ in length: {} vs {}",
                truth.len(),
                estimate.len()
            )));
        }
        Ok(Self {
            names: (1..=truth.len()).map(|i| format!("m{i}")).collect(),
            truth,
            estimate,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn truth(&self) -> &[f64] {
        &self.truth
    }

    pub fn estimate(&self) -> &[f64] {
        &self.estimate
    }

    pub fn swapped(&self) -> Self {
        Self {
            names: self.names.clone(),
            truth: self.estimate.clone(),
            estimate: self.truth.clone(),
        }
    }
}

/// Models ranked by their exact accuracy against the true labels.
pub fn ground_truth_ranking(matrix: &PredictionMatrix, truth: &GroundTruth) -> Result<Ranking, MetricError> {
    let acc = realized_accuracy(matrix, truth)?;
    Ok(rank_from_scores(matrix.model_names(), &acc)?)
}

/// Product-moment correlation of two rank vectors in the raw-sum form.
fn rank_correlation(r: &[f64], s: &[f64]) -> Option<f64> {
    let n = r.len() as f64;
    let (mut sr, mut ss, mut srr, mut sss, mut srs) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&a, &b) in r.iter().zip(s) {
        sr += a;
        ss += b;
        srr += a * a;
        sss += b * b;
        srs += a * b;
    }
    let var_r = n * srr - sr * sr;
    let var_s = n * sss - ss * ss;
    if var_r <= 0.0 || var_s <= 0.0 {
        return None;
    }
    Some(((n * srs - sr * ss) / (var_r * var_s).sqrt()).clamp(-1.0, 1.0))
}

fn check_len(pair: &RankPair) -> Result<(), MetricError> {
    if pair.len() < 2 {
        Err(MetricError::TooFew(pair.len()))
    } else {
        Ok(())
    }
}

/// Spearman's ρ as the Pearson correlation of the two rank vectors.
pub fn spearman(pair: &RankPair) -> Result<f64, MetricError> {
    check_len(pair)?;
    rank_correlation(&pair.truth, &pair.estimate).ok_or(MetricError::Undefined)
}

/// Pair counts behind Kendall's τ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairCounts {
    pub concordant: u64,
    pub discordant: u64,
    /// Tied in the first vector only.
    pub ties_first: u64,
    /// Tied in the second vector only.
    pub ties_second: u64,
    pub ties_both: u64,
}

impl PairCounts {
    /// τ-b = (P - Q) / sqrt((P + Q + T)(P + Q + U)).
    pub fn tau_b(&self) -> Option<f64> {
        let pq = self.concordant + self.discordant;
        let left = pq + self.ties_first;
        let right = pq + self.ties_second;
        if left == 0 || right == 0 {
            return None;
        }
        let num = self.concordant as f64 - self.discordant as f64;
        Some(num / (left as f64 * right as f64).sqrt())
    }
}

fn tied_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut k = 0;
    while k < sorted.len() {
        let run = sorted[k..].iter().take_while(|&&v| v == sorted[k]).count() as u64;
        total += run * (run - 1) / 2;
        k += run as usize;
    }
    total
}

/// Merge sort counting strict inversions.
fn sort_counting_inversions(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_counting_inversions(&mut v[..mid], buf) + sort_counting_inversions(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Concordance counts in O(n log n) (Knight's algorithm).
pub fn pair_counts(x: &[f64], y: &[f64]) -> PairCounts {
    assert_eq!(x.len(), y.len());
    let n = x.len() as u64;
    let total = n * n.saturating_sub(1) / 2;
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let tied_x = tied_pairs(&xs);
    let mut tied_xy = 0u64;
    let mut k = 0;
    while k < idx.len() {
        let run = idx[k..]
            .iter()
            .take_while(|&&i| x[i] == x[idx[k]] && y[i] == y[idx[k]])
            .count() as u64;
        tied_xy += run * (run - 1) / 2;
        k += run as usize;
    }

    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = Vec::with_capacity(ys.len());
    let discordant = sort_counting_inversions(&mut ys, &mut buf);
    let tied_y = tied_pairs(&ys);

    let untied = total + tied_xy - tied_x - tied_y;
    PairCounts {
        concordant: untied - discordant,
        discordant,
        ties_first: tied_x - tied_xy,
        ties_second: tied_y - tied_xy,
        ties_both: tied_xy,
    }
}

/// Kendall's τ-b.
pub fn kendall(pair: &RankPair) -> Result<f64, MetricError> {
    check_len(pair)?;
    pair_counts(&pair.truth, &pair.estimate)
        .tau_b()
        .ok_or(MetricError::Undefined)
}

/// Intersection over union of the models ranked `<= k` on each side.
///
/// Tied groups straddling `k` are included whole when their shared rank is
/// `<= k` and excluded whole otherwise. If neither side has a model ranked
/// `<= k` the sets agree trivially and the result is 1.
pub fn jaccard_topk(pair: &RankPair, k: usize) -> Result<f64, MetricError> {
    let n = pair.len();
    if k == 0 || k > n {
        return Err(MetricError::KOutOfRange { k, n });
    }
    let limit = k as f64;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in pair.truth.iter().zip(&pair.estimate) {
        let (in_a, in_b) = (a <= limit, b <= limit);
        inter += (in_a && in_b) as usize;
        union += (in_a || in_b) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Largest model count for which [`spearman_pvalue`] enumerates every permutation.
pub const EXACT_PERMUTATION_LIMIT: usize = 7;
const EXTREME_SLACK: f64 = 1e-12;

/// Two-sided permutation p-value of Spearman's ρ.
///
/// Up to [`EXACT_PERMUTATION_LIMIT`] models every permutation of the estimate
/// is enumerated and `p = #{|ρ_π| >= |ρ|} / n!`. Beyond that, `permutations`
/// seeded shuffles give `p = (#{|ρ_π| >= |ρ|} + 1) / (permutations + 1)`.
pub fn spearman_pvalue(pair: &RankPair, permutations: usize, seed: u64) -> Result<f64, MetricError> {
    if permutations < 1000 {
        return Err(MetricError::InvalidArgument(format!(
            "need at least 1000 permutations, got {permutations}"
        )));
    }
    let observed = spearman(pair)?.abs();
    let threshold = observed - EXTREME_SLACK;
    let extreme = |perm: &[f64]| rank_correlation(&pair.truth, perm).is_some_and(|r| r.abs() >= threshold);

    let mut perm = pair.estimate.clone();
    if pair.len() <= EXACT_PERMUTATION_LIMIT {
        // Heap's algorithm.
        let n = perm.len();
        let mut c = vec![0usize; n];
        let mut hits = extreme(&perm) as u64;
        let mut total = 1u64;
        let mut i = 0;
        while i < n {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                hits += extreme(&perm) as u64;
                total += 1;
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        return Ok(hits as f64 / total as f64);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    for _ in 0..permutations {
        perm.shuffle(&mut rng);
        hits += extreme(&perm) as u64;
    }
    Ok((hits + 1) as f64 / (permutations + 1) as f64)
}

/// The `metrics` command's output object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub spearman: f64,
    pub kendall: f64,
    /// Keyed by `k` as a string; only `k <= n` appear.
    pub jaccard: BTreeMap<String, f64>,
    pub p_value: f64,
}

pub const DEFAULT_TOP_K: [usize; 4] = [1, 3, 5, 10];
pub const DEFAULT_PERMUTATIONS: usize = 10_000;

pub fn summarize(pair: &RankPair, ks: &[usize], permutations: usize, seed: u64) -> Result<MetricsSummary, MetricError> {
    let mut jaccard = BTreeMap::new();
    for &k in ks.iter().filter(|&&k| k <= pair.len()) {
        jaccard.insert(k.to_string(), jaccard_topk(pair, k)?);
    }
    Ok(MetricsSummary {
        spearman: spearman(pair)?,
        kendall: kendall(pair)?,
        jaccard,
        p_value: spearman_pvalue(pair, permutations, seed)?,
    })
}

impl MetricsSummary {
    /// JSON with `jaccard` keys in numeric order.
    pub fn to_json(&self) -> String {
        let mut keys: Vec<&String> = self.jaccard.keys().collect();
        keys.sort_by_key(|k| k.parse::<usize>().unwrap_or(usize::MAX));
        let jaccard: Vec<String> = keys
            .iter()
            .map(|k| {
                format!(
                    "    {}: {}",
                    serde_json::to_string(k).unwrap(),
                    json_num(self.jaccard[*k])
                )
            })
            .collect();
        format!(
            "{{\n  \"spearman\": {},\n  \"kendall\": {},\n  \"jaccard\": {{\n{}\n  }},\n  \"p_value\": {}\n}}\n",
            json_num(self.spearman),
            json_num(self.kendall),
            jaccard.join(",\n"),
            json_num(self.p_value)
        )
    }
}

fn json_num(v: f64) -> String {
    serde_json::to_string(&v).expect("finite metric")
}
