//! Label-consuming baselines: rank models by accuracy on a small labeled
//! subset chosen either uniformly at random or by sample discrimination (SDS).

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::laf::mode;
use crate::matrix::{GroundTruth, MatrixError, PredictionMatrix};
use crate::ranking::{rank_from_scores, Ranking, RankingError};
use crate::synth::accuracy_on;

/// Share of models in each of the SDS top and bottom groups.
pub const SDS_GROUP_FRACTION: f64 = 0.27;
/// Share of samples, by discrimination score, SDS draws its budget from.
pub const SDS_POOL_FRACTION: f64 = 0.25;
pub const DEFAULT_REPETITIONS: usize = 50;
pub const DEFAULT_MAX_BUDGET: usize = 180;
pub const DEFAULT_BUDGET_STEP: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("{method}: budget {budget} exceeds the {available} samples available")]
    BudgetTooLarge {
        method: &'static str,
        budget: usize,
        available: usize,
    },
    #[error("{method}: budget must be positive")]
    ZeroBudget { method: &'static str },
    #[error("SDS needs at least 4 models, got {0}")]
    TooFewModels(usize),
    #[error("invalid budget plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Ranking(#[from] RankingError),
}

/// Labeling budgets to sweep and how often to repeat each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BudgetPlan {
    pub budgets: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
}

impl BudgetPlan {
    /// From the number of models up to 180 in steps of 5, 50 repetitions.
    pub fn standard(num_models: usize, seed: u64) -> Self {
        Self {
            budgets: budget_range(num_models, DEFAULT_MAX_BUDGET, DEFAULT_BUDGET_STEP),
            repetitions: DEFAULT_REPETITIONS,
            seed,
        }
    }

    pub fn validate(&self, num_samples: usize) -> Result<(), BaselineError> {
        if self.repetitions == 0 {
            return Err(BaselineError::Plan("repetitions must be positive".into()));
        }
        if self.budgets.is_empty() {
            return Err(BaselineError::Plan("no budgets".into()));
        }
        for &b in &self.budgets {
            if b == 0 {
                return Err(BaselineError::Plan("budgets must be positive".into()));
            }
            if b > num_samples {
                return Err(BaselineError::Plan(format!("budget {b} exceeds {num_samples} samples")));
            }
        }
        Ok(())
    }
}

/// `start, start + step, ...` up to and including `stop`.
pub fn budget_range(start: usize, stop: usize, step: usize) -> Vec<usize> {
    if step == 0 {
        return vec![start];
    }
    (start..=stop).step_by(step).collect()
}

/// Parses `start:stop:step` (step defaults to 5) or a comma-separated list.
pub fn parse_budgets(text: &str) -> Result<Vec<usize>, BaselineError> {
    let bad = || BaselineError::Plan(format!("cannot parse budgets {text:?}"));
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let (start, stop, step) = match parts.as_slice() {
            [a, b] => (num(a)?, num(b)?, DEFAULT_BUDGET_STEP),
            [a, b, c] => (num(a)?, num(b)?, num(c)?),
            _ => return Err(bad()),
        };
        if step == 0 || start > stop {
            return Err(bad());
        }
        Ok(budget_range(start, stop, step))
    } else {
        text.split(',').map(num).collect()
    }
}

fn check_budget(method: &'static str, budget: usize, available: usize) -> Result<(), BaselineError> {
    if budget == 0 {
        return Err(BaselineError::ZeroBudget { method });
    }
    if budget > available {
        return Err(BaselineError::BudgetTooLarge {
            method,
            budget,
            available,
        });
    }
    Ok(())
}

fn rank_on_subset(matrix: &PredictionMatrix, truth: &[u32], rows: &[usize]) -> Result<Ranking, BaselineError> {
    let acc = accuracy_on(matrix, truth, rows.iter().copied());
    Ok(rank_from_scores(matrix.model_names(), &acc)?)
}

/// Ranks models by accuracy on `budget` samples drawn uniformly without
/// replacement.
pub fn random_rank(
    matrix: &PredictionMatrix,
    truth: &GroundTruth,
    budget: usize,
    seed: u64,
) -> Result<Ranking, BaselineError> {
    check_budget("random", budget, matrix.num_samples())?;
    let y = truth.align(matrix)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = index::sample(&mut rng, matrix.num_samples(), budget).into_vec();
    rank_on_subset(matrix, &y, &rows)
}

/// Item-discrimination score of every sample.
///
/// Models are ordered by accuracy against the majority vote; the best and
/// worst `ceil(group_fraction * n)` form the top and bottom groups. A sample
/// scores the fraction of the top group matching its vote minus the fraction
/// of the bottom group doing so.
pub fn sds_scores_with(matrix: &PredictionMatrix, group_fraction: f64) -> Result<Vec<f64>, BaselineError> {
    let n = matrix.num_models();
    if n < 4 {
        return Err(BaselineError::TooFewModels(n));
    }
    let pseudo: Vec<u32> = matrix.rows().map(mode).collect();
    let pseudo_acc = accuracy_on(matrix, &pseudo, 0..matrix.num_samples());
    let order = rank_from_scores(matrix.model_names(), &pseudo_acc)?;
    let column = |name: &str| {
        matrix
            .model_names()
            .iter()
            .position(|m| m == name)
            .expect("known model")
    };
    let group = ((group_fraction * n as f64).ceil() as usize).clamp(1, n / 2);
    let top: Vec<usize> = order.order()[..group].iter().map(|m| column(m)).collect();
    let bottom: Vec<usize> = order.order()[n - group..].iter().map(|m| column(m)).collect();
    let share =
        |row: &[u32], y: u32, cols: &[usize]| cols.iter().filter(|&&j| row[j] == y).count() as f64 / cols.len() as f64;
    Ok(matrix
        .rows()
        .zip(&pseudo)
        .map(|(row, &y)| share(row, y, &top) - share(row, y, &bottom))
        .collect())
}

pub fn sds_scores(matrix: &PredictionMatrix) -> Result<Vec<f64>, BaselineError> {
    sds_scores_with(matrix, SDS_GROUP_FRACTION)
}

/// Row indices of the `ceil(0.25 m)` most discriminating samples, best first;
/// equal scores are ordered by sample id.
pub fn sds_pool(matrix: &PredictionMatrix) -> Result<Vec<usize>, BaselineError> {
    let scores = sds_scores(matrix)?;
    let ids = matrix.sample_ids();
    let mut rows: Vec<usize> = (0..matrix.num_samples()).collect();
    rows.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| ids[a].cmp(&ids[b])));
    rows.truncate(sds_pool_size(matrix.num_samples()));
    Ok(rows)
}

pub fn sds_pool_size(num_samples: usize) -> usize {
    (SDS_POOL_FRACTION * num_samples as f64).ceil() as usize
}

/// Ranks models by accuracy on `budget` samples drawn uniformly from the SDS pool.
pub fn sds_rank(
    matrix: &PredictionMatrix,
    truth: &GroundTruth,
    budget: usize,
    seed: u64,
) -> Result<Ranking, BaselineError> {
    check_budget("sds", budget, sds_pool_size(matrix.num_samples()))?;
    let y = truth.align(matrix)?;
    let pool = sds_pool(matrix)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<usize> = index::sample(&mut rng, pool.len(), budget)
        .into_iter()
        .map(|k| pool[k])
        .collect();
    rank_on_subset(matrix, &y, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ground_truth_ranking;
    use crate::synth::{generate, SynthSpec};

    fn ids(m: usize) -> Vec<String> {
        (1..=m).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn random_with_full_budget_is_the_truth_ranking() {
        let (m, t) = generate(&SynthSpec::spaced(6, 300, 5, 0.3, 0.9, 4)).unwrap();
        let r = random_rank(&m, &t, m.num_samples(), 17).unwrap();
        assert_eq!(r, ground_truth_ranking(&m, &t).unwrap());
    }

    #[test]
    fn random_perfect_versus_hopeless() {
        let m = PredictionMatrix::from_rows(&[vec![0, 1], vec![1, 0], vec![1, 0]], 2).unwrap();
        let t = GroundTruth::new(ids(3), vec![0, 1, 1]).unwrap();
        let r = random_rank(&m, &t, 3, 0).unwrap();
        assert_eq!(r.rank_of("model_1"), Some(1.0));
        assert_eq!(r.rank_of("model_2"), Some(2.0));
    }

    #[test]
    fn random_is_seeded() {
        let (m, t) = generate(&SynthSpec::spaced(8, 400, 4, 0.4, 0.8, 2)).unwrap();
        assert_eq!(random_rank(&m, &t, 30, 5).unwrap(), random_rank(&m, &t, 30, 5).unwrap());
        assert_eq!(
            random_rank(&m, &t, 401, 5).unwrap_err(),
            BaselineError::BudgetTooLarge {
                method: "random",
                budget: 401,
                available: 400
            }
        );
        assert!(random_rank(&m, &t, 0, 5).is_err());
    }

    /// Eight models whose pseudo accuracies order them m1 > m2 > ... > m8,
    /// so the top group is {m1, m2, m3} and the bottom group {m6, m7, m8}.
    /// Model j is the lone dissenter on 2j rows; the probe row goes last.
    fn eight_model_matrix(probe: Vec<u32>) -> (PredictionMatrix, usize) {
        let mut rows = Vec::new();
        for j in 0..8 {
            for _ in 0..2 * (j + 1) {
                rows.push((0..8).map(|k| (k == j) as u32).collect::<Vec<u32>>());
            }
        }
        rows.push(probe);
        let probe_row = rows.len() - 1;
        (PredictionMatrix::from_rows(&rows, 3).unwrap(), probe_row)
    }

    #[test]
    fn sds_score_extremes_and_fraction() {
        // the vote on every probe row is 0
        let (m, i) = eight_model_matrix(vec![0, 0, 0, 0, 0, 1, 2, 1]);
        assert_eq!(sds_scores(&m).unwrap()[i], 1.0);
        let (m, i) = eight_model_matrix(vec![0, 0, 2, 0, 0, 0, 1, 2]);
        let s = sds_scores(&m).unwrap()[i];
        assert!((s - 1.0 / 3.0).abs() < 1e-15, "{s}");
        let (m, i) = eight_model_matrix(vec![0, 0, 0, 1, 2, 0, 0, 0]);
        assert_eq!(sds_scores(&m).unwrap()[i], 0.0);
    }

    #[test]
    fn sds_score_matches_brute_force_group_count() {
        let (m, _) = generate(&SynthSpec::spaced(8, 200, 4, 0.3, 0.9, 8)).unwrap();
        let scores = sds_scores(&m).unwrap();
        // independent recount: explicit pseudo-accuracy sort, groups of 3
        let votes: Vec<u32> = m
            .rows()
            .map(|r| {
                let mut counts = [0usize; 4];
                r.iter().for_each(|&l| counts[l as usize] += 1);
                (0..4).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap() as u32
            })
            .collect();
        let mut acc: Vec<(usize, usize)> = (0..8)
            .map(|j| (j, (0..200).filter(|&i| m.get(i, j) == votes[i]).count()))
            .collect();
        acc.sort_by(|a, b| b.1.cmp(&a.1).then(m.model_names()[a.0].cmp(&m.model_names()[b.0])));
        let top: Vec<usize> = acc[..3].iter().map(|a| a.0).collect();
        let bottom: Vec<usize> = acc[5..].iter().map(|a| a.0).collect();
        for i in 0..200 {
            let t = top.iter().filter(|&&j| m.get(i, j) == votes[i]).count() as f64 / 3.0;
            let b = bottom.iter().filter(|&&j| m.get(i, j) == votes[i]).count() as f64 / 3.0;
            assert_eq!(scores[i], t - b, "sample {i}");
        }
    }

    #[test]
    fn sds_needs_four_models() {
        let m = PredictionMatrix::from_rows(&[vec![0, 1, 1]], 2).unwrap();
        assert_eq!(sds_scores(&m).unwrap_err(), BaselineError::TooFewModels(3));
    }

    #[test]
    fn sds_full_pool_ignores_the_seed() {
        let (m, t) = generate(&SynthSpec::spaced(10, 400, 5, 0.4, 0.9, 3)).unwrap();
        let budget = sds_pool_size(400);
        assert_eq!(budget, 100);
        let a = sds_rank(&m, &t, budget, 1).unwrap();
        let b = sds_rank(&m, &t, budget, 999).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            sds_rank(&m, &t, budget + 1, 1),
            Err(BaselineError::BudgetTooLarge { method: "sds", .. })
        ));
    }

    #[test]
    fn sds_scores_follow_row_permutation() {
        let (m, _) = generate(&SynthSpec::spaced(6, 50, 3, 0.4, 0.9, 6)).unwrap();
        let order: Vec<usize> = (0..50).rev().collect();
        let p = m.select_rows(&order).unwrap();
        let a = sds_scores(&m).unwrap();
        let b = sds_scores(&p).unwrap();
        for (k, &i) in order.iter().enumerate() {
            assert_eq!(b[k], a[i]);
        }
    }

    #[test]
    fn budget_parsing() {
        assert_eq!(parse_budgets("30:50:5").unwrap(), vec![30, 35, 40, 45, 50]);
        assert_eq!(parse_budgets("30:40").unwrap(), vec![30, 35, 40]);
        assert_eq!(parse_budgets("10,20").unwrap(), vec![10, 20]);
        assert!(parse_budgets("30:10:5").is_err());
        assert!(parse_budgets("a:b").is_err());
        let plan = BudgetPlan::standard(30, 0);
        assert_eq!(plan.budgets.first(), Some(&30));
        assert_eq!(plan.budgets.last(), Some(&180));
        assert_eq!(plan.repetitions, 50);
    }
}
