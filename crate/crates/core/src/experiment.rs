//! Head-to-head evaluation of LaF against the labeled baselines.
//!
//! LaF runs once and is reported with budget 0. Every baseline runs once per
//! (budget, repetition) with a seed derived from the base seed, so repetitions
//! are independent and may run in parallel while the report stays
//! byte-identical.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::baselines::{random_rank, sds_pool_size, sds_rank, BaselineError, BudgetPlan};
use crate::laf::{run_laf, LafConfig, LafError};
use crate::matrix::{GroundTruth, MatrixError, PredictionMatrix};
use crate::metrics::{ground_truth_ranking, jaccard_topk, kendall, spearman, MetricError, RankPair, DEFAULT_TOP_K};
use crate::ranking::Ranking;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown method {0:?} (expected laf, random or sds)")]
    UnknownMethod(String),
    #[error("no methods given")]
    NoMethods,
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Laf(#[from] LafError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Laf,
    Random,
    Sds,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Laf => "laf",
            Method::Random => "random",
            Method::Sds => "sds",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Method::Laf => 0,
            Method::Random => 1,
            Method::Sds => 2,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "laf" => Ok(Method::Laf),
            "random" => Ok(Method::Random),
            "sds" => Ok(Method::Sds),
            other => Err(ExperimentError::UnknownMethod(other.to_owned())),
        }
    }
}

/// Comma-separated method list; duplicates are dropped and the result sorted
/// into report order.
pub fn parse_methods(text: &str) -> Result<Vec<Method>, ExperimentError> {
    let mut methods = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<Method>, _>>()?;
    methods.sort_unstable();
    methods.dedup();
    if methods.is_empty() {
        return Err(ExperimentError::NoMethods);
    }
    Ok(methods)
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub methods: Vec<Method>,
    pub plan: BudgetPlan,
    /// Jaccard cutoffs; those above the number of models are dropped.
    pub top_k: Vec<usize>,
    pub laf: LafConfig,
}

impl EvalConfig {
    pub fn new(methods: Vec<Method>, plan: BudgetPlan) -> Self {
        Self {
            methods,
            plan,
            top_k: DEFAULT_TOP_K.to_vec(),
            laf: LafConfig::default(),
        }
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one baseline run.
pub fn derive_seed(base: u64, method: Method, budget: usize, repetition: usize) -> u64 {
    mix(mix(mix(base ^ method.tag()) ^ budget as u64) ^ repetition as u64)
}

/// Scores of one ranking against the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub method: Method,
    pub budget: usize,
    pub repetition: usize,
    pub spearman: f64,
    pub kendall: f64,
    /// One entry per cutoff in [`EvalReport::top_k`].
    pub jaccard: Vec<f64>,
}

/// Mean and population standard deviation over the repetitions of one
/// (method, budget) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub method: Method,
    pub budget: usize,
    pub repetitions: usize,
    pub spearman: (f64, f64),
    pub kendall: (f64, f64),
    pub jaccard: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub top_k: Vec<usize>,
    /// Ordered by method, budget, repetition.
    pub rows: Vec<EvalRow>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EvalReport {
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut out = Vec::new();
        let mut start = 0;
        while start < self.rows.len() {
            let key = (self.rows[start].method, self.rows[start].budget);
            let end = start
                + self.rows[start..]
                    .iter()
                    .take_while(|r| (r.method, r.budget) == key)
                    .count();
            let cell = &self.rows[start..end];
            out.push(AggregateRow {
                method: key.0,
                budget: key.1,
                repetitions: cell.len(),
                spearman: mean_std(cell.iter().map(|r| r.spearman)),
                kendall: mean_std(cell.iter().map(|r| r.kendall)),
                jaccard: (0..self.top_k.len())
                    .map(|k| mean_std(cell.iter().map(move |r| r.jaccard[k])))
                    .collect(),
            });
            start = end;
        }
        out
    }

    /// Mean Spearman of a (method, budget) cell.
    pub fn mean_spearman(&self, method: Method, budget: usize) -> Option<f64> {
        self.aggregate()
            .into_iter()
            .find(|a| a.method == method && a.budget == budget)
            .map(|a| a.spearman.0)
    }

    pub fn repetitions_csv(&self) -> String {
        let mut out = String::from("method,budget,repetition,spearman,kendall");
        for k in &self.top_k {
            out.push_str(&format!(",jaccard_{k}"));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}",
                r.method, r.budget, r.repetition, r.spearman, r.kendall
            ));
            for j in &r.jaccard {
                out.push_str(&format!(",{j}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn aggregate_csv(&self) -> String {
        let mut out = String::from("method,budget,repetitions,spearman_mean,spearman_std,kendall_mean,kendall_std");
        for k in &self.top_k {
            out.push_str(&format!(",jaccard_{k}_mean,jaccard_{k}_std"));
        }
        out.push('\n');
        for a in self.aggregate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}",
                a.method, a.budget, a.repetitions, a.spearman.0, a.spearman.1, a.kendall.0, a.kendall.1
            ));
            for (m, s) in &a.jaccard {
                out.push_str(&format!(",{m},{s}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Correlation of an estimate with the truth. A ranking that ties every
/// model carries no order, so an undefined correlation counts as 0.
fn score(truth: &Ranking, estimate: &Ranking, top_k: &[usize]) -> Result<(f64, f64, Vec<f64>), MetricError> {
    let pair = RankPair::new(truth, estimate)?;
    let or_zero = |r: Result<f64, MetricError>| match r {
        Err(MetricError::Undefined) => Ok(0.0),
        other => other,
    };
    let rho = or_zero(spearman(&pair))?;
    let tau = or_zero(kendall(&pair))?;
    let jac = top_k
        .iter()
        .map(|&k| jaccard_topk(&pair, k))
        .collect::<Result<_, _>>()?;
    Ok((rho, tau, jac))
}

fn check_feasible(matrix: &PredictionMatrix, config: &EvalConfig) -> Result<(), ExperimentError> {
    if config.methods.is_empty() {
        return Err(ExperimentError::NoMethods);
    }
    if !config.methods.iter().any(|&m| m != Method::Laf) {
        return Ok(());
    }
    let plan = &config.plan;
    if plan.repetitions == 0 || plan.budgets.is_empty() {
        plan.validate(matrix.num_samples())?;
    }
    for &method in &config.methods {
        let available = match method {
            Method::Laf => continue,
            Method::Random => matrix.num_samples(),
            Method::Sds => sds_pool_size(matrix.num_samples()),
        };
        if method == Method::Sds && matrix.num_models() < 4 {
            return Err(BaselineError::TooFewModels(matrix.num_models()).into());
        }
        for &budget in &plan.budgets {
            if budget == 0 {
                return Err(BaselineError::ZeroBudget {
                    method: method.as_str(),
                }
                .into());
            }
            if budget > available {
                return Err(BaselineError::BudgetTooLarge {
                    method: method.as_str(),
                    budget,
                    available,
                }
                .into());
            }
        }
    }
    Ok(())
}

/// Runs every requested method and scores it against the ground-truth
/// accuracy ranking.
pub fn run_eval(
    matrix: &PredictionMatrix,
    truth: &GroundTruth,
    config: &EvalConfig,
) -> Result<EvalReport, ExperimentError> {
    check_feasible(matrix, config)?;
    let reference = ground_truth_ranking(matrix, truth)?;
    let top_k: Vec<usize> = config
        .top_k
        .iter()
        .copied()
        .filter(|&k| k >= 1 && k <= matrix.num_models())
        .collect();

    let mut tasks = Vec::new();
    for &method in &config.methods {
        if method == Method::Laf {
            tasks.push((method, 0, 0));
            continue;
        }
        for &budget in &config.plan.budgets {
            for rep in 0..config.plan.repetitions {
                tasks.push((method, budget, rep));
            }
        }
    }

    let rows = tasks
        .par_iter()
        .map(|&(method, budget, repetition)| -> Result<EvalRow, ExperimentError> {
            let seed = derive_seed(config.plan.seed, method, budget, repetition);
            let estimate = match method {
                Method::Laf => run_laf(matrix, &config.laf)?.ranking,
                Method::Random => random_rank(matrix, truth, budget, seed)?,
                Method::Sds => sds_rank(matrix, truth, budget, seed)?,
            };
            let (spearman, kendall, jaccard) = score(&reference, &estimate, &top_k)?;
            Ok(EvalRow {
                method,
                budget,
                repetition,
                spearman,
                kendall,
                jaccard,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport { top_k, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthSpec};

    fn plan(budgets: Vec<usize>, repetitions: usize) -> BudgetPlan {
        BudgetPlan {
            budgets,
            repetitions,
            seed: 7,
        }
    }

    #[test]
    fn methods_parse_and_sort() {
        assert_eq!(
            parse_methods("sds, laf,random,laf").unwrap(),
            [Method::Laf, Method::Random, Method::Sds]
        );
        assert!(matches!(parse_methods("laf,ces"), Err(ExperimentError::UnknownMethod(m)) if m == "ces"));
        assert!(matches!(parse_methods(""), Err(ExperimentError::NoMethods)));
    }

    #[test]
    fn seeds_differ_across_cells() {
        let a = derive_seed(1, Method::Random, 30, 0);
        assert_ne!(a, derive_seed(1, Method::Random, 30, 1));
        assert_ne!(a, derive_seed(1, Method::Random, 35, 0));
        assert_ne!(a, derive_seed(1, Method::Sds, 30, 0));
        assert_ne!(a, derive_seed(2, Method::Random, 30, 0));
        assert_eq!(a, derive_seed(1, Method::Random, 30, 0));
    }

    #[test]
    fn mean_and_population_std() {
        let (m, s) = mean_std([1.0, 3.0].into_iter());
        assert_eq!((m, s), (2.0, 1.0));
    }

    #[test]
    fn report_shape_and_order() {
        let (m, t) = generate(&SynthSpec::spaced(6, 400, 4, 0.5, 0.9, 3)).unwrap();
        let config = EvalConfig::new(vec![Method::Laf, Method::Random, Method::Sds], plan(vec![20, 40], 3));
        let report = run_eval(&m, &t, &config).unwrap();
        assert_eq!(report.top_k, [1, 3, 5]);
        assert_eq!(report.rows.len(), 1 + 2 * 2 * 3);
        assert_eq!((report.rows[0].method, report.rows[0].budget), (Method::Laf, 0));
        let keys: Vec<_> = report.rows.iter().map(|r| (r.method, r.budget, r.repetition)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        let agg = report.aggregate();
        assert_eq!(agg.len(), 5);
        assert_eq!(agg[0].repetitions, 1);
        assert_eq!(agg[0].spearman.1, 0.0);
        let csv = report.aggregate_csv();
        assert!(csv.starts_with("method,budget,repetitions,spearman_mean,spearman_std"));
        assert_eq!(csv.lines().count(), 6);
        assert!(report.repetitions_csv().lines().nth(1).unwrap().starts_with("laf,0,0,"));
        assert_eq!(run_eval(&m, &t, &config).unwrap(), report);
    }

    #[test]
    fn infeasible_budget_names_method() {
        let (m, t) = generate(&SynthSpec::spaced(6, 100, 4, 0.5, 0.9, 3)).unwrap();
        let config = EvalConfig::new(vec![Method::Random, Method::Sds], plan(vec![10, 30], 2));
        let err = run_eval(&m, &t, &config).unwrap_err().to_string();
        assert!(err.contains("sds") && err.contains("30") && err.contains("25"), "{err}");
        let config = EvalConfig::new(vec![Method::Random], plan(vec![101], 2));
        let err = run_eval(&m, &t, &config).unwrap_err().to_string();
        assert!(err.contains("random") && err.contains("101"), "{err}");
    }

    #[test]
    fn laf_only_ignores_the_plan() {
        let (m, t) = generate(&SynthSpec::spaced(5, 200, 3, 0.5, 0.9, 3)).unwrap();
        let config = EvalConfig::new(vec![Method::Laf], plan(vec![], 0));
        assert_eq!(run_eval(&m, &t, &config).unwrap().rows.len(), 1);
    }
}
