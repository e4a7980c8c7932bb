//! Labeling-free ranking: infer each model's specialty from predicted labels
//! alone and rank models by it.
//!
//! The likelihood follows the GLAD annotator model. For sample `i` with true
//! label `y`, model `j` predicts `y` with probability `σ(α_i β_j)` and any one
//! of the other `C - 1` labels with probability `(1 - σ(α_i β_j)) / (C - 1)`.
//! `α_i` is the easiness of the sample (larger is easier) and `β_j` the
//! specialty of the model (larger is better).
//!
//! The pipeline is prune → majority vote → initialize (α, β) from agreement
//! with the vote → EM, where the E-step computes a posterior over the true
//! label of every sample and the M-step runs backtracking gradient ascent on
//! the expected complete-data log-likelihood `Q`. Models are ranked by the
//! final `β`.
//!
//! Posteriors are only materialized for labels some model actually predicted
//! for a sample. All remaining labels have identical likelihood factors and
//! are carried as one aggregate `other` entry, which keeps `C = 1000` tasks
//! cheap without approximation.
//!
//! Every reduction uses [`FixedSum`], so results are bit-identical under any
//! permutation of samples or models and under duplication of all samples.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{prune, MatrixError, PredictionMatrix, PrunedMatrix};
use crate::numeric::{fixed_sum, FixedSum};
use crate::ranking::{rank_from_scores, Ranking, RankingError, RankingReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LafError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parameter shape mismatch: expected {expected_alpha} alpha and {expected_beta} beta values, got {alpha} and {beta}")]
    ParamShape {
        expected_alpha: usize,
        expected_beta: usize,
        alpha: usize,
        beta: usize,
    },
    #[error("posterior has {got} rows, matrix has {expected}")]
    PosteriorShape { expected: usize, got: usize },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Ranking(#[from] RankingError),
}

/// Prior over the true label of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prior {
    /// `1 / C` for every class.
    #[default]
    Uniform,
    /// Laplace-smoothed frequencies of the majority-vote labels.
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LafConfig {
    pub prior: Prior,
    /// Stop once `|(Q - Q_last) / Q_last|` falls to this value.
    pub convergence_tol: f64,
    pub max_outer_iters: usize,
    /// Gradient-ascent steps per M-step.
    pub m_step_inner_iters: usize,
    pub initial_step: f64,
    /// Halvings tried before an M-step gives up on the current direction.
    pub max_halvings: usize,
    /// `σ` is clamped to `[prob_floor, 1 - prob_floor]`.
    pub prob_floor: f64,
    /// Unused by the deterministic initialization; kept for reproducible reports.
    pub seed: Option<u64>,
}

impl Default for LafConfig {
    fn default() -> Self {
        Self {
            prior: Prior::Uniform,
            convergence_tol: 1e-5,
            max_outer_iters: 500,
            m_step_inner_iters: 25,
            initial_step: 0.1,
            max_halvings: 30,
            prob_floor: 1e-12,
            seed: None,
        }
    }
}

impl LafConfig {
    pub fn validate(&self) -> Result<(), LafError> {
        let positive = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(LafError::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive(self.convergence_tol, "convergence_tol")?;
        positive(self.initial_step, "initial_step")?;
        positive(self.prob_floor, "prob_floor")?;
        if self.prob_floor >= 0.5 {
            return Err(LafError::Config(format!(
                "prob_floor must be below 0.5, got {}",
                self.prob_floor
            )));
        }
        if self.max_outer_iters == 0 || self.m_step_inner_iters == 0 {
            return Err(LafError::Config("iteration caps must be positive".into()));
        }
        Ok(())
    }
}

/// Per-sample easiness `alpha` and per-model specialty `beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LafParams {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Posterior over the true label of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePosterior {
    /// Labels predicted by at least one model, ascending, with their posterior.
    pub candidates: Vec<(u32, f64)>,
    /// Number of labels nobody predicted for this sample.
    pub other_multiplicity: u32,
    /// Posterior of each one of those labels.
    pub other_prob: f64,
}

impl SamplePosterior {
    pub fn total(&self) -> f64 {
        self.candidates.iter().map(|&(_, p)| p).sum::<f64>() + self.other_mass()
    }

    pub fn other_mass(&self) -> f64 {
        self.other_prob * self.other_multiplicity as f64
    }

    pub fn prob_of(&self, label: u32) -> f64 {
        match self.candidates.binary_search_by_key(&label, |&(l, _)| l) {
            Ok(k) => self.candidates[k].1,
            Err(_) => self.other_prob,
        }
    }
}

/// E-step output: one posterior per retained sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTable {
    pub rows: Vec<SamplePosterior>,
    /// Observed-data log-likelihood `log p(predictions | θ)` at the
    /// parameters the table was computed from.
    pub log_likelihood: f64,
}

/// Majority-vote label per retained sample; ties go to the smaller label.
pub fn majority_vote(pruned: &PrunedMatrix) -> Vec<u32> {
    pruned.matrix().rows().map(mode).collect()
}

pub(crate) fn mode(row: &[u32]) -> u32 {
    let mut sorted = row.to_vec();
    sorted.sort_unstable();
    let (mut best, mut best_count) = (sorted[0], 0);
    let mut k = 0;
    while k < sorted.len() {
        let run = sorted[k..].iter().take_while(|&&l| l == sorted[k]).count();
        if run > best_count {
            best = sorted[k];
            best_count = run;
        }
        k += run;
    }
    best
}

/// Initial parameters from agreement with the pseudo labels.
///
/// `beta_j` is model `j`'s accuracy against the pseudo labels. `alpha_i` is the
/// fraction of models agreeing with sample `i`'s pseudo label, so that larger
/// `alpha` means an easier sample, matching the direction of `σ(α β)`.
pub fn init_params(pruned: &PrunedMatrix, pseudo: &[u32]) -> LafParams {
    let matrix = pruned.matrix();
    let (m, n) = (matrix.num_samples(), matrix.num_models());
    assert_eq!(pseudo.len(), m, "one pseudo label per retained sample");
    let mut hits = vec![0usize; n];
    let alpha = matrix
        .rows()
        .zip(pseudo)
        .map(|(row, &y)| {
            let mut mismatched = 0;
            for (j, &l) in row.iter().enumerate() {
                if l == y {
                    hits[j] += 1;
                } else {
                    mismatched += 1;
                }
            }
            1.0 - mismatched as f64 / n as f64
        })
        .collect();
    let beta = hits.iter().map(|&h| h as f64 / m as f64).collect();
    LafParams { alpha, beta }
}

#[derive(Debug, Clone, Copy)]
struct Link {
    log_right: f64,
    log_wrong: f64,
    prob: f64,
    active: bool,
}

#[derive(Debug, Clone, Copy)]
struct OtherClasses {
    multiplicity: u32,
    /// log of the prior mass of all unpredicted labels together.
    log_mass: f64,
    /// Prior-weighted mean of `log prior(c)` over unpredicted labels.
    mean_log_prior: f64,
}

/// A retained matrix prepared for repeated E/M steps.
#[derive(Debug, Clone)]
pub struct LafProblem<'a> {
    matrix: &'a PredictionMatrix,
    floor: f64,
    log_floor: f64,
    log_one_minus_floor: f64,
    log_wrong_classes: f64,
    candidates: Vec<Vec<u32>>,
    /// Row-major: index of `labels[i][j]` in `candidates[i]`.
    slot: Vec<usize>,
    candidate_log_prior: Vec<Vec<f64>>,
    other: Vec<OtherClasses>,
    config: LafConfig,
}

impl<'a> LafProblem<'a> {
    pub fn new(pruned: &'a PrunedMatrix, config: &LafConfig) -> Result<Self, LafError> {
        config.validate()?;
        let matrix = pruned.matrix();
        let classes = matrix.num_classes() as usize;
        let n = matrix.num_models();

        let class_log_prior: Vec<f64> = match config.prior {
            Prior::Uniform => vec![-(classes as f64).ln(); classes],
            Prior::Empirical => {
                let pseudo = majority_vote(pruned);
                let mut counts = vec![1usize; classes];
                for &y in &pseudo {
                    counts[y as usize] += 1;
                }
                let total = (pseudo.len() + classes) as f64;
                counts.iter().map(|&c| (c as f64 / total).ln()).collect()
            }
        };
        let total_plogp = fixed_sum(class_log_prior.iter().map(|&lp| lp.exp() * lp));

        let mut candidates = Vec::with_capacity(matrix.num_samples());
        let mut slot = Vec::with_capacity(matrix.labels().len());
        let mut candidate_log_prior = Vec::with_capacity(matrix.num_samples());
        let mut other = Vec::with_capacity(matrix.num_samples());
        for row in matrix.rows() {
            let mut cands = row.to_vec();
            cands.sort_unstable();
            cands.dedup();
            slot.extend(
                row.iter()
                    .map(|l| cands.binary_search(l).expect("label is a candidate")),
            );
            let lp: Vec<f64> = cands.iter().map(|&c| class_log_prior[c as usize]).collect();
            let multiplicity = (classes - cands.len()) as u32;
            let others = match config.prior {
                Prior::Uniform => OtherClasses {
                    multiplicity,
                    log_mass: (multiplicity as f64).ln() - (classes as f64).ln(),
                    mean_log_prior: class_log_prior[0],
                },
                Prior::Empirical => {
                    let cand_mass = fixed_sum(lp.iter().map(|l| l.exp()));
                    let cand_plogp = fixed_sum(lp.iter().map(|&l| l.exp() * l));
                    let mass = 1.0 - cand_mass;
                    OtherClasses {
                        multiplicity,
                        log_mass: mass.ln(),
                        mean_log_prior: if multiplicity > 0 {
                            (total_plogp - cand_plogp) / mass
                        } else {
                            0.0
                        },
                    }
                }
            };
            candidates.push(cands);
            candidate_log_prior.push(lp);
            other.push(others);
        }
        debug_assert_eq!(slot.len(), matrix.num_samples() * n);

        Ok(Self {
            matrix,
            floor: config.prob_floor,
            log_floor: config.prob_floor.ln(),
            log_one_minus_floor: (-config.prob_floor).ln_1p(),
            log_wrong_classes: ((classes - 1) as f64).ln(),
            candidates,
            slot,
            candidate_log_prior,
            other,
            config: config.clone(),
        })
    }

    pub fn num_samples(&self) -> usize {
        self.matrix.num_samples()
    }

    pub fn num_models(&self) -> usize {
        self.matrix.num_models()
    }

    pub fn check_params(&self, params: &LafParams) -> Result<(), LafError> {
        if params.alpha.len() != self.num_samples() || params.beta.len() != self.num_models() {
            return Err(LafError::ParamShape {
                expected_alpha: self.num_samples(),
                expected_beta: self.num_models(),
                alpha: params.alpha.len(),
                beta: params.beta.len(),
            });
        }
        Ok(())
    }

    fn check_posterior(&self, posterior: &PosteriorTable) -> Result<(), LafError> {
        if posterior.rows.len() != self.num_samples() {
            return Err(LafError::PosteriorShape {
                expected: self.num_samples(),
                got: posterior.rows.len(),
            });
        }
        Ok(())
    }

    #[inline]
    fn link(&self, x: f64) -> Link {
        // σ(x), log σ(x) and log(1 - σ(x)) from a single exp(-|x|).
        let e = (-x.abs()).exp();
        let tail = e.ln_1p();
        let (prob, log_right, log_left) = if x >= 0.0 {
            (1.0 / (1.0 + e), -tail, -x - tail)
        } else {
            (e / (1.0 + e), x - tail, -tail)
        };
        if prob < self.floor {
            Link {
                log_right: self.log_floor,
                log_wrong: self.log_one_minus_floor - self.log_wrong_classes,
                prob: self.floor,
                active: false,
            }
        } else if prob > 1.0 - self.floor {
            Link {
                log_right: self.log_one_minus_floor,
                log_wrong: self.log_floor - self.log_wrong_classes,
                prob: 1.0 - self.floor,
                active: false,
            }
        } else {
            Link {
                log_right,
                log_wrong: log_left - self.log_wrong_classes,
                prob,
                active: true,
            }
        }
    }

    /// Posterior over the true label of every retained sample.
    pub fn e_step(&self, params: &LafParams) -> PosteriorTable {
        let n = self.num_models();
        let mut log_z = Vec::with_capacity(self.num_samples());
        let rows = self
            .matrix
            .rows()
            .enumerate()
            .map(|(i, row)| {
                let cands = &self.candidates[i];
                let mut base = FixedSum::ZERO;
                let mut lift = vec![FixedSum::ZERO; cands.len()];
                for j in 0..row.len() {
                    let link = self.link(params.alpha[i] * params.beta[j]);
                    base += link.log_wrong;
                    lift[self.slot[i * n + j]] += link.log_right - link.log_wrong;
                }
                let mut scores: Vec<f64> = lift
                    .iter()
                    .zip(&self.candidate_log_prior[i])
                    .map(|(&l, &lp)| {
                        let mut s = base;
                        s += l;
                        lp + s.value()
                    })
                    .collect();
                let other = self.other[i];
                if other.multiplicity > 0 {
                    scores.push(other.log_mass + base.value());
                }
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
                let lz = max + z.ln();
                log_z.push(lz);
                let mut probs = scores.iter().map(|s| (s - lz).exp());
                let candidates = cands.iter().map(|&c| (c, probs.next().unwrap())).collect();
                let other_prob = match probs.next() {
                    Some(mass) => mass / other.multiplicity as f64,
                    None => 0.0,
                };
                SamplePosterior {
                    candidates,
                    other_multiplicity: other.multiplicity,
                    other_prob,
                }
            })
            .collect();
        PosteriorTable {
            rows,
            log_likelihood: fixed_sum(log_z),
        }
    }

    /// Posterior probability that each model's own prediction is the true
    /// label, row-major.
    fn agreement(&self, posterior: &PosteriorTable) -> Vec<f64> {
        let n = self.num_models();
        let mut w = Vec::with_capacity(self.slot.len());
        for (i, post) in posterior.rows.iter().enumerate() {
            w.extend(self.slot[i * n..(i + 1) * n].iter().map(|&k| post.candidates[k].1));
        }
        w
    }

    /// `E[log p(y)]`, which does not depend on (α, β).
    fn prior_term(&self, posterior: &PosteriorTable) -> FixedSum {
        let mut acc = FixedSum::ZERO;
        for (i, post) in posterior.rows.iter().enumerate() {
            for (&(_, q), &lp) in post.candidates.iter().zip(&self.candidate_log_prior[i]) {
                acc += q * lp;
            }
            if post.other_multiplicity > 0 {
                acc += post.other_mass() * self.other[i].mean_log_prior;
            }
        }
        acc
    }

    fn objective(
        &self,
        params: &LafParams,
        agreement: &[f64],
        prior: FixedSum,
        gradient: bool,
    ) -> (f64, Option<LafParams>) {
        let n = self.num_models();
        let mut q = prior;
        let mut grad_alpha = Vec::with_capacity(if gradient { self.num_samples() } else { 0 });
        let mut grad_beta = vec![FixedSum::ZERO; if gradient { n } else { 0 }];
        for (i, &a) in params.alpha.iter().enumerate() {
            let mut ga = FixedSum::ZERO;
            for (j, &b) in params.beta.iter().enumerate() {
                let link = self.link(a * b);
                let w = agreement[i * n + j];
                q += w * link.log_right + (1.0 - w) * link.log_wrong;
                if gradient && link.active {
                    // d/dx [w log σ(x) + (1 - w) log(1 - σ(x))] = w - σ(x)
                    let r = w - link.prob;
                    ga += r * b;
                    grad_beta[j] += r * a;
                }
            }
            if gradient {
                grad_alpha.push(ga.value());
            }
        }
        let grad = gradient.then(|| LafParams {
            alpha: grad_alpha,
            beta: grad_beta.into_iter().map(FixedSum::value).collect(),
        });
        (q.value(), grad)
    }

    /// Expected complete-data log-likelihood under `posterior`.
    pub fn compute_q(&self, posterior: &PosteriorTable, params: &LafParams) -> f64 {
        let w = self.agreement(posterior);
        self.objective(params, &w, self.prior_term(posterior), false).0
    }

    /// `(∂Q/∂α, ∂Q/∂β)` packed as parameters.
    pub fn gradient(&self, posterior: &PosteriorTable, params: &LafParams) -> LafParams {
        let w = self.agreement(posterior);
        self.objective(params, &w, FixedSum::ZERO, true)
            .1
            .expect("gradient requested")
    }

    /// Backtracking gradient ascent on `Q` with the posterior held fixed.
    ///
    /// The ascent direction averages each parameter's gradient over the
    /// observations it touches (`n` for an α, `m` for a β), which keeps the
    /// trajectory invariant to duplicating samples. Trial points are projected
    /// onto `α >= 0`: a negative easiness would let a sample declare every
    /// model's disagreement with it as correct, and with few models that
    /// degenerate fit wins. A trial is kept only if it does not lower `Q`.
    pub fn m_step(&self, posterior: &PosteriorTable, params: &LafParams) -> LafParams {
        let w = self.agreement(posterior);
        let prior = self.prior_term(posterior);
        let per_alpha = 1.0 / self.num_models() as f64;
        let per_beta = 1.0 / self.num_samples() as f64;

        let mut current = params.clone();
        let (mut q, grad) = self.objective(&current, &w, prior, true);
        let mut grad = grad.expect("gradient requested");
        for _ in 0..self.config.m_step_inner_iters {
            if grad.alpha.iter().chain(&grad.beta).all(|&g| g == 0.0) {
                break;
            }
            let mut step = self.config.initial_step;
            let mut accepted = None;
            for _ in 0..=self.config.max_halvings {
                let trial = LafParams {
                    alpha: current
                        .alpha
                        .iter()
                        .zip(&grad.alpha)
                        .map(|(&a, &g)| (a + step * per_alpha * g).max(0.0))
                        .collect(),
                    beta: current
                        .beta
                        .iter()
                        .zip(&grad.beta)
                        .map(|(&b, &g)| b + step * per_beta * g)
                        .collect(),
                };
                let (q_trial, g_trial) = self.objective(&trial, &w, prior, true);
                if q_trial >= q {
                    accepted = Some((trial, q_trial, g_trial.expect("gradient requested")));
                    break;
                }
                step *= 0.5;
            }
            match accepted {
                Some((p, q_new, g_new)) => {
                    current = p;
                    q = q_new;
                    grad = g_new;
                }
                None => break,
            }
        }
        current
    }
}

/// Free-function forms of the EM steps; each prepares the problem afresh.
pub fn e_step(pruned: &PrunedMatrix, params: &LafParams, config: &LafConfig) -> Result<PosteriorTable, LafError> {
    let problem = LafProblem::new(pruned, config)?;
    problem.check_params(params)?;
    Ok(problem.e_step(params))
}

pub fn compute_q(
    pruned: &PrunedMatrix,
    posterior: &PosteriorTable,
    params: &LafParams,
    config: &LafConfig,
) -> Result<f64, LafError> {
    let problem = LafProblem::new(pruned, config)?;
    problem.check_params(params)?;
    problem.check_posterior(posterior)?;
    Ok(problem.compute_q(posterior, params))
}

pub fn gradient(
    pruned: &PrunedMatrix,
    posterior: &PosteriorTable,
    params: &LafParams,
    config: &LafConfig,
) -> Result<LafParams, LafError> {
    let problem = LafProblem::new(pruned, config)?;
    problem.check_params(params)?;
    problem.check_posterior(posterior)?;
    Ok(problem.gradient(posterior, params))
}

pub fn m_step(
    pruned: &PrunedMatrix,
    posterior: &PosteriorTable,
    params: &LafParams,
    config: &LafConfig,
) -> Result<LafParams, LafError> {
    let problem = LafProblem::new(pruned, config)?;
    problem.check_params(params)?;
    problem.check_posterior(posterior)?;
    Ok(problem.m_step(posterior, params))
}

/// One outer EM iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    /// `Q` at the incoming parameters, under the fresh posterior.
    pub q_before: f64,
    /// `Q` after the M-step, same posterior.
    pub q_after: f64,
    /// Observed-data log-likelihood at the incoming parameters.
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LafOutcome {
    pub ranking: Ranking,
    /// Final specialty per model, in the matrix's column order. Empty when
    /// every sample was unanimous.
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub pruned_count: usize,
    pub warning: Option<String>,
    pub trace: Vec<IterationTrace>,
}

impl LafOutcome {
    pub fn report(&self) -> RankingReport {
        RankingReport {
            converged: self.converged,
            iterations: self.iterations,
            warning: self.warning.clone(),
            ranking: self.ranking.clone(),
        }
    }

    /// The sequence of `Q` values the stopping rule compares: the initial
    /// `Q`, then `Q` after every M-step.
    pub fn q_sequence(&self) -> Vec<f64> {
        let mut seq = Vec::with_capacity(self.trace.len() + 1);
        if let Some(first) = self.trace.first() {
            seq.push(first.q_before);
        }
        seq.extend(self.trace.iter().map(|t| t.q_after));
        seq
    }
}

pub const ALL_TIED_WARNING: &str =
    "all samples received identical predictions from every model; models are reported as tied";

fn relative_change(q: f64, q_last: f64) -> f64 {
    if q_last == 0.0 {
        if q == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        ((q - q_last) / q_last).abs()
    }
}

/// Ranks the models of `matrix` without labels.
pub fn run_laf(matrix: &PredictionMatrix, config: &LafConfig) -> Result<LafOutcome, LafError> {
    config.validate()?;
    let pruned = match prune(matrix) {
        Ok(p) => p,
        Err(MatrixError::NoDiscriminatingData) => {
            let zeros = vec![0.0; matrix.num_models()];
            return Ok(LafOutcome {
                ranking: rank_from_scores(matrix.model_names(), &zeros)?,
                beta: Vec::new(),
                alpha: Vec::new(),
                converged: true,
                iterations: 0,
                pruned_count: matrix.num_samples(),
                warning: Some(ALL_TIED_WARNING.to_owned()),
                trace: Vec::new(),
            });
        }
        Err(e) => return Err(e.into()),
    };
    let problem = LafProblem::new(&pruned, config)?;
    let pseudo = majority_vote(&pruned);
    let mut params = init_params(&pruned, &pseudo);

    let mut trace = Vec::new();
    let mut converged = false;
    let mut q_last = None;
    for _ in 0..config.max_outer_iters {
        let posterior = problem.e_step(&params);
        let q_before = problem.compute_q(&posterior, &params);
        let next = problem.m_step(&posterior, &params);
        let q_after = problem.compute_q(&posterior, &next);
        trace.push(IterationTrace {
            q_before,
            q_after,
            log_likelihood: posterior.log_likelihood,
        });
        params = next;
        let reference = *q_last.get_or_insert(q_before);
        if relative_change(q_after, reference) <= config.convergence_tol {
            converged = true;
            break;
        }
        q_last = Some(q_after);
    }

    Ok(LafOutcome {
        ranking: rank_from_scores(matrix.model_names(), &params.beta)?,
        iterations: trace.len(),
        beta: params.beta,
        alpha: params.alpha,
        converged,
        pruned_count: pruned.pruned_count(),
        warning: None,
        trace,
    })
}
