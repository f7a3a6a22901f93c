//! Weighted (SUMMA) and unweighted (wisdom-of-crowds) rank aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SummaError};
use crate::ranking::{auroc_rectangle, rank_scores, LabelVector, RankMatrix, TiePolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleMethod {
    Summa,
    Woc,
}

impl EnsembleMethod {
    pub fn name(self) -> &'static str {
        match self {
            EnsembleMethod::Summa => "summa",
            EnsembleMethod::Woc => "woc",
        }
    }
}

/// Per-sample ensemble scores; higher means more likely class 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleScores {
    pub method: EnsembleMethod,
    pub scores: Vec<f64>,
    /// Heaviside of the score; a score of exactly 0 is class 0.
    pub labels: Vec<u8>,
}

impl EnsembleScores {
    fn new(method: EnsembleMethod, scores: Vec<f64>) -> Self {
        let labels = scores.iter().map(|&s| u8::from(s > 0.0)).collect();
        EnsembleScores { method, scores, labels }
    }
}

/// `score_k = sum_i v_i (rbar - r_ik)` with `rbar = (N + 1) / 2`.
pub fn summa_scores(ranks: &RankMatrix, v: &[f64]) -> Result<EnsembleScores> {
    if v.len() != ranks.n_methods() {
        return Err(SummaError::invalid(format!(
            "weight vector has length {}, rank matrix has {} methods",
            v.len(),
            ranks.n_methods()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(SummaError::invalid("weights must be finite"));
    }
    let rbar = ranks.mean_rank();
    let mut scores = vec![0.0; ranks.n_samples()];
    for (row, w) in ranks.rows().zip(v) {
        for (s, r) in scores.iter_mut().zip(row) {
            *s += w * (rbar - r);
        }
    }
    Ok(EnsembleScores::new(EnsembleMethod::Summa, scores))
}

/// `score_k = rbar - mean_i r_ik`.
pub fn woc_scores(ranks: &RankMatrix) -> EnsembleScores {
    let rbar = ranks.mean_rank();
    let m = ranks.n_methods() as f64;
    let mut sums = vec![0.0; ranks.n_samples()];
    for row in ranks.rows() {
        for (s, r) in sums.iter_mut().zip(row) {
            *s += r;
        }
    }
    EnsembleScores::new(EnsembleMethod::Woc, sums.into_iter().map(|s| rbar - s / m).collect())
}

/// Maximum-entropy posterior `P(class 1 | rank r)` of a method with class
/// mean-rank difference `delta`.
pub fn maxent_posterior(rank: f64, delta: f64, n_samples: usize, n_positive: usize) -> Result<f64> {
    if n_positive == 0 || n_positive >= n_samples {
        return Err(SummaError::DegenerateLabels { n_positive, n_samples });
    }
    let n = n_samples as f64;
    if !(1.0..=n).contains(&rank) {
        return Err(SummaError::invalid(format!("rank {rank} outside [1, {n_samples}]")));
    }
    let mean = (n + 1.0) / 2.0;
    let n1 = n_positive as f64;
    let exponent = 3.0 * delta * (rank - mean) / (mean * mean) + ((n - n1) / n1).ln();
    Ok(1.0 / (1.0 + exponent.exp()))
}

/// Rectangle-rule AUROC of ensemble scores against known labels. Scores are
/// ranked with the strict policy, so tied scores are ordered by sample index.
pub fn evaluate_ensemble(scores: &EnsembleScores, labels: &LabelVector) -> Result<f64> {
    evaluate_scores(&scores.scores, labels)
}

/// [`evaluate_ensemble`] for a bare score vector.
pub fn evaluate_scores(scores: &[f64], labels: &LabelVector) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(SummaError::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let ranks = rank_scores(scores, TiePolicy::Strict)?;
    auroc_rectangle(&ranks, labels)
}
