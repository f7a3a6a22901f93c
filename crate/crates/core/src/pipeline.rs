//! End-to-end inference: ranks, moments, recovery, estimates and ensembles.

use serde::{Deserialize, Serialize};

use crate::decomposition::{
    project_rank1_tensor, recover_rank1_matrix, recover_rank1_tensor, Rank1Recovery, RecoveryOptions, TensorRecovery, MIN_MATRIX_METHODS,
    MIN_TENSOR_METHODS,
};
use crate::ensemble::{summa_scores, woc_scores, EnsembleScores};
use crate::error::{PartialRecovery, Result, SummaError};
use crate::inference::{performance_estimates, prevalence_from_moments, PerformanceReport, Prevalence};
use crate::moments::{MomentStats, ThirdMoments};
use crate::ranking::{rank_transform, RankMatrix, ScoreMatrix, TiePolicy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferOptions {
    pub tie_policy: TiePolicy,
    /// User-supplied prevalence; overrides the tensor estimate.
    pub prevalence: Option<f64>,
    pub use_tensor: bool,
    pub recovery: RecoveryOptions,
    /// Continue with the last iterate when the matrix recovery hits its
    /// iteration cap instead of failing.
    pub accept_partial: bool,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions { tie_policy: TiePolicy::Midrank, prevalence: None, use_tensor: true, recovery: RecoveryOptions::default(), accept_partial: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub report: PerformanceReport,
    pub matrix: Rank1Recovery,
    pub tensor: Option<TensorRecovery>,
    pub summa: EnsembleScores,
    pub woc: EnsembleScores,
}

pub fn infer_scores(scores: &ScoreMatrix, opts: &InferOptions) -> Result<Inference> {
    infer_ranks(&rank_transform(scores, opts.tie_policy)?, opts)
}

/// Runs the full pipeline on a rank matrix.
///
/// The tensor path runs whenever `use_tensor` is set and there are at least
/// five methods. With a user prevalence its failures become warnings and its
/// estimate is only cross-checked; without one it decides ρ. Without either,
/// the report carries weights only. `report.lambda_t` is signed so that a
/// positive value means ρ < 1/2.
pub fn infer_ranks(ranks: &RankMatrix, opts: &InferOptions) -> Result<Inference> {
    let m = ranks.n_methods();
    if m < MIN_MATRIX_METHODS {
        return Err(SummaError::TooFewMethods { required: MIN_MATRIX_METHODS, found: m });
    }
    if let Some(rho) = opts.prevalence {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(SummaError::InvalidPrevalence(rho));
        }
    }
    if opts.use_tensor && opts.prevalence.is_none() && m < MIN_TENSOR_METHODS {
        return Err(SummaError::TooFewMethods { required: MIN_TENSOR_METHODS, found: m });
    }
    let run_tensor = opts.use_tensor && m >= MIN_TENSOR_METHODS;

    let stats = MomentStats::from_ranks(ranks, run_tensor)?;
    let mut warnings = Vec::new();
    let matrix = match recover_rank1_matrix(&stats.q2, opts.recovery) {
        Ok(rec) => rec,
        Err(SummaError::NotConverged { iterations, partial }) if opts.accept_partial => match *partial {
            PartialRecovery::Matrix(rec) => {
                warnings.push(format!("matrix recovery stopped after {iterations} iterations without converging"));
                rec
            }
            other => return Err(SummaError::NotConverged { iterations, partial: Box::new(other) }),
        },
        Err(err) => return Err(err),
    };
    let n = ranks.n_samples();

    let mut tensor = None;
    let mut estimate = None;
    if let Some(q3) = &stats.q3 {
        match tensor_scale(q3, &matrix.v, opts.recovery, &mut warnings) {
            Ok((measured, rec)) => {
                // The measured third moment along v is rho(1-rho)(2rho-1)|Δ|^3;
                // prevalence_from_moments expects the opposite sign convention.
                let lambda_t = -measured;
                estimate = Some((lambda_t, prevalence_from_moments(matrix.lambda, lambda_t)?));
                tensor = rec;
            }
            Err(err) if opts.prevalence.is_some() => warnings.push(format!("tensor path skipped: {err}")),
            Err(err) => return Err(err),
        }
    }

    let mut report = match (opts.prevalence, estimate) {
        (Some(rho), est) => {
            let mut r = performance_estimates(&matrix.v, matrix.lambda, Prevalence::Assumed(rho), n)?;
            if let Some((_, est)) = est {
                r.cross_check(&est);
            }
            r
        }
        (None, Some((_, est))) => performance_estimates(&matrix.v, matrix.lambda, Prevalence::Inferred(est), n)?,
        (None, None) => PerformanceReport::weights_only(&matrix.v, matrix.lambda, n)?,
    };
    report.lambda_t = estimate.map(|(lambda_t, _)| lambda_t);
    report = report.with_method_ids(ranks.method_ids())?;
    report.warnings.extend(warnings);

    let summa = summa_scores(ranks, &matrix.v)?;
    let woc = woc_scores(ranks);
    Ok(Inference { report, matrix, tensor, summa, woc })
}

/// Smallest |u . v| at which the tensor vector is taken to confirm v.
pub const TENSOR_ALIGNMENT: f64 = 0.9;

/// Signed third-order scale along `v`. Uses the tensor power iteration when
/// its vector agrees with `v`; otherwise the third-order signal is not
/// distinguishable from sampling noise and the scale falls back to the
/// least-squares projection of `q3` onto `v ⊗ v ⊗ v`.
fn tensor_scale(
    q3: &ThirdMoments,
    v: &[f64],
    opts: RecoveryOptions,
    warnings: &mut Vec<String>,
) -> Result<(f64, Option<TensorRecovery>)> {
    match recover_rank1_tensor(q3, v, opts) {
        Ok(rec) => {
            let alignment: f64 = rec.u.iter().zip(v).map(|(a, b)| a * b).sum();
            if alignment.abs() >= TENSOR_ALIGNMENT {
                return Ok((rec.lambda_t, Some(rec)));
            }
            warnings.push(format!(
                "tensor vector disagrees with matrix vector (alignment {alignment:.3}); using projection onto v"
            ));
            Ok((project_rank1_tensor(q3, v)?, Some(rec)))
        }
        Err(err @ (SummaError::NotConverged { .. } | SummaError::NoSignal(_))) => {
            warnings.push(format!("tensor power iteration failed ({err}); using projection onto v"));
            Ok((project_rank1_tensor(q3, v)?, None))
        }
        Err(err) => Err(err),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::RhoSource;
    use crate::simulation::{simulate_ensemble, SimulationConfig};

    #[test]
    fn three_methods_are_refused() {
        let ranks = RankMatrix::from_rows(
            vec![vec![1.0, 2.0, 3.0], vec![2.0, 1.0, 3.0], vec![1.0, 3.0, 2.0]],
            TiePolicy::Strict,
        )
        .unwrap();
        assert_eq!(
            infer_ranks(&ranks, &InferOptions::default()),
            Err(SummaError::TooFewMethods { required: 4, found: 3 })
        );
    }

    #[test]
    fn four_methods_need_prevalence_or_no_tensor() {
        let data = simulate_ensemble(&SimulationConfig { n_methods: 4, n_samples: 400, seed: 2, ..Default::default() })
            .unwrap();
        assert_eq!(
            infer_scores(&data.scores, &InferOptions::default()),
            Err(SummaError::TooFewMethods { required: 5, found: 4 })
        );
        let weights = infer_scores(&data.scores, &InferOptions { use_tensor: false, ..Default::default() }).unwrap();
        assert_eq!(weights.report.rho_source, RhoSource::Unavailable);
        assert!(weights.tensor.is_none());
        let assumed = infer_scores(&data.scores, &InferOptions { prevalence: Some(0.5), ..Default::default() }).unwrap();
        assert_eq!(assumed.report.rho_source, RhoSource::Assumed);
    }

    #[test]
    fn balanced_default_simulation_stays_near_one_half() {
        // At N = 1000 the sampling spread of beta is a few 1e-3, so only part
        // of the balanced runs fall under the degeneracy threshold.
        let mut flagged = 0;
        for seed in 0..10 {
            let data = simulate_ensemble(&SimulationConfig { seed, ..Default::default() }).unwrap();
            let out = infer_scores(&data.scores, &InferOptions::default()).unwrap();
            let rho = out.report.rho.unwrap();
            assert!((rho - 0.5).abs() < 0.05, "seed {seed}: {rho}");
            if out.report.rho_degenerate {
                assert_eq!(rho, 0.5);
                flagged += 1;
            }
            assert_eq!(out.report.methods[0].id, "m1");
        }
        assert!(flagged >= 3, "{flagged}");
    }

    #[test]
    fn imbalanced_simulation_infers_prevalence_side() {
        for (rho, seed) in [(0.3, 1), (0.7, 1)] {
            let cfg = SimulationConfig {
                n_methods: 20,
                n_samples: 5000,
                prevalence: rho,
                auroc_low: 0.55,
                auroc_high: 0.8,
                seed,
            };
            let data = simulate_ensemble(&cfg).unwrap();
            let out = infer_scores(&data.scores, &InferOptions::default()).unwrap();
            let got = out.report.rho.unwrap();
            assert!((got - rho).abs() < 0.1, "rho={rho} inferred {got}");
        }
    }
}
