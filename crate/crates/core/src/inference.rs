//! Prevalence, per-method Δ and AUROC from recovered spectral quantities.

use serde::{Deserialize, Serialize};

use crate::decomposition::check_recoverability;
use crate::error::{Result, SummaError};

/// Below this β the sign of ρ − 1/2 is not trusted and ρ is reported as 1/2.
pub const DEGENERATE_BETA: f64 = 1e-3;
/// Largest tolerated gap between an assumed and an inferred prevalence.
pub const PREVALENCE_AGREEMENT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceEstimate {
    pub rho: f64,
    pub beta: f64,
    /// β fell under [`DEGENERATE_BETA`]; `rho` is pinned to 1/2.
    pub degenerate: bool,
}

/// Solves `rho (1 - rho) = 1 / (beta + 4)` with `beta = lambda_t^2 / lambda_e^3`.
/// A positive `lambda_t` selects the root below 1/2.
pub fn prevalence_from_moments(lambda_e: f64, lambda_t: f64) -> Result<PrevalenceEstimate> {
    if !(lambda_e.is_finite() && lambda_e > 0.0) {
        return Err(SummaError::NoSignal(format!("lambda_e must be positive, got {lambda_e}")));
    }
    if !lambda_t.is_finite() {
        return Err(SummaError::invalid("lambda_t must be finite"));
    }
    let beta = lambda_t * lambda_t / lambda_e.powi(3);
    if beta < DEGENERATE_BETA {
        return Ok(PrevalenceEstimate { rho: 0.5, beta, degenerate: true });
    }
    let s = lambda_t.signum();
    let rho = (1.0 - s * (beta / (beta + 4.0)).sqrt()) / 2.0;
    Ok(PrevalenceEstimate { rho, beta, degenerate: false })
}

/// Where the prevalence used for the AUROC scale came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Prevalence {
    Inferred(PrevalenceEstimate),
    Assumed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoSource {
    Inferred,
    Degenerate,
    Assumed,
    /// No tensor path and no user prevalence; only weights are reported.
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEstimate {
    pub id: String,
    pub weight: f64,
    pub delta: Option<f64>,
    /// `delta / N + 1/2`, unclamped.
    pub auroc_raw: Option<f64>,
    pub auroc: Option<f64>,
    pub recoverability_warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub n_samples: usize,
    pub rho: Option<f64>,
    pub rho_source: RhoSource,
    pub beta: Option<f64>,
    pub delta_norm: Option<f64>,
    pub lambda_e: f64,
    pub lambda_t: Option<f64>,
    /// Prevalence from the tensor path when a user value took precedence.
    pub inferred_rho: Option<f64>,
    pub rho_degenerate: bool,
    pub methods: Vec<MethodEstimate>,
    pub warnings: Vec<String>,
}

fn check_weights(v: &[f64]) -> Result<()> {
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
        return Err(SummaError::invalid("weights must be a nonempty finite vector"));
    }
    let norm2: f64 = v.iter().map(|x| x * x).sum();
    if (norm2 - 1.0).abs() > 1e-9 {
        return Err(SummaError::invalid(format!("weights must have unit norm, got squared norm {norm2}")));
    }
    Ok(())
}

fn default_ids(m: usize) -> Vec<String> {
    (0..m).map(|i| format!("method_{i}")).collect()
}

/// Scales the unit eigenvector `v` into per-method Δ and AUROC.
pub fn performance_estimates(
    v: &[f64],
    lambda_e: f64,
    prevalence: Prevalence,
    n_samples: usize,
) -> Result<PerformanceReport> {
    check_weights(v)?;
    if !(lambda_e.is_finite() && lambda_e > 0.0) {
        return Err(SummaError::NoSignal(format!("lambda_e must be positive, got {lambda_e}")));
    }
    if n_samples < 2 {
        return Err(SummaError::invalid("need at least two samples"));
    }
    let (rho, beta, delta_norm, source) = match prevalence {
        Prevalence::Inferred(est) => {
            let source = if est.degenerate { RhoSource::Degenerate } else { RhoSource::Inferred };
            (est.rho, est.beta, (lambda_e * (est.beta + 4.0)).sqrt(), source)
        }
        Prevalence::Assumed(rho) => {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(SummaError::InvalidPrevalence(rho));
            }
            let var = rho * (1.0 - rho);
            (rho, 1.0 / var - 4.0, (lambda_e / var).sqrt(), RhoSource::Assumed)
        }
    };

    let flags = check_recoverability(v);
    let n = n_samples as f64;
    let methods = v
        .iter()
        .zip(flags)
        .zip(default_ids(v.len()))
        .map(|((&weight, flag), id)| {
            let delta = weight * delta_norm;
            let raw = delta / n + 0.5;
            MethodEstimate {
                id,
                weight,
                delta: Some(delta),
                auroc_raw: Some(raw),
                auroc: Some(raw.clamp(0.0, 1.0)),
                recoverability_warning: flag,
            }
        })
        .collect();

    let mut report = PerformanceReport {
        n_samples,
        rho: Some(rho),
        rho_source: source,
        beta: Some(beta),
        delta_norm: Some(delta_norm),
        lambda_e,
        lambda_t: None,
        inferred_rho: None,
        rho_degenerate: source == RhoSource::Degenerate,
        methods,
        warnings: Vec::new(),
    };
    report.warn_recoverability();
    Ok(report)
}

impl PerformanceReport {
    /// Report carrying only the relative weights `v`, for when neither the
    /// tensor path nor a user prevalence is available.
    pub fn weights_only(v: &[f64], lambda_e: f64, n_samples: usize) -> Result<Self> {
        check_weights(v)?;
        let flags = check_recoverability(v);
        let methods = v
            .iter()
            .zip(flags)
            .zip(default_ids(v.len()))
            .map(|((&weight, flag), id)| MethodEstimate {
                id,
                weight,
                delta: None,
                auroc_raw: None,
                auroc: None,
                recoverability_warning: flag,
            })
            .collect();
        let mut report = PerformanceReport {
            n_samples,
            rho: None,
            rho_source: RhoSource::Unavailable,
            beta: None,
            delta_norm: None,
            lambda_e,
            lambda_t: None,
            inferred_rho: None,
            rho_degenerate: false,
            methods,
            warnings: Vec::new(),
        };
        report.warn_recoverability();
        Ok(report)
    }

    fn warn_recoverability(&mut self) {
        let flagged: Vec<&str> =
            self.methods.iter().filter(|m| m.recoverability_warning).map(|m| m.id.as_str()).collect();
        if !flagged.is_empty() {
            self.warnings.push(format!(
                "weight dominates the others for {}; decomposition may not be unique",
                flagged.join(", ")
            ));
        }
    }

    pub fn with_method_ids(mut self, ids: &[String]) -> Result<Self> {
        if ids.len() != self.methods.len() {
            return Err(SummaError::invalid("method id count does not match report"));
        }
        for (m, id) in self.methods.iter_mut().zip(ids) {
            m.id.clone_from(id);
        }
        // regenerate the warning text with the real ids
        self.warnings.retain(|w| !w.starts_with("weight dominates"));
        self.warn_recoverability();
        Ok(self)
    }

    /// Records a tensor-path estimate next to an assumed prevalence and warns
    /// when the two disagree.
    pub fn cross_check(&mut self, inferred: &PrevalenceEstimate) {
        self.inferred_rho = Some(inferred.rho);
        if let Some(rho) = self.rho {
            if (rho - inferred.rho).abs() > PREVALENCE_AGREEMENT {
                self.warnings.push(format!(
                    "assumed prevalence {rho} disagrees with inferred prevalence {:.4}",
                    inferred.rho
                ));
            }
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.methods.iter().map(|m| m.weight).collect()
    }

    pub fn aurocs_raw(&self) -> Option<Vec<f64>> {
        self.methods.iter().map(|m| m.auroc_raw).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Forward model: `lambda_e = rho(1-rho)|Δ|^2`, and the signed tensor
    /// scalar that the pipeline hands to `prevalence_from_moments`,
    /// `rho(1-rho)(1-2rho)|Δ|^3`.
    fn forward(delta: &[f64], rho: f64) -> (f64, f64, Vec<f64>) {
        let norm = delta.iter().map(|x| x * x).sum::<f64>().sqrt();
        let var = rho * (1.0 - rho);
        let v = delta.iter().map(|d| d / norm).collect();
        (var * norm * norm, var * (1.0 - 2.0 * rho) * norm.powi(3), v)
    }

    #[test]
    fn balanced_when_third_moment_vanishes() {
        let est = prevalence_from_moments(3.0, 0.0).unwrap();
        assert_eq!(est.beta, 0.0);
        assert_eq!(est.rho, 0.5);
        assert!(est.degenerate);
    }

    #[test]
    fn recovers_forward_built_prevalence() {
        let est = prevalence_from_moments(0.21 * 100.0, 0.21 * 0.4 * 1000.0).unwrap();
        assert!((est.beta - 0.16 / 0.21).abs() < 1e-12);
        assert!((est.beta - 0.761905).abs() < 1e-6);
        assert!((est.rho - 0.3).abs() < 1e-9);
        assert!(!est.degenerate);

        let flipped = prevalence_from_moments(0.21 * 100.0, -0.21 * 0.4 * 1000.0).unwrap();
        assert!((flipped.rho - 0.7).abs() < 1e-9);
        assert_eq!(flipped.beta, est.beta);
    }

    #[test]
    fn nonpositive_lambda_e_has_no_signal() {
        assert!(matches!(prevalence_from_moments(0.0, 1.0), Err(SummaError::NoSignal(_))));
        assert!(matches!(prevalence_from_moments(-1.0, 1.0), Err(SummaError::NoSignal(_))));
    }

    #[test]
    fn round_trip_of_known_deltas() {
        let delta = [2.0, 4.0, 4.0, 8.0];
        let (lambda_e, lambda_t, v) = forward(&delta, 0.3);
        let est = prevalence_from_moments(lambda_e, lambda_t).unwrap();
        let report = performance_estimates(&v, lambda_e, Prevalence::Inferred(est), 100).unwrap();
        assert_eq!(report.rho_source, RhoSource::Inferred);
        assert!((report.rho.unwrap() - 0.3).abs() < 1e-9);
        let expected = [0.52, 0.54, 0.54, 0.58];
        for ((m, d), a) in report.methods.iter().zip(&delta).zip(&expected) {
            assert!((m.delta.unwrap() - d).abs() < 1e-9);
            assert!((m.auroc.unwrap() - a).abs() < 1e-12);
        }
        assert!((report.delta_norm.unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn assumed_balanced_prevalence() {
        let lambda_e = 0.25 * 36.0;
        let v = [0.6, 0.8, 0.0, 0.0];
        let report = performance_estimates(&v, lambda_e, Prevalence::Assumed(0.5), 50).unwrap();
        assert!((report.delta_norm.unwrap() - (4.0 * lambda_e).sqrt()).abs() < 1e-12);
        assert_eq!(report.beta, Some(0.0));
        assert_eq!(report.methods[2].delta, Some(0.0));
        assert_eq!(report.methods[2].auroc, Some(0.5));
        assert_eq!(report.rho_source, RhoSource::Assumed);
    }

    #[test]
    fn invalid_prevalence_rejected() {
        for rho in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            let r = performance_estimates(&[0.5; 4], 1.0, Prevalence::Assumed(rho), 10);
            assert!(matches!(r, Err(SummaError::InvalidPrevalence(_))));
        }
    }

    #[test]
    fn clamping_keeps_raw_value() {
        let v = [1.0, 0.0, 0.0, 0.0];
        let report = performance_estimates(&v, 0.25 * 400.0, Prevalence::Assumed(0.5), 10).unwrap();
        let m = &report.methods[0];
        assert!((m.auroc_raw.unwrap() - 2.5).abs() < 1e-12);
        assert_eq!(m.auroc, Some(1.0));
        assert!(m.recoverability_warning);
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn cross_check_warns_on_disagreement() {
        let mut report = performance_estimates(&[0.5; 4], 1.0, Prevalence::Assumed(0.3), 10).unwrap();
        report.cross_check(&PrevalenceEstimate { rho: 0.33, beta: 0.0, degenerate: false });
        assert!(report.warnings.is_empty());
        report.cross_check(&PrevalenceEstimate { rho: 0.5, beta: 0.0, degenerate: true });
        assert_eq!(report.warnings.len(), 1);
        assert_eq!(report.inferred_rho, Some(0.5));
    }

    #[test]
    fn weights_only_report_has_no_aurocs() {
        let report = PerformanceReport::weights_only(&[0.5; 4], 2.0, 10).unwrap();
        assert_eq!(report.rho_source, RhoSource::Unavailable);
        assert!(report.aurocs_raw().is_none());
        assert_eq!(report.weights(), vec![0.5; 4]);
    }

    proptest! {
        #[test]
        fn round_trip_identity(
            delta in prop::collection::vec(-20.0f64..20.0, 4..12),
            rho in 0.02f64..0.98,
            n in 50usize..5000,
        ) {
            let norm = delta.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assume!(norm > 1.0);
            // keep β clear of the degenerate band
            prop_assume!((rho - 0.5).abs() > 0.02);
            let (lambda_e, lambda_t, v) = forward(&delta, rho);
            let est = prevalence_from_moments(lambda_e, lambda_t).unwrap();
            prop_assert!((est.rho - rho).abs() < 1e-9);
            prop_assert!((est.rho * (1.0 - est.rho) - 1.0 / (est.beta + 4.0)).abs() < 1e-9);

            let negated = prevalence_from_moments(lambda_e, -lambda_t).unwrap();
            prop_assert!((negated.rho - (1.0 - rho)).abs() < 1e-9);
            prop_assert_eq!(negated.beta, est.beta);

            let report = performance_estimates(&v, lambda_e, Prevalence::Inferred(est), n).unwrap();
            let sq: f64 = report.weights().iter().map(|x| x * x).sum();
            prop_assert!((sq - 1.0).abs() < 1e-12);
            for (m, d) in report.methods.iter().zip(&delta) {
                let got = m.delta.unwrap();
                prop_assert!((got - d).abs() < 1e-9 * norm.max(1.0));
                prop_assert_eq!(m.auroc_raw.unwrap(), got / n as f64 + 0.5);
            }
        }

        #[test]
        fn auroc_order_follows_weights(v in prop::collection::vec(-1.0f64..1.0, 4..10), rho in 0.1f64..0.9) {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assume!(norm > 1e-3);
            let v: Vec<f64> = v.iter().map(|x| x / norm).collect();
            let report = performance_estimates(&v, 5.0, Prevalence::Assumed(rho), 100).unwrap();
            for a in &report.methods {
                for b in &report.methods {
                    if a.weight < b.weight {
                        prop_assert!(a.auroc_raw.unwrap() < b.auroc_raw.unwrap());
                    }
                }
            }
        }
    }
}
