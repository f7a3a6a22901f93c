//! Seeded synthetic ensembles of conditionally independent Gaussian scorers.
//!
//! Each method gets its own ChaCha20 stream (`seed_from_u64(seed)` with
//! stream `i + 1`); stream 0 shuffles the labels. A method's true AUROC is the
//! first draw of its stream and its N scores follow, so adding or removing
//! methods never changes the draws of the others.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SummaError};
use crate::ranking::{LabelVector, ScoreMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_methods: usize,
    pub n_samples: usize,
    pub prevalence: f64,
    pub auroc_low: f64,
    pub auroc_high: f64,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig { n_methods: 30, n_samples: 1000, prevalence: 0.5, auroc_low: 0.4, auroc_high: 0.8, seed: 0 }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_methods < 1 {
            return Err(SummaError::invalid("n_methods must be at least 1"));
        }
        if self.n_samples < 2 {
            return Err(SummaError::invalid("n_samples must be at least 2"));
        }
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return Err(SummaError::InvalidPrevalence(self.prevalence));
        }
        if !(self.auroc_low > 0.0 && self.auroc_low <= self.auroc_high && self.auroc_high < 1.0) {
            return Err(SummaError::invalid(format!(
                "AUROC range must satisfy 0 < low <= high < 1, got [{}, {}]",
                self.auroc_low, self.auroc_high
            )));
        }
        let n1 = self.n_positive();
        if n1 == 0 || n1 == self.n_samples {
            return Err(SummaError::DegenerateLabels { n_positive: n1, n_samples: self.n_samples });
        }
        Ok(())
    }

    /// `round(prevalence * n_samples)`.
    pub fn n_positive(&self) -> usize {
        (self.prevalence * self.n_samples as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub scores: ScoreMatrix,
    pub labels: LabelVector,
    pub true_aurocs: Vec<f64>,
    pub seed_used: u64,
}

/// Inverse standard normal CDF, Wichura's AS241 (PPND16). Relative accuracy
/// about 1e-16 over the full double range.
#[allow(clippy::excessive_precision)]
pub fn inverse_normal_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(SummaError::invalid(format!("probability must lie in (0, 1), got {p}")));
    }
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        2.417_807_251_774_506_117_7e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        6.897_673_349_851_000_045_5e-1,
        1.481_039_764_274_800_745_9e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        2.965_605_718_285_048_912_3e-1,
        2.653_218_952_657_612_309_3e-2,
        1.242_660_947_388_078_438_6e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_9e-1,
        1.369_298_809_227_358_053_1e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];
    fn poly(c: &[f64; 8], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, k| acc * x + k)
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return Ok(q * poly(&A, r) / poly(&B, r));
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    Ok(if q < 0.0 { -value } else { value })
}

/// Mean shift between two unit-variance normals whose AUROC is `target`:
/// `sqrt(2) * inverse_normal_cdf(target)`.
pub fn separation_for_auroc(target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(SummaError::invalid(format!("target AUROC must lie in (0, 1), got {target}")));
    }
    Ok(std::f64::consts::SQRT_2 * inverse_normal_cdf(target)?)
}

fn method_stream(seed: u64, method: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(method as u64 + 1);
    rng
}

/// Draws labels with exactly `round(rho N)` positives and, per method,
/// scores `Normal(delta_i * label, 1)` with `delta_i` set from a uniformly
/// drawn true AUROC.
pub fn simulate_ensemble(config: &SimulationConfig) -> Result<SimulatedDataset> {
    config.validate()?;
    let n = config.n_samples;
    let n1 = config.n_positive();

    let mut labels: Vec<u8> = (0..n).map(|k| u8::from(k < n1)).collect();
    let mut label_rng = ChaCha20Rng::seed_from_u64(config.seed);
    label_rng.set_stream(0);
    labels.shuffle(&mut label_rng);

    let per_method: Vec<(f64, Vec<f64>)> = (0..config.n_methods)
        .into_par_iter()
        .map(|i| {
            let mut rng = method_stream(config.seed, i);
            let auroc = rng.random_range(config.auroc_low..=config.auroc_high);
            let shift = separation_for_auroc(auroc).expect("AUROC range validated");
            let scores = labels
                .iter()
                .map(|&y| {
                    let noise: f64 = rng.sample(StandardNormal);
                    shift * f64::from(y) + noise
                })
                .collect();
            (auroc, scores)
        })
        .collect();

    let (true_aurocs, rows): (Vec<f64>, Vec<Vec<f64>>) = per_method.into_iter().unzip();
    let method_ids = (0..config.n_methods).map(|i| format!("m{}", i + 1)).collect();
    let sample_ids = (0..n).map(|k| format!("s{}", k + 1)).collect();
    Ok(SimulatedDataset {
        scores: ScoreMatrix::new(rows, method_ids, sample_ids)?,
        labels: LabelVector::new(labels)?,
        true_aurocs,
        seed_used: config.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::evaluate_scores;

    #[test]
    fn inverse_cdf_matches_reference_values() {
        // reference quantiles computed independently to double precision
        let cases = [
            (1e-300, -37.0470962993612),
            (1e-10, -6.361340902404056),
            (1e-5, -4.264890793922825),
            (0.001, -3.090232306167813),
            (0.02425, -1.972961051311885),
            (0.1, -1.2815515655446004),
            (0.3, -0.5244005127080409),
            (0.5, 0.0),
            (0.8, 0.8416212335729143),
            (0.975, 1.959963984540054),
            (0.999, 3.090232306167813),
        ];
        for (p, want) in cases {
            let got = inverse_normal_cdf(p).unwrap();
            assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "p={p}: {got} vs {want}");
        }
    }

    #[test]
    fn separation_examples() {
        assert_eq!(separation_for_auroc(0.5).unwrap(), 0.0);
        assert!((separation_for_auroc(0.8).unwrap() - 1.19023).abs() < 1e-5);
        for a in [0.01, 0.2, 0.37, 0.45, 0.6, 0.99] {
            assert!((separation_for_auroc(a).unwrap() + separation_for_auroc(1.0 - a).unwrap()).abs() < 1e-12);
        }
        for bad in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(separation_for_auroc(bad).is_err());
        }
    }

    #[test]
    fn config_validation() {
        let ok = SimulationConfig::default();
        assert!(ok.validate().is_ok());
        assert!(matches!(
            SimulationConfig { prevalence: 0.0, ..ok }.validate(),
            Err(SummaError::InvalidPrevalence(_))
        ));
        assert!(SimulationConfig { auroc_low: 0.9, auroc_high: 0.8, ..ok }.validate().is_err());
        assert!(SimulationConfig { n_samples: 1, ..ok }.validate().is_err());
        assert!(SimulationConfig { n_samples: 10, prevalence: 0.01, ..ok }.validate().is_err());
    }

    #[test]
    fn exact_class_counts_and_determinism() {
        let cfg = SimulationConfig { n_methods: 4, n_samples: 101, prevalence: 0.3, seed: 5, ..Default::default() };
        let a = simulate_ensemble(&cfg).unwrap();
        let b = simulate_ensemble(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.labels.n_positive(), 30);
        assert_eq!(a.seed_used, 5);
        for t in &a.true_aurocs {
            assert!((0.4..=0.8).contains(t));
        }
        let c = simulate_ensemble(&SimulationConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(a.scores, c.scores);
    }

    #[test]
    fn adding_methods_keeps_existing_draws() {
        let small = SimulationConfig { n_methods: 3, n_samples: 50, seed: 9, ..Default::default() };
        let big = SimulationConfig { n_methods: 7, ..small };
        let a = simulate_ensemble(&small).unwrap();
        let b = simulate_ensemble(&big).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.true_aurocs[..], b.true_aurocs[..3]);
        for i in 0..3 {
            assert_eq!(a.scores.row(i), b.scores.row(i));
        }
    }

    #[test]
    fn null_methods_are_near_chance() {
        let n = 2000;
        let cfg = SimulationConfig {
            n_methods: 10,
            n_samples: n,
            auroc_low: 0.5,
            auroc_high: 0.5,
            seed: 1,
            ..Default::default()
        };
        let data = simulate_ensemble(&cfg).unwrap();
        for row in data.scores.rows() {
            let a = evaluate_scores(row, &data.labels).unwrap();
            assert!((a - 0.5).abs() < 3.0 / (n as f64).sqrt(), "{a}");
        }
    }

    #[test]
    fn empirical_aurocs_match_targets() {
        let cfg = SimulationConfig { n_methods: 30, n_samples: 10_000, seed: 0, ..Default::default() };
        let data = simulate_ensemble(&cfg).unwrap();
        for (row, target) in data.scores.rows().zip(&data.true_aurocs) {
            let a = evaluate_scores(row, &data.labels).unwrap();
            assert!((a - target).abs() < 0.02, "{a} vs {target}");
        }
    }
}
