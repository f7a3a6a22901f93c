//! Score-to-rank transformation and the supervised performance oracles.
//!
//! Rank 1 is the most confidently positive sample: a method that ranks the
//! positives first has a positive `delta` and an AUROC above one half. Every
//! sign downstream depends on this convention.
//!
//! The oracles are generic over the scalar type so that the same code paths
//! can be evaluated in exact rational arithmetic.

use std::cmp::Ordering;

use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SummaError};

/// Numeric type the rank oracles can run on (`f64`, or an exact rational).
pub trait Scalar: Clone + Num + FromPrimitive + PartialOrd + std::fmt::Debug {}

impl<T> Scalar for T where T: Clone + Num + FromPrimitive + PartialOrd + std::fmt::Debug {}

fn scalar<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

fn default_ids(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// Confidence scores, one row per method. Higher means "more likely class 1".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    values: Vec<f64>,
    n_methods: usize,
    n_samples: usize,
    method_ids: Vec<String>,
    sample_ids: Vec<String>,
}

impl ScoreMatrix {
    pub fn new(rows: Vec<Vec<f64>>, method_ids: Vec<String>, sample_ids: Vec<String>) -> Result<Self> {
        let n_methods = rows.len();
        if n_methods == 0 {
            return Err(SummaError::invalid("score matrix needs at least one method"));
        }
        let n_samples = rows[0].len();
        if n_samples < 2 {
            return Err(SummaError::invalid("score matrix needs at least two samples"));
        }
        if rows.iter().any(|r| r.len() != n_samples) {
            return Err(SummaError::invalid("score rows have unequal lengths"));
        }
        if method_ids.len() != n_methods || sample_ids.len() != n_samples {
            return Err(SummaError::invalid("identifier count does not match matrix shape"));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(SummaError::invalid(format!(
                "non-finite score for method {} sample {}",
                method_ids[pos / n_samples],
                sample_ids[pos % n_samples]
            )));
        }
        Ok(ScoreMatrix { values, n_methods, n_samples, method_ids, sample_ids })
    }

    /// Builds a matrix with generated identifiers `m1..`, `s1..`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        Self::new(rows, default_ids("m", m), default_ids("s", n))
    }

    pub fn n_methods(&self) -> usize {
        self.n_methods
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn row(&self, method: usize) -> &[f64] {
        &self.values[method * self.n_samples..(method + 1) * self.n_samples]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_samples)
    }

    pub fn method_ids(&self) -> &[String] {
        &self.method_ids
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TiePolicy {
    /// Ties broken by ascending sample index; every row is a permutation.
    Strict,
    /// Tied entries share their average rank.
    #[default]
    Midrank,
}

/// Per-method sample ranks, one row per method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankMatrix {
    ranks: Vec<f64>,
    n_methods: usize,
    n_samples: usize,
    tie_policy: TiePolicy,
    method_ids: Vec<String>,
    sample_ids: Vec<String>,
}

impl RankMatrix {
    /// Wraps precomputed ranks, checking the row invariants of `tie_policy`.
    pub fn from_ranks(
        rows: Vec<Vec<f64>>,
        tie_policy: TiePolicy,
        method_ids: Vec<String>,
        sample_ids: Vec<String>,
    ) -> Result<Self> {
        let n_methods = rows.len();
        if n_methods == 0 {
            return Err(SummaError::invalid("rank matrix needs at least one method"));
        }
        let n_samples = rows[0].len();
        if n_samples < 2 {
            return Err(SummaError::invalid("rank matrix needs at least two samples"));
        }
        if method_ids.len() != n_methods || sample_ids.len() != n_samples {
            return Err(SummaError::invalid("identifier count does not match matrix shape"));
        }
        let n = n_samples as f64;
        let expected_sum = n * (n + 1.0) / 2.0;
        for (id, row) in method_ids.iter().zip(&rows) {
            if row.len() != n_samples {
                return Err(SummaError::invalid("rank rows have unequal lengths"));
            }
            match tie_policy {
                TiePolicy::Strict => {
                    if !is_permutation(row) {
                        return Err(SummaError::invalid(format!(
                            "ranks of method {id} are not a permutation of 1..={n_samples}"
                        )));
                    }
                }
                TiePolicy::Midrank => {
                    let sum: f64 = row.iter().sum();
                    let in_range = row.iter().all(|&r| r.is_finite() && (1.0..=n).contains(&r));
                    if !in_range || (sum - expected_sum).abs() > 1e-9 * expected_sum {
                        return Err(SummaError::invalid(format!(
                            "ranks of method {id} do not form a valid midrank row"
                        )));
                    }
                }
            }
        }
        Ok(RankMatrix {
            ranks: rows.into_iter().flatten().collect(),
            n_methods,
            n_samples,
            tie_policy,
            method_ids,
            sample_ids,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, tie_policy: TiePolicy) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        Self::from_ranks(rows, tie_policy, default_ids("m", m), default_ids("s", n))
    }

    pub fn n_methods(&self) -> usize {
        self.n_methods
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn tie_policy(&self) -> TiePolicy {
        self.tie_policy
    }

    pub fn row(&self, method: usize) -> &[f64] {
        &self.ranks[method * self.n_samples..(method + 1) * self.n_samples]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.ranks.chunks_exact(self.n_samples)
    }

    pub fn method_ids(&self) -> &[String] {
        &self.method_ids
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    /// Mean rank of a strict permutation, (N+1)/2. Midrank rows share it.
    pub fn mean_rank(&self) -> f64 {
        (self.n_samples as f64 + 1.0) / 2.0
    }

    /// Restricts the matrix to the given methods, in the given order.
    pub fn select_methods(&self, methods: &[usize]) -> Result<RankMatrix> {
        if methods.is_empty() {
            return Err(SummaError::invalid("method selection is empty"));
        }
        if let Some(&bad) = methods.iter().find(|&&m| m >= self.n_methods) {
            return Err(SummaError::invalid(format!("method index {bad} out of range")));
        }
        let mut ranks = Vec::with_capacity(methods.len() * self.n_samples);
        for &m in methods {
            ranks.extend_from_slice(self.row(m));
        }
        Ok(RankMatrix {
            ranks,
            n_methods: methods.len(),
            n_samples: self.n_samples,
            tie_policy: self.tie_policy,
            method_ids: methods.iter().map(|&m| self.method_ids[m].clone()).collect(),
            sample_ids: self.sample_ids.clone(),
        })
    }
}

fn is_permutation(row: &[f64]) -> bool {
    let n = row.len();
    let mut seen = vec![false; n];
    for &r in row {
        if r.fract() != 0.0 || r < 1.0 || r > n as f64 {
            return false;
        }
        let idx = r as usize - 1;
        if std::mem::replace(&mut seen[idx], true) {
            return false;
        }
    }
    true
}

/// Ground-truth binary labels (1 = positive class).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    labels: Vec<u8>,
    n_positive: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(SummaError::invalid(format!("label {bad} is not 0 or 1")));
        }
        let n_positive = labels.iter().filter(|&&l| l == 1).count();
        Ok(LabelVector { labels, n_positive })
    }

    pub fn from_bools(labels: &[bool]) -> Self {
        let labels: Vec<u8> = labels.iter().map(|&b| u8::from(b)).collect();
        let n_positive = labels.iter().filter(|&&l| l == 1).count();
        LabelVector { labels, n_positive }
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.n_positive
    }

    pub fn n_negative(&self) -> usize {
        self.labels.len() - self.n_positive
    }

    pub fn is_positive(&self, k: usize) -> bool {
        self.labels[k] == 1
    }

    /// Fraction of positive samples.
    pub fn prevalence(&self) -> f64 {
        self.n_positive as f64 / self.labels.len() as f64
    }

    /// Labels with the classes swapped.
    pub fn flipped(&self) -> LabelVector {
        LabelVector {
            labels: self.labels.iter().map(|&l| 1 - l).collect(),
            n_positive: self.n_negative(),
        }
    }

    pub fn require_both_classes(&self) -> Result<()> {
        if self.n_positive == 0 || self.n_positive == self.labels.len() {
            return Err(SummaError::DegenerateLabels {
                n_positive: self.n_positive,
                n_samples: self.labels.len(),
            });
        }
        Ok(())
    }
}

/// Ranks one method's scores. Higher scores receive lower ranks.
pub fn rank_scores(scores: &[f64], tie_policy: TiePolicy) -> Result<Vec<f64>> {
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(SummaError::invalid("scores must be finite"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Stable sort: equal scores keep ascending sample index.
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));

    let mut ranks = vec![0.0; scores.len()];
    match tie_policy {
        TiePolicy::Strict => {
            for (pos, &k) in order.iter().enumerate() {
                ranks[k] = (pos + 1) as f64;
            }
        }
        TiePolicy::Midrank => {
            let mut start = 0;
            while start < order.len() {
                let mut end = start + 1;
                while end < order.len() && scores[order[end]] == scores[order[start]] {
                    end += 1;
                }
                // positions start..end hold ranks start+1..=end
                let shared = (start + 1 + end) as f64 / 2.0;
                for &k in &order[start..end] {
                    ranks[k] = shared;
                }
                start = end;
            }
        }
    }
    Ok(ranks)
}

/// Rank-transforms every method of a score matrix.
pub fn rank_transform(scores: &ScoreMatrix, tie_policy: TiePolicy) -> Result<RankMatrix> {
    let mut ranks = Vec::with_capacity(scores.n_methods * scores.n_samples);
    for row in scores.rows() {
        ranks.extend(rank_scores(row, tie_policy)?);
    }
    Ok(RankMatrix {
        ranks,
        n_methods: scores.n_methods,
        n_samples: scores.n_samples,
        tie_policy,
        method_ids: scores.method_ids.clone(),
        sample_ids: scores.sample_ids.clone(),
    })
}

fn check_lengths<T>(ranks: &[T], labels: &LabelVector) -> Result<()> {
    if ranks.len() != labels.len() {
        return Err(SummaError::invalid(format!(
            "{} ranks but {} labels",
            ranks.len(),
            labels.len()
        )));
    }
    labels.require_both_classes()
}

fn class_rank_sums<T: Scalar>(ranks: &[T], labels: &LabelVector) -> (T, T) {
    ranks.iter().zip(labels.labels()).fold((T::zero(), T::zero()), |(s0, s1), (r, &l)| {
        if l == 1 {
            (s0, s1 + r.clone())
        } else {
            (s0 + r.clone(), s1)
        }
    })
}

/// Difference of class-conditional mean ranks, `<r|neg> - <r|pos>`.
pub fn delta<T: Scalar>(ranks: &[T], labels: &LabelVector) -> Result<T> {
    check_lengths(ranks, labels)?;
    let (s0, s1) = class_rank_sums(ranks, labels);
    Ok(s0 / scalar(labels.n_negative()) - s1 / scalar(labels.n_positive()))
}

/// AUROC implied by a rank-mean difference: `delta / N + 1/2`. Not clamped.
pub fn auroc_from_delta<T: Scalar>(delta: T, n_samples: usize) -> T {
    let half = T::one() / (T::one() + T::one());
    delta / scalar(n_samples) + half
}

/// Rectangle-rule AUROC, walking thresholds from rank 1 downward.
///
/// Defined only for strict permutations.
pub fn auroc_rectangle<T: Scalar>(ranks: &[T], labels: &LabelVector) -> Result<T> {
    check_lengths(ranks, labels)?;
    let mut order: Vec<usize> = (0..ranks.len()).collect();
    order.sort_by(|&a, &b| ranks[a].partial_cmp(&ranks[b]).unwrap_or(Ordering::Equal));
    let mut expected = T::zero();
    for &k in &order {
        expected = expected + T::one();
        if ranks[k] != expected {
            return Err(SummaError::TiesUnsupported);
        }
    }

    // Each negative contributes TPR / N0 at the threshold just above it.
    let mut true_positives = 0usize;
    let mut area = 0usize;
    for &k in &order {
        if labels.is_positive(k) {
            true_positives += 1;
        } else {
            area += true_positives;
        }
    }
    Ok(scalar::<T>(area) / scalar(labels.n_positive() * labels.n_negative()))
}

/// Mann-Whitney U computed from the negative-class rank sum.
pub fn mann_whitney_u0<T: Scalar>(ranks: &[T], labels: &LabelVector) -> Result<T> {
    check_lengths(ranks, labels)?;
    let (s0, _) = class_rank_sums(ranks, labels);
    let n0 = labels.n_negative();
    Ok(s0 - scalar::<T>(n0 * (n0 + 1)) / scalar(2))
}
