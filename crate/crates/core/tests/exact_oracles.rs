//! Rank statistics and moments checked against exact rational arithmetic.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use proptest::prelude::*;

use summa::moments::{covariance_matrix, third_moment_offdiag};
use summa::ranking::{auroc_from_delta, delta, rank_scores, LabelVector, RankMatrix, TiePolicy};

fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap()
}

fn exact_mean(row: &[f64]) -> BigRational {
    row.iter().map(|&x| rat(x)).fold(BigRational::zero(), |a, b| a + b) / BigInt::from(row.len())
}

fn close(got: f64, want: &BigRational) -> bool {
    let w = want.to_f64().unwrap();
    (got - w).abs() <= 1e-10 * w.abs().max(1.0)
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<f64>> {
    Just((1..=n).map(|r| r as f64).collect::<Vec<_>>()).prop_shuffle()
}

fn rank_rows() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (3usize..=5, 3usize..=12).prop_flat_map(|(m, n)| prop::collection::vec(permutation(n), m))
}

/// Scores drawn from a small set so ties are common.
fn tied_scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0i32..6).prop_map(f64::from), 2..20)
}

proptest! {
    #[test]
    fn covariance_matches_exact_computation(rows in rank_rows()) {
        let ranks = RankMatrix::from_rows(rows.clone(), TiePolicy::Strict).unwrap();
        let q2 = covariance_matrix(&ranks);
        let n = BigInt::from(rows[0].len());
        let means: Vec<BigRational> = rows.iter().map(|r| exact_mean(r)).collect();
        for i in 0..rows.len() {
            for j in 0..rows.len() {
                let s = rows[i].iter().zip(&rows[j]).fold(BigRational::zero(), |acc, (&a, &b)| {
                    acc + (rat(a) - &means[i]) * (rat(b) - &means[j])
                });
                prop_assert!(close(q2[(i, j)], &(s / &n)));
                prop_assert_eq!(q2[(i, j)], q2[(j, i)]);
            }
            // uniform variance of a permutation of 1..N
            let nn = rows[0].len() as f64;
            prop_assert!((q2[(i, i)] - (nn * nn - 1.0) / 12.0).abs() < 1e-9);
        }
    }

    #[test]
    fn third_moments_match_exact_computation(rows in rank_rows()) {
        let ranks = RankMatrix::from_rows(rows.clone(), TiePolicy::Strict).unwrap();
        let q3 = third_moment_offdiag(&ranks).unwrap();
        let n = BigInt::from(rows[0].len());
        let means: Vec<BigRational> = rows.iter().map(|r| exact_mean(r)).collect();
        let m = rows.len();
        for i in 0..m {
            for j in 0..m {
                for l in 0..m {
                    if i == j || j == l || i == l {
                        continue;
                    }
                    let s = (0..rows[0].len()).fold(BigRational::zero(), |acc, k| {
                        acc + (rat(rows[i][k]) - &means[i]) * (rat(rows[j][k]) - &means[j]) * (rat(rows[l][k]) - &means[l])
                    });
                    prop_assert!(close(q3.get(i, j, l), &(s / &n)));
                }
            }
        }
    }

    #[test]
    fn delta_matches_exact_class_means(scores in tied_scores(), mask in any::<u32>()) {
        let n = scores.len();
        let labels: Vec<u8> = (0..n).map(|k| ((mask >> k) & 1) as u8).collect();
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let labels = LabelVector::new(labels).unwrap();
        let ranks = rank_scores(&scores, TiePolicy::Midrank).unwrap();
        let (mut s0, mut s1) = (BigRational::zero(), BigRational::zero());
        for (k, &r) in ranks.iter().enumerate() {
            if labels.is_positive(k) { s1 += rat(r) } else { s0 += rat(r) }
        }
        let want = s0 / BigInt::from(labels.n_negative()) - s1 / BigInt::from(labels.n_positive());
        let got = delta(&ranks, &labels).unwrap();
        prop_assert!(close(got, &want));
        let auc = auroc_from_delta(got, n);
        prop_assert!((0.0..=1.0).contains(&auc));
    }

    #[test]
    fn ranks_ignore_increasing_transforms(scores in tied_scores()) {
        for policy in [TiePolicy::Midrank, TiePolicy::Strict] {
            let base = rank_scores(&scores, policy).unwrap();
            for f in [|x: f64| 3.0 * x + 1.0, |x: f64| (x / 7.0).exp(), |x: f64| x * x * x] {
                let moved: Vec<f64> = scores.iter().map(|&x| f(x)).collect();
                prop_assert_eq!(&rank_scores(&moved, policy).unwrap(), &base);
            }
        }
    }

    #[test]
    fn third_moments_are_symmetric(rows in rank_rows()) {
        let q3 = third_moment_offdiag(&RankMatrix::from_rows(rows.clone(), TiePolicy::Strict).unwrap()).unwrap();
        let m = rows.len();
        for (i, j, l) in [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)] {
            prop_assert_eq!(q3.get(i, j, l), q3.get(0, 1, 2));
        }
        prop_assert_eq!(q3.len(), m * (m - 1) * (m - 2) / 6);
    }

    #[test]
    fn midranks_average_tied_positions(scores in tied_scores()) {
        let ranks = rank_scores(&scores, TiePolicy::Midrank).unwrap();
        let n = scores.len() as f64;
        prop_assert!((ranks.iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
        for (a, &x) in scores.iter().enumerate() {
            // rank 1 is the highest score
            let above = scores.iter().filter(|&&y| y > x).count() as f64;
            let tied = scores.iter().filter(|&&y| y == x).count() as f64;
            prop_assert_eq!(ranks[a], above + (tied + 1.0) / 2.0);
        }
    }
}
