//! Empirical rank moments and the exact-enumeration moment oracle.

use nalgebra::DMatrix;
use num_traits::Signed;
use rayon::prelude::*;

use crate::error::{Result, SummaError};
use crate::ranking::{RankMatrix, Scalar};

/// Largest rank support the enumeration oracle accepts.
pub const MAX_ORACLE_SAMPLES: usize = 12;
/// Largest number of methods the enumeration oracle accepts.
pub const MAX_ORACLE_METHODS: usize = 5;

/// Second-order covariance matrix plus (optionally) the distinct-index
/// third-order central moments of a rank matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentStats {
    pub q2: DMatrix<f64>,
    pub q3: Option<ThirdMoments>,
    pub n_samples: usize,
    pub mean_ranks: Vec<f64>,
}

impl MomentStats {
    pub fn from_ranks(ranks: &RankMatrix, with_third_order: bool) -> Result<Self> {
        let q3 = if with_third_order { Some(third_moment_offdiag(ranks)?) } else { None };
        Ok(MomentStats {
            q2: covariance_matrix(ranks),
            q3,
            n_samples: ranks.n_samples(),
            mean_ranks: ranks.rows().map(mean).collect(),
        })
    }
}

fn mean(row: &[f64]) -> f64 {
    row.iter().sum::<f64>() / row.len() as f64
}

fn centered_rows(ranks: &RankMatrix) -> Vec<Vec<f64>> {
    ranks
        .rows()
        .map(|row| {
            let m = mean(row);
            row.iter().map(|r| r - m).collect()
        })
        .collect()
}

/// Population (1/N) covariance of the rank rows.
pub fn covariance_matrix(ranks: &RankMatrix) -> DMatrix<f64> {
    let centered = centered_rows(ranks);
    let m = centered.len();
    let n = ranks.n_samples() as f64;
    let mut q2 = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let c: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum::<f64>() / n;
            q2[(i, j)] = c;
            q2[(j, i)] = c;
        }
    }
    q2
}

/// Third-order central moments `Q3(i,j,l)` for distinct `i, j, l`, stored once
/// per unordered triple in lexicographic order of `i < j < l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThirdMoments {
    n_methods: usize,
    values: Vec<f64>,
}

fn choose3(m: usize) -> usize {
    if m < 3 {
        0
    } else {
        m * (m - 1) * (m - 2) / 6
    }
}

fn choose2(m: usize) -> usize {
    if m < 2 {
        0
    } else {
        m * (m - 1) / 2
    }
}

impl ThirdMoments {
    /// Builds from values laid out in lexicographic `i < j < l` order.
    pub fn from_values(n_methods: usize, values: Vec<f64>) -> Result<Self> {
        if n_methods < 3 {
            return Err(SummaError::TooFewMethods { required: 3, found: n_methods });
        }
        if values.len() != choose3(n_methods) {
            return Err(SummaError::invalid(format!(
                "expected {} off-diagonal triples for {} methods, got {}",
                choose3(n_methods),
                n_methods,
                values.len()
            )));
        }
        Ok(ThirdMoments { n_methods, values })
    }

    /// Off-diagonal entries of `scale * a ⊗ a ⊗ a`.
    pub fn from_rank1(scale: f64, a: &[f64]) -> Result<Self> {
        let m = a.len();
        let mut values = Vec::with_capacity(choose3(m));
        for i in 0..m {
            for j in i + 1..m {
                for l in j + 1..m {
                    values.push(scale * a[i] * a[j] * a[l]);
                }
            }
        }
        Self::from_values(m, values)
    }

    pub fn n_methods(&self) -> usize {
        self.n_methods
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn offset(&self, i: usize, j: usize, l: usize) -> usize {
        let m = self.n_methods;
        // triples whose first index is below i, then pairs (j, l) in the i-block
        let before_i = choose3(m) - choose3(m - i);
        let rest = m - i - 1;
        let jj = j - i - 1;
        let before_j = choose2(rest) - choose2(rest - jj);
        before_i + before_j + (l - j - 1)
    }

    /// Entry for three distinct indices given in any order.
    pub fn get(&self, i: usize, j: usize, l: usize) -> f64 {
        let mut idx = [i, j, l];
        idx.sort_unstable();
        assert!(
            idx[0] != idx[1] && idx[1] != idx[2] && idx[2] < self.n_methods,
            "third-moment index ({i}, {j}, {l}) is not a distinct in-range triple"
        );
        self.values[self.offset(idx[0], idx[1], idx[2])]
    }

    /// Iterates `((i, j, l), value)` with `i < j < l`.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize, usize), f64)> + '_ {
        let m = self.n_methods;
        (0..m)
            .flat_map(move |i| (i + 1..m).flat_map(move |j| (j + 1..m).map(move |l| (i, j, l))))
            .zip(self.values.iter().copied())
    }
}

/// Third-order central moments over all distinct method triples.
pub fn third_moment_offdiag(ranks: &RankMatrix) -> Result<ThirdMoments> {
    let m = ranks.n_methods();
    if m < 3 {
        return Err(SummaError::TooFewMethods { required: 3, found: m });
    }
    let centered = centered_rows(ranks);
    let n = ranks.n_samples();
    let inv_n = 1.0 / n as f64;
    // One block per leading index; blocks are concatenated in order, so the
    // result does not depend on scheduling.
    let blocks: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut block = Vec::with_capacity(choose2(m - i - 1));
            let mut pair = vec![0.0; n];
            for j in i + 1..m {
                for (p, (a, b)) in pair.iter_mut().zip(centered[i].iter().zip(&centered[j])) {
                    *p = a * b;
                }
                for row in &centered[j + 1..] {
                    let s: f64 = pair.iter().zip(row).map(|(p, c)| p * c).sum();
                    block.push(s * inv_n);
                }
            }
            block
        })
        .collect();
    ThirdMoments::from_values(m, blocks.concat())
}

/// Class-conditional rank distributions of a set of methods, assumed
/// conditionally independent given the class.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalRankModel<T> {
    /// `p0[i][r-1]` = P(rank r | class 0) for method i.
    pub p0: Vec<Vec<T>>,
    /// `p1[i][r-1]` = P(rank r | class 1) for method i.
    pub p1: Vec<Vec<T>>,
    /// Prevalence of class 1.
    pub rho: T,
}

impl<T: Scalar + Signed> ConditionalRankModel<T> {
    pub fn new(p0: Vec<Vec<T>>, p1: Vec<Vec<T>>, rho: T) -> Result<Self> {
        let m = p0.len();
        if m == 0 || p1.len() != m {
            return Err(SummaError::invalid("p0 and p1 must describe the same non-empty method set"));
        }
        if m > MAX_ORACLE_METHODS {
            return Err(SummaError::invalid(format!(
                "enumeration oracle supports at most {MAX_ORACLE_METHODS} methods"
            )));
        }
        let n = p0[0].len();
        if n == 0 || n > MAX_ORACLE_SAMPLES {
            return Err(SummaError::invalid(format!(
                "rank support must be 1..={MAX_ORACLE_SAMPLES}, got {n}"
            )));
        }
        if rho < T::zero() || rho > T::one() {
            return Err(SummaError::invalid("rho must lie in [0, 1]"));
        }
        let tol = T::from_f64(1e-12).expect("tolerance representable");
        for dist in p0.iter().chain(&p1) {
            if dist.len() != n {
                return Err(SummaError::invalid("all distributions must share one rank support"));
            }
            if dist.iter().any(|p| *p < T::zero()) {
                return Err(SummaError::invalid("negative probability"));
            }
            let total = dist.iter().fold(T::zero(), |acc, p| acc + p.clone());
            if (total - T::one()).abs() > tol {
                return Err(SummaError::invalid("distribution does not sum to one"));
            }
        }
        Ok(ConditionalRankModel { p0, p1, rho })
    }
}

impl<T: Scalar> ConditionalRankModel<T> {
    pub fn n_methods(&self) -> usize {
        self.p0.len()
    }

    pub fn n_ranks(&self) -> usize {
        self.p0[0].len()
    }

    fn conditional_mean(dist: &[T]) -> T {
        dist.iter().enumerate().fold(T::zero(), |acc, (k, p)| {
            acc + p.clone() * T::from_usize(k + 1).expect("rank representable")
        })
    }

    /// `<r|class 0> - <r|class 1>` for one method.
    pub fn delta(&self, method: usize) -> T {
        Self::conditional_mean(&self.p0[method]) - Self::conditional_mean(&self.p1[method])
    }

    /// Marginal mean rank of one method.
    pub fn mean_rank(&self, method: usize) -> T {
        self.rho.clone() * Self::conditional_mean(&self.p1[method])
            + (T::one() - self.rho.clone()) * Self::conditional_mean(&self.p0[method])
    }
}

fn check_subset<T: Scalar>(model: &ConditionalRankModel<T>, subset: &[usize], order: usize) -> Result<()> {
    if order < 2 || order > subset.len() {
        return Err(SummaError::invalid(format!(
            "moment order {order} must satisfy 2 <= order <= {}",
            subset.len()
        )));
    }
    let chosen = &subset[..order];
    if chosen.iter().any(|&i| i >= model.n_methods()) {
        return Err(SummaError::invalid("method index out of range"));
    }
    for (a, &i) in chosen.iter().enumerate() {
        if chosen[a + 1..].contains(&i) {
            return Err(SummaError::invalid("moment subset must contain distinct methods"));
        }
    }
    Ok(())
}

/// Central cross moment `<(r_1 - <r_1>) ... (r_l - <r_l>)>` of the first
/// `order` methods of `subset`, by brute-force enumeration of the joint
/// distribution `P(sigma) * prod_i P_i(r_i | sigma)` over every rank tuple.
pub fn exact_central_moment<T: Scalar>(
    model: &ConditionalRankModel<T>,
    subset: &[usize],
    order: usize,
) -> Result<T> {
    check_subset(model, subset, order)?;
    let methods = &subset[..order];
    let means: Vec<T> = methods.iter().map(|&i| model.mean_rank(i)).collect();
    let n = model.n_ranks();
    let centered: Vec<Vec<T>> = means
        .iter()
        .map(|mu| {
            (1..=n)
                .map(|r| T::from_usize(r).expect("rank representable") - mu.clone())
                .collect()
        })
        .collect();

    let mut total = T::zero();
    for (class_weight, dists) in [
        (T::one() - model.rho.clone(), &model.p0),
        (model.rho.clone(), &model.p1),
    ] {
        let tables: Vec<&[T]> = methods.iter().map(|&i| dists[i].as_slice()).collect();
        let mut tuple = vec![0usize; order];
        'tuples: loop {
            let mut prob = class_weight.clone();
            let mut product = T::one();
            for (pos, &r) in tuple.iter().enumerate() {
                prob = prob * tables[pos][r].clone();
                product = product * centered[pos][r].clone();
            }
            total = total + prob * product;

            // odometer over rank tuples
            let mut pos = order;
            loop {
                if pos == 0 {
                    break 'tuples;
                }
                pos -= 1;
                tuple[pos] += 1;
                if tuple[pos] < n {
                    break;
                }
                tuple[pos] = 0;
            }
        }
    }
    Ok(total)
}

/// Closed form `rho(1-rho)(rho^(l-1) - (rho-1)^(l-1)) * prod Delta_j` that the
/// enumerated moment must equal under conditional independence.
pub fn closed_form_central_moment<T: Scalar>(
    model: &ConditionalRankModel<T>,
    subset: &[usize],
    order: usize,
) -> Result<T> {
    check_subset(model, subset, order)?;
    let rho = model.rho.clone();
    let one = T::one();
    let mut rho_pow = one.clone();
    let mut shifted_pow = one.clone();
    for _ in 0..order - 1 {
        rho_pow = rho_pow * rho.clone();
        shifted_pow = shifted_pow * (rho.clone() - one.clone());
    }
    let deltas = subset[..order]
        .iter()
        .fold(one.clone(), |acc, &i| acc * model.delta(i));
    Ok(rho.clone() * (one - rho) * (rho_pow - shifted_pow) * deltas)
}
