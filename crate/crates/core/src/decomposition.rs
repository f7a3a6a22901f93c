//! Rank-1 recovery from off-diagonal second- and third-order observations.
//!
//! The covariance of conditionally independent rankers is rank one off the
//! diagonal, but its diagonal is not. [`recover_rank1_matrix`] fills the
//! diagonal in by alternating between the affine set of matrices that agree
//! with the observed off-diagonals and the set of rank-1 PSD matrices.
//! [`recover_rank1_tensor`] does the same for the distinct-index third
//! moments, using symmetric higher-order power iteration for the rank-1 step.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PartialRecovery, Result, SummaError};
use crate::moments::ThirdMoments;

/// Fewest methods for which the matrix diagonal is identifiable.
pub const MIN_MATRIX_METHODS: usize = 4;
/// Fewest methods for which the tensor recovery has redundant observations.
pub const MIN_TENSOR_METHODS: usize = 5;

/// Off-diagonals below this fraction of the largest entry count as absent.
const SIGNAL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryOptions {
    /// Relative tolerance on successive leading values.
    pub tol: f64,
    pub max_iter: usize,
    /// Tolerance on the eigenvector change inside each power iteration.
    pub inner_tol: f64,
    pub inner_max_iter: usize,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        RecoveryOptions { tol: 1e-6, max_iter: 1000, inner_tol: 1e-10, inner_max_iter: 100_000 }
    }
}

impl RecoveryOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
}

/// Leading singular value of a symmetric matrix with its unit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Result of the matrix recovery: `R = lambda * v v^T`, `Q2 = R + diag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rank1Recovery {
    pub lambda: f64,
    pub v: Vec<f64>,
    pub diag: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Frobenius norm of the off-diagonal mismatch `P_offdiag(R - Q2)`.
    pub residual: f64,
}

/// Result of the tensor recovery: off-diagonals of `lambda_t * u ⊗ u ⊗ u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecovery {
    pub lambda_t: f64,
    pub u: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn mat_vec(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let m = a.nrows();
    (0..m).map(|i| (0..m).map(|j| a[(i, j)] * x[j]).sum()).collect()
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(SummaError::invalid("matrix must be square"));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(SummaError::invalid("matrix has non-finite entries"));
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let m = a.nrows();
    for i in 0..m {
        for j in i + 1..m {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-10 * scale {
                return Err(SummaError::invalid("matrix must be symmetric"));
            }
        }
    }
    Ok(())
}

/// Signed eigenpair from power iteration.
#[derive(Debug, Clone)]
struct EigenPair {
    value: f64,
    vector: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn power_iteration(a: &DMatrix<f64>, start: &[f64], tol: f64, max_iter: usize) -> EigenPair {
    let mut x: Vec<f64> = {
        let n = norm(start);
        start.iter().map(|s| s / n).collect()
    };
    let mut value = 0.0;
    for it in 1..=max_iter {
        let y = mat_vec(a, &x);
        let ny = norm(&y);
        if ny == 0.0 {
            return EigenPair { value: 0.0, vector: x, iterations: it, converged: true };
        }
        value = dot(&x, &y);
        let next: Vec<f64> = y.iter().map(|v| v / ny).collect();
        // a negative eigenvalue flips the iterate each step
        let diff_same = next.iter().zip(&x).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let diff_flip = next.iter().zip(&x).map(|(p, q)| (p + q).powi(2)).sum::<f64>().sqrt();
        x = next;
        if diff_same.min(diff_flip) <= tol {
            value = dot(&x, &mat_vec(a, &x));
            return EigenPair { value, vector: x, iterations: it, converged: true };
        }
    }
    EigenPair { value, vector: x, iterations: max_iter, converged: false }
}

/// Dominant (largest-magnitude) eigenpair. Starts from `warm` if given, then
/// the normalized all-ones vector, then the unit vectors `e_1, e_2, ...` until
/// the result can be the dominant one: a dominant eigenvalue always satisfies
/// `|lambda| >= ||A||_F / sqrt(M)`.
fn dominant_eigenpair(a: &DMatrix<f64>, warm: Option<&[f64]>, tol: f64, max_iter: usize) -> EigenPair {
    let m = a.nrows();
    let floor = a.norm() / (m as f64).sqrt() * (1.0 - 1e-9);
    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(m + 2);
    if let Some(w) = warm {
        if norm(w) > 0.0 {
            starts.push(w.to_vec());
        }
    }
    starts.push(vec![1.0; m]);
    for k in 0..m {
        let mut e = vec![0.0; m];
        e[k] = 1.0;
        starts.push(e);
    }

    let mut best: Option<EigenPair> = None;
    for start in starts {
        let pair = power_iteration(a, &start, tol, max_iter);
        if pair.value.abs() >= floor {
            return pair;
        }
        if best.as_ref().is_none_or(|b| pair.value.abs() > b.value.abs()) {
            best = Some(pair);
        }
    }
    best.expect("at least one start vector")
}

/// Largest algebraic eigenpair: shifts by the dominant magnitude when the
/// dominant eigenvalue is negative.
fn top_eigenpair(a: &DMatrix<f64>, warm: Option<&[f64]>, tol: f64, max_iter: usize) -> EigenPair {
    let dominant = dominant_eigenpair(a, warm, tol, max_iter);
    if dominant.value >= 0.0 {
        return dominant;
    }
    let shift = dominant.value.abs();
    let shifted = a + DMatrix::identity(a.nrows(), a.ncols()) * shift;
    if shifted.amax() == 0.0 {
        return dominant;
    }
    let mut top = dominant_eigenpair(&shifted, warm, tol, max_iter);
    top.value -= shift;
    top.iterations += dominant.iterations;
    top.converged &= dominant.converged;
    top
}

/// Leading singular value and vector of a symmetric matrix by power
/// iteration from the normalized all-ones vector.
pub fn leading_singular_pair(a: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<SingularPair> {
    check_symmetric(a)?;
    if a.amax() == 0.0 {
        return Err(SummaError::ZeroMatrix);
    }
    let pair = dominant_eigenpair(a, None, tol, max_iter);
    Ok(SingularPair {
        value: pair.value.abs(),
        vector: pair.vector,
        iterations: pair.iterations,
        converged: pair.converged,
    })
}

/// Chooses between `v` and `-v` so that most entries are positive. Ties go to
/// the sign with a nonnegative entry sum, then to a positive first nonzero
/// entry.
pub fn resolve_sign(v: &[f64]) -> Vec<f64> {
    let positive = v.iter().filter(|&&x| x > 0.0).count();
    let negative = v.iter().filter(|&&x| x < 0.0).count();
    let keep = match positive.cmp(&negative) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => {
            let sum: f64 = v.iter().sum();
            if sum != 0.0 {
                sum > 0.0
            } else {
                v.iter().find(|&&x| x != 0.0).is_none_or(|&x| x > 0.0)
            }
        }
    };
    if keep {
        v.to_vec()
    } else {
        v.iter().map(|x| -x).collect()
    }
}

/// Flags methods with `v_i^2 >= sum_{j != i} v_j^2`, where the rank-1 plus
/// diagonal split is no longer guaranteed unique.
pub fn check_recoverability(v: &[f64]) -> Vec<bool> {
    let total: f64 = v.iter().map(|x| x * x).sum();
    v.iter().map(|x| x * x >= total - x * x).collect()
}

fn offdiag_residual(q2: &DMatrix<f64>, lambda: f64, u: &[f64]) -> f64 {
    let m = q2.nrows();
    let mut sum = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                sum += (lambda * u[i] * u[j] - q2[(i, j)]).powi(2);
            }
        }
    }
    sum.sqrt()
}

/// One step of the matrix recovery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompletionStep {
    pub lambda: f64,
    /// Off-diagonal mismatch of the new rank-1 iterate.
    pub residual: f64,
}

/// State of the diagonal-imputation iteration
/// `Y <- Q2 - diag(Q2) + diag(lambda u u^T)`, `(lambda, u) <- top eigenpair of Y`.
#[derive(Debug, Clone)]
pub struct MatrixCompletion {
    q2: DMatrix<f64>,
    y: DMatrix<f64>,
    lambda: f64,
    u: Option<Vec<f64>>,
    iterations: usize,
    opts: RecoveryOptions,
}

impl MatrixCompletion {
    /// Starts from the off-diagonal part of `q2` (zero diagonal).
    pub fn new(q2: &DMatrix<f64>, opts: RecoveryOptions) -> Result<Self> {
        check_symmetric(q2)?;
        let m = q2.nrows();
        if m < MIN_MATRIX_METHODS {
            return Err(SummaError::TooFewMethods { required: MIN_MATRIX_METHODS, found: m });
        }
        let scale = q2.amax();
        let off_max = (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| q2[(i, j)].abs())
            .fold(0.0, f64::max);
        if off_max <= SIGNAL_FLOOR * scale {
            return Err(SummaError::NoSignal("off-diagonal covariances are all zero".into()));
        }
        let mut y = q2.clone();
        y.fill_diagonal(0.0);
        Ok(MatrixCompletion { q2: q2.clone(), y, lambda: 0.0, u: None, iterations: 0, opts })
    }

    /// Starts from a given rank-1 iterate, imputing its diagonal.
    pub fn from_iterate(q2: &DMatrix<f64>, lambda: f64, u: &[f64], opts: RecoveryOptions) -> Result<Self> {
        let mut state = Self::new(q2, opts)?;
        if u.len() != q2.nrows() {
            return Err(SummaError::invalid("iterate length does not match matrix"));
        }
        state.impute(lambda, u);
        state.lambda = lambda;
        state.u = Some(u.to_vec());
        Ok(state)
    }

    fn impute(&mut self, lambda: f64, u: &[f64]) {
        for (i, ui) in u.iter().enumerate() {
            self.y[(i, i)] = lambda * ui * ui;
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn vector(&self) -> Option<&[f64]> {
        self.u.as_deref()
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Projects the current completed matrix onto rank-1 PSD matrices and
    /// re-imputes the diagonal.
    pub fn step(&mut self) -> Result<CompletionStep> {
        let pair = top_eigenpair(&self.y, self.u.as_deref(), self.opts.inner_tol, self.opts.inner_max_iter);
        self.iterations += 1;
        if pair.value <= 0.0 {
            return Err(SummaError::NoSignal(
                "completed covariance has no positive eigenvalue".into(),
            ));
        }
        self.lambda = pair.value;
        self.impute(pair.value, &pair.vector);
        let residual = offdiag_residual(&self.q2, pair.value, &pair.vector);
        self.u = Some(pair.vector);
        Ok(CompletionStep { lambda: self.lambda, residual })
    }

    fn finish(&self, converged: bool, residual: f64) -> Rank1Recovery {
        let u = self.u.as_deref().expect("at least one step taken");
        let v = resolve_sign(u);
        let diag = v
            .iter()
            .enumerate()
            .map(|(i, vi)| self.q2[(i, i)] - self.lambda * vi * vi)
            .collect();
        Rank1Recovery { lambda: self.lambda, v, diag, iterations: self.iterations, converged, residual }
    }
}

/// Recovers `(lambda, v, D)` with `Q2 ≈ lambda v v^T + D` from the
/// off-diagonal entries of `q2`.
///
/// Stops when successive leading values differ by at most
/// `tol * max(1, lambda)`.
pub fn recover_rank1_matrix(q2: &DMatrix<f64>, opts: RecoveryOptions) -> Result<Rank1Recovery> {
    let mut state = MatrixCompletion::new(q2, opts)?;
    let mut previous: Option<f64> = None;
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let step = state.step()?;
        residual = step.residual;
        if let Some(prev) = previous {
            if (step.lambda - prev).abs() <= opts.tol * step.lambda.max(1.0) {
                return Ok(state.finish(true, residual));
            }
        }
        previous = Some(step.lambda);
    }
    if state.u.is_none() {
        return Err(SummaError::invalid("max_iter must be at least 1"));
    }
    Err(SummaError::NotConverged {
        iterations: state.iterations,
        partial: Box::new(PartialRecovery::Matrix(state.finish(false, residual))),
    })
}

/// `T(., w, w)` for the tensor whose distinct-index entries come from `q3`
/// and whose repeated-index entries are those of `lambda * z ⊗ z ⊗ z`.
fn contract_imputed(q3: &ThirdMoments, lambda: f64, z: &[f64], w: &[f64]) -> Vec<f64> {
    let m = z.len();
    let mut g = vec![0.0; m];
    for ((i, j, l), t) in q3.iter() {
        let t2 = 2.0 * t;
        g[i] += t2 * w[j] * w[l];
        g[j] += t2 * w[i] * w[l];
        g[l] += t2 * w[i] * w[j];
    }
    if lambda != 0.0 {
        let p: Vec<f64> = z.iter().zip(w).map(|(a, b)| a * b).collect();
        let total: f64 = p.iter().sum();
        let squares: f64 = p.iter().map(|x| x * x).sum();
        for i in 0..m {
            // sum over (j, l) where {i, j, l} is not three distinct indices
            let distinct = (total - p[i]).powi(2) - (squares - p[i] * p[i]);
            let repeated = total * total - distinct;
            g[i] += lambda * z[i] * repeated;
        }
    }
    g
}

fn tensor_residual(q3: &ThirdMoments, lambda: f64, u: &[f64]) -> f64 {
    let sum: f64 = q3
        .iter()
        .map(|((i, j, l), t)| (lambda * u[i] * u[j] * u[l] - t).powi(2))
        .sum();
    // each unordered triple appears six times in the full tensor
    (6.0 * sum).sqrt()
}

/// Recovers `(lambda_t, u)` with `Q3(i,j,l) ≈ lambda_t u_i u_j u_l` for
/// distinct indices, with `u` sign-aligned to `v_hint`.
///
/// Each iteration imputes the repeated-index entries from the current rank-1
/// iterate and takes one symmetric power step `u <- T(., u, u) / ||T(., u, u)||`.
/// Because the step is even in `u`, the internal iterate carries a positive
/// scale; the final alignment to the hint moves the sign into `lambda_t`.
pub fn recover_rank1_tensor(q3: &ThirdMoments, v_hint: &[f64], opts: RecoveryOptions) -> Result<TensorRecovery> {
    let m = q3.n_methods();
    if m < MIN_TENSOR_METHODS {
        return Err(SummaError::TooFewMethods { required: MIN_TENSOR_METHODS, found: m });
    }
    if v_hint.len() != m {
        return Err(SummaError::invalid("hint length does not match tensor dimension"));
    }
    let hint_norm = norm(v_hint);
    if hint_norm == 0.0 || !hint_norm.is_finite() {
        return Err(SummaError::invalid("hint must be a nonzero finite vector"));
    }
    if q3.values().iter().any(|x| !x.is_finite()) {
        return Err(SummaError::invalid("third moments have non-finite entries"));
    }
    let max_abs = q3.values().iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if max_abs <= f64::MIN_POSITIVE {
        return Err(SummaError::NoSignal("third-order off-diagonals are all zero".into()));
    }

    let hint: Vec<f64> = v_hint.iter().map(|x| x / hint_norm).collect();
    let mut u = hint.clone();
    let mut lambda = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        iterations = it;
        let g = contract_imputed(q3, lambda, &u, &u);
        let gn = norm(&g);
        if gn == 0.0 || !gn.is_finite() {
            return Err(SummaError::NoSignal("tensor contraction vanished".into()));
        }
        let next: Vec<f64> = g.iter().map(|x| x / gn).collect();
        // same imputed tensor, evaluated at the new direction
        let next_lambda = dot(&next, &contract_imputed(q3, lambda, &u, &next));
        let done = it > 1 && (next_lambda - lambda).abs() <= opts.tol * next_lambda.abs().max(1.0);
        u = next;
        lambda = next_lambda;
        if done {
            converged = true;
            break;
        }
    }

    if dot(&u, &hint) < 0.0 {
        u.iter_mut().for_each(|x| *x = -*x);
        lambda = -lambda;
    }
    let result = TensorRecovery { lambda_t: lambda, residual: tensor_residual(q3, lambda, &u), u, iterations, converged };
    if converged {
        Ok(result)
    } else {
        Err(SummaError::NotConverged { iterations, partial: Box::new(PartialRecovery::Tensor(result)) })
    }
}

/// Least-squares scalar fitting the distinct-index entries of `q3` by
/// `lambda * v ⊗ v ⊗ v` for a fixed direction `v`.
pub fn project_rank1_tensor(q3: &ThirdMoments, v: &[f64]) -> Result<f64> {
    if v.len() != q3.n_methods() {
        return Err(SummaError::invalid("direction length does not match tensor dimension"));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for ((i, j, l), t) in q3.iter() {
        let w = v[i] * v[j] * v[l];
        num += t * w;
        den += w * w;
    }
    if den == 0.0 {
        return Err(SummaError::NoSignal("direction has fewer than three nonzero entries".into()));
    }
    Ok(num / den)
}
