//! Replicated simulation sweeps over one experimental axis.
//!
//! Replicate `r` uses the same simulation seed at every axis value, so the
//! values are compared on common random numbers. Combined with the per-method
//! streams of the simulator, a methods sweep at M = 5 sees exactly the first
//! five methods of the M = 30 run.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::RecoveryOptions;
use crate::ensemble::{evaluate_ensemble, evaluate_scores, summa_scores, woc_scores};
use crate::error::{Result, SummaError};
use crate::pipeline::{infer_ranks, InferOptions};
use crate::ranking::{rank_transform, TiePolicy};
use crate::simulation::{simulate_ensemble, SimulatedDataset, SimulationConfig};
use crate::stats::{mean, median, pearson, sem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Methods,
    Samples,
    Prevalence,
    /// Top-n SUMMA against random-n WOC on a fixed ensemble.
    EnsembleSize,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Methods => "methods",
            SweepAxis::Samples => "samples",
            SweepAxis::Prevalence => "prevalence",
            SweepAxis::EnsembleSize => "ensemble_size",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub replicates: usize,
    pub base: SimulationConfig,
    /// Random subsets per WOC point on the ensemble-size axis.
    pub woc_subsets: usize,
    /// Infer ρ from the tensor path instead of assuming the simulated value.
    pub infer_prevalence: bool,
    pub recovery: RecoveryOptions,
}

impl SweepConfig {
    pub fn new(axis: SweepAxis, values: Vec<f64>, replicates: usize, base: SimulationConfig) -> Self {
        SweepConfig {
            axis,
            values,
            replicates,
            base,
            woc_subsets: 50,
            infer_prevalence: false,
            recovery: RecoveryOptions::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(SummaError::invalid("sweep needs at least one axis value"));
        }
        if self.replicates == 0 {
            return Err(SummaError::invalid("sweep needs at least one replicate"));
        }
        for &x in &self.values {
            let integral = x.fract() == 0.0 && x >= 1.0;
            let ok = match self.axis {
                SweepAxis::Methods | SweepAxis::Samples => integral,
                SweepAxis::EnsembleSize => integral && x as usize <= self.base.n_methods,
                SweepAxis::Prevalence => x > 0.0 && x < 1.0,
            };
            if !ok {
                return Err(SummaError::invalid(format!("invalid {} value {x}", self.axis.name())));
            }
        }
        if self.axis == SweepAxis::EnsembleSize && self.woc_subsets == 0 {
            return Err(SummaError::invalid("woc_subsets must be positive"));
        }
        Ok(())
    }
}

/// One (axis value, replicate) cell. Metrics are NaN when the replicate
/// failed; `status` then holds the error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub replicate: usize,
    pub seed: u64,
    pub n_methods: usize,
    pub n_samples: usize,
    pub prevalence: f64,
    /// Pearson correlation of inferred against true AUROCs.
    pub correlation: f64,
    pub summa_auroc: f64,
    pub woc_auroc: f64,
    pub woc_auroc_sem: f64,
    pub best_true_auroc: f64,
    pub inferred_rho: f64,
    /// Whether the matrix recovery converged; a capped run still yields a row.
    pub converged: bool,
    pub status: String,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub axis: SweepAxis,
    pub value: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub correlation_median: f64,
    pub correlation_mean: f64,
    pub correlation_sem: f64,
    pub summa_auroc_mean: f64,
    pub summa_auroc_sem: f64,
    pub woc_auroc_mean: f64,
    pub woc_auroc_sem: f64,
}

/// SplitMix64 finalizer of `base + (replicate + 1) * golden gamma`.
pub fn replicate_seed(base: u64, replicate: usize) -> u64 {
    let mut z = base.wrapping_add((replicate as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Cell<'a> {
    cfg: &'a SweepConfig,
    value: f64,
    replicate: usize,
    sim: SimulationConfig,
}

impl Cell<'_> {
    fn row(&self) -> SweepRow {
        SweepRow {
            axis: self.cfg.axis,
            value: self.value,
            replicate: self.replicate,
            seed: self.sim.seed,
            n_methods: self.sim.n_methods,
            n_samples: self.sim.n_samples,
            prevalence: self.sim.prevalence,
            correlation: f64::NAN,
            summa_auroc: f64::NAN,
            woc_auroc: f64::NAN,
            woc_auroc_sem: f64::NAN,
            best_true_auroc: f64::NAN,
            inferred_rho: f64::NAN,
            converged: false,
            status: "ok".into(),
        }
    }
}

fn infer_options(cfg: &SweepConfig, sim: &SimulationConfig) -> InferOptions {
    InferOptions {
        tie_policy: TiePolicy::Midrank,
        prevalence: if cfg.infer_prevalence { None } else { Some(sim.prevalence) },
        use_tensor: true,
        recovery: cfg.recovery,
        accept_partial: true,
    }
}

struct Fitted {
    data: SimulatedDataset,
    ranks: crate::ranking::RankMatrix,
    weights: Vec<f64>,
    correlation: f64,
    summa_auroc: f64,
    inferred_rho: f64,
    converged: bool,
}

fn fit(cfg: &SweepConfig, sim: &SimulationConfig) -> Result<Fitted> {
    let data = simulate_ensemble(sim)?;
    let ranks = rank_transform(&data.scores, TiePolicy::Midrank)?;
    let out = infer_ranks(&ranks, &infer_options(cfg, sim))?;
    let estimated = out.report.aurocs_raw().ok_or_else(|| SummaError::invalid("report carries no AUROCs"))?;
    let correlation = pearson(&estimated, &data.true_aurocs).unwrap_or(f64::NAN);
    let summa_auroc = evaluate_ensemble(&out.summa, &data.labels)?;
    let inferred_rho = match (cfg.infer_prevalence, out.report.inferred_rho) {
        (true, _) => out.report.rho.unwrap_or(f64::NAN),
        (false, r) => r.unwrap_or(f64::NAN),
    };
    Ok(Fitted { converged: out.matrix.converged, weights: out.matrix.v, data, ranks, correlation, summa_auroc, inferred_rho })
}

fn single_cell(cell: &Cell) -> SweepRow {
    let mut row = cell.row();
    let result = fit(cell.cfg, &cell.sim).and_then(|f| {
        let woc = evaluate_ensemble(&woc_scores(&f.ranks), &f.data.labels)?;
        Ok((f, woc))
    });
    match result {
        Ok((f, woc)) => {
            row.correlation = f.correlation;
            row.summa_auroc = f.summa_auroc;
            row.woc_auroc = woc;
            row.woc_auroc_sem = 0.0;
            row.best_true_auroc = f.data.true_aurocs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.inferred_rho = f.inferred_rho;
            row.converged = f.converged;
        }
        Err(e) => row.status = e.to_string(),
    }
    row
}

fn ensemble_size_cells(cfg: &SweepConfig, replicate: usize) -> Vec<SweepRow> {
    let sim = SimulationConfig { seed: replicate_seed(cfg.base.seed, replicate), ..cfg.base };
    let cells: Vec<Cell> = cfg.values.iter().map(|&value| Cell { cfg, value, replicate, sim }).collect();
    let fitted = match fit(cfg, &sim) {
        Ok(f) => f,
        Err(e) => {
            return cells
                .iter()
                .map(|c| SweepRow { status: e.to_string(), ..c.row() })
                .collect();
        }
    };
    let m = sim.n_methods;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| fitted.weights[b].total_cmp(&fitted.weights[a]).then(a.cmp(&b)));
    let best = fitted.data.true_aurocs.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    cells
        .iter()
        .map(|cell| {
            let mut row = cell.row();
            let n = cell.value as usize;
            let result = (|| -> Result<(f64, f64, f64)> {
                let mut top = order[..n].to_vec();
                top.sort_unstable();
                let sub = fitted.ranks.select_methods(&top)?;
                let w: Vec<f64> = top.iter().map(|&i| fitted.weights[i]).collect();
                let summa = evaluate_ensemble(&summa_scores(&sub, &w)?, &fitted.data.labels)?;

                let mut rng = ChaCha20Rng::seed_from_u64(sim.seed);
                rng.set_stream(n as u64);
                let mut aurocs = Vec::with_capacity(cfg.woc_subsets);
                for _ in 0..cfg.woc_subsets {
                    let mut pick = sample(&mut rng, m, n).into_vec();
                    pick.sort_unstable();
                    let sub = fitted.ranks.select_methods(&pick)?;
                    aurocs.push(evaluate_scores(&woc_scores(&sub).scores, &fitted.data.labels)?);
                }
                Ok((summa, mean(&aurocs).unwrap_or(f64::NAN), sem(&aurocs).unwrap_or(0.0)))
            })();
            match result {
                Ok((summa, woc, woc_sem)) => {
                    row.correlation = fitted.correlation;
                    row.summa_auroc = summa;
                    row.woc_auroc = woc;
                    row.woc_auroc_sem = woc_sem;
                    row.best_true_auroc = best;
                    row.inferred_rho = fitted.inferred_rho;
                    row.converged = fitted.converged;
                }
                Err(e) => row.status = e.to_string(),
            }
            row
        })
        .collect()
}

/// Runs every (value, replicate) cell in parallel. Rows come back sorted by
/// axis value order, then replicate.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    cfg.base.validate().or_else(|e| match (cfg.axis, &e) {
        // the swept field may be the invalid one; each cell validates itself
        (SweepAxis::Methods | SweepAxis::Samples | SweepAxis::Prevalence, _) => Ok(()),
        _ => Err(e),
    })?;
    let r = cfg.replicates;
    if cfg.axis == SweepAxis::EnsembleSize {
        let per_rep: Vec<Vec<SweepRow>> = (0..r).into_par_iter().map(|rep| ensemble_size_cells(cfg, rep)).collect();
        let mut rows = Vec::with_capacity(r * cfg.values.len());
        for vi in 0..cfg.values.len() {
            rows.extend(per_rep.iter().map(|rep_rows| rep_rows[vi].clone()));
        }
        return Ok(rows);
    }
    Ok((0..cfg.values.len() * r)
        .into_par_iter()
        .map(|idx| {
            let (vi, replicate) = (idx / r, idx % r);
            let value = cfg.values[vi];
            let mut sim = SimulationConfig { seed: replicate_seed(cfg.base.seed, replicate), ..cfg.base };
            match cfg.axis {
                SweepAxis::Methods => sim.n_methods = value as usize,
                SweepAxis::Samples => sim.n_samples = value as usize,
                SweepAxis::Prevalence => sim.prevalence = value,
                SweepAxis::EnsembleSize => unreachable!(),
            }
            single_cell(&Cell { cfg, value, replicate, sim })
        })
        .collect())
}

/// Per-value aggregates over successful replicates, in first-seen value order.
pub fn summarize(rows: &[SweepRow]) -> Vec<SweepSummary> {
    let mut values: Vec<(SweepAxis, f64)> = Vec::new();
    for row in rows {
        if !values.iter().any(|&(a, v)| a == row.axis && v == row.value) {
            values.push((row.axis, row.value));
        }
    }
    values
        .into_iter()
        .map(|(axis, value)| {
            let group: Vec<&SweepRow> = rows.iter().filter(|r| r.axis == axis && r.value == value).collect();
            let ok: Vec<&SweepRow> = group.iter().copied().filter(|r| r.is_ok()).collect();
            let pick = |f: fn(&SweepRow) -> f64| -> Vec<f64> { ok.iter().map(|r| f(r)).filter(|x| x.is_finite()).collect() };
            let corr = pick(|r| r.correlation);
            let summa = pick(|r| r.summa_auroc);
            let woc = pick(|r| r.woc_auroc);
            SweepSummary {
                axis,
                value,
                n_ok: ok.len(),
                n_failed: group.len() - ok.len(),
                correlation_median: median(&corr).unwrap_or(f64::NAN),
                correlation_mean: mean(&corr).unwrap_or(f64::NAN),
                correlation_sem: sem(&corr).unwrap_or(f64::NAN),
                summa_auroc_mean: mean(&summa).unwrap_or(f64::NAN),
                summa_auroc_sem: sem(&summa).unwrap_or(f64::NAN),
                woc_auroc_mean: mean(&woc).unwrap_or(f64::NAN),
                woc_auroc_sem: sem(&woc).unwrap_or(f64::NAN),
            }
        })
        .collect()
}
