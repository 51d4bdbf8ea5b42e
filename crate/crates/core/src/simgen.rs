//! Seeded generators for sparse indicator designs with Cox or Fine-Gray
//! outcomes.
//!
//! Rows are produced in partitions of [`PARTITION_ROWS`], each drawing from
//! its own ChaCha stream, so output does not depend on how many threads
//! generate it.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{Observation, SparseColumn, Status, SurvivalDataset};
use crate::math;
use crate::par::map_tasks;

pub const PARTITION_ROWS: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    /// Probability that an entry of `X` is 1.
    pub density: f64,
    /// Probability that a coefficient is set to zero.
    pub beta_sparsity: f64,
    /// Mass `p` of the primary-event CIF at `x = 0`.
    pub p_mix: f64,
    pub seed: u64,
    /// Administrative censoring at this quantile of the simulated times.
    pub censoring_quantile: Option<f64>,
    /// Worker threads for row partitions.
    pub workers: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            p: 10,
            density: 0.05,
            beta_sparsity: 0.80,
            p_mix: 0.5,
            seed: 0,
            censoring_quantile: None,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoxSimulation {
    pub dataset: SurvivalDataset,
    pub true_beta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FineGraySimulation {
    pub dataset: SurvivalDataset,
    /// Coefficients of the primary-event subdistribution hazard.
    pub beta1: Vec<f64>,
    /// Coefficients of the competing-event hazard, `−beta1`.
    pub beta2: Vec<f64>,
}

// Stream 0 draws coefficients; partition k uses stream k + 1.
fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw in (0, 1].
fn open_uniform<R: Rng>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// `β_j ~ N(0, 1) × Bernoulli(1 − beta_sparsity)`.
pub fn draw_beta(config: &SimConfig) -> Vec<f64> {
    let mut rng = rng_for(config.seed, 0);
    (0..config.p)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            let keep = rng.random::<f64>() >= config.beta_sparsity;
            if keep {
                z
            } else {
                0.0
            }
        })
        .collect()
}

struct Partition {
    start: usize,
    // Per column, ascending global row indices.
    columns: Vec<Vec<u32>>,
    times: Vec<f64>,
    status: Vec<Status>,
}

/// Bernoulli(density) indicator entries of rows `start..end` via geometric gaps.
fn draw_indicators(rng: &mut ChaCha8Rng, start: usize, end: usize, density: f64) -> Vec<u32> {
    let mut out = Vec::new();
    if density <= 0.0 {
        return out;
    }
    if density >= 1.0 {
        return (start as u32..end as u32).collect();
    }
    let log_q = math::ln_1p(-density);
    let mut i = start;
    loop {
        let gap = math::floor(math::ln(open_uniform(rng)) / log_q);
        if !(gap < (end - i) as f64) {
            break;
        }
        i += gap as usize;
        out.push(i as u32);
        i += 1;
        if i >= end {
            break;
        }
    }
    out
}

fn simulate_partitions<F>(config: &SimConfig, beta: &[f64], outcome: F) -> Vec<Partition>
where
    F: Fn(&mut ChaCha8Rng, f64) -> (f64, Status) + Sync + Send,
{
    let parts = config.n.div_ceil(PARTITION_ROWS);
    map_tasks(config.workers, parts, |k| {
        let start = k * PARTITION_ROWS;
        let end = (start + PARTITION_ROWS).min(config.n);
        let mut rng = rng_for(config.seed, k as u64 + 1);
        let columns: Vec<Vec<u32>> = (0..config.p)
            .map(|_| draw_indicators(&mut rng, start, end, config.density))
            .collect();
        let mut eta = vec![0.0; end - start];
        for (col, &b) in columns.iter().zip(beta) {
            if b != 0.0 {
                for &i in col {
                    eta[i as usize - start] += b;
                }
            }
        }
        let (times, status) = eta.iter().map(|&e| outcome(&mut rng, e)).unzip();
        Partition {
            start,
            columns,
            times,
            status,
        }
    })
}

fn assemble(config: &SimConfig, parts: Vec<Partition>) -> SurvivalDataset {
    let mut times = Vec::with_capacity(config.n);
    let mut status = Vec::with_capacity(config.n);
    let mut columns = vec![Vec::new(); config.p];
    for part in parts {
        debug_assert_eq!(part.start, times.len());
        times.extend(part.times);
        status.extend(part.status);
        for (all, mut col) in columns.iter_mut().zip(part.columns) {
            all.append(&mut col);
        }
    }
    if let Some(q) = config.censoring_quantile {
        let cutoff = quantile(&times, q);
        for (t, s) in times.iter_mut().zip(status.iter_mut()) {
            if *t > cutoff {
                *t = cutoff;
                *s = Status::Censored;
            }
        }
    }
    let observations = times
        .into_iter()
        .zip(status)
        .enumerate()
        .map(|(i, (time, status))| Observation {
            time,
            status,
            row_id: i,
        })
        .collect();
    let columns = columns
        .into_iter()
        .map(|indices| {
            if config.n > 0
                && indices.len() as f64 >= crate::dataset::SPARSE_DENSITY_THRESHOLD * config.n as f64
            {
                SparseColumn::compress(SparseColumn::Indicator { indices }.to_dense(config.n))
            } else {
                SparseColumn::Indicator { indices }
            }
        })
        .collect();
    SurvivalDataset::new(observations, columns).expect("simulated data is valid")
}

/// Empirical `q`-quantile (lower order statistic) of `values`.
fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = math::floor(q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64) as usize;
    sorted[k]
}

/// Cox data with `T ~ Exponential(rate = exp(xᵀβ))`.
pub fn simulate_cox(config: &SimConfig) -> CoxSimulation {
    let beta = draw_beta(config);
    simulate_cox_with_beta(config, beta)
}

pub fn simulate_cox_with_beta(config: &SimConfig, true_beta: Vec<f64>) -> CoxSimulation {
    assert_eq!(true_beta.len(), config.p, "coefficient count must equal p");
    let parts = simulate_partitions(config, &true_beta, |rng, eta| {
        let e = -math::ln(open_uniform(rng));
        (e / math::exp(eta), Status::Primary)
    });
    CoxSimulation {
        dataset: assemble(config, parts),
        true_beta,
    }
}

/// `P(ε = 1 | x) = 1 − (1 − p)^{exp(η)}`, the limit of the primary CIF.
pub fn primary_probability(p_mix: f64, eta: f64) -> f64 {
    -math::exp_m1(math::exp(eta) * math::ln_1p(-p_mix))
}

/// Primary CIF `1 − [1 − p(1 − e^{−t})]^{exp(η)}`.
pub fn primary_cif(p_mix: f64, eta: f64, t: f64) -> f64 {
    let inner = p_mix * -math::exp_m1(-t);
    -math::exp_m1(math::exp(eta) * math::ln_1p(-inner))
}

/// Inverts the primary CIF conditional on `ε = 1` at quantile `v ∈ [0, 1)`.
pub fn primary_time(p_mix: f64, eta: f64, v: f64) -> f64 {
    let p1 = primary_probability(p_mix, eta);
    // (1 − v·P₁)^{exp(−η)} = 1 − p(1 − e^{−t})
    let inner = -math::exp_m1(math::exp(-eta) * math::ln_1p(-v * p1));
    -math::ln_1p(-inner / p_mix)
}

/// Fine-Gray data: primary events follow the unit exponential mixture CIF
/// with coefficients `β₁`; competing events are exponential with rate
/// `exp(xᵀβ₂)`, `β₂ = −β₁`.
pub fn simulate_finegray(config: &SimConfig) -> FineGraySimulation {
    let beta = draw_beta(config);
    simulate_finegray_with_beta(config, beta)
}

pub fn simulate_finegray_with_beta(config: &SimConfig, beta1: Vec<f64>) -> FineGraySimulation {
    assert_eq!(beta1.len(), config.p, "coefficient count must equal p");
    let p_mix = config.p_mix;
    let parts = simulate_partitions(config, &beta1, |rng, eta| {
        let p1 = primary_probability(p_mix, eta);
        let pick: f64 = rng.random();
        let v: f64 = rng.random();
        if pick < p1 {
            (primary_time(p_mix, eta, v), Status::Primary)
        } else {
            let e = -math::ln(1.0 - v);
            (e / math::exp(-eta), Status::Competing)
        }
    });
    let beta2 = beta1.iter().map(|b| -b).collect();
    FineGraySimulation {
        dataset: assemble(config, parts),
        beta1,
        beta2,
    }
}
