//! Brute-force references shared by the integration tests.
//!
//! Everything here works on the raw, unsorted records and enumerates risk
//! sets pairwise, so it shares no code with the scan engine.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use survscan_core::engine::Model;
use survscan_core::SurvivalDataset;

/// Records in input order with a dense row-major design.
#[derive(Debug, Clone)]
pub struct RawData {
    pub times: Vec<f64>,
    pub status: Vec<i64>,
    pub x: Vec<Vec<f64>>,
}

impl RawData {
    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn p(&self) -> usize {
        self.x.first().map_or(0, |r| r.len())
    }

    pub fn to_dataset(&self) -> SurvivalDataset {
        let outcomes: Vec<_> = (0..self.n()).map(|i| (i, self.times[i], self.status[i])).collect();
        let mut triplets = Vec::new();
        for (i, row) in self.x.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        SurvivalDataset::from_triplets(&outcomes, Some(self.p()), &triplets).unwrap()
    }

    /// Same records in a different input order.
    pub fn permuted(&self, order: &[usize]) -> RawData {
        RawData {
            times: order.iter().map(|&i| self.times[i]).collect(),
            status: order.iter().map(|&i| self.status[i]).collect(),
            x: order.iter().map(|&i| self.x[i].clone()).collect(),
        }
    }
}

/// Random records with tied times, censoring, optional competing events and
/// a mix of indicator, valued-sparse and dense columns.
pub fn random_raw(seed: u64, n: usize, p: usize, density: f64, competing: bool) -> RawData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds: Vec<u8> = (0..p).map(|j| (j % 3) as u8).collect();
    let mut x = vec![vec![0.0; p]; n];
    for row in x.iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = match kinds[j] {
                0 if rng.random::<f64>() < density => 1.0,
                1 if rng.random::<f64>() < density => rng.sample::<f64, _>(StandardNormal),
                2 if j == 2 => rng.sample::<f64, _>(StandardNormal) * 0.5,
                2 if rng.random::<f64>() < density => 1.0,
                _ => 0.0,
            };
        }
    }
    // Coarse time grid so that ties are common.
    let times = (0..n).map(|_| (rng.random::<f64>() * 40.0).floor() / 4.0).collect();
    let status = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            if u < 0.3 {
                0
            } else if competing && u < 0.5 {
                2
            } else {
                1
            }
        })
        .collect();
    RawData { times, status, x }
}

pub fn random_beta(seed: u64, p: usize, scale: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    (0..p).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect()
}

/// Censoring survival just before `t`, straight from the product-limit
/// definition over censoring times `s < t`.
pub fn km_before(raw: &RawData, t: f64) -> f64 {
    let mut cens: Vec<f64> = (0..raw.n())
        .filter(|&i| raw.status[i] == 0 && raw.times[i] < t)
        .map(|i| raw.times[i])
        .collect();
    cens.sort_by(f64::total_cmp);
    cens.dedup();
    cens.iter()
        .map(|&s| {
            let d = (0..raw.n()).filter(|&i| raw.status[i] == 0 && raw.times[i] == s).count();
            let at_risk = raw.times.iter().filter(|&&y| y >= s).count();
            1.0 - d as f64 / at_risk as f64
        })
        .product()
}

/// Weight of subject `r` in the risk set at the time of event `i`.
pub fn risk_weight(raw: &RawData, model: Model, g_before: &[f64], i: usize, r: usize) -> f64 {
    let (yi, yr) = (raw.times[i], raw.times[r]);
    if yr >= yi {
        return 1.0;
    }
    match model {
        Model::FineGray if raw.status[r] == 2 => g_before[i] / g_before[r],
        _ => 0.0,
    }
}

pub struct OracleValues {
    pub log_likelihood: f64,
    pub gradient: Vec<f64>,
    /// Full Hessian when requested, otherwise only the diagonal is filled.
    pub hessian: Vec<Vec<f64>>,
}

/// Log partial likelihood with Breslow ties and its derivatives by pairwise
/// enumeration.
pub fn oracle(raw: &RawData, model: Model, beta: &[f64], full_hessian: bool) -> OracleValues {
    let (n, p) = (raw.n(), raw.p());
    let eta: Vec<f64> = raw.x.iter().map(|row| row.iter().zip(beta).map(|(a, b)| a * b).sum()).collect();
    let e: Vec<f64> = eta.iter().map(|v| v.exp()).collect();
    let g_before: Vec<f64> = match model {
        Model::FineGray => raw.times.iter().map(|&t| km_before(raw, t)).collect(),
        Model::Cox => vec![1.0; n],
    };
    let mut ll = 0.0;
    let mut grad = vec![0.0; p];
    let mut hess = vec![vec![0.0; p]; p];
    for i in (0..n).filter(|&i| raw.status[i] == 1) {
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = vec![vec![0.0; p]; p];
        for r in 0..n {
            let w = risk_weight(raw, model, &g_before, i, r);
            if w == 0.0 {
                continue;
            }
            let we = w * e[r];
            s0 += we;
            for j in 0..p {
                let xj = raw.x[r][j];
                if xj == 0.0 {
                    continue;
                }
                s1[j] += xj * we;
                if full_hessian {
                    for k in 0..p {
                        s2[j][k] += xj * raw.x[r][k] * we;
                    }
                } else {
                    s2[j][j] += xj * xj * we;
                }
            }
        }
        ll += eta[i] - s0.ln();
        for j in 0..p {
            grad[j] += raw.x[i][j] - s1[j] / s0;
            if full_hessian {
                for k in 0..p {
                    hess[j][k] -= s2[j][k] / s0 - s1[j] * s1[k] / (s0 * s0);
                }
            } else {
                hess[j][j] -= s2[j][j] / s0 - s1[j] * s1[j] / (s0 * s0);
            }
        }
    }
    OracleValues {
        log_likelihood: ll,
        gradient: grad,
        hessian: hess,
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Maximizer of the unpenalized log-likelihood by damped full Newton with
/// step halving.
pub fn newton_maximizer(raw: &RawData, model: Model) -> Vec<f64> {
    let p = raw.p();
    let mut beta = vec![0.0; p];
    let mut cur = oracle(raw, model, &beta, true);
    for _ in 0..200 {
        let neg_h: Vec<Vec<f64>> = cur.hessian.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
        let step = solve(neg_h, cur.gradient.clone());
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let next = oracle(raw, model, &trial, true);
            if next.log_likelihood >= cur.log_likelihood - 1e-12 || t < 1e-8 {
                beta = trial;
                cur = next;
                break;
            }
            t *= 0.5;
        }
        if step.iter().all(|s| (t * s).abs() < 1e-12) {
            break;
        }
    }
    beta
}

/// `|a − b| ≤ tol · max(|b|, 1)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}
