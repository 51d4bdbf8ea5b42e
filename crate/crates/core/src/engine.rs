//! Per-coordinate gradient, Hessian and log-likelihood of the Cox partial
//! likelihood and the Fine-Gray pseudo likelihood in `O(N)` per evaluation.
//!
//! For column `j` the risk-set ratios are
//!
//! ```text
//! G = S_pre[e × X_j] / S_pre[e],   H = S_pre[e × X_j × X_j] / S_pre[e],   e = exp(Xβ)
//! ```
//!
//! with the Fine-Gray risk set adding `g_i × S_suf[u × ·]` (strictly later
//! positions) to every numerator and denominator. Then
//! `g′ = δᵀX_j − δᵀG` and `g″ = −δᵀ(H − G×G)`. Tied times share the risk set
//! at the end of their block (Breslow).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::censoring::{build_ipcw, km_censoring, IpcwVectors};
use crate::dataset::{SparseColumn, SurvivalDataset};
use crate::error::{Error, Result};
use crate::math;
use crate::scan::{
    fused_with_events, partially_fused_scan_transform_reduce, prefix_scan, reduce,
    separated_scan_transform_reduce, suffix_scan, ChunkPlan, CompetingWeights, EventBlocks,
    ScanReduction, Tuple3,
};

/// Largest admissible `|xᵢᵀβ|`; beyond it `exp` leaves the safe range.
pub const EXP_SAFE_BOUND: f64 = 700.0;

/// Accepted coordinate updates between full recomputations of `Xβ` and
/// `exp(Xβ)`.
pub const DEFAULT_RECOMPUTE_INTERVAL: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    Cox,
    FineGray,
}

/// How steps scan → transform → reduce are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ExecutionPath {
    /// One kernel per chunk, no full-length intermediates.
    #[default]
    Fused,
    /// Materialized tuple scans followed by a fused transform-reduce.
    PartiallyFused,
    /// Separate scans, broadcast, transform and reductions.
    Separated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradHess {
    /// `g′(β_j)` of the unpenalized log-likelihood.
    pub gradient: f64,
    /// `g″(β_j)`, never positive.
    pub hessian: f64,
    /// `δᵀX_j`.
    pub fixed_term: f64,
}

/// `δᵀX_j` for every column.
pub fn precompute_fixed_terms(dataset: &SurvivalDataset) -> Vec<f64> {
    let mask = dataset.event_mask();
    dataset.columns().iter().map(|c| c.dot(&mask)).collect()
}

/// Mutable evaluation state of one fit over a shared dataset.
#[derive(Debug, Clone)]
pub struct EngineState<'d> {
    dataset: &'d SurvivalDataset,
    model: Model,
    plan: ChunkPlan,
    path: ExecutionPath,
    beta: Vec<f64>,
    xbeta: Vec<f64>,
    exp_xbeta: Vec<f64>,
    // Lanes e × X_j and e × X_j²; zero outside the support of `lane_column`.
    lane_b: Vec<f64>,
    lane_c: Vec<f64>,
    lane_column: Option<usize>,
    ipcw: Option<IpcwVectors>,
    event_mask: Vec<f64>,
    events: EventBlocks,
    fixed_terms: Vec<f64>,
    recompute_interval: usize,
    updates_since_refresh: usize,
    dirty: bool,
}

impl<'d> EngineState<'d> {
    /// State at `β = 0`. Fine-Gray models estimate the censoring curve here.
    pub fn new(dataset: &'d SurvivalDataset, model: Model, plan: ChunkPlan) -> Result<Self> {
        let ipcw = match model {
            Model::Cox => {
                if dataset.n_competing() > 0 {
                    return Err(Error::Domain(format!(
                        "{} competing events (status 2) require the Fine-Gray model",
                        dataset.n_competing()
                    )));
                }
                None
            }
            Model::FineGray => Some(build_ipcw(dataset, &km_censoring(dataset)?)?),
        };
        Self::with_ipcw(dataset, model, plan, ipcw)
    }

    /// Like [`new`](Self::new) with externally supplied censoring weights.
    pub fn with_ipcw(
        dataset: &'d SurvivalDataset,
        model: Model,
        plan: ChunkPlan,
        ipcw: Option<IpcwVectors>,
    ) -> Result<Self> {
        let n = dataset.n();
        if model == Model::FineGray {
            match &ipcw {
                Some(w) if w.u.len() == n && w.g_at_event.len() == n => {}
                Some(w) => {
                    return Err(Error::LengthMismatch {
                        expected: n,
                        found: w.u.len(),
                    })
                }
                None => return Err(Error::InvalidConfig("Fine-Gray needs IPCW vectors".into())),
            }
        }
        let event_mask = dataset.event_mask();
        let events = EventBlocks::new(&event_mask, dataset.tied_blocks())?;
        Ok(Self {
            dataset,
            model,
            plan,
            path: ExecutionPath::default(),
            beta: vec![0.0; dataset.p()],
            xbeta: vec![0.0; n],
            exp_xbeta: vec![1.0; n],
            lane_b: vec![0.0; n],
            lane_c: vec![0.0; n],
            lane_column: None,
            ipcw: if model == Model::FineGray { ipcw } else { None },
            event_mask,
            events,
            fixed_terms: precompute_fixed_terms(dataset),
            recompute_interval: DEFAULT_RECOMPUTE_INTERVAL,
            updates_since_refresh: 0,
            dirty: false,
        })
    }

    pub fn with_path(mut self, path: ExecutionPath) -> Self {
        self.path = path;
        self
    }

    pub fn with_recompute_interval(mut self, interval: usize) -> Self {
        self.recompute_interval = interval.max(1);
        self
    }

    pub fn set_path(&mut self, path: ExecutionPath) {
        self.path = path;
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn dataset(&self) -> &'d SurvivalDataset {
        self.dataset
    }

    pub fn plan(&self) -> &ChunkPlan {
        &self.plan
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn xbeta(&self) -> &[f64] {
        &self.xbeta
    }

    pub fn exp_xbeta(&self) -> &[f64] {
        &self.exp_xbeta
    }

    pub fn ipcw(&self) -> Option<&IpcwVectors> {
        self.ipcw.as_ref()
    }

    pub fn fixed_terms(&self) -> &[f64] {
        &self.fixed_terms
    }

    /// Replaces `β` and recomputes `Xβ` and `exp(Xβ)` from scratch.
    pub fn set_beta(&mut self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.dataset.p() {
            return Err(Error::LengthMismatch {
                expected: self.dataset.p(),
                found: beta.len(),
            });
        }
        self.beta.copy_from_slice(beta);
        self.dirty = true;
        self.refresh()
    }

    /// Recomputes `Xβ` from `β` and `exp(Xβ)` from `Xβ`.
    pub fn refresh(&mut self) -> Result<()> {
        self.xbeta.fill(0.0);
        for (col, &b) in self.dataset.columns().iter().zip(&self.beta) {
            if b != 0.0 {
                let xbeta = &mut self.xbeta;
                col.for_each_nonzero(|i, x| xbeta[i] += x * b);
            }
        }
        for (i, (&xb, e)) in self.xbeta.iter().zip(self.exp_xbeta.iter_mut()).enumerate() {
            if !(xb.abs() <= EXP_SAFE_BOUND) {
                return Err(Error::Overflow { row: i, value: xb });
            }
            *e = math::exp(xb);
        }
        self.updates_since_refresh = 0;
        self.dirty = false;
        Ok(())
    }

    /// `β_j += delta`, touching only the nonzero rows of column `j`.
    ///
    /// Indicator columns rescale `exp(Xβ)` by `exp(delta)`; valued columns
    /// re-exponentiate the touched entries. Every
    /// [`DEFAULT_RECOMPUTE_INTERVAL`] accepted updates the whole state is
    /// rebuilt to bound drift. On overflow the state is left unchanged.
    pub fn update_xbeta(&mut self, j: usize, delta: f64) -> Result<()> {
        let column = self.dataset.column(j)?;
        if delta == 0.0 {
            return Ok(());
        }
        if !delta.is_finite() {
            return Err(Error::NonFiniteStep { column: j });
        }
        let mut overflow = None;
        column.for_each_nonzero(|i, x| {
            let v = self.xbeta[i] + x * delta;
            if overflow.is_none() && !(v.abs() <= EXP_SAFE_BOUND) {
                overflow = Some(Error::Overflow { row: i, value: v });
            }
        });
        if let Some(e) = overflow {
            return Err(e);
        }
        self.beta[j] += delta;
        let xbeta = &mut self.xbeta;
        let exp_xbeta = &mut self.exp_xbeta;
        match column {
            SparseColumn::Indicator { indices } => {
                let factor = math::exp(delta);
                for &i in indices {
                    let i = i as usize;
                    xbeta[i] += delta;
                    exp_xbeta[i] *= factor;
                }
            }
            _ => column.for_each_nonzero(|i, x| {
                xbeta[i] += x * delta;
                exp_xbeta[i] = math::exp(xbeta[i]);
            }),
        }
        self.updates_since_refresh += 1;
        if self.updates_since_refresh >= self.recompute_interval {
            self.dirty = true;
        }
        if self.dirty {
            self.refresh()?;
        }
        Ok(())
    }

    fn fill_lanes(&mut self, j: usize, column: &SparseColumn) {
        if self.lane_column != Some(j) {
            if let Some(prev) = self.lane_column {
                match &self.dataset.columns()[prev] {
                    SparseColumn::Dense(_) => {
                        self.lane_b.fill(0.0);
                        self.lane_c.fill(0.0);
                    }
                    c => {
                        let (b, cc) = (&mut self.lane_b, &mut self.lane_c);
                        c.for_each_nonzero(|i, _| {
                            b[i] = 0.0;
                            cc[i] = 0.0;
                        });
                    }
                }
            }
            self.lane_column = Some(j);
        }
        let (b, c, e) = (&mut self.lane_b, &mut self.lane_c, &self.exp_xbeta);
        match column {
            SparseColumn::Indicator { indices } => {
                for &i in indices {
                    let i = i as usize;
                    b[i] = e[i];
                    c[i] = e[i];
                }
            }
            _ => column.for_each_nonzero(|i, x| {
                let ex = e[i] * x;
                b[i] = ex;
                c[i] = ex * x;
            }),
        }
    }

    fn competing(&self) -> Option<CompetingWeights<'_>> {
        self.ipcw.as_ref().map(|w| CompetingWeights {
            u: &w.u,
            g: &w.g_at_event,
        })
    }

    /// Unpenalized `g′(β_j)` and `g″(β_j)` at the current `β`.
    pub fn grad_hessian(&mut self, j: usize) -> Result<GradHess> {
        let dataset = self.dataset;
        let column = dataset.column(j)?;
        let fixed_term = self.fixed_terms[j];
        if column.is_null() {
            return Ok(GradHess {
                gradient: 0.0,
                hessian: 0.0,
                fixed_term,
            });
        }
        if self.dirty {
            self.refresh()?;
        }
        self.fill_lanes(j, column);
        let input = Tuple3 {
            a: &self.exp_xbeta,
            b: &self.lane_b,
            c: &self.lane_c,
        };
        let competing = self.competing();
        let ScanReduction { grad_sum, hess_sum } = match self.path {
            ExecutionPath::Fused => fused_with_events(input, competing, &self.events, &self.plan)?,
            ExecutionPath::PartiallyFused => {
                partially_fused_scan_transform_reduce(input, competing, &self.events, &self.plan)?
            }
            ExecutionPath::Separated => separated_scan_transform_reduce(
                input,
                competing,
                &self.event_mask,
                dataset.tied_blocks(),
                &self.plan,
            )?,
        };
        Ok(GradHess {
            gradient: fixed_term - grad_sum,
            hessian: -hess_sum,
            fixed_term,
        })
    }

    /// Cox log-partial or Fine-Gray log-pseudo likelihood at the current `β`.
    pub fn log_likelihood(&mut self) -> Result<f64> {
        if self.dirty {
            self.refresh()?;
        }
        let n = self.dataset.n();
        let masked: Vec<f64> = self
            .event_mask
            .iter()
            .zip(&self.xbeta)
            .map(|(d, xb)| d * xb)
            .collect();
        let linear = reduce(&masked, &self.plan);
        let prefix = prefix_scan(&self.exp_xbeta, &self.plan);
        let suffix = self.ipcw.as_ref().map(|w| {
            let weighted: Vec<f64> = w.u.iter().zip(&self.exp_xbeta).map(|(u, e)| u * e).collect();
            suffix_scan(&weighted, &self.plan)
        });
        let mut log_den = 0.0;
        for (&end, &weight) in self.events.ends().iter().zip(self.events.weights()) {
            let i = end - 1;
            let mut den = prefix[i];
            if let (Some(s), Some(w)) = (&suffix, &self.ipcw) {
                if end < n {
                    den += w.g_at_event[i] * s[end];
                }
            }
            if !(den > 0.0) {
                return Err(Error::NonPositiveDenominator {
                    position: i,
                    value: den,
                });
            }
            log_den += weight * math::ln(den);
        }
        Ok(linear - log_den)
    }
}
