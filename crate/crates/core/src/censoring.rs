//! Kaplan-Meier estimate of the censoring survival function and the inverse
//! probability of censoring weights of the Fine-Gray risk set.
//!
//! A competing-event subject `r` stays in the risk set of a later event time
//! `t` with weight `Ĝ(t⁻) / Ĝ(Y_r⁻)`. The weight factors into a per-subject
//! part `u_r = 1 / Ĝ(Y_r⁻)` that can be suffix-scanned once and a per-event
//! part `g_i = Ĝ(Y_i⁻)` applied after the scan.

use alloc::vec::Vec;

use crate::dataset::{Status, SurvivalDataset};
use crate::error::{Error, Result};

/// Right-continuous step function `Ĝ` with `Ĝ(0) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CensoringCurve {
    jump_times: Vec<f64>,
    survival_values: Vec<f64>,
}

impl CensoringCurve {
    /// Times where at least one censoring occurs, ascending.
    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    /// `Ĝ` just after each jump.
    pub fn survival_values(&self) -> &[f64] {
        &self.survival_values
    }

    /// `Ĝ(t)`: product over censoring times `s ≤ t`.
    pub fn at(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&s| s <= t);
        if k == 0 {
            1.0
        } else {
            self.survival_values[k - 1]
        }
    }

    /// `Ĝ(t⁻)`: product over censoring times `s < t`.
    pub fn before(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&s| s < t);
        if k == 0 {
            1.0
        } else {
            self.survival_values[k - 1]
        }
    }
}

/// Product-limit estimate of the censoring distribution, treating status 0
/// as the "event". At tied times failures are counted as still at risk when
/// censorings occur.
pub fn km_censoring(dataset: &SurvivalDataset) -> Result<CensoringCurve> {
    if dataset.n() == 0 {
        return Err(Error::Domain("censoring curve of an empty dataset".into()));
    }
    let obs = dataset.observations();
    let mut jump_times = Vec::new();
    let mut survival_values = Vec::new();
    let mut g = 1.0;
    // Blocks in reverse visit distinct times in ascending order; the number
    // at risk at a block's time is its end offset.
    let ranges: Vec<_> = dataset.tied_blocks().ranges().collect();
    for r in ranges.iter().rev() {
        let censored = obs[r.clone()]
            .iter()
            .filter(|o| o.status == Status::Censored)
            .count();
        if censored == 0 {
            continue;
        }
        let at_risk = r.end as f64;
        g *= 1.0 - censored as f64 / at_risk;
        jump_times.push(obs[r.start].time);
        survival_values.push(g);
    }
    let curve = CensoringCurve {
        jump_times,
        survival_values,
    };
    if let Some(k) = curve.survival_values.iter().position(|&v| v <= 0.0) {
        let zero_at = curve.jump_times[k];
        let last_needed = obs
            .iter()
            .filter(|o| o.status != Status::Censored)
            .map(|o| o.time)
            .fold(f64::NEG_INFINITY, f64::max);
        if last_needed > zero_at {
            return Err(Error::DegenerateCurve { time: zero_at });
        }
    }
    Ok(curve)
}

/// Per-subject IPCW factors aligned to the dataset's sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct IpcwVectors {
    /// `1 / Ĝ(Y_r⁻)` for competing-event subjects, zero otherwise.
    pub u: Vec<f64>,
    /// `Ĝ(Y_i⁻)` for every subject.
    pub g_at_event: Vec<f64>,
}

pub fn build_ipcw(dataset: &SurvivalDataset, curve: &CensoringCurve) -> Result<IpcwVectors> {
    let n = dataset.n();
    let obs = dataset.observations();
    let mut u = Vec::with_capacity(n);
    let mut g_at_event = Vec::with_capacity(n);
    for r in dataset.tied_blocks().ranges() {
        let t = obs[r.start].time;
        let g = curve.before(t);
        for o in &obs[r] {
            g_at_event.push(g);
            if o.status == Status::Competing {
                if !(g > 0.0) {
                    return Err(Error::DegenerateCurve { time: t });
                }
                u.push(1.0 / g);
            } else {
                u.push(0.0);
            }
        }
    }
    Ok(IpcwVectors { u, g_at_event })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Observation;
    use alloc::vec;

    fn dataset(times: &[f64], status: &[i64]) -> SurvivalDataset {
        let obs = times
            .iter()
            .zip(status)
            .enumerate()
            .map(|(i, (&t, &s))| Observation::new(t, Status::try_from(s).unwrap(), i).unwrap())
            .collect();
        SurvivalDataset::new(obs, vec![]).unwrap()
    }

    /// Brute-force `Ĝ(t⁻)` straight from the product-limit definition.
    fn g_before(times: &[f64], status: &[i64], t: f64) -> f64 {
        let mut cens: Vec<f64> = times
            .iter()
            .zip(status)
            .filter(|(_, &s)| s == 0)
            .map(|(&x, _)| x)
            .filter(|&x| x < t)
            .collect();
        cens.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cens.dedup();
        cens.iter()
            .map(|&s| {
                let d = times.iter().zip(status).filter(|(&x, &k)| x == s && k == 0).count();
                let n = times.iter().filter(|&&x| x >= s).count();
                1.0 - d as f64 / n as f64
            })
            .product()
    }

    #[test]
    fn hand_computed_curve() {
        let ds = dataset(&[3.0, 2.0, 1.0], &[1, 0, 1]);
        let curve = km_censoring(&ds).unwrap();
        assert_eq!(curve.jump_times(), &[2.0]);
        assert_eq!(curve.at(1.9), 1.0);
        assert_eq!(curve.at(2.0), 0.5);
        assert_eq!(curve.at(10.0), 0.5);
        assert_eq!(curve.before(2.0), 1.0);
        assert_eq!(curve.at(0.0), 1.0);
    }

    #[test]
    fn no_censoring_gives_unit_curve() {
        let ds = dataset(&[3.0, 2.0, 1.0], &[1, 2, 1]);
        let curve = km_censoring(&ds).unwrap();
        assert!(curve.jump_times().is_empty());
        assert_eq!(curve.at(100.0), 1.0);
    }

    #[test]
    fn all_censored_distinct_times() {
        let times = [5.0, 4.0, 3.0, 2.0, 1.0];
        let ds = dataset(&times, &[0; 5]);
        let curve = km_censoring(&ds).unwrap();
        assert_eq!(curve.jump_times().len(), 5);
        // Π (1 − 1/n_i) with n = 5, 4, 3, 2, 1.
        let expected: f64 = [5.0, 4.0, 3.0, 2.0, 1.0].iter().map(|n| 1.0 - 1.0 / n).product();
        assert_eq!(*curve.survival_values().last().unwrap(), expected);
        let w = curve.survival_values();
        assert!(w.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn weights_without_competing_events_are_zero() {
        let ds = dataset(&[3.0, 2.0, 1.0], &[1, 0, 1]);
        let ipcw = build_ipcw(&ds, &km_censoring(&ds).unwrap()).unwrap();
        assert_eq!(ipcw.u, vec![0.0; 3]);
        // Sorted times (3, 2, 1); only t = 3 lies after the censoring at 2.
        assert_eq!(ipcw.g_at_event, vec![0.5, 1.0, 1.0]);
    }

    #[test]
    fn single_competing_subject_has_unit_weight() {
        let ds = dataset(&[4.0, 3.0, 1.0], &[1, 1, 2]);
        let ipcw = build_ipcw(&ds, &km_censoring(&ds).unwrap()).unwrap();
        assert_eq!(ipcw.u, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn factorized_weights_match_definition() {
        // Censoring at 1.5 precedes the competing event at 2.
        let times = [1.0, 1.5, 2.0, 3.0, 2.0];
        let status = [1, 0, 2, 1, 0];
        let ds = dataset(&times, &status);
        let curve = km_censoring(&ds).unwrap();
        let ipcw = build_ipcw(&ds, &curve).unwrap();
        let obs = ds.observations();
        for (i, oi) in obs.iter().enumerate() {
            for (r, or) in obs.iter().enumerate() {
                let t = oi.time;
                // ŵ_r(t) = I(C_r ≥ min(T_r, t)) Ĝ(t⁻) / Ĝ(min(Y_r, t)⁻)
                let indicator = or.time >= t || or.status != Status::Censored;
                let direct = if indicator {
                    g_before(&times, &status, t) / g_before(&times, &status, or.time.min(t))
                } else {
                    0.0
                };
                let factorized = if or.time >= t {
                    1.0
                } else if or.status == Status::Competing {
                    ipcw.g_at_event[i] * ipcw.u[r]
                } else {
                    continue;
                };
                assert!((direct - factorized).abs() < 1e-15, "pair ({i}, {r})");
            }
        }
    }

    #[test]
    fn time_scale_invariance() {
        let times = [0.5, 1.0, 1.0, 2.5, 3.0, 4.0, 4.5];
        let status = [0, 2, 0, 1, 0, 2, 1];
        let scaled: Vec<f64> = times.iter().map(|t| t * 7.25).collect();
        let a = dataset(&times, &status);
        let b = dataset(&scaled, &status);
        let wa = build_ipcw(&a, &km_censoring(&a).unwrap()).unwrap();
        let wb = build_ipcw(&b, &km_censoring(&b).unwrap()).unwrap();
        assert_eq!(wa, wb);
    }
}
