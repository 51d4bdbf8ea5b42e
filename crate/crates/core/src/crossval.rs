//! Repeated k-fold cross-validation of the penalty strength and percentile
//! bootstrap intervals.
//!
//! Every replicate derives its random stream from `(seed, grid index,
//! replicate index)`, and results are merged by index, so the outcome is the
//! same for any number of worker threads.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ccd::{fit, fit_with_engine, FitConfig, FitResult, PenaltyKind, PenaltySpec};
use crate::dataset::{Status, SurvivalDataset};
use crate::engine::{EngineState, Model};
use crate::error::{Error, Result};
use crate::math;
use crate::par::map_tasks;

/// Number of points of an automatically chosen grid.
pub const AUTO_GRID_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    pub repetitions: usize,
    /// Strictly ascending positive strengths; `None` picks a grid from the data.
    pub grid: Option<Vec<f64>>,
    pub seed: u64,
    /// Replicates evaluated concurrently.
    pub parallel_replicates: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            repetitions: 10,
            grid: None,
            seed: 0,
            parallel_replicates: 1,
        }
    }
}

/// Held-out log-likelihood summary of one grid value.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub value: f64,
    pub mean: f64,
    pub sd: f64,
    /// Held-out evaluations that entered the mean (`folds × surviving replicates`).
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub curve: Vec<GridPoint>,
    pub selected_index: usize,
    pub selected_value: f64,
    pub final_fit: FitResult,
    /// Replicates dropped because one of their fits failed.
    pub failed_replicates: usize,
}

fn replicate_rng(seed: u64, grid_index: usize, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((grid_index as u64) << 32) | replicate as u64);
    rng
}

/// Fold label of every (sorted) position.
///
/// Primary events and the remaining subjects are shuffled separately and
/// dealt round-robin, events first, so fold sizes differ by at most one and
/// events spread as evenly as possible.
pub fn fold_assignment<R: Rng>(dataset: &SurvivalDataset, folds: usize, rng: &mut R) -> Vec<usize> {
    let (mut events, mut others): (Vec<usize>, Vec<usize>) = (0..dataset.n())
        .partition(|&i| dataset.observations()[i].status == Status::Primary);
    events.shuffle(rng);
    others.shuffle(rng);
    let mut labels = vec![0; dataset.n()];
    for (k, i) in events.into_iter().chain(others).enumerate() {
        labels[i] = k % folds;
    }
    labels
}

fn split(labels: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    (0..labels.len()).partition(|&i| labels[i] != fold)
}

/// Log-likelihood of `held_out` as a dataset of its own at the given `β`;
/// Fine-Gray weights come from the held-out censoring curve.
pub fn held_out_log_likelihood(
    held_out: &SurvivalDataset,
    model: Model,
    beta: &[f64],
    config: &FitConfig,
) -> Result<f64> {
    let mut engine = EngineState::new(held_out, model, config.plan)?;
    engine.set_beta(beta)?;
    engine.log_likelihood()
}

/// Smallest ℓ1 strength at which every penalized coefficient stays at zero:
/// `max_j |g′_j|` over penalized columns, evaluated at the fit of the exempt
/// columns alone.
pub fn gamma_max(
    dataset: &SurvivalDataset,
    model: Model,
    exempt: &[usize],
    config: &FitConfig,
) -> Result<f64> {
    let penalty = PenaltySpec::l1(f64::MAX).with_exempt(exempt.to_vec());
    penalty.validate(dataset.p())?;
    let mut engine = EngineState::new(dataset, model, config.plan)?;
    if !penalty.exempt.is_empty() {
        let base = fit_with_engine(engine.clone(), &penalty, config)?;
        engine.set_beta(&base.beta)?;
    }
    let mut max = 0.0f64;
    for j in (0..dataset.p()).filter(|&j| !penalty.is_exempt(j)) {
        max = max.max(engine.grad_hessian(j)?.gradient.abs());
    }
    Ok(max)
}

fn log_spaced(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (math::ln(lo), math::ln(hi));
    (0..points)
        .map(|k| math::exp(a + (b - a) * k as f64 / (points - 1) as f64))
        .collect()
}

/// Default grid: for ℓ1, `γ_max / 1000 ..= γ_max`; for ℓ2, `τ` in
/// `1e-3 ..= 10`. Log-spaced, ascending.
pub fn auto_grid(
    dataset: &SurvivalDataset,
    model: Model,
    penalty: &PenaltySpec,
    config: &FitConfig,
) -> Result<Vec<f64>> {
    match penalty.kind {
        PenaltyKind::L1 => {
            let top = gamma_max(dataset, model, &penalty.exempt, config)?;
            if !(top > 0.0) {
                return Err(Error::InvalidConfig(
                    "all penalized gradients vanish at zero; no l1 grid".into(),
                ));
            }
            let mut grid = log_spaced(top / 1000.0, top, AUTO_GRID_POINTS);
            *grid.last_mut().expect("nonempty grid") = top;
            Ok(grid)
        }
        PenaltyKind::L2 => Ok(log_spaced(1e-3, 10.0, AUTO_GRID_POINTS)),
        PenaltyKind::None => Err(Error::InvalidConfig(
            "cross-validation needs an l1 or l2 penalty".into(),
        )),
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty()
        || grid.iter().any(|v| !(*v > 0.0) || !v.is_finite())
        || grid.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::InvalidConfig(
            "grid must be nonempty, positive and strictly ascending".into(),
        ));
    }
    Ok(())
}

/// Held-out log-likelihoods of the `folds` fits of one replicate.
fn run_replicate(
    dataset: &SurvivalDataset,
    model: Model,
    penalty: &PenaltySpec,
    fit_config: &FitConfig,
    cv: &CvConfig,
    grid_index: usize,
    replicate: usize,
) -> Result<Vec<f64>> {
    let mut rng = replicate_rng(cv.seed, grid_index, replicate);
    let labels = fold_assignment(dataset, cv.folds, &mut rng);
    let mut out = Vec::with_capacity(cv.folds);
    for fold in 0..cv.folds {
        let (train, test) = split(&labels, fold);
        let held_out = dataset.select(&test);
        if held_out.n_events() == 0 {
            return Err(Error::EmptyFold { replicate, fold });
        }
        let training = dataset.select(&train);
        let fitted = fit(&training, model, penalty, fit_config)?;
        out.push(held_out_log_likelihood(&held_out, model, &fitted.beta, fit_config)?);
    }
    Ok(out)
}

/// Selects the penalty strength maximizing the mean held-out log-likelihood
/// over `repetitions` random `folds`-way partitions, then refits on all data.
pub fn cross_validate(
    dataset: &SurvivalDataset,
    model: Model,
    penalty: &PenaltySpec,
    cv: &CvConfig,
    fit_config: &FitConfig,
) -> Result<CvResult> {
    if cv.folds < 2 || cv.repetitions == 0 || cv.parallel_replicates == 0 {
        return Err(Error::InvalidConfig(
            "need folds >= 2, repetitions >= 1, parallel_replicates >= 1".into(),
        ));
    }
    if cv.folds > dataset.n() {
        return Err(Error::InvalidConfig(format!(
            "{} folds exceed {} subjects",
            cv.folds,
            dataset.n()
        )));
    }
    if dataset.n_events() < cv.folds {
        // Some fold is bound to lack events.
        return Err(Error::EmptyFold {
            replicate: 0,
            fold: dataset.n_events(),
        });
    }
    penalty.validate(dataset.p())?;
    let grid = match &cv.grid {
        Some(g) => g.clone(),
        None => auto_grid(dataset, model, penalty, fit_config)?,
    };
    validate_grid(&grid)?;

    let reps = cv.repetitions;
    let outcomes = map_tasks(cv.parallel_replicates, grid.len() * reps, |task| {
        let (gi, t) = (task / reps, task % reps);
        let pen = penalty.with_strength(grid[gi]);
        run_replicate(dataset, model, &pen, fit_config, cv, gi, t)
    });

    let mut curve = Vec::with_capacity(grid.len());
    let mut failed = 0;
    let mut first_error = None;
    for (gi, &value) in grid.iter().enumerate() {
        let mut values = Vec::new();
        for outcome in &outcomes[gi * reps..(gi + 1) * reps] {
            match outcome {
                Ok(v) => values.extend_from_slice(v),
                Err(e @ Error::EmptyFold { .. }) => return Err(e.clone()),
                Err(e) => {
                    failed += 1;
                    first_error.get_or_insert_with(|| e.clone());
                }
            }
        }
        curve.push(summarize(value, &values));
    }
    let selected_index = curve
        .iter()
        .enumerate()
        .filter(|(_, g)| g.evaluations > 0)
        .fold(None, |best: Option<(usize, f64)>, (i, g)| match best {
            Some((_, m)) if m >= g.mean => best,
            _ => Some((i, g.mean)),
        })
        .map(|(i, _)| i);
    let Some(selected_index) = selected_index else {
        return Err(first_error.unwrap_or_else(|| Error::InvalidConfig("no replicate succeeded".into())));
    };
    let selected_value = grid[selected_index];
    let final_fit = fit(dataset, model, &penalty.with_strength(selected_value), fit_config)?;
    Ok(CvResult {
        curve,
        selected_index,
        selected_value,
        final_fit,
        failed_replicates: failed,
    })
}

fn summarize(value: f64, values: &[f64]) -> GridPoint {
    let n = values.len();
    if n == 0 {
        return GridPoint {
            value,
            mean: f64::NAN,
            sd: f64::NAN,
            evaluations: 0,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        math::sqrt(ss / (n - 1) as f64)
    } else {
        0.0
    };
    GridPoint {
        value,
        mean,
        sd,
        evaluations: n,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapInterval {
    pub lower: f64,
    pub upper: f64,
    /// Coefficient estimates of the successful resamples, in resample order.
    pub estimates: Vec<f64>,
    pub failed: usize,
}

/// Linear-interpolation quantile of sorted data.
fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = math::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// 95% percentile interval of `β_index` over `resamples` subject-level
/// bootstrap refits with the penalty held fixed.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_interval(
    dataset: &SurvivalDataset,
    model: Model,
    penalty: &PenaltySpec,
    fit_config: &FitConfig,
    coefficient_index: usize,
    resamples: usize,
    seed: u64,
    workers: usize,
) -> Result<BootstrapInterval> {
    if resamples < 100 {
        return Err(Error::InvalidConfig(format!(
            "bootstrap needs at least 100 resamples, got {resamples}"
        )));
    }
    if coefficient_index >= dataset.p() {
        return Err(Error::InvalidColumn(coefficient_index));
    }
    let n = dataset.n();
    let outcomes = map_tasks(workers, resamples, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        let positions: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let sample = dataset.select(&positions);
        fit(&sample, model, penalty, fit_config).map(|f| f.beta[coefficient_index])
    });
    let mut estimates = Vec::with_capacity(resamples);
    let mut failed = 0;
    for o in outcomes {
        match o {
            Ok(v) => estimates.push(v),
            Err(_) => failed += 1,
        }
    }
    if failed * 10 > resamples {
        return Err(Error::TooManyFailures {
            failed,
            total: resamples,
        });
    }
    let mut sorted = estimates.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BootstrapInterval {
        lower: sorted_quantile(&sorted, 0.025),
        upper: sorted_quantile(&sorted, 0.975),
        estimates,
        failed,
    })
}
