//! Simulated output-length ranker.
//!
//! Predictions are the true length perturbed by multiplicative lognormal
//! noise, `pred = true * exp(eps)`, `eps ~ N(0, sigma^2)`. The noise for a
//! sample depends only on `(seed, sample id)`, so raising sigma stretches the
//! same perturbation and recall degrades smoothly. `sigma` is calibrated to hit
//! a target tail recall.

use std::cmp::Reverse;
use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{param, Result, SimError};
use crate::workload::{sample_lengths, LengthDistribution, SampleSpec, Workload};

/// Recall tolerance used by calibration.
pub const CALIBRATION_TOLERANCE: f64 = 0.01;
/// Upper end of the sigma search bracket.
pub const SIGMA_UPPER: f64 = 5.0;
/// Recall drift tolerated by [`drift_refit`] before recalibrating.
pub const REFIT_TOLERANCE: f64 = 0.02;
const REFIT_TRIALS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankerMode {
    Oracle,
    Noisy,
}

/// Recall the ranker was calibrated for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationTarget {
    pub recall: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankerModel {
    pub mode: RankerMode,
    pub noise_sigma: f64,
    pub seed: u64,
    pub calibration: Option<CalibrationTarget>,
}

impl RankerModel {
    pub fn oracle() -> Self {
        Self {
            mode: RankerMode::Oracle,
            noise_sigma: 0.0,
            seed: 0,
            calibration: None,
        }
    }

    pub fn noisy(noise_sigma: f64, seed: u64) -> Self {
        Self {
            mode: RankerMode::Noisy,
            noise_sigma,
            seed,
            calibration: None,
        }
    }

    pub fn with_target(mut self, recall: f64, alpha: f64) -> Self {
        self.calibration = Some(CalibrationTarget { recall, alpha });
        self
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Standard normal draw keyed by `(seed, id)`.
fn noise(seed: u64, id: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(id)));
    StandardNormal.sample(&mut rng)
}

/// Fills `predicted_out_len` for every sample.
pub fn predict_lengths(r: &RankerModel, w: &Workload) -> Result<Workload> {
    if !(r.noise_sigma >= 0.0) || !r.noise_sigma.is_finite() {
        return Err(param(format!("noise_sigma must be >= 0, got {}", r.noise_sigma)));
    }
    let mut out = w.clone();
    for s in &mut out.samples {
        let pred = match r.mode {
            RankerMode::Noisy if r.noise_sigma > 0.0 => {
                let eps = r.noise_sigma * noise(r.seed, s.id);
                (f64::from(s.true_out_len) * eps.exp())
                    .round()
                    .clamp(1.0, f64::from(u32::MAX)) as u32
            }
            _ => s.true_out_len,
        };
        s.predicted_out_len = Some(pred);
    }
    Ok(out)
}

fn tail_len(alpha: f64, n: usize) -> usize {
    ((alpha * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(param(format!("alpha must be in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Splits `w` into the top `ceil(alpha * n)` samples by predicted length
/// (lower id first on ties) and the rest, both in descending predicted order.
pub fn mark_longtail(w: &Workload, alpha: f64) -> Result<(Vec<SampleSpec>, Vec<SampleSpec>)> {
    check_alpha(alpha)?;
    if let Some(s) = w.samples.iter().find(|s| s.predicted_out_len.is_none()) {
        return Err(SimError::State(format!("sample {} has no predicted length", s.id)));
    }
    let mut sorted = w.samples.clone();
    sorted.sort_by_key(|s| (Reverse(s.predicted_out_len), s.id));
    let regular = sorted.split_off(tail_len(alpha, sorted.len()));
    Ok((sorted, regular))
}

/// Ids of the true longest `alpha` fraction.
pub fn true_tail(w: &Workload, alpha: f64) -> Result<Vec<u64>> {
    check_alpha(alpha)?;
    let mut sorted: Vec<&SampleSpec> = w.samples.iter().collect();
    sorted.sort_by_key(|s| (Reverse(s.true_out_len), s.id));
    Ok(sorted[..tail_len(alpha, sorted.len())].iter().map(|s| s.id).collect())
}

/// `|predicted ∩ true| / |true|`
pub fn recall(predicted_tail: &[u64], true_tail: &[u64]) -> Result<f64> {
    if true_tail.is_empty() {
        return Err(param("true tail is empty"));
    }
    let truth: HashSet<u64> = true_tail.iter().copied().collect();
    let hits = predicted_tail.iter().filter(|id| truth.contains(id)).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Monte Carlo tail recall of a ranker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecallReport {
    pub alpha: f64,
    pub recall: f64,
    pub trials: usize,
}

/// Tail recall of `r` on one workload.
pub fn workload_recall(r: &RankerModel, w: &Workload, alpha: f64) -> Result<f64> {
    let predicted = predict_lengths(r, w)?;
    let (tail, _) = mark_longtail(&predicted, alpha)?;
    let ids: Vec<u64> = tail.iter().map(|s| s.id).collect();
    recall(&ids, &true_tail(w, alpha)?)
}

/// Mean recall over `trials` workloads of `n` samples. Trial `t` draws its
/// workload and ranker noise from `seed + t`.
pub fn measure_recall(
    sigma: f64,
    alpha: f64,
    dist: &LengthDistribution,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<RecallReport> {
    check_alpha(alpha)?;
    if trials == 0 {
        return Err(param("trials must be >= 1"));
    }
    let recalls: Result<Vec<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let s = seed.wrapping_add(t);
            let w = Workload::from_lengths(&sample_lengths(dist, n, s)?, 1)?;
            workload_recall(&RankerModel::noisy(sigma, s), &w, alpha)
        })
        .collect();
    let recalls = recalls?;
    Ok(RecallReport {
        alpha,
        recall: recalls.iter().sum::<f64>() / trials as f64,
        trials,
    })
}

/// Outcome of [`calibrate_noise`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub sigma: f64,
    /// Mean recall measured at `sigma`.
    pub recall: f64,
    /// The target is at or below the recall of the upper bracket; `sigma` is
    /// the bracket itself.
    pub saturated: bool,
}

/// Finds the smallest noise sigma in `[0, 5]` whose Monte Carlo recall is
/// within [`CALIBRATION_TOLERANCE`] of `target_recall`, by bisection.
pub fn calibrate_noise(
    target_recall: f64,
    alpha: f64,
    dist: &LengthDistribution,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<Calibration> {
    if !(target_recall > 0.0 && target_recall <= 1.0) {
        return Err(param(format!("target recall must be in (0, 1], got {target_recall}")));
    }
    let at = |sigma: f64| measure_recall(sigma, alpha, dist, n, trials, seed).map(|r| r.recall);

    let r0 = at(0.0)?;
    if r0 < target_recall - CALIBRATION_TOLERANCE {
        return Err(SimError::Calibration(format!(
            "oracle recall {r0:.4} is already below target {target_recall}"
        )));
    }
    if r0 <= target_recall + CALIBRATION_TOLERANCE {
        return Ok(Calibration {
            sigma: 0.0,
            recall: r0,
            saturated: false,
        });
    }
    let r_hi = at(SIGMA_UPPER)?;
    if r_hi > target_recall + CALIBRATION_TOLERANCE {
        return Ok(Calibration {
            sigma: SIGMA_UPPER,
            recall: r_hi,
            saturated: true,
        });
    }

    // invariant: recall(lo) > target + tol >= recall(hi)
    let (mut lo, mut hi, mut r_at_hi) = (0.0, SIGMA_UPPER, r_hi);
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        let r = at(mid)?;
        if r > target_recall + CALIBRATION_TOLERANCE {
            lo = mid;
        } else {
            hi = mid;
            r_at_hi = r;
        }
    }
    Ok(Calibration {
        sigma: hi,
        recall: r_at_hi,
        saturated: false,
    })
}

/// Re-fits the ranker against `recent` generation results. The noise level is
/// kept while its recall on the recent length distribution stays within
/// [`REFIT_TOLERANCE`] of the calibration target, and recalibrated otherwise.
pub fn drift_refit(r: &RankerModel, recent: &Workload) -> Result<RankerModel> {
    if recent.is_empty() {
        return Err(SimError::EmptyInput("drift refit needs recent samples"));
    }
    let (RankerMode::Noisy, Some(target)) = (r.mode, r.calibration) else {
        return Ok(*r);
    };
    let dist = LengthDistribution::from_workload(recent)?;
    let n = recent.len();
    let current = measure_recall(r.noise_sigma, target.alpha, &dist, n, REFIT_TRIALS, r.seed)?;
    if (current.recall - target.recall).abs() <= REFIT_TOLERANCE {
        return Ok(*r);
    }
    let cal = calibrate_noise(target.recall, target.alpha, &dist, n, REFIT_TRIALS, r.seed)?;
    Ok(RankerModel {
        noise_sigma: cal.sigma,
        ..*r
    })
}
