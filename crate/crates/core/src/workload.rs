//! Long-tail RL workloads: batches of prompts with ground-truth output lengths.
//!
//! Only token counts are modelled. A [`Workload`] is either synthesized from a
//! [`LengthDistribution`] or loaded from a trace file with one
//! `id, prompt_len, true_out_len` record per line.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Pareto};

use crate::error::{param, Result, SimError};

/// One prompt and the response it will produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleSpec {
    pub id: u64,
    pub prompt_len: u32,
    pub true_out_len: u32,
    /// Filled in by the ranker.
    pub predicted_out_len: Option<u32>,
}

impl SampleSpec {
    pub fn new(id: u64, prompt_len: u32, true_out_len: u32) -> Self {
        Self {
            id,
            prompt_len,
            true_out_len,
            predicted_out_len: None,
        }
    }

    /// Predicted length when available, otherwise the true length.
    pub fn planning_len(&self) -> u32 {
        self.predicted_out_len.unwrap_or(self.true_out_len)
    }
}

/// Skewed output-length distribution used to synthesize workloads.
#[derive(Debug, Clone, PartialEq)]
pub enum LengthDistribution {
    /// `exp(N(mu, sigma^2))`.
    LogNormal { mu: f64, sigma: f64, max_len: u32 },
    /// Pareto with minimum `scale` and tail index `shape`.
    ParetoTail { scale: f64, shape: f64, max_len: u32 },
    /// Uniform resampling of observed lengths (kept sorted).
    Empirical { values: Vec<u32>, max_len: u32 },
}

impl LengthDistribution {
    pub fn lognormal(mu: f64, sigma: f64, max_len: u32) -> Self {
        Self::LogNormal { mu, sigma, max_len }
    }

    pub fn empirical(mut values: Vec<u32>, max_len: u32) -> Result<Self> {
        if values.is_empty() {
            return Err(param("empirical distribution needs at least one value"));
        }
        values.sort_unstable();
        Ok(Self::Empirical { values, max_len })
    }

    /// Empirical distribution over the true output lengths of `w`.
    pub fn from_workload(w: &Workload) -> Result<Self> {
        let values: Vec<u32> = w.samples.iter().map(|s| s.true_out_len).collect();
        let max_len = values.iter().copied().max().unwrap_or(1);
        Self::empirical(values, max_len)
    }

    pub fn max_len(&self) -> u32 {
        match self {
            Self::LogNormal { max_len, .. } | Self::ParetoTail { max_len, .. } | Self::Empirical { max_len, .. } => {
                *max_len
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_len() == 0 {
            return Err(param("max_len must be at least 1"));
        }
        match self {
            Self::LogNormal { mu, sigma, .. } => {
                if !mu.is_finite() || !sigma.is_finite() || *sigma < 0.0 {
                    return Err(param(format!(
                        "lognormal requires finite mu and sigma >= 0 (mu={mu}, sigma={sigma})"
                    )));
                }
            }
            Self::ParetoTail { scale, shape, .. } => {
                if !(*scale > 0.0) || !(*shape > 0.0) {
                    return Err(param(format!(
                        "pareto requires scale > 0 and shape > 0 (scale={scale}, shape={shape})"
                    )));
                }
            }
            Self::Empirical { values, .. } => {
                if values.is_empty() {
                    return Err(param("empirical distribution needs at least one value"));
                }
            }
        }
        Ok(())
    }

    fn draw_with(&self, rng: &mut ChaCha8Rng, n: usize) -> Result<Vec<u32>> {
        self.validate()?;
        let max = self.max_len();
        let clamp = |x: f64| -> u32 { x.round().clamp(1.0, f64::from(max)) as u32 };
        let out = match self {
            Self::LogNormal { mu, sigma, .. } => {
                let d = LogNormal::new(*mu, *sigma).map_err(|e| param(e.to_string()))?;
                (0..n).map(|_| clamp(d.sample(rng))).collect()
            }
            Self::ParetoTail { scale, shape, .. } => {
                let d = Pareto::new(*scale, *shape).map_err(|e| param(e.to_string()))?;
                (0..n).map(|_| clamp(d.sample(rng))).collect()
            }
            Self::Empirical { values, .. } => (0..n)
                .map(|_| values[rng.random_range(0..values.len())].clamp(1, max))
                .collect(),
        };
        Ok(out)
    }
}

/// Draws `n` lengths from `dist`. Reproducible for a fixed seed.
pub fn sample_lengths(dist: &LengthDistribution, n: usize, seed: u64) -> Result<Vec<u32>> {
    if n == 0 {
        return Err(param("n must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dist.draw_with(&mut rng, n)
}

/// Order statistics of the output lengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionStats {
    pub p50: u32,
    pub p90: u32,
    pub max: u32,
    pub mean: f64,
}

/// A batch of samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workload {
    pub samples: Vec<SampleSpec>,
    pub global_batch_size: usize,
}

impl Workload {
    /// Validates ids and lengths. `global_batch_size` defaults to the sample count.
    pub fn new(samples: Vec<SampleSpec>) -> Result<Self> {
        let n = samples.len();
        Self::with_batch_size(samples, n)
    }

    pub fn with_batch_size(samples: Vec<SampleSpec>, global_batch_size: usize) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if s.true_out_len == 0 {
                return Err(SimError::Validation(format!("sample {} has true_out_len 0", s.id)));
            }
            if s.prompt_len == 0 {
                return Err(SimError::Validation(format!("sample {} has prompt_len 0", s.id)));
            }
            if !seen.insert(s.id) {
                return Err(SimError::Validation(format!("duplicate sample id {}", s.id)));
            }
        }
        Ok(Self {
            samples,
            global_batch_size,
        })
    }

    /// Builds a workload whose samples have the given output lengths, ids `0..n`
    /// and a fixed prompt length.
    pub fn from_lengths(lengths: &[u32], prompt_len: u32) -> Result<Self> {
        let samples = lengths
            .iter()
            .enumerate()
            .map(|(i, &l)| SampleSpec::new(i as u64, prompt_len, l))
            .collect();
        Self::new(samples)
    }

    /// Synthesizes `n` samples with ids `first_id..first_id + n`.
    pub fn synthetic(
        out_dist: &LengthDistribution,
        prompt_dist: &LengthDistribution,
        n: usize,
        first_id: u64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let outs = out_dist.draw_with(&mut rng, n)?;
        let prompts = prompt_dist.draw_with(&mut rng, n)?;
        let samples = outs
            .into_iter()
            .zip(prompts)
            .enumerate()
            .map(|(i, (o, p))| SampleSpec::new(first_id + i as u64, p, o))
            .collect();
        Self::new(samples)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn total_tokens(&self) -> u64 {
        self.samples.iter().map(|s| u64::from(s.true_out_len)).sum()
    }

    pub fn lengths(&self) -> Vec<u32> {
        self.samples.iter().map(|s| s.true_out_len).collect()
    }

    /// Splits into consecutive iteration batches of `global_batch_size`.
    pub fn iterations(&self) -> Result<Vec<Workload>> {
        let b = self.global_batch_size;
        if b == 0 || !self.samples.len().is_multiple_of(b) {
            return Err(SimError::Validation(format!(
                "{} samples is not a multiple of global batch size {}",
                self.samples.len(),
                b
            )));
        }
        Ok(self
            .samples
            .chunks(b)
            .map(|c| Workload {
                samples: c.to_vec(),
                global_batch_size: b,
            })
            .collect())
    }

    /// Serializes to the trace format accepted by [`load_trace`].
    pub fn to_trace(&self) -> String {
        let mut out = String::from("# id,prompt_len,true_out_len\n");
        for s in &self.samples {
            let _ = writeln!(out, "{},{},{}", s.id, s.prompt_len, s.true_out_len);
        }
        out
    }
}

/// Reads a trace file: comma-separated `id, prompt_len, true_out_len` per line,
/// `#` comments and blank lines ignored.
pub fn load_trace(path: impl AsRef<Path>) -> Result<Workload> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_trace(&text, path)
}

pub fn parse_trace(text: &str, path: &Path) -> Result<Workload> {
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| SimError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", fields.len())));
        }
        let id: u64 = fields[0]
            .parse()
            .map_err(|e| err(format!("bad id {:?}: {e}", fields[0])))?;
        let prompt_len: u32 = fields[1]
            .parse()
            .map_err(|e| err(format!("bad prompt_len {:?}: {e}", fields[1])))?;
        let true_out_len: u32 = fields[2]
            .parse()
            .map_err(|e| err(format!("bad true_out_len {:?}: {e}", fields[2])))?;
        if true_out_len == 0 || prompt_len == 0 {
            return Err(SimError::Validation(format!(
                "line {}: lengths must be at least 1",
                idx + 1
            )));
        }
        if !seen.insert(id) {
            return Err(SimError::Validation(format!(
                "line {}: duplicate sample id {id}",
                idx + 1
            )));
        }
        samples.push(SampleSpec::new(id, prompt_len, true_out_len));
    }
    Workload::new(samples)
}

/// Multiplies every output length by `factor`, rounding and flooring at 1.
/// Predictions, when present, are scaled the same way.
pub fn scale_lengths(w: &Workload, factor: f64) -> Result<Workload> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(param(format!("scale factor must be > 0, got {factor}")));
    }
    let scale = |l: u32| ((f64::from(l) * factor).round().max(1.0)).min(f64::from(u32::MAX)) as u32;
    let samples = w
        .samples
        .iter()
        .map(|s| SampleSpec {
            true_out_len: scale(s.true_out_len),
            predicted_out_len: s.predicted_out_len.map(scale),
            ..*s
        })
        .collect();
    Ok(Workload {
        samples,
        global_batch_size: w.global_batch_size,
    })
}

/// Nearest-rank percentile: the `ceil(pct/100 * n)`-th smallest value.
/// `sorted` must be ascending and non-empty.
pub fn percentile_nearest_rank(sorted: &[u32], pct: u32) -> u32 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = (pct as usize * n).div_ceil(100).max(1);
    sorted[rank.min(n) - 1]
}

/// Exact order statistics over the true output lengths.
pub fn summarize(w: &Workload) -> Result<DistributionStats> {
    if w.is_empty() {
        return Err(SimError::EmptyInput("cannot summarize an empty workload"));
    }
    let mut lens = w.lengths();
    lens.sort_unstable();
    let mean = lens.iter().map(|&l| f64::from(l)).sum::<f64>() / lens.len() as f64;
    Ok(DistributionStats {
        p50: percentile_nearest_rank(&lens, 50),
        p90: percentile_nearest_rank(&lens, 90),
        max: *lens.last().unwrap(),
        mean,
    })
}
