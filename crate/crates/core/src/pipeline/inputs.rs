use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::cost_model::{DispatchPolicy, GenerationSetup};
use crate::error::{param, Result};
use crate::scheduler::{self, Completion, GenerationTimeline};
use crate::workload::Workload;

/// Generation outcome of one iteration, relative to its generation start.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationInput {
    /// Sample completions in finish order (ties by id).
    pub completions: Vec<Completion>,
    pub gen_ms: f64,
}

impl IterationInput {
    /// Merges the timelines of all generation instances.
    pub fn from_timelines(timelines: &[GenerationTimeline]) -> Self {
        let mut completions: Vec<Completion> = timelines.iter().flat_map(|t| t.completions.iter().copied()).collect();
        completions.sort_by(|a, b| a.finish_ms.total_cmp(&b.finish_ms).then(a.id.cmp(&b.id)));
        let gen_ms = timelines.iter().map(|t| t.makespan).fold(0.0, f64::max);
        Self { completions, gen_ms }
    }

    /// `n` samples of `tokens` each finishing at even spacing over `gen_ms`.
    pub fn uniform(gen_ms: f64, n: usize, tokens: u32, first_id: u64) -> Self {
        let completions = (0..n)
            .map(|k| Completion {
                id: first_id + k as u64,
                finish_ms: gen_ms * ((k + 1) as f64 / n as f64),
                tokens,
            })
            .collect();
        Self { completions, gen_ms }
    }

    pub fn tokens(&self) -> u64 {
        self.completions.iter().map(|c| u64::from(c.tokens)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.completions.is_empty() {
            return Err(param("iteration has no samples"));
        }
        if !(self.gen_ms >= 0.0) || !self.gen_ms.is_finite() {
            return Err(param(format!("bad generation time {}", self.gen_ms)));
        }
        let ordered = self.completions.windows(2).all(|p| p[0].finish_ms <= p[1].finish_ms);
        let inside = self
            .completions
            .iter()
            .all(|c| c.finish_ms >= 0.0 && c.finish_ms <= self.gen_ms);
        if !ordered || !inside {
            return Err(param("completions must be sorted and within the generation time"));
        }
        Ok(())
    }
}

/// Simulates generation of every iteration workload on `gen_gpus` GPUs in TP
/// groups of `tp`. Iteration `i` uses dispatch seed `setup.seed + i`.
pub fn build_inputs(
    setup: &GenerationSetup,
    stream: &[Workload],
    gen_gpus: u32,
    tp: u32,
    policy: DispatchPolicy,
) -> Result<Vec<IterationInput>> {
    if tp == 0 || gen_gpus < tp || !gen_gpus.is_multiple_of(tp) {
        return Err(param(format!("{gen_gpus} GPUs cannot be split into TP groups of {tp}")));
    }
    let dp = (gen_gpus / tp) as usize;
    stream
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let (profile, max_bs) = setup.instance(tp, w)?;
            let timelines = scheduler::generate(
                w,
                dp,
                policy,
                setup.alpha,
                setup.scoring,
                &profile,
                max_bs,
                setup.seed.wrapping_add(i as u64),
                setup.prefill_ms_per_prompt_token,
            )?;
            Ok(IterationInput::from_timelines(&timelines))
        })
        .collect()
}

/// Multiplies every true length by i.i.d. mean-one lognormal noise of the
/// given log-space spread. Predictions are left untouched.
pub fn jitter_lengths(w: &Workload, sigma: f64, seed: u64) -> Result<Workload> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(param(format!("jitter sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(w.clone());
    }
    let noise = LogNormal::new(-sigma * sigma / 2.0, sigma).map_err(|e| param(format!("jitter distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = w.clone();
    for s in &mut out.samples {
        let v = (f64::from(s.true_out_len) * noise.sample(&mut rng)).round();
        s.true_out_len = v.clamp(1.0, f64::from(u32::MAX)) as u32;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost_model::{HardwareSpec, ModelShape, PtlProfile};

    #[test]
    fn uniform_input_is_valid() {
        let inp = IterationInput::uniform(100.0, 4, 10, 0);
        inp.validate().unwrap();
        assert_eq!(inp.completions.last().unwrap().finish_ms, 100.0);
        assert_eq!(inp.tokens(), 40);
    }

    #[test]
    fn merged_timelines_are_sorted() {
        let setup = GenerationSetup::new(PtlProfile::default(), HardwareSpec::h20(), ModelShape::qwen2_5_7b());
        let w = Workload::from_lengths(&[50, 10, 40, 20, 30, 60], 8).unwrap();
        let inputs = build_inputs(&setup, std::slice::from_ref(&w), 2, 1, DispatchPolicy::Random).unwrap();
        inputs[0].validate().unwrap();
        assert_eq!(inputs[0].completions.len(), 6);
        assert_eq!(inputs[0].tokens(), w.total_tokens());
        assert!(build_inputs(&setup, &[w], 3, 2, DispatchPolicy::Random).is_err());
    }

    #[test]
    fn jitter_is_seeded_and_keeps_mean() {
        let w = Workload::from_lengths(&vec![1000; 4000], 8).unwrap();
        let a = jitter_lengths(&w, 0.1, 7).unwrap();
        assert_eq!(a, jitter_lengths(&w, 0.1, 7).unwrap());
        let mean = a.total_tokens() as f64 / a.len() as f64;
        assert!((mean / 1000.0 - 1.0).abs() < 0.01, "{mean}");
        assert_eq!(jitter_lengths(&w, 0.0, 1).unwrap(), w);
    }
}
