//! Dispatching samples to generation instances and simulating each instance.

mod dispatch;
mod instance;
mod lpt;

pub use dispatch::{dispatch, random_dispatch, DispatchPlan, ScoreRule};
pub use instance::{simulate_instance, simulate_instance_with_prefill, Completion, GenerationTimeline, OrderPolicy};
pub use lpt::{lpt_order, makespan_bruteforce, LptSchedule, BRUTEFORCE_MAX_JOBS};

use rayon::prelude::*;

use crate::cost_model::{DispatchPolicy, PtlProfile};
use crate::error::Result;
use crate::workload::{summarize, Workload};

/// Simulates every instance of `plan` and returns the overall makespan.
pub fn simulate_plan(plan: &DispatchPlan, profile: &PtlProfile, max_bs: u32, order: OrderPolicy) -> f64 {
    plan.assignments
        .iter()
        .map(|a| simulate_instance(a, profile, max_bs, order).makespan)
        .fold(0.0, f64::max)
}

/// Dispatches `w` over `dp` instances under `policy` and simulates them.
///
/// Random dispatch admits in arrival order; skewness-aware dispatch admits
/// longest-predicted first. Samples without a prediction are planned with
/// their true length.
#[allow(clippy::too_many_arguments)]
pub fn generate(
    w: &Workload,
    dp: usize,
    policy: DispatchPolicy,
    alpha: f64,
    rule: ScoreRule,
    profile: &PtlProfile,
    max_bs: u32,
    seed: u64,
    prefill_ms_per_prompt_token: f64,
) -> Result<Vec<GenerationTimeline>> {
    let (plan, order) = match policy {
        DispatchPolicy::Random => (random_dispatch(w, dp, seed)?, OrderPolicy::Fifo),
        DispatchPolicy::SkewnessAware => {
            let mut planned = w.clone();
            for s in &mut planned.samples {
                s.predicted_out_len.get_or_insert(s.true_out_len);
            }
            let plan = if dp == 1 {
                DispatchPlan {
                    n_longtail_instances: 0,
                    n_regular_instances: 1,
                    assignments: vec![planned.samples.clone()],
                    alpha,
                }
            } else {
                let stats = summarize(&planned)?;
                dispatch(&planned, alpha, &stats, dp, profile, max_bs, rule)?
            };
            (plan, OrderPolicy::Lpt)
        }
    };
    Ok(plan
        .assignments
        .par_iter()
        .map(|a| simulate_instance_with_prefill(a, profile, max_bs, order, prefill_ms_per_prompt_token))
        .collect())
}
