use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cost_model::{instance_generation_latency, PtlProfile};
use crate::error::{param, Result, SimError};
use crate::ranker::mark_longtail;
use crate::workload::{DistributionStats, SampleSpec, Workload};

/// How the two group latencies are combined when choosing `(N_l, N_r)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreRule {
    /// Groups run concurrently: the slower one decides.
    #[default]
    Max,
    /// Literal sum of both group latencies.
    Sum,
}

/// Assignment of a batch to generation instances.
///
/// The first `n_longtail_instances` entries of `assignments` serve long-tail
/// samples, the rest serve regular ones.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchPlan {
    pub n_longtail_instances: usize,
    pub n_regular_instances: usize,
    pub assignments: Vec<Vec<SampleSpec>>,
    pub alpha: f64,
}

impl DispatchPlan {
    pub fn instances(&self) -> usize {
        self.assignments.len()
    }

    pub fn sample_count(&self) -> usize {
        self.assignments.iter().map(Vec::len).sum()
    }

    /// True when every sample of `w` appears exactly once.
    pub fn partitions(&self, w: &Workload) -> bool {
        let mut ids: Vec<u64> = self.assignments.iter().flatten().map(|s| s.id).collect();
        let mut want: Vec<u64> = w.samples.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        want.sort_unstable();
        ids == want
    }
}

/// Planning-time latency of `size` samples of estimated length `l_est` spread
/// over `instances` instances.
fn group_latency(profile: &PtlProfile, size: usize, l_est: u32, instances: usize, max_bs: u32) -> Result<f64> {
    if size == 0 {
        return Ok(0.0);
    }
    let per_instance = size.div_ceil(instances) as u32;
    let bs = per_instance.min(max_bs.max(1));
    instance_generation_latency(profile, bs, f64::from(l_est), per_instance)
}

/// Deals `group` (sorted by descending predicted length) to the instance with
/// the fewest predicted tokens so far, lowest index on ties.
fn balance(group: &[SampleSpec], instances: usize) -> Vec<Vec<SampleSpec>> {
    let mut out = vec![Vec::new(); instances];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = (0..instances).map(|i| Reverse((0, i))).collect();
    for s in group {
        let Reverse((load, i)) = heap.pop().expect("instances > 0");
        out[i].push(*s);
        heap.push(Reverse((load + u64::from(s.planning_len()), i)));
    }
    out
}

fn round_robin(group: &[SampleSpec], instances: usize) -> Vec<Vec<SampleSpec>> {
    let mut out = vec![Vec::new(); instances];
    for (j, s) in group.iter().enumerate() {
        out[j % instances].push(*s);
    }
    out
}

/// Skewness-aware dispatching.
///
/// The longest `alpha` fraction by predicted length forms the long-tail group,
/// estimated at `stats.p90` tokens each; the rest is estimated at `stats.p50`.
/// Every split `N_l + N_r = n` is scored with the instance latency model and
/// the cheapest wins (smaller `N_l` on ties). Each group is then dealt in
/// descending predicted length to its least-loaded instance by predicted tokens.
pub fn dispatch(
    w: &Workload,
    alpha: f64,
    stats: &DistributionStats,
    n: usize,
    profile: &PtlProfile,
    max_bs: u32,
    rule: ScoreRule,
) -> Result<DispatchPlan> {
    if n == 0 {
        return Err(param("need at least one generation instance"));
    }
    if w.is_empty() {
        return Ok(DispatchPlan {
            n_longtail_instances: 0,
            n_regular_instances: n,
            assignments: vec![Vec::new(); n],
            alpha,
        });
    }
    let (tail, regular) = mark_longtail(w, alpha)?;

    let n_l = match (tail.is_empty(), regular.is_empty()) {
        (true, _) => 0,
        (false, true) => n,
        (false, false) => {
            if n < 2 {
                return Err(SimError::Infeasible(
                    "long-tail and regular samples need at least two instances".into(),
                ));
            }
            let mut best = (f64::INFINITY, 1);
            for n_l in 1..n {
                let lt = group_latency(profile, tail.len(), stats.p90, n_l, max_bs)?;
                let lr = group_latency(profile, regular.len(), stats.p50, n - n_l, max_bs)?;
                let score = match rule {
                    ScoreRule::Max => lt.max(lr),
                    ScoreRule::Sum => lt + lr,
                };
                if score < best.0 {
                    best = (score, n_l);
                }
            }
            best.1
        }
    };
    let n_r = n - n_l;

    let mut assignments = Vec::with_capacity(n);
    if n_l > 0 {
        assignments.extend(balance(&tail, n_l));
    }
    if n_r > 0 {
        assignments.extend(balance(&regular, n_r));
    }
    Ok(DispatchPlan {
        n_longtail_instances: n_l,
        n_regular_instances: n_r,
        assignments,
        alpha,
    })
}

/// Uniformly random permutation dealt round-robin over `n` instances.
pub fn random_dispatch(w: &Workload, n: usize, seed: u64) -> Result<DispatchPlan> {
    if n == 0 {
        return Err(param("need at least one generation instance"));
    }
    let mut samples = w.samples.clone();
    samples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(DispatchPlan {
        n_longtail_instances: 0,
        n_regular_instances: n,
        assignments: round_robin(&samples, n),
        alpha: 0.0,
    })
}
