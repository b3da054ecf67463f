//! Shared fixtures for the benchmarks.

use streamsim_core::ranker::{predict_lengths, RankerModel};
use streamsim_core::workload::sample_lengths;
use streamsim_core::{LengthDistribution, Workload};

/// Long-tailed output lengths capped at 20K tokens, with oracle predictions.
pub fn longtail_workload(n: usize, seed: u64) -> Workload {
    let out = LengthDistribution::lognormal(7.0, 1.0, 20_000);
    let prompt = LengthDistribution::lognormal(6.0, 0.3, 2_048);
    let w = Workload::synthetic(&out, &prompt, n, 0, seed).expect("valid distribution");
    predict_lengths(&RankerModel::oracle(), &w).expect("oracle prediction")
}

/// Job sizes for makespan benchmarks, drawn from the same long tail.
pub fn job_sizes(n: usize, seed: u64) -> Vec<u64> {
    let dist = LengthDistribution::lognormal(7.0, 1.0, 20_000);
    sample_lengths(&dist, n, seed)
        .expect("valid distribution")
        .into_iter()
        .map(u64::from)
        .collect()
}
