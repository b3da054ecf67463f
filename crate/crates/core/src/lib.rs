//! Simulation and scheduling library for reinforcement-learning post-training
//! of language models on disaggregated generation and training pools.
//!
//! The crate covers per-step decode cost modeling, long-tail aware dispatch
//! of samples to generation instances, GPU allocation between the two
//! stages, and an event-level replay of several generation/training overlap
//! strategies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocator;
pub mod cost_model;
pub mod error;
pub mod pipeline;
pub mod ranker;
pub mod scheduler;
pub mod workload;

pub use allocator::{
    adjustment_decision, allocate_cross_dc, allocate_single_dc, run_elastic, settle_dp, AdjustAction, AdjustState,
    AllocationResult, EstimatedCosts, StageCostModel, TableCosts,
};
pub use cost_model::{
    fit_profile, generation_time_estimate, instance_generation_latency, ptl, sample_latency, training_time,
    weight_transfer_time, DispatchPolicy, GenerationSetup, HardwareSpec, LinkSpec, ModelShape, PtlProfile,
    TrainCostModel,
};
pub use error::{Result, SimError};
pub use pipeline::{
    run_iterations, steady_state_iteration_time, utilization, verify_staleness, IterationInput, PipelineMode,
    PipelineParams, SimTrace, TrainStage,
};
pub use ranker::{calibrate_noise, mark_longtail, predict_lengths, RankerModel};
pub use scheduler::{
    dispatch, lpt_order, makespan_bruteforce, random_dispatch, simulate_instance, DispatchPlan, GenerationTimeline,
    OrderPolicy, ScoreRule,
};
pub use workload::{summarize, DistributionStats, LengthDistribution, SampleSpec, Workload};
