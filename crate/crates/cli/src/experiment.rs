//! Scenario execution: workload generation, allocation, pipeline replay.

use rayon::prelude::*;
use streamsim_core::allocator::{run_elastic, settle_dp, AdjustAction, EstimatedCosts};
use streamsim_core::cost_model::{generation_time_estimate, training_time};
use streamsim_core::pipeline::{build_inputs, jitter_lengths, IterationInput};
use streamsim_core::ranker::{calibrate_noise, measure_recall, predict_lengths, RankerModel};
use streamsim_core::workload::{scale_lengths, SampleSpec};
use streamsim_core::{
    allocate_cross_dc, allocate_single_dc, run_iterations, steady_state_iteration_time, utilization, verify_staleness,
    weight_transfer_time, DispatchPolicy, GenerationSetup, HardwareSpec, LengthDistribution, LinkSpec, PipelineMode,
    PipelineParams, SimError, SimTrace, TrainCostModel, TrainStage, Workload,
};

use crate::config::{DispatchKind, ExperimentConfig, RankerKind, WorkloadSource};
use crate::report::{AllocationRow, Report, ReportRow, RowStatus};

/// Upper bound on generation DP units when settling an elastic pool.
const ELASTIC_MAX_DP: u32 = 1024;

/// Where the two stages run.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub gen_hw: HardwareSpec,
    pub train_hw: HardwareSpec,
    pub link: LinkSpec,
    /// Separate generation and training budgets instead of one shared budget.
    pub cross_dc: bool,
}

impl Deployment {
    /// Deployment described by the config's hardware and allocation sections.
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        let cross_dc = cfg.allocation.cross_dc;
        Self {
            gen_hw: cfg.hardware.gen.clone(),
            train_hw: cfg.hardware.train.clone(),
            link: if cross_dc {
                cfg.hardware.cross_link
            } else {
                cfg.hardware.link
            },
            cross_dc,
        }
    }
}

/// One simulated scenario for one seed.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub mode: PipelineMode,
    pub seed: u64,
    pub gen_gpus: u32,
    pub train_gpus: u32,
    pub gen_tp: u32,
    pub weight_ms: f64,
    pub iteration_ms: f64,
    /// Samples per second.
    pub throughput: f64,
    /// Relative hardware cost of the GPUs used.
    pub cost: f64,
    pub gen_util: f64,
    pub train_util: f64,
    pub max_staleness: usize,
    pub trace: SimTrace,
    pub allocation: Vec<AllocationRow>,
}

impl ScenarioRun {
    pub fn throughput_per_cost(&self) -> f64 {
        self.throughput / self.cost
    }
}

fn dispatch_policy(kind: DispatchKind) -> DispatchPolicy {
    match kind {
        DispatchKind::Random => DispatchPolicy::Random,
        DispatchKind::Skewness => DispatchPolicy::SkewnessAware,
    }
}

fn iteration_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(i as u64)
}

/// Length distribution used for ranker calibration.
pub fn calibration_distribution(cfg: &ExperimentConfig) -> Result<LengthDistribution, SimError> {
    match &cfg.workload.source {
        WorkloadSource::Distribution(d) => Ok(d.clone()),
        WorkloadSource::Trace { workload, .. } => LengthDistribution::from_workload(workload),
    }
}

/// Ranker described by the config; a target recall is calibrated first.
pub fn ranker_for(cfg: &ExperimentConfig, seed: u64) -> Result<RankerModel, SimError> {
    let r = &cfg.ranker;
    match r.mode {
        RankerKind::Oracle => Ok(RankerModel::oracle()),
        RankerKind::Noisy => match r.target_recall {
            None => Ok(RankerModel::noisy(r.sigma, seed)),
            Some(target) => {
                let dist = calibration_distribution(cfg)?;
                let c = calibrate_noise(
                    target,
                    r.alpha,
                    &dist,
                    r.calibration_samples,
                    r.calibration_trials,
                    seed,
                )?;
                Ok(RankerModel::noisy(c.sigma, seed).with_target(target, r.alpha))
            }
        },
    }
}

fn base_workload(cfg: &ExperimentConfig, i: usize, seed: u64) -> Result<Workload, SimError> {
    let b = cfg.workload.global_batch;
    let first = (i * b) as u64;
    let draw = if cfg.workload.resample { i } else { 0 };
    match &cfg.workload.source {
        WorkloadSource::Distribution(d) => {
            Workload::synthetic(d, &cfg.workload.prompt, b, first, iteration_seed(seed, draw))
        }
        WorkloadSource::Trace { workload, .. } => {
            let n = workload.len();
            let samples = (0..b)
                .map(|k| {
                    let s = workload.samples[(draw * b + k) % n];
                    SampleSpec::new(first + k as u64, s.prompt_len, s.true_out_len)
                })
                .collect();
            Workload::new(samples)
        }
    }
}

/// The per-iteration workloads of one seed, with ranker predictions.
pub fn iteration_workloads(cfg: &ExperimentConfig, ranker: &RankerModel, seed: u64) -> Result<Vec<Workload>, SimError> {
    let wc = &cfg.workload;
    let iters = cfg.pipeline.iterations;
    (0..iters)
        .map(|i| {
            let progress = if iters > 1 { i as f64 / (iters - 1) as f64 } else { 0.0 };
            let factor = wc.scale * (1.0 + (wc.ramp_to - 1.0) * progress);
            let mut w = base_workload(cfg, i, seed)?;
            if factor != 1.0 {
                w = scale_lengths(&w, factor)?;
            }
            if wc.jitter > 0.0 {
                w = jitter_lengths(&w, wc.jitter, iteration_seed(seed, i) ^ 0x5eed)?;
            }
            predict_lengths(ranker, &w)
        })
        .collect()
}

/// Generation estimator for `hw`, with the profile moved from the reference
/// model and hardware it was measured on.
pub fn generation_setup(cfg: &ExperimentConfig, hw: &HardwareSpec, seed: u64) -> Result<GenerationSetup, SimError> {
    let profile = cfg
        .cost
        .profile
        .for_model(&cfg.cost.profile_model, &cfg.model)?
        .for_hardware(&cfg.cost.profile_hardware, hw)?;
    let mut s = GenerationSetup::new(profile, hw.clone(), cfg.model.clone());
    s.tp_overhead = cfg.cost.tp_overhead;
    s.activation_reserve = cfg.cost.activation_reserve;
    s.alpha = cfg.ranker.alpha;
    s.seed = seed;
    s.max_bs_override = cfg.cost.max_bs;
    s.prefill_ms_per_prompt_token = cfg.cost.prefill_ms_per_token;
    Ok(s)
}

pub fn train_model(cfg: &ExperimentConfig, hw: &HardwareSpec) -> Result<TrainCostModel, SimError> {
    TrainCostModel::from_hardware(
        &cfg.model,
        hw,
        cfg.cost.train_flops_per_param_token,
        cfg.cost.train_mfu,
        cfg.cost.train_step_ms,
        cfg.cost.train_max_gpus,
    )
}

pub fn weight_ms(cfg: &ExperimentConfig, link: &LinkSpec) -> Result<f64, SimError> {
    match cfg.cost.weight_ms {
        Some(w) => Ok(w),
        None => Ok(weight_transfer_time(cfg.model.params, link)? * 1_000.0),
    }
}

/// Fastest TP choice dividing `gpus` for workload `w`.
fn best_tp(
    setup: &GenerationSetup,
    gpus: u32,
    w: &Workload,
    policy: DispatchPolicy,
    tp_choices: &[u32],
) -> Result<u32, SimError> {
    let mut best: Option<(u32, f64)> = None;
    let mut tps: Vec<u32> = tp_choices.to_vec();
    tps.sort_unstable();
    tps.dedup();
    for tp in tps {
        if tp == 0 || !gpus.is_multiple_of(tp) {
            continue;
        }
        let t = match generation_time_estimate(setup, gpus, tp, w, policy) {
            Ok(t) => t,
            Err(SimError::Capacity(_)) => continue,
            Err(e) => return Err(e),
        };
        if best.is_none_or(|(_, b)| t < b) {
            best = Some((tp, t));
        }
    }
    best.map(|(tp, _)| tp)
        .ok_or_else(|| SimError::Infeasible(format!("no TP choice in {tp_choices:?} fits on {gpus} GPUs")))
}

/// Simulates one pipeline mode for one seed.
pub fn run_scenario(
    cfg: &ExperimentConfig,
    deployment: &Deployment,
    mode: PipelineMode,
    policy: DispatchPolicy,
    seed: u64,
) -> Result<ScenarioRun, SimError> {
    let ranker = ranker_for(cfg, seed)?;
    let workloads = iteration_workloads(cfg, &ranker, seed)?;
    let tm = train_model(cfg, &deployment.train_hw)?;
    let tps = &cfg.allocation.tp_choices;
    let a = &cfg.allocation;

    let (gen_gpus, train_gpus, gen_tp, inputs, allocation, cost, weight) = if mode == PipelineMode::Colocated {
        // one pool of training hardware serves both stages
        let n = if deployment.cross_dc {
            a.gen_gpus + a.train_gpus
        } else {
            a.gpus
        };
        let setup = generation_setup(cfg, &deployment.train_hw, seed)?;
        let tp = best_tp(&setup, n, &workloads[0], policy, tps)?;
        let inputs = build_inputs(&setup, &workloads, n, tp, policy)?;
        let allocation = allocation_rows(&inputs, &tm, n, n, tp, &[]);
        let cost = deployment.train_hw.cost_of(n);
        (n, n, tp, inputs, allocation, cost, 0.0)
    } else {
        let setup = generation_setup(cfg, &deployment.gen_hw, seed)?;
        let (max_gen, max_train) = if deployment.cross_dc {
            (a.gen_gpus, a.train_gpus)
        } else {
            (a.gpus - 1, a.gpus - 1)
        };
        let est = EstimatedCosts::tabulate(&setup, &workloads[0], policy, &tm, max_gen, max_train, tps)?;
        let alloc = if deployment.cross_dc {
            allocate_cross_dc(a.gen_gpus, a.train_gpus, &est, tps)?
        } else {
            allocate_single_dc(a.gpus, &est, tps)?
        };
        let tp = alloc.gen_tp;
        let y = alloc.train_gpus;
        let (inputs, dps) = if a.elastic {
            // the pool starts where the controller rests on the first batch
            let w0 = &workloads[0];
            let dp0 = settle_dp(
                alloc.gen_dp(),
                training_time(&tm, w0.total_tokens(), y)?,
                ELASTIC_MAX_DP,
                |dp| generation_time_estimate(&setup, dp * tp, tp, w0, policy),
            )?;
            elastic_inputs(&setup, &workloads, dp0, tp, &tm, y, policy)?
        } else {
            (
                build_inputs(&setup, &workloads, alloc.gen_gpus, tp, policy)?,
                Vec::new(),
            )
        };
        let peak_gen = dps
            .iter()
            .map(|(dp, _)| dp * tp)
            .max()
            .unwrap_or(alloc.gen_gpus)
            .max(alloc.gen_gpus);
        let allocation = allocation_rows(&inputs, &tm, alloc.gen_gpus, y, tp, &dps);
        let cost = deployment.gen_hw.cost_of(peak_gen) + deployment.train_hw.cost_of(y);
        let weight = weight_ms(cfg, &deployment.link)?;
        (peak_gen, y, tp, inputs, allocation, cost, weight)
    };

    let mut params = PipelineParams::new(mode);
    params.weight_ms = weight;
    params.switch_ms = cfg.cost.switch_ms;
    params.min_train_tokens = cfg.pipeline.min_train_tokens;
    params.warmup = cfg.pipeline.warmup;
    let stage = TrainStage::new(tm, train_gpus)?;
    let trace = run_iterations(&params, &inputs, &stage)?;
    let iteration_ms = steady_state_iteration_time(&trace, cfg.pipeline.warmup)?;
    let (gen_util, train_util) = utilization(&trace)?;
    Ok(ScenarioRun {
        mode,
        seed,
        gen_gpus,
        train_gpus,
        gen_tp,
        weight_ms: weight,
        iteration_ms,
        throughput: cfg.workload.global_batch as f64 / (iteration_ms / 1_000.0),
        cost,
        gen_util,
        train_util,
        max_staleness: verify_staleness(&trace),
        trace,
        allocation,
    })
}

/// Per-iteration DP counts chosen by the elastic controller, with the
/// generation inputs simulated at those counts.
type ElasticPlan = (Vec<IterationInput>, Vec<(u32, AdjustAction)>);

fn elastic_inputs(
    setup: &GenerationSetup,
    workloads: &[Workload],
    initial_dp: u32,
    tp: u32,
    tm: &TrainCostModel,
    train_gpus: u32,
    policy: DispatchPolicy,
) -> Result<ElasticPlan, SimError> {
    let (steps, _) = run_elastic(
        initial_dp,
        workloads.len(),
        |dp, i| generation_time_estimate(setup, dp * tp, tp, &workloads[i], policy),
        |i| training_time(tm, workloads[i].total_tokens(), train_gpus),
    )?;
    let inputs = steps
        .iter()
        .map(|s| {
            let w = std::slice::from_ref(&workloads[s.iteration]);
            Ok(build_inputs(setup, w, s.gen_dp * tp, tp, policy)?.remove(0))
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok((inputs, steps.iter().map(|s| (s.gen_dp, s.action)).collect()))
}

fn allocation_rows(
    inputs: &[IterationInput],
    tm: &TrainCostModel,
    gen_gpus: u32,
    train_gpus: u32,
    tp: u32,
    elastic: &[(u32, AdjustAction)],
) -> Vec<AllocationRow> {
    inputs
        .iter()
        .enumerate()
        .map(|(i, inp)| {
            let t_train = tm.ms_per_token(train_gpus) * inp.tokens() as f64 + tm.c;
            let (x, action) = match elastic.get(i) {
                Some(&(dp, act)) => (dp * tp, act),
                None => (gen_gpus, AdjustAction::None),
            };
            AllocationRow {
                iteration: i,
                x,
                y: train_gpus,
                t_gen: inp.gen_ms,
                t_train,
                delta: inp.gen_ms - t_train,
                action,
            }
        })
        .collect()
}

/// Seeds `seed, seed + 1, ...` for the configured count.
pub fn seeds(cfg: &ExperimentConfig) -> Vec<u64> {
    (0..cfg.pipeline.seeds as u64).map(|k| cfg.pipeline.seed + k).collect()
}

/// A named scenario of a sweep.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub id: String,
    pub mode: PipelineMode,
    pub policy: DispatchPolicy,
    pub deployment: Deployment,
}

/// Runs every scenario over every seed in parallel and averages per scenario.
pub fn sweep(cfg: &ExperimentConfig, title: &str, specs: &[ScenarioSpec]) -> Report {
    let seeds = seeds(cfg);
    let jobs: Vec<(usize, u64)> = (0..specs.len())
        .flat_map(|s| seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let results: Vec<Result<ScenarioRun, SimError>> = jobs
        .par_iter()
        .map(|&(s, seed)| run_scenario(cfg, &specs[s].deployment, specs[s].mode, specs[s].policy, seed))
        .collect();

    let mut report = Report::new(title);
    for (s, spec) in specs.iter().enumerate() {
        let runs: Vec<&Result<ScenarioRun, SimError>> = jobs
            .iter()
            .zip(&results)
            .filter(|((js, _), _)| *js == s)
            .map(|(_, r)| r)
            .collect();
        match runs.iter().find_map(|r| r.as_ref().err()) {
            Some(e) => report.rows.push(ReportRow::failed(&spec.id, spec.mode, e.to_string())),
            None => {
                let ok: Vec<&ScenarioRun> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
                let k = ok.len() as f64;
                let mean = |f: &dyn Fn(&ScenarioRun) -> f64| ok.iter().map(|r| f(r)).sum::<f64>() / k;
                report.rows.push(ReportRow {
                    scenario: spec.id.clone(),
                    mode: spec.mode.to_string(),
                    throughput: mean(&|r| r.throughput),
                    normalized_throughput: 0.0,
                    throughput_per_cost: mean(&|r| r.throughput_per_cost()),
                    gen_util: mean(&|r| r.gen_util),
                    train_util: mean(&|r| r.train_util),
                    max_staleness: ok.iter().map(|r| r.max_staleness).max().unwrap_or(0),
                    status: RowStatus::Ok,
                });
                let first = ok[0];
                report.traces.push((spec.id.clone(), first.trace.clone()));
                report
                    .allocation
                    .extend(first.allocation.iter().map(|a| (spec.id.clone(), *a)));
            }
        }
    }
    report.normalize();
    report
}

fn scenario_id(mode: PipelineMode) -> String {
    mode.to_string().replace(':', "-")
}

/// Runs every configured mode.
pub fn run_experiment(cfg: &ExperimentConfig) -> Report {
    let deployment = Deployment::from_config(cfg);
    let policy = dispatch_policy(cfg.pipeline.dispatch);
    let mut specs: Vec<ScenarioSpec> = Vec::new();
    for &mode in &cfg.pipeline.modes {
        let mut id = scenario_id(mode);
        if specs.iter().any(|s| s.id == id) {
            id = format!("{id}-{}", specs.len() + 1);
        }
        specs.push(ScenarioSpec {
            id,
            mode,
            policy,
            deployment: deployment.clone(),
        });
    }
    sweep(cfg, "run", &specs)
}

/// The four ablation rows: colocated with random dispatch, colocated with
/// skewness-aware dispatch, disaggregated streaming, fully asynchronous.
pub fn ablation_specs(cfg: &ExperimentConfig) -> Vec<ScenarioSpec> {
    let d = Deployment::from_config(cfg);
    let row = |id: &str, mode, policy| ScenarioSpec {
        id: id.to_string(),
        mode,
        policy,
        deployment: d.clone(),
    };
    vec![
        row("colocated_random", PipelineMode::Colocated, DispatchPolicy::Random),
        row(
            "colocated_skewness",
            PipelineMode::Colocated,
            DispatchPolicy::SkewnessAware,
        ),
        row(
            "disagg_dynamic_stream",
            PipelineMode::DynamicStream,
            DispatchPolicy::SkewnessAware,
        ),
        row(
            "disagg_fully_async",
            PipelineMode::FullyAsync,
            DispatchPolicy::SkewnessAware,
        ),
    ]
}

pub fn ablation(cfg: &ExperimentConfig) -> Report {
    sweep(cfg, "ablation", &ablation_specs(cfg))
}

/// Homogeneous baseline (training hardware for both stages, one datacenter
/// link) and the heterogeneous deployment (generation on the configured
/// generation hardware behind the cross-datacenter link), both with the
/// generation/training budgets of the allocation section.
pub fn heterogeneity_specs(cfg: &ExperimentConfig) -> Vec<ScenarioSpec> {
    let homogeneous = Deployment {
        gen_hw: cfg.hardware.train.clone(),
        train_hw: cfg.hardware.train.clone(),
        link: cfg.hardware.link,
        cross_dc: true,
    };
    let heterogeneous = Deployment {
        gen_hw: cfg.hardware.gen.clone(),
        train_hw: cfg.hardware.train.clone(),
        link: cfg.hardware.cross_link,
        cross_dc: true,
    };
    vec![
        ScenarioSpec {
            id: "homogeneous".into(),
            mode: PipelineMode::FullyAsync,
            policy: DispatchPolicy::SkewnessAware,
            deployment: homogeneous,
        },
        ScenarioSpec {
            id: "heterogeneous".into(),
            mode: PipelineMode::FullyAsync,
            policy: DispatchPolicy::SkewnessAware,
            deployment: heterogeneous,
        },
    ]
}

pub fn heterogeneity_study(cfg: &ExperimentConfig) -> Report {
    sweep(cfg, "hetero", &heterogeneity_specs(cfg))
}

/// Calibrated noise for one tail fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationRow {
    pub alpha: f64,
    pub target_recall: f64,
    pub sigma: f64,
    pub recall: f64,
    pub saturated: bool,
}

/// Calibrates the ranker noise separately for every configured tail target
/// and re-measures recall on fresh seeds.
pub fn calibrate_ranker(cfg: &ExperimentConfig) -> Result<Vec<CalibrationRow>, SimError> {
    let dist = calibration_distribution(cfg)?;
    let r = &cfg.ranker;
    let seed = cfg.pipeline.seed;
    r.targets
        .iter()
        .map(|&(alpha, target)| {
            let c = calibrate_noise(target, alpha, &dist, r.calibration_samples, r.calibration_trials, seed)?;
            let check = measure_recall(
                c.sigma,
                alpha,
                &dist,
                r.calibration_samples,
                r.calibration_trials,
                seed.wrapping_add(1_000),
            )?;
            Ok(CalibrationRow {
                alpha,
                target_recall: target,
                sigma: c.sigma,
                recall: check.recall,
                saturated: c.saturated,
            })
        })
        .collect()
}
