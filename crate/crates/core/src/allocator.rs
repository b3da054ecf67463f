//! GPU allocation between generation and training, plus the elastic
//! scale-out controller for generation.

use std::collections::{BTreeMap, VecDeque};

use rayon::prelude::*;

use crate::cost_model::{generation_time_estimate, training_time, DispatchPolicy, GenerationSetup, TrainCostModel};
use crate::error::{Result, SimError};
use crate::workload::Workload;

/// Number of completed iterations averaged into the measured gap.
pub const DELTA_WINDOW: usize = 3;

/// Stage-time estimates as a function of GPU count, for a fixed workload.
pub trait StageCostModel {
    /// Generation time (ms) on `gpus` GPUs in TP groups of `tp`, or `None`
    /// when that layout is not possible.
    fn generation_ms(&self, gpus: u32, tp: u32) -> Option<f64>;
    /// Training time (ms) on `gpus` GPUs.
    fn training_ms(&self, gpus: u32) -> Option<f64>;
}

/// Explicit lookup tables; generation ignores TP.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TableCosts {
    pub gen: BTreeMap<u32, f64>,
    pub train: BTreeMap<u32, f64>,
}

impl TableCosts {
    pub fn new(gen: &[(u32, f64)], train: &[(u32, f64)]) -> Self {
        Self {
            gen: gen.iter().copied().collect(),
            train: train.iter().copied().collect(),
        }
    }
}

impl StageCostModel for TableCosts {
    fn generation_ms(&self, gpus: u32, tp: u32) -> Option<f64> {
        (tp == 1).then(|| self.gen.get(&gpus).copied()).flatten()
    }

    fn training_ms(&self, gpus: u32) -> Option<f64> {
        self.train.get(&gpus).copied()
    }
}

/// Simulation-backed estimates tabulated for one workload.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimatedCosts {
    /// `(gpus, tp) -> ms`
    pub gen: BTreeMap<(u32, u32), f64>,
    pub train: BTreeMap<u32, f64>,
}

impl EstimatedCosts {
    /// Estimates generation on every multiple of each TP size up to
    /// `max_gen` GPUs and training on `1..=max_train` GPUs. Training cost
    /// covers the generated tokens of `w`.
    pub fn tabulate(
        setup: &GenerationSetup,
        w: &Workload,
        policy: DispatchPolicy,
        train: &TrainCostModel,
        max_gen: u32,
        max_train: u32,
        tp_choices: &[u32],
    ) -> Result<Self> {
        let layouts: Vec<(u32, u32)> = tp_list(tp_choices)
            .into_iter()
            .flat_map(|tp| (1..=max_gen / tp).map(move |dp| (dp * tp, tp)))
            .collect();
        // layouts whose replicas cannot hold the weights are left out
        let gen = layouts
            .into_par_iter()
            .filter_map(|(g, tp)| match generation_time_estimate(setup, g, tp, w, policy) {
                Ok(t) => Some(Ok(((g, tp), t))),
                Err(SimError::Capacity(_)) => None,
                Err(e) => Some(Err(e)),
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        let tokens = w.total_tokens();
        let train = (1..=max_train)
            .map(|y| Ok((y, training_time(train, tokens, y)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Self { gen, train })
    }
}

impl StageCostModel for EstimatedCosts {
    fn generation_ms(&self, gpus: u32, tp: u32) -> Option<f64> {
        self.gen.get(&(gpus, tp)).copied()
    }

    fn training_ms(&self, gpus: u32) -> Option<f64> {
        self.train.get(&gpus).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationResult {
    pub gen_gpus: u32,
    pub train_gpus: u32,
    pub gen_tp: u32,
    pub est_gen_time: f64,
    pub est_train_time: f64,
    pub est_iter_time: f64,
    /// GPUs of the shrunk stage handed back (cross-datacenter only).
    pub freed_gpus: u32,
}

impl AllocationResult {
    fn new(gen_gpus: u32, train_gpus: u32, gen_tp: u32, gen: f64, train: f64) -> Self {
        Self {
            gen_gpus,
            train_gpus,
            gen_tp,
            est_gen_time: gen,
            est_train_time: train,
            est_iter_time: gen.max(train),
            freed_gpus: 0,
        }
    }

    pub fn gen_dp(&self) -> u32 {
        self.gen_gpus / self.gen_tp.max(1)
    }
}

fn tp_list(tp_choices: &[u32]) -> Vec<u32> {
    let mut tps: Vec<u32> = tp_choices.iter().copied().filter(|&t| t >= 1).collect();
    if tps.is_empty() {
        tps.push(1);
    }
    tps.sort_unstable();
    tps.dedup();
    tps
}

/// Fastest TP layout for `gpus` generation GPUs, smaller TP on ties.
pub fn best_generation<M: StageCostModel + ?Sized>(est: &M, gpus: u32, tp_choices: &[u32]) -> Option<(u32, f64)> {
    let mut best: Option<(u32, f64)> = None;
    for tp in tp_list(tp_choices) {
        if !gpus.is_multiple_of(tp) {
            continue;
        }
        if let Some(t) = est.generation_ms(gpus, tp) {
            if best.is_none_or(|(_, b)| t < b) {
                best = Some((tp, t));
            }
        }
    }
    best
}

/// Enumerates every `(x, y)` with `x + y <= n` and every TP choice for `x`,
/// minimizing `max(T_gen(x), T_train(y))`. Ties go to smaller `x`, then
/// smaller `x + y`, then smaller TP.
pub fn allocate_single_dc<M: StageCostModel + ?Sized>(n: u32, est: &M, tp_choices: &[u32]) -> Result<AllocationResult> {
    if n < 2 {
        return Err(SimError::Infeasible(format!(
            "single-datacenter allocation needs at least 2 GPUs, got {n}"
        )));
    }
    let tps = tp_list(tp_choices);
    let mut best: Option<AllocationResult> = None;
    for x in 1..n {
        for tp in &tps {
            if x % tp != 0 {
                continue;
            }
            let Some(t_gen) = est.generation_ms(x, *tp) else {
                continue;
            };
            for y in 1..=n - x {
                let Some(t_train) = est.training_ms(y) else {
                    continue;
                };
                let cand = AllocationResult::new(x, y, *tp, t_gen, t_train);
                if best.is_none_or(|b| cand.est_iter_time < b.est_iter_time) {
                    best = Some(cand);
                }
            }
        }
    }
    best.ok_or_else(|| SimError::Infeasible(format!("no feasible allocation within {n} GPUs")))
}

/// Cross-datacenter allocation with budgets `m` (generation) and `n`
/// (training). The faster stage under full allocation is shrunk to the count
/// `k` whose time comes closest to the slower stage without exceeding it
/// (smaller `k` on ties).
pub fn allocate_cross_dc<M: StageCostModel + ?Sized>(
    m: u32,
    n: u32,
    est: &M,
    tp_choices: &[u32],
) -> Result<AllocationResult> {
    if m < 1 || n < 1 {
        return Err(SimError::Infeasible(format!(
            "cross-datacenter allocation needs non-empty budgets, got m={m}, n={n}"
        )));
    }
    let (tp_full, t_gen) = best_generation(est, m, tp_choices)
        .ok_or_else(|| SimError::Infeasible(format!("generation cannot run on {m} GPUs")))?;
    let t_train = est
        .training_ms(n)
        .ok_or_else(|| SimError::Infeasible(format!("training cannot run on {n} GPUs")))?;

    if t_gen < t_train {
        let mut pick = (m, tp_full, t_gen);
        let mut gap = t_train - t_gen;
        for k in 1..=m {
            if let Some((tp, t)) = best_generation(est, k, tp_choices) {
                if t <= t_train && t_train - t < gap {
                    gap = t_train - t;
                    pick = (k, tp, t);
                }
            }
        }
        let mut r = AllocationResult::new(pick.0, n, pick.1, pick.2, t_train);
        r.freed_gpus = m - pick.0;
        Ok(r)
    } else {
        let mut pick = (n, t_train);
        let mut gap = t_gen - t_train;
        for k in 1..=n {
            if let Some(t) = est.training_ms(k) {
                if t <= t_gen && t_gen - t < gap {
                    gap = t_gen - t;
                    pick = (k, t);
                }
            }
        }
        let mut r = AllocationResult::new(m, pick.0, tp_full, t_gen, pick.1);
        r.freed_gpus = n - pick.0;
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjustAction {
    None,
    AddOneDp,
}

impl AdjustAction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::AddOneDp => "add_one_dp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjustRecord {
    pub iteration: usize,
    pub delta: f64,
    pub delta_prime: f64,
    pub action: AdjustAction,
}

/// Elastic controller state: recent generation-minus-training gaps and the
/// current number of generation DP units.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustState {
    window: VecDeque<f64>,
    pub gen_dp: u32,
    pub history: Vec<AdjustRecord>,
}

impl AdjustState {
    pub fn new(gen_dp: u32) -> Self {
        Self {
            window: VecDeque::with_capacity(DELTA_WINDOW),
            gen_dp: gen_dp.max(1),
            history: Vec::new(),
        }
    }

    /// Records the gap `T_gen - T_train` of a completed iteration.
    pub fn observe(&mut self, delta_ms: f64) {
        if self.window.len() == DELTA_WINDOW {
            self.window.pop_front();
        }
        self.window.push_back(delta_ms);
    }

    /// Trailing mean of the observed gaps since the last adjustment.
    pub fn delta(&self) -> Option<f64> {
        (!self.window.is_empty()).then(|| self.window.iter().sum::<f64>() / self.window.len() as f64)
    }
}

/// Adds one generation DP unit iff `delta >= delta' > 0`, where
/// `delta' = P_gen(dp) - P_gen(dp + 1)` for the current workload. Gap
/// measurements taken under the old DP count are discarded after a scale-out.
pub fn adjustment_decision<F>(state: &mut AdjustState, iteration: usize, p_gen: F) -> Result<AdjustAction>
where
    F: Fn(u32) -> Result<f64>,
{
    let Some(delta) = state.delta() else {
        return Ok(AdjustAction::None);
    };
    let delta_prime = p_gen(state.gen_dp)? - p_gen(state.gen_dp + 1)?;
    let action = if delta_prime > 0.0 && delta >= delta_prime {
        state.gen_dp += 1;
        state.window.clear();
        AdjustAction::AddOneDp
    } else {
        AdjustAction::None
    };
    state.history.push(AdjustRecord {
        iteration,
        delta,
        delta_prime,
        action,
    });
    Ok(action)
}

/// Applies the adjustment rule to estimated times until it rests: starting at
/// `initial_dp`, adds units while `P_gen(dp) - t_train >= P_gen(dp) -
/// P_gen(dp + 1) > 0`, up to `max_dp`.
pub fn settle_dp<F>(initial_dp: u32, t_train: f64, max_dp: u32, p_gen: F) -> Result<u32>
where
    F: Fn(u32) -> Result<f64>,
{
    let mut dp = initial_dp.max(1);
    let mut p = p_gen(dp)?;
    while dp < max_dp {
        let next = p_gen(dp + 1)?;
        let delta_prime = p - next;
        if !(delta_prime > 0.0 && p - t_train >= delta_prime) {
            break;
        }
        dp += 1;
        p = next;
    }
    Ok(dp)
}

/// One iteration of the closed elastic loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticStep {
    pub iteration: usize,
    pub gen_dp: u32,
    pub t_gen: f64,
    pub t_train: f64,
    /// Measured `t_gen - t_train` of this iteration.
    pub delta: f64,
    pub action: AdjustAction,
}

/// Runs the controller over a sequence of iteration workloads. `gen_ms(dp, i)`
/// gives the generation time of iteration `i` on `dp` units and `train_ms(i)`
/// its training time.
pub fn run_elastic<G, T>(
    initial_dp: u32,
    iterations: usize,
    gen_ms: G,
    train_ms: T,
) -> Result<(Vec<ElasticStep>, AdjustState)>
where
    G: Fn(u32, usize) -> Result<f64>,
    T: Fn(usize) -> Result<f64>,
{
    let mut state = AdjustState::new(initial_dp);
    let mut steps = Vec::with_capacity(iterations);
    for i in 0..iterations {
        let dp = state.gen_dp;
        let t_gen = gen_ms(dp, i)?;
        let t_train = train_ms(i)?;
        state.observe(t_gen - t_train);
        let action = adjustment_decision(&mut state, i, |d| gen_ms(d, i))?;
        steps.push(ElasticStep {
            iteration: i,
            gen_dp: dp,
            t_gen,
            t_train,
            delta: t_gen - t_train,
            action,
        });
    }
    Ok((steps, state))
}
