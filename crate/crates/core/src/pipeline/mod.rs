//! Multi-iteration replay of generation and training under different
//! overlap strategies, with bubble and weight-staleness accounting.

mod engine;
mod inputs;

pub use engine::run_iterations;
pub use inputs::{build_inputs, jitter_lengths, IterationInput};

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use crate::cost_model::TrainCostModel;
use crate::error::{param, Result};

/// Default cost of one colocated context switch (weights and optimizer state
/// swapped to host memory).
pub const DEFAULT_SWITCH_MS: f64 = 5_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PipelineMode {
    /// Generation then training on one shared GPU pool.
    Colocated,
    /// Whole batch generated, then trained on a separate pool.
    SerialDisaggregated,
    /// Training starts per mini-batch as soon as that many samples finish.
    Minibatch { count: usize },
    /// Training starts whenever enough finished tokens are buffered.
    DynamicStream,
    /// Generation of `i + 1` overlaps training of `i`; weight sync is a barrier.
    OneStepAsync,
    /// Like one-step asynchrony, with weight transfer off the critical path.
    FullyAsync,
}

impl PipelineMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Colocated => "colocated",
            Self::SerialDisaggregated => "serial_disaggregated",
            Self::Minibatch { .. } => "minibatch",
            Self::DynamicStream => "dynamic_stream",
            Self::OneStepAsync => "one_step_async",
            Self::FullyAsync => "fully_async",
        }
    }

    pub fn is_async(&self) -> bool {
        matches!(self, Self::OneStepAsync | Self::FullyAsync)
    }

    /// Parses a mode name; `minibatch` may carry a count as `minibatch:4`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s, None),
        };
        let mode = match name {
            "colocated" => Self::Colocated,
            "serial_disaggregated" => Self::SerialDisaggregated,
            "minibatch" => {
                let count = match arg {
                    Some(a) => a.parse().map_err(|_| param(format!("bad minibatch count `{a}`")))?,
                    None => 4,
                };
                Self::Minibatch { count }
            }
            "dynamic_stream" => Self::DynamicStream,
            "one_step_async" => Self::OneStepAsync,
            "fully_async" => Self::FullyAsync,
            _ => return Err(param(format!("unknown pipeline mode `{s}`"))),
        };
        if arg.is_some() && !matches!(mode, Self::Minibatch { .. }) {
            return Err(param(format!("mode `{name}` takes no argument")));
        }
        mode.validate()?;
        Ok(mode)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Minibatch { count } if *count < 2 => Err(param(format!("minibatch count must be >= 2, got {count}"))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Minibatch { count } => write!(f, "minibatch:{count}"),
            m => f.write_str(m.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineParams {
    pub mode: PipelineMode,
    /// Weight update plus transfer, ms.
    pub weight_ms: f64,
    /// One colocated context switch, ms.
    pub switch_ms: f64,
    /// Buffered tokens that start a streamed training step.
    pub min_train_tokens: u64,
    /// Iterations excluded from utilization.
    pub warmup: usize,
}

impl PipelineParams {
    pub fn new(mode: PipelineMode) -> Self {
        Self {
            mode,
            weight_ms: 0.0,
            switch_ms: DEFAULT_SWITCH_MS,
            min_train_tokens: 0,
            warmup: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mode.validate()?;
        if !(self.weight_ms >= 0.0) || !self.weight_ms.is_finite() {
            return Err(param(format!("weight time must be >= 0, got {}", self.weight_ms)));
        }
        if !(self.switch_ms >= 0.0) || !self.switch_ms.is_finite() {
            return Err(param(format!("switch time must be >= 0, got {}", self.switch_ms)));
        }
        Ok(())
    }
}

/// Training pool: cost model plus GPU count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStage {
    pub model: TrainCostModel,
    pub gpus: u32,
}

impl TrainStage {
    pub fn new(model: TrainCostModel, gpus: u32) -> Result<Self> {
        if gpus == 0 {
            return Err(param("training stage needs at least one GPU"));
        }
        Ok(Self { model, gpus })
    }

    /// Forward/backward work over `tokens`; streamable in any split.
    pub fn token_ms(&self, tokens: u64) -> f64 {
        self.model.ms_per_token(self.gpus) * tokens as f64
    }

    /// Optimizer update paid once per iteration, after its last micro-batch.
    pub fn update_ms(&self) -> f64 {
        self.model.c
    }

    /// Training time of a whole iteration over `tokens`.
    pub fn iteration_ms(&self, tokens: u64) -> f64 {
        self.token_ms(tokens) + self.update_ms()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Actor {
    Gen,
    Train,
    Link,
}

impl Actor {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Gen => "gen",
            Self::Train => "train",
            Self::Link => "link",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    Start,
    Finish,
    WeightSend,
    WeightApply,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Start => "start",
            Self::Finish => "finish",
            Self::WeightSend => "weight_send",
            Self::WeightApply => "weight_apply",
        }
    }
}

/// One trace record. `payload` is the weight version for generation and link
/// events and the sample count for training steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEvent {
    pub t_ms: f64,
    pub actor: Actor,
    pub kind: EventKind,
    pub iteration: usize,
    pub payload: u64,
}

/// One training micro-batch and the samples it consumed. The iteration's
/// last chunk also carries the optimizer update.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainChunk {
    pub iteration: usize,
    pub start_ms: f64,
    pub end_ms: f64,
    pub ids: Vec<u64>,
    pub tokens: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub gen_start: f64,
    pub gen_end: f64,
    pub train_end: f64,
    /// Time the iteration's update has been computed and transferred.
    pub completion: f64,
    pub gen_time: f64,
    /// Summed duration of the iteration's training steps.
    pub train_time: f64,
    pub idle_gen: f64,
    pub idle_train: f64,
    pub weight_version_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub mode: PipelineMode,
    pub warmup: usize,
    pub events: Vec<TraceEvent>,
    pub per_iteration: Vec<IterationRecord>,
    pub chunks: Vec<TrainChunk>,
    /// Sample ids generated per iteration, in finish order.
    pub generated: Vec<Vec<u64>>,
}

impl SimTrace {
    pub fn iterations(&self) -> usize {
        self.per_iteration.len()
    }

    /// `t_ms,actor,kind,iteration`
    pub fn events_csv(&self) -> String {
        let mut out = String::from("t_ms,actor,kind,iteration\n");
        for e in &self.events {
            let _ = writeln!(
                out,
                "{:.3},{},{},{}",
                e.t_ms,
                e.actor.as_str(),
                e.kind.as_str(),
                e.iteration
            );
        }
        out
    }

    pub fn iterations_csv(&self) -> String {
        let mut out = String::from(
            "iteration,gen_start,gen_end,train_end,completion,gen_time,train_time,idle_gen,idle_train,weight_version\n",
        );
        for r in &self.per_iteration {
            let _ = writeln!(
                out,
                "{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{}",
                r.iteration,
                r.gen_start,
                r.gen_end,
                r.train_end,
                r.completion,
                r.gen_time,
                r.train_time,
                r.idle_gen,
                r.idle_train,
                r.weight_version_used
            );
        }
        out
    }

    /// Every generated sample is trained exactly once, in its own iteration.
    pub fn conserves_samples(&self) -> bool {
        let mut want: BTreeMap<(usize, u64), u32> = BTreeMap::new();
        for (i, ids) in self.generated.iter().enumerate() {
            for &id in ids {
                *want.entry((i, id)).or_default() += 1;
            }
        }
        let mut got: BTreeMap<(usize, u64), u32> = BTreeMap::new();
        for c in &self.chunks {
            for &id in &c.ids {
                *got.entry((c.iteration, id)).or_default() += 1;
            }
        }
        want.values().all(|&n| n == 1) && want == got
    }

    /// Applied weight versions strictly increase over time.
    pub fn versions_monotone(&self) -> bool {
        let applied: Vec<(f64, u64)> = self
            .events
            .iter()
            .filter(|e| e.kind == EventKind::WeightApply)
            .map(|e| (e.t_ms, e.payload))
            .collect();
        applied.windows(2).all(|p| p[0].0 <= p[1].0 && p[0].1 < p[1].1)
    }

    /// Events are time-ordered and every start has a matching finish.
    pub fn well_formed(&self) -> bool {
        let sorted = self.events.windows(2).all(|p| p[0].t_ms <= p[1].t_ms);
        let mut open: BTreeMap<(Actor, usize), i64> = BTreeMap::new();
        for e in &self.events {
            match e.kind {
                EventKind::Start => *open.entry((e.actor, e.iteration)).or_default() += 1,
                EventKind::Finish => {
                    let n = open.entry((e.actor, e.iteration)).or_default();
                    *n -= 1;
                    if *n < 0 {
                        return false;
                    }
                }
                _ => {}
            }
        }
        sorted && open.values().all(|&n| n == 0)
    }
}

/// Mean completion interval after the first `warmup` iterations.
pub fn steady_state_iteration_time(trace: &SimTrace, warmup: usize) -> Result<f64> {
    let n = trace.per_iteration.len();
    if n <= warmup {
        return Err(param(format!(
            "trace has {n} iterations, need more than warmup={warmup}"
        )));
    }
    let end = trace.per_iteration[n - 1].completion;
    let start = if warmup == 0 {
        0.0
    } else {
        trace.per_iteration[warmup - 1].completion
    };
    Ok((end - start) / (n - warmup) as f64)
}

/// Largest gap between an iteration and the newest weight version applied
/// when its generation started, derived from the raw events.
pub fn verify_staleness(trace: &SimTrace) -> usize {
    let mut applied: Vec<(f64, u64)> = trace
        .events
        .iter()
        .filter(|e| e.kind == EventKind::WeightApply)
        .map(|e| (e.t_ms, e.payload))
        .collect();
    applied.sort_by(|a, b| a.0.total_cmp(&b.0));
    trace
        .events
        .iter()
        .filter(|e| e.actor == Actor::Gen && e.kind == EventKind::Start)
        .map(|e| {
            let version = applied
                .iter()
                .take_while(|(t, _)| *t <= e.t_ms)
                .map(|&(_, v)| v)
                .max()
                .unwrap_or(0) as usize;
            e.iteration.saturating_sub(version)
        })
        .max()
        .unwrap_or(0)
}

/// Busy and idle time of one stage over a window.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageClock {
    pub busy: f64,
    pub idle: f64,
}

impl StageClock {
    /// Accounts `intervals` inside `[from, to]`.
    pub fn over(intervals: &[(f64, f64)], from: f64, to: f64) -> Self {
        let busy: f64 = intervals.iter().map(|&(s, e)| (e.min(to) - s.max(from)).max(0.0)).sum();
        let span = (to - from).max(0.0);
        Self {
            busy,
            idle: (span - busy).max(0.0),
        }
    }

    pub fn busy_fraction(&self) -> f64 {
        let total = self.busy + self.idle;
        if total > 0.0 {
            self.busy / total
        } else {
            0.0
        }
    }
}

fn gen_intervals(trace: &SimTrace) -> Vec<(f64, f64)> {
    trace.per_iteration.iter().map(|r| (r.gen_start, r.gen_end)).collect()
}

fn train_intervals(trace: &SimTrace) -> Vec<(f64, f64)> {
    trace.chunks.iter().map(|c| (c.start_ms, c.end_ms)).collect()
}

/// Busy fractions of generation and training over the post-warmup window.
/// A colocated run reports its single shared pool for both.
pub fn utilization(trace: &SimTrace) -> Result<(f64, f64)> {
    let n = trace.per_iteration.len();
    if n == 0 {
        return Err(param("utilization of an empty trace"));
    }
    let warmup = trace.warmup.min(n - 1);
    let from = if warmup == 0 {
        0.0
    } else {
        trace.per_iteration[warmup - 1].completion
    };
    let to = trace.per_iteration[n - 1].completion;
    let gen = gen_intervals(trace);
    let train = train_intervals(trace);
    if trace.mode == PipelineMode::Colocated {
        let mut all = gen;
        all.extend(train);
        let f = StageClock::over(&all, from, to).busy_fraction();
        return Ok((f, f));
    }
    Ok((
        StageClock::over(&gen, from, to).busy_fraction(),
        StageClock::over(&train, from, to).busy_fraction(),
    ))
}
