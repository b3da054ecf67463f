use super::{
    Actor, EventKind, IterationInput, IterationRecord, PipelineMode, PipelineParams, SimTrace, StageClock, TraceEvent,
    TrainChunk, TrainStage,
};
use crate::error::{param, Result};

/// How finished samples are grouped into training steps.
#[derive(Debug, Clone, Copy)]
enum Chunking {
    Whole,
    Fixed(usize),
    Threshold(u64),
}

struct Recorder {
    events: Vec<TraceEvent>,
    chunks: Vec<TrainChunk>,
}

impl Recorder {
    fn event(&mut self, t_ms: f64, actor: Actor, kind: EventKind, iteration: usize, payload: u64) {
        self.events.push(TraceEvent {
            t_ms,
            actor,
            kind,
            iteration,
            payload,
        });
    }

    fn generation(&mut self, iteration: usize, start: f64, end: f64, version: usize) {
        self.event(start, Actor::Gen, EventKind::Start, iteration, version as u64);
        self.event(end, Actor::Gen, EventKind::Finish, iteration, version as u64);
    }

    fn weights(&mut self, actor: Actor, iteration: usize, send: f64, apply: f64) {
        let version = iteration as u64 + 1;
        if actor == Actor::Link {
            self.event(send, Actor::Link, EventKind::WeightSend, iteration, version);
        }
        self.event(apply, actor, EventKind::WeightApply, iteration, version);
    }

    /// Schedules the training micro-batches of one iteration on a trainer
    /// that is free from `free`; returns when the optimizer update ends.
    fn train(
        &mut self,
        iteration: usize,
        gen_start: f64,
        input: &IterationInput,
        mut free: f64,
        chunking: Chunking,
        stage: &TrainStage,
    ) -> f64 {
        let c = &input.completions;
        let n = c.len();
        let mut next = 0;
        while next < n {
            let ready_idx = match chunking {
                Chunking::Whole => n - 1,
                Chunking::Fixed(size) => (next + size - 1).min(n - 1),
                Chunking::Threshold(min_tokens) => {
                    let mut acc = 0u64;
                    let mut e = next;
                    loop {
                        acc += u64::from(c[e].tokens);
                        if acc >= min_tokens || e == n - 1 {
                            break e;
                        }
                        e += 1;
                    }
                }
            };
            let start = free.max(gen_start + c[ready_idx].finish_ms);
            let mut end_idx = ready_idx;
            if let Chunking::Threshold(_) = chunking {
                // take everything already buffered
                while end_idx + 1 < n && gen_start + c[end_idx + 1].finish_ms <= start {
                    end_idx += 1;
                }
            }
            let taken = &c[next..=end_idx];
            let tokens: u64 = taken.iter().map(|s| u64::from(s.tokens)).sum();
            let last = end_idx + 1 == n;
            let end = start + stage.token_ms(tokens) + if last { stage.update_ms() } else { 0.0 };
            self.event(start, Actor::Train, EventKind::Start, iteration, taken.len() as u64);
            self.event(end, Actor::Train, EventKind::Finish, iteration, taken.len() as u64);
            self.chunks.push(TrainChunk {
                iteration,
                start_ms: start,
                end_ms: end,
                ids: taken.iter().map(|s| s.id).collect(),
                tokens,
            });
            free = end;
            next = end_idx + 1;
        }
        free
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Timing {
    gen_start: f64,
    gen_end: f64,
    train_end: f64,
    completion: f64,
    version: usize,
}

/// Replays `inputs.len()` iterations under `params.mode`.
///
/// Generation inputs and the training stage must already reflect the mode's
/// GPU pools: a colocated run passes timelines and a trainer sized to the
/// whole cluster.
pub fn run_iterations(params: &PipelineParams, inputs: &[IterationInput], train: &TrainStage) -> Result<SimTrace> {
    params.validate()?;
    if inputs.is_empty() {
        return Err(param("need at least one iteration"));
    }
    for inp in inputs {
        inp.validate()?;
    }
    let n = inputs.len();
    let w = params.weight_ms;
    let mut rec = Recorder {
        events: Vec::new(),
        chunks: Vec::new(),
    };
    let mut tm = vec![Timing::default(); n];

    match params.mode {
        PipelineMode::Colocated => {
            let s = params.switch_ms;
            let mut t = 0.0;
            for (i, inp) in inputs.iter().enumerate() {
                let gs = t + s;
                let ge = gs + inp.gen_ms;
                rec.generation(i, gs, ge, i);
                let te = rec.train(i, gs, inp, ge + s, Chunking::Whole, train);
                rec.weights(Actor::Train, i, te, te);
                tm[i] = Timing {
                    gen_start: gs,
                    gen_end: ge,
                    train_end: te,
                    completion: te,
                    version: i,
                };
                t = te;
            }
        }
        PipelineMode::SerialDisaggregated | PipelineMode::Minibatch { .. } | PipelineMode::DynamicStream => {
            let mut avail = 0.0;
            for (i, inp) in inputs.iter().enumerate() {
                let chunking = match params.mode {
                    PipelineMode::Minibatch { count } => Chunking::Fixed(inp.completions.len().div_ceil(count)),
                    PipelineMode::DynamicStream => Chunking::Threshold(params.min_train_tokens),
                    _ => Chunking::Whole,
                };
                let gs = avail;
                let ge = gs + inp.gen_ms;
                rec.generation(i, gs, ge, i);
                let te = rec.train(i, gs, inp, gs, chunking, train);
                rec.weights(Actor::Link, i, te, te + w);
                tm[i] = Timing {
                    gen_start: gs,
                    gen_end: ge,
                    train_end: te,
                    completion: te + w,
                    version: i,
                };
                avail = te + w;
            }
        }
        PipelineMode::OneStepAsync => {
            // Round r runs generation r next to training r - 1 and ends with
            // a weight-sync barrier.
            let ge0 = inputs[0].gen_ms;
            rec.generation(0, 0.0, ge0, 0);
            tm[0].gen_end = ge0;
            let mut round_start = ge0;
            for r in 1..=n {
                let mut end = round_start;
                if r < n {
                    let ge = round_start + inputs[r].gen_ms;
                    rec.generation(r, round_start, ge, r - 1);
                    tm[r].gen_start = round_start;
                    tm[r].gen_end = ge;
                    tm[r].version = r - 1;
                    end = end.max(ge);
                }
                let te = rec.train(
                    r - 1,
                    tm[r - 1].gen_start,
                    &inputs[r - 1],
                    round_start,
                    Chunking::Whole,
                    train,
                );
                end = end.max(te);
                rec.weights(Actor::Link, r - 1, end, end + w);
                tm[r - 1].train_end = te;
                // the barrier itself is in the trace; completion is the shipped
                // update, so the drain round after the last generation is not
                // shorter than the others
                tm[r - 1].completion = te + w;
                round_start = end + w;
            }
        }
        PipelineMode::FullyAsync => {
            let chunking = Chunking::Threshold(params.min_train_tokens);
            let mut applied = vec![0.0; n];
            let mut ge_prev = 0.0;
            let mut te_prev = 0.0;
            for (j, inp) in inputs.iter().enumerate() {
                let avail = if j >= 2 { applied[j - 2] } else { 0.0 };
                let gs = f64::max(ge_prev, avail);
                let ge = gs + inp.gen_ms;
                let version = j.saturating_sub(1);
                rec.generation(j, gs, ge, version);
                let te = rec.train(j, gs, inp, f64::max(te_prev, gs), chunking, train);
                rec.weights(Actor::Link, j, te, te + w);
                applied[j] = te + w;
                tm[j] = Timing {
                    gen_start: gs,
                    gen_end: ge,
                    train_end: te,
                    completion: te,
                    version,
                };
                ge_prev = ge;
                te_prev = te;
            }
        }
    }

    rec.events.sort_by(|a, b| {
        a.t_ms
            .total_cmp(&b.t_ms)
            .then(a.actor.cmp(&b.actor))
            .then(a.kind.cmp(&b.kind))
            .then(a.iteration.cmp(&b.iteration))
    });

    let gen_iv: Vec<(f64, f64)> = tm.iter().map(|t| (t.gen_start, t.gen_end)).collect();
    let train_iv: Vec<(f64, f64)> = rec.chunks.iter().map(|c| (c.start_ms, c.end_ms)).collect();
    let mut per_iteration = Vec::with_capacity(n);
    let mut prev = 0.0;
    for (i, t) in tm.iter().enumerate() {
        let g = StageClock::over(&gen_iv, prev, t.completion);
        let tr = StageClock::over(&train_iv, prev, t.completion);
        let train_time = rec
            .chunks
            .iter()
            .filter(|c| c.iteration == i)
            .map(|c| c.end_ms - c.start_ms)
            .sum();
        per_iteration.push(IterationRecord {
            iteration: i,
            gen_start: t.gen_start,
            gen_end: t.gen_end,
            train_end: t.train_end,
            completion: t.completion,
            gen_time: inputs[i].gen_ms,
            train_time,
            idle_gen: g.idle,
            idle_train: tr.idle,
            weight_version_used: t.version,
        });
        prev = t.completion;
    }

    Ok(SimTrace {
        mode: params.mode,
        warmup: params.warmup,
        events: rec.events,
        per_iteration,
        chunks: rec.chunks,
        generated: inputs
            .iter()
            .map(|inp| inp.completions.iter().map(|c| c.id).collect())
            .collect(),
    })
}
