//! Continuous-batching simulation of one generation instance.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fmt::Write as _;

use crate::cost_model::PtlProfile;
use crate::workload::SampleSpec;

/// Admission order for waiting samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderPolicy {
    /// Longest predicted output first.
    Lpt,
    /// Order as given.
    Fifo,
}

/// A sample leaving the batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Completion {
    pub id: u64,
    pub finish_ms: f64,
    pub tokens: u32,
}

/// Generation timeline of one instance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GenerationTimeline {
    pub makespan: f64,
    pub per_sample_finish: BTreeMap<u64, f64>,
    /// `(t_ms, active)` at every change of batch occupancy.
    pub occupancy: Vec<(f64, u32)>,
    /// Completions in finish order (ties by admission order).
    pub completions: Vec<Completion>,
    pub tokens_generated: u64,
}

impl GenerationTimeline {
    /// `sample_id,finish_ms`
    pub fn finish_csv(&self) -> String {
        let mut out = String::from("sample_id,finish_ms\n");
        for (id, t) in &self.per_sample_finish {
            let _ = writeln!(out, "{id},{t:.3}");
        }
        out
    }

    /// `t_ms,active`
    pub fn occupancy_csv(&self) -> String {
        let mut out = String::from("t_ms,active\n");
        for (t, a) in &self.occupancy {
            let _ = writeln!(out, "{t:.3},{a}");
        }
        out
    }

    pub fn peak_occupancy(&self) -> u32 {
        self.occupancy.iter().map(|&(_, a)| a).max().unwrap_or(0)
    }
}

/// Simulates continuous batching with no prefill cost.
pub fn simulate_instance(
    assigned: &[SampleSpec],
    profile: &PtlProfile,
    max_bs: u32,
    order: OrderPolicy,
) -> GenerationTimeline {
    simulate_instance_with_prefill(assigned, profile, max_bs, order, 0.0)
}

/// Event-driven continuous batching: every decode step advances each active
/// sample by one token at cost `ptl(active)`; finished samples leave and
/// waiting ones are admitted immediately. Admitting a sample stalls the batch
/// for `prefill_ms_per_prompt_token * prompt_len`.
pub fn simulate_instance_with_prefill(
    assigned: &[SampleSpec],
    profile: &PtlProfile,
    max_bs: u32,
    order: OrderPolicy,
    prefill_ms_per_prompt_token: f64,
) -> GenerationTimeline {
    let max_bs = max_bs.max(1) as usize;
    let mut waiting: Vec<&SampleSpec> = assigned.iter().collect();
    if order == OrderPolicy::Lpt {
        waiting.sort_by_key(|s| (Reverse(s.planning_len()), s.id));
    }
    let mut waiting: VecDeque<&SampleSpec> = waiting.into();

    let mut tl = GenerationTimeline::default();
    // (finish step, admission seq) -> index into `admitted`
    let mut active: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
    let mut admitted: Vec<&SampleSpec> = Vec::with_capacity(assigned.len());

    // Time is accumulated per segment of constant batch size so that long
    // stretches at one size are priced as `steps * ptl(b)` in one product.
    let mut step: u64 = 0;
    let mut seg_start: u64 = 0;
    let mut seg_cost = 0.0;
    let mut seg_b = 0usize;
    let mut time_before = 0.0;

    time_before += admit(
        &mut active,
        &mut admitted,
        &mut waiting,
        step,
        max_bs,
        prefill_ms_per_prompt_token,
    );

    while let Some(&Reverse((next, _))) = active.peek() {
        let b = active.len();
        if b != seg_b {
            time_before += (step - seg_start) as f64 * seg_cost;
            seg_start = step;
            seg_b = b;
            seg_cost = profile.at(b as u32);
            tl.occupancy.push((time_before, b as u32));
        }
        step = next;
        let now = time_before + (step - seg_start) as f64 * seg_cost;
        while let Some(&Reverse((f, idx))) = active.peek() {
            if f != step {
                break;
            }
            active.pop();
            let s = admitted[idx];
            tl.per_sample_finish.insert(s.id, now);
            tl.completions.push(Completion {
                id: s.id,
                finish_ms: now,
                tokens: s.true_out_len,
            });
            tl.tokens_generated += u64::from(s.true_out_len);
            tl.makespan = now;
        }
        if !waiting.is_empty() {
            let prefill = admit(
                &mut active,
                &mut admitted,
                &mut waiting,
                step,
                max_bs,
                prefill_ms_per_prompt_token,
            );
            if prefill > 0.0 {
                time_before = now + prefill;
                seg_start = step;
            }
        }
        if active.is_empty() {
            tl.occupancy.push((now, 0));
        }
    }
    tl
}

/// Fills free slots from the front of `waiting`; returns the prefill stall.
fn admit<'a>(
    active: &mut BinaryHeap<Reverse<(u64, usize)>>,
    admitted: &mut Vec<&'a SampleSpec>,
    waiting: &mut VecDeque<&'a SampleSpec>,
    step: u64,
    max_bs: usize,
    prefill_ms_per_prompt_token: f64,
) -> f64 {
    let mut prefill = 0.0;
    while active.len() < max_bs {
        let Some(s) = waiting.pop_front() else { break };
        active.push(Reverse((step + u64::from(s.true_out_len), admitted.len())));
        prefill += prefill_ms_per_prompt_token * f64::from(s.prompt_len);
        admitted.push(s);
    }
    prefill
}
