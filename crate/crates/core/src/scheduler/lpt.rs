use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{param, Result, SimError};

/// Largest job count accepted by [`makespan_bruteforce`].
pub const BRUTEFORCE_MAX_JOBS: usize = 16;

/// Result of greedy longest-processing-time-first assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LptSchedule {
    /// Job indices per slot, in assignment order.
    pub assignment: Vec<Vec<usize>>,
    pub makespan: u64,
}

/// Sorts jobs by length (descending, stable) and gives each to the currently
/// least-loaded slot, lowest slot index on ties.
pub fn lpt_order(lengths: &[u64], slots: usize) -> Result<LptSchedule> {
    if slots == 0 {
        return Err(param("lpt needs at least one slot"));
    }
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by_key(|&i| Reverse(lengths[i]));

    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = (0..slots).map(|s| Reverse((0, s))).collect();
    let mut assignment = vec![Vec::new(); slots];
    for i in order {
        let Reverse((load, slot)) = heap.pop().expect("slots > 0");
        assignment[slot].push(i);
        heap.push(Reverse((load + lengths[i], slot)));
    }
    let makespan = heap.into_iter().map(|Reverse((l, _))| l).max().unwrap_or(0);
    Ok(LptSchedule { assignment, makespan })
}

/// Optimal `P || C_max` makespan by exhaustive search over assignments.
///
/// Branches that cannot beat the incumbent are pruned and slots with equal
/// load are treated as interchangeable; neither changes the optimum.
pub fn makespan_bruteforce(lengths: &[u64], slots: usize) -> Result<u64> {
    if slots == 0 {
        return Err(param("need at least one slot"));
    }
    if lengths.len() > BRUTEFORCE_MAX_JOBS {
        return Err(SimError::Size(format!(
            "{} jobs exceeds the exhaustive limit of {BRUTEFORCE_MAX_JOBS}",
            lengths.len()
        )));
    }
    let mut jobs = lengths.to_vec();
    jobs.sort_unstable_by(|a, b| b.cmp(a));
    let mut loads = vec![0u64; slots];
    let mut best = jobs.iter().sum::<u64>();
    search(&jobs, 0, &mut loads, 0, &mut best);
    Ok(best)
}

fn search(jobs: &[u64], next: usize, loads: &mut [u64], current: u64, best: &mut u64) {
    if next == jobs.len() {
        *best = (*best).min(current);
        return;
    }
    let job = jobs[next];
    for s in 0..loads.len() {
        if loads[..s].contains(&loads[s]) {
            continue;
        }
        let load = loads[s] + job;
        // the all-on-one-slot assignment already achieves the initial `best`
        if load >= *best {
            continue;
        }
        loads[s] = load;
        search(jobs, next + 1, loads, current.max(load), best);
        loads[s] -= job;
    }
}
