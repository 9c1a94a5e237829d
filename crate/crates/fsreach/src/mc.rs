//! Multi-threaded Monte-Carlo collision estimates.
//!
//! Work is split into the same fixed-size chunks as the sequential version
//! in `fsreach_core::sim`; each chunk owns its random stream, so the counts
//! do not depend on the number of workers.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use fsreach_core::sim::{chunk_count, chunk_hits, CollisionEstimate, CollisionQuery, Scenario};

/// Worker count: `FSREACH_THREADS` if set, otherwise the available
/// parallelism.
pub fn worker_count() -> usize {
    std::env::var("FSREACH_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn monte_carlo(
    scenario: &Scenario,
    queries: &[CollisionQuery],
    samples: u64,
    seed: u64,
    workers: usize,
) -> fsreach_core::Result<Vec<CollisionEstimate>> {
    let lattice = scenario.lattice()?;
    let chunks = chunk_count(samples) as usize;
    let tasks = queries.len() * chunks;
    let hits = Mutex::new(vec![0u64; tasks]);
    let failure = Mutex::new(None);
    let next = AtomicUsize::new(0);
    thread::scope(|s| {
        for _ in 0..workers.clamp(1, tasks.max(1)) {
            s.spawn(|| loop {
                let task = next.fetch_add(1, Ordering::Relaxed);
                if task >= tasks {
                    break;
                }
                let (qi, c) = (task / chunks, task % chunks);
                match chunk_hits(scenario, &lattice, &queries[qi], qi, c as u64, samples, seed) {
                    Ok(h) => hits.lock().unwrap()[task] = h,
                    Err(e) => {
                        failure.lock().unwrap().get_or_insert(e);
                        break;
                    }
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let hits = hits.into_inner().unwrap();
    Ok((0..queries.len())
        .map(|qi| CollisionEstimate { hits: hits[qi * chunks..(qi + 1) * chunks].iter().sum(), samples })
        .collect())
}
