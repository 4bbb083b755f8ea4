//! Simulated-clock dispatch scheduler comparing progressive batching against
//! a naive full-barrier schedule on the same job latencies.

use serde::{Deserialize, Serialize};

use super::LoopError;
use crate::rng::SeededRng;

/// Per-job service-time distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LatencyModel {
    Fixed {
        seconds: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Pareto tail: `scale / U^(1/shape)`; small shapes make heavy tails.
    HeavyTail {
        scale: f64,
        shape: f64,
    },
}

impl LatencyModel {
    pub fn sample(&self, rng: &mut SeededRng) -> f64 {
        match self {
            LatencyModel::Fixed { seconds } => *seconds,
            LatencyModel::Uniform { lo, hi } => lo + rng.next_f64() * (hi - lo),
            LatencyModel::HeavyTail { scale, shape } => {
                let u = (1.0 - rng.next_f64()).max(f64::MIN_POSITIVE);
                scale / u.powf(1.0 / shape)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobTiming {
    pub job: usize,
    pub start: f64,
    pub end: f64,
}

/// One schedule's outcome. Idle time is unused capacity:
/// `max_in_flight * makespan - total service time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleStats {
    pub timings: Vec<JobTiming>,
    pub makespan: f64,
    pub busy_seconds: f64,
    pub idle_seconds: f64,
    pub utilization: f64,
}

/// Progressive and barrier schedules over identical latencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchReport {
    pub progressive: ScheduleStats,
    pub barrier: ScheduleStats,
    pub latencies: Vec<f64>,
}

fn stats_from(timings: Vec<JobTiming>, capacity: usize, busy: f64) -> ScheduleStats {
    let makespan = timings.iter().map(|t| t.end).fold(0.0, f64::max);
    let idle = capacity as f64 * makespan - busy;
    ScheduleStats {
        timings,
        makespan,
        busy_seconds: busy,
        idle_seconds: idle,
        utilization: if makespan > 0.0 {
            busy / (capacity as f64 * makespan)
        } else {
            1.0
        },
    }
}

/// Progressive batching: freed capacity accumulates until at least
/// `min_fill` slots are free (or the queue is nearly drained), then every
/// free slot is refilled at once. `min_fill == 1` is work-conserving list
/// scheduling; `min_fill == max_in_flight` degenerates to the barrier
/// schedule.
fn progressive_schedule(latencies: &[f64], min_fill: usize, capacity: usize) -> Vec<JobTiming> {
    let mut free_at = vec![0.0_f64; capacity];
    let mut timings = Vec::with_capacity(latencies.len());
    let mut next = 0;
    let mut now = 0.0_f64;
    while next < latencies.len() {
        let idle: Vec<usize> = (0..capacity).filter(|&w| free_at[w] <= now).collect();
        let remaining = latencies.len() - next;
        let threshold = min_fill.min(remaining);
        if idle.len() >= threshold {
            for &w in idle.iter().take(remaining) {
                timings.push(JobTiming {
                    job: next,
                    start: now,
                    end: now + latencies[next],
                });
                free_at[w] = now + latencies[next];
                next += 1;
            }
        } else {
            // Advance the clock to the next completion.
            now = free_at
                .iter()
                .copied()
                .filter(|&t| t > now)
                .fold(f64::INFINITY, f64::min);
        }
    }
    timings
}

/// Naive full-barrier schedule: waves of `capacity` jobs, each wave waiting
/// for the slowest job of the previous wave.
fn barrier_schedule(latencies: &[f64], capacity: usize) -> Vec<JobTiming> {
    let mut timings = Vec::with_capacity(latencies.len());
    let mut wave_start = 0.0_f64;
    for wave in latencies.chunks(capacity) {
        let base = timings.len();
        let mut wave_end = wave_start;
        for (offset, &latency) in wave.iter().enumerate() {
            timings.push(JobTiming {
                job: base + offset,
                start: wave_start,
                end: wave_start + latency,
            });
            wave_end = wave_end.max(wave_start + latency);
        }
        wave_start = wave_end;
    }
    timings
}

/// Simulate both schedulers on one drawn latency vector.
pub fn progressive_dispatch(
    jobs: usize,
    min_fill: usize,
    max_in_flight: usize,
    latency_model: &LatencyModel,
    rng: &mut SeededRng,
) -> Result<DispatchReport, LoopError> {
    if !(1 <= min_fill && min_fill <= max_in_flight && max_in_flight <= jobs) {
        return Err(LoopError::InvalidBounds {
            min_fill,
            max_in_flight,
            jobs,
        });
    }
    let latencies: Vec<f64> = (0..jobs).map(|_| latency_model.sample(rng)).collect();
    let busy: f64 = latencies.iter().sum();
    let progressive = stats_from(
        progressive_schedule(&latencies, min_fill, max_in_flight),
        max_in_flight,
        busy,
    );
    let barrier = stats_from(
        barrier_schedule(&latencies, max_in_flight),
        max_in_flight,
        busy,
    );
    Ok(DispatchReport {
        progressive,
        barrier,
        latencies,
    })
}
