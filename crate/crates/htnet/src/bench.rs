//! Wall-clock comparison of the naive, fast and hybrid transforms.

use std::hint::black_box;
use std::time::Instant;

use htnet_core::hadamard::{fht1d, naive_ht, Convention};
use htnet_core::quantum::{hybrid_ht, Epsilon, MeasurementPlan};
use rand::Rng;
use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub naive_ns: f64,
    pub fast_ns: f64,
    pub hybrid_exact_ns: f64,
}

fn median(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(f64::total_cmp);
    let mid = samples.len() / 2;
    if samples.len() % 2 == 1 {
        samples[mid]
    } else {
        0.5 * (samples[mid - 1] + samples[mid])
    }
}

/// Median nanoseconds per call over `reps` timed batches of `inner` calls.
fn time_op(reps: usize, inner: usize, mut op: impl FnMut() -> Result<()>) -> Result<f64> {
    op()?;
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        for _ in 0..inner {
            op()?;
        }
        samples.push(start.elapsed().as_nanos() as f64 / inner as f64);
    }
    Ok(median(samples))
}

pub fn run(sizes: &[usize], reps: usize, seed: u64) -> Result<Vec<BenchRow>> {
    let mut rng = htnet_core::seeded_rng(seed);
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let inner = (1 << 16) / (n * n).clamp(1, 1 << 16);
        let naive_ns = time_op(reps, inner.max(1), || {
            black_box(naive_ht(black_box(&x), Convention::Symmetric)?);
            Ok(())
        })?;
        let fast_ns = time_op(reps, inner.max(1) * 4, || {
            black_box(fht1d(black_box(&x), Convention::Symmetric)?);
            Ok(())
        })?;
        let hybrid_exact_ns = time_op(reps, inner.max(1), || {
            black_box(hybrid_ht(
                black_box(&x),
                Epsilon::default(),
                MeasurementPlan::Exact,
            )?);
            Ok(())
        })?;
        rows.push(BenchRow {
            n,
            naive_ns,
            fast_ns,
            hybrid_exact_ns,
        });
    }
    Ok(rows)
}
