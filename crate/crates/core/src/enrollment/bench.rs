use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use super::{EnrollError, Pipeline};

/// Published enrollment times, echoed as context in every report.
pub const ENCODER_REFERENCE: &str = "11 sec.";
pub const ENCODER_REFERENCE_SECS: f64 = 11.0;
pub const ADAPTATION_REFERENCE: &str = "15 min.";
pub const ADAPTATION_REFERENCE_SECS: f64 = 900.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub samples: usize,
    pub repetitions: usize,
    pub min_secs: f64,
    pub median_secs: f64,
    pub max_secs: f64,
    pub encoder_reference: &'static str,
    pub encoder_reference_secs: f64,
    /// Fine-tuning based enrollment; not implemented here.
    pub adaptation_reference: &'static str,
    pub adaptation_reference_secs: f64,
}

/// Times the full enrollment pipeline (load, enhance, encode) without
/// touching the store.
pub fn bench_enroll<P: AsRef<Path> + Sync>(
    paths: &[P],
    pipeline: &Pipeline<'_>,
    repetitions: usize,
) -> Result<BenchReport, EnrollError> {
    bench_enroll_with(paths, pipeline, repetitions, |_| {})
}

/// [`bench_enroll`], reporting each repetition's time.
pub fn bench_enroll_with<P: AsRef<Path> + Sync>(
    paths: &[P],
    pipeline: &Pipeline<'_>,
    repetitions: usize,
    mut on_rep: impl FnMut(f64),
) -> Result<BenchReport, EnrollError> {
    if repetitions < 3 {
        return Err(EnrollError::TooFewRepetitions(repetitions));
    }
    let mut times = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        pipeline.embed(paths)?;
        let t = start.elapsed().as_secs_f64();
        on_rep(t);
        times.push(t);
    }
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    let median = if times.len() % 2 == 1 {
        times[mid]
    } else {
        0.5 * (times[mid - 1] + times[mid])
    };
    Ok(BenchReport {
        samples: paths.len(),
        repetitions,
        min_secs: times[0],
        median_secs: median,
        max_secs: times[times.len() - 1],
        encoder_reference: ENCODER_REFERENCE,
        encoder_reference_secs: ENCODER_REFERENCE_SECS,
        adaptation_reference: ADAPTATION_REFERENCE,
        adaptation_reference_secs: ADAPTATION_REFERENCE_SECS,
    })
}
