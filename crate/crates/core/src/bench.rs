//! Wall-clock timing of the exact and the reduced-basis lead-field paths.

use std::time::Instant;

use serde::Serialize;

use crate::basis::SupportBasis;
use crate::error::{Error, Result};
use crate::model::{ConductivityPoint, ParametrizedSystem};
use crate::numerics::forward::exact_leadfield;

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub n_unknowns: usize,
    pub n_supports: usize,
    pub repetitions: usize,
    /// Median seconds per lead field, one entry per repetition.
    pub exact_seconds: Vec<f64>,
    pub online_seconds: Vec<f64>,
    pub exact_median: f64,
    pub online_median: f64,
    pub speedup: f64,
}

/// Seconds per call of `f` over `points`, after one untimed warm-up pass.
pub fn time_per_point<F>(points: &[ConductivityPoint], repetitions: usize, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&ConductivityPoint) -> Result<()>,
{
    for p in points {
        f(p)?;
    }
    let mut out = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        for p in points {
            f(p)?;
        }
        out.push(start.elapsed().as_secs_f64() / points.len() as f64);
    }
    Ok(out)
}

/// Online timing uses every point; exact timing uses the first `exact_points`.
pub fn bench(
    sys: &ParametrizedSystem,
    basis: &SupportBasis,
    points: &[ConductivityPoint],
    exact_points: usize,
    repetitions: usize,
) -> Result<BenchReport> {
    if points.is_empty() || exact_points == 0 {
        return Err(Error::config("bench needs at least one query point"));
    }
    if repetitions < 5 {
        return Err(Error::config("bench needs at least 5 repetitions"));
    }
    let exact_set = &points[..exact_points.min(points.len())];
    let exact_seconds = time_per_point(exact_set, repetitions, |p| exact_leadfield(sys, p).map(|_| ()))?;
    let online_seconds = time_per_point(points, repetitions, |p| {
        std::hint::black_box(basis.approximate(p)?);
        Ok(())
    })?;
    let exact_median = median(&exact_seconds);
    let online_median = median(&online_seconds);
    Ok(BenchReport {
        n_unknowns: sys.n_unknowns(),
        n_supports: basis.len(),
        repetitions,
        exact_seconds,
        online_seconds,
        exact_median,
        online_median,
        speedup: exact_median / online_median,
    })
}

#[cfg(test)]
mod tests {
    use super::median;

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
