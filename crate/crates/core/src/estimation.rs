//! Single-dipole data-fit maps `R(σ)` and conductivity estimates.

use std::fmt::Write as _;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::basis::SupportBasis;
use crate::error::{Error, Result};
use crate::grid::ConductivityGrid;
use crate::model::{ConductivityPoint, ParametrizedSystem};
use crate::numerics::forward::exact_leadfield;
use crate::parallel::Workers;

/// Maps whose value range is below this are reported as flat.
pub const FLAT_SPREAD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub r_value: f64,
    pub best_source: usize,
    /// One amplitude per time sample.
    pub best_amplitudes: Vec<f64>,
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// Optimal amplitude and residual `min_a ‖y − a·l‖` for one column.
fn fit_column(y: &[f64], l: &[f64]) -> (f64, f64) {
    let ll: f64 = l.iter().map(|x| x * x).sum();
    let a = if ll > 0.0 {
        y.iter().zip(l).map(|(a, b)| a * b).sum::<f64>() / ll
    } else {
        0.0
    };
    (a, norm(y.iter().zip(l).map(|(yi, li)| yi - a * li)))
}

/// `min_j Σ_t min_a ‖y(t) − a·L[:, j]‖`, ties resolved to the lowest `j`.
/// `data` holds one topography per column.
pub fn fit_multi(data: &Mat<f64>, leadfield: &Mat<f64>) -> FitResult {
    assert_eq!(data.nrows(), leadfield.nrows(), "topography length must equal N_E");
    assert!(data.ncols() >= 1, "at least one time sample is required");
    let mut best: Option<FitResult> = None;
    for j in 0..leadfield.ncols() {
        let col = leadfield.col_as_slice(j);
        let mut total = 0.0;
        let mut amps = Vec::with_capacity(data.ncols());
        for t in 0..data.ncols() {
            let (a, r) = fit_column(data.col_as_slice(t), col);
            total += r;
            amps.push(a);
        }
        if best.as_ref().is_none_or(|b| total < b.r_value) {
            best = Some(FitResult { r_value: total, best_source: j, best_amplitudes: amps });
        }
    }
    best.expect("lead field has at least one column")
}

pub fn fit_single(y: &[f64], leadfield: &Mat<f64>) -> FitResult {
    let data = Mat::from_fn(y.len(), 1, |i, _| y[i]);
    fit_multi(&data, leadfield)
}

/// Recomputes `Σ_t ‖y(t) − a(t)·L[:, j]‖` for a given fit.
pub fn residual_of(data: &Mat<f64>, leadfield: &Mat<f64>, fit: &FitResult) -> f64 {
    let col = leadfield.col_as_slice(fit.best_source);
    (0..data.ncols())
        .map(|t| {
            let a = fit.best_amplitudes[t];
            norm(data.col_as_slice(t).iter().zip(col).map(|(y, l)| y - a * l))
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    Raw,
    MinNormalized,
}

/// Where per-sample lead fields come from.
pub enum LeadfieldSource<'a> {
    Exact(&'a ParametrizedSystem),
    Approx(&'a SupportBasis),
    /// Lead fields already computed for every grid sample, in grid order.
    Precomputed(&'a [Option<Mat<f64>>]),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapSample {
    pub sigma: Vec<f64>,
    /// `None` when the lead field could not be computed.
    pub fit: Option<FitResult>,
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorMap {
    pub grid_id: String,
    pub axis_counts: Vec<usize>,
    pub samples: Vec<MapSample>,
    pub normalization: Normalization,
}

pub fn error_map(
    grid: &ConductivityGrid,
    data: &Mat<f64>,
    source: LeadfieldSource<'_>,
    workers: &Workers,
) -> ErrorMap {
    if let LeadfieldSource::Precomputed(l) = &source {
        assert_eq!(l.len(), grid.len());
    }
    let samples = workers.map(grid.samples(), |k, s: &ConductivityPoint| {
        let l: Result<Mat<f64>> = match &source {
            LeadfieldSource::Exact(sys) => exact_leadfield(sys, s),
            LeadfieldSource::Approx(b) => b.approximate(s).map(|a| a.leadfield),
            LeadfieldSource::Precomputed(l) => l[k]
                .clone()
                .ok_or_else(|| Error::numerical(Some(s.values()), "no lead field for this sample")),
        };
        match l {
            Ok(l) => {
                let fit = fit_multi(data, &l);
                MapSample { sigma: s.values().to_vec(), value: Some(fit.r_value), fit: Some(fit), error: None }
            }
            Err(e) => MapSample { sigma: s.values().to_vec(), fit: None, value: None, error: Some(e.to_string()) },
        }
    });
    ErrorMap {
        grid_id: grid.id(),
        axis_counts: grid.axes().iter().map(|a| a.count).collect(),
        samples,
        normalization: Normalization::Raw,
    }
}

impl ErrorMap {
    fn valid(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.samples.iter().enumerate().filter_map(|(i, s)| s.value.map(|v| (i, v)))
    }

    /// Lowest valid value and its first index.
    pub fn argmin(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in self.valid() {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
        best
    }

    /// Divides every value by the minimum, so the minimum becomes exactly 1.
    pub fn normalized(&self) -> Result<ErrorMap> {
        let (_, min) = self.argmin().ok_or_else(|| Error::numerical(None, "map has no valid samples"))?;
        if !(min > 0.0) {
            return Err(Error::numerical(None, "cannot normalize a map whose minimum is zero"));
        }
        let mut out = self.clone();
        for s in &mut out.samples {
            s.value = s.value.map(|v| v / min);
        }
        out.normalization = Normalization::MinNormalized;
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let dims = self.axis_counts.len();
        let mut out = String::new();
        for d in 0..dims {
            let _ = write!(out, "sigma_{d},");
        }
        out.push_str("value,best_source,valid\n");
        for s in &self.samples {
            for v in &s.sigma {
                let _ = write!(out, "{v:e},");
            }
            match (&s.value, &s.fit) {
                (Some(v), Some(f)) => {
                    let _ = writeln!(out, "{v:e},{},true", f.best_source);
                }
                _ => out.push_str(",,false\n"),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileEntry {
    /// Value of the first conductivity dimension.
    pub first: f64,
    /// Grid index of the best sample with that first coordinate.
    pub index: Option<usize>,
    pub sigma: Option<Vec<f64>>,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub index: usize,
    pub sigma: Vec<f64>,
    pub value: f64,
    pub flat: bool,
    /// `max − min` over valid samples.
    pub spread: f64,
    pub profile: Vec<ProfileEntry>,
    pub normalization: Normalization,
}

pub fn estimate_conductivity(map: &ErrorMap) -> Result<Estimate> {
    let (index, value) = map
        .argmin()
        .ok_or_else(|| Error::numerical(None, "every sample of the error map is invalid"))?;
    let max = map.valid().map(|(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
    let spread = max - value;
    let first_count = map.axis_counts.first().copied().unwrap_or(1);
    let block = map.samples.len() / first_count.max(1);
    let profile = (0..first_count)
        .map(|k| {
            let range = k * block..(k + 1) * block;
            let mut best: Option<(usize, f64)> = None;
            for i in range.clone() {
                if let Some(v) = map.samples[i].value {
                    if best.is_none_or(|(_, b)| v < b) {
                        best = Some((i, v));
                    }
                }
            }
            ProfileEntry {
                first: map.samples[range.start].sigma[0],
                index: best.map(|b| b.0),
                sigma: best.map(|b| map.samples[b.0].sigma.clone()),
                value: best.map(|b| b.1),
            }
        })
        .collect();
    Ok(Estimate {
        index,
        sigma: map.samples[index].sigma.clone(),
        value,
        flat: spread < FLAT_SPREAD,
        spread,
        profile,
        normalization: map.normalization,
    })
}
