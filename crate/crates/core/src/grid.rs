//! Finite samplings of a rectangular conductivity domain.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ConductivityPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Linear,
    Log,
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplingMode::Linear => f.write_str("linear"),
            SamplingMode::Log => f.write_str("log"),
        }
    }
}

/// One dimension of the domain of interest: `count` samples over `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    #[serde(default = "default_mode")]
    pub mode: SamplingMode,
}

fn default_mode() -> SamplingMode {
    SamplingMode::Linear
}

impl GridAxis {
    pub fn linear(lo: f64, hi: f64, count: usize) -> Self {
        GridAxis { lo, hi, count, mode: SamplingMode::Linear }
    }

    pub fn log(lo: f64, hi: f64, count: usize) -> Self {
        GridAxis { lo, hi, count, mode: SamplingMode::Log }
    }

    /// A dimension held at a single value.
    pub fn fixed(value: f64) -> Self {
        GridAxis { lo: value, hi: value, count: 1, mode: SamplingMode::Linear }
    }

    pub fn is_fixed(&self) -> bool {
        self.count == 1
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let bad = |msg: &str| Err(Error::config(format!("grid axis {dim}: {msg}")));
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo > 0.0) {
            return bad("bounds must be finite and strictly positive");
        }
        if self.count == 0 {
            return bad("count must be at least 1");
        }
        if self.count == 1 && self.lo != self.hi {
            return bad("a single-sample axis needs lo == hi");
        }
        if self.count > 1 && self.lo >= self.hi {
            return bad("lo must be smaller than hi");
        }
        Ok(())
    }

    /// Sample values, endpoints reproduced exactly.
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.lo];
        }
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|k| {
                if k == 0 {
                    self.lo
                } else if k == self.count - 1 {
                    self.hi
                } else {
                    let t = k as f64 / last;
                    match self.mode {
                        SamplingMode::Linear => self.lo + (self.hi - self.lo) * t,
                        SamplingMode::Log => {
                            (self.lo.ln() + (self.hi.ln() - self.lo.ln()) * t).exp()
                        }
                    }
                }
            })
            .collect()
    }

    /// Midpoint in the axis' own sampling metric.
    pub fn center(&self) -> f64 {
        match self.mode {
            SamplingMode::Linear => 0.5 * (self.lo + self.hi),
            SamplingMode::Log => (self.lo * self.hi).sqrt(),
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        let slack = 1e-12 * self.hi.abs();
        v >= self.lo - slack && v <= self.hi + slack
    }
}

impl fmt::Display for GridAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}:{}", self.lo, self.hi, self.count, self.mode)
    }
}

impl std::str::FromStr for GridAxis {
    type Err = Error;

    /// Parses `lo:hi:count[:linear|log]`, or a single value for a fixed axis.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| -> Result<f64> {
            p.trim()
                .parse()
                .map_err(|_| Error::config(format!("bad number '{p}' in axis '{s}'")))
        };
        match parts.as_slice() {
            [v] => Ok(GridAxis::fixed(num(v)?)),
            [lo, hi, count] | [lo, hi, count, _] => {
                let count = count
                    .trim()
                    .parse()
                    .map_err(|_| Error::config(format!("bad count in axis '{s}'")))?;
                let mode = match parts.get(3).map(|m| m.trim()) {
                    None | Some("linear") => SamplingMode::Linear,
                    Some("log") => SamplingMode::Log,
                    Some(other) => {
                        return Err(Error::config(format!("unknown sampling mode '{other}'")))
                    }
                };
                Ok(GridAxis { lo: num(lo)?, hi: num(hi)?, count, mode })
            }
            _ => Err(Error::config(format!(
                "axis '{s}' must look like lo:hi:count[:linear|log] or a single value"
            ))),
        }
    }
}

/// Row-major sampling of a rectangular conductivity domain; the first axis
/// varies slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductivityGrid {
    axes: Vec<GridAxis>,
    axis_values: Vec<Vec<f64>>,
    samples: Vec<ConductivityPoint>,
}

impl ConductivityGrid {
    pub fn new(axes: Vec<GridAxis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::config("grid needs at least one axis"));
        }
        for (d, a) in axes.iter().enumerate() {
            a.validate(d)?;
        }
        let axis_values: Vec<Vec<f64>> = axes.iter().map(GridAxis::values).collect();
        let total: usize = axes.iter().map(|a| a.count).product();
        let mut samples = Vec::with_capacity(total);
        let mut idx = vec![0usize; axes.len()];
        for _ in 0..total {
            let values = idx.iter().zip(&axis_values).map(|(&i, v)| v[i]).collect();
            samples.push(ConductivityPoint::new(values)?);
            for d in (0..axes.len()).rev() {
                idx[d] += 1;
                if idx[d] < axes[d].count {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok(ConductivityGrid { axes, axis_values, samples })
    }

    pub fn axes(&self) -> &[GridAxis] {
        &self.axes
    }

    pub fn axis_values(&self, dim: usize) -> &[f64] {
        &self.axis_values[dim]
    }

    pub fn samples(&self) -> &[ConductivityPoint] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn bounds(&self) -> Vec<[f64; 2]> {
        self.axes.iter().map(|a| [a.lo, a.hi]).collect()
    }

    /// Flat index of a per-axis multi-index.
    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, a)| acc * a.count + i)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.axes.len()];
        for d in (0..self.axes.len()).rev() {
            out[d] = flat % self.axes[d].count;
            flat /= self.axes[d].count;
        }
        out
    }

    /// Indices of the domain corners (2^k for k non-fixed axes), ascending.
    pub fn corner_indices(&self) -> Vec<usize> {
        let choices: Vec<Vec<usize>> = self
            .axes
            .iter()
            .map(|a| if a.count == 1 { vec![0] } else { vec![0, a.count - 1] })
            .collect();
        let mut out = vec![Vec::new()];
        for c in &choices {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    c.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        let mut flat: Vec<usize> = out.iter().map(|m| self.flat_index(m)).collect();
        flat.sort_unstable();
        flat.dedup();
        flat
    }

    /// Index of the middle sample (per-axis middle index, rounding down).
    pub fn center_index(&self) -> usize {
        let multi: Vec<usize> = self.axes.iter().map(|a| (a.count - 1) / 2).collect();
        self.flat_index(&multi)
    }

    /// Geometric center of the domain (linear or log midpoint per axis).
    pub fn domain_center(&self) -> ConductivityPoint {
        ConductivityPoint::new(self.axes.iter().map(GridAxis::center).collect())
            .expect("axis centers are positive")
    }

    pub fn contains(&self, sigma: &ConductivityPoint) -> bool {
        sigma.len() == self.axes.len()
            && self.axes.iter().zip(sigma.values()).all(|(a, &v)| a.contains(v))
    }

    pub fn position(&self, sigma: &ConductivityPoint) -> Option<usize> {
        self.samples.iter().position(|s| s == sigma)
    }

    /// Stable textual identifier, e.g. `0.5:2:15:linear x 0.0001:0.1:15:log`.
    pub fn id(&self) -> String {
        self.axes.iter().map(ToString::to_string).collect::<Vec<_>>().join(" x ")
    }
}
