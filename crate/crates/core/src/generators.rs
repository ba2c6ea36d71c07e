//! Desk-scale system generators: a voxelized nested-region head and a
//! seeded synthetic system with BEM-like multiplier families.

use std::collections::VecDeque;

use faer::Mat;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridAxis;
use crate::model::{Component, ConductivityPoint, Deflation, MultiplierSpec, ParametrizedSystem};
use crate::numerics::forward::exact_leadfield;

/// Voxel model: cells on a box grid, each labelled with a region in
/// `1..=n_compartments` (label 1 innermost) or 0 for void.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiniHeadSpec {
    pub grid_shape: [usize; 3],
    pub n_compartments: usize,
    /// Cell `(x, y, z)` is at `x + nx·(y + ny·z)`.
    pub compartment_map: Vec<usize>,
    pub electrode_cells: Vec<usize>,
    pub source_pairs: Vec<[usize; 2]>,
    /// Cell spacing in meters.
    pub spacing: f64,
    /// Domain of interest; its center is the deflation reference.
    pub domain: Vec<GridAxis>,
    #[serde(default = "yes")]
    pub deflate: bool,
}

fn yes() -> bool {
    true
}

impl Default for MiniHeadSpec {
    fn default() -> Self {
        MiniHeadSpec::nested([16, 16, 16], &[2, 2], 32, 128, 0.01, default_domain())
            .expect("default mini-head spec is valid")
    }
}

/// Brain-relative `[0.5, 2]` linear, skull `[1e-4, 1e-1]` log, scalp fixed at 1.
pub fn default_domain() -> Vec<GridAxis> {
    vec![
        GridAxis::linear(0.5, 2.0, 15),
        GridAxis::log(1e-4, 1e-1, 15),
        GridAxis::fixed(1.0),
    ]
}

impl MiniHeadSpec {
    /// Concentric boxes. `shells[k]` is the thickness in cells of region
    /// `N_C − k` counted from the outside; the remaining core is region 1.
    /// Electrodes are spread evenly over the outer surface cells, sources
    /// over face-adjacent pairs inside region 1.
    pub fn nested(
        shape: [usize; 3],
        shells: &[usize],
        n_electrodes: usize,
        n_sources: usize,
        spacing: f64,
        domain: Vec<GridAxis>,
    ) -> Result<Self> {
        let [nx, ny, nz] = shape;
        let n_c = shells.len() + 1;
        let n_cells = nx * ny * nz;
        let mut map = vec![0; n_cells];
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let depth = [x, nx - 1 - x, y, ny - 1 - y, z, nz - 1 - z]
                        .into_iter()
                        .min()
                        .unwrap();
                    let mut label = 1;
                    let mut acc = 0;
                    for (k, &t) in shells.iter().enumerate() {
                        acc += t;
                        if depth < acc {
                            label = n_c - k;
                            break;
                        }
                    }
                    map[x + nx * (y + ny * z)] = label;
                }
            }
        }
        let surface: Vec<usize> = (0..n_cells)
            .filter(|&c| {
                let (x, y, z) = (c % nx, (c / nx) % ny, c / (nx * ny));
                map[c] == n_c && (x == 0 || y == 0 || z == 0 || x == nx - 1 || y == ny - 1 || z == nz - 1)
            })
            .collect();
        let mut candidates = Vec::new();
        for c in 0..n_cells {
            if map[c] != 1 {
                continue;
            }
            let (x, y, z) = (c % nx, (c / nx) % ny, c / (nx * ny));
            let steps = [(x + 1 < nx, 1), (y + 1 < ny, nx), (z + 1 < nz, nx * ny)];
            for (ok, stride) in steps {
                if ok && map[c + stride] == 1 {
                    candidates.push([c, c + stride]);
                }
            }
        }
        if n_electrodes > surface.len() || n_electrodes == 0 {
            return Err(Error::config(format!(
                "n_electrodes must be in 1..={} for this layout",
                surface.len()
            )));
        }
        if n_sources > candidates.len() || n_sources == 0 {
            return Err(Error::config(format!(
                "n_sources must be in 1..={} for this layout",
                candidates.len()
            )));
        }
        Ok(MiniHeadSpec {
            grid_shape: shape,
            n_compartments: n_c,
            compartment_map: map,
            electrode_cells: spread(&surface, n_electrodes),
            source_pairs: spread(&candidates, n_sources),
            spacing,
            domain,
            deflate: true,
        })
    }

    fn n_cells(&self) -> usize {
        self.grid_shape.iter().product()
    }

    fn neighbors(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        let [nx, ny, nz] = self.grid_shape;
        let (x, y, z) = (c % nx, (c / nx) % ny, c / (nx * ny));
        let plane = nx * ny;
        [
            (x > 0).then(|| c - 1),
            (x + 1 < nx).then(|| c + 1),
            (y > 0).then(|| c - nx),
            (y + 1 < ny).then(|| c + nx),
            (z > 0).then(|| c - plane),
            (z + 1 < nz).then(|| c + plane),
        ]
        .into_iter()
        .flatten()
    }

    fn on_outer_boundary(&self, c: usize) -> bool {
        let n: Vec<usize> = self.neighbors(c).collect();
        n.len() < 6 || n.iter().any(|&m| self.compartment_map[m] == 0)
    }

    pub fn validate(&self) -> Result<()> {
        let n_cells = self.n_cells();
        let n_c = self.n_compartments;
        if self.grid_shape.contains(&0) {
            return Err(Error::config("grid_shape entries must be positive"));
        }
        if n_c == 0 {
            return Err(Error::config("n_compartments must be positive"));
        }
        if self.compartment_map.len() != n_cells {
            return Err(Error::config(format!(
                "compartment_map has {} entries, grid has {n_cells} cells",
                self.compartment_map.len()
            )));
        }
        if let Some(&bad) = self.compartment_map.iter().find(|&&l| l > n_c) {
            return Err(Error::config(format!("compartment_map label {bad} exceeds n_compartments")));
        }
        for r in 1..=n_c {
            if !self.compartment_map.contains(&r) {
                return Err(Error::config(format!("region {r} is empty")));
            }
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(Error::config("spacing must be positive"));
        }
        if self.domain.len() != n_c {
            return Err(Error::config(format!(
                "domain has {} axes, expected one per compartment ({n_c})",
                self.domain.len()
            )));
        }
        if self.electrode_cells.is_empty() {
            return Err(Error::config("electrode_cells is empty"));
        }
        for &e in &self.electrode_cells {
            if e >= n_cells || self.compartment_map[e] != n_c || !self.on_outer_boundary(e) {
                return Err(Error::config(format!(
                    "electrode cell {e} is not on the boundary of the outermost region"
                )));
            }
        }
        if self.source_pairs.is_empty() {
            return Err(Error::config("source_pairs is empty"));
        }
        for &[a, b] in &self.source_pairs {
            if a >= n_cells || b >= n_cells || self.compartment_map[a] != 1 || self.compartment_map[b] != 1 {
                return Err(Error::config(format!(
                    "source pair ({a}, {b}) is not inside the innermost region"
                )));
            }
            if !self.neighbors(a).any(|m| m == b) {
                return Err(Error::config(format!("source pair ({a}, {b}) is not face-adjacent")));
            }
        }
        Ok(())
    }

    fn check_connected(&self) -> Result<()> {
        let map = &self.compartment_map;
        let start = map.iter().position(|&l| l != 0).expect("regions are nonempty");
        let mut seen = vec![false; map.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut count = 1;
        while let Some(c) = queue.pop_front() {
            for m in self.neighbors(c) {
                if map[m] != 0 && !seen[m] {
                    seen[m] = true;
                    count += 1;
                    queue.push_back(m);
                }
            }
        }
        let active = map.iter().filter(|&&l| l != 0).count();
        if count != active {
            return Err(Error::config(format!(
                "domain is disconnected ({count} of {active} cells reachable)"
            )));
        }
        Ok(())
    }
}

fn spread<T: Copy>(items: &[T], k: usize) -> Vec<T> {
    (0..k).map(|i| items[i * items.len() / k]).collect()
}

/// The assembled mini head plus bookkeeping the CLI and tests need.
#[derive(Debug, Clone)]
pub struct MiniHead {
    pub system: ParametrizedSystem,
    /// Unknown index of every active cell (`None` for void cells).
    pub unknown_of_cell: Vec<Option<usize>>,
    pub domain: Vec<GridAxis>,
}

/// Per-region face Laplacians, `H̄_r[a][a] += h`, `H̄_r[a][b] −= h` for every
/// face owned by region `r`. Interface faces belong to the inner region.
pub fn region_laplacians(spec: &MiniHeadSpec, unknown_of_cell: &[Option<usize>], n_v: usize) -> Vec<Mat<f64>> {
    let h = spec.spacing;
    let mut out = vec![Mat::<f64>::zeros(n_v, n_v); spec.n_compartments];
    for c in 0..spec.n_cells() {
        let Some(a) = unknown_of_cell[c] else { continue };
        for m in spec.neighbors(c) {
            if m < c {
                continue;
            }
            let Some(b) = unknown_of_cell[m] else { continue };
            let owner = spec.compartment_map[c].min(spec.compartment_map[m]) - 1;
            let lap = &mut out[owner];
            lap[(a, a)] += h;
            lap[(b, b)] += h;
            lap[(a, b)] -= h;
            lap[(b, a)] -= h;
        }
    }
    out
}

pub fn build_mini_head(spec: &MiniHeadSpec) -> Result<MiniHead> {
    spec.validate()?;
    spec.check_connected()?;
    let mut unknown_of_cell = vec![None; spec.n_cells()];
    let mut n_v = 0;
    for (c, &l) in spec.compartment_map.iter().enumerate() {
        if l != 0 {
            unknown_of_cell[c] = Some(n_v);
            n_v += 1;
        }
    }
    let laps = region_laplacians(spec, &unknown_of_cell, n_v);
    let mut h_components: Vec<Component> = laps
        .into_iter()
        .enumerate()
        .map(|(r, m)| Component { matrix: m, multiplier: MultiplierSpec::sigma(r) })
        .collect();

    let n_s = spec.source_pairs.len();
    let inv_h = 1.0 / spec.spacing;
    let mut d = Mat::<f64>::zeros(n_v, n_s);
    for (k, &[a, b]) in spec.source_pairs.iter().enumerate() {
        d[(unknown_of_cell[a].unwrap(), k)] = inv_h;
        d[(unknown_of_cell[b].unwrap(), k)] = -inv_h;
    }
    let d_components = vec![Component { matrix: d, multiplier: MultiplierSpec::constant(1.0) }];

    let mut s = Mat::<f64>::zeros(spec.electrode_cells.len(), n_v);
    for (e, &c) in spec.electrode_cells.iter().enumerate() {
        s[(e, unknown_of_cell[c].unwrap())] = 1.0;
    }

    let deflation = if spec.deflate {
        let reference: Vec<f64> = spec.domain.iter().map(GridAxis::center).collect();
        let trace: f64 = h_components
            .iter()
            .zip(&reference)
            .map(|(c, &sig)| sig * (0..n_v).map(|i| c.matrix[(i, i)]).sum::<f64>())
            .sum();
        let def = Deflation {
            vector: vec![1.0 / (n_v as f64).sqrt(); n_v],
            scale: trace / n_v as f64,
            component: h_components.len(),
        };
        h_components.push(Component { matrix: def.matrix(), multiplier: MultiplierSpec::constant(1.0) });
        Some(def)
    } else {
        None
    };
    let system = ParametrizedSystem::new(spec.n_compartments, h_components, d_components, s, deflation)?;
    Ok(MiniHead { system, unknown_of_cell, domain: spec.domain.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaFamily {
    /// `σ_i` for every compartment
    Sigma,
    /// `σ_i⁻¹` for every compartment
    Inverse,
    /// `σ_i + σ_j` for every pair `i < j`
    PairSum,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaFamily {
    One,
    Sigma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_unknowns: usize,
    pub n_compartments: usize,
    pub n_electrodes: usize,
    pub n_sources: usize,
    pub gamma_family: Vec<GammaFamily>,
    pub lambda_family: Vec<LambdaFamily>,
    pub seed: u64,
    pub conditioning_floor: f64,
    /// Domain of interest recorded with the generated system.
    #[serde(default)]
    pub domain: Vec<GridAxis>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_unknowns: 64,
            n_compartments: 3,
            n_electrodes: 8,
            n_sources: 12,
            gamma_family: vec![GammaFamily::Sigma, GammaFamily::Inverse, GammaFamily::PairSum],
            lambda_family: vec![LambdaFamily::One, LambdaFamily::Sigma],
            seed: 1,
            conditioning_floor: 0.1,
            domain: vec![GridAxis::linear(0.5, 2.0, 7), GridAxis::log(1e-2, 1.0, 7), GridAxis::fixed(1.0)],
        }
    }
}

impl SynthSpec {
    pub fn gamma_specs(&self) -> Vec<MultiplierSpec> {
        let n = self.n_compartments;
        let mut out = Vec::new();
        for f in &self.gamma_family {
            match f {
                GammaFamily::Sigma => out.extend((0..n).map(MultiplierSpec::sigma)),
                GammaFamily::Inverse => out.extend((0..n).map(MultiplierSpec::inverse)),
                GammaFamily::PairSum => {
                    for i in 0..n {
                        for j in (i + 1)..n {
                            out.push(MultiplierSpec::pair_sum(i, j));
                        }
                    }
                }
                GammaFamily::Constant => out.push(MultiplierSpec::constant(1.0)),
            }
        }
        out
    }

    pub fn lambda_specs(&self) -> Vec<MultiplierSpec> {
        let mut out = Vec::new();
        for f in &self.lambda_family {
            match f {
                LambdaFamily::One => out.push(MultiplierSpec::constant(1.0)),
                LambdaFamily::Sigma => out.extend((0..self.n_compartments).map(MultiplierSpec::sigma)),
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.n_unknowns == 0 || self.n_compartments == 0 || self.n_sources == 0 {
            return Err(Error::config("synthetic dimensions must be positive"));
        }
        if self.n_electrodes == 0 || self.n_electrodes > self.n_unknowns {
            return Err(Error::config("n_electrodes must be in 1..=n_unknowns"));
        }
        if !(self.conditioning_floor.is_finite() && self.conditioning_floor > 0.0) {
            return Err(Error::config("conditioning_floor must be positive"));
        }
        if self.gamma_specs().is_empty() {
            return Err(Error::config("gamma_family yields no components"));
        }
        if self.lambda_specs().is_empty() {
            return Err(Error::config("lambda_family yields no components"));
        }
        if !self.domain.is_empty() && self.domain.len() != self.n_compartments {
            return Err(Error::config("domain must have one axis per compartment"));
        }
        Ok(())
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Mat<f64> {
    let mut m = Mat::<f64>::zeros(rows, cols);
    for j in 0..cols {
        for v in m.col_as_slice_mut(j) {
            let x: f64 = rng.sample(StandardNormal);
            *v = scale * x;
        }
    }
    m
}

/// `H̄_i = B_iᵀB_i + floor·I/N_H` with seeded Gaussian `B_i`; all multipliers
/// positive on the positive orthant, so `H(σ)` is positive definite.
pub fn build_synthetic(spec: &SynthSpec) -> Result<ParametrizedSystem> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_unknowns;
    let gammas = spec.gamma_specs();
    let n_h = gammas.len();
    let shift = spec.conditioning_floor / n_h as f64;
    let mut h_components = Vec::with_capacity(n_h);
    for g in gammas {
        let b = gaussian_matrix(&mut rng, n, n, 1.0 / (n as f64).sqrt());
        let bt_b = crate::numerics::dense::product(b.transpose(), b.as_ref());
        let m = Mat::from_fn(n, n, |i, j| {
            let sym = 0.5 * (bt_b[(i, j)] + bt_b[(j, i)]);
            if i == j { sym + shift } else { sym }
        });
        h_components.push(Component { matrix: m, multiplier: g });
    }
    let d_components = spec
        .lambda_specs()
        .into_iter()
        .map(|l| Component { matrix: gaussian_matrix(&mut rng, n, spec.n_sources, 1.0), multiplier: l })
        .collect();
    let mut rows = index::sample(&mut rng, n, spec.n_electrodes).into_vec();
    rows.sort_unstable();
    let mut s = Mat::<f64>::zeros(spec.n_electrodes, n);
    for (e, &r) in rows.iter().enumerate() {
        s[(e, r)] = 1.0;
    }
    ParametrizedSystem::new(spec.n_compartments, h_components, d_components, s, None)
}

/// Gaussian noise of standard deviation `noise_std` added to `amplitude · column`.
pub fn simulate_from_leadfield(
    leadfield: &Mat<f64>,
    source_index: usize,
    amplitudes: &[f64],
    noise_std: f64,
    seed: u64,
) -> Result<Mat<f64>> {
    if source_index >= leadfield.ncols() {
        return Err(Error::config(format!(
            "source index {source_index} out of range (N_S = {})",
            leadfield.ncols()
        )));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::config("noise_std must be nonnegative"));
    }
    if amplitudes.is_empty() {
        return Err(Error::config("at least one time sample is required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_e = leadfield.nrows();
    let mut y = Mat::<f64>::zeros(n_e, amplitudes.len());
    for (t, &a) in amplitudes.iter().enumerate() {
        for e in 0..n_e {
            let noise: f64 = rng.sample(StandardNormal);
            y[(e, t)] = a * leadfield[(e, source_index)] + noise_std * noise;
        }
    }
    Ok(y)
}

/// `y = amplitude · L(σ*)[:, source] + noise`, one topography per amplitude.
pub fn simulate_measurement(
    sys: &ParametrizedSystem,
    sigma: &ConductivityPoint,
    source_index: usize,
    amplitudes: &[f64],
    noise_std: f64,
    seed: u64,
) -> Result<Mat<f64>> {
    if source_index >= sys.n_sources() {
        return Err(Error::config(format!(
            "source index {source_index} out of range (N_S = {})",
            sys.n_sources()
        )));
    }
    let l = exact_leadfield(sys, sigma)?;
    simulate_from_leadfield(&l, source_index, amplitudes, noise_std, seed)
}
