//! On-disk formats: the LFRB matrix container and system manifests.
//!
//! LFRB layout: a 16-byte header (ASCII `LFRB`, u32 rows, u32 cols, four
//! reserved zero bytes) followed by `rows·cols` f64 values in row-major
//! order, everything little-endian.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use faer::Mat;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridAxis;
use crate::model::{Component, Deflation, MultiplierSpec, ParametrizedSystem};

pub const MAGIC: &[u8; 4] = b"LFRB";

pub fn write_matrix(path: &Path, m: &Mat<f64>) -> Result<()> {
    let rows = u32::try_from(m.nrows()).map_err(|_| Error::format(path, "too many rows"))?;
    let cols = u32::try_from(m.ncols()).map_err(|_| Error::format(path, "too many columns"))?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut buf = Vec::with_capacity(16 + 8 * m.ncols());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&rows.to_le_bytes());
    buf.extend_from_slice(&cols.to_le_bytes());
    buf.extend_from_slice(&[0; 4]);
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    for i in 0..m.nrows() {
        buf.clear();
        for j in 0..m.ncols() {
            buf.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
        w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Mat<f64>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut r = BufReader::new(file);
    let mut header = [0u8; 16];
    r.read_exact(&mut header)
        .map_err(|_| Error::format(path, "truncated header"))?;
    if &header[..4] != MAGIC {
        return Err(Error::format(path, "bad magic, expected LFRB"));
    }
    let rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let expected = 16 + 8 * (rows as u64) * (cols as u64);
    if len != expected {
        return Err(Error::format(
            path,
            format!("{rows}x{cols} matrix needs {expected} bytes, file has {len}"),
        ));
    }
    let mut m = Mat::<f64>::zeros(rows, cols);
    let mut row = vec![0u8; 8 * cols];
    for i in 0..rows {
        r.read_exact(&mut row).map_err(|e| Error::io(path, e))?;
        for j in 0..cols {
            m[(i, j)] = f64::from_le_bytes(row[8 * j..8 * j + 8].try_into().unwrap());
        }
    }
    Ok(m)
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| Error::format(path, e.to_string()))?;
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentEntry {
    pub file: String,
    pub multiplier: MultiplierSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeflationEntry {
    pub scale: f64,
    pub component: usize,
    pub vector: String,
}

/// `system.toml`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemManifest {
    pub kind: String,
    pub n_unknowns: usize,
    pub n_electrodes: usize,
    pub n_sources: usize,
    pub n_compartments: usize,
    /// Domain of interest as `lo:hi:count:mode` strings.
    #[serde(default)]
    pub domain: Vec<String>,
    pub selection: String,
    pub h_components: Vec<ComponentEntry>,
    pub d_components: Vec<ComponentEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deflation: Option<DeflationEntry>,
}

impl SystemManifest {
    pub fn domain_axes(&self) -> Result<Vec<GridAxis>> {
        self.domain.iter().map(|s| s.parse()).collect()
    }
}

pub const SYSTEM_MANIFEST: &str = "system.toml";

pub fn save_system(dir: &Path, kind: &str, sys: &ParametrizedSystem, domain: &[GridAxis]) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, m: &Mat<f64>| -> Result<String> {
        let p = dir.join(&name);
        write_matrix(&p, m)?;
        written.push(p);
        Ok(name)
    };
    let selection = put("selection.lfrb".into(), sys.selection())?;
    let mut h_components = Vec::new();
    for (i, c) in sys.h_components().iter().enumerate() {
        let file = put(format!("h_{i:02}.lfrb"), &c.matrix)?;
        h_components.push(ComponentEntry { file, multiplier: c.multiplier.clone() });
    }
    let mut d_components = Vec::new();
    for (j, c) in sys.d_components().iter().enumerate() {
        let file = put(format!("d_{j:02}.lfrb"), &c.matrix)?;
        d_components.push(ComponentEntry { file, multiplier: c.multiplier.clone() });
    }
    let deflation = match sys.deflation() {
        Some(def) => {
            let v = Mat::from_fn(def.vector.len(), 1, |i, _| def.vector[i]);
            let vector = put("deflation_vector.lfrb".into(), &v)?;
            Some(DeflationEntry { scale: def.scale, component: def.component, vector })
        }
        None => None,
    };
    let manifest = SystemManifest {
        kind: kind.to_string(),
        n_unknowns: sys.n_unknowns(),
        n_electrodes: sys.n_electrodes(),
        n_sources: sys.n_sources(),
        n_compartments: sys.n_compartments(),
        domain: domain.iter().map(ToString::to_string).collect(),
        selection,
        h_components,
        d_components,
        deflation,
    };
    let p = dir.join(SYSTEM_MANIFEST);
    write_toml(&p, &manifest)?;
    written.push(p);
    Ok(written)
}

pub fn load_system(dir: &Path) -> Result<(ParametrizedSystem, SystemManifest)> {
    let manifest: SystemManifest = read_toml(&dir.join(SYSTEM_MANIFEST))?;
    let load_components = |entries: &[ComponentEntry]| -> Result<Vec<Component>> {
        entries
            .iter()
            .map(|e| {
                Ok(Component {
                    matrix: read_matrix(&dir.join(&e.file))?,
                    multiplier: e.multiplier.clone(),
                })
            })
            .collect()
    };
    let h = load_components(&manifest.h_components)?;
    let d = load_components(&manifest.d_components)?;
    let s = read_matrix(&dir.join(&manifest.selection))?;
    let deflation = match &manifest.deflation {
        Some(e) => {
            let p = dir.join(&e.vector);
            let v = read_matrix(&p)?;
            if v.ncols() != 1 {
                return Err(Error::format(p, "deflation vector must be a single column"));
            }
            Some(Deflation {
                vector: v.col_as_slice(0).to_vec(),
                scale: e.scale,
                component: e.component,
            })
        }
        None => None,
    };
    let sys = ParametrizedSystem::new(manifest.n_compartments, h, d, s, deflation)?;
    let dims = (sys.n_unknowns(), sys.n_electrodes(), sys.n_sources());
    if dims != (manifest.n_unknowns, manifest.n_electrodes, manifest.n_sources) {
        return Err(Error::format(
            dir.join(SYSTEM_MANIFEST),
            "declared dimensions do not match the component files",
        ));
    }
    Ok((sys, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{build_synthetic, SynthSpec};
    use crate::numerics::dense;

    #[test]
    fn container_roundtrip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.lfrb");
        let m = Mat::<f64>::from_fn(2, 3, |i, j| (i * 3 + j) as f64 + 0.5);
        write_matrix(&p, &m).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"LFRB");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(bytes.len(), 16 + 6 * 8);
        assert_eq!(&bytes[12..16], &[0; 4]);
        // row-major: second value is m[(0, 1)]
        assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), 1.5);
        let back = read_matrix(&p).unwrap();
        assert_eq!(dense::frobenius_distance(&back, &m), 0.0);
    }

    #[test]
    fn truncated_and_bad_magic_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.lfrb");
        fs::write(&p, b"XXXX\x01\0\0\0\x01\0\0\0\0\0\0\0\0\0\0\0\0\0\0\0").unwrap();
        assert!(matches!(read_matrix(&p), Err(Error::Format { .. })));
        let mut good = Vec::from(*MAGIC);
        good.extend_from_slice(&2u32.to_le_bytes());
        good.extend_from_slice(&2u32.to_le_bytes());
        good.extend_from_slice(&[0; 12]);
        fs::write(&p, &good).unwrap();
        assert!(matches!(read_matrix(&p), Err(Error::Format { .. })));
        assert!(matches!(read_matrix(&dir.path().join("none")), Err(Error::Io { .. })));
    }

    #[test]
    fn system_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec { n_unknowns: 12, ..SynthSpec::default() };
        let sys = build_synthetic(&spec).unwrap();
        save_system(dir.path(), "synthetic", &sys, &spec.domain).unwrap();
        let (back, manifest) = load_system(dir.path()).unwrap();
        assert_eq!(manifest.domain_axes().unwrap(), spec.domain);
        assert_eq!(back.multipliers(), sys.multipliers());
        for (a, b) in back.h_components().iter().zip(sys.h_components()) {
            assert_eq!(dense::frobenius_distance(&a.matrix, &b.matrix), 0.0);
        }
    }
}
