//! Binary blobs with a one-line JSON header, for sampled fields and
//! correctors. Payload is little-endian `f64`, voxels in row-major order
//! with `z` fastest, each matrix row-major.

use crate::microstructure::{GridField, MicrostructureError};
use crate::solver::{CorrectorGrid, SolverConfig};
use crate::tensor::{Mat3, Vec3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

const GRID_FORMAT: &str = "kohler-grid";
const CORRECTOR_FORMAT: &str = "kohler-corrector";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("bad blob: {0}")]
    Format(String),
    #[error(transparent)]
    Microstructure(#[from] MicrostructureError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobHeader {
    pub format: String,
    pub version: u32,
    pub dims: [usize; 3],
    /// Per-voxel fields in payload order.
    pub fields: Vec<String>,
    pub order: String,
    /// Solver metadata, corrector blobs only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residuals: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<[usize; 3]>,
}

const ORDER: &str = "voxels row-major z-fastest, matrices row-major, f64 little-endian";

fn push_mat(out: &mut Vec<u8>, m: &Mat3) {
    for i in 0..3 {
        for j in 0..3 {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
}

fn read_mats(bytes: &[u8], count: usize) -> Result<Vec<Mat3>, IoError> {
    if bytes.len() != count * 72 {
        return Err(IoError::Format(format!(
            "expected {} payload bytes, found {}",
            count * 72,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(72)
        .map(|c| Mat3::from_fn(|i, j| f64::from_le_bytes(c[(i * 3 + j) * 8..][..8].try_into().unwrap())))
        .collect())
}

/// Payload bytes of a field: `sigma`, `s`, then six quadratic slots per voxel if present.
pub fn grid_payload(field: &GridField) -> Vec<u8> {
    let mut out = Vec::with_capacity(field.len() * 72 * 8);
    for m in field.sigma() {
        push_mat(&mut out, m);
    }
    for m in field.s() {
        push_mat(&mut out, m);
    }
    if let Some(q) = field.quadratic() {
        for slots in q {
            for m in slots {
                push_mat(&mut out, m);
            }
        }
    }
    out
}

fn write_blob(w: &mut impl Write, header: &BlobHeader, payload: &[u8]) -> Result<(), IoError> {
    serde_json::to_writer(&mut *w, header)?;
    w.write_all(b"\n")?;
    w.write_all(payload)?;
    Ok(())
}

fn read_blob(r: impl Read) -> Result<(BlobHeader, Vec<u8>), IoError> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: BlobHeader = serde_json::from_str(line.trim_end())?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    Ok((header, payload))
}

pub fn write_grid(w: &mut impl Write, field: &GridField) -> Result<(), IoError> {
    let mut fields = vec!["sigma".to_string(), "s".to_string()];
    if field.quadratic().is_some() {
        fields.push("quadratic[6]".into());
    }
    let header = BlobHeader {
        format: GRID_FORMAT.into(),
        version: 1,
        dims: field.dims(),
        fields,
        order: ORDER.into(),
        residuals: None,
        iterations: None,
    };
    write_blob(w, &header, &grid_payload(field))
}

pub fn read_grid(r: impl Read) -> Result<GridField, IoError> {
    let (header, payload) = read_blob(r)?;
    if header.format != GRID_FORMAT {
        return Err(IoError::Format(format!("not a grid blob: {}", header.format)));
    }
    let n: usize = header.dims.iter().product();
    let per_voxel = if header.fields.len() == 3 { 8 } else { 2 };
    let mats = read_mats(&payload, n * per_voxel)?;
    let sigma = mats[..n].to_vec();
    let s = mats[n..2 * n].to_vec();
    let quad = (per_voxel == 8).then(|| {
        mats[2 * n..]
            .chunks_exact(6)
            .map(|c| std::array::from_fn(|k| c[k]))
            .collect()
    });
    Ok(GridField::new(header.dims, sigma, s, quad)?)
}

pub fn save_grid(path: &Path, field: &GridField) -> Result<(), IoError> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    write_grid(&mut f, field)?;
    f.flush()?;
    Ok(())
}

pub fn load_grid(path: &Path) -> Result<GridField, IoError> {
    read_grid(fs::File::open(path)?)
}

pub fn write_corrector(w: &mut impl Write, grid: &CorrectorGrid) -> Result<(), IoError> {
    let header = BlobHeader {
        format: CORRECTOR_FORMAT.into(),
        version: 1,
        dims: grid.dims,
        fields: vec!["corrector".into()],
        order: ORDER.into(),
        residuals: Some(grid.residuals),
        iterations: Some(grid.iterations),
    };
    let mut payload = Vec::with_capacity(grid.values.len() * 72);
    for m in &grid.values {
        push_mat(&mut payload, m);
    }
    write_blob(w, &header, &payload)
}

pub fn read_corrector(r: impl Read) -> Result<CorrectorGrid, IoError> {
    let (header, payload) = read_blob(r)?;
    if header.format != CORRECTOR_FORMAT {
        return Err(IoError::Format(format!("not a corrector blob: {}", header.format)));
    }
    let n: usize = header.dims.iter().product();
    Ok(CorrectorGrid {
        dims: header.dims,
        values: read_mats(&payload, n)?,
        residuals: header.residuals.unwrap_or_default(),
        iterations: header.iterations.unwrap_or_default(),
    })
}

/// Content hash of a field, hex encoded.
pub fn field_hash(field: &GridField) -> String {
    let mut h = Sha256::new();
    h.update(format!("{:?}", field.dims()).as_bytes());
    h.update(grid_payload(field));
    hex::encode(h.finalize())
}

/// Which corrector a cache entry holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectorKind {
    P0,
    P1,
    P2,
}

/// Directory of corrector blobs keyed by a hash of field, solver settings,
/// corrector kind and `h`.
#[derive(Debug, Clone)]
pub struct CorrectorCache {
    dir: PathBuf,
}

impl CorrectorCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, IoError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn key(field_hash: &str, cfg: &SolverConfig, kind: CorrectorKind, h: Option<&Vec3>) -> String {
        let mut d = Sha256::new();
        d.update(field_hash.as_bytes());
        d.update(serde_json::to_vec(cfg).expect("solver config serializes"));
        d.update(serde_json::to_vec(&kind).expect("kind serializes"));
        if let Some(h) = h {
            for x in h.iter() {
                d.update(x.to_le_bytes());
            }
        }
        hex::encode(d.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.bin"))
    }

    pub fn load(&self, key: &str) -> Option<CorrectorGrid> {
        let f = fs::File::open(self.path(key)).ok()?;
        match read_corrector(f) {
            Ok(g) => Some(g),
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {key}: {e}");
                None
            }
        }
    }

    pub fn store(&self, key: &str, grid: &CorrectorGrid) -> Result<(), IoError> {
        let tmp = self.dir.join(format!("{key}.tmp"));
        {
            let mut f = std::io::BufWriter::new(fs::File::create(&tmp)?);
            write_corrector(&mut f, grid)?;
            f.flush()?;
        }
        fs::rename(tmp, self.path(key))?;
        Ok(())
    }

    /// Cached value for `key`, or compute and store it.
    pub fn get_or_solve<E: From<IoError>>(
        &self,
        key: &str,
        solve: impl FnOnce() -> Result<CorrectorGrid, E>,
    ) -> Result<CorrectorGrid, E> {
        if let Some(g) = self.load(key) {
            log::debug!("cache hit {key}");
            return Ok(g);
        }
        let g = solve()?;
        self.store(key, &g)?;
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microstructure::{sample, MaterialSpec};
    use crate::solver::solve_p0;

    #[test]
    fn grid_round_trip_is_bit_exact() {
        for spec in [
            MaterialSpec::Checkerboard4 {
                alpha: [1.0, 2.0, 3.0, 4.0],
                hall: [0.1, -0.2, 0.3, 0.7],
            },
            MaterialSpec::LaminateRank1 {
                theta: 0.25,
                alpha2: 3.0,
                zero_hall: true,
            },
        ] {
            let g = sample(&spec, 8).unwrap();
            let mut buf = Vec::new();
            write_grid(&mut buf, &g).unwrap();
            let back = read_grid(&buf[..]).unwrap();
            assert_eq!(back, g);
            assert_eq!(field_hash(&back), field_hash(&g));
        }
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let g = sample(&MaterialSpec::Homogeneous { conductivity: 1.0, hall: 0.0 }, 4).unwrap();
        let mut buf = Vec::new();
        write_grid(&mut buf, &g).unwrap();
        buf.truncate(buf.len() - 8);
        assert!(matches!(read_grid(&buf[..]), Err(IoError::Format(_))));
    }

    #[test]
    fn cache_returns_stored_corrector() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CorrectorCache::new(dir.path()).unwrap();
        let g = sample(
            &MaterialSpec::Checkerboard4 {
                alpha: [1.0, 2.0, 3.0, 4.0],
                hall: [1.0; 4],
            },
            8,
        )
        .unwrap();
        let cfg = SolverConfig::default();
        let key = CorrectorCache::key(&field_hash(&g), &cfg, CorrectorKind::P0, None);
        assert!(cache.load(&key).is_none());
        let solved = cache
            .get_or_solve::<Box<dyn std::error::Error>>(&key, || Ok(solve_p0(&g, &cfg)?.p0))
            .unwrap();
        let again = cache
            .get_or_solve::<Box<dyn std::error::Error>>(&key, || panic!("should hit the cache"))
            .unwrap();
        assert_eq!(solved, again);
        let other = CorrectorCache::key(&field_hash(&g), &cfg, CorrectorKind::P1, Some(&Vec3::x()));
        assert_ne!(key, other);
    }
}
