//! Content-addressed cache of per-frequency solutions.
//!
//! Keys hash everything that determines a solve: the mesh, the pulse, the
//! assembly options, the frequency and coupling switch, and whether norms
//! were estimated. Entries are written to a temporary file and renamed, so a
//! reader never sees a partial entry.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use bdod_core::geometry::SurfaceMesh;
use bdod_core::incident::IncidentPulse;
use bdod_core::operators::AssemblyOptions;
use bdod_core::resolvent::PointSolve;
use bdod_core::Complex64;
use sha2::{Digest, Sha256};

const MAGIC: &[u8; 8] = b"BDODPT01";

#[derive(Debug, Clone)]
pub struct PointCache {
    dir: PathBuf,
}

/// Everything a per-frequency solve depends on besides the frequency.
#[derive(Debug, Clone, Copy)]
pub struct SolveContext<'a> {
    pub mesh: &'a SurfaceMesh,
    pub pulse: &'a IncidentPulse,
    pub options: &'a AssemblyOptions,
    pub omega0: f64,
    pub norms: bool,
}

impl SolveContext<'_> {
    pub fn key(&self, omega: f64) -> String {
        let mut h = Sha256::new();
        h.update(b"bdod point v1\0");
        h.update(env!("CARGO_PKG_VERSION").as_bytes());
        h.update(self.mesh.content_hash());
        let p = self.pulse;
        for v in [p.direction.x, p.direction.y, p.direction.z, p.carrier, p.width, p.delay, p.amplitude, p.c] {
            h.update(v.to_le_bytes());
        }
        h.update(serde_json::to_vec(self.options).expect("options serialize"));
        h.update(self.omega0.to_le_bytes());
        h.update(omega.to_le_bytes());
        h.update([self.norms as u8]);
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl PointCache {
    pub fn new(dir: impl Into<PathBuf>) -> anyhow::Result<Self> {
        let dir = dir.into().join("points");
        fs::create_dir_all(&dir).with_context(|| format!("creating cache directory {}", dir.display()))?;
        Ok(Self { dir })
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.bin"))
    }

    pub fn get(&self, key: &str) -> anyhow::Result<Option<PointSolve>> {
        let path = self.path(key);
        if !path.exists() {
            return Ok(None);
        }
        let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        decode(&bytes).map(Some).with_context(|| format!("corrupt cache entry {}", path.display()))
    }

    pub fn put(&self, key: &str, point: &PointSolve) -> anyhow::Result<()> {
        let path = self.path(key);
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, encode(point))?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }
}

fn encode(p: &PointSolve) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 + 32 + 16 * p.density.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(p.density.len() as u64).to_le_bytes());
    for v in [p.resolvent_norm, p.operator_norm, p.rhs_norm, p.residual] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for z in &p.density {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

fn decode(mut bytes: &[u8]) -> anyhow::Result<PointSolve> {
    let mut magic = [0u8; 8];
    bytes.read_exact(&mut magic)?;
    if &magic != MAGIC {
        bail!("bad magic");
    }
    let mut word = [0u8; 8];
    let mut next = |b: &mut &[u8]| -> anyhow::Result<[u8; 8]> {
        b.read_exact(&mut word)?;
        Ok(word)
    };
    let n = u64::from_le_bytes(next(&mut bytes)?) as usize;
    let mut f = |b: &mut &[u8]| -> anyhow::Result<f64> { Ok(f64::from_le_bytes(next(b)?)) };
    let (resolvent_norm, operator_norm, rhs_norm, residual) = (f(&mut bytes)?, f(&mut bytes)?, f(&mut bytes)?, f(&mut bytes)?);
    if bytes.len() != 16 * n {
        bail!("expected {} density bytes, found {}", 16 * n, bytes.len());
    }
    let density = bytes
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    Ok(PointSolve {
        density,
        resolvent_norm,
        operator_norm,
        rhs_norm,
        residual,
    })
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entry_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = PointCache::new(dir.path()).unwrap();
        let p = PointSolve {
            density: vec![Complex64::new(1.5, -0.25), Complex64::new(f64::MIN_POSITIVE, 3e300)],
            resolvent_norm: f64::NAN,
            operator_norm: 2.0,
            rhs_norm: 0.1,
            residual: 1e-15,
        };
        assert!(cache.get("k").unwrap().is_none());
        cache.put("k", &p).unwrap();
        let back = cache.get("k").unwrap().unwrap();
        assert_eq!(back.density, p.density);
        assert!(back.resolvent_norm.is_nan());
        assert_eq!((back.operator_norm, back.rhs_norm, back.residual), (2.0, 0.1, 1e-15));
        fs::write(cache.path("bad"), b"nonsense").unwrap();
        assert!(cache.get("bad").is_err());
    }
}
