//! On-disk cache of monolithic reference solutions.
//!
//! Only the coefficient vectors are stored; operators are reassembled on
//! load, which is cheap next to the Newton solve.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use contactdd::mixed::{assemble_mixed, MixedSolution};
use contactdd::primal::assemble_primal;
use contactdd::{Formulation, MaterialField, NewtonParams, Reference, Region, SourceSpec, TwoScaleMesh};
use sha2::{Digest, Sha256};

use crate::error::{io_err, CliError};

const MAGIC: &[u8; 8] = b"CDDREF01";

pub struct ReferenceCache {
    dir: PathBuf,
}

/// Inputs that determine a reference solution.
pub struct ReferenceKey<'a> {
    pub formulation: Formulation,
    pub mesh: &'a TwoScaleMesh,
    pub material: &'a MaterialField,
    pub source: &'a SourceSpec,
    pub delta: f64,
    pub newton: &'a NewtonParams,
}

impl ReferenceKey<'_> {
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update([self.formulation.is_mixed() as u8]);
        h.update((self.mesh.n_coarse() as u64).to_le_bytes());
        h.update((self.mesh.refine() as u64).to_le_bytes());
        h.update(self.material.fingerprint());
        h.update(serde_json::to_vec(self.source).unwrap_or_default());
        h.update(self.delta.to_le_bytes());
        h.update(self.newton.tol.to_le_bytes());
        h.update((self.newton.max_iter as u64).to_le_bytes());
        h.update(serde_json::to_vec(&self.formulation.default_rule()).unwrap_or_default());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl ReferenceCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn path(&self, key: &ReferenceKey) -> PathBuf {
        self.dir.join(format!("{}.refsol", key.digest()))
    }

    /// Loads the reference for `key`, computing and storing it on a miss.
    /// Unreadable cache files are recomputed and replaced.
    pub fn get_or_compute(&self, key: &ReferenceKey) -> Result<Reference, CliError> {
        let path = self.path(key);
        if path.exists() {
            if let Ok(vectors) = read_vectors(&path) {
                if let Some(r) = rebuild(key, vectors)? {
                    return Ok(r);
                }
            }
        }
        let r = Reference::compute(key.formulation, key.mesh, key.material, key.source, key.delta, key.newton)?;
        let vectors = match &r {
            Reference::Primal { u, .. } => vec![u.clone()],
            Reference::Mixed { solution, .. } => vec![solution.sigma.clone(), solution.u.clone()],
        };
        write_vectors(&path, &vectors)?;
        Ok(r)
    }
}

fn rebuild(key: &ReferenceKey, mut v: Vec<Vec<f64>>) -> Result<Option<Reference>, CliError> {
    let rule = key.formulation.default_rule();
    if key.formulation.is_mixed() {
        let ops = assemble_mixed(key.mesh, key.material, key.source, Region::Omega, rule)?;
        if v.len() != 2 || v[0].len() != ops.space.n_stress() || v[1].len() != ops.space.n_disp() {
            return Ok(None);
        }
        let u = v.pop().unwrap_or_default();
        let sigma = v.pop().unwrap_or_default();
        Ok(Some(Reference::Mixed { ops, solution: MixedSolution { sigma, u } }))
    } else {
        let ops = assemble_primal(key.mesh, key.material, key.source, Region::Omega, rule)?;
        if v.len() != 1 || v[0].len() != ops.n_dofs() {
            return Ok(None);
        }
        Ok(Some(Reference::Primal { ops, u: v.pop().unwrap_or_default() }))
    }
}

fn read_vectors(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(io_err(path))?;
    let bad = || CliError::Data { path: path.display().to_string(), message: "corrupt reference cache file".into() };
    let mut rest = bytes.strip_prefix(MAGIC.as_slice()).ok_or_else(bad)?;
    let take_u64 = |rest: &mut &[u8]| -> Result<u64, CliError> {
        let (head, tail) = rest.split_at_checked(8).ok_or_else(bad)?;
        *rest = tail;
        Ok(u64::from_le_bytes(head.try_into().map_err(|_| bad())?))
    };
    let count = take_u64(&mut rest)? as usize;
    let mut out = Vec::with_capacity(count.min(8));
    for _ in 0..count {
        let n = take_u64(&mut rest)? as usize;
        let len = n.checked_mul(8).ok_or_else(bad)?;
        let (head, tail) = rest.split_at_checked(len).ok_or_else(bad)?;
        rest = tail;
        out.push(head.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap_or([0; 8]))).collect());
    }
    if !rest.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

/// Writes to a temporary sibling and renames, so readers never see a
/// partial file.
fn write_vectors(path: &Path, vectors: &[Vec<f64>]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut buf = MAGIC.to_vec();
    buf.extend((vectors.len() as u64).to_le_bytes());
    for v in vectors {
        buf.extend((v.len() as u64).to_le_bytes());
        for x in v {
            buf.extend(x.to_le_bytes());
        }
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::File::create(&tmp).and_then(|mut f| f.write_all(&buf).and_then(|_| f.sync_all())).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}
