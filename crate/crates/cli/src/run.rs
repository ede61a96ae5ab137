//! Sweep execution and per-point output files.

use std::io::Write;
use std::path::{Path, PathBuf};

use contactdd::dd::{DdState, DdSummary};
use contactdd::metrics::{write_contact_csv, ContactSample};
use contactdd::mixed::element::disp_basis;
use contactdd::mixed::{MixedOperators, MixedSolution};
use contactdd::primal::PrimalOperators;
use contactdd::{run_dd, MaterialField, Reference, RunOptions, SourceSpec, TwoScaleMesh};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::{ReferenceCache, ReferenceKey};
use crate::config::{ExperimentConfig, SweepPoint};
use crate::error::{io_err, CliError};
use crate::tables;

/// What `summary.json` holds for one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    /// Position in the sweep, used to order tables.
    pub order: usize,
    pub tag: String,
    pub material: String,
    pub n_fine: usize,
    pub robin_label: String,
    pub osly: Option<usize>,
    pub tol: f64,
    pub delta: f64,
    #[serde(flatten)]
    pub result: DdSummary,
}

pub struct RunResult {
    pub output: PathBuf,
    pub points: Vec<PointSummary>,
}

/// Writes through a temporary sibling and a rename.
pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

fn write_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<(), CliError>) -> Result<(), CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    atomic_write(path, &buf)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| CliError::Data { path: path.display().to_string(), message: e.to_string() })?;
        w.push(b'\n');
        Ok(())
    })
}

fn write_contact(path: &Path, samples: &[ContactSample]) -> Result<(), CliError> {
    write_with(path, |w| Ok(write_contact_csv(samples, w)?))
}

/// Cell-centroid stress and displacement of a mixed field.
fn mixed_rows(w: &mut impl Write, part: &str, ops: &MixedOperators, s: &MixedSolution) -> std::io::Result<()> {
    let mesh = ops.space.mesh();
    let centre = disp_basis([0.0, 0.0]);
    for (cell, st) in ops.space.centroid_stress(&s.sigma) {
        let (x, y) = mesh.cell_centroid(cell);
        let loc = ops.space.gather_disp(&s.u, 2 * cell);
        let mut u = [0.0; 2];
        for (k, b) in centre.iter().enumerate() {
            u[0] += loc[k] * b[0];
            u[1] += loc[k] * b[1];
        }
        writeln!(w, "{part},{cell},{x:.10},{y:.10},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}", st[0], st[1], st[2], u[0], u[1])?;
    }
    Ok(())
}

fn primal_rows(w: &mut impl Write, part: &str, ops: &PrimalOperators, u: &[f64]) -> std::io::Result<()> {
    let mesh = ops.space.mesh();
    for &v in ops.space.vertices() {
        let (x, y) = mesh.vertex_coords(v);
        let [a, b] = ops.space.value_at(u, v);
        writeln!(w, "{part},{v},{x:.10},{y:.10},{a:.12e},{b:.12e}")?;
    }
    Ok(())
}

const MIXED_HEADER: &str = "part,cell,x,y,s11,s12,s22,u1,u2";
const PRIMAL_HEADER: &str = "part,vertex,x,y,u1,u2";

fn write_reference_fields(path: &Path, r: &Reference) -> Result<(), CliError> {
    write_with(path, |w| {
        match r {
            Reference::Mixed { ops, solution } => writeln!(w, "{MIXED_HEADER}").and_then(|_| mixed_rows(w, "omega", ops, solution)),
            Reference::Primal { ops, u } => writeln!(w, "{PRIMAL_HEADER}").and_then(|_| primal_rows(w, "omega", ops, u)),
        }
        .map_err(io_err(path))
    })
}

fn write_state_fields(path: &Path, s: &DdState) -> Result<(), CliError> {
    write_with(path, |w| {
        match s {
            DdState::Mixed { ops1, ops2, s1, s2 } => writeln!(w, "{MIXED_HEADER}")
                .and_then(|_| mixed_rows(w, "omega1", ops1, s1))
                .and_then(|_| mixed_rows(w, "omega2", ops2, s2)),
            DdState::Primal { ops1, ops2, u1, u2 } => writeln!(w, "{PRIMAL_HEADER}")
                .and_then(|_| primal_rows(w, "omega1", ops1, u1))
                .and_then(|_| primal_rows(w, "omega2", ops2, u2)),
        }
        .map_err(io_err(path))
    })
}

/// Mesh, material and reference shared by the points of one (material, h) pair.
struct Setting {
    material_index: usize,
    refine: usize,
    mesh: TwoScaleMesh,
    material: MaterialField,
    reference: Reference,
}

fn prepare(cfg: &ExperimentConfig, source: &SourceSpec, points: &[SweepPoint]) -> Result<Vec<Setting>, CliError> {
    let cache = ReferenceCache::new(cfg.cache_dir());
    let mats = cfg.material.to_vec();
    let mut keys: Vec<(usize, usize, f64)> = Vec::new();
    for p in points {
        if !keys.iter().any(|k| k.0 == p.material_index && k.1 == p.refine) {
            keys.push((p.material_index, p.refine, p.dd.delta));
        }
    }
    let origin = Path::new("<config>");
    keys.par_iter()
        .map(|&(mi, refine, delta)| {
            let mesh = TwoScaleMesh::new(cfg.mesh.n_coarse, refine)?;
            let spec = mats[mi].spec().map_err(|m| CliError::Config { path: origin.display().to_string(), field: Some(format!("material[{mi}]")), message: m })?;
            let material = MaterialField::build(&mesh, &spec)?;
            let newton = cfg.newton.unwrap_or_default();
            let key = ReferenceKey { formulation: cfg.formulation, mesh: &mesh, material: &material, source, delta, newton: &newton };
            let reference = cache.get_or_compute(&key)?;
            let stem = format!("{}_h{}", mats[mi].tag(mi), mesh.n_fine());
            let dir = cfg.output.join("reference");
            let mpath = dir.join(format!("material_{stem}.csv"));
            write_with(&mpath, |w| Ok(material.write_csv(&mesh, w)?))?;
            write_contact(&dir.join(format!("contact_{stem}.csv")), &reference.contact_trace(delta)?)?;
            write_reference_fields(&dir.join(format!("fields_{stem}.csv")), &reference)?;
            Ok(Setting { material_index: mi, refine, mesh, material, reference })
        })
        .collect()
}

fn run_point(cfg: &ExperimentConfig, source: &SourceSpec, order: usize, p: &SweepPoint, s: &Setting) -> Result<PointSummary, CliError> {
    let out = run_dd(&p.dd, &s.mesh, &s.material, source, RunOptions { reference: Some(&s.reference), ..Default::default() })?;
    let mut report = out.report;
    if !cfg.timing {
        report.records.iter_mut().for_each(|r| r.seconds = 0.0);
    }
    // Stage the point in a hidden directory and rename it into place, so a
    // point directory is either complete or absent.
    let points = cfg.output.join("points");
    let dir = points.join(format!(".{}.partial", p.tag));
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
    }
    write_with(&dir.join("iterations.csv"), |w| Ok(report.write_csv(w)?))?;
    write_contact(&dir.join("contact.csv"), &out.state.contact_trace(p.dd.delta)?)?;
    write_state_fields(&dir.join("fields.csv"), &out.state)?;
    let summary = PointSummary {
        order,
        tag: p.tag.clone(),
        material: p.material_tag.clone(),
        n_fine: s.mesh.n_fine(),
        robin_label: p.robin_label.clone(),
        osly: p.osly,
        tol: p.dd.tol,
        delta: p.dd.delta,
        result: report.summary(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    let target = points.join(&p.tag);
    if target.exists() {
        std::fs::remove_dir_all(&target).map_err(io_err(&target))?;
    }
    std::fs::rename(&dir, &target).map_err(io_err(&target))?;
    Ok(summary)
}

/// Runs every sweep point of `cfg` and writes tables. Points that hit
/// `max_iter` are reported as unconverged, not as errors.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult, CliError> {
    let source = cfg.source.spec()?;
    let points = cfg.expand()?;
    std::fs::create_dir_all(&cfg.output).map_err(io_err(&cfg.output))?;
    write_json(&cfg.output.join("config.resolved.json"), cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::Data { path: "<thread pool>".into(), message: e.to_string() })?;
    let summaries = pool.install(|| -> Result<Vec<PointSummary>, CliError> {
        let settings = prepare(cfg, &source, &points)?;
        points
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let s = settings
                    .iter()
                    .find(|s| s.material_index == p.material_index && s.refine == p.refine)
                    .expect("every point has a prepared setting");
                run_point(cfg, &source, i, p, s)
            })
            .collect()
    })?;
    tables::write_tables(&cfg.output, &summaries)?;
    Ok(RunResult { output: cfg.output.clone(), points: summaries })
}

/// Reads `points/*/summary.json` under `dir`, ordered by sweep position.
pub fn read_summaries(dir: &Path) -> Result<Vec<PointSummary>, CliError> {
    let pdir = dir.join("points");
    let mut out = Vec::new();
    for entry in std::fs::read_dir(&pdir).map_err(io_err(&pdir))? {
        let d = entry.map_err(io_err(&pdir))?.path();
        let path = d.join("summary.json");
        if d.file_name().and_then(|n| n.to_str()).is_none_or(|n| n.starts_with('.')) || !path.exists() {
            continue;
        }
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let s: PointSummary = serde_json::from_str(&text).map_err(|e| CliError::Data { path: path.display().to_string(), message: e.to_string() })?;
        out.push(s);
    }
    if out.is_empty() {
        return Err(CliError::Data { path: pdir.display().to_string(), message: "no point summaries found".into() });
    }
    out.sort_by_key(|s| s.order);
    Ok(out)
}
