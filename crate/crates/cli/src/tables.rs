//! Result tables and combined contact traces.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use crate::error::{io_err, CliError};
use crate::run::{atomic_write, PointSummary};

fn sci(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2e}")).unwrap_or_else(|| "-".into())
}

/// Header and formatted rows. The material column appears only when several
/// materials are present, the oversampling column only for multiscale runs.
pub fn table_rows(points: &[PointSummary]) -> (Vec<String>, Vec<Vec<String>>) {
    let many_materials = points.iter().any(|p| p.material != points[0].material);
    let has_osly = points.iter().any(|p| p.osly.is_some());
    let mut header = vec![];
    if many_materials {
        header.push("material".to_string());
    }
    header.extend(["h".to_string(), "β".to_string()]);
    if has_osly {
        header.push("osly".into());
    }
    header.extend(["Iterations", "Residual error", "e_σ", "e_u", "Converged"].map(String::from));
    let rows = points
        .iter()
        .map(|p| {
            let mut r = vec![];
            if many_materials {
                r.push(p.material.clone());
            }
            r.push(format!("1/{}", p.n_fine));
            r.push(p.robin_label.clone());
            if has_osly {
                r.push(p.osly.map(|m| m.to_string()).unwrap_or_default());
            }
            r.push(p.result.iterations.to_string());
            r.push(sci(Some(p.result.residual)));
            r.push(sci(p.result.e_sigma));
            r.push(sci(p.result.e_u));
            r.push(if p.result.converged { "yes" } else { "no" }.into());
            r
        })
        .collect();
    (header, rows)
}

pub fn markdown(points: &[PointSummary]) -> String {
    let (header, rows) = table_rows(points);
    let mut s = format!("| {} |\n|{}\n", header.join(" | "), "---|".repeat(header.len()));
    for r in rows {
        s.push_str(&format!("| {} |\n", r.join(" | ")));
    }
    s
}

/// CSV with full-precision values.
pub fn csv(points: &[PointSummary]) -> String {
    let mut s = String::from("tag,material,n_fine,h,robin_label,robin,osly,tol,delta,iterations,converged,residual,e_sigma,e_u,max_conservation,seconds\n");
    let o = |v: Option<f64>| v.map(|x| format!("{x:.10e}")).unwrap_or_default();
    for p in points {
        let r = &p.result;
        s.push_str(&format!(
            "{},{},{},{:.10e},{},{:.10e},{},{:e},{:.10e},{},{},{:.10e},{},{},{},{:.6}\n",
            p.tag,
            p.material,
            p.n_fine,
            r.h,
            p.robin_label,
            r.robin,
            p.osly.map(|m| m.to_string()).unwrap_or_default(),
            p.tol,
            p.delta,
            r.iterations,
            r.converged,
            r.residual,
            o(r.e_sigma),
            o(r.e_u),
            o(r.max_conservation),
            r.seconds
        ));
    }
    s
}

pub fn write_tables(dir: &Path, points: &[PointSummary]) -> Result<(), CliError> {
    atomic_write(&dir.join("table.csv"), csv(points).as_bytes())?;
    atomic_write(&dir.join("table.md"), markdown(points).as_bytes())
}

fn contact_files(dir: &Path) -> Result<Vec<(String, PathBuf)>, CliError> {
    let mut out = vec![];
    let rdir = dir.join("reference");
    if rdir.is_dir() {
        for e in std::fs::read_dir(&rdir).map_err(io_err(&rdir))? {
            let p = e.map_err(io_err(&rdir))?.path();
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            if let Some(stem) = name.strip_prefix("contact_").and_then(|n| n.strip_suffix(".csv")) {
                out.push((format!("reference_{stem}"), p));
            }
        }
    }
    let pdir = dir.join("points");
    if pdir.is_dir() {
        for e in std::fs::read_dir(&pdir).map_err(io_err(&pdir))? {
            let d = e.map_err(io_err(&pdir))?.path();
            let name = d.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            let p = d.join("contact.csv");
            if !name.starts_with('.') && p.exists() {
                out.push((name, p));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Concatenates every contact trace under `dir` into
/// `contact_traces.csv` with a leading `source` column.
pub fn combine_traces(dir: &Path) -> Result<PathBuf, CliError> {
    let files = contact_files(dir)?;
    if files.is_empty() {
        return Err(CliError::Data { path: dir.display().to_string(), message: "no contact traces found".into() });
    }
    let target = dir.join("contact_traces.csv");
    let mut out = String::from("source,y,u_c,sigma_c\n");
    for (label, path) in files {
        let mut lines = BufReader::new(File::open(&path).map_err(io_err(&path))?).lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == "y,u_c,sigma_c" => {}
            _ => return Err(CliError::Data { path: path.display().to_string(), message: "expected header y,u_c,sigma_c".into() }),
        }
        for line in lines {
            let line = line.map_err(io_err(&path))?;
            if !line.trim().is_empty() {
                out.push_str(&format!("{label},{line}\n"));
            }
        }
    }
    atomic_write(&target, out.as_bytes())?;
    Ok(target)
}
