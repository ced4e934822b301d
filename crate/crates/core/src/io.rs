//! Trajectory serialization: CSV with 17 significant digits, written
//! atomically (temp file + rename) so partial outputs never appear under the
//! target name.

use crate::chaplygin::ReducedTrajectory;
use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use std::io::Write;
use std::path::Path;

fn fmt(x: f64) -> String {
    format!("{:.16e}", x)
}

/// Write `contents` to `path` via a sibling temp file and atomic rename.
pub fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::config(format!("invalid output path {}", path.display())))?;
    let tmp_name = format!(".{}.tmp.{}", file_name.to_string_lossy(), std::process::id());
    let tmp_path = match dir {
        Some(d) => d.join(&tmp_name),
        None => std::path::PathBuf::from(&tmp_name),
    };
    {
        let mut f = std::fs::File::create(&tmp_path)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp_path, path)?;
    Ok(())
}

/// Full-trajectory CSV: t, q1..qn, v1..vn, p1..pn, lambda1..lambdak,
/// energy, constraint_residual.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.dim();
    let k = traj.multipliers.first().map_or(0, |l| l.len());
    let mut header = String::from("t");
    for name in ["q", "v", "p"] {
        for i in 1..=n {
            header.push_str(&format!(",{name}{i}"));
        }
    }
    for a in 1..=k {
        header.push_str(&format!(",lambda{a}"));
    }
    header.push_str(",energy,constraint_residual\n");

    let mut out = header;
    for i in 0..traj.len() {
        let st = &traj.states[i];
        let mut row = fmt(traj.t[i]);
        for x in st.q.iter().chain(st.v.iter()).chain(st.p.iter()) {
            row.push(',');
            row.push_str(&fmt(*x));
        }
        for a in 0..k {
            row.push(',');
            row.push_str(&fmt(traj.multipliers[i][a]));
        }
        row.push(',');
        row.push_str(&fmt(traj.energy[i]));
        row.push(',');
        row.push_str(&fmt(traj.constraint_residual[i]));
        row.push('\n');
        out.push_str(&row);
    }
    out
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    atomic_write(path, &trajectory_csv(traj))
}

/// Reduced-trajectory CSV: same schema with the group columns omitted and
/// pbar columns in place of full momenta and multipliers. `base_idx` gives
/// the full-space indices of the base coordinates so the q/v column numbers
/// match the full CSV.
pub fn reduced_csv(red: &ReducedTrajectory, base_idx: &[usize]) -> String {
    let m = base_idx.len();
    let mut header = String::from("t");
    for name in ["q", "v"] {
        for &i in base_idx {
            header.push_str(&format!(",{name}{}", i + 1));
        }
    }
    for a in 1..=m {
        header.push_str(&format!(",pbar{a}"));
    }
    header.push_str(",energy,constraint_residual\n");

    let mut out = header;
    for i in 0..red.len() {
        let mut row = fmt(red.t[i]);
        for x in red.r[i].iter().chain(red.vbar[i].iter()).chain(red.pbar[i].iter()) {
            row.push(',');
            row.push_str(&fmt(*x));
        }
        row.push(',');
        row.push_str(&fmt(red.energy[i]));
        // the reduced flow carries no constraints; keep the column for schema
        // compatibility
        row.push_str(",0e0\n");
        out.push_str(&row);
    }
    out
}

pub fn write_reduced_csv(path: &Path, red: &ReducedTrajectory, base_idx: &[usize]) -> Result<()> {
    atomic_write(path, &reduced_csv(red, base_idx))
}

/// Parse a CSV produced by this crate (or anything comma-separated with a
/// header row and float fields).
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::config(format!("{}: empty CSV", path.display())))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| {
            Error::config(format!("{}: line {}: {e}", path.display(), lineno + 2))
        })?;
        if row.len() != header.len() {
            return Err(Error::config(format!(
                "{}: line {}: expected {} fields, got {}",
                path.display(),
                lineno + 2,
                header.len(),
                row.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}
