//! Atomic artifact writers: each file is written to a temporary sibling and renamed into place.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use ufd_core::trajectory::write_density_csv;
use ufd_core::{Trajectory, Weight};

use crate::error::CliError;

pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut out = BufWriter::new(fs::File::create(&tmp)?);
        body(&mut out)?;
        out.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| CliError::Io(e.into()))?;
        writeln!(w)?;
        Ok(())
    })
}

pub fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
    write_atomic(path, |w| {
        writeln!(w, "{}", header.join(","))?;
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    })
}

fn core_io(e: ufd_core::Error) -> CliError {
    CliError::Io(std::io::Error::other(e.to_string()))
}

/// `trajectory.csv` plus one `density_<step>.csv` per recorded sample; returns the paths written.
pub fn write_trajectory(dir: &Path, prefix: &str, traj: &Trajectory, w: &Weight) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    let path = dir.join(format!("{prefix}trajectory.csv"));
    write_atomic(&path, |out| traj.write_csv(out).map_err(core_io))?;
    written.push(path);
    for s in &traj.samples {
        let path = dir.join(format!("{prefix}density_{:06}.csv", s.diagnostics.step));
        write_atomic(&path, |out| write_density_csv(out, &s.density, w).map_err(core_io))?;
        written.push(path);
    }
    Ok(written)
}

/// Prints to standard output, ignoring a closed pipe.
pub fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.write_all(b"\n"));
}
