//! CSV and manifest writers. All floats are written as `{:.12e}` so repeated
//! runs with the same config produce byte-identical files.

use crate::error::Result;
use crate::fields::Density1D;
use crate::lab::config::RunManifest;
use crate::phase::Particle;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

pub fn fmt_row(values: &[f64]) -> String {
    values.iter().map(|&v| fmt(v)).collect::<Vec<_>>().join(",")
}

/// Create the run directory `<out>/<experiment>` and return it.
pub fn run_dir(out: &Path, experiment: &str) -> Result<PathBuf> {
    let dir = out.join(experiment);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Incremental CSV writer: header on creation, one line per row, flushed.
pub struct CsvWriter {
    file: fs::File,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &str) -> Result<Self> {
        let mut file = fs::File::create(path)?;
        writeln!(file, "{header}")?;
        file.flush()?;
        Ok(CsvWriter { file })
    }

    pub fn row(&mut self, values: &[f64]) -> Result<()> {
        writeln!(self.file, "{}", fmt_row(values))?;
        self.file.flush()?;
        Ok(())
    }
}

/// Density snapshot: `x,rho_plus,rho_minus`.
pub fn write_density_csv(path: &Path, plus: &Density1D, minus: &Density1D) -> Result<()> {
    let mut out = String::with_capacity(plus.grid.n * 48);
    out.push_str("x,rho_plus,rho_minus\n");
    for j in 0..plus.grid.n {
        out.push_str(&fmt_row(&[plus.grid.point(j), plus.values[j], minus.values[j]]));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Particle dump: `x1,xi1,xi2,mode,weight` (mode as +-1).
pub fn write_particles_csv(path: &Path, particles: &[Particle], limit: usize) -> Result<()> {
    let mut out = String::new();
    out.push_str("x1,xi1,xi2,mode,weight\n");
    for p in particles.iter().take(limit) {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt(p.point.x.x),
            fmt(p.point.xi.x),
            fmt(p.point.xi.y),
            p.mode.sign() as i32,
            fmt(p.weight)
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}
