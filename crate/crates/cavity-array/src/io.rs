//! CSV and JSON artifact writers.
//!
//! Numeric formatting is fixed (`{:.12e}`) so identical runs produce
//! byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{AmplitudePoint, BoxCountTable, FractalFit, ScanPoint};
use crate::propagate::Trajectory;
use crate::Result;

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

/// Write a trajectory as CSV: one row per sample, the time column first.
pub fn write_trajectory_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "t")?;
    for c in &traj.columns {
        write!(w, ",{c}")?;
    }
    writeln!(w)?;
    for (t, row) in traj.times.iter().zip(&traj.rows) {
        write!(w, "{}", fmt(*t))?;
        for v in row {
            write!(w, ",{}", fmt(*v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Write an inversion-time scan: `g, t_inv, censored, error`.
pub fn write_scan_csv(points: &[ScanPoint], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "g,t_inv,censored,error")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{}",
            fmt(p.g),
            p.t_inv.map(fmt).unwrap_or_default(),
            p.censored,
            p.error.clone().unwrap_or_default()
        )?;
    }
    Ok(())
}

/// Write an amplitude scan: `j2, t_analytic, sqrt_max_n3`.
pub fn write_amplitude_csv(points: &[AmplitudePoint], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "j2,t_analytic,sqrt_max_n3")?;
    for p in points {
        writeln!(
            w,
            "{},{},{}",
            fmt(p.j2),
            fmt(p.t_analytic),
            p.sqrt_max_n3.map(fmt).unwrap_or_default()
        )?;
    }
    Ok(())
}

/// Write a box-count table with local slopes: `tau, m, local_slope`.
///
/// The slope column holds the forward difference; the last row leaves it
/// empty.
pub fn write_boxcount_csv(table: &BoxCountTable, fit: &FractalFit, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "tau,m,local_slope")?;
    for (i, (tau, m)) in table.taus.iter().zip(&table.m_values).enumerate() {
        let slope = fit.local_slopes.get(i).map(|s| fmt(*s)).unwrap_or_default();
        writeln!(w, "{},{},{}", fmt(*tau), fmt(*m), slope)?;
    }
    Ok(())
}

/// Serialize any JSON-friendly report next to the CSVs.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

/// Run manifest: the resolved configuration plus output inventory and
/// convergence diagnostics. Re-running from the embedded config must
/// reproduce every listed output byte-for-byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest<C> {
    pub tool_version: String,
    pub config: C,
    /// No stochastic elements exist yet; kept for schema stability.
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
    pub diagnostics: serde_json::Value,
}

impl<C: Serialize> RunManifest<C> {
    pub fn new(config: C, outputs: Vec<String>, diagnostics: serde_json::Value) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seed: None,
            outputs,
            diagnostics,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        write_json(self, &path)?;
        Ok(path)
    }
}
