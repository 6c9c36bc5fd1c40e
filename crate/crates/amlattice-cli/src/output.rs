//! CSV/JSON/binary emission and the run manifest.

use amlattice::protocol::ExperimentResult;
use amlattice::wavefunction::WaveFunction;
use amlattice::{Error, Result, F};
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Everything needed to reproduce a run bit-for-bit, written next to the data.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub jobs: usize,
    pub backend: String,
    pub paper_scale: bool,
    pub outputs: Vec<String>,
    pub wall_clock_s: f64,
    pub started_unix_s: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_meta: Option<serde_json::Value>,
}

impl RunManifest {
    /// Atomic write: temporary file then rename.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let tmp = dir.join(".manifest.json.tmp");
        let data = serde_json::to_string_pretty(self)
            .map_err(|e| Error::numerical("manifest", e.to_string()))?;
        std::fs::write(&tmp, data)?;
        std::fs::rename(&tmp, &path)?;
        Ok(path)
    }
}

pub fn write_csv(path: &Path, header: &str, rows: &[Vec<F>]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{header}")?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
        writeln!(f, "{}", line.join(","))?;
    }
    Ok(())
}

/// Scan points and auxiliary series of an experiment result.
pub fn write_points(dir: &Path, result: &ExperimentResult<F>) -> Result<PathBuf> {
    let path = dir.join("points.csv");
    let mut header = format!("{},{},spread,n_members", result.scan_name, result.observable);
    let mut aligned_aux = Vec::new();
    for (name, series) in &result.aux {
        if series.len() == result.points.len() {
            header.push(',');
            header.push_str(name);
            aligned_aux.push(series);
        }
    }
    let rows: Vec<Vec<F>> = result
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut row = vec![p.scan_value, p.mean, p.spread, p.n_members as F];
            for series in &aligned_aux {
                row.push(series[i]);
            }
            row
        })
        .collect();
    write_csv(&path, &header, &rows)?;
    Ok(path)
}

pub fn write_members(dir: &Path, result: &ExperimentResult<F>) -> Result<Option<PathBuf>> {
    let Some(members) = &result.members else {
        return Ok(None);
    };
    let path = dir.join("members.csv");
    let mut rows = Vec::new();
    for m in members {
        for (i, &t) in m.times.iter().enumerate() {
            rows.push(vec![m.scan_value, m.k0, m.weight, t, m.barycenter_um[i], m.rms_um[i]]);
        }
    }
    write_csv(&path, "scan_value,k0_over_kL,weight,t_s,barycenter_um,rms_um", &rows)?;
    Ok(Some(path))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let data = serde_json::to_string_pretty(value)
        .map_err(|e| Error::numerical("json", e.to_string()))?;
    std::fs::write(path, data)?;
    Ok(())
}

/// Binary snapshot record: n_points (u64 LE), z_min, z_max, time (f64 LE),
/// then n_points (re, im) f64 pairs, row-major.
pub fn append_snapshot(
    f: &mut impl Write,
    wf: &WaveFunction<F>,
    time: F,
) -> std::io::Result<()> {
    let n = wf.amplitudes.len();
    f.write_all(&(n as u64).to_le_bytes())?;
    f.write_all(&wf.grid.z_min().to_le_bytes())?;
    let z_max = wf.grid.z_min() + wf.grid.length();
    f.write_all(&z_max.to_le_bytes())?;
    f.write_all(&time.to_le_bytes())?;
    for a in &wf.amplitudes {
        f.write_all(&a.re.to_le_bytes())?;
        f.write_all(&a.im.to_le_bytes())?;
    }
    Ok(())
}
