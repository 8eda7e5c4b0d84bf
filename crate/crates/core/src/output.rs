//! Result files: CSV series and field snapshots plus a JSON summary per run.
//!
//! Every CSV row carries the configuration hash. CSV contents depend only on the inputs;
//! the wall-clock timestamp appears in `summary.json` alone.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::cell::CellDesign;
use crate::error::{Error, Result};
use crate::protocol::{normalized_current_profile, SimulationResult, StepMode};
use crate::sim::{Mesh, Termination};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Serialize)]
struct SeriesRow<'a> {
    config_hash: &'a str,
    step: usize,
    mode: StepMode,
    time_s: f64,
    step_time_s: f64,
    voltage_v: f64,
    current_a: f64,
    capacity_mah_cm2: f64,
}

#[derive(Debug, Serialize)]
struct FieldRow<'a> {
    config_hash: &'a str,
    step: usize,
    snapshot: usize,
    time_s: f64,
    node: usize,
    x_um: f64,
    layer: &'a str,
    c_e_mol_m3: f64,
    phi_e_v: f64,
    c_surf_mol_m3: Option<f64>,
    j_norm: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ProbeRow<'a> {
    config_hash: &'a str,
    step: usize,
    snapshot: usize,
    time_s: f64,
    probe: &'a str,
    x_um: f64,
    c_e_mol_m3: f64,
    phi_e_v: f64,
    j_norm: f64,
}

/// Writes the files of one result bundle into a directory.
pub struct BundleWriter {
    dir: PathBuf,
    hash: String,
    written: Vec<PathBuf>,
}

/// Electrode node indices (relative to the electrode start) of the separator-side,
/// middle and current-collector-side probes.
pub fn probe_nodes(mesh: &Mesh) -> [(&'static str, usize); 3] {
    let start = mesh.electrode_start();
    let n = mesh.len() - start;
    let length = mesh.total_length() - mesh.regions[0].x_hi;
    let mid_x = mesh.regions[0].x_hi + 0.5 * length;
    let mid = (0..n)
        .min_by(|&a, &b| {
            (mesh.x[start + a] - mid_x)
                .abs()
                .total_cmp(&(mesh.x[start + b] - mid_x).abs())
        })
        .unwrap_or(0);
    [("sep", 0), ("mid", mid), ("cc", n - 1)]
}

impl BundleWriter {
    pub fn create(dir: impl AsRef<Path>, config_hash: impl Into<String>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            hash: config_hash.into(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    /// Writes any serializable rows as a CSV, prefixing a `config_hash` column.
    pub fn write_table<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Tagged<'a, T> {
            config_hash: &'a str,
            #[serde(flatten)]
            row: &'a T,
        }
        let path = self.path(name);
        // Flattened structs go through serde's map path, which csv cannot write; go via JSON.
        let mut w = csv::Writer::from_path(&path)?;
        let mut header: Option<Vec<String>> = None;
        for row in rows {
            let value = serde_json::to_value(Tagged {
                config_hash: &self.hash,
                row,
            })
            .map_err(|e| Error::Io(e.to_string()))?;
            let obj = value
                .as_object()
                .ok_or_else(|| Error::Io("table rows must be structs".into()))?;
            let keys: Vec<String> = obj.keys().cloned().collect();
            match &header {
                None => {
                    w.write_record(&keys)?;
                    header = Some(keys);
                }
                Some(h) if *h != keys => {
                    return Err(Error::Io(format!("{name}: rows have differing columns")))
                }
                Some(_) => {}
            }
            w.write_record(obj.values().map(csv_cell))?;
        }
        w.flush()?;
        Ok(path)
    }

    /// Voltage, current and capacity for every accepted step of every protocol step.
    pub fn write_series(&mut self, name: &str, result: &SimulationResult) -> Result<PathBuf> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path)?;
        for step in &result.steps {
            for s in &step.run.samples {
                w.serialize(SeriesRow {
                    config_hash: &self.hash,
                    step: step.index,
                    mode: step.mode,
                    time_s: step.start_time + s.time,
                    step_time_s: s.time,
                    voltage_v: s.voltage,
                    current_a: s.current,
                    capacity_mah_cm2: s.capacity,
                })?;
            }
        }
        w.flush()?;
        Ok(path)
    }

    /// Electrolyte and particle-surface fields at every node of every snapshot, and the
    /// three probe series.
    pub fn write_fields(
        &mut self,
        fields: &str,
        probes: &str,
        design: &CellDesign,
        mesh: &Mesh,
        result: &SimulationResult,
    ) -> Result<(PathBuf, PathBuf)> {
        let fields_path = self.path(fields);
        let probes_path = self.path(probes);
        let mut fw = csv::Writer::from_path(&fields_path)?;
        let mut pw = csv::Writer::from_path(&probes_path)?;
        let start = mesh.electrode_start();
        let probe_at = probe_nodes(mesh);
        for step in &result.steps {
            let current = step.run.samples.first().map_or(0.0, |s| s.current) / design.area;
            for (k, snap) in step.run.snapshots.iter().enumerate() {
                let j_norm = if current != 0.0 {
                    Some(normalized_current_profile(design, mesh, &snap.j, current)?)
                } else {
                    None
                };
                for i in 0..mesh.len() {
                    let e = i.checked_sub(start);
                    fw.serialize(FieldRow {
                        config_hash: &self.hash,
                        step: step.index,
                        snapshot: k,
                        time_s: step.start_time + snap.time,
                        node: i,
                        x_um: mesh.x[i] * 1e6,
                        layer: &design.layers[mesh.layer_of(i)].name,
                        c_e_mol_m3: snap.c_e[i],
                        phi_e_v: snap.phi_e[i],
                        c_surf_mol_m3: e.map(|e| snap.c_surf[e]),
                        j_norm: e.zip(j_norm.as_ref()).map(|(e, j)| j[e]),
                    })?;
                }
                if let Some(j) = &j_norm {
                    for (probe, e) in probe_at {
                        pw.serialize(ProbeRow {
                            config_hash: &self.hash,
                            step: step.index,
                            snapshot: k,
                            time_s: step.start_time + snap.time,
                            probe,
                            x_um: mesh.x[start + e] * 1e6,
                            c_e_mol_m3: snap.c_e[start + e],
                            phi_e_v: snap.phi_e[start + e],
                            j_norm: j[e],
                        })?;
                    }
                }
            }
        }
        fw.flush()?;
        pw.flush()?;
        Ok((fields_path, probes_path))
    }

    /// Pretty-printed JSON document with run metadata merged in.
    pub fn write_summary<T: Serialize>(&mut self, name: &str, summary: &T) -> Result<PathBuf> {
        let path = self.path(name);
        let doc = serde_json::json!({
            "metadata": {
                "config_hash": self.hash,
                "tool_version": TOOL_VERSION,
                "timestamp_unix": std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map_or(0, |d| d.as_secs()),
            },
            "summary": summary,
        });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(&path, text + "\n")?;
        Ok(path)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, text)?;
        Ok(path)
    }
}

fn csv_cell(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Null => String::new(),
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Array(a) => a.iter().map(csv_cell).collect::<Vec<_>>().join(";"),
        other => other.to_string(),
    }
}

/// Per-step summary row for a protocol run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSummary {
    pub step: usize,
    pub mode: StepMode,
    pub c_rate: f64,
    pub capacity_mah_cm2: f64,
    pub duration_min: f64,
    pub end_voltage_v: f64,
    pub termination: Termination,
    pub min_c_e_mol_m3: f64,
    pub min_c_e_x_um: f64,
    pub peak_phi_e_v: f64,
    pub depleted: bool,
}

pub fn step_summaries(result: &SimulationResult) -> Vec<StepSummary> {
    result
        .steps
        .iter()
        .map(|s| StepSummary {
            step: s.index,
            mode: s.mode,
            c_rate: s.c_rate,
            capacity_mah_cm2: s.capacity(),
            duration_min: s.run.duration() / 60.0,
            end_voltage_v: s.run.final_state.voltage,
            termination: s.run.termination,
            min_c_e_mol_m3: s.run.diagnostics.min_c_e,
            min_c_e_x_um: s.run.diagnostics.min_c_e_x * 1e6,
            peak_phi_e_v: s.run.diagnostics.peak_phi_e,
            depleted: s.run.diagnostics.depletion.is_some(),
        })
        .collect()
}
