//! File formats: checkpoints and tasks as JSON with 17-significant-digit
//! decimals (exact f64 round-trip), CSV emission with a config-hash column,
//! and atomic writes (temp file + rename).

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::Deserialize;

use metarkhs_core::net::{LayerSpec, NetworkSpec, ParamVector};
use metarkhs_core::tasks::{Task, TaskMeta};
use metarkhs_core::Vector;

pub const CHECKPOINT_VERSION: u32 = 1;

/// 17 significant digits: enough to reproduce any f64 exactly on parse.
pub fn full_precision(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub spec: NetworkSpec,
    pub params: ParamVector,
    pub config_hash: String,
}

fn layer_json(layer: &LayerSpec) -> String {
    match layer {
        LayerSpec::Dense { fan_in, fan_out } => {
            format!(r#"{{"kind":"dense","fan_in":{fan_in},"fan_out":{fan_out}}}"#)
        }
        LayerSpec::Conv1d { len, kernel_width } => {
            format!(r#"{{"kind":"conv1d","len":{len},"kernel_width":{kernel_width}}}"#)
        }
    }
}

fn params_json(values: &[f64]) -> String {
    let mut out = String::with_capacity(values.len() * 26 + 2);
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&full_precision(*v));
    }
    out.push(']');
    out
}

pub fn checkpoint_to_json(ckpt: &Checkpoint) -> String {
    let layers: Vec<String> = ckpt.spec.layers().iter().map(layer_json).collect();
    format!(
        "{{\"format_version\":{},\"seed\":{},\"config_hash\":\"{}\",\"network\":[{}],\"params\":{}}}",
        CHECKPOINT_VERSION,
        ckpt.seed,
        ckpt.config_hash,
        layers.join(","),
        params_json(ckpt.params.as_slice()),
    )
}

#[derive(Deserialize)]
struct CheckpointDto {
    format_version: u32,
    seed: u64,
    #[serde(default)]
    config_hash: String,
    network: Vec<LayerDto>,
    params: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LayerDto {
    Dense { fan_in: usize, fan_out: usize },
    Conv1d { len: usize, kernel_width: usize },
}

pub fn checkpoint_from_json(text: &str) -> Result<Checkpoint, String> {
    let dto: CheckpointDto =
        serde_json::from_str(text).map_err(|e| format!("checkpoint: {e}"))?;
    if dto.format_version != CHECKPOINT_VERSION {
        return Err(format!(
            "checkpoint: format_version {} unsupported (expected {CHECKPOINT_VERSION})",
            dto.format_version
        ));
    }
    let layers = dto
        .network
        .into_iter()
        .map(|l| match l {
            LayerDto::Dense { fan_in, fan_out } => LayerSpec::Dense { fan_in, fan_out },
            LayerDto::Conv1d { len, kernel_width } => LayerSpec::Conv1d { len, kernel_width },
        })
        .collect();
    let spec = NetworkSpec::from_layers(layers).map_err(|e| format!("checkpoint: {e}"))?;
    if dto.params.len() != spec.param_count() {
        return Err(format!(
            "checkpoint: {} params but the network needs {}",
            dto.params.len(),
            spec.param_count()
        ));
    }
    Ok(Checkpoint {
        seed: dto.seed,
        spec,
        params: ParamVector::from_vec(dto.params),
        config_hash: dto.config_hash,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> io::Result<()> {
    write_atomic(path, &checkpoint_to_json(ckpt))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("checkpoint: cannot read {}: {e}", path.display()))?;
    checkpoint_from_json(&text)
}

// ---------------------------------------------------------------------------
// Task golden files
// ---------------------------------------------------------------------------

fn vectors_json(vs: &[Vector]) -> String {
    let mut out = String::from("[");
    for (i, v) in vs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&params_json(v.as_slice()));
    }
    out.push(']');
    out
}

/// Tasks share the checkpoint text format (17-significant-digit decimals).
pub fn task_to_json(task: &Task) -> String {
    let meta = match &task.meta {
        TaskMeta::Sine { amplitude, phase, noise_sigma } => format!(
            "{{\"kind\":\"sine\",\"amplitude\":{},\"phase\":{},\"noise_sigma\":{}}}",
            full_precision(*amplitude),
            full_precision(*phase),
            full_precision(*noise_sigma)
        ),
        TaskMeta::Blobs { centers, spread } => format!(
            "{{\"kind\":\"blobs\",\"centers\":{},\"spread\":{}}}",
            vectors_json(centers),
            full_precision(*spread)
        ),
        TaskMeta::Custom => "{\"kind\":\"custom\"}".to_string(),
    };
    format!(
        "{{\"format_version\":{CHECKPOINT_VERSION},\"support_x\":{},\"support_y\":{},\"query_x\":{},\"query_y\":{},\"meta\":{}}}",
        vectors_json(&task.support_x),
        vectors_json(&task.support_y),
        vectors_json(&task.query_x),
        vectors_json(&task.query_y),
        meta,
    )
}

#[derive(Deserialize)]
struct TaskDto {
    #[allow(dead_code)]
    format_version: u32,
    support_x: Vec<Vec<f64>>,
    support_y: Vec<Vec<f64>>,
    query_x: Vec<Vec<f64>>,
    query_y: Vec<Vec<f64>>,
    meta: TaskMetaDto,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum TaskMetaDto {
    Sine { amplitude: f64, phase: f64, noise_sigma: f64 },
    Blobs { centers: Vec<Vec<f64>>, spread: f64 },
    Custom,
}

pub fn task_from_json(text: &str) -> Result<Task, String> {
    let dto: TaskDto = serde_json::from_str(text).map_err(|e| format!("task: {e}"))?;
    let vecs = |vs: Vec<Vec<f64>>| vs.into_iter().map(Vector::new).collect::<Vec<_>>();
    Ok(Task {
        support_x: vecs(dto.support_x),
        support_y: vecs(dto.support_y),
        query_x: vecs(dto.query_x),
        query_y: vecs(dto.query_y),
        meta: match dto.meta {
            TaskMetaDto::Sine { amplitude, phase, noise_sigma } => {
                TaskMeta::Sine { amplitude, phase, noise_sigma }
            }
            TaskMetaDto::Blobs { centers, spread } => {
                TaskMeta::Blobs { centers: vecs(centers), spread }
            }
            TaskMetaDto::Custom => TaskMeta::Custom,
        },
    })
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// In-memory CSV assembled row by row and written atomically. Every table
/// carries a config_hash column; C-locale formatting ('.' decimals, ','
/// separators).
pub struct CsvTable {
    header: String,
    rows: Vec<String>,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        Self { header: columns.join(","), rows: Vec::new() }
    }

    pub fn push_row(&mut self, fields: &[String]) {
        self.rows.push(fields.join(","));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.header);
        for row in &self.rows {
            let _ = writeln!(out, "{row}");
        }
        out
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        write_atomic(path, &self.render())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Deterministic decimal rendering for CSV cells (shortest exact f64 form).
pub fn csv_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}
