//! Artifact persistence: datasets, checkpoints, CSV reports, configuration
//! snapshots and the standalone demonstration format.
//!
//! Every writer goes through [`atomic_write`], so a crashed command never
//! leaves a truncated artifact behind.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::Tensor;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::geometry::{ObjectKind, Point2, Scene, SceneObject, Trajectory};
use crate::pipeline::{Dataset, DemoRecord, SceneRecord};
use crate::scenegen::UserType;
use crate::specfit::LabeledDemo;
use crate::specmodel::{Architecture, LossWeights, SpecModel, TrainMeta};

pub const DATASET_FORMAT: &str = "demospec-dataset";
pub const DATASET_VERSION: u32 = 1;
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DSPECKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const CONFIG_SNAPSHOT: &str = "config.toml";

/// Write to a sibling temp file, then rename over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn read_existing(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    Ok(std::fs::read(path)?)
}

fn corrupt(what: &'static str, reason: impl Into<String>) -> Error {
    Error::Corrupt { what, reason: reason.into() }
}

/// Writes `config.toml` into `dir`.
pub fn write_config_snapshot(dir: &Path, cfg: &RunConfig) -> Result<()> {
    atomic_write(&dir.join(CONFIG_SNAPSHOT), cfg.to_toml()?.as_bytes())
}

// ---------------------------------------------------------------- datasets

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum DatasetLine {
    Header { format: String, version: u32, seed: u64, scenes: usize, demos: usize },
    Scene(SceneRecord),
    Demo(DemoRecord),
    Checksum { sha256: String },
}

pub fn dataset_to_string(ds: &Dataset) -> Result<String> {
    let mut body = String::new();
    let mut push = |line: &DatasetLine| -> Result<()> {
        body.push_str(&serde_json::to_string(line)?);
        body.push('\n');
        Ok(())
    };
    push(&DatasetLine::Header {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        seed: ds.seed,
        scenes: ds.scenes.len(),
        demos: ds.demos.len(),
    })?;
    for s in &ds.scenes {
        push(&DatasetLine::Scene(s.clone()))?;
    }
    for d in &ds.demos {
        push(&DatasetLine::Demo(d.clone()))?;
    }
    let sha256 = hex::encode(Sha256::digest(body.as_bytes()));
    body.push_str(&serde_json::to_string(&DatasetLine::Checksum { sha256 })?);
    body.push('\n');
    Ok(body)
}

pub fn dataset_from_str(text: &str) -> Result<Dataset> {
    let what = "dataset";
    let body_end = text.trim_end_matches('\n').rfind('\n').map(|i| i + 1).ok_or_else(|| corrupt(what, "too short"))?;
    let (body, trailer) = text.split_at(body_end);
    let DatasetLine::Checksum { sha256 } = serde_json::from_str(trailer.trim_end())? else {
        return Err(corrupt(what, "missing checksum line"));
    };
    if hex::encode(Sha256::digest(body.as_bytes())) != sha256 {
        return Err(corrupt(what, "checksum mismatch"));
    }
    let mut lines = body.lines();
    let header: DatasetLine = serde_json::from_str(lines.next().ok_or_else(|| corrupt(what, "empty"))?)?;
    let DatasetLine::Header { format, version, seed, scenes: n_scenes, demos: n_demos } = header else {
        return Err(corrupt(what, "first line is not a header"));
    };
    if format != DATASET_FORMAT || version != DATASET_VERSION {
        return Err(corrupt(what, format!("unsupported format {format} v{version}")));
    }
    let mut ds = Dataset { seed, scenes: Vec::new(), demos: Vec::new() };
    for line in lines {
        match serde_json::from_str(line)? {
            DatasetLine::Scene(s) => ds.scenes.push(s),
            DatasetLine::Demo(d) => ds.demos.push(d),
            _ => return Err(corrupt(what, "unexpected header or checksum line")),
        }
    }
    if ds.scenes.len() != n_scenes || ds.demos.len() != n_demos {
        return Err(corrupt(what, "record counts disagree with header"));
    }
    Ok(ds)
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    atomic_write(path, dataset_to_string(ds)?.as_bytes())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = read_existing(path)?;
    let text = String::from_utf8(bytes).map_err(|_| corrupt("dataset", "not UTF-8"))?;
    dataset_from_str(&text)
}

// ------------------------------------------------------------- checkpoints

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    user_type: UserType,
    arch: Architecture,
    weights: LossWeights,
    meta: TrainMeta,
}

/// Layout: magic, `u32` version, `u32` metadata length, metadata JSON,
/// `u32` tensor count, per tensor `u32` rank and `u64` dims, then all tensor
/// data as little-endian `f64`, then the SHA-256 of everything before it.
pub fn checkpoint_to_bytes(model: &SpecModel) -> Result<Vec<u8>> {
    let meta = serde_json::to_vec(&CheckpointMeta {
        user_type: model.user_type,
        arch: model.arch.clone(),
        weights: model.weights,
        meta: model.meta.clone(),
    })?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for t in &model.params {
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for t in &model.params {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("checkpoint", "truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<SpecModel> {
    let what = "checkpoint";
    if bytes.len() < CHECKPOINT_MAGIC.len() + 32 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(corrupt(what, "bad magic"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt(what, "checksum mismatch"));
    }
    let mut c = Cursor { buf: body, pos: 8 };
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(corrupt(what, format!("unsupported version {version}")));
    }
    let meta_len = c.u32()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(c.take(meta_len)?)?;
    let n = c.u32()? as usize;
    let mut shapes = Vec::with_capacity(n);
    for _ in 0..n {
        let rank = c.u32()? as usize;
        shapes.push((0..rank).map(|_| c.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?);
    }
    let expected: Vec<Vec<usize>> = meta.arch.param_shapes().into_iter().map(|(_, s)| s).collect();
    if shapes != expected {
        return Err(corrupt(what, "shape table does not match the architecture"));
    }
    let mut params = Vec::with_capacity(n);
    for shape in shapes {
        let numel: usize = shape.iter().product();
        let data = c.take(numel * 8)?.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        params.push(Tensor::new(shape, data)?);
    }
    if c.pos != body.len() {
        return Err(corrupt(what, "trailing bytes"));
    }
    Ok(SpecModel { user_type: meta.user_type, arch: meta.arch, weights: meta.weights, params, meta: meta.meta })
}

pub fn write_checkpoint(path: &Path, model: &SpecModel) -> Result<()> {
    atomic_write(path, &checkpoint_to_bytes(model)?)
}

pub fn read_checkpoint(path: &Path) -> Result<SpecModel> {
    checkpoint_from_bytes(&read_existing(path)?)
}

// --------------------------------------------------------------------- CSV

pub fn csv_to_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits UTF-8"))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    atomic_write(path, csv_to_string(rows)?.as_bytes())
}

/// A numeric grid as CSV: one line per row, bottom row (`y` smallest) first.
pub fn grid_to_csv(values: &[f64], cols: usize) -> String {
    let mut s = String::new();
    for row in values.chunks(cols) {
        let line: Vec<String> = row.iter().map(|v| if v.is_infinite() { "inf".to_string() } else { v.to_string() }).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

// ----------------------------------------------------- demonstration import

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportObject {
    pub kind: ObjectKind,
    pub x: f64,
    pub y: f64,
    #[serde(default = "default_radius")]
    pub radius: f64,
}

fn default_radius() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportScene {
    #[serde(default = "default_side")]
    pub width: f64,
    #[serde(default = "default_side")]
    pub height: f64,
    pub objects: Vec<ImportObject>,
}

fn default_side() -> f64 {
    100.0
}

/// One line of the standalone demonstration format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportRecord {
    pub scene: ImportScene,
    pub trajectory: Vec<[f64; 2]>,
    pub valid: bool,
}

impl ImportRecord {
    pub fn from_demo(d: &LabeledDemo) -> Self {
        ImportRecord {
            scene: ImportScene {
                width: d.scene.width,
                height: d.scene.height,
                objects: d
                    .scene
                    .objects
                    .iter()
                    .map(|o| ImportObject { kind: o.kind, x: o.center.x, y: o.center.y, radius: o.radius })
                    .collect(),
            },
            trajectory: d.trajectory.points.iter().map(|p| [p.x, p.y]).collect(),
            valid: d.valid,
        }
    }

    pub fn into_demo(self) -> Result<LabeledDemo> {
        let pts: Vec<Point2> = self.trajectory.iter().map(|&[x, y]| Point2::new(x, y)).collect();
        if pts.len() < 2 {
            return Err(Error::InvalidInput("trajectory needs at least 2 points".into()));
        }
        let numbers = pts.iter().all(Point2::is_finite)
            && self.scene.objects.iter().all(|o| o.x.is_finite() && o.y.is_finite() && o.radius.is_finite() && o.radius > 0.0)
            && self.scene.width > 0.0
            && self.scene.height > 0.0;
        if !numbers {
            return Err(Error::InvalidInput("non-finite or non-positive value in record".into()));
        }
        let mut scene = Scene::empty(self.scene.width, self.scene.height, pts[0], pts[pts.len() - 1]);
        scene.objects =
            self.scene.objects.iter().map(|o| SceneObject::new(o.kind, Point2::new(o.x, o.y), o.radius)).collect();
        Ok(LabeledDemo { scene, trajectory: Trajectory::new(pts), valid: self.valid })
    }
}

/// Parses the standalone format; errors name the offending line.
pub fn parse_demo_lines(text: &str) -> Result<Vec<LabeledDemo>> {
    let mut out = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw).trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let rec: ImportRecord = serde_json::from_str(line)
            .map_err(|e| Error::InvalidInput(format!("line {}: {e}", i + 1)))?;
        out.push(rec.into_demo().map_err(|e| Error::InvalidInput(format!("line {}: {e}", i + 1)))?);
    }
    if out.is_empty() {
        return Err(Error::Empty("demonstration file"));
    }
    Ok(out)
}

pub fn read_demo_file(path: &Path) -> Result<Vec<LabeledDemo>> {
    let bytes = read_existing(path)?;
    parse_demo_lines(&String::from_utf8(bytes).map_err(|_| Error::InvalidInput("demonstration file is not UTF-8".into()))?)
}

pub fn demo_lines(demos: &[LabeledDemo]) -> Result<String> {
    let mut s = String::new();
    for d in demos {
        s.push_str(&serde_json::to_string(&ImportRecord::from_demo(d))?);
        s.push('\n');
    }
    Ok(s)
}

pub fn write_demo_file(path: &Path, demos: &[LabeledDemo]) -> Result<()> {
    atomic_write(path, demo_lines(demos)?.as_bytes())
}
