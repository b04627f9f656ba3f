//! Pipeline configuration: one JSON document with a section per stage.
//!
//! Any field may be overridden from the command line with a dotted path,
//! e.g. `count.dbscan.eps=0.02`. Overrides are applied to the parsed JSON
//! before it is checked against the schema, so an override of a field that
//! does not exist is rejected like any other unknown field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::count::CountConfig;
use crate::eval::{EvalConfig, SweepConfig};
use crate::export::ExportConfig;
use crate::geom::Vec3;
use crate::scenegen::{CorruptionStep, Intrinsics, SceneSpec};
use crate::train::TrainConfig;
use crate::{rng, Error, Result};

/// Environment variable that replaces `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "FRUITFIELD_OUTPUT_DIR";

/// How the synthetic frames are taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaptureConfig {
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    /// Focal length over image width.
    pub focal_ratio: f64,
    /// Camera distance from the aim point.
    pub distance: f64,
    /// Aim point; the crown center when absent.
    pub look_at: Option<Vec3>,
    /// Ray-marching step used to render the analytic scene.
    pub render_step: f64,
    /// Mask corruptions applied in order after rendering.
    pub corruption: Vec<CorruptionStep>,
}

impl Default for CaptureConfig {
    fn default() -> Self {
        CaptureConfig {
            frames: 60,
            width: 256,
            height: 256,
            focal_ratio: 35.0 / 36.0,
            distance: 1.3,
            look_at: None,
            render_step: 1.0 / 512.0,
            corruption: Vec::new(),
        }
    }
}

impl CaptureConfig {
    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::centered(self.width, self.height, self.focal_ratio)
    }

    pub fn diagnostics(&self, path: &str, out: &mut Vec<String>) {
        let mut bad = |field: &str, msg: &str| out.push(format!("{path}.{field}: {msg}"));
        if self.frames < 1 {
            bad("frames", "must be >= 1");
        }
        if self.width < 1 {
            bad("width", "must be >= 1");
        }
        if self.height < 1 {
            bad("height", "must be >= 1");
        }
        if !(self.focal_ratio > 0.0 && self.focal_ratio.is_finite()) {
            bad("focal_ratio", "must be > 0");
        }
        if !(self.distance > 0.0 && self.distance.is_finite()) {
            bad("distance", "must be > 0");
        }
        if let Some(p) = self.look_at {
            if !p.is_finite() {
                bad("look_at", "must be finite");
            }
        }
        if !(self.render_step > 0.0 && self.render_step.is_finite()) {
            bad("render_step", "must be > 0");
        }
        for (i, c) in self.corruption.iter().enumerate() {
            if !(c.magnitude >= 0.0 && c.magnitude.is_finite()) {
                bad(&format!("corruption[{i}].magnitude"), "must be >= 0");
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Global seed; every random stream is derived from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub scene: SceneSpec,
    pub capture: CaptureConfig,
    pub train: TrainConfig,
    pub export: ExportConfig,
    pub count: CountConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            output_dir: PathBuf::from("out"),
            scene: SceneSpec::default(),
            capture: CaptureConfig::default(),
            train: TrainConfig::default(),
            export: ExportConfig::default(),
            count: CountConfig::default(),
            eval: EvalConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

/// Seeds of the data-generation streams of one run. Training derives its
/// own stream from the global seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub scene: u64,
    pub cameras: u64,
    pub masks: u64,
}

impl PipelineConfig {
    /// Parses a JSON document, applies `key=value` overrides and checks the
    /// result against the schema. Absent fields at any depth take their
    /// defaults. Does not check value invariants; see
    /// [`PipelineConfig::diagnostics`].
    pub fn from_json_str(text: &str, overrides: &[String]) -> Result<Self> {
        let doc: Value = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(vec![format!("<document>: {e}")]))?;
        if !doc.is_object() {
            return Err(Error::InvalidConfig(vec!["<document>: expected a JSON object".into()]));
        }
        let mut value = serde_json::to_value(PipelineConfig::default())?;
        merge(&mut value, doc);
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            Error::InvalidConfig(vec![format!("{path}: {}", e.into_inner())])
        })
    }

    /// Loads a config file; an absent path means all defaults. The output
    /// directory environment variable, when set, wins over the file and the
    /// overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => "{}".to_string(),
        };
        let mut cfg = Self::from_json_str(&text, overrides)?;
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            cfg.output_dir = PathBuf::from(dir);
        }
        Ok(cfg)
    }

    /// Every violated invariant, each prefixed by its dotted field path.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.output_dir.as_os_str().is_empty() {
            out.push("output_dir: must not be empty".into());
        } else if self.output_dir.exists() && !self.output_dir.is_dir() {
            out.push(format!("output_dir: {} exists and is not a directory", self.output_dir.display()));
        }
        self.scene.diagnostics("scene", &mut out);
        self.capture.diagnostics("capture", &mut out);
        self.train.diagnostics("train", &mut out);
        self.export.diagnostics("export", &mut out);
        self.count.diagnostics("count", &mut out);
        self.eval.diagnostics("eval", &mut out);
        self.sweep.diagnostics("sweep", &mut out);
        out
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.diagnostics();
        if d.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(d))
        }
    }

    pub fn seeds(&self) -> Seeds {
        Seeds {
            scene: rng::derive(self.seed, rng::stream::SCENE),
            cameras: rng::derive(self.seed, rng::stream::CAMERAS),
            masks: rng::derive(self.seed, rng::stream::MASKS),
        }
    }

    /// Scene spec with its seed filled in from the global seed.
    pub fn scene_spec(&self) -> SceneSpec {
        SceneSpec {
            seed: self.seeds().scene,
            ..self.scene.clone()
        }
    }

    /// SHA-256 of the canonical JSON form. The output directory is left
    /// out since it cannot change any artifact.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let text = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Recursively overlays `top` on `base`: objects merge key by key, any
/// other value replaces.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Sets `a.b.c=value` in a JSON object tree, creating missing objects.
/// The value is read as JSON when it parses and as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(vec![format!("override `{assignment}`: expected key=value")]))?;
    let key = key.trim_start_matches('-');
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::InvalidConfig(vec![format!("override `{assignment}`: malformed key")]));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = match node {
            Value::Object(m) => m,
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut().unwrap()
            }
            _ => {
                return Err(Error::InvalidConfig(vec![format!(
                    "{}: cannot set a field inside a non-object value",
                    parts[..i].join(".")
                )]))
            }
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("key has at least one part")
}
