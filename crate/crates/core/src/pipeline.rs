//! Stage runners. Each stage reads its inputs from the output directory and
//! writes its artifacts there; `e2e` runs them all in order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::count::{self, CountReport};
use crate::eval::{self, EvalReport};
use crate::export::{self, FruitPointCloud};
use crate::field::{read_checkpoint, write_checkpoint, FieldGrid};
use crate::scenegen::{self, GroundTruth, PosedFrame, Scene};
use crate::train;
use crate::{Error, Result};

pub const FRAMES_DIR: &str = "frames";
pub const FIELD_FILE: &str = "field.bin";
pub const LOSS_FILE: &str = "loss.csv";
pub const PLY_FILE: &str = "fruits.ply";
pub const COUNT_FILE: &str = "count_report.json";
pub const EVAL_FILE: &str = "eval_report.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Synth,
    Train,
    Export,
    Count,
    Eval,
    E2e,
    Sweep,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Train => "train",
            Stage::Export => "export",
            Stage::Count => "count",
            Stage::Eval => "eval",
            Stage::E2e => "e2e",
            Stage::Sweep => "sweep",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        [
            Stage::Synth,
            Stage::Train,
            Stage::Export,
            Stage::Count,
            Stage::Eval,
            Stage::E2e,
            Stage::Sweep,
        ]
        .into_iter()
        .find(|st| st.name() == s)
    }
}

/// Written after every run: what produced the directory's artifacts and
/// their SHA-256 checksums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: Stage,
    pub config_sha256: String,
    pub seed: u64,
    /// Path relative to the output directory → checksum.
    pub artifacts: BTreeMap<String, String>,
}

/// Runs stages against one configuration. Progress lines go to stderr
/// unless quiet.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub quiet: bool,
}

impl Pipeline {
    /// Validates the configuration up front.
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Pipeline { config, quiet: false })
    }

    pub fn quiet(mut self, quiet: bool) -> Self {
        self.quiet = quiet;
        self
    }

    fn log(&self, msg: &str) {
        if !self.quiet {
            eprintln!("[fruitfield] {msg}");
        }
    }

    pub fn dir(&self) -> &Path {
        &self.config.output_dir
    }

    /// Runs one stage and rewrites the manifest.
    pub fn run(&self, stage: Stage) -> Result<Manifest> {
        let dir = self.dir().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        match stage {
            Stage::Synth => self.synth()?,
            Stage::Train => self.train()?,
            Stage::Export => self.export()?,
            Stage::Count => {
                self.count()?;
            }
            Stage::Eval => {
                self.eval()?;
            }
            Stage::E2e => {
                self.synth()?;
                self.train()?;
                self.export()?;
                self.count()?;
                self.eval()?;
            }
            Stage::Sweep => self.sweep()?,
        }
        let manifest = self.manifest(stage)?;
        scenegen::write_json(&dir.join(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    }

    pub fn synth(&self) -> Result<()> {
        let t = Instant::now();
        let scene = build_scene(&self.config)?;
        let frames = capture(&self.config, &scene, self.config.capture.frames)?;
        scenegen::write_frames(self.dir(), &frames)?;
        scenegen::write_ground_truth(self.dir(), &GroundTruth::from_scene(&scene))?;
        self.log(&format!(
            "synth: {} fruits, {} frames in {:.1}s",
            scene.fruits.len(),
            frames.len(),
            t.elapsed().as_secs_f64()
        ));
        Ok(())
    }

    pub fn train(&self) -> Result<()> {
        require(self.dir(), scenegen::TRANSFORMS_FILE, Stage::Synth)?;
        let frames = scenegen::read_frames(self.dir())?;
        let t = Instant::now();
        let every = (self.config.train.iterations / 10).max(1);
        let grid = FieldGrid::from_spec(&self.config.train.grid)?;
        let out = train::train_from(grid, &frames, &self.config.train, self.config.seed, |i, l| {
            if i % every == 0 {
                self.log(&format!(
                    "train: iteration {i}: photo {:.5} sem {:.5} ({:.0}s)",
                    l.l_photo,
                    l.l_sem,
                    t.elapsed().as_secs_f64()
                ));
            }
        })?;
        write_checkpoint(&out.grid, &self.dir().join(FIELD_FILE))?;
        train::write_loss_csv(&self.dir().join(LOSS_FILE), &out.losses)
    }

    pub fn export(&self) -> Result<()> {
        let path = require(self.dir(), FIELD_FILE, Stage::Train)?;
        let grid = read_checkpoint(&path)?;
        let cloud = export::sample_volume(&grid, &self.config.export)?;
        self.log(&format!("export: {} points", cloud.len()));
        export::write_ply(&cloud, &self.dir().join(PLY_FILE))
    }

    pub fn count(&self) -> Result<CountReport> {
        let path = require(self.dir(), PLY_FILE, Stage::Export)?;
        let cloud = export::read_ply(&path)?;
        let report = count::count(&cloud, &self.config.count)?;
        self.log(&format!(
            "count: {} fruits ({} single, {} multi, {} promoted)",
            report.total, report.labels.single, report.labels.multi, report.labels.tiny_promoted
        ));
        scenegen::write_json(&self.dir().join(COUNT_FILE), &report)?;
        Ok(report)
    }

    pub fn eval(&self) -> Result<EvalReport> {
        let count_path = require(self.dir(), COUNT_FILE, Stage::Count)?;
        let gt_path = require(self.dir(), scenegen::GT_FILE, Stage::Synth)?;
        let report: CountReport = scenegen::read_json(&count_path)?;
        let gt: GroundTruth = scenegen::read_json(&gt_path)?;
        let e = evaluate(&self.config, &report.fruit_centers, &gt)?;
        self.log(&format!(
            "eval: P {:.3} R {:.3} F1 {:.3} (count {} / gt {})",
            e.precision, e.recall, e.f1, report.total, gt.count
        ));
        scenegen::write_json(&self.dir().join(EVAL_FILE), &e)?;
        Ok(e)
    }

    pub fn sweep(&self) -> Result<()> {
        let rows = eval::frame_sweep(&self.config, |msg| self.log(msg))?;
        eval::write_sweep_csv(&self.dir().join(SWEEP_FILE), &rows)
    }

    fn manifest(&self, stage: Stage) -> Result<Manifest> {
        Ok(Manifest {
            stage,
            config_sha256: self.config.hash(),
            seed: self.config.seed,
            artifacts: checksums(self.dir())?,
        })
    }
}

/// Path of an upstream artifact, or the error naming the stage that makes it.
fn require(dir: &Path, name: &str, producer: Stage) -> Result<PathBuf> {
    let p = dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::MissingArtifact {
            path: p,
            stage: producer.name(),
        })
    }
}

/// Checksums of every known artifact present in `dir`, frames included.
pub fn checksums(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut names: Vec<String> = [
        scenegen::TRANSFORMS_FILE,
        scenegen::GT_FILE,
        FIELD_FILE,
        LOSS_FILE,
        PLY_FILE,
        COUNT_FILE,
        EVAL_FILE,
        SWEEP_FILE,
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let frames = dir.join(FRAMES_DIR);
    if frames.is_dir() {
        for entry in fs::read_dir(&frames).map_err(|e| Error::io(&frames, e))? {
            let entry = entry.map_err(|e| Error::io(&frames, e))?;
            names.push(format!("{FRAMES_DIR}/{}", entry.file_name().to_string_lossy()));
        }
    }
    let mut out = BTreeMap::new();
    for n in names {
        let p = dir.join(&n);
        if p.is_file() {
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            out.insert(n, hex::encode(Sha256::digest(&bytes)));
        }
    }
    Ok(out)
}

pub fn build_scene(cfg: &PipelineConfig) -> Result<Scene> {
    scenegen::generate_scene(&cfg.scene_spec())
}

/// Renders the first `n` views of the configured camera sequence, corrupts
/// the masks and rounds colors to 8 bits. Views are a prefix-stable
/// sequence: the first `m < n` views equal `capture(cfg, scene, m)`.
pub fn capture(cfg: &PipelineConfig, scene: &Scene, n: usize) -> Result<Vec<PosedFrame>> {
    let seeds = cfg.seeds();
    let c = &cfg.capture;
    let target = c.look_at.unwrap_or(scene.spec.crown_center);
    let cams = scenegen::sample_hemisphere_cameras(n, c.distance, target, seeds.cameras, c.intrinsics())?;
    let frames = scenegen::render_frames(scene, &cams, c.render_step)?;
    let mut frames = scenegen::corrupt_all(frames, &c.corruption, seeds.masks)?;
    for f in &mut frames {
        f.quantize();
    }
    Ok(frames)
}

/// Trains, exports and counts in memory.
pub fn count_from_frames(cfg: &PipelineConfig, frames: &[PosedFrame]) -> Result<(FruitPointCloud, CountReport)> {
    let out = train::train(frames, &cfg.train, cfg.seed)?;
    let cloud = export::sample_volume(&out.grid, &cfg.export)?;
    let report = count::count(&cloud, &cfg.count)?;
    Ok((cloud, report))
}

/// Scores predicted centers with the configured τ (the ground-truth radius
/// by default) and matching rule.
pub fn evaluate(cfg: &PipelineConfig, pred: &[crate::Vec3], gt: &GroundTruth) -> Result<EvalReport> {
    let tau = cfg.eval.tau.unwrap_or(gt.radius);
    eval::match_centers(pred, &gt.centers, tau, cfg.eval.matching)
}
