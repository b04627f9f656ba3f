//! Count against number of training views and image resolution.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::pipeline;
use crate::scenegen::GroundTruth;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Frame counts, ascending.
    pub frames: Vec<usize>,
    /// Square image sizes in pixels.
    pub resolutions: Vec<u32>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            frames: vec![5, 10, 20, 40, 60, 100],
            resolutions: vec![256],
        }
    }
}

impl SweepConfig {
    pub fn diagnostics(&self, path: &str, out: &mut Vec<String>) {
        if self.frames.is_empty() || self.frames.contains(&0) {
            out.push(format!("{path}.frames: must be a non-empty list of counts >= 1"));
        } else if !self.frames.windows(2).all(|w| w[0] < w[1]) {
            out.push(format!("{path}.frames: must be strictly ascending"));
        }
        if self.resolutions.is_empty() || self.resolutions.contains(&0) {
            out.push(format!("{path}.resolutions: must be a non-empty list of sizes >= 1"));
        }
    }
}

/// One cell. A failed cell keeps its coordinates and the error message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub frames: usize,
    pub resolution: u32,
    pub count: Option<usize>,
    pub gt: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub error: Option<String>,
}

/// Trains an independent field for every (resolution, frame count) cell
/// of `config.sweep` on the configured scene, counting every cell with the
/// same counting parameters. Views are shared between cells as prefixes of
/// one camera sequence per resolution.
pub fn frame_sweep(config: &PipelineConfig, mut log: impl FnMut(&str)) -> Result<Vec<SweepRow>> {
    let mut d = Vec::new();
    config.sweep.diagnostics("sweep", &mut d);
    if !d.is_empty() {
        return Err(Error::InvalidConfig(d));
    }
    let scene = pipeline::build_scene(config)?;
    let gt = GroundTruth::from_scene(&scene);
    let max_frames = *config.sweep.frames.last().unwrap();
    let mut rows = Vec::new();
    for &res in &config.sweep.resolutions {
        let mut cfg = config.clone();
        cfg.capture.width = res;
        cfg.capture.height = res;
        let all = pipeline::capture(&cfg, &scene, max_frames);
        for &f in &config.sweep.frames {
            let cell = all.as_ref().map_err(|e| e.to_string()).and_then(|frames| {
                let (_, report) = pipeline::count_from_frames(&cfg, &frames[..f]).map_err(|e| e.to_string())?;
                let e = pipeline::evaluate(&cfg, &report.fruit_centers, &gt).map_err(|e| e.to_string())?;
                Ok((report.total, e))
            });
            let row = match cell {
                Ok((count, e)) => SweepRow {
                    frames: f,
                    resolution: res,
                    count: Some(count),
                    gt: gt.count,
                    precision: Some(e.precision),
                    recall: Some(e.recall),
                    f1: Some(e.f1),
                    error: None,
                },
                Err(msg) => SweepRow {
                    frames: f,
                    resolution: res,
                    count: None,
                    gt: gt.count,
                    precision: None,
                    recall: None,
                    f1: None,
                    error: Some(msg),
                },
            };
            log(&match (&row.count, &row.error) {
                (Some(c), _) => format!("sweep: {f} frames at {res}px: count {c} / gt {}", gt.count),
                (_, Some(e)) => format!("sweep: {f} frames at {res}px failed: {e}"),
                _ => unreachable!(),
            });
            rows.push(row);
        }
    }
    Ok(rows)
}

/// `frames,resolution,count,gt,precision,recall,f1,error`; failed cells
/// leave the measured columns empty.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("frames,resolution,count,gt,precision,recall,f1,error\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for r in rows {
        let err = r.error.as_deref().unwrap_or("").replace(['"', '\n'], " ");
        let err = if err.is_empty() { err } else { format!("\"{err}\"") };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.frames,
            r.resolution,
            r.count.map(|c| c.to_string()).unwrap_or_default(),
            r.gt,
            opt(r.precision),
            opt(r.recall),
            opt(r.f1),
            err
        );
    }
    s
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    std::fs::write(path, sweep_csv(rows)).map_err(|e| Error::io(path, e))
}
