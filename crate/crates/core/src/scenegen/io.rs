//! Frame, pose and ground-truth files.
//!
//! A dataset directory holds `transforms.json`, `gt_fruits.json` and a
//! `frames/` directory with one 8-bit RGB PNG and one 8-bit grayscale mask
//! PNG (values 0 or 255) per view.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Camera, Intrinsics, PosedFrame, Scene};
use crate::geom::Vec3;
use crate::{Error, Result};

pub const TRANSFORMS_FILE: &str = "transforms.json";
pub const GT_FILE: &str = "gt_fruits.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformsFrame {
    pub file_path: String,
    pub mask_path: String,
    /// Camera-to-world, row-major.
    pub transform_matrix: [[f64; 4]; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transforms {
    pub fl_x: f64,
    pub fl_y: f64,
    pub cx: f64,
    pub cy: f64,
    pub w: u32,
    pub h: u32,
    pub frames: Vec<TransformsFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub radius: f64,
    pub count: usize,
    pub centers: Vec<Vec3>,
}

impl GroundTruth {
    pub fn from_scene(scene: &Scene) -> Self {
        GroundTruth {
            radius: scene.spec.fruit_radius,
            count: scene.fruits.len(),
            centers: scene.fruits.clone(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_ground_truth(dir: &Path, gt: &GroundTruth) -> Result<PathBuf> {
    let path = dir.join(GT_FILE);
    write_json(&path, gt)?;
    Ok(path)
}

pub fn read_ground_truth(dir: &Path) -> Result<GroundTruth> {
    read_json(&dir.join(GT_FILE))
}

/// Writes frames and `transforms.json` into `dir`. All frames must share
/// intrinsics.
pub fn write_frames(dir: &Path, frames: &[PosedFrame]) -> Result<PathBuf> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidArgument("no frames to write".into()))?;
    let intr = first.camera.intrinsics();
    let frame_dir = dir.join("frames");
    fs::create_dir_all(&frame_dir).map_err(|e| Error::io(&frame_dir, e))?;
    let mut entries = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        if f.camera.intrinsics() != intr {
            return Err(Error::InvalidArgument("frames have differing intrinsics".into()));
        }
        let rgb_rel = format!("frames/rgb_{i:04}.png");
        let mask_rel = format!("frames/mask_{i:04}.png");
        let rgb8: Vec<u8> = f
            .rgb
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        let mask8: Vec<u8> = f.mask.iter().map(|&m| if m == 1 { 255 } else { 0 }).collect();
        write_png(&dir.join(&rgb_rel), f.camera.width, f.camera.height, png::ColorType::Rgb, &rgb8)?;
        write_png(&dir.join(&mask_rel), f.camera.width, f.camera.height, png::ColorType::Grayscale, &mask8)?;
        entries.push(TransformsFrame {
            file_path: rgb_rel,
            mask_path: mask_rel,
            transform_matrix: f.camera.transform_matrix(),
        });
    }
    let transforms = Transforms {
        fl_x: intr.focal,
        fl_y: intr.focal,
        cx: intr.cx,
        cy: intr.cy,
        w: intr.width,
        h: intr.height,
        frames: entries,
    };
    let path = dir.join(TRANSFORMS_FILE);
    write_json(&path, &transforms)?;
    Ok(path)
}

/// Reads a dataset written by [`write_frames`]. Mask pixels ≥ 128 are fruit.
pub fn read_frames(dir: &Path) -> Result<Vec<PosedFrame>> {
    let t: Transforms = read_json(&dir.join(TRANSFORMS_FILE))?;
    if (t.fl_x - t.fl_y).abs() > 1e-9 * t.fl_x.abs() {
        return Err(Error::InvalidArgument("anisotropic focal lengths are not supported".into()));
    }
    let intr = Intrinsics {
        focal: t.fl_x,
        cx: t.cx,
        cy: t.cy,
        width: t.w,
        height: t.h,
    };
    t.frames
        .iter()
        .map(|e| {
            let camera = Camera::from_transform_matrix(intr, &e.transform_matrix)?;
            let rgb8 = read_png(&dir.join(&e.file_path), t.w, t.h, png::ColorType::Rgb)?;
            let mask8 = read_png(&dir.join(&e.mask_path), t.w, t.h, png::ColorType::Grayscale)?;
            let rgb = rgb8.iter().map(|&v| v as f32 / 255.0).collect();
            let mask = mask8.iter().map(|&v| u8::from(v >= 128)).collect();
            PosedFrame::new(camera, rgb, mask)
        })
        .collect()
}

fn write_png(path: &Path, w: u32, h: u32, color: png::ColorType, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w, h);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::Png(format!("{}: {e}", path.display())))?;
    writer
        .write_image_data(data)
        .map_err(|e| Error::Png(format!("{}: {e}", path.display())))?;
    writer.finish().map_err(|e| Error::Png(format!("{}: {e}", path.display())))
}

fn read_png(path: &Path, w: u32, h: u32, color: png::ColorType) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let png_err = |e: png::DecodingError| Error::Png(format!("{}: {e}", path.display()));
    let mut reader = png::Decoder::new(BufReader::new(file)).read_info().map_err(png_err)?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    if info.width != w || info.height != h || info.color_type != color || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Png(format!(
            "{}: expected {w}x{h} 8-bit {color:?}, found {}x{} {:?} {:?}",
            path.display(),
            info.width,
            info.height,
            info.color_type,
            info.bit_depth
        )));
    }
    buf.truncate(info.buffer_size());
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::{generate_scene, render_frame, sample_hemisphere_cameras, SceneSpec};

    #[test]
    fn frames_round_trip_through_png() {
        let spec = SceneSpec {
            fruit_count: 5,
            seed: 2,
            ..SceneSpec::default()
        };
        let scene = generate_scene(&spec).unwrap();
        let intr = Intrinsics::centered(24, 24, 35.0 / 36.0);
        let cams = sample_hemisphere_cameras(2, 1.3, spec.crown_center, 1, intr).unwrap();
        let mut frames: Vec<_> = cams.iter().map(|c| render_frame(&scene, c, 1.0 / 256.0).unwrap()).collect();
        let dir = tempfile::tempdir().unwrap();
        write_frames(dir.path(), &frames).unwrap();
        let back = read_frames(dir.path()).unwrap();
        for f in &mut frames {
            f.quantize();
        }
        assert_eq!(back.len(), 2);
        for (a, b) in back.iter().zip(&frames) {
            assert_eq!(a.mask, b.mask);
            assert!(a.camera.rotation.orthonormality_error() < 1e-9);
            assert!(a.camera.translation.dist(b.camera.translation) < 1e-12);
            for (x, y) in a.rgb.iter().zip(&b.rgb) {
                assert!((x - y).abs() < 1e-6);
            }
        }
        let t: Transforms = read_json(&dir.path().join(TRANSFORMS_FILE)).unwrap();
        assert_eq!(t.frames[1].mask_path, "frames/mask_0001.png");
        assert_eq!(t.frames[0].transform_matrix[3], [0.0, 0.0, 0.0, 1.0]);

        let gt = GroundTruth::from_scene(&scene);
        write_ground_truth(dir.path(), &gt).unwrap();
        assert_eq!(read_ground_truth(dir.path()).unwrap(), gt);
    }
}
