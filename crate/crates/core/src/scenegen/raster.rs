use rayon::prelude::*;

use super::{Camera, Scene};
use crate::geom::ray_sphere;
use crate::render::{generate_ray, Compositor};
use crate::{Error, Result};

/// Transmittance below which marching stops.
const MIN_TRANSMITTANCE: f64 = 1e-9;

/// One posed view: RGB in `[0, 1]` (row-major, 3 values per pixel) and a
/// binary fruit mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PosedFrame {
    pub camera: Camera,
    pub rgb: Vec<f32>,
    pub mask: Vec<u8>,
}

impl PosedFrame {
    pub fn new(camera: Camera, rgb: Vec<f32>, mask: Vec<u8>) -> Result<Self> {
        let n = camera.width as usize * camera.height as usize;
        if rgb.len() != 3 * n || mask.len() != n {
            return Err(Error::InvalidArgument(format!(
                "frame buffers do not match {}x{} camera",
                camera.width, camera.height
            )));
        }
        if mask.iter().any(|&m| m > 1) {
            return Err(Error::InvalidArgument("mask values must be 0 or 1".into()));
        }
        Ok(PosedFrame { camera, rgb, mask })
    }

    pub fn width(&self) -> usize {
        self.camera.width as usize
    }

    pub fn height(&self) -> usize {
        self.camera.height as usize
    }

    pub fn pixel_count(&self) -> usize {
        self.mask.len()
    }

    pub fn rgb_at(&self, idx: usize) -> [f64; 3] {
        let p = &self.rgb[3 * idx..3 * idx + 3];
        [p[0] as f64, p[1] as f64, p[2] as f64]
    }

    /// Rounds colors to 8-bit levels, as storing the frame as PNG would.
    pub fn quantize(&mut self) {
        for v in &mut self.rgb {
            *v = (*v * 255.0).round().clamp(0.0, 255.0) / 255.0;
        }
    }
}

/// Renders the analytic scene through pixel centers. Samples are placed at
/// the midpoints of a fixed-step lattice along each ray (step
/// `render_step`); lattice samples where every primitive is absent have zero
/// density and are skipped, which leaves the composite unchanged. A pixel is
/// fruit when its accumulated fruit weight exceeds 0.5. The background is
/// black.
pub fn render_frame(scene: &Scene, camera: &Camera, render_step: f64) -> Result<PosedFrame> {
    if !(render_step > 0.0) {
        return Err(Error::InvalidArgument("render_step must be > 0".into()));
    }
    let w = camera.width;
    let rows: Result<Vec<(Vec<f32>, Vec<u8>)>> = (0..camera.height)
        .into_par_iter()
        .map(|v| {
            let mut rgb = Vec::with_capacity(3 * w as usize);
            let mut mask = Vec::with_capacity(w as usize);
            for u in 0..w {
                let c = march_pixel(scene, camera, [u, v], render_step)?;
                rgb.extend(c.color.iter().map(|&x| x as f32));
                mask.push(u8::from(c.semantic > 0.5));
            }
            Ok((rgb, mask))
        })
        .collect();
    let (rgb, mask): (Vec<_>, Vec<_>) = rows?.into_iter().unzip();
    PosedFrame::new(*camera, rgb.concat(), mask.concat())
}

pub fn render_frames(scene: &Scene, cameras: &[Camera], render_step: f64) -> Result<Vec<PosedFrame>> {
    cameras.iter().map(|c| render_frame(scene, c, render_step)).collect()
}

/// Composites one pixel center of the analytic scene; see [`render_frame`].
pub fn march_pixel(scene: &Scene, camera: &Camera, px: [u32; 2], step: f64) -> Result<Compositor> {
    let ray = generate_ray(camera, px, [0.5, 0.5])?;
    let mut acc = Compositor::default();
    let Some(clipped) = ray.clip(&scene.spec.bounds) else {
        return Ok(acc);
    };
    let (o, d) = (clipped.origin, clipped.direction);
    let (t_start, t_end) = (clipped.t_near, clipped.t_far);

    let rf = scene.spec.fruit_radius;
    let fruit_spans: Vec<(f64, f64)> = scene
        .fruits
        .iter()
        .filter_map(|&c| ray_sphere(o, d, c, rf))
        .collect();
    let trunk_span = scene.trunk_interval(o, d);
    let crown_span = if scene.spec.foliage.amplitude > 0.0 {
        ray_sphere(o, d, scene.spec.crown_center, scene.spec.crown_radius)
    } else {
        None
    };

    let mut spans: Vec<(f64, f64)> = fruit_spans.iter().copied().chain(trunk_span).chain(crown_span).collect();
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (a, b) in spans {
        let (a, b) = (a.max(t_start), b.min(t_end));
        if a >= b {
            continue;
        }
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }

    let inside = |t: f64, s: &(f64, f64)| t >= s.0 && t <= s.1;
    for (a, b) in merged {
        // Lattice samples t_k = t_start + (k + 0.5)·step within [a, b].
        let k0 = ((a - t_start) / step - 0.5).ceil().max(0.0) as usize;
        let k1 = ((b - t_start) / step - 0.5).floor();
        if k1 < k0 as f64 {
            continue;
        }
        for k in k0..=k1 as usize {
            let t = t_start + (k as f64 + 0.5) * step;
            if t > t_end {
                break;
            }
            let in_fruit = fruit_spans.iter().any(|s| inside(t, s));
            let in_trunk = trunk_span.is_some_and(|s| inside(t, &s));
            let p = scene.sample_with(o + d * t, in_fruit, in_trunk);
            acc.push(p.sigma, step, p.color, p.fruit);
            if acc.transmittance() < MIN_TRANSMITTANCE {
                return Ok(acc);
            }
        }
    }
    Ok(acc)
}
