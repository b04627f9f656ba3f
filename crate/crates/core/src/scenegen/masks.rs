//! Mask corruption emulating imperfect 2D segmentation.

use std::collections::VecDeque;

use rand::RngExt;
use serde::{Deserialize, Serialize};

use super::PosedFrame;
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionMode {
    /// Each blob grows or shrinks by a random radius in `[−m, m]` pixels.
    SoftEdges,
    /// Each blob is removed with probability `m`.
    Dropout,
    /// The whole mask is dilated or eroded (coin flip per frame) by `m` pixels.
    DilateErode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionStep {
    pub mode: CorruptionMode,
    pub magnitude: f64,
}

/// 8-connected components of a binary mask, as lists of pixel indices in
/// raster order of their first pixel.
pub fn blobs(mask: &[u8], width: usize, height: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if mask[start] == 0 || seen[start] {
            continue;
        }
        let mut blob = Vec::new();
        seen[start] = true;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            blob.push(p);
            let (x, y) = ((p % width) as i64, (p / width) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                        continue;
                    }
                    let q = ny as usize * width + nx as usize;
                    if mask[q] == 1 && !seen[q] {
                        seen[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
        blob.sort_unstable();
        out.push(blob);
    }
    out
}

/// Applies one corruption mode to every frame's mask. Frame `i` draws from a
/// stream derived from `(seed, i)`. Masks stay binary and a magnitude of 0
/// returns the input unchanged.
pub fn corrupt_masks(
    frames: &[PosedFrame],
    mode: CorruptionMode,
    magnitude: f64,
    seed: u64,
) -> Result<Vec<PosedFrame>> {
    if !(magnitude >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "corruption magnitude must be >= 0, got {magnitude}"
        )));
    }
    Ok(frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let mut r = rng::rng(rng::derive(seed, i as u64));
            let (w, h) = (f.width(), f.height());
            let mask = match mode {
                CorruptionMode::Dropout => {
                    let mut m = f.mask.clone();
                    for blob in blobs(&f.mask, w, h) {
                        if r.random::<f64>() < magnitude {
                            for p in blob {
                                m[p] = 0;
                            }
                        }
                    }
                    m
                }
                CorruptionMode::SoftEdges => {
                    let mut eroded = f.mask.clone();
                    let mut grow = Vec::new();
                    for blob in blobs(&f.mask, w, h) {
                        let radius = if magnitude > 0.0 {
                            r.random_range(-magnitude..=magnitude)
                        } else {
                            0.0
                        };
                        if radius < 0.0 {
                            erode_pixels(&f.mask, &mut eroded, &blob, w, h, -radius);
                        } else if radius > 0.0 {
                            grow.push((blob, radius));
                        }
                    }
                    for (blob, radius) in grow {
                        dilate_pixels(&mut eroded, &blob, w, h, radius);
                    }
                    eroded
                }
                CorruptionMode::DilateErode => {
                    let mut m = f.mask.clone();
                    if magnitude > 0.0 {
                        let all: Vec<usize> = (0..m.len()).filter(|&p| f.mask[p] == 1).collect();
                        if r.random::<bool>() {
                            dilate_pixels(&mut m, &all, w, h, magnitude);
                        } else {
                            erode_pixels(&f.mask, &mut m, &all, w, h, magnitude);
                        }
                    }
                    m
                }
            };
            PosedFrame {
                camera: f.camera,
                rgb: f.rgb.clone(),
                mask,
            }
        })
        .collect())
}

/// Applies several corruption steps in order, each with its own stream.
pub fn corrupt_all(frames: Vec<PosedFrame>, steps: &[CorruptionStep], seed: u64) -> Result<Vec<PosedFrame>> {
    let mut frames = frames;
    for (i, step) in steps.iter().enumerate() {
        frames = corrupt_masks(&frames, step.mode, step.magnitude, rng::derive(seed, i as u64))?;
    }
    Ok(frames)
}

fn disk_offsets(radius: f64) -> Vec<(i64, i64)> {
    let r = radius.floor() as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if ((dx * dx + dy * dy) as f64) <= radius * radius {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Sets every pixel within `radius` of a blob pixel.
fn dilate_pixels(mask: &mut [u8], blob: &[usize], w: usize, h: usize, radius: f64) {
    let offsets = disk_offsets(radius);
    for &p in blob {
        let (x, y) = ((p % w) as i64, (p / w) as i64);
        for &(dx, dy) in &offsets {
            let (nx, ny) = (x + dx, y + dy);
            if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 {
                mask[ny as usize * w + nx as usize] = 1;
            }
        }
    }
}

/// Clears blob pixels within `radius` of a background pixel of `original`.
fn erode_pixels(original: &[u8], out: &mut [u8], blob: &[usize], w: usize, h: usize, radius: f64) {
    let offsets = disk_offsets(radius);
    for &p in blob {
        let (x, y) = ((p % w) as i64, (p / w) as i64);
        let near_background = offsets.iter().any(|&(dx, dy)| {
            let (nx, ny) = (x + dx, y + dy);
            nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 || original[ny as usize * w + nx as usize] == 0
        });
        if near_background {
            out[p] = 0;
        }
    }
}
