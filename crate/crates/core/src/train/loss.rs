//! Losses and their reverse pass through compositing and interpolation.

use rand::RngExt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::{activation_derivative, FieldGrid, Stencil, Voxel, BLUE, CHANNELS, DENSITY, GREEN, RED, SEMANTIC};
use crate::geom::{sigmoid, softplus};
use crate::render::{clamp_probability, generate_ray, stratified_samples, Ray, PROB_EPS};
use crate::rng;
use crate::scenegen::PosedFrame;
use crate::{Error, Result};

/// Rays are processed in chunks of this size; each chunk's gradients are
/// scattered in ray order, so results do not depend on the thread count.
const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub l_photo: f64,
    pub l_sem: f64,
    pub l_total: f64,
}

impl LossReport {
    pub fn new(l_photo: f64, l_sem: f64) -> Self {
        LossReport {
            l_photo,
            l_sem,
            l_total: l_photo + l_sem,
        }
    }
}

/// Which loss terms contribute gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossTerms {
    pub photometric: bool,
    pub semantic: bool,
}

impl LossTerms {
    pub const BOTH: LossTerms = LossTerms {
        photometric: true,
        semantic: true,
    };
    pub const PHOTOMETRIC: LossTerms = LossTerms {
        photometric: true,
        semantic: false,
    };
    pub const SEMANTIC: LossTerms = LossTerms {
        photometric: false,
        semantic: true,
    };
}

/// Mean squared L2 color error.
pub fn photometric_loss(pred: &[[f64; 3]], target: &[[f64; 3]]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::InvalidArgument("prediction and target batch sizes differ".into()));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| sq_dist(p, t)).sum();
    Ok(sum / pred.len() as f64)
}

/// Mean binary cross-entropy (negative log-likelihood) of clamped
/// probabilities against binary targets.
pub fn semantic_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::InvalidArgument("prediction and target batch sizes differ".into()));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred.iter().zip(target).map(|(&p, &y)| bce(clamp_probability(p), y)).sum();
    Ok(sum / pred.len() as f64)
}

fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|c| (a[c] - b[c]).powi(2)).sum()
}

fn bce(p: f64, y: f64) -> f64 {
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// One training ray with fixed sample positions and its pixel targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRay {
    pub frame: usize,
    pub pixel: [u32; 2],
    /// Already clipped to the grid bounds; `None` if the ray misses them.
    pub ray: Option<Ray>,
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
    pub target_rgb: [f64; 3],
    pub target_mask: f64,
}

/// Draws `size` (frame, pixel) pairs uniformly with replacement and fixes
/// their jittered sample positions. Everything is derived from `seed`.
pub fn sample_batch(
    frames: &[PosedFrame],
    bounds: &crate::geom::Aabb,
    size: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<TrainRay>> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("training needs at least one frame".into()));
    }
    let mut prefix = Vec::with_capacity(frames.len() + 1);
    prefix.push(0usize);
    for f in frames {
        prefix.push(prefix.last().unwrap() + f.pixel_count());
    }
    let total = *prefix.last().unwrap();
    if total == 0 {
        return Err(Error::InvalidArgument("frames have no pixels".into()));
    }
    let mut pick = rng::rng(rng::derive(seed, u64::MAX));
    let picks: Vec<(usize, usize)> = (0..size)
        .map(|_| {
            let g = pick.random_range(0..total);
            let f = prefix.partition_point(|&p| p <= g) - 1;
            (f, g - prefix[f])
        })
        .collect();
    picks
        .into_iter()
        .enumerate()
        .map(|(i, (f, p))| {
            let frame = &frames[f];
            let w = frame.width();
            let pixel = [(p % w) as u32, (p / w) as u32];
            let full = generate_ray(&frame.camera, pixel, [0.5, 0.5])?;
            let ray = full.clip(bounds);
            let (t, delta) = match &ray {
                Some(r) => {
                    let mut jitter = rng::rng(rng::derive(seed, i as u64));
                    let s = stratified_samples(r, samples, Some(&mut jitter))?;
                    (s.t, s.delta)
                }
                None => (vec![], vec![]),
            };
            Ok(TrainRay {
                frame: f,
                pixel,
                ray,
                t,
                delta,
                target_rgb: frame.rgb_at(p),
                target_mask: f64::from(frame.mask[p]),
            })
        })
        .collect()
}

/// Per-ray result of the reverse pass: the ray's losses and the raw-space
/// gradient at each sample position.
struct RayGrad {
    photo: f64,
    sem: f64,
    /// Raw-channel gradient of each sample with its interpolation stencil.
    samples: Vec<(Stencil, Voxel)>,
}

/// Per-sample forward quantities kept for the backward pass.
struct Sample {
    stencil: Stencil,
    raw: Voxel,
    color: [f64; 3],
    prob: f64,
    delta: f64,
    tau: f64,
}

fn ray_grad(grid: &FieldGrid, r: &TrainRay, terms: LossTerms, scale: f64, want_grad: bool) -> Result<RayGrad> {
    let Some(ray) = &r.ray else {
        let photo = sq_dist(&[0.0; 3], &r.target_rgb);
        let sem = bce(PROB_EPS, r.target_mask);
        return Ok(RayGrad {
            photo,
            sem,
            samples: vec![],
        });
    };
    // Samples outside the grid are empty and contribute nothing.
    let mut samples = Vec::with_capacity(r.t.len());
    for (&t, &delta) in r.t.iter().zip(&r.delta) {
        let Some(stencil) = grid.stencil(ray.at(t)) else { continue };
        let raw = grid.interpolate(&stencil);
        samples.push(Sample {
            stencil,
            raw,
            color: [sigmoid(raw[RED]), sigmoid(raw[GREEN]), sigmoid(raw[BLUE])],
            prob: sigmoid(raw[SEMANTIC]),
            delta,
            tau: softplus(raw[DENSITY]) * delta,
        });
    }
    let k = samples.len();

    let mut trans = Vec::with_capacity(k);
    let mut weight = Vec::with_capacity(k);
    let mut depth = 0.0f64;
    let mut rgb = [0.0; 3];
    let mut p_acc = 0.0;
    for s in &samples {
        let t = (-depth).exp();
        let w = t * -(-s.tau).exp_m1();
        for ch in 0..3 {
            rgb[ch] += w * s.color[ch];
        }
        p_acc += w * s.prob;
        trans.push(t);
        weight.push(w);
        depth += s.tau;
    }
    let photo = sq_dist(&rgb, &r.target_rgb);
    let p_hat = clamp_probability(p_acc);
    let sem = bce(p_hat, r.target_mask);
    if !photo.is_finite() || !sem.is_finite() {
        return Err(Error::NonFinite {
            context: format!("loss of ray at frame {} pixel {:?}", r.frame, r.pixel),
        });
    }
    if !want_grad {
        return Ok(RayGrad {
            photo,
            sem,
            samples: vec![],
        });
    }

    let g_rgb: [f64; 3] = if terms.photometric {
        [0, 1, 2].map(|c| 2.0 * (rgb[c] - r.target_rgb[c]) * scale)
    } else {
        [0.0; 3]
    };
    // The clamp has zero derivative outside its range.
    let g_p = if terms.semantic && p_acc > PROB_EPS && p_acc < 1.0 - PROB_EPS {
        (p_hat - r.target_mask) / (p_hat * (1.0 - p_hat)) * scale
    } else {
        0.0
    };

    // Reverse sweep; `tail` accumulates Σ_{j>i} w_j c_j. The semantic
    // gradient reaches only the semantic channel: weights are treated as
    // constants there.
    let mut out = Vec::with_capacity(k);
    let mut tail = [0.0; 3];
    for i in (0..k).rev() {
        let s = &samples[i];
        let t_next = trans[i] - weight[i];
        let mut g = [0.0; CHANNELS];
        let mut d_tau = 0.0;
        for ch in 0..3 {
            d_tau += g_rgb[ch] * (t_next * s.color[ch] - tail[ch]);
            // Sigmoid derivative from the cached activation.
            g[RED + ch] = g_rgb[ch] * weight[i] * s.color[ch] * (1.0 - s.color[ch]);
            tail[ch] += weight[i] * s.color[ch];
        }
        g[DENSITY] = d_tau * s.delta * activation_derivative(DENSITY, s.raw[DENSITY]);
        g[SEMANTIC] = g_p * weight[i] * s.prob * (1.0 - s.prob);
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("gradient of ray at frame {} pixel {:?}, sample {i}", r.frame, r.pixel),
            });
        }
        if g.iter().any(|&x| x != 0.0) {
            out.push((s.stencil, g));
        }
    }
    Ok(RayGrad {
        photo,
        sem,
        samples: out,
    })
}

pub fn evaluate(grid: &FieldGrid, batch: &[TrainRay]) -> Result<LossReport> {
    let per_ray: Result<Vec<RayGrad>> = batch
        .par_iter()
        .map(|r| ray_grad(grid, r, LossTerms::BOTH, 0.0, false))
        .collect();
    Ok(mean_losses(&per_ray?, batch.len()))
}

fn mean_losses(rays: &[RayGrad], n: usize) -> LossReport {
    if n == 0 {
        return LossReport::default();
    }
    let photo: f64 = rays.iter().map(|r| r.photo).sum::<f64>() / n as f64;
    let sem: f64 = rays.iter().map(|r| r.sem).sum::<f64>() / n as f64;
    LossReport::new(photo, sem)
}

/// Accumulates gradients of the selected loss terms into the grid's
/// gradient buffer and returns the batch losses. Indices of voxels receiving
/// a gradient are appended to `touched` once each (tracked via `mark`) when
/// both are given.
pub fn backward(
    grid: &mut FieldGrid,
    batch: &[TrainRay],
    terms: LossTerms,
    mut touched: Option<(&mut Vec<usize>, &mut Vec<bool>)>,
) -> Result<LossReport> {
    let scale = if batch.is_empty() { 0.0 } else { 1.0 / batch.len() as f64 };
    let mut photo = 0.0;
    let mut sem = 0.0;
    for chunk in batch.chunks(CHUNK) {
        let g = &*grid;
        let grads: Result<Vec<RayGrad>> = chunk.par_iter().map(|r| ray_grad(g, r, terms, scale, true)).collect();
        for rg in grads? {
            photo += rg.photo;
            sem += rg.sem;
            for (s, g) in &rg.samples {
                grid.scatter_raw(s, g);
                if let Some((list, mark)) = touched.as_mut() {
                    for &i in &s.index {
                        if !mark[i] {
                            mark[i] = true;
                            list.push(i);
                        }
                    }
                }
            }
        }
    }
    let n = batch.len().max(1) as f64;
    Ok(LossReport::new(photo / n, sem / n))
}
