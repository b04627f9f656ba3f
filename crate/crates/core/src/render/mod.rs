//! Pinhole ray generation and volume compositing.
//!
//! For samples `k = 1..K` along a ray with densities `σ_k` and spacings `δ_k`
//! the transmittance is `T_k = exp(−Σ_{a<k} σ_a δ_a)`, opacity
//! `α(x) = 1 − exp(−x)` and weight `w_k = T_k · α(σ_k δ_k)`. Color and fruit
//! probability are composited with the same weights.

use rand::RngExt;
use rayon::prelude::*;

use crate::field::FieldGrid;
use crate::geom::{sigmoid, Aabb, Vec3};
use crate::rng::{self, Rng};
use crate::scenegen::Camera;
use crate::{Error, Result};

/// Samples per ray used when nothing else is configured.
pub const DEFAULT_SAMPLES: usize = 128;

/// Accumulated fruit probabilities are clamped to `[PROB_EPS, 1 − PROB_EPS]`
/// before any logarithm.
pub const PROB_EPS: f64 = 1e-6;

pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3, t_near: f64, t_far: f64) -> Result<Self> {
        if ((direction.norm() - 1.0).abs() > 1e-9) || !origin.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "ray direction must be unit length, got {direction:?}"
            )));
        }
        if !(t_near < t_far) || t_near.is_nan() {
            return Err(Error::InvalidArgument(format!(
                "ray interval [{t_near}, {t_far}] is empty"
            )));
        }
        Ok(Ray {
            origin,
            direction,
            t_near,
            t_far,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }

    /// The part of the ray inside `bounds`, or `None` when it misses.
    pub fn clip(&self, bounds: &Aabb) -> Option<Ray> {
        let (t0, t1) = bounds.intersect(self.origin, self.direction, self.t_near, self.t_far)?;
        Some(Ray {
            t_near: t0,
            t_far: t1,
            ..*self
        })
    }
}

/// Ray through continuous image position `px + jitter` (pixel `(u, v)` covers
/// `[u, u+1) × [v, v+1)`; a jitter of 0.5 hits the pixel center). Camera
/// space looks down −z with +y up, image rows grow downward.
pub fn generate_ray(camera: &Camera, px: [u32; 2], jitter: [f64; 2]) -> Result<Ray> {
    if px[0] >= camera.width || px[1] >= camera.height {
        return Err(Error::InvalidArgument(format!(
            "pixel {px:?} outside {}x{} image",
            camera.width, camera.height
        )));
    }
    let u = px[0] as f64 + jitter[0];
    let v = px[1] as f64 + jitter[1];
    let d_cam = Vec3::new(
        (u - camera.cx) / camera.focal,
        -(v - camera.cy) / camera.focal,
        -1.0,
    );
    let d = camera.rotation.mul_vec(d_cam).normalized();
    Ray::new(camera.translation, d, 0.0, f64::INFINITY)
}

/// Sample distances and spacings along a ray.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
}

/// One sample per equal sub-interval of `[t_near, t_far]`, uniformly placed
/// inside its bin when `jitter` is given and at the bin midpoint otherwise.
/// `δ_k = t_{k+1} − t_k`, and the last spacing runs to `t_far`.
pub fn stratified_samples(ray: &Ray, k: usize, jitter: Option<&mut Rng>) -> Result<Samples> {
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one sample per ray".into()));
    }
    if !ray.t_far.is_finite() {
        return Err(Error::InvalidArgument("cannot stratify an unbounded ray".into()));
    }
    let bin = (ray.t_far - ray.t_near) / k as f64;
    let t: Vec<f64> = match jitter {
        Some(r) => (0..k)
            .map(|i| ray.t_near + (i as f64 + r.random::<f64>()) * bin)
            .collect(),
        None => (0..k).map(|i| ray.t_near + (i as f64 + 0.5) * bin).collect(),
    };
    let mut delta: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    delta.push(ray.t_far - t[k - 1]);
    Ok(Samples { t, delta })
}

/// Compositing weights and the transmittance in front of each sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub weights: Vec<f64>,
    pub transmittance: Vec<f64>,
}

impl Weights {
    pub fn opacity(&self) -> f64 {
        self.weights.iter().sum()
    }
}

pub fn composite_weights(sigma: &[f64], delta: &[f64]) -> Result<Weights> {
    if sigma.len() != delta.len() {
        return Err(Error::InvalidArgument("sigma and delta lengths differ".into()));
    }
    let mut weights = Vec::with_capacity(sigma.len());
    let mut transmittance = Vec::with_capacity(sigma.len());
    let mut depth = 0.0f64;
    for (k, (&s, &d)) in sigma.iter().zip(delta).enumerate() {
        if !s.is_finite() || s < 0.0 {
            return Err(Error::NonFinite {
                context: format!("density {s} at sample {k}"),
            });
        }
        let t = (-depth).exp();
        let tau = s * d;
        transmittance.push(t);
        weights.push(t * -(-tau).exp_m1());
        depth += tau;
    }
    Ok(Weights {
        weights,
        transmittance,
    })
}

/// `Σ_k w_k v_k` together with the weights.
pub fn composite<const N: usize>(
    sigma: &[f64],
    values: &[[f64; N]],
    delta: &[f64],
) -> Result<([f64; N], Weights)> {
    if values.len() != sigma.len() {
        return Err(Error::InvalidArgument("values and sigma lengths differ".into()));
    }
    let w = composite_weights(sigma, delta)?;
    let mut out = [0.0; N];
    for (wk, v) in w.weights.iter().zip(values) {
        for c in 0..N {
            out[c] += wk * v[c];
        }
    }
    Ok((out, w))
}

/// Front-to-back accumulator over a stream of samples, equivalent to
/// [`composite`] without materializing the sample arrays.
#[derive(Debug, Clone, Copy)]
pub struct Compositor {
    depth: f64,
    pub color: [f64; 3],
    pub semantic: f64,
    pub opacity: f64,
}

impl Default for Compositor {
    fn default() -> Self {
        Compositor {
            depth: 0.0,
            color: [0.0; 3],
            semantic: 0.0,
            opacity: 0.0,
        }
    }
}

impl Compositor {
    pub fn push(&mut self, sigma: f64, delta: f64, color: [f64; 3], semantic: f64) {
        let tau = sigma * delta;
        if tau == 0.0 {
            return;
        }
        let w = (-self.depth).exp() * -(-tau).exp_m1();
        for c in 0..3 {
            self.color[c] += w * color[c];
        }
        self.semantic += w * semantic;
        self.opacity += w;
        self.depth += tau;
    }

    pub fn transmittance(&self) -> f64 {
        (-self.depth).exp()
    }
}

/// Everything recorded while rendering one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct RayRender {
    pub samples: Samples,
    pub sigma: Vec<f64>,
    pub color: Vec<[f64; 3]>,
    pub semantic_logit: Vec<f64>,
    pub weights: Weights,
    /// Composited color Ĉ.
    pub rgb: [f64; 3],
    /// Composited fruit probability before clamping.
    pub semantic_prob: f64,
    pub opacity: f64,
}

impl RayRender {
    fn empty() -> Self {
        RayRender {
            samples: Samples {
                t: vec![],
                delta: vec![],
            },
            sigma: vec![],
            color: vec![],
            semantic_logit: vec![],
            weights: Weights {
                weights: vec![],
                transmittance: vec![],
            },
            rgb: [0.0; 3],
            semantic_prob: 0.0,
            opacity: 0.0,
        }
    }

    /// Fruit logit Ŝ recovered from the clamped accumulated probability.
    pub fn semantic_logit_acc(&self) -> f64 {
        logit(clamp_probability(self.semantic_prob))
    }
}

/// Clips the ray to the grid bounds, samples it and composites color and
/// fruit probability with shared weights. Rays missing the box render as
/// black background.
pub fn render_ray(grid: &FieldGrid, ray: &Ray, k: usize, jitter: Option<&mut Rng>) -> Result<RayRender> {
    let Some(clipped) = ray.clip(&grid.bounds()) else {
        return Ok(RayRender::empty());
    };
    let samples = stratified_samples(&clipped, k, jitter)?;
    let mut sigma = Vec::with_capacity(k);
    let mut color = Vec::with_capacity(k);
    let mut semantic_logit = Vec::with_capacity(k);
    for &t in &samples.t {
        let s = grid.query(clipped.at(t));
        sigma.push(s.sigma);
        color.push(s.color);
        semantic_logit.push(s.semantic_logit);
    }
    let weights = composite_weights(&sigma, &samples.delta)?;
    let mut rgb = [0.0; 3];
    let mut semantic_prob = 0.0;
    for (k, w) in weights.weights.iter().enumerate() {
        for c in 0..3 {
            rgb[c] += w * color[k][c];
        }
        semantic_prob += w * sigmoid(semantic_logit[k]);
    }
    let opacity = weights.opacity();
    Ok(RayRender {
        samples,
        sigma,
        color,
        semantic_logit,
        weights,
        rgb,
        semantic_prob,
        opacity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelRender {
    pub rgb: [f64; 3],
    /// Accumulated fruit probability, clamped.
    pub semantic_prob: f64,
    pub semantic_logit: f64,
    pub opacity: f64,
}

/// Renders the pixel center. With `seed`, sample positions are jittered by a
/// stream derived from `(seed, px)`; without, bin midpoints are used.
pub fn render_pixel(
    grid: &FieldGrid,
    camera: &Camera,
    px: [u32; 2],
    k: usize,
    seed: Option<u64>,
) -> Result<PixelRender> {
    let ray = generate_ray(camera, px, [0.5, 0.5])?;
    let mut r = seed.map(|s| rng::rng(rng::derive2(s, px[0] as u64, px[1] as u64)));
    let rr = render_ray(grid, &ray, k, r.as_mut())?;
    let p = clamp_probability(rr.semantic_prob);
    Ok(PixelRender {
        rgb: rr.rgb,
        semantic_prob: p,
        semantic_logit: logit(p),
        opacity: rr.opacity,
    })
}

/// Renders a whole image in parallel over rows. Output is row-major.
pub fn render_image(grid: &FieldGrid, camera: &Camera, k: usize, seed: Option<u64>) -> Result<Vec<PixelRender>> {
    let rows: Result<Vec<Vec<PixelRender>>> = (0..camera.height)
        .into_par_iter()
        .map(|v| {
            (0..camera.width)
                .map(|u| render_pixel(grid, camera, [u, v], k, seed))
                .collect()
        })
        .collect();
    Ok(rows?.into_iter().flatten().collect())
}
