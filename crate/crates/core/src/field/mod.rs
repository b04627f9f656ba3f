//! Dense voxel field holding the density, appearance and fruit channels.
//!
//! Channels are stored interleaved per grid node as `[density, r, g, b,
//! semantic]` raw (pre-activation) values. Grid nodes sit on the bounds, so a
//! resolution of `n` along an axis gives `n - 1` cells. Queries interpolate the
//! raw values trilinearly and then apply the activations: softplus for
//! density, sigmoid for color and for the fruit probability.

mod checkpoint;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};

use serde::{Deserialize, Serialize};

use crate::geom::{sigmoid, softplus, Aabb, Vec3};
use crate::{Error, Result};

pub const CHANNELS: usize = 5;
pub const DENSITY: usize = 0;
pub const RED: usize = 1;
pub const GREEN: usize = 2;
pub const BLUE: usize = 3;
pub const SEMANTIC: usize = 4;

pub type Voxel = [f64; CHANNELS];

/// One field channel, addressed by the gradient API.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Density,
    Color(usize),
    Semantic,
}

impl Channel {
    pub fn index(self) -> usize {
        match self {
            Channel::Density => DENSITY,
            Channel::Color(c) => {
                assert!(c < 3, "color channel {c} out of range");
                RED + c
            }
            Channel::Semantic => SEMANTIC,
        }
    }

    pub const ALL: [Channel; 5] = [
        Channel::Density,
        Channel::Color(0),
        Channel::Color(1),
        Channel::Color(2),
        Channel::Semantic,
    ];
}

/// Activated field value at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub position: Vec3,
    pub sigma: f64,
    pub color: [f64; 3],
    pub semantic_logit: f64,
}

impl FieldSample {
    pub fn semantic_probability(&self) -> f64 {
        sigmoid(self.semantic_logit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub resolution: [usize; 3],
    pub bounds: Aabb,
    pub init_raw_density: f64,
    pub init_raw_semantic: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            resolution: [128; 3],
            bounds: Aabb::unit(),
            init_raw_density: -4.0,
            init_raw_semantic: -4.0,
        }
    }
}

/// Trilinear interpolation footprint of one point: eight node indices and
/// their weights.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub index: [usize; 8],
    pub weight: [f64; 8],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    resolution: [usize; 3],
    bounds: Aabb,
    raw: Vec<Voxel>,
    grad: Vec<Voxel>,
}

impl FieldGrid {
    /// Grid filled with constant raw values; color raw values start at 0
    /// (mid-gray after the sigmoid).
    pub fn init(
        resolution: [usize; 3],
        bounds: Aabb,
        init_raw_density: f64,
        init_raw_semantic: f64,
    ) -> Result<Self> {
        if resolution.iter().any(|&n| n < 2) {
            return Err(Error::InvalidArgument(format!(
                "grid resolution must be at least 2 per axis, got {resolution:?}"
            )));
        }
        if !bounds.is_valid() {
            return Err(Error::InvalidArgument(format!("degenerate grid bounds {bounds:?}")));
        }
        if !init_raw_density.is_finite() || !init_raw_semantic.is_finite() {
            return Err(Error::InvalidArgument("non-finite initial raw value".into()));
        }
        let n = resolution.iter().product();
        let voxel = [init_raw_density, 0.0, 0.0, 0.0, init_raw_semantic];
        Ok(FieldGrid {
            resolution,
            bounds,
            raw: vec![voxel; n],
            grad: vec![[0.0; CHANNELS]; n],
        })
    }

    pub fn from_spec(spec: &GridSpec) -> Result<Self> {
        Self::init(spec.resolution, spec.bounds, spec.init_raw_density, spec.init_raw_semantic)
    }

    pub(crate) fn from_raw(resolution: [usize; 3], bounds: Aabb, raw: Vec<Voxel>) -> Result<Self> {
        let mut grid = Self::init(resolution, bounds, 0.0, 0.0)?;
        if raw.len() != grid.raw.len() {
            return Err(Error::InvalidArgument("raw channel length mismatch".into()));
        }
        grid.raw = raw;
        Ok(grid)
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution[0] * (j + self.resolution[1] * k)
    }

    /// World position of grid node `(i, j, k)`.
    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let e = self.bounds.extent();
        let f = |c: usize, a: usize| {
            self.bounds.min[a] + e[a] * c as f64 / (self.resolution[a] - 1) as f64
        };
        Vec3::new(f(i, 0), f(j, 1), f(k, 2))
    }

    pub fn raw(&self) -> &[Voxel] {
        &self.raw
    }

    pub fn raw_mut(&mut self) -> &mut [Voxel] {
        &mut self.raw
    }

    pub fn grad(&self) -> &[Voxel] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [Voxel] {
        &mut self.grad
    }

    pub(crate) fn raw_and_grad_mut(&mut self) -> (&mut [Voxel], &mut [Voxel]) {
        (&mut self.raw, &mut self.grad)
    }

    pub fn zero_gradients(&mut self) {
        self.grad.fill([0.0; CHANNELS]);
    }

    /// Interpolation footprint, or `None` outside the bounds.
    #[inline]
    pub fn stencil(&self, x: Vec3) -> Option<Stencil> {
        if !self.bounds.contains(x) {
            return None;
        }
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let cells = (self.resolution[a] - 1) as f64;
            let u = (x[a] - self.bounds.min[a]) / (self.bounds.max[a] - self.bounds.min[a]) * cells;
            let i = (u.floor() as usize).min(self.resolution[a] - 2);
            base[a] = i;
            frac[a] = u - i as f64;
        }
        let [fx, fy, fz] = frac;
        let i0 = self.index(base[0], base[1], base[2]);
        let sx = 1;
        let sy = self.resolution[0];
        let sz = self.resolution[0] * self.resolution[1];
        Some(Stencil {
            index: [
                i0,
                i0 + sx,
                i0 + sy,
                i0 + sx + sy,
                i0 + sz,
                i0 + sx + sz,
                i0 + sy + sz,
                i0 + sx + sy + sz,
            ],
            weight: [
                (1.0 - fx) * (1.0 - fy) * (1.0 - fz),
                fx * (1.0 - fy) * (1.0 - fz),
                (1.0 - fx) * fy * (1.0 - fz),
                fx * fy * (1.0 - fz),
                (1.0 - fx) * (1.0 - fy) * fz,
                fx * (1.0 - fy) * fz,
                (1.0 - fx) * fy * fz,
                fx * fy * fz,
            ],
        })
    }

    /// Trilinearly interpolated raw channels for a stencil.
    #[inline]
    pub fn interpolate(&self, s: &Stencil) -> Voxel {
        let mut out = [0.0; CHANNELS];
        for (&idx, &w) in s.index.iter().zip(&s.weight) {
            let v = &self.raw[idx];
            for c in 0..CHANNELS {
                out[c] += w * v[c];
            }
        }
        out
    }

    /// Activated sample at `x`. Outside the bounds the field is empty: zero
    /// density, black, and a semantic logit of −∞.
    pub fn query(&self, x: Vec3) -> FieldSample {
        match self.stencil(x) {
            Some(s) => activate(x, &self.interpolate(&s)),
            None => FieldSample {
                position: x,
                sigma: 0.0,
                color: [0.0; 3],
                semantic_logit: f64::NEG_INFINITY,
            },
        }
    }

    /// Accumulates `upstream_grad` (the derivative with respect to the
    /// activated channel value at `x`) into the eight surrounding nodes,
    /// chained through the activation derivative at the interpolated raw
    /// value. No-op outside the bounds.
    pub fn scatter_gradient(&mut self, x: Vec3, channel: Channel, upstream_grad: f64) {
        let Some(s) = self.stencil(x) else { return };
        let c = channel.index();
        let raw = self.interpolate(&s)[c];
        let g = upstream_grad * activation_derivative(c, raw);
        for (&idx, &w) in s.index.iter().zip(&s.weight) {
            self.grad[idx][c] += g * w;
        }
    }

    /// Accumulates a gradient already expressed in raw (pre-activation) space.
    #[inline]
    pub(crate) fn scatter_raw(&mut self, s: &Stencil, g: &Voxel) {
        for (&idx, &w) in s.index.iter().zip(&s.weight) {
            let dst = &mut self.grad[idx];
            for c in 0..CHANNELS {
                dst[c] += w * g[c];
            }
        }
    }
}

/// Activations applied to interpolated raw channels.
#[inline]
pub fn activate(x: Vec3, raw: &Voxel) -> FieldSample {
    FieldSample {
        position: x,
        sigma: softplus(raw[DENSITY]),
        color: [sigmoid(raw[RED]), sigmoid(raw[GREEN]), sigmoid(raw[BLUE])],
        semantic_logit: raw[SEMANTIC],
    }
}

/// Derivative of a channel's activation at raw value `raw`. The semantic
/// channel is treated through its probability, `sigmoid(raw)`.
#[inline]
pub fn activation_derivative(channel: usize, raw: f64) -> f64 {
    let s = sigmoid(raw);
    if channel == DENSITY {
        s
    } else {
        s * (1.0 - s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::RngExt;

    fn random_grid(seed: u64, n: usize) -> FieldGrid {
        let mut g = FieldGrid::init([n; 3], Aabb::unit(), 0.0, 0.0).unwrap();
        let mut r = rng::rng(seed);
        for v in g.raw_mut() {
            for c in v.iter_mut() {
                *c = r.random_range(-3.0..3.0);
            }
        }
        g
    }

    #[test]
    fn init_closed_form() {
        let g = FieldGrid::init([4; 3], Aabb::unit(), -4.0, -4.0).unwrap();
        let s = g.query(Vec3::new(0.1, -0.2, 0.3));
        assert!((s.sigma - 0.018_149_927_917_809_6).abs() < 1e-12);
        assert!((s.color[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn init_rejects_resolution_one() {
        assert!(FieldGrid::init([1, 4, 4], Aabb::unit(), -4.0, -4.0).is_err());
        let flat = Aabb::new(Vec3::ZERO, Vec3::new(1.0, 0.0, 1.0));
        assert!(FieldGrid::init([4; 3], flat, -4.0, -4.0).is_err());
    }

    #[test]
    fn query_at_node_is_exact() {
        let g = random_grid(1, 5);
        for &(i, j, k) in &[(0, 0, 0), (4, 4, 4), (2, 1, 3), (4, 0, 2)] {
            let p = g.node_position(i, j, k);
            let raw = g.raw()[g.index(i, j, k)];
            let s = g.query(p);
            assert!((s.sigma - softplus(raw[DENSITY])).abs() < 1e-14);
            assert!((s.semantic_logit - raw[SEMANTIC]).abs() < 1e-14);
        }
    }

    #[test]
    fn midpoint_interpolates_raw() {
        let mut g = FieldGrid::init([2; 3], Aabb::unit(), 0.0, 0.0).unwrap();
        // Corner (1,0,0) raw value whose softplus is 2.0.
        let raw_b = (2.0f64.exp() - 1.0).ln();
        for j in 0..2 {
            for k in 0..2 {
                let i = g.index(1, j, k);
                g.raw_mut()[i][DENSITY] = raw_b;
            }
        }
        let a = g.query(Vec3::new(-0.5, 0.0, 0.0));
        let b = g.query(Vec3::new(0.5, 0.0, 0.0));
        assert!((a.sigma - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((b.sigma - 2.0).abs() < 1e-12);
        let mid = g.query(Vec3::new(0.0, 0.0, 0.0));
        assert!((mid.sigma - softplus(raw_b / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn outside_is_empty() {
        let g = random_grid(2, 4);
        let s = g.query(Vec3::new(0.0, 0.6, 0.0));
        assert_eq!(s.sigma, 0.0);
        assert_eq!(s.color, [0.0; 3]);
        assert_eq!(s.semantic_probability(), 0.0);
    }

    #[test]
    fn partition_of_unity() {
        let g = random_grid(3, 7);
        let mut r = rng::rng(9);
        for _ in 0..1000 {
            let x = Vec3::new(
                r.random_range(-0.5..0.5),
                r.random_range(-0.5..0.5),
                r.random_range(-0.5..0.5),
            );
            let s = g.stencil(x).unwrap();
            let sum: f64 = s.weight.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(s.weight.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn scatter_at_node() {
        let mut g = random_grid(4, 4);
        let p = g.node_position(1, 2, 1);
        let idx = g.index(1, 2, 1);
        let raw = g.raw()[idx][DENSITY];
        g.scatter_gradient(p, Channel::Density, 2.5);
        for (i, v) in g.grad().iter().enumerate() {
            if i == idx {
                assert!((v[DENSITY] - 2.5 * sigmoid(raw)).abs() < 1e-14);
            } else {
                assert_eq!(v[DENSITY], 0.0);
            }
        }
    }

    #[test]
    fn scatter_is_additive() {
        let mut g = random_grid(5, 4);
        let x = Vec3::new(0.11, -0.07, 0.31);
        g.scatter_gradient(x, Channel::Color(1), 0.75);
        g.scatter_gradient(x, Channel::Color(1), -0.75);
        assert!(g.grad().iter().all(|v| v.iter().all(|&c| c.abs() < 1e-16)));
        g.scatter_gradient(Vec3::new(2.0, 0.0, 0.0), Channel::Density, 1.0);
        assert!(g.grad().iter().all(|v| v[DENSITY] == 0.0));
    }

    #[test]
    fn zero_gradients_leaves_forward_unchanged() {
        let mut g = random_grid(6, 4);
        let x = Vec3::new(0.2, 0.1, -0.3);
        let before = g.query(x);
        g.scatter_gradient(x, Channel::Semantic, 1.0);
        g.zero_gradients();
        assert!(g.grad().iter().all(|v| *v == [0.0; CHANNELS]));
        assert_eq!(g.query(x), before);
    }

    fn activated(s: &FieldSample, c: usize) -> f64 {
        match c {
            DENSITY => s.sigma,
            SEMANTIC => s.semantic_probability(),
            k => s.color[k - 1],
        }
    }

    #[test]
    fn scatter_matches_finite_differences() {
        let mut r = rng::rng(11);
        for probe in 0..20 {
            let mut g = random_grid(100 + probe, 5);
            let x = Vec3::new(
                r.random_range(-0.49..0.49),
                r.random_range(-0.49..0.49),
                r.random_range(-0.49..0.49),
            );
            let s = g.stencil(x).unwrap();
            for (ci, channel) in Channel::ALL.iter().enumerate() {
                g.zero_gradients();
                g.scatter_gradient(x, *channel, 1.0);
                for &idx in &s.index {
                    let h = 1e-6;
                    let orig = g.raw()[idx][ci];
                    g.raw_mut()[idx][ci] = orig + h;
                    let fp = activated(&g.query(x), ci);
                    g.raw_mut()[idx][ci] = orig - h;
                    let fm = activated(&g.query(x), ci);
                    g.raw_mut()[idx][ci] = orig;
                    let fd = (fp - fm) / (2.0 * h);
                    let an = g.grad()[idx][ci];
                    let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-8);
                    assert!(rel < 1e-5, "channel {ci}: analytic {an} vs fd {fd}");
                }
            }
        }
    }

    #[test]
    fn query_is_continuous() {
        let g = random_grid(7, 6);
        let mut r = rng::rng(12);
        // Raw values lie in [-3, 3]; the interpolant's gradient is bounded by
        // 6 per cell width along each axis, and activations are 1-Lipschitz.
        let cell = 1.0 / 5.0;
        let lipschitz = 6.0 / cell * 3f64.sqrt();
        for _ in 0..500 {
            let x = Vec3::new(
                r.random_range(-0.49..0.49),
                r.random_range(-0.49..0.49),
                r.random_range(-0.49..0.49),
            );
            let u = Vec3::new(r.random(), r.random(), r.random()).normalized();
            let eps = 1e-6;
            let a = g.query(x);
            let b = g.query(x + u * eps);
            assert!((a.sigma - b.sigma).abs() <= lipschitz * eps);
            assert!((a.semantic_logit - b.semantic_logit).abs() <= lipschitz * eps);
            for c in 0..3 {
                assert!((a.color[c] - b.color[c]).abs() <= lipschitz * eps);
            }
        }
    }
}
