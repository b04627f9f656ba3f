//! Fruit point clouds sampled from a trained field.
//!
//! Rays run parallel to the z axis from a regular grid of pixel centers on
//! the ROI's top face. Along each ray the field is queried at the midpoints
//! of uniform steps and a point is kept when both its density and its fruit
//! probability reach their thresholds.

mod ply;

pub use ply::{read_ply, write_ply};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::FieldGrid;
use crate::geom::{sigmoid, Aabb, Vec3};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportConfig {
    /// Sampled region; the grid bounds when absent.
    pub roi: Option<Aabb>,
    /// Rays per ROI face edge.
    pub lateral_resolution: usize,
    /// Samples along each ray.
    pub steps: usize,
    pub density_threshold: f64,
    pub semantic_threshold: f64,
}

impl Default for ExportConfig {
    fn default() -> Self {
        ExportConfig {
            roi: None,
            lateral_resolution: 256,
            steps: 256,
            density_threshold: 1.0,
            semantic_threshold: 0.9,
        }
    }
}

impl ExportConfig {
    pub fn diagnostics(&self, path: &str, out: &mut Vec<String>) {
        let mut bad = |field: &str, msg: &str| out.push(format!("{path}.{field}: {msg}"));
        if let Some(roi) = &self.roi {
            if !roi.is_valid() {
                bad("roi", "min must be < max on every axis");
            }
        }
        if self.lateral_resolution < 2 {
            bad("lateral_resolution", "must be >= 2");
        }
        if self.steps < 2 {
            bad("steps", "must be >= 2");
        }
        if !(self.density_threshold >= 0.0) {
            bad("density_threshold", "must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.semantic_threshold) {
            bad("semantic_threshold", "must lie in [0, 1]");
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut d = Vec::new();
        self.diagnostics("export", &mut d);
        if d.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(d))
        }
    }
}

/// Points with their density and fruit probability.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FruitPointCloud {
    pub points: Vec<Vec3>,
    pub sigma: Vec<f64>,
    pub semantic: Vec<f64>,
}

impl FruitPointCloud {
    pub fn from_points(points: Vec<Vec3>) -> Self {
        let n = points.len();
        FruitPointCloud {
            points,
            sigma: vec![0.0; n],
            semantic: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, p: Vec3, sigma: f64, semantic: f64) {
        self.points.push(p);
        self.sigma.push(sigma);
        self.semantic.push(semantic);
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Vec3::ZERO, |a, &p| a + p);
        Some(sum / self.len() as f64)
    }

    fn filtered(&self, keep: impl Fn(usize) -> bool) -> Self {
        let mut out = FruitPointCloud::default();
        for i in (0..self.len()).filter(|&i| keep(i)) {
            out.push(self.points[i], self.sigma[i], self.semantic[i]);
        }
        out
    }
}

/// Orthographic sweep of the field. Output order is by ray (x fastest, then
/// y), then by step.
pub fn sample_volume(grid: &FieldGrid, config: &ExportConfig) -> Result<FruitPointCloud> {
    config.validate()?;
    let roi = config.roi.unwrap_or_else(|| grid.bounds());
    let n = config.lateral_resolution;
    let e = roi.extent();
    let coord = |a: usize, i: usize, count: usize| roi.min[a] + e[a] * (i as f64 + 0.5) / count as f64;
    let rays: Vec<Vec<(Vec3, f64, f64)>> = (0..n * n)
        .into_par_iter()
        .map(|r| {
            let (x, y) = (coord(0, r % n, n), coord(1, r / n, n));
            let mut hits = Vec::new();
            for s in 0..config.steps {
                let p = Vec3::new(x, y, coord(2, s, config.steps));
                let q = grid.query(p);
                let prob = sigmoid(q.semantic_logit);
                if q.sigma >= config.density_threshold && prob >= config.semantic_threshold {
                    hits.push((p, q.sigma, prob));
                }
            }
            hits
        })
        .collect();
    let mut cloud = FruitPointCloud::default();
    for (p, s, prob) in rays.into_iter().flatten() {
        cloud.push(p, s, prob);
    }
    Ok(cloud)
}

/// Points inside `bounds` (inclusive).
pub fn crop(cloud: &FruitPointCloud, bounds: &Aabb) -> Result<FruitPointCloud> {
    if !bounds.is_valid() {
        return Err(Error::InvalidArgument(format!("degenerate crop box {bounds:?}")));
    }
    Ok(cloud.filtered(|i| bounds.contains(cloud.points[i])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::{self, SceneSpec};

    fn fruit_grid(center: Vec3, radius: f64) -> FieldGrid {
        let spec = SceneSpec {
            fruit_count: 0,
            fruit_radius: radius,
            foliage: scenegen::FoliageSpec {
                amplitude: 0.0,
                frequency: 0.0,
            },
            trunk: scenegen::TrunkSpec {
                density: 0.0,
                ..Default::default()
            },
            ..SceneSpec::default()
        };
        let mut scene = scenegen::generate_scene(&spec).unwrap();
        scene.fruits.push(center);
        scenegen::voxelize(&scene, [48; 3]).unwrap()
    }

    fn small() -> ExportConfig {
        ExportConfig {
            lateral_resolution: 64,
            steps: 64,
            ..ExportConfig::default()
        }
    }

    #[test]
    fn empty_grid_gives_empty_cloud() {
        let g = FieldGrid::init([8; 3], Aabb::unit(), -4.0, -4.0).unwrap();
        assert!(sample_volume(&g, &small()).unwrap().is_empty());
    }

    #[test]
    fn centroid_of_one_fruit() {
        let (c, r) = (Vec3::new(0.07, -0.11, 0.03), 0.1);
        let g = fruit_grid(c, r);
        let cloud = sample_volume(&g, &ExportConfig::default()).unwrap();
        assert!(cloud.len() > 1000);
        assert!(cloud.centroid().unwrap().dist(c) < 0.1 * r);
        assert!(cloud.points.iter().all(|p| p.dist(c) < r + 0.05));
        for i in 0..cloud.len() {
            assert!(cloud.sigma[i] >= 1.0 && cloud.semantic[i] >= 0.9);
        }
    }

    #[test]
    fn thresholds_are_monotone() {
        let g = fruit_grid(Vec3::ZERO, 0.12);
        let base = sample_volume(&g, &small()).unwrap();
        for (ds, ss) in [(50.0, 0.9), (1.0, 0.99), (300.0, 0.999)] {
            let cfg = ExportConfig {
                density_threshold: ds,
                semantic_threshold: ss,
                ..small()
            };
            let strict = sample_volume(&g, &cfg).unwrap();
            assert!(strict.len() <= base.len());
            assert!(strict.points.iter().all(|p| base.points.contains(p)));
        }
    }

    #[test]
    fn doubling_lateral_resolution_scales_count() {
        let g = fruit_grid(Vec3::ZERO, 0.15);
        let a = sample_volume(&g, &small()).unwrap().len() as f64;
        let cfg = ExportConfig {
            lateral_resolution: 128,
            ..small()
        };
        let b = sample_volume(&g, &cfg).unwrap().len() as f64;
        assert!((2.0..=6.0).contains(&(b / a)), "{a} {b}");
    }

    #[test]
    fn config_rejects_out_of_range_semantic_threshold() {
        let cfg = ExportConfig {
            semantic_threshold: 1.0 + 1e-9,
            ..ExportConfig::default()
        };
        let mut d = Vec::new();
        cfg.diagnostics("export", &mut d);
        assert_eq!(d, vec!["export.semantic_threshold: must lie in [0, 1]".to_string()]);
    }

    #[test]
    fn crop_properties() {
        let g = fruit_grid(Vec3::ZERO, 0.12);
        let cloud = sample_volume(&g, &small()).unwrap();
        assert_eq!(crop(&cloud, &Aabb::unit()).unwrap(), cloud);
        let far = Aabb::new(Vec3::splat(0.3), Vec3::splat(0.4));
        assert!(crop(&cloud, &far).unwrap().is_empty());
        let half = Aabb::new(Vec3::new(-0.5, -0.5, -0.5), Vec3::new(0.0, 0.5, 0.5));
        let once = crop(&cloud, &half).unwrap();
        assert!(!once.is_empty() && once.len() < cloud.len());
        assert_eq!(crop(&once, &half).unwrap(), once);
        let flat = Aabb::new(Vec3::ZERO, Vec3::new(1.0, 0.0, 1.0));
        assert!(crop(&cloud, &flat).is_err());
    }
}
