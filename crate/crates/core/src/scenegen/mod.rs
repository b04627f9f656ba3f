//! Procedural orchard scenes with known fruit positions.
//!
//! A scene is a density field built from three primitives: constant-density
//! fruit spheres, a vertical trunk cylinder and a smooth foliage blob filling
//! the crown sphere. Frames are rendered from it by ray marching with the
//! same compositing rule the learned field uses, which makes the generator
//! the ground-truth oracle for every later stage.

mod camera;
mod io;
mod masks;
mod raster;

pub use camera::{sample_hemisphere_cameras, Camera, Intrinsics};
pub use io::{
    read_frames, read_ground_truth, read_json, write_frames, write_ground_truth, write_json,
    GroundTruth, Transforms, TransformsFrame, GT_FILE, TRANSFORMS_FILE,
};
pub use masks::{blobs, corrupt_all, corrupt_masks, CorruptionMode, CorruptionStep};
pub use raster::{march_pixel, render_frame, render_frames, PosedFrame};

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::field::{FieldGrid, Voxel};
use crate::geom::{Aabb, Vec3};
use crate::render::logit;
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Maximum candidate placements tried before giving up.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

pub const FRUIT_COLOR: [f64; 3] = [0.85, 0.12, 0.08];
pub const FOLIAGE_COLOR: [f64; 3] = [0.20, 0.46, 0.14];
pub const TRUNK_COLOR: [f64; 3] = [0.36, 0.23, 0.12];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrunkSpec {
    pub radius: f64,
    /// Length below the crown center; the trunk runs up to the crown center.
    pub height: f64,
    pub density: f64,
}

impl Default for TrunkSpec {
    fn default() -> Self {
        TrunkSpec {
            radius: 0.04,
            height: 0.6,
            density: 400.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoliageSpec {
    /// Peak foliage density; 0 disables foliage.
    pub amplitude: f64,
    /// Spatial frequency of the modulating noise (radians per unit length).
    pub frequency: f64,
}

impl Default for FoliageSpec {
    fn default() -> Self {
        FoliageSpec {
            amplitude: 1.0,
            frequency: 25.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    /// Placement seed. Not part of the serialized spec: the pipeline derives
    /// it from its global seed.
    #[serde(skip)]
    pub seed: u64,
    pub fruit_count: usize,
    pub fruit_radius: f64,
    pub fruit_density: f64,
    pub crown_center: Vec3,
    pub crown_radius: f64,
    /// Fraction of fruits placed in touching groups of two or three.
    pub cluster_fraction: f64,
    /// Center separation range inside a group, in fruit radii.
    pub cluster_separation: [f64; 2],
    /// Minimum center separation between fruits of different groups, in
    /// fruit radii; must exceed 2.
    pub min_separation: f64,
    /// Fruit centers are drawn with radial distance at least
    /// `fruit_shell · crown_radius` from the crown center.
    pub fruit_shell: f64,
    pub trunk: TrunkSpec,
    pub foliage: FoliageSpec,
    /// Scene region; every primitive is clipped to it.
    pub bounds: Aabb,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 0,
            fruit_count: 50,
            fruit_radius: 0.04,
            fruit_density: 400.0,
            crown_center: Vec3::new(0.0, 0.0, 0.05),
            crown_radius: 0.36,
            cluster_fraction: 0.2,
            cluster_separation: [1.0, 1.6],
            min_separation: 2.5,
            fruit_shell: 0.0,
            trunk: TrunkSpec::default(),
            foliage: FoliageSpec::default(),
            bounds: Aabb::unit(),
        }
    }
}

impl SceneSpec {
    /// Appends one message per violated invariant, prefixed by `path`.
    pub fn diagnostics(&self, path: &str, out: &mut Vec<String>) {
        let mut bad = |field: &str, msg: &str| out.push(format!("{path}.{field}: {msg}"));
        if !(self.fruit_radius > 0.0) {
            bad("fruit_radius", "must be > 0");
        }
        if !(self.fruit_density > 0.0) {
            bad("fruit_density", "must be > 0");
        }
        if !(self.crown_radius > 0.0) {
            bad("crown_radius", "must be > 0");
        }
        if !(0.0..=1.0).contains(&self.cluster_fraction) {
            bad("cluster_fraction", "must lie in [0, 1]");
        }
        let [lo, hi] = self.cluster_separation;
        if !(lo > 0.0 && lo <= hi) {
            bad("cluster_separation", "must satisfy 0 < lo <= hi");
        }
        if !(self.min_separation > 2.0) {
            bad("min_separation", "must be > 2 fruit radii");
        }
        if !(0.0..1.0).contains(&self.fruit_shell) {
            bad("fruit_shell", "must lie in [0, 1)");
        }
        if !(self.trunk.radius >= 0.0 && self.trunk.height >= 0.0 && self.trunk.density >= 0.0) {
            bad("trunk", "radius, height and density must be >= 0");
        }
        if !(self.foliage.amplitude >= 0.0 && self.foliage.frequency >= 0.0) {
            bad("foliage", "amplitude and frequency must be >= 0");
        }
        if !self.bounds.is_valid() {
            bad("bounds", "min must be < max on every axis");
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut d = Vec::new();
        self.diagnostics("scene", &mut d);
        if d.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(d.join("; ")))
        }
    }

    pub fn template_volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.fruit_radius.powi(3)
    }
}

/// One plane wave of the foliage noise.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Wave {
    direction: Vec3,
    phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub spec: SceneSpec,
    /// Ground-truth fruit centers.
    pub fruits: Vec<Vec3>,
    /// Indices into `fruits` of each touching group.
    pub groups: Vec<Vec<usize>>,
    waves: [Wave; 3],
}

/// Density, color and fruit fraction of the analytic scene at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenePoint {
    pub sigma: f64,
    pub color: [f64; 3],
    /// Share of the density contributed by fruit, in [0, 1].
    pub fruit: f64,
}

/// Places fruits by rejection sampling inside the crown sphere.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut r = rng::rng(rng::derive(spec.seed, rng::stream::SCENE));
    let waves = [(); 3].map(|_| Wave {
        direction: random_unit(&mut r),
        phase: r.random::<f64>() * std::f64::consts::TAU,
    });

    let group_sizes = group_sizes(spec, &mut r);
    let grouped: usize = group_sizes.iter().sum();
    let singles = spec.fruit_count - grouped;
    let rf = spec.fruit_radius;
    let min_sep = spec.min_separation * rf;
    let [sep_lo, sep_hi] = spec.cluster_separation.map(|s| s * rf);

    let mut fruits: Vec<Vec3> = Vec::with_capacity(spec.fruit_count);
    let mut groups = Vec::new();
    let mut attempts = 0usize;
    let fail = |placed: usize, attempts: usize| Error::PackingFailure {
        requested: spec.fruit_count,
        placed,
        attempts,
    };

    // Groups first: they are the hardest to fit.
    let units: Vec<usize> = group_sizes
        .iter()
        .copied()
        .chain(std::iter::repeat(1).take(singles))
        .collect();
    for &size in &units {
        loop {
            if attempts >= MAX_PLACEMENT_ATTEMPTS {
                return Err(fail(fruits.len(), attempts));
            }
            attempts += 1;
            let Some(candidate) = propose_unit(spec, size, sep_lo, sep_hi, &mut r) else {
                continue;
            };
            let clear = candidate
                .iter()
                .all(|c| fruits.iter().all(|f| f.dist(*c) > min_sep));
            if clear {
                if size > 1 {
                    groups.push((fruits.len()..fruits.len() + size).collect());
                }
                fruits.extend(candidate);
                break;
            }
        }
    }

    Ok(Scene {
        spec: spec.clone(),
        fruits,
        groups,
        waves,
    })
}

/// Sizes of the touching groups. A single leftover clustered fruit is placed
/// on its own.
fn group_sizes(spec: &SceneSpec, r: &mut Rng) -> Vec<usize> {
    let mut remaining = (spec.cluster_fraction * spec.fruit_count as f64).round() as usize;
    let mut sizes = Vec::new();
    while remaining >= 2 {
        let size = match remaining {
            2 | 4 => 2,
            3 => 3,
            _ => {
                if r.random::<bool>() {
                    2
                } else {
                    3
                }
            }
        };
        sizes.push(size);
        remaining -= size;
    }
    sizes
}

fn random_unit(r: &mut Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn random_center(spec: &SceneSpec, r: &mut Rng) -> Vec3 {
    let s3 = spec.fruit_shell.powi(3);
    let u: f64 = r.random_range(s3..=1.0);
    spec.crown_center + random_unit(r) * (spec.crown_radius * u.cbrt())
}

fn in_crown(spec: &SceneSpec, p: Vec3) -> bool {
    p.dist(spec.crown_center) <= spec.crown_radius
}

/// A candidate group of `size` centers with pairwise separations in
/// `[lo, hi]`, or `None` if the sampled members leave the crown or violate
/// the separation band.
fn propose_unit(spec: &SceneSpec, size: usize, lo: f64, hi: f64, r: &mut Rng) -> Option<Vec<Vec3>> {
    let first = random_center(spec, r);
    let mut members = vec![first];
    while members.len() < size {
        let anchor = members[members.len() - 1];
        let p = anchor + random_unit(r) * r.random_range(lo..=hi);
        let ok = in_crown(spec, p)
            && members.iter().all(|m| {
                let d = m.dist(p);
                d >= lo && d <= hi
            });
        if !ok {
            return None;
        }
        members.push(p);
    }
    Some(members)
}

impl Scene {
    pub fn fruit_radius(&self) -> f64 {
        self.spec.fruit_radius
    }

    fn foliage_density(&self, x: Vec3) -> f64 {
        let f = &self.spec.foliage;
        if f.amplitude == 0.0 {
            return 0.0;
        }
        let d2 = x.dist_sq(self.spec.crown_center) / self.spec.crown_radius.powi(2);
        if d2 >= 1.0 {
            return 0.0;
        }
        let falloff = (1.0 - d2) * (1.0 - d2);
        let noise: f64 = self
            .waves
            .iter()
            .map(|w| (f.frequency * w.direction.dot(x) + w.phase).sin())
            .sum::<f64>()
            / 3.0;
        f.amplitude * falloff * (0.5 + 0.5 * noise)
    }

    fn in_trunk(&self, x: Vec3) -> bool {
        let t = &self.spec.trunk;
        let c = self.spec.crown_center;
        let dx = x.x() - c.x();
        let dy = x.y() - c.y();
        x.z() <= c.z() && x.z() >= c.z() - t.height && dx * dx + dy * dy <= t.radius * t.radius
    }

    fn in_fruit(&self, x: Vec3) -> bool {
        let r2 = self.spec.fruit_radius.powi(2);
        self.fruits.iter().any(|f| f.dist_sq(x) <= r2)
    }

    /// Point evaluation of the analytic field; zero outside the bounds.
    pub fn sample(&self, x: Vec3) -> ScenePoint {
        if !self.spec.bounds.contains(x) {
            return ScenePoint {
                sigma: 0.0,
                color: [0.0; 3],
                fruit: 0.0,
            };
        }
        self.sample_with(x, self.in_fruit(x), self.in_trunk(x))
    }

    pub(crate) fn sample_with(&self, x: Vec3, in_fruit: bool, in_trunk: bool) -> ScenePoint {
        let fruit = if in_fruit { self.spec.fruit_density } else { 0.0 };
        let trunk = if in_trunk { self.spec.trunk.density } else { 0.0 };
        let foliage = self.foliage_density(x);
        let sigma = fruit + trunk + foliage;
        if sigma == 0.0 {
            return ScenePoint {
                sigma,
                color: [0.0; 3],
                fruit: 0.0,
            };
        }
        let mut color = [0.0; 3];
        for c in 0..3 {
            color[c] = (fruit * FRUIT_COLOR[c] + trunk * TRUNK_COLOR[c] + foliage * FOLIAGE_COLOR[c]) / sigma;
        }
        ScenePoint {
            sigma,
            color,
            fruit: fruit / sigma,
        }
    }

    /// Parametric interval of a ray inside the trunk cylinder.
    pub(crate) fn trunk_interval(&self, o: Vec3, d: Vec3) -> Option<(f64, f64)> {
        let t = &self.spec.trunk;
        if t.radius == 0.0 || t.height == 0.0 || t.density == 0.0 {
            return None;
        }
        let c = self.spec.crown_center;
        let (ox, oy) = (o.x() - c.x(), o.y() - c.y());
        let a = d.x() * d.x() + d.y() * d.y();
        let (mut t0, mut t1) = if a < 1e-15 {
            if ox * ox + oy * oy > t.radius * t.radius {
                return None;
            }
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            let b = ox * d.x() + oy * d.y();
            let cc = ox * ox + oy * oy - t.radius * t.radius;
            let disc = b * b - a * cc;
            if disc <= 0.0 {
                return None;
            }
            let s = disc.sqrt();
            ((-b - s) / a, (-b + s) / a)
        };
        let (zlo, zhi) = (c.z() - t.height, c.z());
        if d.z().abs() < 1e-15 {
            if o.z() < zlo || o.z() > zhi {
                return None;
            }
        } else {
            let mut a = (zlo - o.z()) / d.z();
            let mut b = (zhi - o.z()) / d.z();
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
        }
        (t0 < t1).then_some((t0, t1))
    }
}

/// Raw density used for empty nodes by [`voxelize`].
const EMPTY_RAW_DENSITY: f64 = -10.0;

/// Samples the analytic scene at the nodes of a grid over the scene bounds,
/// inverting the field activations. Density is point sampled. Color and the
/// fruit label come from the densest node of the 3×3×3 neighborhood, so
/// trilinear interpolation near a surface does not blend in the empty-space
/// values.
pub fn voxelize(scene: &Scene, resolution: [usize; 3]) -> Result<FieldGrid> {
    let mut grid = FieldGrid::init(resolution, scene.spec.bounds, EMPTY_RAW_DENSITY, 0.0)?;
    let [nx, ny, nz] = resolution;
    let mut points = Vec::with_capacity(grid.len());
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                points.push(scene.sample(grid.node_position(i, j, k)));
            }
        }
    }
    let clamp = |p: f64| logit(p.clamp(1e-3, 1.0 - 1e-3));
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = grid.index(i, j, k);
                let mut best = points[idx];
                for (dk, dj, di) in neighborhood() {
                    let (a, b, c) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                    if a < 0 || b < 0 || c < 0 || a >= nx as i64 || b >= ny as i64 || c >= nz as i64 {
                        continue;
                    }
                    let q = points[grid.index(a as usize, b as usize, c as usize)];
                    if q.sigma > best.sigma {
                        best = q;
                    }
                }
                let sigma = points[idx].sigma;
                // Inverse softplus: ln(e^σ − 1) = σ + ln(1 − e^−σ).
                let raw_density = if sigma > 0.0 {
                    (sigma + (-(-sigma).exp_m1()).ln()).max(EMPTY_RAW_DENSITY)
                } else {
                    EMPTY_RAW_DENSITY
                };
                let v: Voxel = [
                    raw_density,
                    clamp(best.color[0]),
                    clamp(best.color[1]),
                    clamp(best.color[2]),
                    clamp(best.fruit),
                ];
                grid.raw_mut()[idx] = v;
            }
        }
    }
    Ok(grid)
}

fn neighborhood() -> impl Iterator<Item = (i64, i64, i64)> {
    (-1..=1).flat_map(|a| (-1..=1).flat_map(move |b| (-1..=1).map(move |c| (a, b, c))))
}
