//! Point-set geometry used by the counting cascade: hull volume, Hausdorff
//! distance and the template sphere.

use std::collections::BTreeMap;

use chull::ConvexHullWrapper;

use super::neighbors::GridIndex;
use crate::geom::Vec3;
use crate::{Error, Result};

/// Convex-hull volume, to [`VOLUME_DIGITS`] significant digits. Fewer
/// than four points, coplanar sets and any hull the solver cannot build
/// count as volume 0.
pub fn cluster_volume(points: &[Vec3]) -> f64 {
    hull(points).map_or(0.0, |h| round_significant(h.volume().abs(), VOLUME_DIGITS))
}

/// The hull solver walks hash sets, so coplanar faces are triangulated in
/// a per-process order and the summed volume moves in its last bits.
/// Rounding keeps reports byte-identical across runs.
pub const VOLUME_DIGITS: i32 = 9;

fn round_significant(v: f64, digits: i32) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    let scale = 10f64.powi(digits - 1 - v.abs().log10().floor() as i32);
    (v * scale).round() / scale
}

/// Hull vertices in lexicographic order, or the input itself for
/// degenerate sets.
pub fn hull_vertices(points: &[Vec3]) -> Vec<Vec3> {
    match hull(points) {
        Some(h) => {
            let (v, _) = h.vertices_indices();
            let mut v: Vec<Vec3> = v.into_iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect();
            v.sort_by(|a, b| a.lex_cmp(b));
            v
        }
        None => points.to_vec(),
    }
}

/// Points on the outer layer of a solid cloud: those whose neighbors
/// within `radius` are lopsided, i.e. whose neighbor centroid lies at least
/// `min_offset · radius` away. Interior points of a uniformly sampled solid
/// have a centered neighborhood; surface points see only about half a ball.
/// Points with no neighbors count as boundary. Input order is kept.
pub fn boundary_points(points: &[Vec3], radius: f64, min_offset: f64) -> Vec<Vec3> {
    let index = GridIndex::new(points, radius);
    points
        .iter()
        .filter(|&&x| {
            let mut sum = Vec3::ZERO;
            let mut n = 0usize;
            index.for_each_within(x, |j| {
                sum = sum + points[j];
                n += 1;
            });
            // n counts x itself.
            n <= 1 || (sum / n as f64).dist(x) >= min_offset * radius
        })
        .copied()
        .collect()
}

fn hull(points: &[Vec3]) -> Option<ConvexHullWrapper<f64>> {
    let candidates = column_extremes(points);
    if candidates.len() < 4 {
        return None;
    }
    let input: Vec<Vec<f64>> = candidates.iter().map(|p| p.0.to_vec()).collect();
    ConvexHullWrapper::try_new(&input, None).ok()
}

/// Only the lowest and highest point of each exact (x, y) column can be a
/// hull vertex; orthographic exports stack many points per column.
fn column_extremes(points: &[Vec3]) -> Vec<Vec3> {
    let mut cols: BTreeMap<[u64; 2], (Vec3, Vec3)> = BTreeMap::new();
    for &p in points {
        cols.entry([p.x().to_bits(), p.y().to_bits()])
            .and_modify(|(lo, hi)| {
                if p.z() < lo.z() {
                    *lo = p;
                }
                if p.z() > hi.z() {
                    *hi = p;
                }
            })
            .or_insert((p, p));
    }
    let mut out = Vec::with_capacity(2 * cols.len());
    for (lo, hi) in cols.into_values() {
        out.push(lo);
        if hi != lo {
            out.push(hi);
        }
    }
    out
}

/// Largest distance from a point of `a` to its nearest point in `b`. Uses
/// the early-break scan: once a point's running minimum falls below the
/// current maximum it cannot raise it.
pub fn directed_hausdorff(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let mut cmax = 0.0f64;
    for &x in a {
        let mut cmin = f64::INFINITY;
        for &y in b {
            let d = x.dist_sq(y);
            if d < cmax {
                cmin = d;
                break;
            }
            cmin = cmin.min(d);
        }
        if cmin > cmax {
            cmax = cmin;
        }
    }
    Ok(cmax.sqrt())
}

/// Symmetric Hausdorff distance.
pub fn hausdorff(x: &[Vec3], y: &[Vec3]) -> Result<f64> {
    Ok(directed_hausdorff(x, y)?.max(directed_hausdorff(y, x)?))
}

/// `m` points on a sphere of radius `r` about the origin, on a spherical
/// Fibonacci lattice.
pub fn fibonacci_sphere(m: usize, r: f64) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..m)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / m as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(rho * phi.cos(), rho * phi.sin(), z) * r
        })
        .collect()
}
