//! Counting fruit in a point cloud.
//!
//! The cascade: radius outlier removal, DBSCAN, triage of each cluster by
//! its hull volume relative to a template fruit, merging of tiny fragments,
//! and for clusters too large to be one fruit an agglomerative split scored
//! by the Hausdorff distance between the cluster and template spheres placed
//! at the split centroids.

mod dbscan;
mod geometry;
mod neighbors;
mod ward;

pub use dbscan::{dbscan, remove_outliers, DbscanResult};
pub use geometry::{boundary_points, cluster_volume, directed_hausdorff, fibonacci_sphere, hausdorff, hull_vertices};
pub use ward::{cut, ward_dendrogram, Merge};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::export::FruitPointCloud;
use crate::geom::Vec3;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierConfig {
    pub radius: f64,
    pub min_neighbors: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DbscanConfig {
    pub eps: f64,
    pub min_pts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CountConfig {
    pub outlier: OutlierConfig,
    pub dbscan: DbscanConfig,
    /// Template fruit radius r_f.
    pub fruit_radius: f64,
    /// Points on the template sphere.
    pub template_points: usize,
    /// Single-fruit band of hull volume over template volume.
    pub volume_band: [f64; 2],
    /// Largest number of fruits one cluster may be split into.
    pub max_fruits: usize,
    /// Clusters larger than this are subsampled before refinement.
    pub max_refine_points: usize,
    /// Which points of a multi cluster the placed templates are scored
    /// against.
    pub refine_target: RefineTarget,
    /// Score only the outer surface of the union of placed templates:
    /// template points inside another placed sphere are dropped. Matters
    /// when fruits overlap.
    pub outer_template_surface: bool,
}

/// The cluster side of the split score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum RefineTarget {
    /// Every cluster point; suited to shell-like clouds.
    Points,
    /// Convex-hull vertices only.
    HullVertices,
    /// The outer layer of a solid cloud; see [`boundary_points`].
    Boundary { radius: f64, min_offset: f64 },
}

impl RefineTarget {
    /// The subset of `points` that splits are scored against.
    pub fn select(&self, points: &[Vec3]) -> Vec<Vec3> {
        let out = match *self {
            RefineTarget::Points => return points.to_vec(),
            RefineTarget::HullVertices => hull_vertices(points),
            RefineTarget::Boundary { radius, min_offset } => boundary_points(points, radius, min_offset),
        };
        if out.is_empty() {
            points.to_vec()
        } else {
            out
        }
    }
}

impl Default for CountConfig {
    fn default() -> Self {
        CountConfig {
            outlier: OutlierConfig {
                radius: 0.012,
                min_neighbors: 4,
            },
            dbscan: DbscanConfig {
                eps: 0.012,
                min_pts: 4,
            },
            fruit_radius: 0.04,
            template_points: 256,
            volume_band: [0.3, 1.8],
            max_fruits: 6,
            max_refine_points: 1500,
            refine_target: RefineTarget::Points,
            outer_template_surface: false,
        }
    }
}

impl CountConfig {
    pub fn diagnostics(&self, path: &str, out: &mut Vec<String>) {
        let mut bad = |field: &str, msg: &str| out.push(format!("{path}.{field}: {msg}"));
        if !(self.outlier.radius > 0.0) {
            bad("outlier.radius", "must be > 0");
        }
        if self.outlier.min_neighbors < 1 {
            bad("outlier.min_neighbors", "must be >= 1");
        }
        if !(self.dbscan.eps > 0.0) {
            bad("dbscan.eps", "must be > 0");
        }
        if self.dbscan.min_pts < 1 {
            bad("dbscan.min_pts", "must be >= 1");
        }
        if !(self.fruit_radius > 0.0) {
            bad("fruit_radius", "must be > 0");
        }
        if self.template_points < 1 {
            bad("template_points", "must be >= 1");
        }
        let [lo, hi] = self.volume_band;
        if !(lo > 0.0 && lo < 1.0 && hi > 1.0) {
            bad("volume_band", "must satisfy 0 < lo < 1 < hi");
        }
        if self.max_fruits < 2 {
            bad("max_fruits", "must be >= 2");
        }
        if self.max_refine_points < 1 {
            bad("max_refine_points", "must be >= 1");
        }
        if let RefineTarget::Boundary { radius, min_offset } = self.refine_target {
            if !(radius > 0.0) {
                bad("refine_target.radius", "must be > 0");
            }
            if !(0.0..1.0).contains(&min_offset) {
                bad("refine_target.min_offset", "must lie in [0, 1)");
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut d = Vec::new();
        self.diagnostics("count", &mut d);
        if d.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(d))
        }
    }

    pub fn template_volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.fruit_radius.powi(3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Single,
    Multi,
    Tiny,
}

/// Label for a hull volume given the template volume and the single band.
pub fn triage(volume: f64, template_volume: f64, band: [f64; 2]) -> Label {
    let ratio = volume / template_volume;
    if ratio < band[0] {
        Label::Tiny
    } else if ratio <= band[1] {
        Label::Single
    } else {
        Label::Multi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Indices into the point array the cluster was built from, sorted.
    pub members: Vec<usize>,
    pub centroid: Vec3,
    pub volume: f64,
    pub label: Label,
}

impl Cluster {
    pub fn new(points: &[Vec3], mut members: Vec<usize>, config: &CountConfig) -> Self {
        members.sort_unstable();
        let pts: Vec<Vec3> = members.iter().map(|&i| points[i]).collect();
        let volume = cluster_volume(&pts);
        Cluster {
            centroid: centroid(&pts),
            label: triage(volume, config.template_volume(), config.volume_band),
            members,
            volume,
        }
    }
}

pub fn centroid(points: &[Vec3]) -> Vec3 {
    points.iter().fold(Vec3::ZERO, |a, &p| a + p) / points.len().max(1) as f64
}

/// Groups tiny clusters by single linkage on centroid distance `< r_f`.
/// Each group (possibly a lone cluster) is re-triaged on its combined
/// points; groups within the single band are promoted, everything else is
/// discarded. Returns `(promoted, discarded)` with members as indices into
/// `points`.
pub fn merge_tiny(
    points: &[Vec3],
    tiny: &[Cluster],
    config: &CountConfig,
) -> (Vec<Cluster>, Vec<Cluster>) {
    let n = tiny.len();
    let mut group: Vec<usize> = (0..n).collect();
    fn find(g: &mut [usize], mut x: usize) -> usize {
        while g[x] != x {
            g[x] = g[g[x]];
            x = g[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            if tiny[i].centroid.dist(tiny[j].centroid) < config.fruit_radius {
                let (a, b) = (find(&mut group, i), find(&mut group, j));
                group[a.max(b)] = a.min(b);
            }
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let r = find(&mut group, i);
        members[r].extend(&tiny[i].members);
    }
    let mut promoted = Vec::new();
    let mut discarded = Vec::new();
    for m in members.into_iter().filter(|m| !m.is_empty()) {
        let c = Cluster::new(points, m, config);
        if c.label == Label::Single {
            promoted.push(c);
        } else {
            discarded.push(c);
        }
    }
    (promoted, discarded)
}

/// Outcome of splitting one cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub k: usize,
    pub centers: Vec<Vec3>,
    /// Hausdorff score for each k = 1..=scores.len().
    pub scores: Vec<f64>,
}

/// Splits `points` into k = 1..=N Ward sub-clusters, places `template` at
/// each sub-cluster centroid and scores the union of placed templates
/// against the `target` subset of the points. Returns the smallest k with
/// the minimal score.
pub fn refine_multi(points: &[Vec3], template: &[Vec3], max_k: usize, target: RefineTarget) -> Result<Refinement> {
    refine_against(points, &target.select(points), template, max_k, false)
}

/// [`refine_multi`] with the scored point set given explicitly. With
/// `outer_only`, placed template points strictly inside another placed
/// template sphere are left out of the score.
pub fn refine_against(
    points: &[Vec3],
    scored: &[Vec3],
    template: &[Vec3],
    max_k: usize,
    outer_only: bool,
) -> Result<Refinement> {
    if points.is_empty() || scored.is_empty() || template.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let merges = ward_dendrogram(points);
    let mut scores = Vec::new();
    let mut best: Option<(f64, usize, Vec<Vec3>)> = None;
    for k in 1..=max_k.min(points.len()) {
        let labels = cut(points.len(), &merges, k);
        let mut sums = vec![(Vec3::ZERO, 0usize); k];
        for (i, &l) in labels.iter().enumerate() {
            sums[l].0 = sums[l].0 + points[i];
            sums[l].1 += 1;
        }
        let centers: Vec<Vec3> = sums.iter().map(|&(s, c)| s / c as f64).collect();
        let mut placed: Vec<Vec3> = centers
            .iter()
            .flat_map(|&c| template.iter().map(move |&t| c + t))
            .collect();
        if outer_only && k > 1 {
            let r2 = template.iter().map(|t| t.norm_sq()).fold(0.0, f64::max) * (1.0 - 1e-9);
            let outer: Vec<Vec3> = placed
                .iter()
                .enumerate()
                .filter(|&(i, p)| {
                    let own = i / template.len();
                    centers.iter().enumerate().all(|(j, c)| j == own || p.dist_sq(*c) >= r2)
                })
                .map(|(_, &p)| p)
                .collect();
            if !outer.is_empty() {
                placed = outer;
            }
        }
        let d = hausdorff(&placed, scored)?;
        scores.push(d);
        if best.as_ref().is_none_or(|b| d < b.0) {
            best = Some((d, k, centers));
        }
    }
    let (_, k, centers) = best.unwrap();
    Ok(Refinement { k, centers, scores })
}

/// Canonical order, then at most `max` points taken by stride.
fn canonical_subsample(mut pts: Vec<Vec3>, max: usize) -> Vec<Vec3> {
    pts.sort_by(|a, b| a.lex_cmp(b));
    if pts.len() <= max {
        return pts;
    }
    let stride = pts.len() as f64 / max as f64;
    (0..max).map(|i| pts[(i as f64 * stride) as usize]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub label: Label,
    pub points: usize,
    pub centroid: Vec3,
    pub volume_ratio: f64,
    /// Fruits counted from this cluster.
    pub fruits: usize,
    /// Split scores for multi clusters.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub single: usize,
    pub multi: usize,
    pub tiny: usize,
    pub tiny_promoted: usize,
    pub tiny_discarded: usize,
    /// Fruits counted inside multi clusters.
    pub multi_fruits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    pub total: usize,
    pub labels: LabelCounts,
    pub input_points: usize,
    pub points_after_outliers: usize,
    pub noise_points: usize,
    /// One estimated center per counted fruit, sorted lexicographically.
    pub fruit_centers: Vec<Vec3>,
    pub clusters: Vec<ClusterSummary>,
    pub config: CountConfig,
}

/// Runs the full cascade.
pub fn count(cloud: &FruitPointCloud, config: &CountConfig) -> Result<CountReport> {
    config.validate()?;
    let kept = remove_outliers(&cloud.points, config.outlier.radius, config.outlier.min_neighbors);
    let points: Vec<Vec3> = kept.iter().map(|&i| cloud.points[i]).collect();
    let db = dbscan(&points, config.dbscan.eps, config.dbscan.min_pts);

    let clusters: Vec<Cluster> = db
        .clusters
        .into_par_iter()
        .map(|m| Cluster::new(&points, m, config))
        .collect();
    let tv = config.template_volume();
    let ratio = |c: &Cluster| c.volume / tv;

    let mut labels = LabelCounts {
        single: 0,
        multi: 0,
        tiny: 0,
        tiny_promoted: 0,
        tiny_discarded: 0,
        multi_fruits: 0,
    };
    let mut summaries = Vec::new();
    let mut centers = Vec::new();
    let tiny: Vec<Cluster> = clusters.iter().filter(|c| c.label == Label::Tiny).cloned().collect();
    labels.tiny = tiny.len();
    let (promoted, discarded) = merge_tiny(&points, &tiny, config);
    labels.tiny_promoted = promoted.len();
    labels.tiny_discarded = discarded.len();

    let template = fibonacci_sphere(config.template_points, config.fruit_radius);
    let multis: Vec<&Cluster> = clusters.iter().filter(|c| c.label == Label::Multi).collect();
    let refinements: Result<Vec<Refinement>> = multis
        .par_iter()
        .map(|c| {
            let all: Vec<Vec3> = c.members.iter().map(|&i| points[i]).collect();
            let scored = canonical_subsample(config.refine_target.select(&all), config.max_refine_points);
            let pts = canonical_subsample(all, config.max_refine_points);
            refine_against(&pts, &scored, &template, config.max_fruits, config.outer_template_surface)
        })
        .collect();
    let refinements = refinements?;

    for c in clusters.iter().filter(|c| c.label == Label::Single) {
        labels.single += 1;
        centers.push(c.centroid);
        summaries.push(summary(c, ratio(c), 1, None));
    }
    for (c, r) in multis.iter().zip(refinements) {
        labels.multi += 1;
        labels.multi_fruits += r.k;
        centers.extend(&r.centers);
        summaries.push(summary(c, ratio(c), r.k, Some(r.scores)));
    }
    for c in &promoted {
        centers.push(c.centroid);
        summaries.push(summary(c, ratio(c), 1, None));
    }
    for c in &discarded {
        summaries.push(summary(c, ratio(c), 0, None));
    }
    centers.sort_by(|a, b| a.lex_cmp(b));
    summaries.sort_by(|a, b| a.centroid.lex_cmp(&b.centroid));
    Ok(CountReport {
        total: centers.len(),
        labels,
        input_points: cloud.len(),
        points_after_outliers: points.len(),
        noise_points: db.noise.len(),
        fruit_centers: centers,
        clusters: summaries,
        config: config.clone(),
    })
}

fn summary(c: &Cluster, ratio: f64, fruits: usize, scores: Option<Vec<f64>>) -> ClusterSummary {
    ClusterSummary {
        label: c.label,
        points: c.members.len(),
        centroid: c.centroid,
        volume_ratio: ratio,
        fruits,
        scores,
    }
}
