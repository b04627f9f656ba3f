//! Independent oracles shared by the integration tests and the acceptance
//! binary. Nothing here calls the code under test except through the
//! functions being checked.

#![allow(dead_code)]

use std::collections::BTreeSet;

use fruitfield::count::{dbscan, fibonacci_sphere, hausdorff, refine_multi, RefineTarget};
use fruitfield::field::{FieldGrid, CHANNELS, DENSITY, SEMANTIC};
use fruitfield::render::composite_weights;
use fruitfield::rng;
use fruitfield::scenegen::{self, Intrinsics, PosedFrame};
use fruitfield::train::{backward, evaluate, sample_batch, LossTerms};
use fruitfield::{Aabb, Vec3};
use rand::RngExt;

/// Outcome of one check: a one-line detail either way.
pub type Check = Result<String, String>;

// ---------------------------------------------------------------- DBSCAN

/// Partition by the textbook definitions, O(n²): core points have at least
/// `min_pts` points (self included) within `eps`; core points are joined
/// by direct reachability; a border point goes to its nearest core point,
/// ties to the lexicographically smaller point, then the smaller index.
/// Returns clusters as sorted member sets, plus the noise set.
pub fn brute_dbscan(points: &[Vec3], eps: f64, min_pts: usize) -> (BTreeSet<Vec<usize>>, Vec<usize>) {
    let n = points.len();
    let e2 = eps * eps;
    let near = |i: usize, j: usize| points[i].dist_sq(points[j]) <= e2;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in 0..i {
            if core[i] && core[j] && near(i, j) {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut label: Vec<Option<usize>> = (0..n).map(|i| core[i].then(|| root(&mut parent, i))).collect();
    let mut noise = Vec::new();
    for i in 0..n {
        if core[i] {
            continue;
        }
        let best = (0..n).filter(|&q| core[q] && near(i, q)).min_by(|&a, &b| {
            points[a]
                .dist_sq(points[i])
                .total_cmp(&points[b].dist_sq(points[i]))
                .then(points[a].lex_cmp(&points[b]))
                .then(a.cmp(&b))
        });
        match best {
            Some(q) => label[i] = label[q],
            None => noise.push(i),
        }
    }
    let mut groups = std::collections::BTreeMap::<usize, Vec<usize>>::new();
    for (i, l) in label.iter().enumerate() {
        if let Some(l) = l {
            groups.entry(*l).or_default().push(i);
        }
    }
    (groups.into_values().collect(), noise)
}

/// A random instance: blobs plus uniform background, with parameters
/// chosen so core, border and noise points all occur.
pub fn dbscan_instance(seed: u64) -> (Vec<Vec3>, f64, usize) {
    let mut r = rng::rng(seed);
    let n = r.random_range(1..=200usize);
    let blobs = r.random_range(1..=5usize);
    let centers: Vec<Vec3> = (0..blobs)
        .map(|_| Vec3::new(r.random_range(0.0..1.0), r.random_range(0.0..1.0), r.random_range(0.0..1.0)))
        .collect();
    let spread = r.random_range(0.02..0.15);
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        let p = if r.random_bool(0.7) {
            let c = centers[r.random_range(0..blobs)];
            c + Vec3::new(
                r.random_range(-spread..spread),
                r.random_range(-spread..spread),
                r.random_range(-spread..spread),
            )
        } else {
            Vec3::new(r.random_range(0.0..1.0), r.random_range(0.0..1.0), r.random_range(0.0..1.0))
        };
        pts.push(p);
    }
    // Exact duplicates exercise equal-distance ties.
    if n > 10 && r.random_bool(0.3) {
        for i in 0..5 {
            pts[i] = pts[n - 1 - i];
        }
    }
    let eps = r.random_range(0.02..0.2);
    let min_pts = r.random_range(1..=8usize);
    (pts, eps, min_pts)
}

pub fn check_dbscan(instances: u64) -> Check {
    let (mut sizes, mut clusters, mut noise) = (0, 0, 0);
    for seed in 0..instances {
        let (pts, eps, min_pts) = dbscan_instance(seed);
        let got = dbscan(&pts, eps, min_pts);
        let (want, want_noise) = brute_dbscan(&pts, eps, min_pts);
        let got_set: BTreeSet<Vec<usize>> = got.clusters.iter().cloned().collect();
        if got_set != want || got.noise != want_noise || got.clusters.len() != want.len() {
            return Err(format!("instance {seed} ({} points, eps {eps:.4}, min_pts {min_pts}) differs", pts.len()));
        }
        sizes += pts.len();
        clusters += want.len();
        noise += want_noise.len();
    }
    Ok(format!(
        "{instances} instances, {sizes} points in {clusters} clusters and {noise} noise, partitions equal"
    ))
}

// ------------------------------------------------------------- Hausdorff

pub fn brute_hausdorff(x: &[Vec3], y: &[Vec3]) -> f64 {
    let directed = |a: &[Vec3], b: &[Vec3]| {
        a.iter()
            .map(|p| b.iter().map(|q| p.dist(*q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(x, y).max(directed(y, x))
}

pub fn check_hausdorff(pairs: u64) -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..pairs {
        let mut r = rng::rng(1_000_000 + seed);
        let mut cloud = |n: usize, s: f64| -> Vec<Vec3> {
            (0..n)
                .map(|_| Vec3::new(r.random_range(-s..s), r.random_range(-s..s), r.random_range(-s..s)))
                .collect()
        };
        let nx = 1 + (seed as usize * 37) % 300;
        let ny = 1 + (seed as usize * 91) % 250;
        let x = cloud(nx, 1.0);
        let y = cloud(ny, 0.5 + (seed % 3) as f64);
        let got = hausdorff(&x, &y).map_err(|e| format!("pair {seed}: {e}"))?;
        let want = brute_hausdorff(&x, &y);
        let err = (got - want).abs();
        worst = worst.max(err);
        if err > 1e-12 {
            return Err(format!("pair {seed}: {got} vs brute force {want}"));
        }
    }
    Ok(format!("{pairs} pairs, max abs error {worst:.1e}"))
}

// ---------------------------------------------------------------- Refine

/// `k` sphere centers, each new one placed 2.2 to 2.6 r from a random
/// earlier center and at least `min_gap · r` from all of them.
pub fn sphere_group(k: usize, r: f64, min_gap: f64, seed: u64) -> Vec<Vec3> {
    let mut g = rng::rng(seed);
    let mut centers = vec![Vec3::ZERO];
    while centers.len() < k {
        let base = centers[g.random_range(0..centers.len())];
        let dir = loop {
            let v = Vec3::new(g.random_range(-1.0..1.0), g.random_range(-1.0..1.0), g.random_range(-1.0..1.0));
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                break v / n;
            }
        };
        let c = base + dir * (r * g.random_range(2.2..2.6));
        if centers.iter().all(|o| o.dist(c) >= min_gap * r) {
            centers.push(c);
        }
    }
    centers
}

/// Random points on the spheres, `per` each.
pub fn sphere_surface_points(centers: &[Vec3], r: f64, per: usize, seed: u64) -> Vec<Vec3> {
    let mut g = rng::rng(seed);
    let mut out = Vec::new();
    for &c in centers {
        let mut n = 0;
        while n < per {
            let v = Vec3::new(g.random_range(-1.0..1.0), g.random_range(-1.0..1.0), g.random_range(-1.0..1.0));
            let len = v.norm();
            if len > 1e-3 && len <= 1.0 {
                out.push(c + v * (r / len));
                n += 1;
            }
        }
    }
    out
}

pub fn check_refine(trials_per_k: u64) -> Check {
    let r = 0.04;
    let template = fibonacci_sphere(256, r);
    for k in 1..=6 {
        for t in 0..trials_per_k {
            let seed = 100 * k as u64 + t;
            let centers = sphere_group(k, r, 2.2, seed);
            let pts = sphere_surface_points(&centers, r, 250, seed + 7);
            let res = refine_multi(&pts, &template, 6, RefineTarget::Points).map_err(|e| e.to_string())?;
            if res.k != k {
                return Err(format!("group of {k} (trial {t}) refined to {} with scores {:?}", res.k, res.scores));
            }
        }
    }
    Ok(format!("k = 1..6, {trials_per_k} groups each, all recovered"))
}

// ------------------------------------------------------------- Gradients

pub fn random_grid(seed: u64) -> FieldGrid {
    let mut g = FieldGrid::init([8; 3], Aabb::unit(), 0.0, 0.0).unwrap();
    let mut r = rng::rng(seed);
    for v in g.raw_mut() {
        v[DENSITY] = r.random_range(-2.0..3.0);
        for c in 1..CHANNELS {
            v[c] = r.random_range(-2.0..2.0);
        }
    }
    g
}

pub fn random_frames(seed: u64, n: usize) -> Vec<PosedFrame> {
    let mut r = rng::rng(seed);
    let intr = Intrinsics::centered(8, 8, 1.0);
    scenegen::sample_hemisphere_cameras(n, 1.2, Vec3::ZERO, seed, intr)
        .unwrap()
        .into_iter()
        .map(|cam| {
            let rgb = (0..3 * 64).map(|_| r.random::<f32>()).collect();
            let mask = (0..64).map(|_| u8::from(r.random::<bool>())).collect();
            PosedFrame::new(cam, rgb, mask).unwrap()
        })
        .collect()
}

/// Central differences on every parameter of random 8³ grids. Density and
/// color are compared with the photometric loss alone, the semantic channel
/// with the total; the semantic loss must put exactly zero gradient on
/// density and color.
pub fn check_gradients(grids: u64) -> Check {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for seed in 0..grids {
        let grid = random_grid(10 + seed);
        let frames = random_frames(20 + seed, 2);
        let batch = sample_batch(&frames, &grid.bounds(), 12, 16, 30 + seed).map_err(|e| e.to_string())?;
        let grads = |terms| {
            let mut g = grid.clone();
            g.zero_gradients();
            backward(&mut g, &batch, terms, None).unwrap();
            g.grad().to_vec()
        };
        let sem_only = grads(LossTerms::SEMANTIC);
        if sem_only.iter().any(|v| v[..SEMANTIC].iter().any(|&x| x != 0.0)) {
            return Err(format!("grid {seed}: semantic loss reached density or color"));
        }
        let analytic = grads(LossTerms::BOTH);
        for i in 0..grid.len() {
            for c in 0..CHANNELS {
                let mut plus = grid.clone();
                plus.raw_mut()[i][c] += h;
                let mut minus = grid.clone();
                minus.raw_mut()[i][c] -= h;
                let (lp, lm) = (evaluate(&plus, &batch).unwrap(), evaluate(&minus, &batch).unwrap());
                let fd = if c == SEMANTIC {
                    (lp.l_total - lm.l_total) / (2.0 * h)
                } else {
                    (lp.l_photo - lm.l_photo) / (2.0 * h)
                };
                let a = analytic[i][c];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
                if rel >= 1e-3 {
                    return Err(format!("grid {seed} voxel {i} channel {c}: analytic {a} vs fd {fd}"));
                }
                checked += usize::from(a != 0.0);
            }
        }
    }
    Ok(format!("{grids} grids, {checked} nonzero partials, max rel error {worst:.1e}, semantic stop exact"))
}

// ------------------------------------------------------------ Compositing

pub fn check_compositing(rays: u64) -> Check {
    let mut r = rng::rng(77);
    let mut worst: f64 = 0.0;
    for i in 0..rays {
        let n = r.random_range(1..=128usize);
        // Mix of empty, thin and opaque media.
        let scale = [0.0, 1.0, 10.0, 500.0][(i % 4) as usize];
        let sigma: Vec<f64> = (0..n).map(|_| scale * r.random_range(0.0..1.0)).collect();
        let delta: Vec<f64> = (0..n).map(|_| r.random_range(1e-4..0.05)).collect();
        let w = composite_weights(&sigma, &delta).map_err(|e| e.to_string())?;
        let depth: f64 = sigma.iter().zip(&delta).map(|(s, d)| s * d).sum();
        let err = (w.opacity() - (1.0 - (-depth).exp())).abs();
        worst = worst.max(err);
        if err > 1e-9 {
            return Err(format!("ray {i}: sum of weights off by {err:e}"));
        }
        if w.weights.iter().any(|&x| x < 0.0) {
            return Err(format!("ray {i}: negative weight"));
        }
        if w.transmittance.windows(2).any(|p| p[1] > p[0]) {
            return Err(format!("ray {i}: transmittance increases"));
        }
    }
    Ok(format!("{rays} rays, max conservation error {worst:.1e}"))
}
