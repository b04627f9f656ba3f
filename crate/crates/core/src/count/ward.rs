//! Ward agglomerative clustering via the nearest-neighbor chain.

use crate::geom::Vec3;

/// One merge of the dendrogram: the two merged cluster ids and the merge
/// height. Leaves are ids `0..n`; merge `m` creates id `n + m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
}

/// Full Ward dendrogram with merges sorted by height. Dissimilarities are
/// updated with the Lance–Williams rule on squared Euclidean distances, so a
/// merge's height is twice the increase in within-cluster sum of squares.
pub fn ward_dendrogram(points: &[Vec3]) -> Vec<Merge> {
    let n = points.len();
    if n < 2 {
        return Vec::new();
    }
    // Condensed upper-triangular matrix.
    let idx = |i: usize, j: usize| {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * n - i * (i + 1) / 2 + (j - i - 1)
    };
    let mut d = vec![0.0; n * (n - 1) / 2];
    for i in 0..n {
        for j in i + 1..n {
            d[idx(i, j)] = points[i].dist_sq(points[j]);
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    // Slot -> current cluster id (slot of a merge result is its first slot).
    let mut id: Vec<usize> = (0..n).collect();
    let mut raw: Vec<(usize, usize, f64, usize)> = Vec::with_capacity(n - 1);
    let mut chain: Vec<usize> = Vec::with_capacity(n);

    for step in 0..n - 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).unwrap());
        }
        loop {
            let x = *chain.last().unwrap();
            let prev = if chain.len() >= 2 { Some(chain[chain.len() - 2]) } else { None };
            // Nearest active neighbor; the previous chain element wins ties.
            let mut best = prev;
            let mut best_d = prev.map_or(f64::INFINITY, |p| d[idx(x, p)]);
            for y in 0..n {
                if y == x || !active[y] {
                    continue;
                }
                let dy = d[idx(x, y)];
                if dy < best_d {
                    best_d = dy;
                    best = Some(y);
                }
            }
            let y = best.unwrap();
            if Some(y) == prev {
                chain.pop();
                chain.pop();
                let (a, b) = (x.min(y), x.max(y));
                raw.push((id[a], id[b], best_d, step));
                let (na, nb) = (size[a] as f64, size[b] as f64);
                for k in 0..n {
                    if !active[k] || k == a || k == b {
                        continue;
                    }
                    let nk = size[k] as f64;
                    let v = ((na + nk) * d[idx(a, k)] + (nb + nk) * d[idx(b, k)] - nk * best_d) / (na + nb + nk);
                    d[idx(a, k)] = v;
                }
                active[b] = false;
                size[a] += size[b];
                id[a] = n + step;
                break;
            }
            chain.push(y);
        }
    }

    // Relabel after sorting by height (stable on ties).
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&i, &j| raw[i].2.total_cmp(&raw[j].2).then(i.cmp(&j)));
    let mut new_id = vec![0usize; raw.len()];
    for (rank, &m) in order.iter().enumerate() {
        new_id[m] = n + rank;
    }
    let map = |c: usize| if c < n { c } else { new_id[c - n] };
    order
        .iter()
        .map(|&m| Merge {
            a: map(raw[m].0),
            b: map(raw[m].1),
            height: raw[m].2,
        })
        .collect()
}

/// Flat labels (`0..k`, ordered by first member) obtained by applying the
/// `n − k` lowest merges.
pub fn cut(n: usize, merges: &[Merge], k: usize) -> Vec<usize> {
    let k = k.clamp(1.min(n), n);
    let mut parent: Vec<usize> = (0..2 * n.max(1)).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (m, merge) in merges.iter().take(n - k).enumerate() {
        let c = n + m;
        let ra = find(&mut parent, merge.a);
        let rb = find(&mut parent, merge.b);
        parent[ra] = c;
        parent[rb] = c;
    }
    let mut label = vec![usize::MAX; n];
    let mut root_label = std::collections::HashMap::new();
    for (i, l) in label.iter_mut().enumerate() {
        let r = find(&mut parent, i);
        let next = root_label.len();
        *l = *root_label.entry(r).or_insert(next);
    }
    label
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Naive Ward: repeatedly merge the pair with the smallest increase in
    /// within-cluster sum of squares.
    fn naive(points: &[Vec3], k: usize) -> Vec<Vec<usize>> {
        let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
        let centroid = |c: &[usize]| c.iter().fold(Vec3::ZERO, |a, &i| a + points[i]) / c.len() as f64;
        while clusters.len() > k {
            let mut best = (f64::INFINITY, 0, 0);
            for i in 0..clusters.len() {
                for j in i + 1..clusters.len() {
                    let (ni, nj) = (clusters[i].len() as f64, clusters[j].len() as f64);
                    let cost = ni * nj / (ni + nj) * centroid(&clusters[i]).dist_sq(centroid(&clusters[j]));
                    if cost < best.0 {
                        best = (cost, i, j);
                    }
                }
            }
            let moved = clusters.remove(best.2);
            clusters[best.1].extend(moved);
        }
        let mut out: Vec<Vec<usize>> = clusters
            .into_iter()
            .map(|mut c| {
                c.sort_unstable();
                c
            })
            .collect();
        out.sort();
        out
    }

    fn groups(labels: &[usize]) -> Vec<Vec<usize>> {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut out = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            out[l].push(i);
        }
        out.sort();
        out
    }

    #[test]
    fn matches_naive_ward() {
        use crate::rng;
        use rand::RngExt;
        for seed in 0..30 {
            let mut r = rng::rng(seed);
            let n = r.random_range(2..40);
            let pts: Vec<Vec3> = (0..n)
                .map(|_| Vec3::new(r.random::<f64>(), r.random::<f64>(), r.random::<f64>()))
                .collect();
            let merges = ward_dendrogram(&pts);
            assert_eq!(merges.len(), n - 1);
            assert!(merges.windows(2).all(|w| w[0].height <= w[1].height));
            for k in 1..=n.min(6) {
                assert_eq!(groups(&cut(n, &merges, k)), naive(&pts, k), "seed {seed} k {k}");
            }
        }
    }

    #[test]
    fn heights_are_twice_the_sum_of_squares_increase() {
        let pts = [Vec3::ZERO, Vec3::new(2.0, 0.0, 0.0)];
        let m = ward_dendrogram(&pts);
        // Increase is 1·1/2 · 4 = 2.
        assert!((m[0].height - 4.0).abs() < 1e-12);
        assert_eq!(cut(2, &m, 2), vec![0, 1]);
        assert_eq!(cut(2, &m, 1), vec![0, 0]);
    }
}
