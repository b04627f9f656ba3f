use super::neighbors::GridIndex;
use crate::geom::Vec3;

/// Clusters as sorted member indices, plus the noise indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DbscanResult {
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
}

/// Keeps point `i` iff at least `min_neighbors` other points lie within
/// `radius`. Returns the kept indices in input order.
pub fn remove_outliers(points: &[Vec3], radius: f64, min_neighbors: usize) -> Vec<usize> {
    let index = GridIndex::new(points, radius);
    (0..points.len())
        .filter(|&i| index.count_within(points[i], min_neighbors + 1) > min_neighbors)
        .collect()
}

/// Density-based clustering. A point is core when at least `min_pts`
/// points (itself included) lie within `eps`. Core points within `eps` of
/// each other share a cluster; a non-core point within `eps` of some core
/// point joins the cluster of its nearest core point, ties going to the
/// lexicographically smaller core point. This makes labels independent of
/// input order. Clusters are ordered by their lexicographically smallest
/// member.
pub fn dbscan(points: &[Vec3], eps: f64, min_pts: usize) -> DbscanResult {
    let n = points.len();
    let index = GridIndex::new(points, eps);
    let core: Vec<bool> = (0..n).map(|i| index.count_within(points[i], min_pts) >= min_pts).collect();

    const NONE: usize = usize::MAX;
    let mut label = vec![NONE; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for seed in 0..n {
        if !core[seed] || label[seed] != NONE {
            continue;
        }
        label[seed] = next;
        stack.push(seed);
        while let Some(p) = stack.pop() {
            index.for_each_within(points[p], |q| {
                if core[q] && label[q] == NONE {
                    label[q] = next;
                    stack.push(q);
                }
            });
        }
        next += 1;
    }

    let mut noise = Vec::new();
    for i in 0..n {
        if core[i] {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        index.for_each_within(points[i], |q| {
            if !core[q] {
                return;
            }
            let d = points[q].dist_sq(points[i]);
            let better = match best {
                None => true,
                Some((bd, bq)) => d < bd || (d == bd && precedes(points, q, bq)),
            };
            if better {
                best = Some((d, q));
            }
        });
        match best {
            Some((_, q)) => label[i] = label[q],
            None => noise.push(i),
        }
    }

    let mut clusters = vec![Vec::new(); next];
    for i in 0..n {
        if label[i] != NONE {
            clusters[label[i]].push(i);
        }
    }
    let first = |c: &Vec<usize>| {
        c.iter()
            .copied()
            .min_by(|&a, &b| points[a].lex_cmp(&points[b]).then(a.cmp(&b)))
            .unwrap()
    };
    clusters.sort_by(|a, b| {
        let (fa, fb) = (first(a), first(b));
        points[fa].lex_cmp(&points[fb]).then(fa.cmp(&fb))
    });
    DbscanResult { clusters, noise }
}

fn precedes(points: &[Vec3], a: usize, b: usize) -> bool {
    points[a].lex_cmp(&points[b]).then(a.cmp(&b)).is_lt()
}
