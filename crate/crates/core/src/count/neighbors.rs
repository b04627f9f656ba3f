use std::collections::HashMap;

use crate::geom::Vec3;

/// Uniform hash grid for fixed-radius neighbor queries.
pub(crate) struct GridIndex<'a> {
    points: &'a [Vec3],
    cell: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> GridIndex<'a> {
    pub fn new(points: &'a [Vec3], radius: f64) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, &p) in points.iter().enumerate() {
            cells.entry(key(p, radius)).or_default().push(i);
        }
        GridIndex {
            points,
            cell: radius,
            cells,
        }
    }

    /// Calls `f` for every point within `self.cell` of `x` (inclusive), in
    /// a fixed order.
    pub fn for_each_within(&self, x: Vec3, mut f: impl FnMut(usize)) {
        let r2 = self.cell * self.cell;
        let [a, b, c] = key(x, self.cell);
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if let Some(list) = self.cells.get(&[a + dx, b + dy, c + dz]) {
                        for &j in list {
                            if self.points[j].dist_sq(x) <= r2 {
                                f(j);
                            }
                        }
                    }
                }
            }
        }
    }

    /// Number of points within the radius of `x`, stopping at `cap`.
    pub fn count_within(&self, x: Vec3, cap: usize) -> usize {
        let mut n = 0;
        self.for_each_within(x, |_| n += 1);
        n.min(cap)
    }
}

fn key(p: Vec3, cell: f64) -> [i64; 3] {
    [0, 1, 2].map(|a| (p[a] / cell).floor() as i64)
}
