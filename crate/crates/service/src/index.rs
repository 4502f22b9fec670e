//! Uniform-grid index over points in the unit disc.

use std::cmp::Ordering;

/// One indexed point: position and the rank of its id in lexicographic order.
#[derive(Debug, Clone, Copy)]
struct Entry {
    pos: [f64; 2],
    rank: usize,
    item: usize,
}

#[derive(Debug, Clone)]
pub struct GridIndex {
    side: usize,
    cells: Vec<Vec<Entry>>,
}

/// A match from [`GridIndex::nearest`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub item: usize,
    pub distance: f64,
}

impl GridIndex {
    /// `points[i]` carries caller item `i`; `ranks[i]` orders ties.
    pub fn build(points: &[[f64; 2]], ranks: &[usize]) -> Self {
        let side = ((points.len() as f64 / 4.0).sqrt().ceil() as usize).clamp(1, 256);
        let mut cells = vec![Vec::new(); side * side];
        for (item, (&pos, &rank)) in points.iter().zip(ranks).enumerate() {
            let (cx, cy) = cell_of(pos, side);
            cells[cy * side + cx].push(Entry { pos, rank, item });
        }
        GridIndex { side, cells }
    }

    /// The `k` points closest to `q`, ordered by distance then rank.
    pub fn nearest(&self, q: [f64; 2], k: usize) -> Vec<Hit> {
        let mut best: Vec<(f64, usize, usize)> = Vec::with_capacity(k + 1);
        if k == 0 {
            return Vec::new();
        }
        let width = 2.0 / self.side as f64;
        let (qx, qy) = cell_of(q, self.side);
        for ring in 0..self.side {
            if best.len() == k {
                // every unvisited cell is at least this far from q
                let reach = (ring as f64 - 1.0).max(0.0) * width;
                if reach > best[k - 1].0 {
                    break;
                }
            }
            for (cx, cy) in ring_cells(qx, qy, ring, self.side) {
                for e in &self.cells[cy * self.side + cx] {
                    let d = (e.pos[0] - q[0]).hypot(e.pos[1] - q[1]);
                    let key = (d, e.rank, e.item);
                    if best.len() == k && cmp(&key, &best[k - 1]) != Ordering::Less {
                        continue;
                    }
                    let at = best.partition_point(|b| cmp(b, &key) == Ordering::Less);
                    best.insert(at, key);
                    best.truncate(k);
                }
            }
        }
        best.into_iter()
            .map(|(distance, _, item)| Hit { item, distance })
            .collect()
    }
}

fn cmp(a: &(f64, usize, usize), b: &(f64, usize, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

fn cell_of(p: [f64; 2], side: usize) -> (usize, usize) {
    let f = |v: f64| (((v + 1.0) / 2.0 * side as f64).floor().max(0.0) as usize).min(side - 1);
    (f(p[0]), f(p[1]))
}

fn ring_cells(cx: usize, cy: usize, ring: usize, side: usize) -> Vec<(usize, usize)> {
    let (cx, cy, r, n) = (cx as isize, cy as isize, ring as isize, side as isize);
    let mut out = Vec::new();
    for y in (cy - r)..=(cy + r) {
        for x in (cx - r)..=(cx + r) {
            let on_ring = (x - cx).abs() == r || (y - cy).abs() == r;
            if on_ring && (0..n).contains(&x) && (0..n).contains(&y) {
                out.push((x as usize, y as usize));
            }
        }
    }
    out
}
