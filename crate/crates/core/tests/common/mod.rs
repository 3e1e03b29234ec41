//! Brute-force oracles and small fixture builders shared by the integration
//! tests. Written independently of the library's algorithms.

#![allow(dead_code)]

use depthvec::{CubicBezier, Mask, Point};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Leftmost and rightmost set pixel of every row. Their hull equals the
/// hull of the whole mask.
fn row_extremes(m: &Mask) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for y in 0..m.height() {
        let xs: Vec<usize> = (0..m.width()).filter(|&x| m.get(x, y)).collect();
        if let (Some(&a), Some(&b)) = (xs.first(), xs.last()) {
            out.push((a as i64, y as i64));
            if b != a {
                out.push((b as i64, y as i64));
            }
        }
    }
    out
}

/// Is `c` inside the closed convex hull of `pts`? `c` is outside exactly
/// when some direction `d_k = p_k − c` has every other point strictly to its
/// left or on its own ray, which leaves an open half-plane free.
pub fn in_hull(pts: &[(i64, i64)], c: (i64, i64)) -> bool {
    let d: Vec<(i64, i64)> = pts.iter().map(|p| (p.0 - c.0, p.1 - c.1)).collect();
    if d.contains(&(0, 0)) {
        return true;
    }
    let outside = d.iter().any(|&a| {
        d.iter().all(|&b| {
            let cr = a.0 * b.1 - a.1 * b.0;
            cr > 0 || (cr == 0 && a.0 * b.0 + a.1 * b.1 > 0)
        })
    });
    !outside
}

/// Pixels whose centers lie in the closed convex hull of the mask's pixel
/// centers, by testing every pixel.
pub fn hull_raster(m: &Mask) -> Mask {
    let pts = row_extremes(m);
    Mask::from_fn(m.width(), m.height(), |x, y| {
        in_hull(&pts, (x as i64, y as i64))
    })
}

pub fn covered_area(si: &Mask, sj: &Mask) -> f64 {
    si.intersection_count(&hull_raster(sj)) as f64 / si.count() as f64
}

pub fn symmetric_difference(si: &Mask, sj: &Mask) -> usize {
    si.count() + sj.count() - si.intersection_count(&hull_raster(sj))
}

/// Distance from `p` to the curve using 4096 uniform samples.
pub fn dense_distance(p: Point, c: &CubicBezier) -> f64 {
    let n = 4096;
    (0..=n)
        .map(|k| c.eval(k as f64 / n as f64).dist(p))
        .fold(f64::INFINITY, f64::min)
}

/// Random blob: union of a few random disks and rectangles, nonempty.
pub fn random_blob(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Mask {
    loop {
        let mut m = Mask::new(w, h);
        for _ in 0..rng.random_range(1..4) {
            let cx = rng.random_range(0.0..w as f64);
            let cy = rng.random_range(0.0..h as f64);
            let r = rng.random_range(1.0..(w.min(h) as f64 / 2.0).max(1.5));
            let disk = rng.random_bool(0.5);
            m.union_with(&Mask::from_fn(w, h, |x, y| {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                if disk {
                    dx * dx + dy * dy <= r * r
                } else {
                    dx.abs() <= r && dy.abs() <= 0.6 * r
                }
            }));
        }
        if !m.is_empty() {
            return m;
        }
    }
}

/// Random scatter of pixels with the given density, nonempty.
pub fn random_scatter(rng: &mut ChaCha8Rng, w: usize, h: usize, density: f64) -> Mask {
    loop {
        let m = Mask::from_fn(w, h, |_, _| rng.random_bool(density));
        if !m.is_empty() {
            return m;
        }
    }
}

/// Every elementary directed cycle of a small graph, each listed once
/// starting from its smallest node.
pub fn all_cycles(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    fn walk(
        start: usize,
        at: usize,
        edges: &[(usize, usize)],
        path: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        for &(a, b) in edges {
            if a != at {
                continue;
            }
            if b == start {
                out.push(path.clone());
            } else if b > start && !path.contains(&b) {
                path.push(b);
                walk(start, b, edges, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    for s in 0..n {
        walk(s, s, edges, &mut vec![s], &mut out);
    }
    out
}
