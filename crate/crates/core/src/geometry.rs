//! Convex hulls of pixel sets and the area-based ordering measures.

use crate::error::{Error, Result};
use crate::grid::{Mask, Pixel};

/// Convex hull of a mask: vertices in pixel-center coordinates, plus the
/// rasterized hull.
///
/// Vertices are counterclockwise in the (x, y) frame taken as mathematical
/// axes, i.e. every consecutive triple makes a strict left turn under
/// [`cross`]. On screen (y down) that reads clockwise.
#[derive(Clone, Debug, PartialEq)]
pub struct HullPolygon {
    pub vertices: Vec<Pixel>,
    pub raster: Mask,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderingRelation {
    Above,
    Below,
    SameLevel,
}

/// `(a − o) × (b − o)`; positive for a left turn.
pub fn cross(o: Pixel, a: Pixel, b: Pixel) -> i64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Graham scan over the boundary pixels of `mask`.
pub fn convex_hull(mask: &Mask) -> Result<HullPolygon> {
    let mut pts = mask.boundary_pixels();
    if pts.is_empty() {
        return Err(Error::EmptyMask);
    }
    let vertices = graham_scan(&mut pts);
    let raster = rasterize_polygon(&vertices, mask.width(), mask.height());
    Ok(HullPolygon { vertices, raster })
}

/// Graham scan: pivot at the lowest y (ties to the lowest x), polar-angle
/// order with ties by distance, strict left turns only. Returns 1 or 2
/// vertices for point and collinear inputs.
pub fn graham_scan(pts: &mut [Pixel]) -> Vec<Pixel> {
    let pivot_idx = (0..pts.len())
        .min_by_key(|&k| (pts[k].y, pts[k].x))
        .expect("nonempty point set");
    pts.swap(0, pivot_idx);
    let pivot = pts[0];
    let d2 = |p: Pixel| (p.x - pivot.x).pow(2) + (p.y - pivot.y).pow(2);
    pts[1..].sort_by(|&a, &b| {
        let c = cross(pivot, a, b);
        0.cmp(&c).then_with(|| d2(a).cmp(&d2(b)))
    });
    let mut stack: Vec<Pixel> = Vec::with_capacity(pts.len());
    for &p in pts.iter() {
        if p == pivot && !stack.is_empty() {
            continue;
        }
        while stack.len() >= 2 && cross(stack[stack.len() - 2], stack[stack.len() - 1], p) <= 0 {
            stack.pop();
        }
        if stack.last() != Some(&p) {
            stack.push(p);
        }
    }
    stack
}

/// Scanline fill of a convex polygon given counterclockwise (in the
/// [`cross`] sense). A pixel is set when its center satisfies every edge
/// half-plane, boundary included. The per-row bounds are exact integer
/// arithmetic.
pub fn rasterize_polygon(vertices: &[Pixel], width: usize, height: usize) -> Mask {
    let mut out = Mask::new(width, height);
    if vertices.is_empty() {
        return out;
    }
    let min_x = vertices.iter().map(|p| p.x).min().unwrap().max(0);
    let max_x = vertices
        .iter()
        .map(|p| p.x)
        .max()
        .unwrap()
        .min(width as i64 - 1);
    let min_y = vertices.iter().map(|p| p.y).min().unwrap().max(0);
    let max_y = vertices
        .iter()
        .map(|p| p.y)
        .max()
        .unwrap()
        .min(height as i64 - 1);
    let n = vertices.len();
    for y in min_y..=max_y {
        let (mut lo, mut hi) = (min_x, max_x);
        if n >= 2 {
            for k in 0..n {
                let a = vertices[k];
                let b = vertices[(k + 1) % n];
                // cross(a, b, (x, y)) = ca·x + cb ≥ 0
                let ca = -(b.y - a.y);
                let cb = (b.x - a.x) * (y - a.y) + (b.y - a.y) * a.x;
                if ca > 0 {
                    lo = lo.max(div_ceil(-cb, ca));
                } else if ca < 0 {
                    hi = hi.min(div_floor(cb, -ca));
                } else if cb < 0 {
                    lo = hi + 1;
                }
            }
        }
        for x in lo..=hi {
            out.set(x as usize, y as usize, true);
        }
    }
    out
}

fn div_floor(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

fn div_ceil(a: i64, b: i64) -> i64 {
    -((-a).div_euclid(b))
}

/// A mask together with its hull, so pairwise measures reuse hulls.
#[derive(Clone, Debug)]
pub struct HulledMask {
    pub mask: Mask,
    pub hull: HullPolygon,
    pub area: usize,
}

impl HulledMask {
    pub fn new(mask: Mask) -> Result<Self> {
        let hull = convex_hull(&mask)?;
        let area = mask.count();
        Ok(Self { mask, hull, area })
    }
}

/// `|Conv(S_j) ∩ S_i|`.
pub fn hull_overlap(i: &HulledMask, j: &HulledMask) -> usize {
    i.mask.intersection_count(&j.hull.raster)
}

/// Covered area measure `A(i, j) = |Conv(S_j) ∩ S_i| / |S_i|`.
pub fn covered_area(i: &HulledMask, j: &HulledMask) -> f64 {
    hull_overlap(i, j) as f64 / i.area as f64
}

/// Depth ordering energy `D(i, j) = A(i, j) − A(j, i)`; positive when `S_i`
/// lies above `S_j`.
pub fn depth_energy(i: &HulledMask, j: &HulledMask) -> f64 {
    covered_area(i, j) - covered_area(j, i)
}

/// Convex hull symmetric difference `V(i, j) = |S_i| + |S_j| − |Conv(S_j) ∩ S_i|`.
pub fn hull_symmetric_difference(i: &HulledMask, j: &HulledMask) -> usize {
    i.area + j.area - hull_overlap(i, j)
}

/// Thresholded relation of `S_i` to `S_j`.
pub fn classify(d: f64, delta: f64) -> OrderingRelation {
    if d > delta {
        OrderingRelation::Above
    } else if d < -delta {
        OrderingRelation::Below
    } else {
        OrderingRelation::SameLevel
    }
}

/// `Some(Above)` when `S_i` lies entirely inside `Conv(S_j)`.
pub fn subset_shortcut(i: &HulledMask, j: &HulledMask) -> Option<OrderingRelation> {
    i.mask
        .is_subset_of(&j.hull.raster)
        .then_some(OrderingRelation::Above)
}

/// Area of the triangle over a chord of length `len` whose base angles are
/// `theta0` and `theta1`: `(L²/2)·sinθ0·sinθ1 / sin(θ0+θ1)`.
pub fn bounding_triangle_area(len: f64, theta0: f64, theta1: f64) -> Result<f64> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let in_range = |t: f64| (0.0..=half_pi).contains(&t);
    if !in_range(theta0) || !in_range(theta1) || !(len >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "triangle needs L ≥ 0 and angles in [0, π/2], got L={len}, θ0={theta0}, θ1={theta1}"
        )));
    }
    let sum = theta0 + theta1;
    if sum == 0.0 || sum == std::f64::consts::PI {
        return Err(Error::DegenerateTriangle);
    }
    Ok(0.5 * len * len * theta0.sin() * theta1.sin() / sum.sin())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn hm(rows: &[&str]) -> HulledMask {
        HulledMask::new(Mask::from_ascii(rows)).unwrap()
    }

    /// Pixel-center membership in the convex hull via triangle coverage.
    fn triangle_oracle(mask: &Mask) -> Mask {
        let pts: Vec<Pixel> = mask
            .iter_set()
            .map(|(x, y)| Pixel::new(x as i64, y as i64))
            .collect();
        let in_tri = |p: Pixel, a: Pixel, b: Pixel, c: Pixel| {
            let (d1, d2, d3) = (cross(a, b, p), cross(b, c, p), cross(c, a, p));
            let neg = d1 < 0 || d2 < 0 || d3 < 0;
            let pos = d1 > 0 || d2 > 0 || d3 > 0;
            !(neg && pos)
                && p.x >= a.x.min(b.x).min(c.x)
                && p.x <= a.x.max(b.x).max(c.x)
                && p.y >= a.y.min(b.y).min(c.y)
                && p.y <= a.y.max(b.y).max(c.y)
        };
        Mask::from_fn(mask.width(), mask.height(), |x, y| {
            let p = Pixel::new(x as i64, y as i64);
            pts.iter()
                .any(|&a| pts.iter().any(|&b| pts.iter().any(|&c| in_tri(p, a, b, c))))
        })
    }

    #[test]
    fn rectangle_hull_is_itself() {
        let m = Mask::from_fn(10, 8, |x, y| (2..7).contains(&x) && (1..5).contains(&y));
        let h = convex_hull(&m).unwrap();
        assert_eq!(h.raster, m);
        assert_eq!(
            h.vertices,
            vec![
                Pixel::new(2, 1),
                Pixel::new(6, 1),
                Pixel::new(6, 4),
                Pixel::new(2, 4)
            ]
        );
    }

    #[test]
    fn c_shape_mouth_is_filled() {
        let m = Mask::from_ascii(&["#####", "#....", "#....", "#....", "#####"]);
        let h = convex_hull(&m).unwrap();
        assert!(m.is_subset_of(&h.raster));
        assert_eq!(h.raster, Mask::full(5, 5));
    }

    #[test]
    fn degenerate_hulls() {
        let dot = Mask::from_ascii(&["...", ".#.", "..."]);
        let h = convex_hull(&dot).unwrap();
        assert_eq!(h.vertices, vec![Pixel::new(1, 1)]);
        assert_eq!(h.raster, dot);
        let diag = Mask::from_ascii(&["#...", ".#..", "..#.", "...#"]);
        let h = convex_hull(&diag).unwrap();
        assert_eq!(h.vertices.len(), 2);
        assert_eq!(h.raster, diag);
        let row = Mask::from_ascii(&["....", "#.##", "...."]);
        let h = convex_hull(&row).unwrap();
        assert_eq!(h.raster, Mask::from_ascii(&["....", "####", "...."]));
        assert!(convex_hull(&Mask::new(3, 3)).is_err());
    }

    #[test]
    fn vertices_turn_left() {
        let m = Mask::from_ascii(&["..#...", ".###..", "######", "..##..", "...#.."]);
        let v = convex_hull(&m).unwrap().vertices;
        for k in 0..v.len() {
            assert!(cross(v[k], v[(k + 1) % v.len()], v[(k + 2) % v.len()]) > 0);
        }
    }

    #[test]
    fn hull_matches_triangle_oracle_on_small_blobs() {
        let fixtures: [&[&str]; 4] = [
            &["#......", "...#...", "......#", ".#.....", "....#.."],
            &["##....", "#.#...", "...#..", "....##"],
            &[".#.", "...", "#.#"],
            &["#......#", "........", "...##...", "#......."],
        ];
        for f in fixtures {
            let m = Mask::from_ascii(f);
            assert_eq!(
                convex_hull(&m).unwrap().raster,
                triangle_oracle(&m),
                "{f:?}"
            );
        }
    }

    #[test]
    fn area_measures_on_small_example() {
        // S_j is a C whose hull swallows the 2×2 block S_i entirely
        let j = hm(&["#####.", "#.....", "#.....", "#.....", "#####."]);
        let i = hm(&["......", "..##..", "..##..", "......", "......"]);
        assert_eq!(covered_area(&i, &j), 1.0);
        assert_eq!(covered_area(&j, &i), 0.0);
        assert_eq!(depth_energy(&i, &j), 1.0);
        assert_eq!(hull_symmetric_difference(&i, &j), j.area);
        assert_eq!(subset_shortcut(&i, &j), Some(OrderingRelation::Above));
        assert_eq!(subset_shortcut(&j, &i), None);
    }

    #[test]
    fn far_apart_shapes_have_zero_energy() {
        let i = hm(&["##......", "##......", "........"]);
        let j = hm(&["......##", "......##", "........"]);
        assert_eq!(depth_energy(&i, &j), 0.0);
        assert_eq!(hull_symmetric_difference(&i, &j), 8);
        assert_eq!(subset_shortcut(&i, &j), None);
    }

    #[test]
    fn occluded_rectangle_pair_orders_top_first() {
        // S_1: rectangle with its lower-right corner occluded by rectangle S_2
        let s2 = Mask::from_fn(30, 24, |x, y| {
            (14..26).contains(&x) && (10..20).contains(&y)
        });
        let s1 = Mask::from_fn(30, 24, |x, y| (2..20).contains(&x) && (2..14).contains(&y))
            .difference(&s2);
        let (a, b) = (
            HulledMask::new(s1.clone()).unwrap(),
            HulledMask::new(s2.clone()).unwrap(),
        );
        // oracle: hull of S_1 is the rectangle minus the triangle below the
        // diagonal from (19,9) to (13,13); count S_2 pixels inside it
        let tri = [
            Pixel::new(2, 2),
            Pixel::new(19, 2),
            Pixel::new(19, 9),
            Pixel::new(13, 13),
            Pixel::new(2, 13),
        ];
        let hull1 = rasterize_polygon(&tri, 30, 24);
        let a21 = s2.intersection_count(&hull1) as f64 / s2.count() as f64;
        assert_eq!(covered_area(&b, &a), a21);
        assert_eq!(covered_area(&a, &b), 0.0);
        let d = depth_energy(&a, &b);
        assert!(d < 0.0);
        assert_eq!(d, -a21);
        assert_eq!(classify(d, 0.0), OrderingRelation::Below);
    }

    #[test]
    fn classify_thresholds() {
        assert_eq!(classify(0.2, 0.05), OrderingRelation::Above);
        assert_eq!(classify(-0.2, 0.05), OrderingRelation::Below);
        assert_eq!(classify(0.03, 0.05), OrderingRelation::SameLevel);
        assert_eq!(classify(0.05, 0.05), OrderingRelation::SameLevel);
    }

    #[test]
    fn triangle_area() {
        assert!((bounding_triangle_area(2.0, PI / 4.0, PI / 4.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(bounding_triangle_area(3.0, 0.0, 0.7).unwrap(), 0.0);
        let direct = 0.5 * (PI / 6.0).sin() * (PI / 3.0).sin() / (PI / 2.0).sin();
        let got = bounding_triangle_area(1.0, PI / 6.0, PI / 3.0).unwrap();
        assert_eq!(got, direct);
        assert!((got - 0.216_506_350_946_109_6).abs() < 1e-15);
        assert!(matches!(
            bounding_triangle_area(1.0, 0.0, 0.0),
            Err(Error::DegenerateTriangle)
        ));
        assert!(bounding_triangle_area(1.0, 2.0, 0.1).is_err());
    }
}
