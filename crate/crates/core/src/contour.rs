//! Closed point loops and marching-squares isocontours.

use std::collections::HashMap;

use crate::grid::{Field, Point};

/// Closed polyline; the last point connects back to the first.
#[derive(Clone, Debug, PartialEq)]
pub struct Contour {
    pub points: Vec<Point>,
}

impl Contour {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index arithmetic modulo the loop length.
    pub fn at(&self, k: isize) -> Point {
        let n = self.points.len() as isize;
        self.points[k.rem_euclid(n) as usize]
    }

    /// Shoelace area in image coordinates (y down). Positive for loops that
    /// run clockwise on screen.
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        let mut s = 0.0;
        for k in 0..n {
            let (p, q) = (self.points[k], self.points[(k + 1) % n]);
            s += p.x * q.y - q.x * p.y;
        }
        0.5 * s
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.points.len();
        (0..n)
            .map(|k| self.points[k].dist(self.points[(k + 1) % n]))
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Crossing {
    /// Between grid nodes (x, y) and (x + 1, y).
    H(i64, i64),
    /// Between grid nodes (x, y) and (x, y + 1).
    V(i64, i64),
}

/// Value assumed beyond the field border: the low phase state.
const OUTSIDE: f64 = -1.0;

/// Isocontours of `field` at `level`, sampled at pixel centers.
///
/// Nodes outside the field take the value −1 and never count as above the
/// level, so every loop is closed and a ±1 field at level 0 reaches exactly
/// to the image border. Each loop keeps `{u > level}` on its right, which makes outer
/// boundaries run clockwise on screen and holes counterclockwise. In saddle
/// cells the diagonal high corners stay separated, matching 4-connectivity
/// of the superlevel set. Loops are returned in the order their first cell
/// is met in a row-major scan.
pub fn marching_squares(field: &Field, level: f64) -> Vec<Contour> {
    let (w, h) = (field.width as i64, field.height as i64);
    let value = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= w || y >= h {
            OUTSIDE
        } else {
            field.get(x as usize, y as usize)
        }
    };
    let inside = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h;
    let high = |x: i64, y: i64| inside(x, y) && value(x, y) > level;

    let point_on = |c: Crossing| -> Point {
        let (ax, ay, bx, by) = match c {
            Crossing::H(x, y) => (x, y, x + 1, y),
            Crossing::V(x, y) => (x, y, x, y + 1),
        };
        let (fa, fb) = (value(ax, ay), value(bx, by));
        let t = if fb != fa {
            ((level - fa) / (fb - fa)).clamp(0.0, 1.0)
        } else {
            0.5
        };
        // grid node (x, y) is the center of pixel (x, y)
        Point::new(
            ax as f64 + 0.5 + t * (bx - ax) as f64,
            ay as f64 + 0.5 + t * (by - ay) as f64,
        )
    };

    // segments keyed by start crossing, in cell scan order
    let mut next: HashMap<Crossing, Crossing> = HashMap::new();
    let mut starts: Vec<Crossing> = Vec::new();
    for cy in -1..h {
        for cx in -1..w {
            // corners clockwise on screen: TL, TR, BR, BL
            let corners = [(cx, cy), (cx + 1, cy), (cx + 1, cy + 1), (cx, cy + 1)];
            let hi = corners.map(|(x, y)| high(x, y));
            let sides = [
                Crossing::H(cx, cy),
                Crossing::V(cx + 1, cy),
                Crossing::H(cx, cy + 1),
                Crossing::V(cx, cy),
            ];
            // side k runs from corner k to corner k+1; high→low opens a
            // segment, low→high closes one
            let opens: Vec<usize> = (0..4).filter(|&k| hi[k] && !hi[(k + 1) % 4]).collect();
            let closes: Vec<usize> = (0..4).filter(|&k| !hi[k] && hi[(k + 1) % 4]).collect();
            match opens.len() {
                0 => {}
                1 => {
                    next.insert(sides[opens[0]], sides[closes[0]]);
                    starts.push(sides[opens[0]]);
                }
                _ => {
                    // saddle: cut off each high corner k between sides k−1 and k
                    for &k in &opens {
                        next.insert(sides[k], sides[(k + 3) % 4]);
                        starts.push(sides[k]);
                    }
                }
            }
        }
    }

    let mut used: HashMap<Crossing, bool> = HashMap::with_capacity(next.len());
    let mut loops = Vec::new();
    for s in starts {
        if used.contains_key(&s) {
            continue;
        }
        let mut pts = Vec::new();
        let mut c = s;
        loop {
            used.insert(c, true);
            pts.push(point_on(c));
            c = next[&c];
            if c == s {
                break;
            }
        }
        loops.push(Contour::new(dedup_closed(pts)));
    }
    loops
}

/// Drops consecutive duplicates, including a wrap-around duplicate.
fn dedup_closed(mut pts: Vec<Point>) -> Vec<Point> {
    pts.dedup_by(|a, b| (a.x - b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12);
    while pts.len() > 1 {
        let (f, l) = (pts[0], pts[pts.len() - 1]);
        if (f.x - l.x).abs() < 1e-12 && (f.y - l.y).abs() < 1e-12 {
            pts.pop();
        } else {
            break;
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Mask;

    fn field_of(mask: &Mask) -> Field {
        let mut f = Field::filled(mask.width(), mask.height(), -1.0);
        for (x, y) in mask.iter_set() {
            f.set(x, y, 1.0);
        }
        f
    }

    #[test]
    fn square_gives_one_clockwise_loop() {
        let m = Mask::from_fn(8, 8, |x, y| (2..6).contains(&x) && (2..6).contains(&y));
        let loops = marching_squares(&field_of(&m), 0.0);
        assert_eq!(loops.len(), 1);
        let c = &loops[0];
        assert!(c.signed_area() > 0.0);
        // level 0 between ±1 sits halfway between centers: the pixel edges,
        // with the corners cut diagonally
        assert!((c.signed_area() - (16.0 - 4.0 * 0.125)).abs() < 1e-12);
        for p in &c.points {
            assert!(p.x >= 2.0 && p.x <= 6.0 && p.y >= 2.0 && p.y <= 6.0);
        }
    }

    #[test]
    fn two_blobs_two_loops() {
        let m = Mask::from_ascii(&["##....", "##....", "....##", "....##"]);
        assert_eq!(marching_squares(&field_of(&m), 0.0).len(), 2);
    }

    #[test]
    fn diagonal_pixels_stay_separate() {
        let m = Mask::from_ascii(&["#.", ".#"]);
        let loops = marching_squares(&field_of(&m), 0.0);
        assert_eq!(loops.len(), 2);
        assert!(loops.iter().all(|c| c.signed_area() > 0.0));
    }

    #[test]
    fn hole_runs_the_other_way() {
        let m = Mask::from_ascii(&["#####", "#...#", "#...#", "#...#", "#####"]);
        let loops = marching_squares(&field_of(&m), 0.0);
        assert_eq!(loops.len(), 2);
        let areas: Vec<f64> = loops.iter().map(|c| c.signed_area()).collect();
        assert!(areas[0] > 0.0 && areas[1] < 0.0);
    }

    #[test]
    fn region_touching_border_is_closed() {
        let m = Mask::full(3, 2);
        let loops = marching_squares(&field_of(&m), 0.0);
        assert_eq!(loops.len(), 1);
        // the outside is −1, so level 0 lands on the canvas edge
        assert!((loops[0].signed_area() - (6.0 - 4.0 * 0.125)).abs() < 1e-12);
    }

    #[test]
    fn empty_field_has_no_loops() {
        assert!(marching_squares(&Field::filled(4, 4, -1.0), 0.0).is_empty());
    }
}
