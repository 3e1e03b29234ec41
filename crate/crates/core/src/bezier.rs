//! Curvature-guided cubic Bézier fitting of closed contours.

use crate::contour::Contour;
use crate::error::{Error, Result};
use crate::grid::Point;
use crate::raster::Rgb;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CubicBezier {
    pub p0: Point,
    pub p1: Point,
    pub p2: Point,
    pub p3: Point,
}

impl CubicBezier {
    pub fn eval(&self, t: f64) -> Point {
        let s = 1.0 - t;
        self.p0 * (s * s * s)
            + self.p1 * (3.0 * s * s * t)
            + self.p2 * (3.0 * s * t * t)
            + self.p3 * (t * t * t)
    }

    pub fn derivative(&self, t: f64) -> Point {
        let s = 1.0 - t;
        (self.p1 - self.p0) * (3.0 * s * s)
            + (self.p2 - self.p1) * (6.0 * s * t)
            + (self.p3 - self.p2) * (3.0 * t * t)
    }

    /// Straight segment with inner control points at the thirds.
    pub fn line(a: Point, b: Point) -> Self {
        Self {
            p0: a,
            p1: a + (b - a) * (1.0 / 3.0),
            p2: a + (b - a) * (2.0 / 3.0),
            p3: b,
        }
    }

    pub fn translate(&self, d: Point) -> Self {
        Self {
            p0: self.p0 + d,
            p1: self.p1 + d,
            p2: self.p2 + d,
            p3: self.p3 + d,
        }
    }
}

/// A filled shape: one or more closed loops of cubic segments.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorShape {
    pub loops: Vec<Vec<CubicBezier>>,
    pub fill: Rgb,
    pub depth_rank: usize,
}

impl VectorShape {
    pub fn segment_count(&self) -> usize {
        self.loops.iter().map(Vec::len).sum()
    }
}

/// Three-point curvature at every contour point with step `h`:
/// `κ_k = −2·det(p_{k−h} − p_k, p_{k+h} − p_k) / (|p_{k−h} − p_k|·|p_{k+h} − p_k|·|p_{k+h} − p_{k−h}|)`,
/// indices taken modulo the loop length; coincident samples give 0.
pub fn discrete_curvature(c: &Contour, h: usize) -> Result<Vec<f64>> {
    let n = c.len();
    if h == 0 || 2 * h >= n {
        return Err(Error::InvalidParameter(format!(
            "curvature step {h} needs 1 ≤ h and 2h < {n} points"
        )));
    }
    let h = h as isize;
    Ok((0..n as isize)
        .map(|k| {
            let (a, p, b) = (c.at(k - h), c.at(k), c.at(k + h));
            let (u, v) = (a - p, b - p);
            let denom = u.norm() * v.norm() * (b - a).norm();
            if denom == 0.0 {
                0.0
            } else {
                -2.0 * u.cross(v) / denom
            }
        })
        .collect())
}

/// Split points: local maxima of `|κ|` inside each cyclic run of samples
/// with `|κ| > threshold` (a run without a strict maximum contributes its
/// first largest sample). Returns `[0]` when no sample exceeds the
/// threshold.
pub fn find_extrema(kappa: &[f64], threshold: f64) -> Vec<usize> {
    let n = kappa.len();
    let mag: Vec<f64> = kappa.iter().map(|k| k.abs()).collect();
    let above: Vec<bool> = mag.iter().map(|&m| m > threshold).collect();
    if !above.iter().any(|&a| a) {
        return vec![0];
    }
    let mut out = Vec::new();
    let mut runs: Vec<Vec<usize>> = Vec::new();
    if above.iter().all(|&a| a) {
        runs.push((0..n).collect());
    } else {
        // start scanning just after a below-threshold sample so no run wraps
        let start = (0..n).find(|&k| !above[k]).unwrap();
        let mut cur: Vec<usize> = Vec::new();
        for step in 1..=n {
            let k = (start + step) % n;
            if above[k] {
                cur.push(k);
            } else if !cur.is_empty() {
                runs.push(std::mem::take(&mut cur));
            }
        }
        if !cur.is_empty() {
            runs.push(cur);
        }
    }
    let whole = runs.len() == 1 && runs[0].len() == n;
    for run in runs {
        let m = run.len();
        let mut found = false;
        for (pos, &k) in run.iter().enumerate() {
            let prev = if pos > 0 {
                mag[run[pos - 1]]
            } else if whole {
                mag[run[m - 1]]
            } else {
                f64::NEG_INFINITY
            };
            let next = if pos + 1 < m {
                mag[run[pos + 1]]
            } else if whole {
                mag[run[0]]
            } else {
                f64::NEG_INFINITY
            };
            if mag[k] >= prev && mag[k] > next && (mag[k] > prev || pos == 0 || !whole) {
                out.push(k);
                found = true;
            }
        }
        if !found {
            let best = run
                .iter()
                .copied()
                .fold(run[0], |b, k| if mag[k] > mag[b] { k } else { b });
            out.push(best);
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Normalized cumulative chord length of `points`, or `None` when all
/// points coincide.
fn chord_params(points: &[Point]) -> Option<Vec<f64>> {
    let mut t = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    t.push(0.0);
    for w in points.windows(2) {
        acc += w[0].dist(w[1]);
        t.push(acc);
    }
    if acc == 0.0 {
        return None;
    }
    for x in &mut t {
        *x /= acc;
    }
    Some(t)
}

/// Least-squares cubic through `points` with fixed endpoints and
/// chord-length parameters. Falls back to a straight segment for two
/// points or rank-deficient normal equations.
pub fn fit_segment(points: &[Point]) -> CubicBezier {
    assert!(points.len() >= 2, "a segment needs at least two points");
    let (a, b) = (points[0], points[points.len() - 1]);
    if points.len() == 2 {
        return CubicBezier::line(a, b);
    }
    match chord_params(points) {
        Some(ts) => fit_segment_at(points, &ts),
        None => CubicBezier::line(a, b),
    }
}

/// Least-squares cubic through `points` at the given parameters, endpoints
/// fixed to the first and last point.
pub fn fit_segment_at(points: &[Point], ts: &[f64]) -> CubicBezier {
    assert_eq!(points.len(), ts.len());
    let (a, b) = (points[0], points[points.len() - 1]);
    let (mut c11, mut c12, mut c22) = (0.0, 0.0, 0.0);
    let (mut x1, mut x2) = (Point::default(), Point::default());
    for (&p, &t) in points.iter().zip(ts) {
        let s = 1.0 - t;
        let (b0, b1, b2, b3) = (s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t);
        let r = p - a * b0 - b * b3;
        c11 += b1 * b1;
        c12 += b1 * b2;
        c22 += b2 * b2;
        x1 = x1 + r * b1;
        x2 = x2 + r * b2;
    }
    let det = c11 * c22 - c12 * c12;
    if !(det.abs() > 1e-12 * (c11 * c22).max(f64::MIN_POSITIVE)) {
        return CubicBezier::line(a, b);
    }
    let p1 = (x1 * c22 - x2 * c12) * (1.0 / det);
    let p2 = (x2 * c11 - x1 * c12) * (1.0 / det);
    CubicBezier {
        p0: a,
        p1,
        p2,
        p3: b,
    }
}

/// Number of uniform samples taken on a curve when measuring distances.
pub const CURVE_SAMPLES: usize = 64;

/// Distance from `p` to the nearest of [`CURVE_SAMPLES`] uniform parameter
/// samples of the curve. Never below the true distance to the curve.
pub fn point_curve_distance(p: Point, c: &CubicBezier) -> f64 {
    let last = (CURVE_SAMPLES - 1) as f64;
    (0..CURVE_SAMPLES)
        .map(|j| c.eval(j as f64 / last).dist(p))
        .fold(f64::INFINITY, f64::min)
}

/// One-sided Hausdorff distance from the points to the curve, and the
/// index where it is attained.
pub fn max_deviation(points: &[Point], c: &CubicBezier) -> (f64, usize) {
    points
        .iter()
        .enumerate()
        .map(|(k, &p)| (point_curve_distance(p, c), k))
        .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a })
}

/// Bézier fitting parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitParams {
    /// Curvature magnitude above which a point is a split candidate.
    pub kappa_threshold: f64,
    /// Maximum allowed points-to-curve distance per segment.
    pub tolerance: f64,
    /// Curvature sampling step.
    pub step: usize,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            kappa_threshold: 1.25,
            tolerance: 1.0,
            step: 3,
        }
    }
}

fn fit_arc(points: &[Point], tol: f64, out: &mut Vec<CubicBezier>) {
    let seg = fit_segment(points);
    if points.len() <= 2 {
        out.push(seg);
        return;
    }
    let (err, at) = max_deviation(&points[1..points.len() - 1], &seg);
    if err <= tol {
        out.push(seg);
        return;
    }
    let split = at + 1;
    fit_arc(&points[..=split], tol, out);
    fit_arc(&points[split..], tol, out);
}

/// Fits a closed contour: splits at curvature extrema, fits each arc, and
/// splits any arc at its worst point until every segment is within the
/// tolerance of its points. Consecutive segments share endpoints exactly.
pub fn fit_contour(c: &Contour, p: &FitParams) -> Vec<CubicBezier> {
    let n = c.len();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![CubicBezier::line(c.points[0], c.points[0])];
    }
    let splits = if 2 * p.step < n {
        let kappa = discrete_curvature(c, p.step).expect("step checked");
        find_extrema(&kappa, p.kappa_threshold)
    } else {
        vec![0]
    };
    let mut out = Vec::new();
    for (a, &start) in splits.iter().enumerate() {
        let end = if a + 1 < splits.len() {
            splits[a + 1]
        } else {
            splits[0] + n
        };
        let arc: Vec<Point> = (start..=end).map(|k| c.points[k % n]).collect();
        fit_arc(&arc, p.tolerance, &mut out);
    }
    out
}
