//! Synthetic scenes used by the tests, benchmarks and CLI examples.
//!
//! Shapes are painted by pixel-center membership, later shapes over earlier
//! ones, so every scene has an exact occlusion structure.

use crate::grid::{Mask, Pixel};
use crate::raster::{RasterImage, Rgb};

pub const GREEN: Rgb = [46, 139, 87];
pub const YELLOW: Rgb = [250, 220, 90];
pub const ORANGE: Rgb = [240, 130, 30];
pub const BLACK: Rgb = [20, 20, 20];
pub const WHITE: Rgb = [245, 245, 245];
pub const RED: Rgb = [220, 40, 40];
pub const BLUE: Rgb = [40, 70, 210];

/// Raster painter over pixel centers.
#[derive(Clone, Debug)]
pub struct Canvas {
    pub image: RasterImage,
    scale: f64,
}

impl Canvas {
    /// A `width × height` canvas whose shape coordinates are multiplied by
    /// `scale`.
    pub fn new(width: usize, height: usize, scale: f64, background: Rgb) -> Self {
        Self {
            image: RasterImage::filled(width, height, background),
            scale,
        }
    }

    pub fn paint(&mut self, color: Rgb, inside: impl Fn(f64, f64) -> bool) {
        let s = self.scale;
        for y in 0..self.image.height {
            for x in 0..self.image.width {
                if inside((x as f64 + 0.5) / s, (y as f64 + 0.5) / s) {
                    self.image.set(x, y, color);
                }
            }
        }
    }

    pub fn disk(&mut self, color: Rgb, cx: f64, cy: f64, r: f64) {
        self.paint(color, |x, y| (x - cx).powi(2) + (y - cy).powi(2) <= r * r);
    }

    pub fn ellipse(&mut self, color: Rgb, cx: f64, cy: f64, a: f64, b: f64) {
        self.paint(color, |x, y| {
            ((x - cx) / a).powi(2) + ((y - cy) / b).powi(2) <= 1.0
        });
    }

    pub fn rect(&mut self, color: Rgb, x0: f64, y0: f64, x1: f64, y1: f64) {
        self.paint(color, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1);
    }

    /// Convex polygon given in either orientation.
    pub fn convex_polygon(&mut self, color: Rgb, pts: &[(f64, f64)]) {
        self.paint(color, |x, y| inside_convex(pts, x, y));
    }
}

fn inside_convex(pts: &[(f64, f64)], x: f64, y: f64) -> bool {
    let n = pts.len();
    let (mut pos, mut neg) = (false, false);
    for k in 0..n {
        let (a, b) = (pts[k], pts[(k + 1) % n]);
        let c = (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0);
        pos |= c > 0.0;
        neg |= c < 0.0;
    }
    !(pos && neg)
}

/// Triangle with apex `(ax, ay)` and a horizontal base from `xl` to `xr` at
/// height `by`.
fn triangle(apex: (f64, f64), xl: f64, xr: f64, by: f64) -> [(f64, f64); 3] {
    [apex, (xr, by), (xl, by)]
}

/// The mountain scene: a back mountain with the sun behind its peak, a
/// snowy mountain in front of it, a front mountain carrying a snowfield,
/// sky, and a green frame and ground. Base size 160 × 120, multiplied by
/// `scale`.
#[derive(Clone, Debug)]
pub struct MountainScene {
    pub image: RasterImage,
    /// One pixel inside each of the seven regions, in the order: front
    /// mountain, back mountain, sun, sky, snowfield, snowy mountain, ground.
    pub probes: [Pixel; 7],
}

/// Top-to-bottom order of [`MountainScene::probes`] indices (0-based):
/// snowfield, front mountain, snowy mountain, back mountain, sun, sky,
/// ground.
pub const MOUNTAIN_ORDER: [usize; 7] = [4, 0, 5, 1, 2, 3, 6];

pub fn mountain_scene(scale: f64) -> MountainScene {
    let (w, h) = (
        (160.0 * scale).round() as usize,
        (120.0 * scale).round() as usize,
    );
    let mut c = Canvas::new(w, h, scale, YELLOW);
    c.disk(ORANGE, 70.0, 38.0, 22.0);
    c.convex_polygon(BLACK, &triangle((70.0, 20.0), 10.0, 150.0, 100.0));
    c.convex_polygon(WHITE, &triangle((80.0, 45.0), 35.0, 125.0, 100.0));
    c.convex_polygon(BLACK, &triangle((82.0, 62.0), 55.0, 110.0, 100.0));
    c.ellipse(WHITE, 84.0, 88.0, 8.0, 5.0);
    c.paint(GREEN, |x, y| {
        !(4.0..156.0).contains(&x) || !(4.0..100.0).contains(&y)
    });
    let p = |x: f64, y: f64| Pixel::new((x * scale) as i64, (y * scale) as i64);
    MountainScene {
        image: c.image,
        probes: [
            p(60.5, 98.5),
            p(20.5, 97.5),
            p(70.5, 18.5),
            p(10.5, 10.5),
            p(84.5, 88.5),
            p(45.5, 97.5),
            p(1.5, 1.5),
        ],
    }
}

/// Three equal disks overlapping in a cycle: disk 0 covers disk 1, disk 1
/// covers disk 2 and disk 2 covers disk 0. Colors red, green, blue on white;
/// returns the image and a probe pixel in each disk.
pub fn three_disks() -> (RasterImage, [Pixel; 3]) {
    let n = 96;
    let r = 22.0;
    let centers: Vec<(f64, f64)> = (0..3)
        .map(|k| {
            let a = -std::f64::consts::FRAC_PI_2 + k as f64 * 2.0 * std::f64::consts::PI / 3.0;
            (48.0 + 15.0 * a.cos(), 50.0 + 15.0 * a.sin())
        })
        .collect();
    let colors = [RED, GREEN, BLUE];
    let mut img = RasterImage::filled(n, n, WHITE);
    for y in 0..n {
        for x in 0..n {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let inside: Vec<bool> = centers
                .iter()
                .map(|&(cx, cy)| (px - cx).powi(2) + (py - cy).powi(2) <= r * r)
                .collect();
            // pairwise winners of the cycle; the triple overlap goes to disk 0
            let top = match (inside[0], inside[1], inside[2]) {
                (false, false, false) => continue,
                (true, false, false) | (true, true, _) => 0,
                (false, true, false) | (false, true, true) => 1,
                (false, false, true) | (true, false, true) => 2,
            };
            img.set(x, y, colors[top]);
        }
    }
    // a pixel on the far side of each disk, which no other disk reaches
    let probes = [0, 1, 2].map(|k| {
        let (cx, cy) = centers[k];
        let (dx, dy) = ((cx - 48.0) / 15.0, (cy - 50.0) / 15.0);
        Pixel::new((cx + 18.0 * dx) as i64, (cy + 18.0 * dy) as i64)
    });
    (img, probes)
}

/// Kanizsa-style scene: a blue triangle in front of a larger orange
/// triangle, leaving three disjoint orange corners, on white. Returns the
/// image, a probe in the blue triangle, and one probe per orange corner.
pub fn kanizsa() -> (RasterImage, Pixel, [Pixel; 3]) {
    let mut c = Canvas::new(100, 100, 1.0, WHITE);
    c.convex_polygon(ORANGE, &[(50.0, 8.0), (92.0, 82.0), (8.0, 82.0)]);
    c.convex_polygon(BLUE, &[(50.0, 94.0), (24.0, 36.0), (76.0, 36.0)]);
    (
        c.image,
        Pixel::new(50, 60),
        [Pixel::new(50, 14), Pixel::new(84, 78), Pixel::new(16, 78)],
    )
}

/// Disk of radius 24 on a 64 × 64 grid with a V-shaped notch cut into its
/// top rim (apex at height 18). Returns `(S, O)`: the notched shape and the
/// full disk it may be inpainted into.
pub fn notched_disk() -> (Mask, Mask) {
    let n = 64;
    let o = Mask::from_fn(n, n, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        (px - 32.0).powi(2) + (py - 32.0).powi(2) <= 24.0 * 24.0
    });
    let notch = Mask::from_fn(n, n, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        py <= 18.0 && (px - 32.0).abs() <= 18.0 - py
    });
    (o.difference(&notch), o)
}

/// A shape that is one-sided to a horizontal chord, occluded above it.
#[derive(Clone, Debug)]
pub struct OneSided {
    pub s: Mask,
    pub o: Mask,
    /// Chord endpoints `x0`, `xL` (image coordinates, y down).
    pub x0: (f64, f64),
    pub xl: (f64, f64),
    /// Third vertex of the bounding triangle above the chord.
    pub apex: (f64, f64),
    pub theta0: f64,
    pub theta_l: f64,
}

/// A trapezoid whose slanted sides meet the chord `y = 60` at angles
/// `theta0` (left) and `theta_l` (right), with a rectangular occluder above
/// the chord. The sides' extensions form the bounding triangle.
pub fn one_sided(theta0_deg: f64, theta_l_deg: f64, chord: f64) -> OneSided {
    let (w, h) = (128usize, 96usize);
    let chord_y = 60.0;
    let base_y = 88.0;
    let x0 = 64.0 - chord / 2.0;
    let xl = 64.0 + chord / 2.0;
    let (t0, tl) = (theta0_deg.to_radians(), theta_l_deg.to_radians());
    // sides widen going down, below the chord
    let left = |y: f64| x0 - (y - chord_y) / t0.tan();
    let right = |y: f64| xl + (y - chord_y) / tl.tan();
    let s = Mask::from_fn(w, h, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        py >= chord_y && py <= base_y && px >= left(py) && px <= right(py)
    });
    let occluder = Mask::from_fn(w, h, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        py < chord_y && py >= 4.0 && px >= 4.0 && px < w as f64 - 4.0
    });
    // apex: x0 + d·(cos t0, −sin t0) = xl + e·(−cos tl, −sin tl)
    let d = chord * tl.sin() / (t0 + tl).sin();
    let apex = (x0 + d * t0.cos(), chord_y - d * t0.sin());
    OneSided {
        o: s.union(&occluder),
        s,
        x0: (x0, chord_y),
        xl: (xl, chord_y),
        apex,
        theta0: t0,
        theta_l: tl,
    }
}

/// The ten one-sided configurations: (θ0°, θL°, chord length).
pub const ONE_SIDED_CASES: [(f64, f64, f64); 10] = [
    (30.0, 30.0, 40.0),
    (45.0, 45.0, 36.0),
    (60.0, 60.0, 30.0),
    (30.0, 60.0, 40.0),
    (60.0, 30.0, 40.0),
    (40.0, 50.0, 44.0),
    (50.0, 35.0, 36.0),
    (20.0, 45.0, 48.0),
    (55.0, 55.0, 24.0),
    (35.0, 40.0, 52.0),
];

/// Five piecewise-constant scenes (at most 256 × 256, at most 8 colors)
/// with their color counts.
pub fn synthetic_suite() -> Vec<(String, RasterImage, usize)> {
    let mut out = Vec::new();

    let mut c = Canvas::new(256, 256, 2.0, WHITE);
    c.disk(RED, 48.0, 52.0, 30.0);
    c.disk(BLUE, 82.0, 76.0, 28.0);
    c.rect(GREEN, 20.0, 90.0, 70.0, 118.0);
    out.push(("disks".to_string(), c.image, 4));

    let m = mountain_scene(1.6);
    out.push(("mountain".to_string(), m.image, 5));

    let mut c = Canvas::new(256, 192, 1.28, [30, 60, 120]);
    c.ellipse(YELLOW, 100.0, 75.0, 80.0, 50.0);
    c.ellipse(ORANGE, 70.0, 70.0, 30.0, 25.0);
    c.disk(WHITE, 135.0, 60.0, 22.0);
    c.convex_polygon(BLACK, &[(60.0, 140.0), (100.0, 95.0), (150.0, 140.0)]);
    out.push(("ellipses".to_string(), c.image, 5));

    let mut c = Canvas::new(256, 256, 1.0, [235, 235, 225]);
    c.rect([200, 60, 60], 20.0, 20.0, 140.0, 120.0);
    c.rect([60, 120, 200], 90.0, 70.0, 230.0, 180.0);
    c.disk([60, 170, 80], 70.0, 180.0, 50.0);
    c.convex_polygon(
        [240, 200, 40],
        &[(160.0, 150.0), (240.0, 240.0), (120.0, 240.0)],
    );
    c.disk([120, 60, 150], 190.0, 50.0, 30.0);
    c.ellipse([30, 30, 30], 128.0, 128.0, 20.0, 12.0);
    out.push(("blocks".to_string(), c.image, 7));

    let mut c = Canvas::new(256, 256, 1.6, [250, 250, 250]);
    for (k, col) in [
        [200, 40, 40],
        [240, 150, 40],
        [240, 220, 60],
        [60, 160, 80],
        [50, 90, 200],
        [110, 60, 160],
    ]
    .into_iter()
    .enumerate()
    {
        c.disk(col, 80.0, 80.0, 70.0 - 11.0 * k as f64);
    }
    c.rect([20, 20, 20], 72.0, 0.0, 88.0, 160.0);
    out.push(("rings".to_string(), c.image, 8));

    out
}
