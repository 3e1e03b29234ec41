//! Phase-field elastica inpainting of occluded layer parts.
//!
//! Each layer `S` may grow into its covered region `O` (itself plus every
//! layer above it plus the noise layer). The phase field `u` is pinned to 1
//! on `S` and −1 off `O`, and relaxes in between under the double-well
//! approximation of the elastica energy
//!
//! ```text
//! E(u) = Σ_O a(ε/2 |∇u|² + W(u)/2ε) + (b/ε)(εΔu − W'(u)/2ε)²
//!      + Σ_corners Σ_{B∩O} (u − ψ)²,          W(u) = (u² − 1)².
//! ```
//!
//! With `v = εΔu − W'(u)/2ε` the stationarity condition splits into
//!
//! ```text
//! (a − 2bΔ) v + (b/ε²) W''(u) v = 2 Σ (u − ψ) χ_B
//! (−εΔ) u = −v − W'(u)/2ε
//! ```
//!
//! Both are solved spectrally with a Tikhonov term `c` on each side:
//!
//! ```text
//! (a + c + 4b·s) v̂ = F[2Σ(u − ψ)χ_B − (b/ε²) W''(u) v + c v]
//! (c + 2ε·s)     û = F[c u − W'(u)/2ε] − v̂
//! s(kx, ky) = 2 − cos(2π kx/w) − cos(2π ky/h)
//! ```
//!
//! where `−2s` is the symbol of the wrapped 5-point Laplacian. Both symbols
//! are bounded below by `a + c` and `c`, so the pointwise divisions are safe.

use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::contour::{marching_squares, Contour};
use crate::depthgraph::DepthOrdering;
use crate::error::{Error, Result};
use crate::geometry::convex_hull;
use crate::grid::{Field, Mask, Point};
use crate::layers::LayerSet;

#[derive(Clone, Debug, PartialEq)]
pub struct ElasticaParams {
    /// Length weight.
    pub a: f64,
    /// Curvature weight.
    pub b: f64,
    /// Interface width.
    pub epsilon: f64,
    /// Tikhonov regularization on both subproblems.
    pub tikhonov: f64,
    /// Stop when the largest per-pixel change of `u` falls below this.
    pub tol: f64,
    pub max_iters: usize,
    /// Superlevel threshold used to extract the inpainted shape.
    pub level: f64,
    pub corner_radius: f64,
    /// Boundary samples averaged on each side of a corner for its normals.
    pub corner_window: usize,
    /// Layers smaller than this skip the solver and use `Conv(S) ∩ O`.
    pub small_shape: usize,
    /// Padding (pixels) around the covered region's bounding box for the
    /// periodic solve.
    pub margin: usize,
    /// Record the discrete energy after every iteration.
    pub track_energy: bool,
    /// Halve the step of an iteration while it would raise the energy.
    pub monotone: bool,
    /// Stop once the energy has dropped by less than this fraction over the
    /// last [`STALL_WINDOW`] iterations. Zero disables the check.
    pub stall_tol: f64,
}

/// Iterations over which energy progress is measured for `stall_tol`.
pub const STALL_WINDOW: usize = 50;

impl Default for ElasticaParams {
    fn default() -> Self {
        Self {
            a: 0.1,
            b: 1.0,
            epsilon: 5.0,
            tikhonov: 3.0,
            tol: 1e-4,
            max_iters: 2000,
            level: 0.0,
            corner_radius: 5.0,
            corner_window: 4,
            small_shape: 30,
            margin: 8,
            track_energy: false,
            monotone: true,
            stall_tol: 1e-5,
        }
    }
}

impl ElasticaParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.a >= 0.0) || !(self.b >= 0.0) {
            return bad("elastica weights a and b must be non-negative");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.tikhonov > 0.0) {
            return bad("tikhonov term must be positive");
        }
        if !(self.tol > 0.0) {
            return bad("tolerance must be positive");
        }
        if !(self.stall_tol >= 0.0) {
            return bad("stall tolerance must be non-negative");
        }
        if !(self.level > -1.0 && self.level < 1.0) {
            return bad("extraction level must lie strictly between -1 and 1");
        }
        if !(self.corner_radius >= 0.0) || self.corner_window == 0 {
            return bad("corner radius must be non-negative and window at least 1");
        }
        Ok(())
    }
}

/// `O_i`: the layer itself, every layer ranked at or above it, and noise.
pub fn covered_region(id: usize, ordering: &DepthOrdering, set: &LayerSet) -> Mask {
    let mut o = set.noise.mask.clone();
    let r = ordering.rank[id];
    for (j, l) in set.layers.iter().enumerate() {
        if ordering.rank[j] <= r {
            o.union_with(&l.mask);
        }
    }
    o
}

/// Endpoint of a boundary arc where the layer meets its inpaintable region.
#[derive(Clone, Debug, PartialEq)]
pub struct InpaintCorner {
    /// Pixel-corner lattice point (pixel `(x, y)` spans `[x, x+1] × [y, y+1]`).
    pub point: Point,
    /// Outward normal just before the corner along the traced boundary.
    pub pre_normal: Point,
    /// Outward normal just after it.
    pub post_normal: Point,
    pub radius: f64,
    /// Pre and post normals are anti-parallel; the phase falls back to +1
    /// off the layer.
    pub degenerate: bool,
    /// `(x, y, ψ)` for every in-domain pixel whose center lies in the disk.
    pub phase: Vec<(usize, usize, i8)>,
}

#[derive(Clone, Copy, Debug)]
struct Crack {
    from: (i64, i64),
    to: (i64, i64),
    dir: (i64, i64),
    inpaintable: bool,
}

/// Crack-edge boundary loops of `s`, traversed with `s` on the right (outer
/// loops run clockwise on screen). An edge is inpaintable when the pixel
/// across it lies in `o \ s`. At saddle vertices the trace turns toward the
/// current pixel, so diagonal neighbors stay separate.
fn boundary_loops(s: &Mask, o: &Mask) -> Vec<Vec<Crack>> {
    let (w, h) = (s.width(), s.height());
    let mut cracks = Vec::new();
    let mut outgoing: std::collections::HashMap<(i64, i64), Vec<usize>> = Default::default();
    for (x, y) in s.iter_set() {
        let (x, y) = (x as i64, y as i64);
        let sides = [
            ((x, y), (x + 1, y), (1, 0), (x, y - 1)),
            ((x + 1, y), (x + 1, y + 1), (0, 1), (x + 1, y)),
            ((x + 1, y + 1), (x, y + 1), (-1, 0), (x, y + 1)),
            ((x, y + 1), (x, y), (0, -1), (x - 1, y)),
        ];
        for (from, to, dir, (ox, oy)) in sides {
            if s.get_signed(ox, oy) {
                continue;
            }
            let in_domain = ox >= 0 && oy >= 0 && (ox as usize) < w && (oy as usize) < h;
            outgoing.entry(from).or_default().push(cracks.len());
            cracks.push(Crack {
                from,
                to,
                dir,
                inpaintable: in_domain && o.get(ox as usize, oy as usize),
            });
        }
    }
    let mut visited = vec![false; cracks.len()];
    let mut loops = Vec::new();
    for start in 0..cracks.len() {
        if visited[start] {
            continue;
        }
        let mut lp = Vec::new();
        let mut cur = start;
        loop {
            visited[cur] = true;
            lp.push(cracks[cur]);
            let (dx, dy) = cracks[cur].dir;
            let cands = &outgoing[&cracks[cur].to];
            let pick = [(-dy, dx), (dx, dy), (dy, -dx)]
                .iter()
                .find_map(|&d| cands.iter().copied().find(|&e| cracks[e].dir == d))
                .expect("crack boundary is closed");
            if pick == start {
                break;
            }
            cur = pick;
        }
        loops.push(lp);
    }
    loops
}

fn outward_normal(cracks: &[Crack], range: impl Iterator<Item = usize>) -> Point {
    let mut t = Point::new(0.0, 0.0);
    for k in range {
        let (dx, dy) = cracks[k % cracks.len()].dir;
        t = t + Point::new(dx as f64, dy as f64);
    }
    let n = t.norm();
    if n == 0.0 {
        return t;
    }
    // left of the travel direction (y down) is outside
    Point::new(t.y / n, -t.x / n)
}

/// Finds the inpainting corners of `s` within covered region `o`: vertices
/// on the crack boundary of `s` where the edges switch between facing
/// `o \ s` and facing the outside of `o`.
pub fn find_corners(s: &Mask, o: &Mask, radius: f64, window: usize) -> Vec<InpaintCorner> {
    let mut out = Vec::new();
    for lp in boundary_loops(s, o) {
        let n = lp.len();
        let win = window.min(n / 2).max(1);
        for k in 0..n {
            let prev = &lp[(k + n - 1) % n];
            if prev.inpaintable == lp[k].inpaintable {
                continue;
            }
            let pre = outward_normal(&lp, (n + k - win)..(n + k));
            let post = outward_normal(&lp, k..k + win);
            let (vx, vy) = lp[k].from;
            let point = Point::new(vx as f64, vy as f64);
            let degenerate = (pre + post).norm() < 1e-9;
            out.push(corner_phase(s, point, pre, post, radius, degenerate));
        }
    }
    out
}

fn corner_phase(
    s: &Mask,
    point: Point,
    pre: Point,
    post: Point,
    radius: f64,
    degenerate: bool,
) -> InpaintCorner {
    let (w, h) = (s.width() as i64, s.height() as i64);
    let mut phase = Vec::new();
    let lo_x = ((point.x - radius - 0.5).floor() as i64).max(0);
    let hi_x = ((point.x + radius - 0.5).ceil() as i64).min(w - 1);
    let lo_y = ((point.y - radius - 0.5).floor() as i64).max(0);
    let hi_y = ((point.y + radius - 0.5).ceil() as i64).min(h - 1);
    for y in lo_y..=hi_y {
        for x in lo_x..=hi_x {
            let rel = Point::new(x as f64 + 0.5, y as f64 + 0.5) - point;
            if rel.norm() > radius {
                continue;
            }
            let in_s = s.get(x as usize, y as usize);
            let p = if !degenerate && pre.dot(rel) >= 0.0 && post.dot(rel) >= 0.0 {
                -1
            } else if in_s {
                0
            } else {
                1
            };
            phase.push((x as usize, y as usize, p));
        }
    }
    InpaintCorner {
        point,
        pre_normal: pre,
        post_normal: post,
        radius,
        degenerate,
        phase,
    }
}

/// Converged (or last) iterate of the solver on the full image domain.
#[derive(Clone, Debug)]
pub struct PhaseField {
    pub u: Field,
    pub v: Field,
    pub iterations: usize,
    pub converged: bool,
    /// Stopped on the energy stall test before `u` settled.
    pub stalled: bool,
    /// Discrete energy after each iteration, when tracked.
    pub energy: Vec<f64>,
    /// Iterations where the splitting step was replaced by a gradient step.
    pub fallback_steps: usize,
}

/// Inpainted layer: `C = {u > level}` and its boundary loops.
#[derive(Clone, Debug)]
pub struct InpaintedShape {
    pub mask: Mask,
    pub contours: Vec<Contour>,
}

#[inline]
fn well(u: f64) -> f64 {
    let t = u * u - 1.0;
    t * t
}

#[inline]
fn well_d1(u: f64) -> f64 {
    4.0 * u * u * u - 4.0 * u
}

#[inline]
fn well_d2(u: f64) -> f64 {
    12.0 * u * u - 4.0
}

/// Smallest step fraction tried by the energy safeguard.
const MIN_STEP: f64 = 1.0 / 1024.0;

/// Per-pixel corner data: number of disks covering the pixel, `Σψ`, `Σψ²`.
struct CornerTerms {
    count: Vec<f64>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

/// Rectangular sub-domain, possibly extending past the image, on which the
/// periodic solve runs.
#[derive(Clone, Copy, Debug)]
struct Window {
    x0: i64,
    y0: i64,
    w: usize,
    h: usize,
}

impl Window {
    fn around(o: &Mask, margin: usize) -> Window {
        let bb = o.bbox().expect("covered region is nonempty");
        let m = margin.max(1) as i64;
        let w = smooth_size(bb.width() + 2 * m as usize);
        let h = smooth_size(bb.height() + 2 * m as usize);
        let x0 = bb.min_x as i64 - (w as i64 - bb.width() as i64) / 2;
        let y0 = bb.min_y as i64 - (h as i64 - bb.height() as i64) / 2;
        Window { x0, y0, w, h }
    }

    fn full(width: usize, height: usize) -> Window {
        Window {
            x0: 0,
            y0: 0,
            w: width,
            h: height,
        }
    }

    /// Image pixel of window index `i`, if inside the image.
    fn image_pixel(&self, i: usize, width: usize, height: usize) -> Option<(usize, usize)> {
        let x = self.x0 + (i % self.w) as i64;
        let y = self.y0 + (i / self.w) as i64;
        (x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height)
            .then_some((x as usize, y as usize))
    }
}

/// Smallest integer ≥ n whose prime factors are 2, 3 and 5.
fn smooth_size(n: usize) -> usize {
    (n.max(1)..)
        .find(|&m| {
            let mut k = m;
            for p in [2, 3, 5] {
                while k % p == 0 {
                    k /= p;
                }
            }
            k == 1
        })
        .unwrap()
}

/// Per-pixel constraint on the window: 1 pinned up, −1 pinned down, 0 free.
fn constraints(s: &Mask, o: &Mask, win: &Window) -> Vec<i8> {
    (0..win.w * win.h)
        .map(|i| match win.image_pixel(i, s.width(), s.height()) {
            Some((x, y)) if s.get(x, y) => 1,
            Some((x, y)) if o.get(x, y) => 0,
            _ => -1,
        })
        .collect()
}

fn corner_terms(corners: &[InpaintCorner], o: &Mask, win: &Window) -> CornerTerms {
    let n = win.w * win.h;
    let mut t = CornerTerms {
        count: vec![0.0; n],
        sum: vec![0.0; n],
        sum_sq: vec![0.0; n],
    };
    for c in corners {
        for &(x, y, p) in &c.phase {
            if !o.get(x, y) {
                continue;
            }
            let wx = x as i64 - win.x0;
            let wy = y as i64 - win.y0;
            if wx < 0 || wy < 0 || wx as usize >= win.w || wy as usize >= win.h {
                continue;
            }
            let i = wy as usize * win.w + wx as usize;
            let p = p as f64;
            t.count[i] += 1.0;
            t.sum[i] += p;
            t.sum_sq[i] += p * p;
        }
    }
    t
}

/// 2D FFT on a `w × h` grid. Spectra are kept transposed (`kx`-major) since
/// only pointwise operations touch them.
struct Spectral {
    w: usize,
    h: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl Spectral {
    fn new(w: usize, h: usize) -> Self {
        let mut planner = FftPlanner::new();
        let row_fwd = planner.plan_fft_forward(w);
        let col_fwd = planner.plan_fft_forward(h);
        let row_inv = planner.plan_fft_inverse(w);
        let col_inv = planner.plan_fft_inverse(h);
        let scratch_len = [&row_fwd, &col_fwd, &row_inv, &col_inv]
            .iter()
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap();
        Self {
            w,
            h,
            row_fwd,
            col_fwd,
            row_inv,
            col_inv,
            scratch: vec![Complex64::default(); scratch_len],
            tmp: vec![Complex64::default(); w * h],
        }
    }

    fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
        for r in 0..rows {
            for c in 0..cols {
                dst[c * rows + r] = src[r * cols + c];
            }
        }
    }

    /// Row-major spatial grid → transposed spectrum, in place.
    fn forward(&mut self, buf: &mut Vec<Complex64>) {
        self.row_fwd.process_with_scratch(buf, &mut self.scratch);
        Self::transpose(buf, &mut self.tmp, self.h, self.w);
        self.col_fwd
            .process_with_scratch(&mut self.tmp, &mut self.scratch);
        std::mem::swap(buf, &mut self.tmp);
    }

    /// Transposed spectrum → row-major spatial grid, normalized.
    fn inverse(&mut self, buf: &mut Vec<Complex64>) {
        self.col_inv.process_with_scratch(buf, &mut self.scratch);
        Self::transpose(buf, &mut self.tmp, self.w, self.h);
        self.row_inv
            .process_with_scratch(&mut self.tmp, &mut self.scratch);
        std::mem::swap(buf, &mut self.tmp);
        let scale = 1.0 / (self.w * self.h) as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
    }

    /// `2 − cos(2πkx/w) − cos(2πky/h)` in spectrum layout.
    fn laplace_symbol(&self) -> Vec<f64> {
        let tau = 2.0 * std::f64::consts::PI;
        let cx: Vec<f64> = (0..self.w)
            .map(|k| (tau * k as f64 / self.w as f64).cos())
            .collect();
        let cy: Vec<f64> = (0..self.h)
            .map(|k| (tau * k as f64 / self.h as f64).cos())
            .collect();
        let mut s = Vec::with_capacity(self.w * self.h);
        for &ax in &cx {
            for &ay in &cy {
                s.push(2.0 - ax - ay);
            }
        }
        s
    }

    /// Spectrum index of `−k` for spectrum index `k`.
    fn mirror(&self, k: usize) -> usize {
        let (kx, ky) = (k / self.h, k % self.h);
        ((self.w - kx) % self.w) * self.h + (self.h - ky) % self.h
    }
}

/// Wrapped 5-point Laplacian of a row-major `w × h` grid.
pub fn periodic_laplacian(f: &Field) -> Field {
    let (w, h) = (f.width, f.height);
    let mut out = Field::filled(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let c = f.get(x, y);
            let l = f.get((x + w - 1) % w, y);
            let r = f.get((x + 1) % w, y);
            let u = f.get(x, (y + h - 1) % h);
            let d = f.get(x, (y + 1) % h);
            out.set(x, y, l + r + u + d - 4.0 * c);
        }
    }
    out
}

/// The same Laplacian applied through its Fourier symbol `−2s`.
pub fn spectral_laplacian(f: &Field) -> Field {
    let mut sp = Spectral::new(f.width, f.height);
    let sym = sp.laplace_symbol();
    let mut buf: Vec<Complex64> = f.data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    sp.forward(&mut buf);
    for (z, s) in buf.iter_mut().zip(&sym) {
        *z *= -2.0 * s;
    }
    sp.inverse(&mut buf);
    Field {
        width: f.width,
        height: f.height,
        data: buf.iter().map(|z| z.re).collect(),
    }
}

/// Discrete elastica energy of `u` on window `win`, counted over free and
/// pinned pixels inside `O` (`fixed != -1` or pinned-up). Neighbors wrap
/// within the window, which only matters for pixels outside `O`.
fn window_energy(
    u: &[f64],
    in_o: &[bool],
    terms: &CornerTerms,
    win: &Window,
    p: &ElasticaParams,
) -> f64 {
    let (w, h) = (win.w, win.h);
    let eps = p.epsilon;
    let mut e = 0.0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !in_o[i] {
                continue;
            }
            let c = u[i];
            let r = u[y * w + (x + 1) % w];
            let l = u[y * w + (x + w - 1) % w];
            let d = u[((y + 1) % h) * w + x];
            let t = u[((y + h - 1) % h) * w + x];
            let grad2 = (r - c) * (r - c) + (d - c) * (d - c);
            let lap = l + r + t + d - 4.0 * c;
            let mu = eps * lap - well_d1(c) / (2.0 * eps);
            e += p.a * (0.5 * eps * grad2 + well(c) / (2.0 * eps)) + (p.b / eps) * mu * mu;
            e += terms.count[i] * c * c - 2.0 * terms.sum[i] * c + terms.sum_sq[i];
        }
    }
    e
}

/// Chemical potential `εΔu − W'(u)/2ε` with the wrapped Laplacian.
fn potential(u: &[f64], win: &Window, eps: f64) -> Vec<f64> {
    let (w, h) = (win.w, win.h);
    let mut mu = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let lap = u[y * w + (x + 1) % w]
                + u[y * w + (x + w - 1) % w]
                + u[((y + 1) % h) * w + x]
                + u[((y + h - 1) % h) * w + x]
                - 4.0 * u[i];
            mu[i] = eps * lap - well_d1(u[i]) / (2.0 * eps);
        }
    }
    mu
}

/// Exact gradient of [`window_energy`] with respect to every pixel.
fn window_gradient(
    u: &[f64],
    in_o: &[bool],
    terms: &CornerTerms,
    win: &Window,
    p: &ElasticaParams,
) -> Vec<f64> {
    let (w, h) = (win.w, win.h);
    let eps = p.epsilon;
    let mu = potential(u, win, eps);
    let masked: Vec<f64> = mu
        .iter()
        .zip(in_o)
        .map(|(&m, &o)| if o { m } else { 0.0 })
        .collect();
    let mut g = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let xl = y * w + (x + w - 1) % w;
            let xr = y * w + (x + 1) % w;
            let yu = ((y + h - 1) % h) * w + x;
            let yd = ((y + 1) % h) * w + x;
            let c = u[i];
            let mut gi = 0.0;
            // forward-difference gradient terms owned by this pixel and by
            // its left and upper neighbors
            if in_o[i] {
                gi -= p.a * eps * ((u[xr] - c) + (u[yd] - c));
                gi += p.a * well_d1(c) / (2.0 * eps);
                gi -= (p.b / eps) * mu[i] * well_d2(c) / eps;
                gi += 2.0 * (terms.count[i] * c - terms.sum[i]);
            }
            if in_o[xl] {
                gi += p.a * eps * (c - u[xl]);
            }
            if in_o[yu] {
                gi += p.a * eps * (c - u[yu]);
            }
            let lap = masked[xl] + masked[xr] + masked[yu] + masked[yd] - 4.0 * masked[i];
            gi += 2.0 * p.b * lap;
            g[i] = gi;
        }
    }
    g
}

/// Discrete energy of a full-domain field for layer `s` in region `o`.
/// Pixels beyond the image border count as −1.
pub fn discrete_energy(u: &Field, o: &Mask, corners: &[InpaintCorner], p: &ElasticaParams) -> f64 {
    let win = Window {
        x0: -1,
        y0: -1,
        w: u.width + 2,
        h: u.height + 2,
    };
    let mut padded = vec![-1.0; win.w * win.h];
    let mut in_o = vec![false; win.w * win.h];
    for y in 0..u.height {
        for x in 0..u.width {
            let i = (y + 1) * win.w + x + 1;
            padded[i] = u.get(x, y);
            in_o[i] = o.get(x, y);
        }
    }
    let terms = corner_terms(corners, o, &win);
    window_energy(&padded, &in_o, &terms, &win, p)
}

/// Relaxes the phase field of layer `s` inside covered region `o`.
///
/// Starts from `u = 1` on `s` with holes filled, 0 on the rest of `o`, −1
/// elsewhere, and `v = 0`. After every update `u` is pinned to 1 on `s`,
/// −1 off `o`, and clamped to [−1, 1]. With `monotone` set, an iterate
/// that would raise the discrete energy is pulled back toward the previous
/// one by step halving; when no step of at least [`MIN_STEP`] descends,
/// the iterate is kept and the solve stops. The solve runs on the bounding box
/// of `o` padded by `margin` pixels of −1 (past the image border too) with
/// periodic wrap on that window.
pub fn solve(
    s: &Mask,
    o: &Mask,
    corners: &[InpaintCorner],
    p: &ElasticaParams,
) -> Result<PhaseField> {
    p.validate()?;
    if s.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (width, height) = (s.width(), s.height());
    let o = o.union(s);
    let filled = s.fill_holes();

    let win = if o.difference(s).is_empty() {
        Window::full(width, height)
    } else {
        Window::around(&o, p.margin)
    };
    let fixed = constraints(s, &o, &win);
    let n = win.w * win.h;
    let mut u: Vec<f64> = (0..n)
        .map(|i| match fixed[i] {
            0 => {
                let (x, y) = win.image_pixel(i, width, height).unwrap();
                if filled.get(x, y) {
                    1.0
                } else {
                    0.0
                }
            }
            f => f as f64,
        })
        .collect();
    let mut v = vec![0.0; n];
    let in_o: Vec<bool> = fixed.iter().map(|&f| f != -1).collect();
    let terms = corner_terms(corners, &o, &win);

    let mut energy = Vec::new();
    let mut iterations = 0;
    let mut fallback_steps = 0;
    let mut converged = fixed.iter().all(|&f| f != 0);
    let mut stalled = false;
    if !converged {
        let mut sp = Spectral::new(win.w, win.h);
        let sym = sp.laplace_symbol();
        let inv_v: Vec<f64> = sym
            .iter()
            .map(|s| 1.0 / (p.a + p.tikhonov + 4.0 * p.b * s))
            .collect();
        let inv_u: Vec<f64> = sym
            .iter()
            .map(|s| 1.0 / (p.tikhonov + 2.0 * p.epsilon * s))
            .collect();
        let c = p.tikhonov;
        let eps = p.epsilon;
        let mut z = vec![Complex64::default(); n];
        let mut out = vec![Complex64::default(); n];
        let (mut cand_u, mut cand_v, mut trial) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut current = window_energy(&u, &in_o, &terms, &win, p);
        let mut recent = std::collections::VecDeque::with_capacity(STALL_WINDOW + 1);
        let stall_check = p.stall_tol > 0.0 && p.monotone;
        // rough Hessian symbol of the energy: Tikhonov shift, length term,
        // and the squared Laplacian of the curvature term
        let precond: Vec<f64> = sym
            .iter()
            .map(|s| 1.0 / (p.tikhonov + 2.0 * p.a * p.epsilon * s + 8.0 * p.b * p.epsilon * s * s))
            .collect();
        while iterations < p.max_iters {
            iterations += 1;
            // pack both right-hand sides into one complex transform
            for i in 0..n {
                let ui = u[i];
                let fid = if fixed[i] == 0 {
                    terms.count[i] * ui - terms.sum[i]
                } else {
                    0.0
                };
                let rhs_v = 2.0 * fid - (p.b / (eps * eps)) * well_d2(ui) * v[i] + c * v[i];
                let rhs_u = c * ui - well_d1(ui) / (2.0 * eps);
                z[i] = Complex64::new(rhs_v, rhs_u);
            }
            sp.forward(&mut z);
            for k in 0..n {
                let zm = z[sp.mirror(k)].conj();
                let fv = (z[k] + zm) * 0.5;
                let fu = (z[k] - zm) * Complex64::new(0.0, -0.5);
                let vh = fv * inv_v[k];
                let uh = (fu - vh) * inv_u[k];
                out[k] = vh + Complex64::new(0.0, 1.0) * uh;
            }
            sp.inverse(&mut out);
            for i in 0..n {
                cand_v[i] = out[i].re;
                cand_u[i] = match fixed[i] {
                    0 => out[i].im.clamp(-1.0, 1.0),
                    f => f as f64,
                };
            }
            // damp the step until the energy does not rise; convex
            // combinations of admissible fields stay admissible
            let mut theta = 1.0;
            let mut accepted = !p.monotone;
            while !accepted && theta >= MIN_STEP {
                for i in 0..n {
                    trial[i] = u[i] + theta * (cand_u[i] - u[i]);
                }
                accepted = window_energy(&trial, &in_o, &terms, &win, p)
                    <= current + 1e-12 * current.abs();
                if !accepted {
                    theta *= 0.5;
                }
            }
            if !p.monotone {
                trial.copy_from_slice(&cand_u);
            }
            if accepted {
                for i in 0..n {
                    v[i] += theta * (cand_v[i] - v[i]);
                }
            } else {
                // the splitting step does not descend from here: take a
                // preconditioned projected gradient step instead
                fallback_steps += 1;
                if !gradient_step(
                    &mut sp, &u, &mut trial, &fixed, &in_o, &terms, &win, p, &precond, current,
                ) {
                    trial.copy_from_slice(&u);
                }
                v = potential(&trial, &win, eps);
            }
            let mut delta: f64 = 0.0;
            for i in 0..n {
                delta = delta.max((trial[i] - u[i]).abs());
                u[i] = trial[i];
            }
            if p.monotone || p.track_energy {
                current = window_energy(&u, &in_o, &terms, &win, p);
            }
            if p.track_energy {
                energy.push(current);
            }
            if delta < p.tol {
                converged = true;
                break;
            }
            if stall_check {
                recent.push_back(current);
                if recent.len() > STALL_WINDOW {
                    let old = recent.pop_front().unwrap();
                    if old - current <= p.stall_tol * current.abs() {
                        stalled = true;
                        break;
                    }
                }
            }
        }
        if stalled {
            log::debug!("elastica solve stalled after {iterations} iterations");
        } else if !converged {
            log::warn!("elastica solve stopped at {iterations} iterations without converging");
        }
    }

    let mut uf = Field::filled(width, height, -1.0);
    let mut vf = Field::filled(width, height, 0.0);
    for i in 0..n {
        if let Some((x, y)) = win.image_pixel(i, width, height) {
            uf.set(x, y, u[i]);
            vf.set(x, y, v[i]);
        }
    }
    Ok(PhaseField {
        u: uf,
        v: vf,
        iterations,
        converged,
        stalled,
        energy,
        fallback_steps,
    })
}

/// One preconditioned projected gradient step with step halving, written
/// into `out`. Pinned pixels and free pixels held at a bound by the
/// gradient are frozen. Returns false when no step of at least
/// [`MIN_STEP`] lowers the energy.
#[allow(clippy::too_many_arguments)]
fn gradient_step(
    sp: &mut Spectral,
    u: &[f64],
    out: &mut [f64],
    fixed: &[i8],
    in_o: &[bool],
    terms: &CornerTerms,
    win: &Window,
    p: &ElasticaParams,
    precond: &[f64],
    current: f64,
) -> bool {
    let n = u.len();
    let g = window_gradient(u, in_o, terms, win, p);
    let active: Vec<bool> = (0..n)
        .map(|i| fixed[i] == 0 && !(u[i] >= 1.0 && g[i] < 0.0) && !(u[i] <= -1.0 && g[i] > 0.0))
        .collect();
    let mut buf: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(if active[i] { g[i] } else { 0.0 }, 0.0))
        .collect();
    sp.forward(&mut buf);
    for (z, m) in buf.iter_mut().zip(precond) {
        *z *= *m;
    }
    sp.inverse(&mut buf);
    let mut theta = 1.0;
    while theta >= MIN_STEP {
        for i in 0..n {
            out[i] = if active[i] {
                (u[i] - theta * buf[i].re).clamp(-1.0, 1.0)
            } else {
                u[i]
            };
        }
        if window_energy(out, in_o, terms, win, p) < current {
            return true;
        }
        theta *= 0.5;
    }
    false
}

/// `{u > level}` and its marching-squares loops.
pub fn extract_contour(u: &Field, level: f64) -> Result<InpaintedShape> {
    let mask = u.superlevel(level);
    if mask.is_empty() {
        return Err(Error::EmptySuperlevel);
    }
    Ok(InpaintedShape {
        contours: marching_squares(u, level),
        mask,
    })
}

/// ±1 field of a mask.
pub fn indicator_field(mask: &Mask) -> Field {
    let mut f = Field::filled(mask.width(), mask.height(), -1.0);
    for (x, y) in mask.iter_set() {
        f.set(x, y, 1.0);
    }
    f
}

/// `C = Conv(S) ∩ O` without running the solver.
pub fn small_shape_shortcut(s: &Mask, o: &Mask) -> Result<InpaintedShape> {
    let hull = convex_hull(s)?;
    let mask = hull.raster.intersection(&o.union(s));
    extract_contour(&indicator_field(&mask), 0.0)
}

/// Outcome of inpainting one layer.
#[derive(Clone, Debug)]
pub struct LayerInpainting {
    pub shape: InpaintedShape,
    /// Present when the solver ran.
    pub field: Option<PhaseField>,
    pub corners: usize,
}

/// Covered region, corners, solve (or shortcut) and extraction for one layer.
pub fn inpaint_layer(
    id: usize,
    ordering: &DepthOrdering,
    set: &LayerSet,
    p: &ElasticaParams,
) -> Result<LayerInpainting> {
    let s = &set.layers[id].mask;
    let o = covered_region(id, ordering, set);
    if set.layers[id].area < p.small_shape {
        return Ok(LayerInpainting {
            shape: small_shape_shortcut(s, &o)?,
            field: None,
            corners: 0,
        });
    }
    let corners = find_corners(s, &o, p.corner_radius, p.corner_window);
    let field = solve(s, &o, &corners, p)?;
    let shape = extract_contour(&field.u, p.level)?;
    Ok(LayerInpainting {
        shape,
        field: Some(field),
        corners: corners.len(),
    })
}

/// Writes `u` as an 8-bit grayscale PNG, mapping [−1, 1] to [0, 255].
pub fn save_field_png(u: &Field, path: &Path) -> Result<()> {
    let data: Vec<u8> = u
        .data
        .iter()
        .map(|&x| (((x.clamp(-1.0, 1.0) + 1.0) * 127.5).round()) as u8)
        .collect();
    crate::raster::write_png(
        path,
        u.width,
        u.height,
        png::ColorType::Grayscale,
        png::BitDepth::Eight,
        &data,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn disk(n: usize, cx: f64, cy: f64, r: f64) -> Mask {
        Mask::from_fn(n, n, |x, y| {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            dx * dx + dy * dy <= r * r
        })
    }

    #[test]
    fn spectral_and_spatial_laplacians_agree() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for (w, h) in [(16, 16), (12, 20), (9, 15)] {
            let f = Field {
                width: w,
                height: h,
                data: (0..w * h)
                    .map(|_| rng.random::<f64>() * 2.0 - 1.0)
                    .collect(),
            };
            let a = periodic_laplacian(&f);
            let b = spectral_laplacian(&f);
            let scale = a.data.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((x - y).abs() <= 1e-10 * scale, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn energy_gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let win = Window {
            x0: 0,
            y0: 0,
            w: 10,
            h: 9,
        };
        let n = win.w * win.h;
        let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let in_o: Vec<bool> = (0..n).map(|i| (i * 7) % 5 != 0).collect();
        let terms = CornerTerms {
            count: (0..n).map(|i| (i % 3) as f64).collect(),
            sum: (0..n)
                .map(|i| ((i % 3) as f64) * if i % 2 == 0 { 1.0 } else { -1.0 })
                .collect(),
            sum_sq: (0..n).map(|i| (i % 3) as f64).collect(),
        };
        let p = ElasticaParams::default();
        let g = window_gradient(&u, &in_o, &terms, &win, &p);
        let hstep = 1e-6;
        for k in 0..n {
            let (mut up, mut dn) = (u.clone(), u.clone());
            up[k] += hstep;
            dn[k] -= hstep;
            let fd = (window_energy(&up, &in_o, &terms, &win, &p)
                - window_energy(&dn, &in_o, &terms, &win, &p))
                / (2.0 * hstep);
            assert!(
                (fd - g[k]).abs() <= 1e-5 * fd.abs().max(1.0),
                "pixel {k}: {fd} vs {}",
                g[k]
            );
        }
    }

    #[test]
    fn smooth_sizes() {
        assert_eq!(smooth_size(7), 8);
        assert_eq!(smooth_size(31), 32);
        assert_eq!(smooth_size(49), 50);
        assert_eq!(smooth_size(61), 64);
    }

    #[test]
    fn nothing_to_inpaint_returns_the_layer() {
        let s = Mask::from_fn(16, 16, |x, y| (4..12).contains(&x) && (3..9).contains(&y));
        let f = solve(&s, &s, &[], &ElasticaParams::default()).unwrap();
        assert!(f.converged);
        assert_eq!(f.iterations, 0);
        assert_eq!(f.u.superlevel(0.0), s);
        assert!(find_corners(&s, &s, 5.0, 4).is_empty());
    }

    #[test]
    fn crack_loops_are_clockwise_and_closed() {
        let s = Mask::from_ascii(&["......", ".###..", ".#.#..", ".###..", "....#."]);
        let loops = boundary_loops(&s, &s);
        // outer ring, inner hole, and the diagonal pixel on its own
        assert_eq!(loops.len(), 3);
        for lp in &loops {
            for k in 0..lp.len() {
                assert_eq!(lp[k].to, lp[(k + 1) % lp.len()].from);
            }
        }
        let lens: Vec<usize> = loops.iter().map(Vec::len).collect();
        assert_eq!(lens, vec![12, 4, 4]);
    }

    #[test]
    fn notched_square_has_two_corners_at_notch_ends() {
        // 12×12 square with its top-right quarter occluded
        let sq = Mask::from_fn(20, 20, |x, y| (4..16).contains(&x) && (4..16).contains(&y));
        let notch = Mask::from_fn(20, 20, |x, y| (10..16).contains(&x) && (4..10).contains(&y));
        let s = sq.difference(&notch);
        let corners = find_corners(&s, &sq, 5.0, 4);
        let pts: Vec<(f64, f64)> = corners.iter().map(|c| (c.point.x, c.point.y)).collect();
        // brute-force walk: the occluded edges are the notch's left side
        // x = 10 for y in 4..10 and its bottom y = 10 for x in 10..16
        assert_eq!(pts.len(), 2);
        assert!(pts.contains(&(10.0, 4.0)));
        assert!(pts.contains(&(16.0, 10.0)));
        for c in &corners {
            assert!(!c.degenerate);
            let (n0, n1) = (c.pre_normal, c.post_normal);
            assert!((n0.norm() - 1.0).abs() < 1e-12 && (n1.norm() - 1.0).abs() < 1e-12);
        }
        // corner (10,4): the fixed top edge faces up, the occluded side faces
        // right; the −1 wedge is up-right over the notch's top row
        let c = corners
            .iter()
            .find(|c| c.point == Point::new(10.0, 4.0))
            .unwrap();
        let at = |x, y| {
            c.phase
                .iter()
                .find(|&&(a, b, _)| (a, b) == (x, y))
                .map(|t| t.2)
        };
        assert_eq!(at(11, 2), Some(-1));
        assert_eq!(at(8, 5), Some(0));
        assert_eq!(at(11, 5), Some(1));
    }

    #[test]
    fn fully_inpaintable_boundary_has_no_corners() {
        let s = disk(24, 12.0, 12.0, 4.0);
        let o = disk(24, 12.0, 12.0, 9.0);
        assert!(find_corners(&s, &o, 5.0, 4).is_empty());
    }

    #[test]
    fn constraints_hold_on_notched_disk() {
        let n = 48;
        let o = disk(n, 24.0, 24.0, 16.0);
        let notch = Mask::from_fn(n, n, |x, y| {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            py <= 16.0 && (px - 24.0).abs() <= 16.0 - py
        });
        let s = o.difference(&notch);
        let corners = find_corners(&s, &o, 5.0, 4);
        assert_eq!(corners.len(), 2);
        let p = ElasticaParams {
            track_energy: true,
            ..ElasticaParams::default()
        };
        let f = solve(&s, &o, &corners, &p).unwrap();
        assert!(f.converged);
        let c = f.u.superlevel(0.0);
        assert!(s.is_subset_of(&c) && c.is_subset_of(&o));
        assert!(c.count() > s.count());
        // the tracked energy matches the full-domain evaluation
        let e = discrete_energy(&f.u, &o, &corners, &p);
        assert!((e - f.energy.last().unwrap()).abs() <= 1e-9 * e.abs().max(1.0));
    }

    #[test]
    fn small_shape_uses_clipped_hull() {
        let s = Mask::from_ascii(&["#....", "#....", "#....", "####.", "....."]);
        let full = Mask::full(5, 5);
        let shape = small_shape_shortcut(&s, &full).unwrap();
        assert_eq!(shape.mask, convex_hull(&s).unwrap().raster);
        let clip = Mask::from_ascii(&["#....", "##...", "#....", "####.", "....."]);
        let shape = small_shape_shortcut(&s, &clip).unwrap();
        assert_eq!(
            shape.mask,
            convex_hull(&s).unwrap().raster.intersection(&clip)
        );
        let dot = Mask::from_ascii(&["...", ".#.", "..."]);
        assert_eq!(
            small_shape_shortcut(&dot, &Mask::full(3, 3)).unwrap().mask,
            dot
        );
    }

    #[test]
    fn empty_superlevel_is_an_error() {
        let u = Field::filled(4, 4, -1.0);
        assert!(matches!(
            extract_contour(&u, 0.0),
            Err(Error::EmptySuperlevel)
        ));
    }
}
