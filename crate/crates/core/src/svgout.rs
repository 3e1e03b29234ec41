//! SVG serialization of depth-ordered shapes and a flat-fill rasterizer for
//! the emitted paths.

use std::fmt::Write as _;

use crate::bezier::{CubicBezier, VectorShape};
use crate::error::{Error, Result};
use crate::grid::Point;
use crate::raster::{hex_color, RasterImage, Rgb};

/// One `<path>` element.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathElement {
    pub d: String,
    pub fill: String,
}

/// Paths in paint order: deepest first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SvgDocument {
    pub width: usize,
    pub height: usize,
    pub elements: Vec<PathElement>,
    /// Adds a 0.5 px black outline to every path.
    pub stroke: bool,
}

/// Two-decimal coordinate without a negative zero.
fn coord(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn pt(p: Point) -> String {
    format!("{} {}", coord(p.x), coord(p.y))
}

/// Path data for a set of closed loops: `M x0 y0 C x1 y1, x2 y2, x3 y3 … Z`.
pub fn path_data(loops: &[Vec<CubicBezier>]) -> String {
    let mut d = String::new();
    for segs in loops.iter().filter(|l| !l.is_empty()) {
        if !d.is_empty() {
            d.push(' ');
        }
        write!(d, "M {}", pt(segs[0].p0)).unwrap();
        for s in segs {
            write!(d, " C {}, {}, {}", pt(s.p1), pt(s.p2), pt(s.p3)).unwrap();
        }
        d.push_str(" Z");
    }
    d
}

impl SvgDocument {
    /// Orders shapes bottom first (largest depth rank first). Ties fall back
    /// to fill and path data so the result does not depend on input order.
    pub fn new(shapes: &[VectorShape], width: usize, height: usize) -> Self {
        let mut keyed: Vec<(usize, PathElement)> = shapes
            .iter()
            .map(|s| {
                (
                    s.depth_rank,
                    PathElement {
                        d: path_data(&s.loops),
                        fill: hex_color(s.fill),
                    },
                )
            })
            .collect();
        keyed.sort_by(|a, b| {
            b.0.cmp(&a.0)
                .then_with(|| a.1.fill.cmp(&b.1.fill))
                .then_with(|| a.1.d.cmp(&b.1.d))
        });
        Self {
            width,
            height,
            elements: keyed.into_iter().map(|(_, e)| e).collect(),
            stroke: false,
        }
    }

    pub fn with_stroke(mut self, stroke: bool) -> Self {
        self.stroke = stroke;
        self
    }

    pub fn to_svg(&self) -> String {
        let (w, h) = (self.width, self.height);
        let mut out =
            String::from("<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n");
        writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
        )
        .unwrap();
        for e in &self.elements {
            if e.d.is_empty() {
                continue;
            }
            write!(
                out,
                "  <path d=\"{}\" fill=\"{}\" fill-rule=\"nonzero\"",
                e.d, e.fill
            )
            .unwrap();
            if self.stroke {
                out.push_str(" stroke=\"#000000\" stroke-width=\"0.5\"");
            }
            out.push_str("/>\n");
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Serializes shapes to SVG text, bottom layer first.
pub fn emit(shapes: &[VectorShape], width: usize, height: usize) -> String {
    SvgDocument::new(shapes, width, height).to_svg()
}

/// Parses path data made of `M`, `C` and `Z` commands (absolute
/// coordinates, commas or spaces as separators) into closed cubic loops.
pub fn parse_path_data(d: &str) -> Result<Vec<Vec<CubicBezier>>> {
    let bad = |m: &str| Error::InvalidParameter(format!("path data: {m}"));
    let mut tokens = d
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .peekable();
    let mut loops = Vec::new();
    let mut cur: Vec<CubicBezier> = Vec::new();
    let mut start = None;
    let mut pen = Point::default();
    let num = |tokens: &mut std::iter::Peekable<_>| -> Result<f64> {
        let t: &str = tokens.next().ok_or_else(|| bad("unexpected end"))?;
        t.parse::<f64>().map_err(|_| bad(t))
    };
    while let Some(cmd) = tokens.next() {
        match cmd {
            "M" => {
                if !cur.is_empty() {
                    loops.push(std::mem::take(&mut cur));
                }
                pen = Point::new(num(&mut tokens)?, num(&mut tokens)?);
                start = Some(pen);
            }
            "C" => {
                if start.is_none() {
                    return Err(bad("curve before move"));
                }
                // implicit repetition of C
                loop {
                    let p1 = Point::new(num(&mut tokens)?, num(&mut tokens)?);
                    let p2 = Point::new(num(&mut tokens)?, num(&mut tokens)?);
                    let p3 = Point::new(num(&mut tokens)?, num(&mut tokens)?);
                    cur.push(CubicBezier {
                        p0: pen,
                        p1,
                        p2,
                        p3,
                    });
                    pen = p3;
                    match tokens.peek() {
                        Some(t) if t.parse::<f64>().is_ok() => continue,
                        _ => break,
                    }
                }
            }
            "Z" | "z" => {
                let s = start.ok_or_else(|| bad("close before move"))?;
                if pen != s {
                    cur.push(CubicBezier::line(pen, s));
                }
                pen = s;
                loops.push(std::mem::take(&mut cur));
            }
            other => return Err(bad(other)),
        }
    }
    if !cur.is_empty() {
        loops.push(cur);
    }
    Ok(loops)
}

/// Maximum distance of the inner control points from the chord, a bound on
/// the curve's distance from the chord.
fn flatness(c: &CubicBezier) -> f64 {
    let chord = c.p3 - c.p0;
    let len = chord.norm();
    if len == 0.0 {
        return c.p1.dist(c.p0).max(c.p2.dist(c.p0));
    }
    ((c.p1 - c.p0).cross(chord).abs() / len).max((c.p2 - c.p0).cross(chord).abs() / len)
}

fn split_half(c: &CubicBezier) -> (CubicBezier, CubicBezier) {
    let mid = |a: Point, b: Point| (a + b) * 0.5;
    let (p01, p12, p23) = (mid(c.p0, c.p1), mid(c.p1, c.p2), mid(c.p2, c.p3));
    let (p012, p123) = (mid(p01, p12), mid(p12, p23));
    let m = mid(p012, p123);
    (
        CubicBezier {
            p0: c.p0,
            p1: p01,
            p2: p012,
            p3: m,
        },
        CubicBezier {
            p0: m,
            p1: p123,
            p2: p23,
            p3: c.p3,
        },
    )
}

/// Flattening tolerance in pixels.
pub const FLATNESS: f64 = 0.25;

fn flatten_into(c: &CubicBezier, depth: u32, out: &mut Vec<Point>) {
    if depth >= 24 || flatness(c) <= FLATNESS {
        out.push(c.p3);
    } else {
        let (a, b) = split_half(c);
        flatten_into(&a, depth + 1, out);
        flatten_into(&b, depth + 1, out);
    }
}

/// Closed polyline approximating a loop of cubics within [`FLATNESS`].
pub fn flatten_loop(segs: &[CubicBezier]) -> Vec<Point> {
    let mut out = Vec::new();
    if let Some(first) = segs.first() {
        out.push(first.p0);
        for s in segs {
            flatten_into(s, 0, &mut out);
        }
    }
    out
}

/// Fills the pixels whose centers have nonzero winding number with respect
/// to the polygons.
pub fn fill_polygons(
    polys: &[Vec<Point>],
    width: usize,
    height: usize,
    mut paint: impl FnMut(usize, usize),
) {
    let mut crossings: Vec<(f64, i32)> = Vec::new();
    for y in 0..height {
        let sy = y as f64 + 0.5;
        crossings.clear();
        for poly in polys {
            let n = poly.len();
            for k in 0..n {
                let (a, b) = (poly[k], poly[(k + 1) % n]);
                // half-open rule on y so shared vertices count once
                let dir = if a.y <= sy && b.y > sy {
                    1
                } else if b.y <= sy && a.y > sy {
                    -1
                } else {
                    continue;
                };
                let x = a.x + (sy - a.y) / (b.y - a.y) * (b.x - a.x);
                crossings.push((x, dir));
            }
        }
        crossings.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut wind = 0;
        for k in 0..crossings.len() {
            wind += crossings[k].1;
            if wind != 0 && k + 1 < crossings.len() {
                // pixel centers x + 0.5 in [x_k, x_{k+1})
                let lo = (crossings[k].0 - 0.5).ceil().max(0.0);
                let hi = (crossings[k + 1].0 - 0.5).ceil().min(width as f64);
                let mut x = lo;
                while x < hi {
                    paint(x as usize, y);
                    x += 1.0;
                }
            }
        }
    }
}

/// Renders the document with flat fills over `background`.
pub fn rasterize(doc: &SvgDocument, background: Rgb) -> Result<RasterImage> {
    let mut img = RasterImage::filled(doc.width, doc.height, background);
    for e in &doc.elements {
        let loops = parse_path_data(&e.d)?;
        let color = parse_hex(&e.fill)?;
        let polys: Vec<Vec<Point>> = loops.iter().map(|l| flatten_loop(l)).collect();
        fill_polygons(&polys, doc.width, doc.height, |x, y| img.set(x, y, color));
    }
    Ok(img)
}

/// Parses `#rrggbb`.
pub fn parse_hex(s: &str) -> Result<Rgb> {
    let bad = || Error::InvalidParameter(format!("fill color {s:?}"));
    let h = s.strip_prefix('#').ok_or_else(bad)?;
    if h.len() != 6 {
        return Err(bad());
    }
    let c = |i: usize| u8::from_str_radix(&h[i..i + 2], 16).map_err(|_| bad());
    Ok([c(0)?, c(2)?, c(4)?])
}

/// Mean squared error over all channels, in 8-bit units.
pub fn mse(a: &RasterImage, b: &RasterImage) -> f64 {
    assert_eq!((a.width, a.height), (b.width, b.height));
    let sum: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c] as f64 - q[c] as f64).powi(2)))
        .sum();
    sum / (3 * a.pixels.len()) as f64
}

/// Peak signal-to-noise ratio in dB for 8-bit data; infinite for identical
/// images.
pub fn psnr(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}
