//! Raster input and K-means color quantization.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use image::ImageFormat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::Mask;

pub type Rgb = [u8; 3];

/// Row-major 8-bit RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "pixel count {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        Self {
            width,
            height,
            pixels: vec![color; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, c: Rgb) {
        self.pixels[y * self.width + x] = c;
    }

    pub fn distinct_colors(&self) -> usize {
        let mut v = self.pixels.clone();
        v.sort_unstable();
        v.dedup();
        v.len()
    }

    /// Writes an 8-bit RGB PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.pixels.len() * 3);
        for p in &self.pixels {
            bytes.extend_from_slice(p);
        }
        write_png(
            path,
            self.width,
            self.height,
            png::ColorType::Rgb,
            png::BitDepth::Eight,
            &bytes,
        )
    }

    /// Writes a binary PPM (P6).
    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut buf = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for p in &self.pixels {
            buf.extend_from_slice(p);
        }
        f.write_all(&buf).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub(crate) fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    data: &[u8],
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::Encode(e.to_string()))?;
    writer
        .write_image_data(data)
        .map_err(|e| Error::Encode(e.to_string()))
}

/// Writes a mask as a 1-bit grayscale PNG (set pixels white).
pub fn save_mask_png(mask: &Mask, path: &Path) -> Result<()> {
    let stride = mask.width().div_ceil(8);
    let mut data = vec![0u8; stride * mask.height()];
    for (x, y) in mask.iter_set() {
        data[y * stride + x / 8] |= 0x80 >> (x % 8);
    }
    write_png(
        path,
        mask.width(),
        mask.height(),
        png::ColorType::Grayscale,
        png::BitDepth::One,
        &data,
    )
}

/// Decodes a PNG or binary PPM file. Alpha is composited over white.
pub fn load_image(path: &Path) -> Result<RasterImage> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_image(&bytes)
}

/// In-memory variant of [`load_image`].
pub fn decode_image(bytes: &[u8]) -> Result<RasterImage> {
    let format = image::guess_format(bytes).map_err(|_| Error::UnsupportedFormat)?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Pnm) {
        return Err(Error::UnsupportedFormat);
    }
    let img = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| Error::Decode(e.to_string()))?;
    let rgba = img.to_rgba8();
    let (w, h) = (rgba.width() as usize, rgba.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::EmptyImage);
    }
    let pixels = rgba
        .pixels()
        .map(|p| {
            let [r, g, b, a] = p.0;
            let a = a as u32;
            let over = |c: u8| ((c as u32 * a + 255 * (255 - a) + 127) / 255) as u8;
            [over(r), over(g), over(b)]
        })
        .collect();
    RasterImage::new(w, h, pixels)
}

/// Ordered list of distinct palette colors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Palette {
    pub colors: Vec<Rgb>,
}

impl Palette {
    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn hex(&self, index: usize) -> String {
        hex_color(self.colors[index])
    }
}

pub fn hex_color(c: Rgb) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Label image over the domain with a palette; the quantized input of the
/// whole pipeline.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedImage {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<usize>,
    pub palette: Palette,
}

impl QuantizedImage {
    /// Wraps an image whose colors already form the palette (one label per
    /// distinct color, palette in order of first appearance).
    pub fn from_exact_colors(img: &RasterImage) -> Self {
        let mut index: HashMap<Rgb, usize> = HashMap::new();
        let mut colors = Vec::new();
        let labels = img
            .pixels
            .iter()
            .map(|&c| {
                *index.entry(c).or_insert_with(|| {
                    colors.push(c);
                    colors.len() - 1
                })
            })
            .collect();
        Self {
            width: img.width,
            height: img.height,
            labels,
            palette: Palette { colors },
        }
    }

    pub fn label(&self, x: usize, y: usize) -> usize {
        self.labels[y * self.width + x]
    }

    pub fn color_at(&self, x: usize, y: usize) -> Rgb {
        self.palette.colors[self.label(x, y)]
    }

    /// Renders the label image back to RGB.
    pub fn render(&self) -> RasterImage {
        RasterImage {
            width: self.width,
            height: self.height,
            pixels: self
                .labels
                .iter()
                .map(|&l| self.palette.colors[l])
                .collect(),
        }
    }
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum()
}

fn to_f(c: Rgb) -> [f64; 3] {
    [c[0] as f64, c[1] as f64, c[2] as f64]
}

fn nearest(c: [f64; 3], centers: &[[f64; 3]]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, ctr) in centers.iter().enumerate() {
        let d = dist2(c, *ctr);
        // strict: ties go to the lowest index
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// K-means clustering in RGB space with k-means++ seeding.
///
/// Clustering runs over the distinct colors weighted by pixel count, which
/// gives the same fixed points as clustering every pixel. The final labels
/// are nearest-palette assignments against the 8-bit rounded centroids; the
/// palette keeps only entries that end up used, in centroid order.
pub fn kmeans_quantize(
    img: &RasterImage,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<QuantizedImage> {
    if k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    let mut counts: HashMap<Rgb, usize> = HashMap::new();
    for &p in &img.pixels {
        *counts.entry(p).or_default() += 1;
    }
    let mut distinct: Vec<(Rgb, usize)> = counts.into_iter().collect();
    distinct.sort_unstable();
    if k > distinct.len() {
        return Err(Error::TooManyColors {
            requested: k,
            available: distinct.len(),
        });
    }
    let pts: Vec<[f64; 3]> = distinct.iter().map(|(c, _)| to_f(*c)).collect();
    let weights: Vec<f64> = distinct.iter().map(|(_, n)| *n as f64).collect();

    let mut centers = seed_centers(&pts, &weights, k, seed);
    let mut assign = vec![usize::MAX; pts.len()];
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        for (i, p) in pts.iter().enumerate() {
            let a = nearest(*p, &centers);
            if a != assign[i] {
                assign[i] = a;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![[0.0f64; 3]; k];
        let mut mass = vec![0.0f64; k];
        for (i, p) in pts.iter().enumerate() {
            let a = assign[i];
            for ch in 0..3 {
                sums[a][ch] += p[ch] * weights[i];
            }
            mass[a] += weights[i];
        }
        for c in 0..k {
            // an emptied cluster keeps its previous centroid
            if mass[c] > 0.0 {
                centers[c] = [
                    sums[c][0] / mass[c],
                    sums[c][1] / mass[c],
                    sums[c][2] / mass[c],
                ];
            }
        }
    }

    let rounded: Vec<Rgb> = centers
        .iter()
        .map(|c| [c[0].round() as u8, c[1].round() as u8, c[2].round() as u8])
        .collect();
    let rounded_f: Vec<[f64; 3]> = rounded.iter().map(|&c| to_f(c)).collect();

    // label per distinct color, then compact to used palette entries
    let color_label: HashMap<Rgb, usize> = distinct
        .iter()
        .map(|(c, _)| (*c, nearest(to_f(*c), &rounded_f)))
        .collect();
    let mut remap = vec![usize::MAX; k];
    let mut colors = Vec::new();
    for (c, col) in rounded.iter().enumerate() {
        if color_label.values().any(|&l| l == c) && !colors.contains(col) {
            remap[c] = colors.len();
            colors.push(*col);
        }
    }
    // rounded duplicates: point at the surviving entry
    for c in 0..k {
        if remap[c] == usize::MAX {
            if let Some(pos) = colors.iter().position(|x| *x == rounded[c]) {
                remap[c] = pos;
            }
        }
    }
    let labels = img.pixels.iter().map(|p| remap[color_label[p]]).collect();
    Ok(QuantizedImage {
        width: img.width,
        height: img.height,
        labels,
        palette: Palette { colors },
    })
}

/// k-means++ seeding: first center drawn by weight, then by weight × D².
fn seed_centers(pts: &[[f64; 3]], weights: &[f64], k: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = Vec::with_capacity(k);
    let first = sample_index(&mut rng, weights);
    centers.push(pts[first]);
    let mut d2: Vec<f64> = pts.iter().map(|p| dist2(*p, pts[first])).collect();
    while centers.len() < k {
        let scores: Vec<f64> = d2.iter().zip(weights).map(|(d, w)| d * w).collect();
        let idx = sample_index(&mut rng, &scores);
        centers.push(pts[idx]);
        for (i, p) in pts.iter().enumerate() {
            d2[i] = d2[i].min(dist2(*p, pts[idx]));
        }
    }
    centers
}

fn sample_index(rng: &mut ChaCha8Rng, scores: &[f64]) -> usize {
    let total: f64 = scores.iter().sum();
    if total <= 0.0 {
        return 0;
    }
    let mut r = rng.random::<f64>() * total;
    let mut last_positive = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > 0.0 {
            last_positive = i;
            if r < s {
                return i;
            }
            r -= s;
        }
    }
    last_positive
}
