//! Binary masks over the image domain and small point types.
//!
//! Masks are full-domain bitsets (one bit per pixel, row-major) so that
//! intersection counts between layers and hull rasters reduce to popcounts.

use std::fmt;

/// Integer pixel coordinate. `x` is the column, `y` the row (y grows downward).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pixel {
    pub x: i64,
    pub y: i64,
}

impl Pixel {
    pub const fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }
}

/// Real-valued 2D point.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Inclusive bounding box in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BBox {
    pub min_x: usize,
    pub min_y: usize,
    pub max_x: usize,
    pub max_y: usize,
}

impl BBox {
    pub fn width(&self) -> usize {
        self.max_x - self.min_x + 1
    }

    pub fn height(&self) -> usize {
        self.max_y - self.min_y + 1
    }
}

/// Binary grid over a `width × height` domain.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: usize,
    height: usize,
    words: Vec<u64>,
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Mask({}x{}, {} set)",
            self.width,
            self.height,
            self.count()
        )
    }
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        let mut m = Self::new(width, height);
        for w in &mut m.words {
            *w = u64::MAX;
        }
        m.clear_tail();
        m
    }

    /// Builds a mask from a predicate evaluated at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    /// Parses rows of `#` (set) and `.` (unset). Handy in tests.
    pub fn from_ascii(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        Self::from_fn(width, height, |x, y| rows[y].as_bytes()[x] == b'#')
    }

    fn clear_tail(&mut self) {
        let n = self.width * self.height;
        let rem = n % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.get_index(y * self.width + x)
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> bool {
        (self.words[i >> 6] >> (i & 63)) & 1 == 1
    }

    /// Like [`Mask::get`] but returns `false` outside the domain.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.get(x as usize, y as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.set_index(y * self.width + x, v);
    }

    #[inline]
    pub fn set_index(&mut self, i: usize, v: bool) {
        let bit = 1u64 << (i & 63);
        if v {
            self.words[i >> 6] |= bit;
        } else {
            self.words[i >> 6] &= !bit;
        }
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn assert_same_shape(&self, other: &Mask) {
        assert!(
            self.width == other.width && self.height == other.height,
            "mask shape mismatch: {}x{} vs {}x{}",
            self.width,
            self.height,
            other.width,
            other.height
        );
    }

    /// `|self ∩ other|`
    pub fn intersection_count(&self, other: &Mask) -> usize {
        self.assert_same_shape(other);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn intersects(&self, other: &Mask) -> bool {
        self.assert_same_shape(other);
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    /// True when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.assert_same_shape(other);
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    pub fn union_with(&mut self, other: &Mask) {
        self.assert_same_shape(other);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn intersect_with(&mut self, other: &Mask) {
        self.assert_same_shape(other);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    pub fn subtract(&mut self, other: &Mask) {
        self.assert_same_shape(other);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
    }

    pub fn union(&self, other: &Mask) -> Mask {
        let mut m = self.clone();
        m.union_with(other);
        m
    }

    pub fn intersection(&self, other: &Mask) -> Mask {
        let mut m = self.clone();
        m.intersect_with(other);
        m
    }

    pub fn difference(&self, other: &Mask) -> Mask {
        let mut m = self.clone();
        m.subtract(other);
        m
    }

    pub fn complement(&self) -> Mask {
        let mut m = self.clone();
        for w in &mut m.words {
            *w = !*w;
        }
        m.clear_tail();
        m
    }

    /// Iterates set pixels in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let width = self.width;
        self.words.iter().enumerate().flat_map(move |(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                let i = wi * 64 + b;
                Some((i % width, i / width))
            })
        })
    }

    /// Dilation by the 4-neighborhood (cross structuring element), no wrap.
    pub fn dilate4(&self) -> Mask {
        let mut out = self.clone();
        for (x, y) in self.iter_set() {
            if x > 0 {
                out.set(x - 1, y, true);
            }
            if x + 1 < self.width {
                out.set(x + 1, y, true);
            }
            if y > 0 {
                out.set(x, y - 1, true);
            }
            if y + 1 < self.height {
                out.set(x, y + 1, true);
            }
        }
        out
    }

    pub fn bbox(&self) -> Option<BBox> {
        let mut it = self.iter_set();
        let (x0, y0) = it.next()?;
        let mut b = BBox {
            min_x: x0,
            min_y: y0,
            max_x: x0,
            max_y: y0,
        };
        for (x, y) in it {
            b.min_x = b.min_x.min(x);
            b.max_x = b.max_x.max(x);
            b.max_y = b.max_y.max(y);
        }
        Some(b)
    }

    /// Fills holes: unset pixels not 4-reachable from the domain border
    /// through unset pixels become set.
    pub fn fill_holes(&self) -> Mask {
        let (w, h) = (self.width, self.height);
        let mut outside = Mask::new(w, h);
        let mut stack = Vec::new();
        for x in 0..w {
            for y in [0, h - 1] {
                if !self.get(x, y) && !outside.get(x, y) {
                    outside.set(x, y, true);
                    stack.push((x, y));
                }
            }
        }
        for y in 0..h {
            for x in [0, w - 1] {
                if !self.get(x, y) && !outside.get(x, y) {
                    outside.set(x, y, true);
                    stack.push((x, y));
                }
            }
        }
        while let Some((x, y)) = stack.pop() {
            for (nx, ny) in neighbors4(x, y, w, h) {
                if !self.get(nx, ny) && !outside.get(nx, ny) {
                    outside.set(nx, ny, true);
                    stack.push((nx, ny));
                }
            }
        }
        outside.complement()
    }

    /// Number of 4-connected components of the set pixels.
    pub fn component_count(&self) -> usize {
        label_components(self).1
    }

    /// Splits the mask into its 4-connected components, ordered by first
    /// pixel in row-major order.
    pub fn components(&self) -> Vec<Mask> {
        let (labels, n) = label_components(self);
        let mut out = vec![Mask::new(self.width, self.height); n];
        for (i, &l) in labels.iter().enumerate() {
            if l != usize::MAX {
                out[l].set_index(i, true);
            }
        }
        out
    }

    /// Set pixels that have at least one 4-neighbor outside the mask or
    /// lie on the domain border.
    pub fn boundary_pixels(&self) -> Vec<Pixel> {
        let (w, h) = (self.width as i64, self.height as i64);
        self.iter_set()
            .filter(|&(x, y)| {
                let (x, y) = (x as i64, y as i64);
                x == 0
                    || y == 0
                    || x == w - 1
                    || y == h - 1
                    || !self.get_signed(x - 1, y)
                    || !self.get_signed(x + 1, y)
                    || !self.get_signed(x, y - 1)
                    || !self.get_signed(x, y + 1)
            })
            .map(|(x, y)| Pixel::new(x as i64, y as i64))
            .collect()
    }
}

/// In-domain 4-neighbors of `(x, y)`.
pub fn neighbors4(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    let mut n = [(usize::MAX, usize::MAX); 4];
    let mut k = 0;
    if x > 0 {
        n[k] = (x - 1, y);
        k += 1;
    }
    if x + 1 < w {
        n[k] = (x + 1, y);
        k += 1;
    }
    if y > 0 {
        n[k] = (x, y - 1);
        k += 1;
    }
    if y + 1 < h {
        n[k] = (x, y + 1);
        k += 1;
    }
    n.into_iter().take(k)
}

/// 4-connected component labels in row-major first-pixel order; unset
/// pixels get `usize::MAX`.
fn label_components(m: &Mask) -> (Vec<usize>, usize) {
    let (w, h) = (m.width, m.height);
    let mut labels = vec![usize::MAX; w * h];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !m.get_index(start) || labels[start] != usize::MAX {
            continue;
        }
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            for (nx, ny) in neighbors4(i % w, i / w, w, h) {
                let j = ny * w + nx;
                if m.get_index(j) && labels[j] == usize::MAX {
                    labels[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    (labels, next)
}

/// Row-major `f64` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// `{x | self(x) > level}`
    pub fn superlevel(&self, level: f64) -> Mask {
        let mut m = Mask::new(self.width, self.height);
        for (i, &v) in self.data.iter().enumerate() {
            if v > level {
                m.set_index(i, true);
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_ops_and_counts() {
        let a = Mask::from_ascii(&["##..", "##..", "...."]);
        let b = Mask::from_ascii(&[".##.", ".##.", "...."]);
        assert_eq!(a.count(), 4);
        assert_eq!(a.intersection_count(&b), 2);
        assert_eq!(a.union(&b).count(), 6);
        assert_eq!(a.difference(&b).count(), 2);
        assert_eq!(a.complement().count(), 8);
        assert!(!a.is_subset_of(&b));
        assert!(a.intersection(&b).is_subset_of(&a));
    }

    #[test]
    fn iter_set_is_row_major() {
        let m = Mask::from_ascii(&[".#", "#."]);
        let v: Vec<_> = m.iter_set().collect();
        assert_eq!(v, vec![(1, 0), (0, 1)]);
    }

    #[test]
    fn holes_are_filled() {
        let ring = Mask::from_ascii(&[".....", ".###.", ".#.#.", ".###.", "....."]);
        let filled = ring.fill_holes();
        assert_eq!(filled.count(), 9);
        assert!(filled.get(2, 2));
    }

    #[test]
    fn components_use_four_connectivity() {
        let m = Mask::from_ascii(&["#.", ".#"]);
        assert_eq!(m.component_count(), 2);
        let comps = m.components();
        assert!(comps[0].get(0, 0));
        assert!(comps[1].get(1, 1));
    }

    #[test]
    fn full_mask_tail_is_clean() {
        let m = Mask::full(7, 3);
        assert_eq!(m.count(), 21);
        assert_eq!(m.complement().count(), 0);
    }
}
