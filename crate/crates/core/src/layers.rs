//! Shape layers: same-color connected components, the noise layer, and the
//! grouping-quantization augmentation of the layer set.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::grid::{neighbors4, BBox, Mask};
use crate::raster::{Palette, QuantizedImage};

/// One stackable region with its associated palette color.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeLayer {
    pub id: usize,
    pub mask: Mask,
    pub color_index: usize,
    pub area: usize,
    pub bbox: BBox,
    /// Set for layers injected by [`grouping_quantize`]; their pixels may
    /// carry labels other than `color_index`.
    pub grouped: bool,
}

impl ShapeLayer {
    pub fn new(id: usize, mask: Mask, color_index: usize) -> Self {
        let area = mask.count();
        let bbox = mask.bbox().expect("shape layer mask must be nonempty");
        Self {
            id,
            mask,
            color_index,
            area,
            bbox,
            grouped: false,
        }
    }
}

/// Small components adjacent to at least two differently colored layers.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseLayer {
    pub mask: Mask,
    pub components: Vec<Mask>,
}

impl NoiseLayer {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            mask: Mask::new(width, height),
            components: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSet {
    pub width: usize,
    pub height: usize,
    pub layers: Vec<ShapeLayer>,
    pub noise: NoiseLayer,
    pub palette: Palette,
}

impl LayerSet {
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    fn renumber(&mut self) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.id = i;
        }
    }

    /// Index of the first layer containing pixel `(x, y)`.
    pub fn layer_at(&self, x: usize, y: usize) -> Option<usize> {
        self.layers.iter().position(|l| l.mask.get(x, y))
    }

    /// Union of all layer masks plus the noise mask.
    pub fn coverage(&self) -> Mask {
        let mut m = self.noise.mask.clone();
        for l in &self.layers {
            m.union_with(&l.mask);
        }
        m
    }
}

/// Splits the quantized image into shape layers.
///
/// Without grouping, every 4-connected same-label component is a layer;
/// with `group_same_color`, all components of one label form a single
/// layer. Ids follow the row-major position of each layer's first pixel.
pub fn extract_layers(q: &QuantizedImage, group_same_color: bool) -> LayerSet {
    let (w, h) = (q.width, q.height);
    let mut comp = vec![usize::MAX; w * h];
    let mut layers: Vec<ShapeLayer> = Vec::new();
    let mut label_layer = vec![usize::MAX; q.palette.len()];
    let mut stack = Vec::new();
    for start in 0..w * h {
        if comp[start] != usize::MAX {
            continue;
        }
        let label = q.labels[start];
        let id = if group_same_color && label_layer[label] != usize::MAX {
            label_layer[label]
        } else {
            layers.push(ShapeLayer {
                id: layers.len(),
                mask: Mask::new(w, h),
                color_index: label,
                area: 0,
                bbox: BBox {
                    min_x: start % w,
                    min_y: start / w,
                    max_x: start % w,
                    max_y: start / w,
                },
                grouped: false,
            });
            label_layer[label] = layers.len() - 1;
            layers.len() - 1
        };
        comp[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            layers[id].mask.set_index(i, true);
            for (nx, ny) in neighbors4(i % w, i / w, w, h) {
                let j = ny * w + nx;
                if comp[j] == usize::MAX && q.labels[j] == label {
                    comp[j] = id;
                    stack.push(j);
                }
            }
        }
    }
    for l in &mut layers {
        l.area = l.mask.count();
        l.bbox = l.mask.bbox().expect("nonempty component");
    }
    LayerSet {
        width: w,
        height: h,
        layers,
        noise: NoiseLayer::empty(w, h),
        palette: q.palette.clone(),
    }
}

/// Per-pixel owning layer index (`usize::MAX` where none). With overlapping
/// layers the lowest index wins.
fn owner_map(set: &LayerSet) -> Vec<usize> {
    let mut owner = vec![usize::MAX; set.width * set.height];
    for (k, l) in set.layers.iter().enumerate() {
        for (x, y) in l.mask.iter_set() {
            let i = y * set.width + x;
            if owner[i] == usize::MAX {
                owner[i] = k;
            }
        }
    }
    owner
}

/// Indices of layers sharing a 4-neighborhood edge with `layer`.
fn adjacent_layers(set: &LayerSet, owner: &[usize], layer: usize) -> BTreeSet<usize> {
    let (w, h) = (set.width, set.height);
    let mut out = BTreeSet::new();
    for (x, y) in set.layers[layer].mask.iter_set() {
        for (nx, ny) in neighbors4(x, y, w, h) {
            let o = owner[ny * w + nx];
            if o != usize::MAX && o != layer {
                out.insert(o);
            }
        }
    }
    out
}

/// Moves every layer with area ≤ `max_area` that touches at least two
/// layers of different colors into the noise layer.
///
/// Classification is computed against the input set, so the outcome for a
/// component never depends on which other components were removed first.
pub fn detect_noise(set: &LayerSet, max_area: usize) -> Result<LayerSet> {
    let owner = owner_map(set);
    let noisy: Vec<bool> = set
        .layers
        .iter()
        .enumerate()
        .map(|(k, l)| {
            if l.area > max_area {
                return false;
            }
            let colors: BTreeSet<usize> = adjacent_layers(set, &owner, k)
                .into_iter()
                .map(|o| set.layers[o].color_index)
                .collect();
            colors.len() >= 2
        })
        .collect();
    if !set.layers.is_empty() && noisy.iter().all(|&n| n) {
        return Err(Error::AllNoise(max_area));
    }
    let mut out = set.clone();
    out.layers.clear();
    for (l, is_noise) in set.layers.iter().zip(&noisy) {
        if *is_noise {
            out.noise.mask.union_with(&l.mask);
            out.noise.components.push(l.mask.clone());
        } else {
            out.layers.push(l.clone());
        }
    }
    out.renumber();
    Ok(out)
}

/// Result of the multiphase segmentation behind [`grouping_quantize`].
#[derive(Clone, Debug)]
pub struct Segmentation {
    /// Phase index per pixel, contiguous `0..phase_count`.
    pub phases: Vec<usize>,
    pub phase_count: usize,
    pub sweeps: usize,
}

#[derive(Clone, Copy, Default, Debug)]
struct PhaseStats {
    n: f64,
    sum: [f64; 3],
    sq: f64,
    perimeter: f64,
}

impl PhaseStats {
    fn fidelity(&self) -> f64 {
        if self.n <= 0.0 {
            return 0.0;
        }
        let s2: f64 = self.sum.iter().map(|s| s * s).sum();
        (self.sq - s2 / self.n).max(0.0)
    }

    fn add(&mut self, c: [f64; 3], sign: f64) {
        self.n += sign;
        for (s, v) in self.sum.iter_mut().zip(c) {
            *s += sign * v;
        }
        self.sq += sign * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
    }
}

fn seg_energy(stats: &[PhaseStats], mu: f64) -> f64 {
    let mut ratio = 0.0;
    let mut per = 0.0;
    let mut fid = 0.0;
    for s in stats {
        if s.n > 0.0 {
            ratio += s.perimeter / s.n;
            per += s.perimeter;
            fid += s.fidelity();
        }
    }
    mu * ratio * per + fid
}

/// Evaluates the phase-balancing segmentation energy for a labeling:
/// `μ (Σ P_i / |φ_i|)(Σ P_i) + Σ_i Σ_{x∈φ_i} |f(x) − c̄_i|²`, with perimeters
/// counted as 4-neighbor edges between differing phases and colors in 8-bit
/// units.
pub fn segmentation_energy(q: &QuantizedImage, phases: &[usize], mu: f64) -> f64 {
    let k = phases.iter().copied().max().map_or(0, |m| m + 1);
    let stats = phase_stats(q, phases, k);
    seg_energy(&stats, mu)
}

fn phase_stats(q: &QuantizedImage, phases: &[usize], k: usize) -> Vec<PhaseStats> {
    let (w, h) = (q.width, q.height);
    let mut stats = vec![PhaseStats::default(); k];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let p = phases[i];
            stats[p].add(pixel_color(q, i), 1.0);
            if x + 1 < w && phases[i + 1] != p {
                stats[p].perimeter += 1.0;
                stats[phases[i + 1]].perimeter += 1.0;
            }
            if y + 1 < h && phases[i + w] != p {
                stats[p].perimeter += 1.0;
                stats[phases[i + w]].perimeter += 1.0;
            }
        }
    }
    stats
}

fn pixel_color(q: &QuantizedImage, i: usize) -> [f64; 3] {
    let c = q.palette.colors[q.labels[i]];
    [c[0] as f64, c[1] as f64, c[2] as f64]
}

/// Greedy pixel-sweep minimization of the phase-balancing energy.
///
/// Starts from a single phase covering the domain. Each raster-order sweep
/// offers every pixel a move to each other existing phase or to a new phase
/// (while fewer than `max_phases` exist) and applies the move with the
/// largest strict energy decrease. After each sweep the best strictly
/// improving merge of two phases is applied. Sweeps repeat until one
/// changes nothing or `max_sweeps` is reached.
pub fn segment_phases(
    q: &QuantizedImage,
    mu: f64,
    max_phases: usize,
    max_sweeps: usize,
) -> Segmentation {
    let (w, h) = (q.width, q.height);
    let n = w * h;
    let mut phases = vec![0usize; n];
    let mut stats = phase_stats(q, &phases, 1);
    let mut alive = 1usize;
    let mut sweeps = 0;
    let mut trial: Vec<PhaseStats> = Vec::with_capacity(max_phases + 1);
    loop {
        sweeps += 1;
        let mut changed = false;
        for i in 0..n {
            let (x, y) = (i % w, i / w);
            let cur = phases[i];
            let c = pixel_color(q, i);
            let base = seg_energy(&stats, mu);
            let mut best: Option<(usize, f64)> = None;
            let consider = |target: usize, stats: &Vec<PhaseStats>, trial: &mut Vec<PhaseStats>| {
                trial.clear();
                trial.extend_from_slice(stats);
                if target == trial.len() {
                    trial.push(PhaseStats::default());
                }
                trial[cur].add(c, -1.0);
                trial[target].add(c, 1.0);
                for (nx, ny) in neighbors4(x, y, w, h) {
                    let l = phases[ny * w + nx];
                    if l != cur {
                        trial[cur].perimeter -= 1.0;
                        trial[l].perimeter -= 1.0;
                    }
                    if l != target {
                        trial[target].perimeter += 1.0;
                        trial[l].perimeter += 1.0;
                    }
                }
                seg_energy(trial, mu) - base
            };
            for target in 0..stats.len() {
                if target == cur || stats[target].n <= 0.0 {
                    continue;
                }
                let d = consider(target, &stats, &mut trial);
                if d < best.map_or(-1e-9, |b| b.1) {
                    best = Some((target, d));
                }
            }
            // a pixel that is alone in its phase gains nothing from a fresh one
            if alive < max_phases && stats[cur].n > 1.0 {
                let fresh = stats.iter().position(|s| s.n <= 0.0).unwrap_or(stats.len());
                let d = consider(fresh, &stats, &mut trial);
                if d < best.map_or(-1e-9, |b| b.1) {
                    best = Some((fresh, d));
                }
            }
            if let Some((target, _)) = best {
                if target == stats.len() {
                    stats.push(PhaseStats::default());
                }
                if stats[target].n <= 0.0 {
                    alive += 1;
                }
                stats[cur].add(c, -1.0);
                stats[target].add(c, 1.0);
                for (nx, ny) in neighbors4(x, y, w, h) {
                    let l = phases[ny * w + nx];
                    if l != cur {
                        stats[cur].perimeter -= 1.0;
                        stats[l].perimeter -= 1.0;
                    }
                    if l != target {
                        stats[target].perimeter += 1.0;
                        stats[l].perimeter += 1.0;
                    }
                }
                if stats[cur].n <= 0.0 {
                    stats[cur] = PhaseStats::default();
                    alive -= 1;
                }
                phases[i] = target;
                changed = true;
            }
        }
        // single-pixel moves cannot empty a phase because the ratio term
        // penalizes shrinking it, so whole-phase merges are offered too
        if let Some((from, into)) = best_merge(q, &phases, &stats, mu) {
            for p in &mut phases {
                if *p == from {
                    *p = into;
                }
            }
            stats = phase_stats(q, &phases, stats.len());
            alive -= 1;
            changed = true;
        }
        if !changed || sweeps >= max_sweeps {
            break;
        }
    }
    // compact phase ids in order of first appearance
    let mut remap = vec![usize::MAX; stats.len()];
    let mut next = 0;
    for p in &mut phases {
        if remap[*p] == usize::MAX {
            remap[*p] = next;
            next += 1;
        }
        *p = remap[*p];
    }
    Segmentation {
        phases,
        phase_count: next,
        sweeps,
    }
}

/// Augments the layer set with coarse grouped regions.
///
/// Segments the quantized image into at most `max_phases` phases, splits
/// each phase into 4-connected components, gives each component the most
/// frequent palette color among its pixels (ties to the lower index), and
/// returns `(S ∪ P) \ S_R`, where `S_R` holds the layers that are a subset
/// of a component carrying the same color. A component identical to a
/// removed layer keeps that layer's provenance.
pub fn grouping_quantize(
    q: &QuantizedImage,
    set: &LayerSet,
    mu: f64,
    max_phases: usize,
) -> Result<LayerSet> {
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "μ must be positive, got {mu}"
        )));
    }
    if max_phases == 0 {
        return Err(Error::InvalidParameter(
            "max_phases must be at least 1".into(),
        ));
    }
    let seg = segment_phases(q, mu, max_phases, 100);
    Ok(merge_phase_layers(q, set, &seg))
}

fn best_merge(
    q: &QuantizedImage,
    phases: &[usize],
    stats: &[PhaseStats],
    mu: f64,
) -> Option<(usize, usize)> {
    let base = seg_energy(stats, mu);
    let live: Vec<usize> = (0..stats.len()).filter(|&p| stats[p].n > 0.0).collect();
    let mut best: Option<(usize, usize, f64)> = None;
    let mut relabeled = phases.to_vec();
    for (a, &into) in live.iter().enumerate() {
        for &from in &live[a + 1..] {
            for (r, &p) in relabeled.iter_mut().zip(phases) {
                *r = if p == from { into } else { p };
            }
            let d = seg_energy(&phase_stats(q, &relabeled, stats.len()), mu) - base;
            if d < best.map_or(-1e-9, |b| b.2) {
                best = Some((from, into, d));
            }
        }
    }
    best.map(|(f, i, _)| (f, i))
}

/// Builds `(S ∪ P) \ S_R` from a finished segmentation.
pub fn merge_phase_layers(q: &QuantizedImage, set: &LayerSet, seg: &Segmentation) -> LayerSet {
    let (w, h) = (q.width, q.height);
    let mut grouped: Vec<(Mask, usize)> = Vec::new();
    for p in 0..seg.phase_count {
        let phase = Mask::from_fn(w, h, |x, y| seg.phases[y * w + x] == p);
        for comp in phase.components() {
            let mut hist = vec![0usize; q.palette.len()];
            for (x, y) in comp.iter_set() {
                hist[q.label(x, y)] += 1;
            }
            let mut mode = 0;
            for (c, &n) in hist.iter().enumerate() {
                if n > hist[mode] {
                    mode = c;
                }
            }
            grouped.push((comp, mode));
        }
    }

    let redundant: Vec<bool> = set
        .layers
        .iter()
        .map(|l| {
            grouped
                .iter()
                .any(|(m, c)| *c == l.color_index && l.mask.is_subset_of(m))
        })
        .collect();

    let mut out = set.clone();
    out.layers = set
        .layers
        .iter()
        .zip(&redundant)
        .filter(|(_, r)| !**r)
        .map(|(l, _)| l.clone())
        .collect();
    for (mask, color) in grouped {
        let identical = set
            .layers
            .iter()
            .any(|l| l.color_index == color && l.mask == mask);
        let mut layer = ShapeLayer::new(0, mask, color);
        layer.grouped = !identical;
        out.layers.push(layer);
    }
    out.renumber();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::RasterImage;

    const BLACK: [u8; 3] = [0, 0, 0];
    const WHITE: [u8; 3] = [255, 255, 255];
    const RED: [u8; 3] = [220, 40, 40];

    fn quantized(rows: &[&str], colors: &[(char, [u8; 3])]) -> QuantizedImage {
        let h = rows.len();
        let w = rows[0].len();
        let mut img = RasterImage::filled(w, h, BLACK);
        for (y, r) in rows.iter().enumerate() {
            for (x, ch) in r.chars().enumerate() {
                let c = colors.iter().find(|(k, _)| *k == ch).unwrap().1;
                img.set(x, y, c);
            }
        }
        QuantizedImage::from_exact_colors(&img)
    }

    fn assert_partition(set: &LayerSet) {
        let mut acc = set.noise.mask.clone();
        for l in &set.layers {
            assert!(!acc.intersects(&l.mask), "layers overlap");
            acc.union_with(&l.mask);
        }
        assert_eq!(acc.count(), set.width * set.height);
    }

    #[test]
    fn uniform_image_is_one_layer() {
        let q = QuantizedImage::from_exact_colors(&RasterImage::filled(6, 4, RED));
        let set = extract_layers(&q, false);
        assert_eq!(set.len(), 1);
        assert_eq!(set.layers[0].area, 24);
        assert_partition(&set);
    }

    #[test]
    fn same_color_components_stay_separate_unless_grouped() {
        let q = quantized(&["b.b", "b.b", "..."], &[('b', BLACK), ('.', WHITE)]);
        let set = extract_layers(&q, false);
        assert_eq!(set.len(), 3);
        assert_eq!(set.layers[0].color_index, set.layers[2].color_index);
        assert_partition(&set);
        let grouped = extract_layers(&q, true);
        assert_eq!(grouped.len(), 2);
        assert_eq!(grouped.layers[0].area, 4);
        assert_partition(&grouped);
    }

    #[test]
    fn ids_follow_scan_order() {
        let q = quantized(&["..r", ".bb"], &[('.', WHITE), ('r', RED), ('b', BLACK)]);
        let set = extract_layers(&q, false);
        let first: Vec<_> = set
            .layers
            .iter()
            .map(|l| l.mask.iter_set().next().unwrap())
            .collect();
        assert_eq!(first, vec![(0, 0), (2, 0), (1, 1)]);
    }

    #[test]
    fn no_small_component_means_no_noise() {
        let q = quantized(
            &["bbbb", "bbbb", "wwww", "wwww"],
            &[('b', BLACK), ('w', WHITE)],
        );
        let set = detect_noise(&extract_layers(&q, false), 3).unwrap();
        assert!(set.noise.mask.is_empty());
        assert_eq!(set.len(), 2);
    }

    #[test]
    fn sliver_between_two_colors_is_noise() {
        let q = quantized(
            &["bbbbbb", "bbbbbb", "bbrrrb", "wwwwww", "wwwwww"],
            &[('b', BLACK), ('w', WHITE), ('r', RED)],
        );
        let set = detect_noise(&extract_layers(&q, false), 10).unwrap();
        assert_eq!(set.noise.mask.count(), 3);
        assert_eq!(set.noise.components.len(), 1);
        assert_eq!(set.len(), 2);
        assert_eq!(
            set.layers.iter().map(|l| l.id).collect::<Vec<_>>(),
            vec![0, 1]
        );
        assert_partition(&set);
    }

    #[test]
    fn small_component_inside_one_color_is_not_noise() {
        // red speck touching only black pixels: the black ring and black
        // bar are separate layers with the same color
        let q = quantized(
            &["bbbbb", "bbrbb", "bbbbb", "wwwww", "bbbbb"],
            &[('b', BLACK), ('w', WHITE), ('r', RED)],
        );
        let base = extract_layers(&q, false);
        let red = base
            .layers
            .iter()
            .position(|l| l.color_index == q.label(2, 1))
            .unwrap();
        // brute-force the neighbor colors of the red component
        let mut colors = BTreeSet::new();
        for (x, y) in base.layers[red].mask.iter_set() {
            for (nx, ny) in neighbors4(x, y, 5, 5) {
                if !base.layers[red].mask.get(nx, ny) {
                    colors.insert(q.label(nx, ny));
                }
            }
        }
        assert_eq!(colors.len(), 1);
        let set = detect_noise(&base, 10).unwrap();
        assert!(set.noise.mask.is_empty());
    }

    #[test]
    fn all_noise_is_rejected() {
        let q = quantized(
            &["bw", "rg"],
            &[('b', BLACK), ('w', WHITE), ('r', RED), ('g', [0, 160, 0])],
        );
        let set = extract_layers(&q, false);
        assert!(matches!(detect_noise(&set, 10), Err(Error::AllNoise(10))));
    }

    #[test]
    fn grouping_uniform_keeps_the_single_layer() {
        let q = QuantizedImage::from_exact_colors(&RasterImage::filled(8, 8, RED));
        let set = extract_layers(&q, false);
        let out = grouping_quantize(&q, &set, 0.75, 6).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.layers[0].mask, set.layers[0].mask);
        assert!(!out.layers[0].grouped);
    }

    #[test]
    fn two_blocks_yield_two_phases() {
        let mut img = RasterImage::filled(16, 16, WHITE);
        for y in 0..16 {
            for x in 0..8 {
                img.set(x, y, BLACK);
            }
        }
        let q = QuantizedImage::from_exact_colors(&img);
        let seg = segment_phases(&q, 0.05, 6, 100);
        assert_eq!(seg.phase_count, 2);
        for y in 0..16 {
            for x in 0..16 {
                assert_eq!(
                    seg.phases[y * 16 + x],
                    seg.phases[y * 16 + if x < 8 { 0 } else { 15 }]
                );
            }
        }
        // direct evaluation: the block labeling beats one phase
        let one = vec![0; 256];
        let two: Vec<usize> = (0..256).map(|i| usize::from(i % 16 >= 8)).collect();
        assert!(segmentation_energy(&q, &two, 0.05) < segmentation_energy(&q, &one, 0.05));
    }

    #[test]
    fn phase_count_respects_cap() {
        let mut img = RasterImage::filled(24, 6, BLACK);
        for y in 0..6 {
            for x in 0..24 {
                let v = (x / 3 * 30) as u8;
                img.set(x, y, [v, 255 - v, (v / 2).wrapping_mul(3)]);
            }
        }
        let q = QuantizedImage::from_exact_colors(&img);
        for cap in 1..5 {
            let seg = segment_phases(&q, 0.75, cap, 100);
            assert!(seg.phase_count <= cap);
        }
    }
}
