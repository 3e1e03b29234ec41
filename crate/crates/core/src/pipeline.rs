//! End-to-end vectorization: quantize, layer, order, inpaint, fit, emit.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::bezier::{fit_contour, FitParams, VectorShape};
use crate::contour::marching_squares;
use crate::depthgraph::{break_cycles, build_graph, topo_sort, DepthGraph, DepthOrdering, Pairs};
use crate::elastica::{
    indicator_field, inpaint_layer, save_field_png, ElasticaParams, LayerInpainting,
};
use crate::error::Error;
use crate::layers::{detect_noise, extract_layers, grouping_quantize, LayerSet};
use crate::raster::{kmeans_quantize, load_image, save_mask_png, QuantizedImage, RasterImage};
use crate::svgout::{mse, psnr, rasterize, SvgDocument};

/// Settings for the grouping quantization pass.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupingParams {
    pub mu: f64,
    pub max_phases: usize,
}

impl Default for GroupingParams {
    fn default() -> Self {
        Self {
            mu: 0.75,
            max_phases: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    /// Palette size for K-means.
    pub colors: usize,
    pub kmeans_iters: usize,
    pub seed: u64,
    /// Depth energy threshold.
    pub delta: f64,
    pub pairs: Pairs,
    /// Largest component area eligible for the noise layer.
    pub noise_area: usize,
    /// Runs grouping quantization when set.
    pub grouping: Option<GroupingParams>,
    pub group_same_color: bool,
    pub elastica: ElasticaParams,
    pub fit: FitParams,
    /// Adds the vectorized noise components on top of every layer.
    pub append_noise: bool,
    /// Adds 0.5 px outlines to the emitted paths.
    pub stroke: bool,
    /// Worker threads for per-layer work; `None` uses the global pool.
    pub jobs: Option<usize>,
    pub dump_layers: Option<PathBuf>,
    pub dump_graph: Option<PathBuf>,
    pub dump_fields: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            colors: 16,
            kmeans_iters: 100,
            seed: 0,
            delta: 0.05,
            pairs: Pairs::Auto,
            noise_area: 10,
            grouping: None,
            group_same_color: false,
            elastica: ElasticaParams::default(),
            fit: FitParams::default(),
            append_noise: false,
            stroke: false,
            jobs: None,
            dump_layers: None,
            dump_graph: None,
            dump_fields: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.colors == 0 {
            return bad("colors must be at least 1");
        }
        if !(0.01..=0.1).contains(&self.delta) {
            return bad("delta must lie in [0.01, 0.1]");
        }
        if let Some(g) = &self.grouping {
            if !(g.mu > 0.0) || g.max_phases == 0 {
                return bad("grouping needs mu > 0 and max_phases >= 1");
            }
        }
        if !(self.fit.tolerance > 0.0) || self.fit.step == 0 || !(self.fit.kappa_threshold >= 0.0) {
            return bad("fit tolerance must be positive, curvature step at least 1");
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1");
        }
        self.elastica.validate()
    }
}

/// A failure tagged with the stage that raised it.
#[derive(Debug, Error)]
#[error("{stage}: {source}")]
pub struct PipelineError {
    pub stage: &'static str,
    #[source]
    pub source: Error,
}

trait Stage<T> {
    fn stage(self, name: &'static str) -> Result<T, PipelineError>;
}

impl<T> Stage<T> for Result<T, Error> {
    fn stage(self, name: &'static str) -> Result<T, PipelineError> {
        self.map_err(|source| PipelineError {
            stage: name,
            source,
        })
    }
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    /// Wall time per stage, in execution order.
    pub timings: Vec<(&'static str, Duration)>,
    pub layer_count: usize,
    pub noise_components: usize,
    pub removed_edges: usize,
    pub segment_count: usize,
    /// Layers that went through the elastica solver.
    pub solved_layers: usize,
    pub mse: f64,
    pub psnr: f64,
}

impl Report {
    pub fn total_time(&self) -> Duration {
        self.timings.iter().map(|(_, d)| *d).sum()
    }
}

/// Everything produced by one run.
#[derive(Clone, Debug)]
pub struct Vectorization {
    pub svg: String,
    pub document: SvgDocument,
    pub quantized: QuantizedImage,
    pub layers: LayerSet,
    pub graph: DepthGraph,
    pub ordering: DepthOrdering,
    pub shapes: Vec<VectorShape>,
    pub report: Report,
}

struct Clock(Vec<(&'static str, Duration)>);

impl Clock {
    fn time<T>(&mut self, name: &'static str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.0.push((name, t.elapsed()));
        out
    }
}

/// Background the report's rasterization paints over, as in a viewer.
pub const REPORT_BACKGROUND: [u8; 3] = [255, 255, 255];

/// Loads `input`, vectorizes it and writes the SVG to `output`.
pub fn run(input: &Path, output: &Path, cfg: &PipelineConfig) -> Result<Report, PipelineError> {
    let t = Instant::now();
    let img = load_image(input).stage("load")?;
    let load = t.elapsed();
    let mut v = vectorize(&img, cfg)?;
    let t = Instant::now();
    std::fs::write(output, &v.svg)
        .map_err(|source| Error::Io {
            path: output.to_path_buf(),
            source,
        })
        .stage("write")?;
    v.report.timings.insert(0, ("load", load));
    v.report.timings.push(("write", t.elapsed()));
    Ok(v.report)
}

/// Quantizes `img` with K-means and vectorizes the result.
pub fn vectorize(img: &RasterImage, cfg: &PipelineConfig) -> Result<Vectorization, PipelineError> {
    cfg.validate().stage("config")?;
    let t = Instant::now();
    let q = kmeans_quantize(img, cfg.colors, cfg.seed, cfg.kmeans_iters).stage("quantize")?;
    let elapsed = t.elapsed();
    let mut v = vectorize_quantized(q, cfg)?;
    v.report.timings.insert(0, ("quantize", elapsed));
    Ok(v)
}

/// Vectorizes an already quantized image.
pub fn vectorize_quantized(
    q: QuantizedImage,
    cfg: &PipelineConfig,
) -> Result<Vectorization, PipelineError> {
    cfg.validate().stage("config")?;
    match cfg.jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidParameter(e.to_string()))
                .stage("config")?;
            pool.install(|| vectorize_inner(q, cfg))
        }
        None => vectorize_inner(q, cfg),
    }
}

fn vectorize_inner(
    q: QuantizedImage,
    cfg: &PipelineConfig,
) -> Result<Vectorization, PipelineError> {
    let mut clock = Clock(Vec::new());
    let (w, h) = (q.width, q.height);

    let set = clock.time("extract_layers", || {
        extract_layers(&q, cfg.group_same_color)
    });
    let mut set = clock
        .time("detect_noise", || detect_noise(&set, cfg.noise_area))
        .stage("detect_noise")?;
    if let Some(g) = &cfg.grouping {
        set = clock
            .time("grouping_quantize", || {
                grouping_quantize(&q, &set, g.mu, g.max_phases)
            })
            .stage("grouping_quantize")?;
    }
    log::info!(
        "{} layers, {} noise components",
        set.len(),
        set.noise.components.len()
    );
    if let Some(dir) = &cfg.dump_layers {
        dump_layers(&set, dir).stage("dump_layers")?;
    }

    let graph = clock.time("build_graph", || build_graph(&set, cfg.delta, cfg.pairs));
    let graph = clock.time("break_cycles", || break_cycles(graph, &set));
    for r in &graph.removed {
        log::info!(
            "removed edge {} -> {} (D = {:.4}, V = {})",
            r.from,
            r.to,
            r.d,
            r.v
        );
    }
    let ordering = clock
        .time("topo_sort", || topo_sort(&graph, &set))
        .stage("topo_sort")?;
    if let Some(path) = &cfg.dump_graph {
        std::fs::write(path, graph.dump())
            .map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })
            .stage("dump_graph")?;
    }

    let inpainted: Vec<LayerInpainting> = clock
        .time("inpaint", || {
            (0..set.len())
                .into_par_iter()
                .map(|id| inpaint_layer(id, &ordering, &set, &cfg.elastica))
                .collect::<Result<Vec<_>, Error>>()
        })
        .stage("inpaint")?;
    if let Some(dir) = &cfg.dump_fields {
        dump_fields(&inpainted, dir).stage("dump_fields")?;
    }

    let offset = usize::from(cfg.append_noise && !set.noise.components.is_empty());
    let mut shapes: Vec<VectorShape> = clock.time("fit", || {
        inpainted
            .par_iter()
            .enumerate()
            .map(|(id, r)| VectorShape {
                loops: r
                    .shape
                    .contours
                    .iter()
                    .map(|c| fit_contour(c, &cfg.fit))
                    .collect(),
                fill: set.palette.colors[set.layers[id].color_index],
                depth_rank: ordering.rank[id] + offset,
            })
            .collect()
    });
    if offset == 1 {
        let noise = clock.time("fit_noise", || noise_shapes(&q, &set, &cfg.fit));
        shapes.extend(noise);
    }

    let document = clock.time("emit", || {
        SvgDocument::new(&shapes, w, h).with_stroke(cfg.stroke)
    });
    let svg = document.to_svg();
    let rendered = clock
        .time("rasterize", || rasterize(&document, REPORT_BACKGROUND))
        .stage("rasterize")?;
    let err = mse(&rendered, &q.render());

    let report = Report {
        timings: clock.0,
        layer_count: set.len(),
        noise_components: set.noise.components.len(),
        removed_edges: graph.removed.len(),
        segment_count: shapes.iter().map(VectorShape::segment_count).sum(),
        solved_layers: inpainted.iter().filter(|r| r.field.is_some()).count(),
        mse: err,
        psnr: psnr(err),
    };
    Ok(Vectorization {
        svg,
        document,
        quantized: q,
        layers: set,
        graph,
        ordering,
        shapes,
        report,
    })
}

/// Each noise component as its own shape with its most frequent color, all
/// at rank 0.
fn noise_shapes(q: &QuantizedImage, set: &LayerSet, fit: &FitParams) -> Vec<VectorShape> {
    set.noise
        .components
        .iter()
        .map(|m| {
            let mut hist = vec![0usize; q.palette.len()];
            for (x, y) in m.iter_set() {
                hist[q.label(x, y)] += 1;
            }
            let mode = (0..hist.len()).fold(0, |b, k| if hist[k] > hist[b] { k } else { b });
            let loops = marching_squares(&indicator_field(m), 0.0)
                .iter()
                .map(|c| fit_contour(c, fit))
                .collect();
            VectorShape {
                loops,
                fill: q.palette.colors[mode],
                depth_rank: 0,
            }
        })
        .collect()
}

fn ensure_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn dump_layers(set: &LayerSet, dir: &Path) -> Result<(), Error> {
    ensure_dir(dir)?;
    for l in &set.layers {
        let hex = set.palette.hex(l.color_index);
        let name = format!("layer_{}_{}.png", l.id, hex.trim_start_matches('#'));
        save_mask_png(&l.mask, &dir.join(name))?;
    }
    if !set.noise.mask.is_empty() {
        save_mask_png(&set.noise.mask, &dir.join("noise.png"))?;
    }
    Ok(())
}

fn dump_fields(results: &[LayerInpainting], dir: &Path) -> Result<(), Error> {
    ensure_dir(dir)?;
    for (id, r) in results.iter().enumerate() {
        if let Some(f) = &r.field {
            save_field_png(&f.u, &dir.join(format!("field_{id}.png")))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blank(color: [u8; 3]) -> RasterImage {
        RasterImage::filled(12, 9, color)
    }

    #[test]
    fn blank_image_gives_one_full_canvas_path() {
        let cfg = PipelineConfig {
            colors: 1,
            ..PipelineConfig::default()
        };
        let v = vectorize(&blank([10, 20, 30]), &cfg).unwrap();
        assert_eq!(v.document.elements.len(), 1);
        assert_eq!(v.document.elements[0].fill, "#0a141e");
        assert_eq!(v.report.mse, 0.0);
        assert_eq!(v.report.layer_count, 1);
    }

    #[test]
    fn errors_carry_stage() {
        let cfg = PipelineConfig {
            colors: 3,
            ..PipelineConfig::default()
        };
        let e = vectorize(&blank([0, 0, 0]), &cfg).unwrap_err();
        assert_eq!(e.stage, "quantize");
        assert!(e.to_string().starts_with("quantize: "));
        let e = vectorize(
            &blank([0, 0, 0]),
            &PipelineConfig {
                delta: 2.0,
                ..PipelineConfig::default()
            },
        )
        .unwrap_err();
        assert_eq!(e.stage, "config");
    }

    #[test]
    fn stage_timings_follow_execution_order() {
        let cfg = PipelineConfig {
            colors: 1,
            ..PipelineConfig::default()
        };
        let v = vectorize(&blank([1, 1, 1]), &cfg).unwrap();
        let names: Vec<&str> = v.report.timings.iter().map(|t| t.0).collect();
        assert_eq!(
            names,
            [
                "quantize",
                "extract_layers",
                "detect_noise",
                "build_graph",
                "break_cycles",
                "topo_sort",
                "inpaint",
                "fit",
                "emit",
                "rasterize"
            ]
        );
    }
}
