//! Inputs shared by the criterion benches: a scene carried through the
//! pipeline stage by stage, so each bench can start from the stage before.

use depthvec::depthgraph::{break_cycles, build_graph, topo_sort};
use depthvec::fixtures::mountain_scene;
use depthvec::layers::{detect_noise, extract_layers};
use depthvec::raster::kmeans_quantize;
use depthvec::{DepthGraph, DepthOrdering, LayerSet, Pairs, QuantizedImage, RasterImage};

pub const SEED: u64 = 7;

pub struct Staged {
    pub image: RasterImage,
    pub quantized: QuantizedImage,
    pub layers: LayerSet,
    pub graph: DepthGraph,
    pub ordering: DepthOrdering,
}

/// The mountain scene at `scale`, quantized to its five colors.
pub fn mountain(scale: f64) -> Staged {
    let image = mountain_scene(scale).image;
    let quantized = kmeans_quantize(&image, 5, SEED, 100).expect("quantize");
    let layers = detect_noise(&extract_layers(&quantized, false), 10).expect("noise");
    let graph = break_cycles(build_graph(&layers, 0.05, Pairs::Auto), &layers);
    let ordering = topo_sort(&graph, &layers).expect("acyclic");
    Staged {
        image,
        quantized,
        layers,
        graph,
        ordering,
    }
}
