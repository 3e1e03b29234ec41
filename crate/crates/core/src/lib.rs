//! Raster to depth-ordered, layer-stacked SVG vectorization.

// Parameter checks use `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bezier;
pub mod contour;
pub mod depthgraph;
pub mod elastica;
pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod grid;
pub mod layers;
pub mod pipeline;
pub mod raster;
pub mod svgout;

pub use bezier::{CubicBezier, FitParams, VectorShape};
pub use contour::Contour;
pub use depthgraph::{DepthGraph, DepthOrdering, Pairs};
pub use elastica::{ElasticaParams, PhaseField};
pub use error::{Error, Result};
pub use geometry::{HullPolygon, HulledMask, OrderingRelation};
pub use grid::{BBox, Field, Mask, Pixel, Point};
pub use layers::{LayerSet, NoiseLayer, ShapeLayer};
pub use pipeline::{
    vectorize, GroupingParams, PipelineConfig, PipelineError, Report, Vectorization,
};
pub use raster::{Palette, QuantizedImage, RasterImage, Rgb};
pub use svgout::SvgDocument;
