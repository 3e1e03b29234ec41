//! Command-line front end: raster image in, depth-ordered layered SVG out.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use depthvec::pipeline::{run, Report};
use depthvec::{ElasticaParams, FitParams, GroupingParams, PipelineConfig};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(
    name = "depthvec",
    version,
    about = "Vectorize a raster image into depth-ordered SVG layers"
)]
struct Args {
    /// Input image (PNG or PPM/PGM).
    input: PathBuf,
    /// Output SVG; defaults to the input path with an .svg extension.
    #[arg(short, long)]
    output: Option<PathBuf>,

    /// Palette size for K-means quantization.
    #[arg(long, default_value_t = 16)]
    colors: usize,
    #[arg(long, default_value_t = 100)]
    kmeans_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Depth energy threshold for an ordering edge, in [0.01, 0.1].
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Largest component area (pixels) treated as noise.
    #[arg(long, default_value_t = 10)]
    noise_area: usize,

    /// Run grouping quantization after noise removal.
    #[arg(long)]
    grouping: bool,
    #[arg(long, default_value_t = 0.75)]
    mu: f64,
    #[arg(long, default_value_t = 6)]
    max_phases: usize,
    /// Treat all components of one color as a single layer.
    #[arg(long)]
    group_same_color: bool,

    #[arg(long, default_value_t = 0.1)]
    elastica_a: f64,
    #[arg(long, default_value_t = 1.0)]
    elastica_b: f64,
    /// Phase-field interface width.
    #[arg(long, default_value_t = 5.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 3.0)]
    tikhonov: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 2000)]
    max_iters: usize,
    /// Relative energy decrease over 50 iterations below which the solver
    /// stops; 0 disables.
    #[arg(long, default_value_t = 1e-5)]
    stall_tol: f64,
    /// Superlevel used to extract inpainted shapes.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    level: f64,
    #[arg(long, default_value_t = 5.0)]
    corner_radius: f64,
    #[arg(long, default_value_t = 4)]
    corner_window: usize,
    /// Layers smaller than this skip the solver.
    #[arg(long, default_value_t = 30)]
    small_shape: usize,

    #[arg(long, default_value_t = 1.25)]
    kappa_threshold: f64,
    /// Maximum point-to-curve distance of a fitted segment, in pixels.
    #[arg(long, default_value_t = 1.0)]
    fit_tol: f64,
    /// Curvature sampling step.
    #[arg(long, default_value_t = 3)]
    curv_step: usize,

    /// Worker threads; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Also draw the noise components on top.
    #[arg(long)]
    append_noise: bool,
    /// Outline every path with a thin black stroke.
    #[arg(long)]
    stroke: bool,

    /// Directory for one PNG mask per layer.
    #[arg(long)]
    dump_layers: Option<PathBuf>,
    /// File for the depth graph edges and removed edges.
    #[arg(long)]
    dump_graph: Option<PathBuf>,
    /// Directory for the phase fields of solved layers.
    #[arg(long)]
    dump_fields: Option<PathBuf>,
    /// Write the run report as JSON to this file.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Suppress the report summary on stderr.
    #[arg(short, long)]
    quiet: bool,
}

impl Args {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            colors: self.colors,
            kmeans_iters: self.kmeans_iters,
            seed: self.seed,
            delta: self.delta,
            noise_area: self.noise_area,
            grouping: self.grouping.then_some(GroupingParams {
                mu: self.mu,
                max_phases: self.max_phases,
            }),
            group_same_color: self.group_same_color,
            elastica: ElasticaParams {
                a: self.elastica_a,
                b: self.elastica_b,
                epsilon: self.epsilon,
                tikhonov: self.tikhonov,
                tol: self.tol,
                max_iters: self.max_iters,
                stall_tol: self.stall_tol,
                level: self.level,
                corner_radius: self.corner_radius,
                corner_window: self.corner_window,
                small_shape: self.small_shape,
                ..ElasticaParams::default()
            },
            fit: FitParams {
                kappa_threshold: self.kappa_threshold,
                tolerance: self.fit_tol,
                step: self.curv_step,
            },
            append_noise: self.append_noise,
            stroke: self.stroke,
            jobs: self.jobs,
            dump_layers: self.dump_layers.clone(),
            dump_graph: self.dump_graph.clone(),
            dump_fields: self.dump_fields.clone(),
            ..PipelineConfig::default()
        }
    }
}

fn report_json(r: &Report, input: &std::path::Path, output: &std::path::Path) -> serde_json::Value {
    let stages: Vec<_> = r
        .timings
        .iter()
        .map(|(name, d)| json!({ "stage": name, "seconds": d.as_secs_f64() }))
        .collect();
    json!({
        "input": input.display().to_string(),
        "output": output.display().to_string(),
        "layers": r.layer_count,
        "noise_components": r.noise_components,
        "removed_edges": r.removed_edges,
        "solved_layers": r.solved_layers,
        "segments": r.segment_count,
        "mse": r.mse,
        // infinite for a perfect reconstruction, which JSON cannot hold
        "psnr": r.psnr.is_finite().then_some(r.psnr),
        "total_seconds": r.total_time().as_secs_f64(),
        "stages": stages,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let output = args
        .output
        .clone()
        .unwrap_or_else(|| args.input.with_extension("svg"));
    let cfg = args.config();

    let report = match run(&args.input, &output, &cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Some(path) = &args.report {
        let text = serde_json::to_string_pretty(&report_json(&report, &args.input, &output))
            .expect("report serializes");
        if let Err(e) = std::fs::write(path, text + "\n") {
            eprintln!("error: report: {}: {e}", path.display());
            return ExitCode::FAILURE;
        }
    }
    if !args.quiet {
        eprintln!(
            "{} -> {}: {} layers, {} segments, PSNR {:.2} dB, {:.2} s",
            args.input.display(),
            output.display(),
            report.layer_count,
            report.segment_count,
            report.psnr,
            report.total_time().as_secs_f64()
        );
        for (stage, d) in &report.timings {
            eprintln!("  {stage:<18} {:>9.3} ms", d.as_secs_f64() * 1e3);
        }
    }
    ExitCode::SUCCESS
}
