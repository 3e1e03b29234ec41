use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use depthvec::fixtures::{kanizsa, mountain_scene, BLACK, BLUE, GREEN, ORANGE, WHITE, YELLOW};
use depthvec::raster::hex_color;
use depthvec::{RasterImage, Rgb};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_depthvec"))
}

fn write_png(dir: &Path, name: &str, img: &RasterImage) -> PathBuf {
    let p = dir.join(name);
    img.save_png(&p).unwrap();
    p
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Fill colors of the emitted paths in paint order.
fn fills(svg: &str) -> Vec<String> {
    let doc = roxmltree::Document::parse(svg).unwrap();
    doc.descendants()
        .filter(|n| n.has_tag_name("path"))
        .map(|n| n.attribute("fill").unwrap().to_string())
        .collect()
}

fn hexes(colors: &[Rgb]) -> Vec<String> {
    colors.iter().map(|&c| hex_color(c)).collect()
}

#[test]
fn mountain_scene_stacks_seven_layers_bottom_first() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_png(dir.path(), "mountain.png", &mountain_scene(1.0).image);
    let out = dir.path().join("mountain.svg");
    run_ok(
        bin()
            .arg(&input)
            .arg("-o")
            .arg(&out)
            .args(["--colors", "5", "-q"]),
    );
    let svg = std::fs::read_to_string(&out).unwrap();
    // ground, sky, sun, back mountain, snowy mountain, front mountain, snowfield
    assert_eq!(
        fills(&svg),
        hexes(&[GREEN, YELLOW, ORANGE, BLACK, WHITE, BLACK, WHITE])
    );
}

#[test]
fn blank_image_gives_one_full_canvas_path() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_png(
        dir.path(),
        "blank.png",
        &RasterImage::filled(20, 12, [9, 99, 199]),
    );
    run_ok(bin().arg(&input).args(["--colors", "1", "-q"]));
    let svg = std::fs::read_to_string(dir.path().join("blank.svg")).unwrap();
    assert_eq!(fills(&svg), vec!["#0963c7".to_string()]);
}

#[test]
fn kanizsa_orange_becomes_one_path_under_blue_when_grouped() {
    let dir = tempfile::tempdir().unwrap();
    let (img, _, _) = kanizsa();
    let input = write_png(dir.path(), "kanizsa.png", &img);
    let grouped = dir.path().join("grouped.svg");
    let plain = dir.path().join("plain.svg");
    run_ok(bin().arg(&input).arg("-o").arg(&grouped).args([
        "--colors",
        "3",
        "--group-same-color",
        "-q",
    ]));
    run_ok(
        bin()
            .arg(&input)
            .arg("-o")
            .arg(&plain)
            .args(["--colors", "3", "-q"]),
    );
    let (orange, blue) = (hex_color(ORANGE), hex_color(BLUE));
    let g = fills(&std::fs::read_to_string(&grouped).unwrap());
    assert_eq!(g.iter().filter(|f| **f == orange).count(), 1);
    let (o, b) = (
        g.iter().position(|f| *f == orange).unwrap(),
        g.iter().position(|f| *f == blue).unwrap(),
    );
    assert!(o < b, "orange must be painted before blue: {g:?}");
    let p = fills(&std::fs::read_to_string(&plain).unwrap());
    assert_eq!(p.iter().filter(|f| **f == orange).count(), 3);
    assert_eq!(g[0], hex_color(WHITE));
}

#[test]
fn report_and_dumps_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_png(dir.path(), "m.png", &mountain_scene(0.5).image);
    let report = dir.path().join("report.json");
    let layers = dir.path().join("layers");
    let graph = dir.path().join("graph.txt");
    let fields = dir.path().join("fields");
    let out = run_ok(
        bin()
            .arg(&input)
            .args(["--colors", "5", "--report"])
            .arg(&report)
            .arg("--dump-layers")
            .arg(&layers)
            .arg("--dump-graph")
            .arg(&graph)
            .arg("--dump-fields")
            .arg(&fields),
    );
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("layers") && stderr.contains("PSNR"),
        "{stderr}"
    );
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["layers"], 7);
    assert!(r["segments"].as_u64().unwrap() >= 7);
    assert!(r["mse"].as_f64().unwrap() >= 0.0);
    let stages: Vec<&str> = r["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["stage"].as_str().unwrap())
        .collect();
    assert_eq!(stages.first(), Some(&"load"));
    assert_eq!(stages.last(), Some(&"write"));
    assert!(stages.contains(&"inpaint") && stages.contains(&"topo_sort"));
    assert_eq!(std::fs::read_dir(&layers).unwrap().count(), 7);
    let g = std::fs::read_to_string(&graph).unwrap();
    assert!(
        g.starts_with("nodes 7\n") && g.lines().any(|l| l.starts_with("edge ")),
        "{g}"
    );
    assert!(std::fs::read_dir(&fields).unwrap().count() >= 1);
}

#[test]
fn same_input_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_png(dir.path(), "m.png", &mountain_scene(0.6).image);
    let (a, b) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
    run_ok(
        bin()
            .arg(&input)
            .arg("-o")
            .arg(&a)
            .args(["--colors", "5", "-q"]),
    );
    run_ok(
        bin()
            .arg(&input)
            .arg("-o")
            .arg(&b)
            .args(["--colors", "5", "-q", "--jobs", "1"]),
    );
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn failures_exit_nonzero_with_stage() {
    let dir = tempfile::tempdir().unwrap();
    let missing = bin().arg(dir.path().join("nope.png")).output().unwrap();
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error: load: "));

    let input = write_png(dir.path(), "two.png", &RasterImage::filled(8, 8, [1, 2, 3]));
    let too_many = bin().arg(&input).args(["--colors", "4"]).output().unwrap();
    assert!(!too_many.status.success());
    assert!(String::from_utf8_lossy(&too_many.stderr).starts_with("error: quantize: "));

    let bad = bin().arg(&input).args(["--fit-tol", "0"]).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error: config: "));
}
