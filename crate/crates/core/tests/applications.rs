use semisparse::imageio::{self, LoadOptions};
use semisparse::metrics::mae;
use semisparse::pipelines::{
    base_detail, detail_enhance, detail_enhance_unclamped, edge_mask, hdr_compress,
    multiscale_decompose, multiscale_recombine, multiscale_recombine_unclamped, standard_levels,
    stylize, HdrOptions, StyleMode, StylizeOptions,
};
use semisparse::{Field, SolverConfig};

fn natural(name: &str) -> Field {
    let path = format!("{}/data/natural/{name}", env!("CARGO_MANIFEST_DIR"));
    imageio::load(path, &LoadOptions::default()).unwrap()
}

#[test]
fn enhancement_on_a_photograph() {
    let img = natural("camera.png");
    let cfg = SolverConfig::new(0.01, 1.0);
    let (base, detail) = base_detail(&img, &cfg, false).unwrap();
    let m = mae(&base, &img).unwrap();
    assert!(m > 0.005 && m < 0.08, "base MAE {m}");
    assert!(base.add(&detail).unwrap().max_abs_diff(&img).unwrap() < 1e-12);

    let boosted = detail_enhance(&img, &cfg, 3.5, true).unwrap();
    assert!(boosted.min_value() >= 0.0 && boosted.max_value() <= 1.0);
    let same = detail_enhance_unclamped(&img, &cfg, 1.0, true).unwrap();
    assert!(same.max_abs_diff(&img).unwrap() < 1e-10);
}

#[test]
fn three_scale_decomposition_on_a_photograph() {
    let img = natural("chelsea.png");
    let d = multiscale_decompose(&img, &standard_levels()).unwrap();
    assert_eq!(d.details.len(), 3);
    let back = multiscale_recombine_unclamped(&d.base, &d.details, &[1.0; 3]).unwrap();
    assert!(back.max_abs_diff(&img).unwrap() < 1e-10);
    // Coarser levels remove more.
    let energy: Vec<f64> = d.details.iter().map(Field::norm_sq).collect();
    assert!(energy[2] > energy[0], "{energy:?}");
    let out = multiscale_recombine(&d.base, &d.details, &[2.0; 3]).unwrap();
    assert!(out.min_value() >= 0.0 && out.max_value() <= 1.0);
}

#[test]
fn tone_mapping_a_wide_range_scene() {
    // Five decades of radiance: a bright window in a dark room.
    let hdr = Field::from_fn(48, 64, 3, |y, x, c| {
        let window = (10..30).contains(&y) && (40..58).contains(&x);
        let level = if window { 300.0 } else { 0.01 + 0.002 * x as f64 };
        level * [1.0, 0.8, 0.6][c]
    });
    let cfg = SolverConfig::new(0.01, 0.5);
    let r = hdr_compress(&hdr, &cfg, &HdrOptions::default()).unwrap();
    assert!(r.scale < 1.0);
    let out = &r.output;
    assert!(out.min_value() >= 0.0 && out.max_value() <= 1.0);
    // Compression keeps the window brighter than the room.
    assert!(out.get(20, 50, 0) > out.get(20, 5, 0));
    // The base is squeezed to exactly the target range.
    let range = r.scale * (r.base.max_value() - r.base.min_value());
    assert!((range - HdrOptions::default().target_range).abs() < 1e-12);
}

#[test]
fn stylization_modes() {
    let img = natural("coins.png");
    let cfg = SolverConfig::new(0.02, 0.1);
    let pen = StylizeOptions::default();
    let page = stylize(&img, &cfg, &pen).unwrap();
    // Mostly white paper with some strokes.
    let dark = page.data().iter().filter(|&&v| v < 0.5).count() as f64 / page.len() as f64;
    assert!(dark > 0.001 && dark < 0.5, "{dark}");

    let pencil = StylizeOptions {
        mode: StyleMode::ColorPencil,
        ..pen
    };
    let colored = stylize(&img, &cfg, &pencil).unwrap();
    assert_eq!(colored.shape(), img.shape());
    assert!(colored.min_value() >= 0.0 && colored.max_value() <= 1.0);

    let mask = edge_mask(&img, &pen).unwrap();
    assert!(mask.data().iter().all(|&m| m == 0.0 || m == 1.0));
}
