use semisparse::priors::{sparsity_ratio, Normalization};
use semisparse::synth::{gen_ramp_steps_image, gen_signal, Layout, Segment, SignalSpec};
use semisparse::{smooth, Field, Shape, Solver, SolverConfig};

fn plateaus() -> SignalSpec {
    let seg = |length, level| Segment::Constant { length, level };
    SignalSpec {
        length: 120,
        segments: vec![seg(30, 0.2), seg(25, 0.8), seg(35, 0.5), seg(30, 0.2)],
        sigma: 0.03,
        seed: 17,
    }
}

#[test]
fn first_order_recovers_plateaus_and_jump_count() {
    let (noisy, clean) = gen_signal(&plateaus()).unwrap();
    // Periodic boundary without padding: the last plateau meets the first at
    // the same level, so there are exactly three jumps.
    let cfg = SolverConfig::new(0.02, 0.0).with_order(1).with_pad(0);
    let (u, trace) = smooth(&noisy, &cfg).unwrap();
    assert_eq!(trace.last().unwrap().nonzeros, 3);
    assert!(u.max_abs_diff(&clean).unwrap() < 0.03);
    let jumps = u.data().windows(2).filter(|p| (p[1] - p[0]).abs() > 1e-3).count();
    assert_eq!(jumps, 3);
}

#[test]
fn second_order_keeps_a_ramp_straight() {
    let shape = Shape::new(96, 96);
    let layout = Layout::ramp_steps(shape);
    let (noisy, clean) = gen_ramp_steps_image(shape, 1, &layout, 0.03, 4).unwrap();
    let r = &layout.regions[2];
    // Stay clear of the region border, where both orders blur the edge.
    let ramp = |f: &Field| f.window(r.top + 4, r.left + 4, r.height - 8, r.width - 8).unwrap();
    let sparsity = |f: &Field| sparsity_ratio(&ramp(f), 2, 1e-3, Normalization::Raw).unwrap();

    let (u1, _) = smooth(&noisy, &SolverConfig::new(0.001, 0.0).with_order(1)).unwrap();
    let (u2, _) = smooth(&noisy, &SolverConfig::new(0.001, 0.01).with_order(2)).unwrap();
    // Order 1 flattens the ramp into terraces whose edges are order-2 outliers.
    assert!(sparsity(&u2) > sparsity(&u1) + 0.2, "{} vs {}", sparsity(&u2), sparsity(&u1));
    let err = |u: &Field| ramp(u).sub(&ramp(&clean)).unwrap().norm_sq();
    assert!(err(&u2) < err(&u1), "{} vs {}", err(&u2), err(&u1));
}

#[test]
fn triangle_wave_is_a_fixed_point_away_from_folds() {
    let n: usize = 64;
    let tri = Field::signal(
        (0..n)
            .map(|i| {
                let t = i as f64 / 32.0;
                if t <= 1.0 {
                    t
                } else {
                    2.0 - t
                }
            })
            .collect(),
    )
    .unwrap();
    let (u, _) = smooth(&tri, &SolverConfig::new(1e-4, 0.1).with_pad(0)).unwrap();
    for i in 0..n {
        let d = i.min(i.abs_diff(32)).min(n - i);
        if d > 2 {
            assert!((u.data()[i] - tri.data()[i]).abs() < 1e-6, "sample {i}");
        }
    }
}

#[test]
fn constant_shift_commutes_with_smoothing() {
    let shape = Shape::new(40, 36);
    let (f, _) = gen_ramp_steps_image(shape, 3, &Layout::ramp_steps(shape), 0.05, 2).unwrap();
    let cfg = SolverConfig::default();
    let (a, _) = smooth(&f, &cfg).unwrap();
    let (b, _) = smooth(&f.map(|v| v - 0.5), &cfg).unwrap();
    assert!(a.map(|v| v - 0.5).max_abs_diff(&b).unwrap() < 1e-10);
}

#[test]
fn stepping_by_hand_matches_smooth() {
    let (f, _) = gen_signal(&SignalSpec::mixed(200, 0.05, 8).unwrap()).unwrap();
    let cfg = SolverConfig::default();
    let (u, trace) = smooth(&f, &cfg).unwrap();
    let mut s = Solver::new(&f, &cfg).unwrap();
    let mut steps = 0;
    while !s.is_done() {
        s.step().unwrap();
        steps += 1;
    }
    assert_eq!(steps, trace.iterations());
    assert_eq!(s.output().unwrap(), u);
}

#[test]
fn natural_image_smoothing_is_bounded() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/natural/coins.png");
    let img = semisparse::imageio::load(path, &Default::default()).unwrap();
    let (u, trace) = smooth(&img, &SolverConfig::default()).unwrap();
    assert_eq!(u.shape(), img.shape());
    assert_eq!(trace.iterations(), 85);
    // Smoothing never leaves the input's range by much and removes some
    // variation.
    assert!(u.min_value() > img.min_value() - 0.1 && u.max_value() < img.max_value() + 0.1);
    let mae = semisparse::metrics::mae(&u, &img).unwrap();
    assert!(mae > 1e-3 && mae < 0.1, "{mae}");
}
