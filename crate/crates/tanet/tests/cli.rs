mod common;

use std::fs;
use std::path::Path;

use common::{code, tanet, text, write_gray, write_pair};
use tanet::commands::{self, EDGE_DIR, SALIENCY_DIR};
use tanet::manifest::{RunManifest, MANIFEST_FILE};
use tanet::{checkpoint, Error};
use tanet_core::config::ModelConfig;
use tanet_core::metrics::{evaluate_pair, SaliencyMapPair};
use tanet_core::model::TaNet;
use tanet_core::train::TrainConfig;

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gray_bytes(path: &Path) -> (u32, u32, Vec<u8>) {
    let img = image::open(path).unwrap().to_luma8();
    (img.width(), img.height(), img.into_raw())
}

#[test]
fn infer_is_deterministic_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (rgb, depth) = write_pair(dir.path(), "a", 320, 320);
    let run = |seed: &str, out: &str| {
        let out = dir.path().join(out);
        let o = tanet(&["infer", s(&rgb), s(&depth), "--seed", seed, "--out", s(&out)]);
        assert_eq!(code(&o), 0, "{}", text(&o));
        (fs::read(out.join(SALIENCY_DIR).join("a_rgb.png")).unwrap(), fs::read(out.join(EDGE_DIR).join("a_rgb.png")).unwrap())
    };
    let first = run("7", "o1");
    assert_eq!(first, run("7", "o2"));
    assert_ne!(first, run("8", "o3"));

    for sub in [SALIENCY_DIR, EDGE_DIR] {
        let (w, h, _) = gray_bytes(&dir.path().join("o1").join(sub).join("a_rgb.png"));
        assert_eq!((w, h), (320, 320));
    }
    // Untrained saliency logits are large enough to saturate; edges keep structure.
    let (_, _, px) = gray_bytes(&dir.path().join("o1").join(EDGE_DIR).join("a_rgb.png"));
    assert!(px.iter().any(|&v| v != px[0]));
}

#[test]
fn infer_writes_maps_at_the_original_resolution() {
    let dir = tempfile::tempdir().unwrap();
    let (rgb, depth) = write_pair(dir.path(), "wide", 200, 120);
    let session = commands::open(ModelConfig::tiny(), None).unwrap();
    let out = commands::run_infer(&session, &rgb, &depth, &dir.path().join("out")).unwrap();
    for p in [&out.saliency, &out.edge] {
        let (w, h, _) = gray_bytes(p);
        assert_eq!((w, h), (200, 120));
    }
    let m = RunManifest::read(&dir.path().join("out").join(MANIFEST_FILE)).unwrap();
    assert_eq!(m, out.manifest);
    assert_eq!(m.command, "infer");
    assert_eq!(m.seed, 0);
    assert_eq!(m.checkpoint, None);
    assert_eq!(m.timing.len(), 1);
    assert_eq!(m.timing[0].image, "wide_rgb");
    assert_eq!(m.param_counts.total, session.model.count_params().total);
    assert_eq!(m.config.preset, "tiny");
}

#[test]
fn zero_heads_give_a_uniform_mid_grey_map() {
    let dir = tempfile::tempdir().unwrap();
    let (rgb, depth) = write_pair(dir.path(), "z", 64, 96);
    let model = TaNet::new(ModelConfig::tiny()).unwrap();
    let mut params = model.init_params::<f32>(4);
    params.zero_prefix(tanet_core::model::HEAD_PREFIX);
    let ckpt = dir.path().join("zero.tanet");
    checkpoint::write(&params, &ckpt).unwrap();
    let out = dir.path().join("out");
    let o = tanet(&["infer", s(&rgb), s(&depth), "--checkpoint", s(&ckpt), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    for sub in [SALIENCY_DIR, EDGE_DIR] {
        let (_, _, px) = gray_bytes(&out.join(sub).join("z_rgb.png"));
        assert!(px.iter().all(|&v| v == 128), "{sub}");
    }
    let m = RunManifest::read(&out.join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.checkpoint.as_deref(), Some(s(&ckpt)));
}

#[test]
fn mismatched_checkpoint_names_the_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let (rgb, depth) = write_pair(dir.path(), "m", 64, 64);
    let ckpt = dir.path().join("w.tanet");
    checkpoint::write(&TaNet::new(ModelConfig::tiny()).unwrap().init_params(1), &ckpt).unwrap();

    let o = tanet(&["infer", s(&rgb), s(&depth), "--checkpoint", s(&ckpt), "--no-eem", "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("tensor `eem.level0"), "{}", text(&o));

    let mut wider = ModelConfig::tiny();
    wider.decoder_width = 24;
    let e = commands::open(wider, Some(&ckpt)).err().unwrap();
    assert!(matches!(&e, Error::Model(tanet_core::Error::ParamMismatch(n)) if n.starts_with("decoder.")), "{e}");

    let junk = dir.path().join("junk.tanet");
    fs::write(&junk, b"hello").unwrap();
    let o = tanet(&["infer", s(&rgb), s(&depth), "--checkpoint", s(&junk)]);
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("not a checkpoint"));
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = tanet(&["infer", "nope_rgb.png", "nope_depth.png", "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("nope_rgb.png"));
}

fn mask(rseed: u32) -> impl Fn(u32, u32) -> u8 {
    move |x, y| if (x * 3 + y * 5 + rseed) % 7 < 3 { 255 } else { 0 }
}

#[test]
fn eval_of_ground_truth_copies_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    fs::create_dir_all(&pred).unwrap();
    fs::create_dir_all(&gt).unwrap();
    for i in 0..3 {
        write_gray(&gt.join(format!("img{i}.png")), 16, 12, mask(i));
        fs::copy(gt.join(format!("img{i}.png")), pred.join(format!("img{i}.png"))).unwrap();
    }
    let out = commands::run_eval(&pred, &gt, &dir.path().join("out")).unwrap();
    assert_eq!(out.aggregate.images, 3);
    assert!((out.aggregate.f_beta_max - 1.0).abs() < 1e-9);
    assert_eq!(out.aggregate.mae, 0.0);
    assert!(out.skipped.is_empty());
}

#[test]
fn eval_aggregate_is_the_mean_of_per_image_scores() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt, out) = (dir.path().join("pred"), dir.path().join("gt"), dir.path().join("out"));
    fs::create_dir_all(&pred).unwrap();
    fs::create_dir_all(&gt).unwrap();
    let mut expect = Vec::new();
    for i in 0..3u32 {
        let g = mask(i);
        let p = move |x: u32, y: u32| ((x * 37 + y * 11 + i * 101) % 256) as u8;
        write_gray(&gt.join(format!("n{i}.png")), 16, 16, &g);
        write_gray(&pred.join(format!("n{i}.pgm")), 16, 16, p);
        let gv: Vec<u8> = (0..256).map(|k| g(k % 16, k / 16)).collect();
        let pv: Vec<u8> = (0..256).map(|k| p(k % 16, k / 16)).collect();
        expect.push(evaluate_pair(&SaliencyMapPair::from_u8(16, 16, &pv, &gv).unwrap()));
    }
    // An extra prediction without ground truth is skipped, not fatal.
    write_gray(&pred.join("orphan.png"), 4, 4, |_, _| 0);

    let o = tanet(&["eval", s(&pred), s(&gt), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(text(&o).contains("orphan.png"));

    let mean = |f: fn(&tanet_core::metrics::MetricReport) -> f64| expect.iter().map(f).sum::<f64>() / 3.0;
    let agg = fs::read_to_string(out.join(commands::AGGREGATE_CSV)).unwrap();
    let vals: Vec<f64> = agg.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(vals[0], 3.0);
    assert!((vals[1] - mean(|r| r.f_beta_max)).abs() < 1e-12);
    assert!((vals[2] - mean(|r| r.mae)).abs() < 1e-12);
    assert!((vals[3] - mean(|r| r.s_measure)).abs() < 1e-12);

    let per = fs::read_to_string(out.join(commands::PER_IMAGE_CSV)).unwrap();
    assert_eq!(per.lines().count(), 4);
    assert!(per.lines().nth(1).unwrap().starts_with("n0,"));
    let pr = fs::read_to_string(out.join(commands::PR_CURVE_CSV)).unwrap();
    assert_eq!(pr.lines().count(), 257);
}

#[test]
fn eval_without_pairs_fails() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    fs::create_dir_all(&pred).unwrap();
    fs::create_dir_all(&gt).unwrap();
    let o = tanet(&["eval", s(&pred), s(&gt), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);

    write_gray(&pred.join("a.png"), 4, 4, |_, _| 0);
    write_gray(&gt.join("b.png"), 4, 4, |_, _| 0);
    let e = commands::run_eval(&pred, &gt, &dir.path().join("o")).unwrap_err();
    assert!(matches!(e, Error::NoPairs(_)));
    assert!(e.to_string().contains("2 unmatched"));
}

#[test]
fn eval_resizes_predictions_to_the_mask() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    fs::create_dir_all(&pred).unwrap();
    fs::create_dir_all(&gt).unwrap();
    write_gray(&gt.join("x.png"), 16, 16, |_, _| 255);
    write_gray(&pred.join("x.png"), 5, 7, |_, _| 255);
    let out = commands::run_eval(&pred, &gt, &dir.path().join("o")).unwrap();
    assert_eq!(out.aggregate.mae, 0.0);
}

#[test]
fn zero_training_steps_leave_weights_untouched() {
    let mut cfg = ModelConfig::tiny();
    cfg.input_size = 32;
    let session = commands::open(cfg, None).unwrap();
    let init = session.params.clone();
    let train = TrainConfig { steps: 0, ..TrainConfig::default() };
    let run = commands::run_train_toy(session, 2, 32, &train, None).unwrap();
    assert!(run.trace.is_empty());
    assert_eq!(run.params, init);
}

#[test]
fn toy_training_is_reproducible_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("train");
    let args = ["train-toy", "--steps", "3", "--size", "32", "--samples", "2", "--seed", "5", "--out", s(&out)];
    assert_eq!(code(&tanet(&args)), 0);
    let trace = fs::read_to_string(out.join(commands::TRACE_CSV)).unwrap();
    let weights = fs::read(out.join(commands::CHECKPOINT_FILE)).unwrap();
    assert_eq!(trace.lines().count(), 4);
    assert_eq!(code(&tanet(&args)), 0);
    assert_eq!(fs::read_to_string(out.join(commands::TRACE_CSV)).unwrap(), trace);
    assert_eq!(fs::read(out.join(commands::CHECKPOINT_FILE)).unwrap(), weights);

    let mut cfg = ModelConfig::tiny();
    cfg.input_size = 32;
    let model = TaNet::new(cfg).unwrap();
    commands::load_weights(&model, &out.join(commands::CHECKPOINT_FILE)).unwrap();
    assert_eq!(RunManifest::read(&out.join(MANIFEST_FILE)).unwrap().config.input_size, 32);
}

#[test]
fn derive_edges_marks_the_square_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("sq.png");
    write_gray(&m, 8, 8, |x, y| if (2..6).contains(&x) && (2..6).contains(&y) { 255 } else { 0 });
    let o = tanet(&["derive-edges", s(&m), "--out", s(&dir.path().join("e"))]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let (_, _, px) = gray_bytes(&dir.path().join("e").join("sq.png"));
    for y in 0..8 {
        for x in 0..8 {
            // Dilation covers 1..7, erosion keeps 3..5.
            let dil = (1..7).contains(&x) && (1..7).contains(&y);
            let ero = (3..5).contains(&x) && (3..5).contains(&y);
            assert_eq!(px[y * 8 + x], if dil && !ero { 255 } else { 0 }, "({x},{y})");
        }
    }
}

#[test]
fn params_reports_the_full_preset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("full.cfg");
    fs::write(&cfg, "preset = full\n").unwrap();
    let o = tanet(&["params", "--config", s(&cfg)]);
    assert_eq!(code(&o), 0);
    let t = text(&o);
    let total = TaNet::new(ModelConfig::full()).unwrap().count_params().total;
    assert!(t.contains(&total.to_string()), "{t}");
    assert!(t.contains("reduction"));
}

#[test]
fn selftest_passes_and_catches_an_injected_fault() {
    let o = tanet(&["selftest"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(text(&o).contains("0 failed"));

    let o = tanet(&["selftest", "--inject-fault", "bce-sign"]);
    assert_eq!(code(&o), 3);
    let t = text(&o);
    assert!(t.contains("FAIL loss gradient against finite differences"), "{t}");
    assert!(t.contains("1 failed"));

    assert_eq!(code(&tanet(&["selftest", "--inject-fault", "other"])), 1);
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&tanet(&[])), 1);
    assert_eq!(code(&tanet(&["frobnicate"])), 1);
    assert_eq!(code(&tanet(&["params", "--seed", "x"])), 1);
    assert_eq!(code(&tanet(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "decoder_width = 16\nbatch_size = 8\n").unwrap();
    let o = tanet(&["params", "--config", s(&cfg)]);
    assert_eq!(code(&o), 1);
    assert!(text(&o).contains("line 2: unknown key `batch_size`"));
}
