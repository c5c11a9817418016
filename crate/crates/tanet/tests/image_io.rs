mod common;

use common::{write_gray, write_pair, write_rgb};
use tanet::image_io::{load_gray, load_rgb, load_sample, save_gray, to_u8, SamplePaths};
use tanet::Error;
use tanet_core::Tensor;

fn paths(dir: &std::path::Path, w: u32, h: u32) -> SamplePaths {
    let (rgb, depth) = write_pair(dir, "s", w, h);
    let mask = dir.join("s_mask.png");
    write_gray(&mask, w, h, |x, y| if x > w / 3 && x < 2 * w / 3 && y > h / 4 && y < h / 2 { 255 } else { 0 });
    SamplePaths { rgb, depth, mask }
}

#[test]
fn inputs_are_resized_to_the_configured_size() {
    let dir = tempfile::tempdir().unwrap();
    let s = load_sample(&paths(dir.path(), 640, 480), 320).unwrap();
    assert_eq!(s.original, (480, 640));
    for t in [&s.sample.rgb, &s.sample.depth] {
        assert_eq!(t.shape().0, [1, 3, 320, 320]);
    }
    for t in [&s.sample.sal_gt, &s.sample.edge_gt] {
        assert_eq!(t.shape().0, [1, 1, 320, 320]);
        assert!(t.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }
    assert!(s.sample.rgb.data().iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(s.sample.name, "s_rgb");
}

#[test]
fn depth_is_replicated_to_three_identical_channels() {
    let dir = tempfile::tempdir().unwrap();
    let s = load_sample(&paths(dir.path(), 40, 24), 32).unwrap();
    let d = &s.sample.depth;
    for y in 0..32 {
        for x in 0..32 {
            let v = d.at(0, 0, y, x);
            assert!(v == d.at(0, 1, y, x) && v == d.at(0, 2, y, x));
        }
    }
}

#[test]
fn mask_already_at_size_is_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let p = paths(dir.path(), 64, 64);
    let raw = load_gray(&p.mask).unwrap();
    let s = load_sample(&p, 64).unwrap();
    assert_eq!(s.sample.sal_gt, raw);
}

#[test]
fn values_scale_to_unit_range() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.png");
    write_rgb(&path, 2, 1, |x, _| if x == 0 { [0, 51, 255] } else { [255, 255, 255] });
    let t = load_rgb(&path).unwrap();
    assert_eq!(t.shape().0, [1, 3, 1, 2]);
    assert_eq!((t.at(0, 0, 0, 0), t.at(0, 1, 0, 0), t.at(0, 2, 0, 0)), (0.0, 0.2, 1.0));
}

#[test]
fn errors_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.png");
    let e = load_rgb(&missing).unwrap_err();
    assert!(matches!(e, Error::Io { .. }));
    assert!(e.to_string().contains("missing.png"));

    let junk = dir.path().join("junk.png");
    std::fs::write(&junk, b"\x89PNG\r\n\x1a\nnot really").unwrap();
    let e = load_gray(&junk).unwrap_err();
    assert!(e.to_string().contains("junk.png"), "{e}");

    let mut p = paths(dir.path(), 8, 8);
    p.depth = missing.clone();
    assert!(load_sample(&p, 32).unwrap_err().to_string().contains("missing.png"));
}

#[test]
fn zero_sized_images_and_targets_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.pgm");
    std::fs::write(&empty, b"P5\n0 0\n255\n").unwrap();
    let e = load_gray(&empty).unwrap_err();
    assert!(e.to_string().contains("empty.pgm"), "{e}");
    assert!(load_sample(&paths(dir.path(), 8, 8), 0).is_err());
}

#[test]
fn pgm_and_png_outputs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let map = Tensor::<f32>::from_fn([1, 1, 3, 5], |[_, _, y, x]| (y * 5 + x) as f32 / 14.0);
    for name in ["m.pgm", "m.png"] {
        let path = dir.path().join(name);
        save_gray(&path, &map).unwrap();
        let back = load_gray(&path).unwrap();
        for (a, b) in map.data().iter().zip(back.data()) {
            assert_eq!(to_u8(*a), (b * 255.0).round() as u8);
        }
    }
    assert!(std::fs::read(dir.path().join("m.pgm")).unwrap().starts_with(b"P5"));
}

#[test]
fn quantization_rounds_halves_up_and_clamps() {
    assert_eq!(to_u8(0.5), 128);
    assert_eq!(to_u8(0.0), 0);
    assert_eq!(to_u8(1.0), 255);
    assert_eq!(to_u8(-3.0), 0);
    assert_eq!(to_u8(7.0), 255);
    assert_eq!(to_u8(f32::NAN), 0);
}
