mod common;

use std::fs;

use cstn::data_io::container::{self, Container, NamedTensor};
use cstn::data_io::synthetic::{load_scene, save_scene};
use cstn::data_io::{
    generate_synthetic_pair, load_binary_png, load_difference_raw, load_pair, load_raster,
    load_raw, normalize, resample, save_binary_png, save_difference_raw, save_raw, LoadOptions,
    RasterImage, SensorProfiles,
};
use cstn::{BinaryMap, Error, ScalarMap};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn random_raster(seed: u64, h: usize, w: usize, c: usize) -> RasterImage {
    let mut r = common::rng(seed);
    let data = (0..h * w * c).map(|_| r.random_range(-3.0f32..7.0)).collect();
    RasterImage::new(h, w, c, data).unwrap()
}

#[test]
fn raw_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut img = random_raster(1, 17, 23, 4);
    img.metadata.insert("GdalNodata".into(), "-9999".into());
    let a = dir.path().join("a.raw");
    let b = dir.path().join("b.raw");
    save_raw(&a, &img).unwrap();
    let once = load_raw(&a).unwrap();
    save_raw(&b, &once).unwrap();
    let twice = load_raster(&b).unwrap();
    let bits = |i: &RasterImage| i.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&img), bits(&twice));
    assert_eq!((twice.height(), twice.width(), twice.channels()), (17, 23, 4));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn eight_bit_png_is_scaled_to_unit_range() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rgb.png");
    let raw: Vec<u8> = (0..6 * 5 * 3).map(|i| (i * 37 % 256) as u8).collect();
    image::RgbImage::from_raw(5, 6, raw.clone()).unwrap().save(&path).unwrap();
    let img = load_raster(&path).unwrap();
    assert_eq!((img.height(), img.width(), img.channels()), (6, 5, 3));
    for (v, &b) in img.data().iter().zip(&raw) {
        assert_eq!(*v, b as f32 / 255.0);
        assert!((0.0..=1.0).contains(v));
    }
}

#[test]
fn tiff_float_and_byte_samples() {
    use tiff::encoder::{colortype, TiffEncoder};
    let dir = tempfile::tempdir().unwrap();

    let fpath = dir.path().join("f.tif");
    let fdata: Vec<f32> = vec![0.25, -1.5, 3.0, f32::NAN, 2.0, 0.0];
    let mut enc = TiffEncoder::new(fs::File::create(&fpath).unwrap()).unwrap();
    enc.write_image::<colortype::Gray32Float>(3, 2, &fdata).unwrap();
    let f = load_raster(&fpath).unwrap();
    assert_eq!((f.height(), f.width(), f.channels()), (2, 3, 1));
    assert_eq!(f.data(), &[0.25, -1.5, 3.0, -1.5, 2.0, 0.0]);

    let bpath = dir.path().join("b.tiff");
    let bdata: Vec<u8> = (0..4 * 2 * 3).map(|i| (i * 11) as u8).collect();
    let mut enc = TiffEncoder::new(fs::File::create(&bpath).unwrap()).unwrap();
    enc.write_image::<colortype::RGB8>(2, 4, &bdata).unwrap();
    let b = load_raster(&bpath).unwrap();
    assert_eq!((b.height(), b.width(), b.channels()), (4, 2, 3));
    for (v, &x) in b.data().iter().zip(&bdata) {
        assert_eq!(*v, x as f32 / 255.0);
    }
}

#[test]
fn unknown_extension_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("img.jpg");
    fs::write(&path, b"nope").unwrap();
    assert!(matches!(load_raster(&path), Err(Error::Format(_))));
}

#[test]
fn container_rejects_bad_magic_and_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.raw");
    save_raw(&path, &random_raster(2, 4, 4, 1)).unwrap();
    let bytes = fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], container::MAGIC);

    let mut bad = bytes.clone();
    bad[0] = b'X';
    fs::write(&path, &bad).unwrap();
    assert!(load_raw(&path).is_err());

    fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(load_raw(&path).is_err());

    let other = Container {
        meta: serde_json::json!({}),
        tensors: vec![NamedTensor { name: "weights".into(), shape: vec![2], data: vec![1.0, 2.0] }],
    };
    container::write_container(&path, &other).unwrap();
    assert!(matches!(load_raw(&path), Err(Error::Format(_))));
}

#[test]
fn pair_sizes_must_agree_unless_resampled() {
    let dir = tempfile::tempdir().unwrap();
    let (px, py) = (dir.path().join("x.raw"), dir.path().join("y.raw"));
    save_raw(&px, &random_raster(3, 40, 30, 3)).unwrap();
    save_raw(&py, &random_raster(4, 20, 15, 1)).unwrap();
    assert!(load_pair(&px, &py, LoadOptions::default()).is_err());
    let pair = load_pair(&px, &py, LoadOptions { resample_to: Some((10, 12)), normalize: true }).unwrap();
    assert_eq!(pair.x.dims(), (10, 12));
    assert_eq!(pair.y.dims(), (10, 12));
    assert_eq!((pair.x.channels(), pair.y.channels()), (3, 1));
    assert!(pair.x.data().iter().chain(pair.y.data()).all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn normalize_examples() {
    let img = RasterImage::new(1, 3, 2, vec![10.0, 0.5, 20.0, 0.5, 30.0, 0.5]).unwrap();
    let n = normalize(&img);
    assert_eq!(n.data(), &[0.0, 0.0, 0.5, 0.0, 1.0, 0.0]);

    let unit = RasterImage::new(1, 4, 1, vec![0.0, 0.3, 0.7, 1.0]).unwrap();
    for (a, b) in normalize(&unit).data().iter().zip(unit.data()) {
        assert!((a - b).abs() <= 1e-7);
    }
}

#[test]
fn resample_identity_and_checkerboard() {
    let img = random_raster(5, 9, 7, 2);
    assert_eq!(resample(&img, 9, 7).unwrap(), img);

    let board = RasterImage::new(2, 2, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
    assert_eq!(resample(&board, 1, 1).unwrap().data(), &[0.5]);

    let quad = RasterImage::new(2, 2, 2, vec![1.0, 10.0, 3.0, 30.0, 5.0, 50.0, 11.0, 110.0]).unwrap();
    let one = resample(&quad, 1, 1).unwrap();
    assert_eq!(one.data(), &[5.0, 50.0]);
    assert!(resample(&quad, 0, 3).is_err());
}

#[test]
fn resample_reduces_large_scene_by_four() {
    let img = RasterImage::new(3500, 2000, 1, vec![0.0; 3500 * 2000]).unwrap();
    let out = resample(&img, 3500 / 4, 2000 / 4).unwrap();
    assert_eq!(out.dims(), (875, 500));
}

#[test]
fn resample_preserves_affine_ramps() {
    let (h, w) = (12, 16);
    let data = (0..h * w).map(|i| ((i / w) * 3 + (i % w)) as f32).collect();
    let img = RasterImage::new(h, w, 1, data).unwrap();
    let half = resample(&img, 6, 8).unwrap();
    for r in 0..6 {
        for c in 0..8 {
            let expect = 3.0 * (2 * r) as f32 + 1.5 + (2 * c) as f32 + 0.5;
            assert!((half.get(r, c, 0) - expect).abs() < 1e-4, "{r},{c}");
        }
    }
}

#[test]
fn binary_png_and_difference_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let map = BinaryMap::from_fn(13, 9, |r, c| (r * 7 + c * 3) % 5 == 0);
    let png = dir.path().join("cm.png");
    save_binary_png(&png, &map).unwrap();
    assert_eq!(load_binary_png(&png).unwrap(), map);
    let gray = image::open(&png).unwrap().to_luma8();
    assert!(gray.pixels().all(|p| p.0[0] == 0 || p.0[0] == 255));

    let mut r = common::rng(9);
    let di = ScalarMap::new(6, 11, (0..66).map(|_| r.random_range(0.0..4.0)).collect()).unwrap();
    let raw = dir.path().join("di.raw");
    save_difference_raw(&raw, &di).unwrap();
    let back = load_difference_raw(&raw).unwrap();
    assert_eq!(back.dims(), di.dims());
    for (a, b) in back.data().iter().zip(di.data()) {
        assert_eq!(*a, *b as f32 as f64);
    }
}

#[test]
fn synthetic_scene_is_reproducible_and_sized() {
    let p = SensorProfiles::default();
    let a = generate_synthetic_pair(7, 256, 256, 0.1, &p).unwrap();
    let b = generate_synthetic_pair(7, 256, 256, 0.1, &p).unwrap();
    assert_eq!(a.x.data(), b.x.data());
    assert_eq!(a.y.data(), b.y.data());
    assert_eq!(a.gt, b.gt);
    assert_eq!((a.x.channels(), a.y.channels()), (3, 1));
    for seed in 0..10 {
        let s = generate_synthetic_pair(seed, 256, 256, 0.1, &p).unwrap();
        let share = s.gt.count_ones() as f64 / (256.0 * 256.0);
        assert!((0.08..=0.12).contains(&share), "seed {seed}: {share}");
        assert!(s.x.data().iter().chain(s.y.data()).all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn synthetic_change_comes_in_blobs() {
    let s = generate_synthetic_pair(11, 128, 128, 0.1, &SensorProfiles::default()).unwrap();
    let (h, w) = s.gt.dims();
    let mut isolated = 0;
    for r in 0..h {
        for c in 0..w {
            if s.gt.get(r, c) == 0 {
                continue;
            }
            let neighbours = [(0i64, 1i64), (1, 0), (0, -1), (-1, 0)]
                .iter()
                .filter(|(dr, dc)| {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w && s.gt.get(rr as usize, cc as usize) == 1
                })
                .count();
            if neighbours == 0 {
                isolated += 1;
            }
        }
    }
    assert_eq!(isolated, 0);
}

/// Plug-in mutual information, in nats, over a `bins × bins` histogram of
/// two series already in [0, 1].
fn binned_mi(a: &[f64], b: &[f64], bins: usize) -> f64 {
    let idx = |v: f64| ((v * bins as f64) as usize).min(bins - 1);
    let mut joint = vec![0.0; bins * bins];
    let (mut pa, mut pb) = (vec![0.0; bins], vec![0.0; bins]);
    let n = a.len() as f64;
    for (&x, &y) in a.iter().zip(b) {
        joint[idx(x) * bins + idx(y)] += 1.0 / n;
        pa[idx(x)] += 1.0 / n;
        pb[idx(y)] += 1.0 / n;
    }
    let mut mi = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            let p = joint[i * bins + j];
            if p > 0.0 {
                mi += p * (p / (pa[i] * pb[j])).ln();
            }
        }
    }
    mi
}

#[test]
fn synthetic_modalities_share_information_outside_change() {
    let s = generate_synthetic_pair(5, 256, 256, 0.1, &SensorProfiles::default()).unwrap();
    let keep: Vec<usize> = (0..256 * 256).filter(|&i| s.gt.data()[i] == 0).collect();
    let y: Vec<f64> = keep.iter().map(|&i| s.y.data()[i] as f64).collect();
    let mut shuffled = y.clone();
    shuffled.shuffle(&mut common::rng(1));
    for ch in 0..3 {
        let x: Vec<f64> = keep.iter().map(|&i| s.x.data()[i * 3 + ch] as f64).collect();
        let mi = binned_mi(&x, &y, 16);
        let baseline = binned_mi(&x, &shuffled, 16);
        assert!(mi > 0.05 && mi > 5.0 * baseline, "channel {ch}: {mi} vs {baseline}");
    }
}

#[test]
fn synthetic_scene_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = generate_synthetic_pair(3, 64, 64, 0.1, &SensorProfiles::default()).unwrap();
    save_scene(dir.path(), &s).unwrap();
    let back = load_scene(dir.path()).unwrap();
    assert_eq!(back.x.data(), s.x.data());
    assert_eq!(back.y.data(), s.y.data());
    assert_eq!(back.gt, s.gt);
    assert_eq!(back.seed, 3);
    assert_eq!(back.change_fraction, 0.1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalize_lands_in_unit_range_and_is_idempotent(seed in any::<u64>(), h in 1usize..12, w in 1usize..12, c in 1usize..4) {
        let n = normalize(&random_raster(seed, h, w, c));
        prop_assert!(n.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let again = normalize(&n);
        for (a, b) in again.data().iter().zip(n.data()) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn resample_stays_within_input_range(seed in any::<u64>(), th in 1usize..20, tw in 1usize..20) {
        let img = random_raster(seed, 7, 9, 2);
        let out = resample(&img, th, tw).unwrap();
        prop_assert_eq!(out.dims(), (th, tw));
        for ch in 0..2 {
            let vals = || img.data().iter().skip(ch).step_by(2);
            let lo = vals().cloned().fold(f32::INFINITY, f32::min);
            let hi = vals().cloned().fold(f32::NEG_INFINITY, f32::max);
            for v in out.data().iter().skip(ch).step_by(2) {
                prop_assert!(*v >= lo - 1e-5 && *v <= hi + 1e-5);
            }
        }
    }
}
