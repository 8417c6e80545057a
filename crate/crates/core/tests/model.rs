use cstn::model::{adain, content_encode, decode, init_parameters, reconstruct, style_encode, translate};
use cstn::{ArchConfig, Domain, ModelParameters, Patch, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_arch() -> ArchConfig {
    ArchConfig::scaled(4, 2, 8, 16, 8, 16)
}

/// Every tensor redrawn uniformly so biases are non-zero too.
fn random_params(seed: u64, arch: &ArchConfig) -> ModelParameters<f64> {
    let base = init_parameters::<f64>(seed, arch).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let named = base
        .named()
        .map(|(n, t)| {
            let scale = 1.0 / (t.len() as f64 / t.shape()[0] as f64).sqrt().max(1.0);
            let data = (0..t.len()).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
            (n.to_string(), Tensor::from_vec(t.shape(), data))
        })
        .collect();
    ModelParameters::from_named(arch.clone(), named).unwrap()
}

fn random_patch(seed: u64, domain: Domain, c: usize, h: usize, w: usize) -> Patch<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..c * h * w).map(|_| rng.random_range(0.0..1.0)).collect();
    Patch::new(domain, Tensor::from_vec(&[c, h, w], data)).unwrap()
}

// ---- direct-loop oracle ----

type Map = Vec<Vec<Vec<f64>>>;

fn get<'a>(p: &'a ModelParameters<f64>, name: &str) -> &'a Tensor<f64> {
    p.named().find(|(n, _)| *n == name).map(|(_, t)| t).unwrap()
}

fn to_map(t: &Tensor<f64>) -> Map {
    let (c, h, w) = t.chw();
    (0..c)
        .map(|k| (0..h).map(|i| (0..w).map(|j| t.data()[(k * h + i) * w + j]).collect()).collect())
        .collect()
}

fn conv(x: &Map, wt: &Tensor<f64>, b: &Tensor<f64>, stride: usize) -> Map {
    let (co, ci, k) = (wt.shape()[0], wt.shape()[1], wt.shape()[2]);
    let (h, w) = (x[0].len() as isize, x[0][0].len() as isize);
    let pad = (k / 2) as isize;
    let ho = (h + 2 * pad - k as isize) / stride as isize + 1;
    let wo = (w + 2 * pad - k as isize) / stride as isize + 1;
    let mut out = vec![vec![vec![0.0; wo as usize]; ho as usize]; co];
    for o in 0..co {
        for i in 0..ho {
            for j in 0..wo {
                let mut acc = b.data()[o];
                for c in 0..ci {
                    for di in 0..k {
                        for dj in 0..k {
                            let r = i * stride as isize + di as isize - pad;
                            let s = j * stride as isize + dj as isize - pad;
                            if r >= 0 && r < h && s >= 0 && s < w {
                                acc += wt.data()[((o * ci + c) * k + di) * k + dj] * x[c][r as usize][s as usize];
                            }
                        }
                    }
                }
                out[o][i as usize][j as usize] = acc;
            }
        }
    }
    out
}

fn apply(x: Map, f: impl Fn(f64) -> f64) -> Map {
    x.into_iter()
        .map(|p| p.into_iter().map(|r| r.into_iter().map(&f).collect()).collect())
        .collect()
}

fn norm(x: &Map, gamma: &[f64], eta: &[f64], eps: f64) -> Map {
    x.iter()
        .enumerate()
        .map(|(c, plane)| {
            let vals: Vec<f64> = plane.iter().flatten().copied().collect();
            let n = vals.len() as f64;
            let mu = vals.iter().sum::<f64>() / n;
            let sd = (vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt();
            plane
                .iter()
                .map(|r| r.iter().map(|v| gamma[c] * (v - mu) / (sd + eps) + eta[c]).collect())
                .collect()
        })
        .collect()
}

fn oracle_content(p: &ModelParameters<f64>, x: &Patch<f64>) -> Map {
    let tag = if x.domain() == Domain::X { "x" } else { "y" };
    let mut h = to_map(x.tensor());
    for i in 0..5 {
        let z = conv(&h, get(p, &format!("content_{tag}.conv{i}.weight")), get(p, &format!("content_{tag}.conv{i}.bias")), 1);
        h = if i == 4 { apply(z, f64::tanh) } else { apply(z, |v| v.max(0.0)) };
    }
    h
}

fn oracle_style(p: &ModelParameters<f64>, x: &Patch<f64>) -> Vec<f64> {
    let tag = if x.domain() == Domain::X { "x" } else { "y" };
    let mut h = to_map(x.tensor());
    for i in 0..4 {
        let z = conv(&h, get(p, &format!("style_{tag}.conv{i}.weight")), get(p, &format!("style_{tag}.conv{i}.bias")), 2);
        h = apply(z, |v| v.max(0.0));
    }
    h.iter()
        .map(|plane| {
            let v: Vec<f64> = plane.iter().flatten().copied().collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect()
}

fn oracle_decode(p: &ModelParameters<f64>, content: &Map, style: &[f64], domain: Domain) -> Map {
    let tag = if domain == Domain::X { "x" } else { "y" };
    let mut s = style.to_vec();
    for i in 0..3 {
        let w = get(p, &format!("decoder_{tag}.mlp{i}.weight"));
        let b = get(p, &format!("decoder_{tag}.mlp{i}.bias"));
        let (no, ni) = (w.shape()[0], w.shape()[1]);
        s = (0..no)
            .map(|o| {
                let v = b.data()[o] + (0..ni).map(|k| w.data()[o * ni + k] * s[k]).sum::<f64>();
                if i < 2 {
                    v.max(0.0)
                } else {
                    v
                }
            })
            .collect();
    }
    let f = content.len();
    let eps = p.arch().epsilon;
    let mut h = content.clone();
    for blk in 0..2 {
        let gamma = &s[2 * blk * f..(2 * blk + 1) * f];
        let eta = &s[(2 * blk + 1) * f..(2 * blk + 2) * f];
        let a = conv(&h, get(p, &format!("decoder_{tag}.block{blk}.conv0.weight")), get(p, &format!("decoder_{tag}.block{blk}.conv0.bias")), 1);
        let a = apply(norm(&a, gamma, eta, eps), |v| v.max(0.0));
        let a = conv(&a, get(p, &format!("decoder_{tag}.block{blk}.conv1.weight")), get(p, &format!("decoder_{tag}.block{blk}.conv1.bias")), 1);
        let a = apply(a, |v| v.max(0.0));
        for c in 0..f {
            for i in 0..h[c].len() {
                for j in 0..h[c][i].len() {
                    h[c][i][j] += a[c][i][j];
                }
            }
        }
    }
    let out = conv(&h, get(p, &format!("decoder_{tag}.out.weight")), get(p, &format!("decoder_{tag}.out.bias")), 1);
    apply(out, |v| 1.0 / (1.0 + (-v).exp()))
}

fn assert_close(got: &Tensor<f64>, want: &Map, tol: f64) {
    let g = to_map(got);
    assert_eq!((g.len(), g[0].len(), g[0][0].len()), (want.len(), want[0].len(), want[0][0].len()));
    for (a, b) in g.iter().flatten().flatten().zip(want.iter().flatten().flatten()) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }
}

#[test]
fn content_encoder_matches_direct_convolution() {
    let p = random_params(1, &tiny_arch());
    for (d, c) in [(Domain::X, 4), (Domain::Y, 2)] {
        let x = random_patch(11, d, c, 8, 8);
        let code = content_encode(&p, &x).unwrap();
        assert_close(code.tensor(), &oracle_content(&p, &x), 1e-12);
    }
}

#[test]
fn style_encoder_matches_direct_convolution() {
    let p = random_params(2, &tiny_arch());
    let x = random_patch(12, Domain::X, 4, 8, 8);
    let s = style_encode(&p, &x).unwrap();
    let want = oracle_style(&p, &x);
    assert_eq!(s.tensor().shape(), &[16]);
    for (a, b) in s.tensor().data().iter().zip(&want) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn translation_and_reconstruction_match_layer_oracle() {
    let p = random_params(3, &tiny_arch());
    let x = random_patch(13, Domain::X, 4, 8, 8);
    let y = random_patch(14, Domain::Y, 2, 8, 8);
    let (cx, cy) = (oracle_content(&p, &x), oracle_content(&p, &y));
    let (sx, sy) = (oracle_style(&p, &x), oracle_style(&p, &y));

    let (x_hat, y_hat) = translate(&p, &x, &y).unwrap();
    assert_eq!(x_hat.channels(), 4);
    assert_eq!(y_hat.channels(), 2);
    assert_close(x_hat.tensor(), &oracle_decode(&p, &cy, &sx, Domain::X), 1e-12);
    assert_close(y_hat.tensor(), &oracle_decode(&p, &cx, &sy, Domain::Y), 1e-12);

    let (x_rec, y_rec) = reconstruct(&p, &x, &y).unwrap();
    assert_close(x_rec.tensor(), &oracle_decode(&p, &cx, &sx, Domain::X), 1e-12);
    assert_close(y_rec.tensor(), &oracle_decode(&p, &cy, &sy, Domain::Y), 1e-12);
}

#[test]
fn translate_equals_chained_calls() {
    let p = init_parameters::<f32>(4, &ArchConfig::scaled(3, 1, 8, 16, 8, 16)).unwrap();
    let x = Patch::new(Domain::X, Tensor::from_fn(&[3, 12, 10], |i| ((i as f32) * 0.13).sin() * 0.5 + 0.5)).unwrap();
    let y = Patch::new(Domain::Y, Tensor::from_fn(&[1, 12, 10], |i| ((i as f32) * 0.29).cos() * 0.5 + 0.5)).unwrap();
    let (x_hat, y_hat) = translate(&p, &x, &y).unwrap();
    let cx = content_encode(&p, &x).unwrap();
    let cy = content_encode(&p, &y).unwrap();
    let sx = style_encode(&p, &x).unwrap();
    let sy = style_encode(&p, &y).unwrap();
    assert_eq!(x_hat, decode(&p, &cy, &sx, Domain::X).unwrap());
    assert_eq!(y_hat, decode(&p, &cx, &sy, Domain::Y).unwrap());
    assert_eq!(translate(&p, &x, &y).unwrap(), (x_hat, y_hat));
}

#[test]
fn default_architecture_shapes() {
    let p = init_parameters::<f32>(7, &ArchConfig::new(3, 1)).unwrap();
    let x = Patch::new(Domain::X, Tensor::full(&[3, 64, 64], 0.5)).unwrap();
    assert_eq!(content_encode(&p, &x).unwrap().tensor().shape(), &[128, 64, 64]);
    assert_eq!(style_encode(&p, &x).unwrap().tensor().shape(), &[256]);
    assert_eq!(p.arch().adain_param_count(), 512);
}

#[test]
fn wrong_domain_channels_are_rejected() {
    let p = init_parameters::<f32>(7, &tiny_arch()).unwrap();
    let bad = Patch::new(Domain::X, Tensor::full(&[2, 8, 8], 0.5)).unwrap();
    assert!(content_encode(&p, &bad).is_err());
    let x = Patch::new(Domain::X, Tensor::full(&[4, 8, 8], 0.5)).unwrap();
    let y = Patch::new(Domain::Y, Tensor::full(&[2, 8, 6], 0.5)).unwrap();
    assert!(translate(&p, &x, &y).is_err());
}

#[test]
fn adain_hand_example() {
    let z = Tensor::from_vec(&[1, 1, 2], vec![1.0f64, 3.0]);
    let out = adain(&z, &[2.0], &[1.0], 1e-300).unwrap();
    assert!((out.data()[0] + 1.0).abs() < 1e-12);
    assert!((out.data()[1] - 3.0).abs() < 1e-12);
    let flat = Tensor::from_vec(&[2, 1, 3], vec![4.0, 4.0, 4.0, -1.0, -1.0, -1.0]);
    let out = adain(&flat, &[1.5, 0.3], &[0.25, -2.0], 1e-5).unwrap();
    assert_eq!(out.data(), &[0.25, 0.25, 0.25, -2.0, -2.0, -2.0]);
}

proptest! {
    #[test]
    fn adain_standardizes_each_channel(
        vals in prop::collection::vec(-5.0f64..5.0, 3 * 25),
    ) {
        let z = Tensor::from_vec(&[3, 5, 5], vals);
        let eps = 1e-5;
        let out = adain(&z, &[1.0; 3], &[0.0; 3], eps).unwrap();
        for c in 0..3 {
            let src = &z.data()[c * 25..(c + 1) * 25];
            let m = src.iter().sum::<f64>() / 25.0;
            let sd = (src.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 25.0).sqrt();
            prop_assume!(sd > 1e-3);
            let o = &out.data()[c * 25..(c + 1) * 25];
            let om = o.iter().sum::<f64>() / 25.0;
            let osd = (o.iter().map(|v| (v - om).powi(2)).sum::<f64>() / 25.0).sqrt();
            prop_assert!(om.abs() <= 1e-6);
            prop_assert!((osd - sd / (sd + eps)).abs() <= 1e-6);
        }
    }

    #[test]
    fn content_codes_stay_inside_the_open_interval(seed in 0u64..1000, h in 3usize..10, w in 3usize..10) {
        let p = random_params(seed, &tiny_arch());
        let x = random_patch(seed + 1, Domain::Y, 2, h, w);
        let code = content_encode(&p, &x).unwrap();
        prop_assert_eq!(code.tensor().shape(), &[8, h, w]);
        prop_assert!(code.tensor().data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn style_length_ignores_spatial_size(h in 1usize..20, w in 1usize..20) {
        let p = init_parameters::<f32>(5, &tiny_arch()).unwrap();
        let x = Patch::new(Domain::X, Tensor::full(&[4, h, w], 0.3)).unwrap();
        let s = style_encode(&p, &x).unwrap();
        prop_assert_eq!(s.tensor().shape(), &[16]);
    }

    #[test]
    fn forward_passes_are_pure(seed in 0u64..50) {
        let p = random_params(seed, &tiny_arch());
        let x = random_patch(seed, Domain::X, 4, 6, 7);
        let y = random_patch(seed + 9, Domain::Y, 2, 6, 7);
        prop_assert_eq!(translate(&p, &x, &y).unwrap(), translate(&p, &x, &y).unwrap());
        prop_assert_eq!(reconstruct(&p, &x, &y).unwrap(), reconstruct(&p, &x, &y).unwrap());
    }
}
