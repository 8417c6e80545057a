//! Seeded two-sensor scenes with a known change mask.
//!
//! A smooth multi-channel latent field stands in for the land surface: each
//! channel is blurred white noise pushed through a logistic curve, which
//! gives patchy, cover-like regions. The optical-like image X is an affine
//! mix of the latent channels passed through a gamma curve with additive
//! Gaussian noise. The radar-like image Y is an amplitude: the square root of
//! a logistic response to a signed latent combination times unit-mean gamma
//! speckle. Changed regions are a union of disks; inside them Y is rendered
//! from an independently drawn latent whose logistic is offset toward a new
//! cover type.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, Normal};

use super::{load_binary_png, load_raw, save_binary_png, save_raw, RasterImage};
use crate::detector::{blur_plane, gaussian_kernel};
use crate::error::{Error, Result};
use crate::map::BinaryMap;
use crate::rng::{stream, Rng, Stream};

#[derive(Clone, Debug, PartialEq)]
pub struct SensorProfiles {
    pub latent_channels: usize,
    /// Spatial correlation length of the latent field, in pixels.
    pub smoothness: f64,
    /// Logistic gain applied to the standardized latent noise.
    pub contrast: f64,
    /// Per-channel offset, before the logistic, of the cover that appears
    /// inside changed regions.
    pub change_shift: Vec<f64>,
    /// Rows: output channels of X; columns: latent channels.
    pub x_mix: Vec<Vec<f64>>,
    pub x_offset: Vec<f64>,
    pub x_gamma: f64,
    pub x_noise_std: f64,
    /// Signed latent weights of the single Y channel.
    pub y_weights: Vec<f64>,
    /// Logistic gain turning the weighted latent into mean backscatter.
    pub y_gain: f64,
    /// Shape of the unit-mean gamma speckle; larger is less noisy.
    pub y_looks: f64,
}

impl Default for SensorProfiles {
    fn default() -> Self {
        Self {
            latent_channels: 3,
            smoothness: 5.0,
            contrast: 2.5,
            change_shift: vec![1.5, -1.5, 1.0],
            x_mix: vec![
                vec![0.7, 0.2, 0.1],
                vec![0.2, 0.6, 0.2],
                vec![0.1, 0.3, 0.6],
            ],
            x_offset: vec![0.0, 0.05, 0.1],
            x_gamma: 0.7,
            x_noise_std: 0.02,
            y_weights: vec![1.0, -0.8, 0.5],
            y_gain: 4.0,
            y_looks: 16.0,
        }
    }
}

impl SensorProfiles {
    pub fn x_channels(&self) -> usize {
        self.x_mix.len()
    }

    fn validate(&self) -> Result<()> {
        let k = self.latent_channels;
        if k == 0
            || self.x_mix.is_empty()
            || self.x_mix.iter().any(|r| r.len() != k)
            || self.x_offset.len() != self.x_mix.len()
            || self.y_weights.len() != k
            || self.change_shift.len() != k
        {
            return Err(Error::config("sensor profile dimensions are inconsistent"));
        }
        if !(self.smoothness > 0.0 && self.contrast > 0.0 && self.y_gain > 0.0 && self.x_gamma > 0.0 && self.y_looks > 0.0 && self.x_noise_std >= 0.0) {
            return Err(Error::config("sensor profile parameters must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub x: RasterImage,
    pub y: RasterImage,
    pub gt: BinaryMap,
    pub seed: u64,
    pub change_fraction: f64,
}

/// Latent planes in (0, 1): blurred white noise, standardized and squashed
/// by a logistic curve.
fn latent_field(rng: &mut Rng, h: usize, w: usize, p: &SensorProfiles, shift: &[f64]) -> Vec<Vec<f64>> {
    let size = 2 * (3.0 * p.smoothness).ceil() as usize + 1;
    let taps = gaussian_kernel(p.smoothness, size);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    shift
        .iter()
        .map(|&offset| {
            let noise: Vec<f64> = (0..h * w).map(|_| normal.sample(rng)).collect();
            let mut plane = blur_plane(&noise, h, w, &taps);
            let n = plane.len() as f64;
            let mean = plane.iter().sum::<f64>() / n;
            let std = (plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
            for v in &mut plane {
                *v = 1.0 / (1.0 + (-(p.contrast * (*v - mean) / std + offset)).exp());
            }
            plane
        })
        .collect()
}

/// Union of random disks covering `target` pixels up to 20% over.
fn change_disks(rng: &mut Rng, h: usize, w: usize, fraction: f64) -> Result<BinaryMap> {
    let total = (h * w) as f64;
    let target = (fraction * total).round().max(1.0) as usize;
    let upper = (1.2 * fraction * total).floor() as usize;
    let short = h.min(w) as f64;
    let (r_min, r_max) = ((short / 32.0).max(3.0), (short / 10.0).max(4.0));
    let mut gt = BinaryMap::zeros(h, w);
    let mut count = 0usize;
    let mut attempts = 0;
    while count < target {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::Domain(format!(
                "could not place change regions covering {fraction} of a {h}x{w} scene"
            )));
        }
        let cy = rng.random_range(0..h) as f64;
        let cx = rng.random_range(0..w) as f64;
        let r = rng.random_range(r_min..=r_max);
        let rows = (cy - r).floor().max(0.0) as usize..=((cy + r).ceil() as usize).min(h - 1);
        let cols = (cx - r).floor().max(0.0) as usize..=((cx + r).ceil() as usize).min(w - 1);
        let mut fresh = Vec::new();
        for row in rows {
            for col in cols.clone() {
                let (dy, dx) = (row as f64 - cy, col as f64 - cx);
                if dy * dy + dx * dx <= r * r && gt.get(row, col) == 0 {
                    fresh.push((row, col));
                }
            }
        }
        if fresh.is_empty() || count + fresh.len() > upper {
            continue;
        }
        count += fresh.len();
        for (row, col) in fresh {
            gt.set(row, col, true);
        }
    }
    Ok(gt)
}

/// Generates a co-registered (X, Y, ground truth) triple. Both images are
/// normalized to [0, 1] per channel.
pub fn generate_synthetic_pair(
    seed: u64,
    height: usize,
    width: usize,
    change_fraction: f64,
    profiles: &SensorProfiles,
) -> Result<SyntheticScene> {
    if height < 64 || width < 64 {
        return Err(Error::validation(format!(
            "synthetic scenes need at least 64x64 pixels, got {height}x{width}"
        )));
    }
    if !(change_fraction > 0.0 && change_fraction < 0.5) {
        return Err(Error::validation(format!(
            "change fraction must lie in (0, 0.5), got {change_fraction}"
        )));
    }
    profiles.validate()?;
    let mut rng = stream(seed, Stream::Synthetic);
    let (h, w, n) = (height, width, height * width);

    let before = latent_field(&mut rng, h, w, profiles, &vec![0.0; profiles.latent_channels]);
    let redrawn = latent_field(&mut rng, h, w, profiles, &profiles.change_shift);
    let gt = change_disks(&mut rng, h, w, change_fraction)?;
    let after: Vec<Vec<f64>> = before
        .iter()
        .zip(&redrawn)
        .map(|(b, r)| {
            (0..n)
                .map(|i| if gt.data()[i] == 1 { r[i] } else { b[i] })
                .collect()
        })
        .collect();

    let cx = profiles.x_channels();
    let noise = Normal::new(0.0, profiles.x_noise_std.max(f64::MIN_POSITIVE)).expect("valid std");
    let mut x = vec![0.0f32; n * cx];
    for i in 0..n {
        for (c, (row, off)) in profiles.x_mix.iter().zip(&profiles.x_offset).enumerate() {
            let lin: f64 = row.iter().zip(&before).map(|(a, l)| a * l[i]).sum::<f64>() + off;
            let v = lin.clamp(0.0, 1.0).powf(profiles.x_gamma) + noise.sample(&mut rng);
            x[i * cx + c] = v as f32;
        }
    }

    let speckle = Gamma::new(profiles.y_looks, 1.0 / profiles.y_looks).expect("valid gamma");
    let y: Vec<f32> = (0..n)
        .map(|i| {
            let s: f64 = profiles
                .y_weights
                .iter()
                .zip(&after)
                .map(|(a, l)| a * (l[i] - 0.5))
                .sum();
            let mean = 1.0 / (1.0 + (-profiles.y_gain * s).exp());
            (mean * speckle.sample(&mut rng)).sqrt() as f32
        })
        .collect();

    let provenance = format!("synthetic seed={seed} fraction={change_fraction}");
    let x = super::normalize(&RasterImage::new(h, w, cx, x)?.with_provenance(provenance.clone()));
    let y = super::normalize(&RasterImage::new(h, w, 1, y)?.with_provenance(provenance));
    Ok(SyntheticScene {
        x,
        y,
        gt,
        seed,
        change_fraction,
    })
}

/// Writes `x.raw`, `y.raw`, `gt.png` and `meta.json` into `dir`.
pub fn save_scene(dir: &Path, scene: &SyntheticScene) -> Result<()> {
    fs::create_dir_all(dir)?;
    save_raw(&dir.join("x.raw"), &scene.x)?;
    save_raw(&dir.join("y.raw"), &scene.y)?;
    save_binary_png(&dir.join("gt.png"), &scene.gt)?;
    let meta = serde_json::json!({
        "seed": scene.seed,
        "height": scene.gt.height(),
        "width": scene.gt.width(),
        "change_fraction": scene.change_fraction,
        "changed_pixels": scene.gt.count_ones(),
        "channels_x": scene.x.channels(),
        "channels_y": scene.y.channels(),
    });
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_scene(dir: &Path) -> Result<SyntheticScene> {
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    Ok(SyntheticScene {
        x: load_raw(&dir.join("x.raw"))?,
        y: load_raw(&dir.join("y.raw"))?,
        gt: load_binary_png(&dir.join("gt.png"))?,
        seed: meta["seed"].as_u64().unwrap_or(0),
        change_fraction: meta["change_fraction"].as_f64().unwrap_or(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_scene() {
        let p = SensorProfiles::default();
        let a = generate_synthetic_pair(3, 64, 80, 0.1, &p).unwrap();
        let b = generate_synthetic_pair(3, 64, 80, 0.1, &p).unwrap();
        assert_eq!(a.x.data(), b.x.data());
        assert_eq!(a.y.data(), b.y.data());
        assert_eq!(a.gt, b.gt);
        let c = generate_synthetic_pair(4, 64, 80, 0.1, &p).unwrap();
        assert_ne!(a.x.data(), c.x.data());
    }

    #[test]
    fn rejects_bad_requests() {
        let p = SensorProfiles::default();
        assert!(generate_synthetic_pair(1, 32, 64, 0.1, &p).is_err());
        assert!(generate_synthetic_pair(1, 64, 64, 0.5, &p).is_err());
        assert!(generate_synthetic_pair(1, 64, 64, 0.0, &p).is_err());
    }
}
