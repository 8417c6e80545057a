//! Alternating optimization: Adam over shuffled, augmented patch triples
//! with the change mask held fixed, then a whole-image refresh of the mask
//! from the current model.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_io::container::{self, Container, NamedTensor};
use crate::detector::{binarize, grid_origins, otsu_threshold, raw_difference};
use crate::error::{Error, Result};
use crate::losses::{LossBreakdown, LossToggles};
use crate::map::{BinaryMap, ChangeMask};
use crate::model::{init_parameters, ArchConfig, Domain, ModelParameters, Patch};
use crate::objective;
use crate::rng::{stream, Rng, Stream};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub patch_size: usize,
    pub stride: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub epochs_per_iteration: usize,
    pub iterations: usize,
    pub seed: u64,
    pub augment: bool,
    #[serde(skip)]
    pub toggles: LossToggles,
    /// Threads used for per-sample gradients within a batch. Results do not
    /// depend on this value.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            patch_size: 64,
            stride: 56,
            learning_rate: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            adam_epsilon: 1e-8,
            batch_size: 32,
            epochs_per_iteration: 10,
            iterations: 2,
            seed: 0,
            augment: true,
            toggles: LossToggles::default(),
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.patch_size < self.stride {
            return Err(Error::config(format!(
                "need patch_size >= stride > 0, got {} and {}",
                self.patch_size, self.stride
            )));
        }
        if self.batch_size == 0 || self.epochs_per_iteration == 0 || self.workers == 0 {
            return Err(Error::config("batch size, epochs per iteration and workers must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(Error::config("adam epsilon must be positive"));
        }
        Ok(())
    }
}

/// Top-left corners of the training patches: the stride grid along each
/// axis plus a final border-aligned origin.
pub fn patch_origins(height: usize, width: usize, size: usize, stride: usize) -> Result<Vec<(usize, usize)>> {
    if size == 0 || stride == 0 {
        return Err(Error::config("patch size and stride must be positive"));
    }
    if height < size || width < size {
        return Err(Error::shape(format!(
            "{height}x{width} image is smaller than the {size}x{size} patch"
        )));
    }
    let rows = grid_origins(height, size, stride);
    let cols = grid_origins(width, size, stride);
    Ok(rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
        .collect())
}

fn crop_patch(image: &Patch<f32>, (r0, c0): (usize, usize), size: usize) -> Patch<f32> {
    let (c, h, w) = image.tensor().chw();
    let src = image.tensor().data();
    let mut out = Vec::with_capacity(c * size * size);
    for ch in 0..c {
        for r in r0..r0 + size {
            let base = (ch * h + r) * w + c0;
            out.extend_from_slice(&src[base..base + size]);
        }
    }
    Patch::new(image.domain(), Tensor::from_vec(&[c, size, size], out)).expect("crop of a valid image")
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPatch {
    pub image: Patch<f32>,
    pub mask: BinaryMap,
    pub origin: (usize, usize),
}

/// Square crops of `image` with the co-located mask crops.
pub fn extract_patches(
    image: &Patch<f32>,
    mask: &BinaryMap,
    size: usize,
    stride: usize,
) -> Result<Vec<TrainingPatch>> {
    if mask.dims() != (image.height(), image.width()) {
        return Err(Error::shape(format!(
            "mask {:?} does not match the {}x{} image",
            mask.dims(),
            image.height(),
            image.width()
        )));
    }
    Ok(patch_origins(image.height(), image.width(), size, stride)?
        .into_iter()
        .map(|origin| TrainingPatch {
            image: crop_patch(image, origin, size),
            mask: mask.crop(origin.0, origin.1, size, size),
            origin,
        })
        .collect())
}

/// One of the eight symmetries of the square: a counter-clockwise rotation
/// by `quarter_turns · 90°` followed by optional horizontal and vertical
/// flips.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Transform {
    pub quarter_turns: u8,
    pub hflip: bool,
    pub vflip: bool,
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        quarter_turns: 0,
        hflip: false,
        vflip: false,
    };

    pub fn random(rng: &mut Rng) -> Self {
        Self {
            quarter_turns: rng.random_range(0..4),
            hflip: rng.random(),
            vflip: rng.random(),
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    /// Source coordinate read for output `(r, c)` on an `n×n` grid.
    fn source(&self, n: usize, r: usize, c: usize) -> (usize, usize) {
        let (mut r, mut c) = (r, c);
        if self.vflip {
            r = n - 1 - r;
        }
        if self.hflip {
            c = n - 1 - c;
        }
        for _ in 0..self.quarter_turns % 4 {
            (r, c) = (c, n - 1 - r);
        }
        (r, c)
    }

    /// One representative of each of the eight symmetries.
    pub fn all() -> impl Iterator<Item = Transform> {
        (0..8u8).map(|i| Transform {
            quarter_turns: i / 2,
            hflip: i % 2 == 1,
            vflip: false,
        })
    }

    /// The symmetry that undoes this one.
    pub fn inverse(&self) -> Transform {
        let probe: Vec<u8> = (0..9).collect();
        let moved = self.apply_plane(&probe, 3);
        Transform::all()
            .find(|t| t.apply_plane(&moved, 3) == probe)
            .expect("the symmetries of the square form a group")
    }

    pub fn apply_plane<T: Copy>(&self, data: &[T], n: usize) -> Vec<T> {
        assert_eq!(data.len(), n * n, "transform needs a square plane");
        let mut out = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                let (sr, sc) = self.source(n, r, c);
                out.push(data[sr * n + sc]);
            }
        }
        out
    }

    pub fn apply_patch(&self, p: &Patch<f32>) -> Patch<f32> {
        if self.is_identity() {
            return p.clone();
        }
        let (c, h, w) = p.tensor().chw();
        assert_eq!(h, w, "augmentation needs square patches");
        let mut out = Vec::with_capacity(c * h * w);
        for plane in p.tensor().data().chunks(h * w) {
            out.extend(self.apply_plane(plane, h));
        }
        Patch::new(p.domain(), Tensor::from_vec(&[c, h, w], out)).expect("permutation of a valid patch")
    }

    pub fn apply_mask(&self, m: &BinaryMap) -> BinaryMap {
        if self.is_identity() {
            return m.clone();
        }
        let (h, w) = m.dims();
        assert_eq!(h, w, "augmentation needs square masks");
        BinaryMap::new(h, w, self.apply_plane(m.data(), h)).expect("permutation of a binary map")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Augmented {
    pub x: Patch<f32>,
    pub y: Patch<f32>,
    pub mask: BinaryMap,
    pub transform: Transform,
}

/// Draws one symmetry and applies it to all three inputs.
pub fn augment(x: &Patch<f32>, y: &Patch<f32>, mask: &BinaryMap, rng: &mut Rng) -> Augmented {
    let t = Transform::random(rng);
    Augmented {
        x: t.apply_patch(x),
        y: t.apply_patch(y),
        mask: t.apply_mask(mask),
        transform: t,
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Tensor<f32>>,
    v: Vec<Tensor<f32>>,
}

impl Adam {
    pub fn new(params: &ModelParameters<f32>, learning_rate: f64, (beta1, beta2): (f64, f64), epsilon: f64) -> Self {
        let zeros: Vec<Tensor<f32>> = params.tensors().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Tensor<f32>], &[Tensor<f32>]) {
        (&self.m, &self.v)
    }

    /// Fails without touching any state if a gradient is non-finite.
    pub fn step(&mut self, params: &mut ModelParameters<f32>, grads: &[Tensor<f32>]) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::shape(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.m.len()
            )));
        }
        for (g, m) in grads.iter().zip(&self.m) {
            if g.shape() != m.shape() {
                return Err(Error::shape(format!(
                    "gradient shape {:?} does not match parameter {:?}",
                    g.shape(),
                    m.shape()
                )));
            }
        }
        if let Some(i) = grads.iter().position(|g| !g.all_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient for parameter '{}'",
                params.names()[i]
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        for (id, g) in grads.iter().enumerate() {
            let m = self.m[id].data_mut();
            let v = self.v[id].data_mut();
            let p = params.tensor_mut(id).data_mut();
            for i in 0..g.len() {
                let gi = g.data()[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] as f64 / c1;
                let v_hat = v[i] as f64 / c2;
                p[i] -= (self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon)) as f32;
            }
        }
        Ok(())
    }
}

/// Whole-image change mask from the current model: unfiltered difference
/// image thresholded with Otsu's method.
pub fn update_change_mask(params: &ModelParameters<f32>, x: &Patch<f32>, y: &Patch<f32>) -> Result<ChangeMask> {
    let di = raw_difference(params, x, y)?;
    let t = otsu_threshold(&di)?;
    Ok(binarize(&di, t.threshold))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    /// 1-based.
    pub iteration: usize,
    /// 1-based within the iteration.
    pub epoch: usize,
    /// Sample means over the epoch.
    pub loss: LossBreakdown,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub params: ModelParameters<f32>,
    pub mask: ChangeMask,
    pub history: Vec<EpochLoss>,
    pub optimizer: Adam,
}

/// Uniform random binary mask.
pub fn random_mask(seed: u64, height: usize, width: usize) -> ChangeMask {
    let mut rng = stream(seed, Stream::Mask);
    BinaryMap::from_fn(height, width, |_, _| rng.random())
}

fn batch_gradients(
    params: &ModelParameters<f32>,
    samples: &[(Patch<f32>, Patch<f32>, BinaryMap)],
    toggles: LossToggles,
    pool: Option<&rayon::ThreadPool>,
) -> Result<Vec<(LossBreakdown, Vec<Tensor<f32>>)>> {
    let one = |s: &(Patch<f32>, Patch<f32>, BinaryMap)| objective::gradients(params, &s.0, &s.1, &s.2, toggles);
    match pool {
        Some(pool) => pool.install(|| samples.par_iter().map(one).collect()),
        None => samples.iter().map(one).collect(),
    }
}

/// Trains a freshly initialized model on one co-registered image pair.
pub fn fit(x: &Patch<f32>, y: &Patch<f32>, arch: &ArchConfig, config: &TrainConfig) -> Result<FitResult> {
    config.validate()?;
    arch.validate()?;
    if x.domain() != Domain::X || y.domain() != Domain::Y {
        return Err(Error::validation("expected an (X, Y) image pair"));
    }
    let (h, w) = (x.height(), x.width());
    if (y.height(), y.width()) != (h, w) {
        return Err(Error::shape(format!(
            "images differ in size: {h}x{w} vs {}x{}",
            y.height(),
            y.width()
        )));
    }
    let mut params = init_parameters::<f32>(config.seed, arch)?;
    let mut mask = random_mask(config.seed, h, w);
    let mut adam = Adam::new(&params, config.learning_rate, (config.beta1, config.beta2), config.adam_epsilon);
    let mut history = Vec::new();

    let origins = patch_origins(h, w, config.patch_size, config.stride)?;
    let size = config.patch_size;
    let px: Vec<Patch<f32>> = origins.iter().map(|&o| crop_patch(x, o, size)).collect();
    let py: Vec<Patch<f32>> = origins.iter().map(|&o| crop_patch(y, o, size)).collect();
    let mut shuffle_rng = stream(config.seed, Stream::Shuffle);
    let mut augment_rng = stream(config.seed, Stream::Augment);
    let pool = if config.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.workers)
                .build()
                .map_err(|e| Error::config(format!("could not start worker threads: {e}")))?,
        )
    } else {
        None
    };

    for iteration in 1..=config.iterations {
        let masks: Vec<BinaryMap> = origins.iter().map(|&(r, c)| mask.crop(r, c, size, size)).collect();
        for epoch in 1..=config.epochs_per_iteration {
            let mut order: Vec<usize> = (0..origins.len()).collect();
            order.shuffle(&mut shuffle_rng);
            let mut sum = LossBreakdown::default();
            for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
                let samples: Vec<_> = chunk
                    .iter()
                    .map(|&i| {
                        if config.augment {
                            let a = augment(&px[i], &py[i], &masks[i], &mut augment_rng);
                            (a.x, a.y, a.mask)
                        } else {
                            (px[i].clone(), py[i].clone(), masks[i].clone())
                        }
                    })
                    .collect();
                let diverged = |reason: String| Error::Training {
                    iteration,
                    epoch,
                    batch: batch + 1,
                    reason,
                };
                let results = batch_gradients(&params, &samples, config.toggles, pool.as_ref())?;
                let mut grads: Vec<Tensor<f32>> = params.tensors().map(|t| Tensor::zeros(t.shape())).collect();
                for (loss, g) in &results {
                    if !loss.total.is_finite() {
                        return Err(diverged(format!("loss is {}", loss.total)));
                    }
                    sum.accumulate(loss, 1.0);
                    for (acc, gi) in grads.iter_mut().zip(g) {
                        acc.add_assign(gi);
                    }
                }
                let inv = 1.0 / results.len() as f32;
                for g in &mut grads {
                    g.scale(inv);
                }
                adam.step(&mut params, &grads).map_err(|e| match e {
                    Error::Numerical(reason) => diverged(reason),
                    other => other,
                })?;
            }
            let mut mean = LossBreakdown::default();
            mean.accumulate(&sum, 1.0 / origins.len() as f64);
            info!(
                "iteration {iteration} epoch {epoch}: total {:.5} (recon {:.5}, trans {:.5}, cyc {:.5}, align {:.5})",
                mean.total, mean.recon, mean.trans, mean.cyc, mean.align
            );
            history.push(EpochLoss {
                iteration,
                epoch,
                loss: mean,
            });
        }
        mask = update_change_mask(&params, x, y)?;
        info!(
            "iteration {iteration}: change mask marks {} of {} pixels",
            mask.count_ones(),
            h * w
        );
    }
    Ok(FitResult {
        params,
        mask,
        history,
        optimizer: adam,
    })
}

pub fn write_loss_csv(path: &Path, history: &[EpochLoss]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "iteration,epoch,recon,trans,cyc,align,total")?;
    for e in history {
        let l = &e.loss;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            e.iteration, e.epoch, l.recon, l.trans, l.cyc, l.align, l.total
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_checkpoint(path: &Path, params: &ModelParameters<f32>) -> Result<()> {
    let c = Container {
        meta: serde_json::json!({ "kind": "checkpoint", "arch": params.arch() }),
        tensors: params
            .named()
            .map(|(name, t)| NamedTensor {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect(),
    };
    container::write_container(path, &c)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParameters<f32>> {
    let c = container::read_container(path)?;
    if c.meta.get("kind").and_then(|k| k.as_str()) != Some("checkpoint") {
        return Err(Error::Format(format!("{} is not a model checkpoint", path.display())));
    }
    let arch: ArchConfig = serde_json::from_value(c.meta["arch"].clone())?;
    let named = c
        .tensors
        .into_iter()
        .map(|t| (t.name, Tensor::from_vec(&t.shape, t.data)))
        .collect();
    ModelParameters::from_named(arch, named)
}
