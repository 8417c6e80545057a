//! The six networks: per-domain content encoders, style encoders and
//! AdaIN decoders.
//!
//! Content encoder: five stride-1 3×3 convolutions (ReLU, tanh on the last),
//! resolution preserving. Style encoder: four stride-2 3×3 convolutions with
//! ReLU and global average pooling. Decoder: a style MLP
//! (`style -> hidden -> hidden -> AdaIN params`) and a feature fusion block of
//! two residual blocks (`conv -> AdaIN -> ReLU -> conv -> ReLU`, skip add)
//! followed by a 3×3 convolution to the domain channel count and a sigmoid.
//!
//! Tensors are planar `[C, H, W]`; [`Patch::from_hwc`] and [`Patch::to_hwc`]
//! convert from and to channel-last rasters.

use std::sync::Arc;

use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::autograd::{Eager, Exec, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    X,
    Y,
}

impl Domain {
    pub fn index(self) -> usize {
        match self {
            Domain::X => 0,
            Domain::Y => 1,
        }
    }

    pub fn other(self) -> Domain {
        match self {
            Domain::X => Domain::Y,
            Domain::Y => Domain::X,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Domain::X => "x",
            Domain::Y => "y",
        }
    }
}

/// Layer widths of all six networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub channels_x: usize,
    pub channels_y: usize,
    /// Output widths of the five content-encoder layers; the last is the
    /// content code width.
    pub content_widths: Vec<usize>,
    /// Output widths of the four style-encoder layers; the last is the style
    /// code length.
    pub style_widths: Vec<usize>,
    pub mlp_hidden: usize,
    /// Width of the fusion-block convolutions; equals the content width.
    pub ffb_width: usize,
    pub kernel: (usize, usize),
    pub epsilon: f64,
}

impl ArchConfig {
    /// Full-size network: content 32-64-128-128-128, style 32-64-128-256,
    /// MLP hidden 1024, fusion width 128.
    pub fn new(channels_x: usize, channels_y: usize) -> Self {
        Self::scaled(channels_x, channels_y, 128, 256, 128, 1024)
    }

    /// Network with the same layer pattern at reduced widths. Content widths
    /// are `[c/4, c/2, c, c, c]`, style widths `[s/8, s/4, s/2, s]`.
    pub fn scaled(
        channels_x: usize,
        channels_y: usize,
        content: usize,
        style: usize,
        ffb: usize,
        mlp_hidden: usize,
    ) -> Self {
        Self {
            channels_x,
            channels_y,
            content_widths: vec![content / 4, content / 2, content, content, content],
            style_widths: vec![style / 8, style / 4, style / 2, style],
            mlp_hidden,
            ffb_width: ffb,
            kernel: (3, 3),
            epsilon: 1e-5,
        }
    }

    pub fn channels(&self, domain: Domain) -> usize {
        match domain {
            Domain::X => self.channels_x,
            Domain::Y => self.channels_y,
        }
    }

    pub fn content_channels(&self) -> usize {
        *self.content_widths.last().unwrap_or(&0)
    }

    pub fn style_dim(&self) -> usize {
        *self.style_widths.last().unwrap_or(&0)
    }

    /// One `(gamma, eta)` pair per residual block.
    pub fn adain_param_count(&self) -> usize {
        FFB_BLOCKS * 2 * self.ffb_width
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels_x == 0 || self.channels_y == 0 {
            return Err(Error::config("domain channel counts must be positive"));
        }
        if self.content_widths.len() != CONTENT_LAYERS {
            return Err(Error::config(format!(
                "content encoder needs {CONTENT_LAYERS} widths, got {}",
                self.content_widths.len()
            )));
        }
        if self.style_widths.len() != STYLE_LAYERS {
            return Err(Error::config(format!(
                "style encoder needs {STYLE_LAYERS} widths, got {}",
                self.style_widths.len()
            )));
        }
        if self
            .content_widths
            .iter()
            .chain(&self.style_widths)
            .chain([&self.mlp_hidden, &self.ffb_width])
            .any(|&w| w == 0)
        {
            return Err(Error::config("layer widths must be positive"));
        }
        if self.kernel.0 != self.kernel.1 {
            return Err(Error::config(format!(
                "kernels must be square, got {}x{}",
                self.kernel.0, self.kernel.1
            )));
        }
        if self.kernel.0 % 2 == 0 {
            return Err(Error::config("kernel size must be odd"));
        }
        if self.ffb_width != self.content_channels() {
            return Err(Error::config(format!(
                "fusion block width {} must equal the content code width {}",
                self.ffb_width,
                self.content_channels()
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("AdaIN epsilon must be positive"));
        }
        Ok(())
    }
}

const CONTENT_LAYERS: usize = 5;
const STYLE_LAYERS: usize = 4;
const FFB_BLOCKS: usize = 2;
const MLP_LAYERS: usize = 3;

#[derive(Clone, Copy, Debug)]
struct Layer {
    w: ParamId,
    b: ParamId,
}

#[derive(Clone, Debug)]
struct DecoderLayout {
    mlp: Vec<Layer>,
    blocks: Vec<(Layer, Layer)>,
    out: Layer,
}

#[derive(Clone, Debug)]
struct Layout {
    content: [Vec<Layer>; 2],
    style: [Vec<Layer>; 2],
    decoder: [DecoderLayout; 2],
}

struct TensorSpec {
    name: String,
    shape: Vec<usize>,
    fan_in: usize,
}

struct LayoutBuilder {
    specs: Vec<TensorSpec>,
}

impl LayoutBuilder {
    fn layer(&mut self, name: String, shape: Vec<usize>, fan_in: usize, out: usize) -> Layer {
        let w = self.specs.len();
        self.specs.push(TensorSpec {
            name: format!("{name}.weight"),
            shape,
            fan_in,
        });
        self.specs.push(TensorSpec {
            name: format!("{name}.bias"),
            shape: vec![out],
            fan_in,
        });
        Layer { w, b: w + 1 }
    }

    fn conv(&mut self, name: String, c_in: usize, c_out: usize, k: usize) -> Layer {
        self.layer(name, vec![c_out, c_in, k, k], c_in * k * k, c_out)
    }

    fn dense(&mut self, name: String, n_in: usize, n_out: usize) -> Layer {
        self.layer(name, vec![n_out, n_in], n_in, n_out)
    }
}

fn build_layout(arch: &ArchConfig) -> (Layout, Vec<TensorSpec>) {
    let k = arch.kernel_size();
    let mut b = LayoutBuilder { specs: Vec::new() };
    let mut content = [Vec::new(), Vec::new()];
    let mut style = [Vec::new(), Vec::new()];
    for d in [Domain::X, Domain::Y] {
        let mut c_in = arch.channels(d);
        for (i, &w) in arch.content_widths.iter().enumerate() {
            content[d.index()].push(b.conv(format!("content_{}.conv{i}", d.tag()), c_in, w, k));
            c_in = w;
        }
        let mut c_in = arch.channels(d);
        for (i, &w) in arch.style_widths.iter().enumerate() {
            style[d.index()].push(b.conv(format!("style_{}.conv{i}", d.tag()), c_in, w, k));
            c_in = w;
        }
    }
    let mut decoders = Vec::new();
    for d in [Domain::X, Domain::Y] {
        let tag = d.tag();
        let dims = [
            arch.style_dim(),
            arch.mlp_hidden,
            arch.mlp_hidden,
            arch.adain_param_count(),
        ];
        let mlp = (0..MLP_LAYERS)
            .map(|i| b.dense(format!("decoder_{tag}.mlp{i}"), dims[i], dims[i + 1]))
            .collect();
        let f = arch.ffb_width;
        let blocks = (0..FFB_BLOCKS)
            .map(|i| {
                (
                    b.conv(format!("decoder_{tag}.block{i}.conv0"), f, f, k),
                    b.conv(format!("decoder_{tag}.block{i}.conv1"), f, f, k),
                )
            })
            .collect();
        let out = b.conv(format!("decoder_{tag}.out"), f, arch.channels(d), k);
        decoders.push(DecoderLayout { mlp, blocks, out });
    }
    let [dx, dy]: [DecoderLayout; 2] = decoders.try_into().expect("two decoders");
    (
        Layout {
            content,
            style,
            decoder: [dx, dy],
        },
        b.specs,
    )
}

/// Weights and biases of all six networks.
#[derive(Clone, Debug)]
pub struct ModelParameters<T> {
    arch: ArchConfig,
    names: Vec<String>,
    tensors: Vec<Arc<Tensor<T>>>,
    layout: Layout,
}

impl<T> ParamStore<T> for ModelParameters<T> {
    fn tensor(&self, id: ParamId) -> &Arc<Tensor<T>> {
        &self.tensors[id]
    }

    fn count(&self) -> usize {
        self.tensors.len()
    }
}

impl<T: Real> ModelParameters<T> {
    /// Assemble parameters from named tensors, e.g. a loaded checkpoint.
    /// Names and shapes must match the layout implied by `arch`.
    pub fn from_named(arch: ArchConfig, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        arch.validate()?;
        let (layout, specs) = build_layout(&arch);
        if named.len() != specs.len() {
            return Err(Error::Format(format!(
                "expected {} parameter tensors, found {}",
                specs.len(),
                named.len()
            )));
        }
        let mut names = Vec::with_capacity(specs.len());
        let mut tensors = Vec::with_capacity(specs.len());
        for (spec, (name, t)) in specs.iter().zip(named) {
            if spec.name != name || spec.shape != t.shape() {
                return Err(Error::Format(format!(
                    "parameter '{name}' {:?} does not match expected '{}' {:?}",
                    t.shape(),
                    spec.name,
                    spec.shape
                )));
            }
            if !t.all_finite() {
                return Err(Error::Numerical(format!("parameter '{name}' is not finite")));
            }
            names.push(name);
            tensors.push(Arc::new(t));
        }
        Ok(Self {
            arch,
            names,
            tensors,
            layout,
        })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.tensors.iter().map(|t| &**t)
    }

    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(|s| s.as_str()).zip(self.tensors())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// Mutable access for optimizers; clones the tensor if it is shared.
    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        Arc::make_mut(&mut self.tensors[id])
    }

    pub fn epsilon(&self) -> T {
        T::from_f64_lossy(self.arch.epsilon)
    }

    pub fn cast<U: Real>(&self) -> ModelParameters<U> {
        ModelParameters {
            arch: self.arch.clone(),
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Arc::new(t.cast())).collect(),
            layout: self.layout.clone(),
        }
    }

    /// Kernel shape `(kh, kw)` and output width of each content-encoder layer.
    pub fn content_layer_shapes(&self, domain: Domain) -> Vec<((usize, usize), usize)> {
        self.layout.content[domain.index()]
            .iter()
            .map(|l| {
                let s = self.tensors[l.w].shape();
                ((s[2], s[3]), s[0])
            })
            .collect()
    }

    /// Bound `sqrt(1 / fan_in)` of every weight tensor, by parameter id.
    pub fn init_bounds(&self) -> Vec<(ParamId, T)> {
        let (_, specs) = build_layout(&self.arch);
        specs
            .iter()
            .enumerate()
            .filter(|(_, s)| s.name.ends_with(".weight"))
            .map(|(i, s)| (i, init_bound::<T>(s.fan_in)))
            .collect()
    }

    pub fn is_bias(&self, id: ParamId) -> bool {
        self.names[id].ends_with(".bias")
    }
}

fn init_bound<T: Real>(fan_in: usize) -> T {
    (T::one() / T::from_usize(fan_in).unwrap()).sqrt()
}

/// Seeded fan-in scaled uniform initialization: weights drawn from
/// `U(-b, b)` with `b = sqrt(1 / fan_in)`, biases zero.
pub fn init_parameters<T: Real>(seed: u64, arch: &ArchConfig) -> Result<ModelParameters<T>> {
    arch.validate()?;
    let (layout, specs) = build_layout(arch);
    let mut rng = stream(seed, Stream::Init);
    let unit = Uniform::new_inclusive(-1.0f64, 1.0).expect("valid range");
    let mut names = Vec::with_capacity(specs.len());
    let mut tensors = Vec::with_capacity(specs.len());
    for spec in specs {
        let t = if spec.name.ends_with(".bias") {
            Tensor::zeros(&spec.shape)
        } else {
            let bound = init_bound::<T>(spec.fan_in);
            Tensor::from_fn(&spec.shape, |_| {
                T::from_f64_lossy(unit.sample(&mut rng)) * bound
            })
        };
        names.push(spec.name);
        tensors.push(Arc::new(t));
    }
    Ok(ModelParameters {
        arch: arch.clone(),
        names,
        tensors,
        layout,
    })
}

/// Image or patch of one domain, planar `[C, H, W]`, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch<T = f32> {
    domain: Domain,
    data: Tensor<T>,
}

impl<T: Real> Patch<T> {
    pub fn new(domain: Domain, data: Tensor<T>) -> Result<Self> {
        if data.shape().len() != 3 {
            return Err(Error::shape(format!(
                "patch must be [C, H, W], got {:?}",
                data.shape()
            )));
        }
        if let Some(v) = data
            .data()
            .iter()
            .find(|v| !v.is_finite() || **v < T::zero() || **v > T::one())
        {
            return Err(Error::validation(format!(
                "patch values must be finite and within [0, 1], found {v}"
            )));
        }
        Ok(Self { domain, data })
    }

    /// From a channel-last `h×w×c` buffer.
    pub fn from_hwc(domain: Domain, h: usize, w: usize, c: usize, hwc: &[T]) -> Result<Self> {
        if hwc.len() != h * w * c {
            return Err(Error::shape(format!(
                "{h}x{w}x{c} patch needs {} values, got {}",
                h * w * c,
                hwc.len()
            )));
        }
        let mut planar = vec![T::zero(); hwc.len()];
        for (i, px) in hwc.chunks(c).enumerate() {
            for (ch, &v) in px.iter().enumerate() {
                planar[ch * h * w + i] = v;
            }
        }
        Self::new(domain, Tensor::from_vec(&[c, h, w], planar))
    }

    pub fn to_hwc(&self) -> Vec<T> {
        let (c, h, w) = self.data.chw();
        let mut out = vec![T::zero(); c * h * w];
        for ch in 0..c {
            for i in 0..h * w {
                out[i * c + ch] = self.data.data()[ch * h * w + i];
            }
        }
        out
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.data
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }

    /// Decoder output is sigmoid-bounded, so it is a valid patch by
    /// construction.
    pub(crate) fn from_decoder(domain: Domain, data: Tensor<T>) -> Self {
        Self { domain, data }
    }
}

/// Per-pixel content code `[C, H, W]` with values in (-1, 1).
#[derive(Clone, Debug, PartialEq)]
pub struct ContentCode<T = f32>(pub Tensor<T>);

/// Global style vector.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleCode<T = f32>(pub Tensor<T>);

impl<T> ContentCode<T> {
    pub fn tensor(&self) -> &Tensor<T> {
        &self.0
    }
}

impl<T> StyleCode<T> {
    pub fn tensor(&self) -> &Tensor<T> {
        &self.0
    }
}

// ---- network definitions, shared by the eager and taped interpreters ----

pub(crate) fn content_net<T: Real, E: Exec<T>>(
    ex: &mut E,
    params: &ModelParameters<T>,
    domain: Domain,
    x: &E::Var,
) -> E::Var {
    let pad = params.arch.kernel_size() / 2;
    let layers = &params.layout.content[domain.index()];
    let mut h = x.clone();
    for (i, l) in layers.iter().enumerate() {
        let (w, b) = (ex.param(l.w), ex.param(l.b));
        let z = ex.conv2d(&h, &w, &b, 1, pad);
        h = if i + 1 == layers.len() {
            ex.tanh(&z)
        } else {
            ex.relu(&z)
        };
    }
    h
}

pub(crate) fn style_net<T: Real, E: Exec<T>>(
    ex: &mut E,
    params: &ModelParameters<T>,
    domain: Domain,
    x: &E::Var,
) -> E::Var {
    let pad = params.arch.kernel_size() / 2;
    let mut h = x.clone();
    for l in &params.layout.style[domain.index()] {
        let (w, b) = (ex.param(l.w), ex.param(l.b));
        let z = ex.conv2d(&h, &w, &b, 2, pad);
        h = ex.relu(&z);
    }
    ex.global_avg_pool(&h)
}

pub(crate) fn decoder_net<T: Real, E: Exec<T>>(
    ex: &mut E,
    params: &ModelParameters<T>,
    domain: Domain,
    content: &E::Var,
    style: &E::Var,
) -> E::Var {
    let pad = params.arch.kernel_size() / 2;
    let eps = params.epsilon();
    let dec = &params.layout.decoder[domain.index()];

    let mut s = style.clone();
    for (i, l) in dec.mlp.iter().enumerate() {
        let (w, b) = (ex.param(l.w), ex.param(l.b));
        s = ex.linear(&s, &w, &b);
        if i + 1 < dec.mlp.len() {
            s = ex.relu(&s);
        }
    }

    let f = params.arch.ffb_width;
    let mut h = content.clone();
    for (i, (c0, c1)) in dec.blocks.iter().enumerate() {
        let gamma = ex.narrow(&s, 2 * i * f, f);
        let eta = ex.narrow(&s, (2 * i + 1) * f, f);
        let (w, b) = (ex.param(c0.w), ex.param(c0.b));
        let a = ex.conv2d(&h, &w, &b, 1, pad);
        let a = ex.adain(&a, &gamma, &eta, eps);
        let a = ex.relu(&a);
        let (w, b) = (ex.param(c1.w), ex.param(c1.b));
        let a = ex.conv2d(&a, &w, &b, 1, pad);
        let a = ex.relu(&a);
        h = ex.add(&h, &a);
    }
    let (w, b) = (ex.param(dec.out.w), ex.param(dec.out.b));
    let out = ex.conv2d(&h, &w, &b, 1, pad);
    ex.sigmoid(&out)
}

// ---- validated public API ----

fn check_patch<T: Real>(params: &ModelParameters<T>, patch: &Patch<T>) -> Result<()> {
    let want = params.arch.channels(patch.domain());
    if patch.channels() != want {
        return Err(Error::shape(format!(
            "domain {:?} expects {want} channels, patch has {}",
            patch.domain(),
            patch.channels()
        )));
    }
    if patch.height() == 0 || patch.width() == 0 {
        return Err(Error::shape("patch has an empty spatial extent"));
    }
    Ok(())
}

pub fn content_encode<T: Real>(params: &ModelParameters<T>, patch: &Patch<T>) -> Result<ContentCode<T>> {
    check_patch(params, patch)?;
    let mut ex = Eager::new(params);
    let x = ex.constant(patch.tensor().clone());
    let c = content_net(&mut ex, params, patch.domain(), &x);
    Ok(ContentCode(Arc::unwrap_or_clone(c)))
}

pub fn style_encode<T: Real>(params: &ModelParameters<T>, patch: &Patch<T>) -> Result<StyleCode<T>> {
    check_patch(params, patch)?;
    let mut ex = Eager::new(params);
    let x = ex.constant(patch.tensor().clone());
    let s = style_net(&mut ex, params, patch.domain(), &x);
    Ok(StyleCode(Arc::unwrap_or_clone(s)))
}

/// Adaptive instance normalization of a `[C, H, W]` map:
/// `gamma * (z - mean) / (std + epsilon) + eta` per channel, with population
/// statistics over spatial positions.
pub fn adain<T: Real>(z: &Tensor<T>, gamma: &[T], eta: &[T], epsilon: T) -> Result<Tensor<T>> {
    if z.shape().len() != 3 {
        return Err(Error::shape(format!("adain expects [C, H, W], got {:?}", z.shape())));
    }
    let c = z.shape()[0];
    if gamma.len() != c || eta.len() != c {
        return Err(Error::shape(format!(
            "adain: {c} channels but gamma/eta have lengths {}/{}",
            gamma.len(),
            eta.len()
        )));
    }
    if !(epsilon > T::zero()) {
        return Err(Error::Domain("adain epsilon must be positive".into()));
    }
    Ok(crate::ops::adain(z, gamma, eta, epsilon))
}

pub fn decode<T: Real>(
    params: &ModelParameters<T>,
    content: &ContentCode<T>,
    style: &StyleCode<T>,
    domain: Domain,
) -> Result<Patch<T>> {
    let cs = content.tensor().shape();
    if cs.len() != 3 || cs[0] != params.arch.content_channels() {
        return Err(Error::shape(format!(
            "content code must be [{}, H, W], got {cs:?}",
            params.arch.content_channels()
        )));
    }
    if style.tensor().shape() != [params.arch.style_dim()] {
        return Err(Error::shape(format!(
            "style code must have length {}, got {:?}",
            params.arch.style_dim(),
            style.tensor().shape()
        )));
    }
    let mut ex = Eager::new(params);
    let c = ex.constant(content.tensor().clone());
    let s = ex.constant(style.tensor().clone());
    let out = decoder_net(&mut ex, params, domain, &c, &s);
    Ok(Patch::from_decoder(domain, Arc::unwrap_or_clone(out)))
}

fn check_pair<T: Real>(params: &ModelParameters<T>, x: &Patch<T>, y: &Patch<T>) -> Result<()> {
    if x.domain() != Domain::X || y.domain() != Domain::Y {
        return Err(Error::validation("expected an (X, Y) patch pair"));
    }
    check_patch(params, x)?;
    check_patch(params, y)?;
    if (x.height(), x.width()) != (y.height(), y.width()) {
        return Err(Error::shape(format!(
            "spatial dims differ: {}x{} vs {}x{}",
            x.height(),
            x.width(),
            y.height(),
            y.width()
        )));
    }
    Ok(())
}

/// Cross-domain translation: `X^ = D_X(C_Y, S_X)`, `Y^ = D_Y(C_X, S_Y)`.
pub fn translate<T: Real>(
    params: &ModelParameters<T>,
    x: &Patch<T>,
    y: &Patch<T>,
) -> Result<(Patch<T>, Patch<T>)> {
    check_pair(params, x, y)?;
    let cx = content_encode(params, x)?;
    let cy = content_encode(params, y)?;
    let sx = style_encode(params, x)?;
    let sy = style_encode(params, y)?;
    Ok((
        decode(params, &cy, &sx, Domain::X)?,
        decode(params, &cx, &sy, Domain::Y)?,
    ))
}

/// Within-domain reconstruction: `X~ = D_X(C_X, S_X)`, `Y~ = D_Y(C_Y, S_Y)`.
pub fn reconstruct<T: Real>(
    params: &ModelParameters<T>,
    x: &Patch<T>,
    y: &Patch<T>,
) -> Result<(Patch<T>, Patch<T>)> {
    check_pair(params, x, y)?;
    let cx = content_encode(params, x)?;
    let cy = content_encode(params, y)?;
    let sx = style_encode(params, x)?;
    let sy = style_encode(params, y)?;
    Ok((
        decode(params, &cx, &sx, Domain::X)?,
        decode(params, &cy, &sy, Domain::Y)?,
    ))
}
