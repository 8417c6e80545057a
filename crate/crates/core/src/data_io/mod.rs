//! Raster loading, normalization and resampling, synthetic scenes, and the
//! on-disk artifact formats.

pub mod container;
pub mod synthetic;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::map::{BinaryMap, ScalarMap};
use crate::model::{Domain, Patch};
use crate::tensor::Tensor;

use container::{Container, NamedTensor};

pub use synthetic::{generate_synthetic_pair, SensorProfiles, SyntheticScene};

/// Channel-last `H×W×C` float32 raster.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
    /// Source path or generator description.
    pub provenance: String,
    /// Pass-through metadata such as GeoTIFF tags; never interpreted.
    pub metadata: BTreeMap<String, String>,
}

impl RasterImage {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::shape("raster dimensions must be positive"));
        }
        if data.len() != height * width * channels {
            return Err(Error::shape(format!(
                "{height}x{width}x{channels} raster needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
            provenance: String::new(),
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    /// Planar model input for `domain`. Values must already lie in [0, 1].
    pub fn to_patch(&self, domain: Domain) -> Result<Patch<f32>> {
        Patch::from_hwc(domain, self.height, self.width, self.channels, &self.data)
    }

    pub fn from_patch(patch: &Patch<f32>) -> Self {
        Self {
            height: patch.height(),
            width: patch.width(),
            channels: patch.channels(),
            data: patch.to_hwc(),
            provenance: String::new(),
            metadata: BTreeMap::new(),
        }
    }

    /// Planar `[C, H, W]` copy.
    pub fn to_tensor(&self) -> Tensor<f32> {
        let (h, w, c) = (self.height, self.width, self.channels);
        let mut out = vec![0.0; h * w * c];
        for (i, px) in self.data.chunks(c).enumerate() {
            for (ch, &v) in px.iter().enumerate() {
                out[ch * h * w + i] = v;
            }
        }
        Tensor::from_vec(&[c, h, w], out)
    }

    fn replace_non_finite(&mut self) -> usize {
        let c = self.channels;
        let mut replaced = 0;
        for ch in 0..c {
            let min = self
                .data
                .iter()
                .skip(ch)
                .step_by(c)
                .filter(|v| v.is_finite())
                .fold(f32::INFINITY, |a, &b| a.min(b));
            let fill = if min.is_finite() { min } else { 0.0 };
            for v in self.data.iter_mut().skip(ch).step_by(c) {
                if !v.is_finite() {
                    *v = fill;
                    replaced += 1;
                }
            }
        }
        replaced
    }
}

/// Per-channel min–max scaling to [0, 1]. Constant channels map to zero.
pub fn normalize(img: &RasterImage) -> RasterImage {
    let c = img.channels;
    let mut out = img.clone();
    for ch in 0..c {
        let (lo, hi) = img
            .data
            .iter()
            .skip(ch)
            .step_by(c)
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let range = hi - lo;
        for v in out.data.iter_mut().skip(ch).step_by(c) {
            *v = if range > 0.0 {
                ((*v - lo) / range).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
        if !(range > 0.0) {
            warn!("channel {ch} of '{}' is constant; normalized to zero", img.provenance);
        }
    }
    out
}

/// Bilinear resampling with half-pixel centers, channel by channel.
pub fn resample(img: &RasterImage, target_h: usize, target_w: usize) -> Result<RasterImage> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::validation("resample targets must be at least 1"));
    }
    if (target_h, target_w) == img.dims() {
        return Ok(img.clone());
    }
    let (h, w, c) = (img.height, img.width, img.channels);
    let axis = |dst: usize, src_n: usize, dst_n: usize| {
        let scale = src_n as f64 / dst_n as f64;
        let pos = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_n - 1) as f64);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(src_n - 1);
        (i0, i1, pos - i0 as f64)
    };
    let cols: Vec<_> = (0..target_w).map(|x| axis(x, w, target_w)).collect();
    let mut data = Vec::with_capacity(target_h * target_w * c);
    for y in 0..target_h {
        let (y0, y1, fy) = axis(y, h, target_h);
        for &(x0, x1, fx) in &cols {
            for ch in 0..c {
                let p = |r: usize, q: usize| img.get(r, q, ch) as f64;
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bot = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                data.push((top * (1.0 - fy) + bot * fy) as f32);
            }
        }
    }
    let mut out = RasterImage::new(target_h, target_w, c, data)?;
    out.provenance = img.provenance.clone();
    out.metadata = img.metadata.clone();
    Ok(out)
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// Load a PNG, TIFF or raw-container raster. Integer samples are scaled by
/// the maximum of their type; float samples are kept as stored. Non-finite
/// samples are replaced by the channel minimum.
pub fn load_raster(path: &Path) -> Result<RasterImage> {
    let mut img = match extension(path).as_str() {
        "png" => load_png(path)?,
        "tif" | "tiff" => load_tiff(path)?,
        "raw" | "bin" => load_raw(path)?,
        other => {
            return Err(Error::Format(format!(
                "unsupported raster format '.{other}' for {}",
                path.display()
            )))
        }
    };
    img.provenance = path.display().to_string();
    let replaced = img.replace_non_finite();
    if replaced > 0 {
        warn!("{}: replaced {replaced} non-finite samples", path.display());
    }
    Ok(img)
}

fn load_png(path: &Path) -> Result<RasterImage> {
    let dynimg = image::ImageReader::open(path)?.decode()?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    let c = dynimg.color().channel_count() as usize;
    let data: Vec<f32> = match dynimg {
        image::DynamicImage::ImageLuma8(b) => b.into_raw().iter().map(|&v| v as f32 / 255.0).collect(),
        image::DynamicImage::ImageLumaA8(b) => b.into_raw().iter().map(|&v| v as f32 / 255.0).collect(),
        image::DynamicImage::ImageRgb8(b) => b.into_raw().iter().map(|&v| v as f32 / 255.0).collect(),
        image::DynamicImage::ImageRgba8(b) => b.into_raw().iter().map(|&v| v as f32 / 255.0).collect(),
        image::DynamicImage::ImageLuma16(b) => b.into_raw().iter().map(|&v| v as f32 / 65535.0).collect(),
        image::DynamicImage::ImageLumaA16(b) => b.into_raw().iter().map(|&v| v as f32 / 65535.0).collect(),
        image::DynamicImage::ImageRgb16(b) => b.into_raw().iter().map(|&v| v as f32 / 65535.0).collect(),
        image::DynamicImage::ImageRgba16(b) => b.into_raw().iter().map(|&v| v as f32 / 65535.0).collect(),
        other => other.to_rgb32f().into_raw(),
    };
    let c = if data.len() == h * w * c { c } else { 3 };
    RasterImage::new(h, w, c, data)
}

fn load_tiff(path: &Path) -> Result<RasterImage> {
    use tiff::decoder::{Decoder, DecodingResult, Limits};
    use tiff::tags::Tag;

    let mut dec = Decoder::new(BufReader::new(File::open(path)?))?.with_limits(Limits::unlimited());
    let (w, h) = dec.dimensions()?;
    let (w, h) = (w as usize, h as usize);
    let c = dec.colortype()?.num_samples() as usize;
    if c > 1 && dec.find_tag_unsigned::<u16>(Tag::PlanarConfiguration)? == Some(2) {
        return Err(Error::Format(format!(
            "{}: planar-separated multi-band TIFF is not supported",
            path.display()
        )));
    }
    let mut metadata = BTreeMap::new();
    for (name, tag) in [
        ("ModelPixelScale", Tag::ModelPixelScaleTag),
        ("ModelTiepoint", Tag::ModelTiepointTag),
        ("GeoKeyDirectory", Tag::GeoKeyDirectoryTag),
        ("GdalNodata", Tag::GdalNodata),
    ] {
        if let Some(v) = dec.find_tag(tag)? {
            metadata.insert(name.to_string(), format!("{v:?}"));
        }
    }
    let data: Vec<f32> = match dec.read_image()? {
        DecodingResult::U8(v) => v.iter().map(|&x| x as f32 / u8::MAX as f32).collect(),
        DecodingResult::U16(v) => v.iter().map(|&x| x as f32 / u16::MAX as f32).collect(),
        DecodingResult::U32(v) => v.iter().map(|&x| (x as f64 / u32::MAX as f64) as f32).collect(),
        DecodingResult::U64(v) => v.iter().map(|&x| (x as f64 / u64::MAX as f64) as f32).collect(),
        DecodingResult::I8(v) => v.iter().map(|&x| x as f32 / i8::MAX as f32).collect(),
        DecodingResult::I16(v) => v.iter().map(|&x| x as f32 / i16::MAX as f32).collect(),
        DecodingResult::I32(v) => v.iter().map(|&x| (x as f64 / i32::MAX as f64) as f32).collect(),
        DecodingResult::I64(v) => v.iter().map(|&x| (x as f64 / i64::MAX as f64) as f32).collect(),
        DecodingResult::F16(v) => v.iter().map(|&x| x.to_f32()).collect(),
        DecodingResult::F32(v) => v,
        DecodingResult::F64(v) => v.iter().map(|&x| x as f32).collect(),
    };
    let mut img = RasterImage::new(h, w, c, data)?;
    img.metadata = metadata;
    Ok(img)
}

const RASTER_TENSOR: &str = "raster";

pub fn load_raw(path: &Path) -> Result<RasterImage> {
    let c = container::read_container(path)?;
    let t = c.get(RASTER_TENSOR).ok_or_else(|| {
        Error::Format(format!("{}: no '{RASTER_TENSOR}' tensor", path.display()))
    })?;
    if t.shape.len() != 3 {
        return Err(Error::Format(format!(
            "{}: raster tensor must be [H, W, C], got {:?}",
            path.display(),
            t.shape
        )));
    }
    let mut img = RasterImage::new(t.shape[0], t.shape[1], t.shape[2], t.data.clone())?;
    if let Some(obj) = c.meta.get("metadata").and_then(|m| m.as_object()) {
        for (k, v) in obj {
            if let Some(s) = v.as_str() {
                img.metadata.insert(k.clone(), s.to_string());
            }
        }
    }
    Ok(img)
}

pub fn save_raw(path: &Path, img: &RasterImage) -> Result<()> {
    let container = Container {
        meta: serde_json::json!({
            "kind": "raster",
            "provenance": img.provenance,
            "metadata": img.metadata,
        }),
        tensors: vec![NamedTensor {
            name: RASTER_TENSOR.into(),
            shape: vec![img.height, img.width, img.channels],
            data: img.data.clone(),
        }],
    };
    container::write_container(path, &container)
}

/// A co-registered pair of acquisitions.
#[derive(Clone, Debug)]
pub struct ImagePair {
    pub x: RasterImage,
    pub y: RasterImage,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    /// Resample both images to `(height, width)`.
    pub resample_to: Option<(usize, usize)>,
    /// Apply per-channel min–max normalization after loading.
    pub normalize: bool,
}

pub fn load_pair(path_x: &Path, path_y: &Path, opts: LoadOptions) -> Result<ImagePair> {
    let mut x = load_raster(path_x)?;
    let mut y = load_raster(path_y)?;
    match opts.resample_to {
        Some((h, w)) => {
            x = resample(&x, h, w)?;
            y = resample(&y, h, w)?;
        }
        None if x.dims() != y.dims() => {
            return Err(Error::validation(format!(
                "image sizes differ: {:?} vs {:?} (pass a resample target)",
                x.dims(),
                y.dims()
            )))
        }
        None => {}
    }
    if opts.normalize {
        x = normalize(&x);
        y = normalize(&y);
    }
    Ok(ImagePair { x, y })
}

pub fn save_png_gray8(path: &Path, height: usize, width: usize, data: Vec<u8>) -> Result<()> {
    let buf = image::GrayImage::from_raw(width as u32, height as u32, data)
        .ok_or_else(|| Error::shape("gray image buffer has the wrong length"))?;
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Binary map as a 0/255 single-channel PNG.
pub fn save_binary_png(path: &Path, map: &BinaryMap) -> Result<()> {
    save_png_gray8(
        path,
        map.height(),
        map.width(),
        map.data().iter().map(|&v| v * 255).collect(),
    )
}

/// Reads a single-channel PNG; any nonzero pixel is 1.
pub fn load_binary_png(path: &Path) -> Result<BinaryMap> {
    let img = image::ImageReader::open(path)?.decode()?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    BinaryMap::new(h, w, img.into_raw().into_iter().map(|v| (v > 0) as u8).collect())
}

/// Min–max scaled 8-bit visualization of a real-valued map.
pub fn save_scalar_png(path: &Path, map: &ScalarMap) -> Result<()> {
    let (lo, hi) = map.min_max();
    let range = hi - lo;
    let data = map
        .data()
        .iter()
        .map(|&v| {
            if range > 0.0 {
                ((v - lo) / range * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect();
    save_png_gray8(path, map.height(), map.width(), data)
}

/// 8-bit PNG preview of a 1- or 3-channel raster in [0, 1].
pub fn save_raster_png(path: &Path, img: &RasterImage) -> Result<()> {
    let bytes: Vec<u8> = img
        .data
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let (w, h) = (img.width as u32, img.height as u32);
    match img.channels {
        1 => image::GrayImage::from_raw(w, h, bytes)
            .expect("length checked")
            .save_with_format(path, image::ImageFormat::Png)?,
        3 => image::RgbImage::from_raw(w, h, bytes)
            .expect("length checked")
            .save_with_format(path, image::ImageFormat::Png)?,
        c => {
            return Err(Error::Format(format!(
                "PNG preview needs 1 or 3 channels, raster has {c}"
            )))
        }
    }
    Ok(())
}

/// Difference image as a text header line `H W` followed by `H*W` float32
/// little-endian values, row-major.
pub fn save_difference_raw(path: &Path, di: &ScalarMap) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{} {}", di.height(), di.width())?;
    let mut buf = Vec::with_capacity(di.data().len() * 4);
    for &v in di.data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn load_difference_raw(path: &Path) -> Result<ScalarMap> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("difference image header missing".into()))?;
    let header = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| Error::Format("difference image header is not text".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| Error::Format(format!("bad header '{header}'"))))
        .collect::<Result<_>>()?;
    let [h, w] = dims[..] else {
        return Err(Error::Format(format!("bad header '{header}'")));
    };
    let payload = &bytes[nl + 1..];
    if payload.len() != h * w * 4 {
        return Err(Error::Format(format!(
            "difference image payload has {} bytes, expected {}",
            payload.len(),
            h * w * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    ScalarMap::new(h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raster(h: usize, w: usize, c: usize, f: impl Fn(usize) -> f32) -> RasterImage {
        RasterImage::new(h, w, c, (0..h * w * c).map(f).collect()).unwrap()
    }

    #[test]
    fn normalize_min_max_and_constant() {
        let img = RasterImage::new(1, 3, 2, vec![10.0, 5.0, 20.0, 5.0, 30.0, 5.0]).unwrap();
        let n = normalize(&img);
        assert_eq!(n.get(0, 1, 0), 0.5);
        assert_eq!(n.get(0, 0, 0), 0.0);
        assert_eq!(n.get(0, 2, 0), 1.0);
        assert!((0..3).all(|c| n.get(0, c, 1) == 0.0));
    }

    #[test]
    fn normalize_keeps_unit_range_channels() {
        let img = raster(4, 4, 1, |i| i as f32 / 15.0);
        let n = normalize(&img);
        for (a, b) in img.data().iter().zip(n.data()) {
            assert!((a - b).abs() <= 1e-7);
        }
    }

    #[test]
    fn resample_checkerboard_to_one_pixel() {
        let img = RasterImage::new(2, 2, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let r = resample(&img, 1, 1).unwrap();
        assert_eq!(r.data(), &[0.5]);
        let same = resample(&img, 2, 2).unwrap();
        assert_eq!(same, img);
    }

    #[test]
    fn resample_quarter_size() {
        let img = raster(40, 24, 3, |i| (i % 7) as f32);
        let r = resample(&img, 10, 6).unwrap();
        assert_eq!((r.height(), r.width(), r.channels()), (10, 6, 3));
        assert!(resample(&img, 0, 6).is_err());
    }

    #[test]
    fn difference_raw_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("di.raw");
        let di = ScalarMap::new(2, 3, vec![0.0, 0.5, 1.25, 3.0, 4.5, 100.0]).unwrap();
        save_difference_raw(&p, &di).unwrap();
        assert_eq!(load_difference_raw(&p).unwrap(), di);
    }
}
