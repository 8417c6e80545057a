//! Inference: content features of both acquisitions, the per-pixel difference
//! image, Gaussian smoothing, Otsu thresholding and the binary change map.

use log::warn;

use crate::error::{Error, Result};
use crate::map::{BinaryMap, ChangeMap, DifferenceImage, ScalarMap};
use crate::model::{content_encode, decode, style_encode, Domain, ModelParameters, Patch, StyleCode};
use crate::tensor::Tensor;

/// Spatial multiple required by the four stride-2 style layers.
pub const STYLE_ALIGN: usize = 16;

pub const OTSU_BINS: usize = 256;

/// Index into a symmetric reflection of `0..n` (`d c b a | a b c d | d c`).
pub fn reflect_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

/// Pads bottom and right edges by reflection up to the next multiple of
/// `multiple`.
pub fn reflect_pad(patch: &Patch<f32>, multiple: usize) -> Patch<f32> {
    let (c, h, w) = patch.tensor().chw();
    let ph = h.div_ceil(multiple) * multiple;
    let pw = w.div_ceil(multiple) * multiple;
    if (ph, pw) == (h, w) {
        return patch.clone();
    }
    let src = patch.tensor().data();
    let mut out = Vec::with_capacity(c * ph * pw);
    for ch in 0..c {
        for r in 0..ph {
            let sr = reflect_index(r as isize, h);
            let row = &src[(ch * h + sr) * w..(ch * h + sr + 1) * w];
            out.extend((0..pw).map(|q| row[reflect_index(q as isize, w)]));
        }
    }
    Patch::new(patch.domain(), Tensor::from_vec(&[c, ph, pw], out)).expect("values copied from a valid patch")
}

/// Style codes of whole images, computed on reflection-padded copies.
pub fn image_styles(
    params: &ModelParameters<f32>,
    x: &Patch<f32>,
    y: &Patch<f32>,
) -> Result<(StyleCode<f32>, StyleCode<f32>)> {
    Ok((
        style_encode(params, &reflect_pad(x, STYLE_ALIGN))?,
        style_encode(params, &reflect_pad(y, STYLE_ALIGN))?,
    ))
}

/// Concatenated content features `f_X = [C_X, C~_X]` and `f_Y = [C~_Y, C_Y]`,
/// where the tilde codes are re-encoded from the cross-domain translations.
/// Both are `[2·C, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContentFeatures {
    pub fx: Tensor<f32>,
    pub fy: Tensor<f32>,
}

fn check_images(params: &ModelParameters<f32>, x: &Patch<f32>, y: &Patch<f32>) -> Result<()> {
    if x.domain() != Domain::X || y.domain() != Domain::Y {
        return Err(Error::validation("expected an (X, Y) image pair"));
    }
    if (x.height(), x.width()) != (y.height(), y.width()) {
        return Err(Error::shape(format!(
            "images differ in size: {}x{} vs {}x{}",
            x.height(),
            x.width(),
            y.height(),
            y.width()
        )));
    }
    let arch = params.arch();
    if x.channels() != arch.channels_x || y.channels() != arch.channels_y {
        return Err(Error::shape(format!(
            "channel counts ({}, {}) do not match the model ({}, {})",
            x.channels(),
            y.channels(),
            arch.channels_x,
            arch.channels_y
        )));
    }
    Ok(())
}

fn concat_channels(a: &Tensor<f32>, b: &Tensor<f32>) -> Tensor<f32> {
    let (ca, h, w) = a.chw();
    let (cb, _, _) = b.chw();
    let mut data = Vec::with_capacity((ca + cb) * h * w);
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(&[ca + cb, h, w], data)
}

fn features_with_styles(
    params: &ModelParameters<f32>,
    x: &Patch<f32>,
    y: &Patch<f32>,
    sx: &StyleCode<f32>,
    sy: &StyleCode<f32>,
) -> Result<ContentFeatures> {
    let cx = content_encode(params, x)?;
    let cy = content_encode(params, y)?;
    let x_hat = decode(params, &cy, sx, Domain::X)?;
    let y_hat = decode(params, &cx, sy, Domain::Y)?;
    let cy_tilde = content_encode(params, &x_hat)?;
    let cx_tilde = content_encode(params, &y_hat)?;
    Ok(ContentFeatures {
        fx: concat_channels(cx.tensor(), cx_tilde.tensor()),
        fy: concat_channels(cy_tilde.tensor(), cy.tensor()),
    })
}

/// Whole-image content features.
pub fn content_features(
    params: &ModelParameters<f32>,
    x: &Patch<f32>,
    y: &Patch<f32>,
) -> Result<ContentFeatures> {
    check_images(params, x, y)?;
    let (sx, sy) = image_styles(params, x, y)?;
    features_with_styles(params, x, y, &sx, &sy)
}

/// Tile layout for memory-bounded inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TileConfig {
    pub tile: usize,
    pub overlap: usize,
}

impl Default for TileConfig {
    fn default() -> Self {
        Self {
            tile: 256,
            overlap: 32,
        }
    }
}

fn crop(patch: &Patch<f32>, r0: usize, c0: usize, th: usize, tw: usize) -> Patch<f32> {
    let (c, h, w) = patch.tensor().chw();
    let src = patch.tensor().data();
    let mut out = Vec::with_capacity(c * th * tw);
    for ch in 0..c {
        for r in r0..r0 + th {
            let base = (ch * h + r) * w;
            out.extend_from_slice(&src[base + c0..base + c0 + tw]);
        }
    }
    Patch::new(patch.domain(), Tensor::from_vec(&[c, th, tw], out)).expect("crop of a valid patch")
}

/// Tiled variant of [`content_features`]. Style codes come from the whole
/// images; content features are computed per tile and averaged where tiles
/// overlap. Because the decoder normalizes with per-map statistics, results
/// differ slightly from whole-image inference unless one tile covers the
/// image.
pub fn content_features_tiled(
    params: &ModelParameters<f32>,
    x: &Patch<f32>,
    y: &Patch<f32>,
    tiles: TileConfig,
) -> Result<ContentFeatures> {
    check_images(params, x, y)?;
    if tiles.tile == 0 || tiles.overlap >= tiles.tile {
        return Err(Error::config(format!(
            "tile size {} must exceed the overlap {}",
            tiles.tile, tiles.overlap
        )));
    }
    let (h, w) = (x.height(), x.width());
    let (sx, sy) = image_styles(params, x, y)?;
    let (th, tw) = (tiles.tile.min(h), tiles.tile.min(w));
    let stride = tiles.tile - tiles.overlap;
    let rows = grid_origins(h, th, stride);
    let cols = grid_origins(w, tw, stride);

    let cc = 2 * params.arch().content_channels();
    let mut fx = vec![0.0f32; cc * h * w];
    let mut fy = vec![0.0f32; cc * h * w];
    let mut hits = vec![0u32; h * w];
    for &r0 in &rows {
        for &c0 in &cols {
            let f = features_with_styles(
                params,
                &crop(x, r0, c0, th, tw),
                &crop(y, r0, c0, th, tw),
                &sx,
                &sy,
            )?;
            for ch in 0..cc {
                for r in 0..th {
                    let dst = (ch * h + r0 + r) * w + c0;
                    let src = (ch * th + r) * tw;
                    for q in 0..tw {
                        fx[dst + q] += f.fx.data()[src + q];
                        fy[dst + q] += f.fy.data()[src + q];
                    }
                }
            }
            for r in 0..th {
                for q in 0..tw {
                    hits[(r0 + r) * w + c0 + q] += 1;
                }
            }
        }
    }
    for ch in 0..cc {
        for (i, &n) in hits.iter().enumerate() {
            let inv = 1.0 / n as f32;
            fx[ch * h * w + i] *= inv;
            fy[ch * h * w + i] *= inv;
        }
    }
    Ok(ContentFeatures {
        fx: Tensor::from_vec(&[cc, h, w], fx),
        fy: Tensor::from_vec(&[cc, h, w], fy),
    })
}

/// Origins `0, stride, 2·stride, …` that fit inside `dim`, plus `dim − size`
/// when the grid stops short of the border.
pub fn grid_origins(dim: usize, size: usize, stride: usize) -> Vec<usize> {
    assert!(size > 0 && stride > 0 && size <= dim);
    let mut out: Vec<usize> = (0..=dim - size).step_by(stride).collect();
    if *out.last().expect("at least one origin") != dim - size {
        out.push(dim - size);
    }
    out
}

/// Per-pixel Euclidean distance between two `[C, H, W]` feature maps.
pub fn difference_image(fx: &Tensor<f32>, fy: &Tensor<f32>) -> Result<DifferenceImage> {
    if fx.shape() != fy.shape() || fx.shape().len() != 3 {
        return Err(Error::shape(format!(
            "feature maps must share a [C, H, W] shape, got {:?} and {:?}",
            fx.shape(),
            fy.shape()
        )));
    }
    let (c, h, w) = fx.chw();
    let n = h * w;
    let mut acc = vec![0.0f64; n];
    for ch in 0..c {
        let a = &fx.data()[ch * n..(ch + 1) * n];
        let b = &fy.data()[ch * n..(ch + 1) * n];
        for ((s, &p), &q) in acc.iter_mut().zip(a).zip(b) {
            let d = p as f64 - q as f64;
            *s += d * d;
        }
    }
    let data: Vec<f64> = acc.into_iter().map(f64::sqrt).collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("difference image contains non-finite values".into()));
    }
    ScalarMap::new(h, w, data)
}

/// Unfiltered difference image of a whole image pair. Used both for the
/// change-mask refresh during training and as the first stage of
/// [`detect_changes`].
pub fn raw_difference(
    params: &ModelParameters<f32>,
    x: &Patch<f32>,
    y: &Patch<f32>,
) -> Result<DifferenceImage> {
    let f = content_features(params, x, y)?;
    difference_image(&f.fx, &f.fy)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterConfig {
    pub enabled: bool,
    pub sigma: f64,
    pub kernel_size: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            sigma: 1.5,
            kernel_size: 7,
        }
    }
}

impl FilterConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::config(format!("filter sigma must be positive, got {}", self.sigma)));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::config(format!(
                "filter kernel size must be odd, got {}",
                self.kernel_size
            )));
        }
        Ok(())
    }
}

/// Normalized 1-D Gaussian taps of odd length.
pub fn gaussian_kernel(sigma: f64, size: usize) -> Vec<f64> {
    let r = (size / 2) as f64;
    let taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Separable blur of a row-major plane with symmetric reflection at the
/// borders.
pub(crate) fn blur_plane(data: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        for x in 0..w {
            tmp[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * row[reflect_index(x as isize + k as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * tmp[reflect_index(y as isize + k as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// 2-D Gaussian smoothing with reflected borders.
pub fn gaussian_filter(di: &DifferenceImage, sigma: f64, kernel_size: usize) -> Result<DifferenceImage> {
    FilterConfig {
        enabled: true,
        sigma,
        kernel_size,
    }
    .validate()?;
    let taps = gaussian_kernel(sigma, kernel_size);
    let (h, w) = di.dims();
    ScalarMap::new(h, w, blur_plane(di.data(), h, w, &taps))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OtsuThreshold {
    /// Threshold in the units of the input map.
    pub threshold: f64,
    /// Last histogram bin of the lower class.
    pub bin: usize,
    /// Set when the input was constant.
    pub degenerate: bool,
}

/// Histogram bin of each value after min–max normalization.
pub fn histogram_bins(values: &[f64]) -> Vec<usize> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    values
        .iter()
        .map(|&v| {
            if range > 0.0 {
                (((v - lo) / range * OTSU_BINS as f64) as usize).min(OTSU_BINS - 1)
            } else {
                0
            }
        })
        .collect()
}

/// Otsu's threshold over a 256-bin histogram of the min–max normalized map.
///
/// The split after bin `k` maximizing the between-class variance is found by
/// exact integer comparison, ties resolved toward the lowest `k`. The
/// returned threshold lies midway between the largest value of the lower
/// class and the smallest value of the upper class, so `v > threshold`
/// reproduces the histogram split exactly.
pub fn otsu_threshold(di: &DifferenceImage) -> Result<OtsuThreshold> {
    let values = di.data();
    if values.is_empty() {
        return Err(Error::Domain("Otsu threshold of an empty map".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("Otsu threshold of a non-finite map".into()));
    }
    let (lo, hi) = di.min_max();
    if lo == hi {
        warn!("difference image is constant ({lo}); every pixel is unchanged");
        return Ok(OtsuThreshold {
            threshold: lo,
            bin: OTSU_BINS - 1,
            degenerate: true,
        });
    }
    let bins = histogram_bins(values);
    let mut hist = [0u64; OTSU_BINS];
    for &b in &bins {
        hist[b] += 1;
    }
    let bin = best_split(&hist);

    let mut below = f64::NEG_INFINITY;
    let mut above = f64::INFINITY;
    for (&v, &b) in values.iter().zip(&bins) {
        if b <= bin {
            below = below.max(v);
        } else {
            above = above.min(v);
        }
    }
    let mut threshold = below + (above - below) / 2.0;
    if threshold >= above {
        threshold = below;
    }
    Ok(OtsuThreshold {
        threshold,
        bin,
        degenerate: false,
    })
}

/// Maximizes `(N·S0 − n0·S)² / (n0·n1)`, proportional to the between-class
/// variance with bin indices as levels.
fn best_split(hist: &[u64; OTSU_BINS]) -> usize {
    let n: u128 = hist.iter().map(|&c| c as u128).sum();
    let s: u128 = hist.iter().enumerate().map(|(i, &c)| i as u128 * c as u128).sum();
    let (mut n0, mut s0) = (0u128, 0u128);
    let mut best: Option<(usize, u128, u128)> = None;
    for (k, &c) in hist.iter().enumerate().take(OTSU_BINS - 1) {
        n0 += c as u128;
        s0 += k as u128 * c as u128;
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let diff = (n * s0).abs_diff(n0 * s);
        let num = diff * diff;
        let den = n0 * n1;
        let better = match best {
            None => true,
            Some((_, bnum, bden)) => greater(num, den, bnum, bden),
        };
        if better {
            best = Some((k, num, den));
        }
    }
    best.map_or(0, |b| b.0)
}

/// `a/b > c/d` for positive denominators.
fn greater(a: u128, b: u128, c: u128, d: u128) -> bool {
    match (a.checked_mul(d), c.checked_mul(b)) {
        (Some(l), Some(r)) => l > r,
        _ => a as f64 / b as f64 > c as f64 / d as f64,
    }
}

/// `1` where `di > threshold`, else `0`.
pub fn binarize(di: &DifferenceImage, threshold: f64) -> ChangeMap {
    let (h, w) = di.dims();
    BinaryMap::new(h, w, di.data().iter().map(|&v| (v > threshold) as u8).collect())
        .expect("binary by construction")
}

#[derive(Clone, Debug)]
pub struct Detection {
    /// Difference image after optional smoothing.
    pub difference: DifferenceImage,
    pub threshold: OtsuThreshold,
    pub change_map: ChangeMap,
}

/// Difference image, smoothing, Otsu threshold and change map.
pub fn detect_changes(
    params: &ModelParameters<f32>,
    x: &Patch<f32>,
    y: &Patch<f32>,
    filter: FilterConfig,
) -> Result<Detection> {
    filter.validate()?;
    let raw = raw_difference(params, x, y)?;
    threshold_difference(raw, filter)
}

/// The post-feature stages of [`detect_changes`].
pub fn threshold_difference(raw: DifferenceImage, filter: FilterConfig) -> Result<Detection> {
    filter.validate()?;
    let difference = if filter.enabled {
        gaussian_filter(&raw, filter.sigma, filter.kernel_size)?
    } else {
        raw
    };
    let threshold = otsu_threshold(&difference)?;
    let change_map = binarize(&difference, threshold.threshold);
    Ok(Detection {
        difference,
        threshold,
        change_map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_index_folds_symmetrically() {
        let got: Vec<usize> = (-4..8).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
        assert_eq!(reflect_index(-1, 1), 0);
        assert_eq!(reflect_index(5, 1), 0);
    }

    #[test]
    fn grid_origins_cover_border() {
        assert_eq!(grid_origins(300, 64, 56), vec![0, 56, 112, 168, 224, 236]);
        assert_eq!(grid_origins(64, 64, 56), vec![0]);
        assert_eq!(grid_origins(120, 64, 56), vec![0, 56]);
    }

    #[test]
    fn hand_euclidean_norm() {
        let mut a = Tensor::<f32>::zeros(&[6, 1, 1]);
        a.data_mut()[0] = 3.0;
        a.data_mut()[1] = 4.0;
        let b = Tensor::zeros(&[6, 1, 1]);
        assert_eq!(difference_image(&a, &b).unwrap().data(), &[5.0]);
        assert!(difference_image(&a, &Tensor::zeros(&[6, 1, 2])).is_err());
    }

    #[test]
    fn binarize_is_strict() {
        let di = ScalarMap::new(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(binarize(&di, 2.0).data(), &[0, 0, 1]);
        let zero = ScalarMap::filled(2, 2, 0.0);
        assert_eq!(binarize(&zero, 0.0).count_ones(), 0);
    }

    #[test]
    fn otsu_bimodal_and_constant() {
        let di = ScalarMap::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let t = otsu_threshold(&di).unwrap();
        assert!(t.threshold > 0.0 && t.threshold < 1.0);
        assert_eq!(binarize(&di, t.threshold).data(), &[0, 1, 0, 1]);
        let flat = ScalarMap::filled(3, 3, 2.5);
        let t = otsu_threshold(&flat).unwrap();
        assert!(t.degenerate);
        assert_eq!(t.threshold, 2.5);
        assert_eq!(binarize(&flat, t.threshold).count_ones(), 0);
    }

    #[test]
    fn filter_rejects_even_kernel() {
        let di = ScalarMap::filled(4, 4, 1.0);
        assert!(matches!(gaussian_filter(&di, 1.5, 6), Err(Error::Config(_))));
        assert!(matches!(gaussian_filter(&di, 0.0, 7), Err(Error::Config(_))));
    }
}
