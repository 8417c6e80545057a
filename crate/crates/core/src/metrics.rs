//! Evaluation: confusion-matrix scores for change maps, ROC/PR analysis of
//! difference images, and FID/KID distances between feature sets.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::data_io::RasterImage;
use crate::error::{Error, Result};
use crate::map::{BinaryMap, DifferenceImage};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Counts with ground-truth `1` as the positive class.
pub fn confusion_counts(cm: &BinaryMap, gt: &BinaryMap) -> Result<ConfusionCounts> {
    if cm.dims() != gt.dims() {
        return Err(Error::validation(format!(
            "change map {:?} and ground truth {:?} differ in size",
            cm.dims(),
            gt.dims()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in cm.data().iter().zip(gt.data()) {
        match (p, t) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 0) => c.tn += 1,
            _ => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClassificationMetrics {
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub oe: u64,
    pub oa: f64,
    pub f1: f64,
    pub kc: f64,
    /// No positives predicted or present; F1 reported as 1.
    pub f1_undefined: bool,
    /// Chance agreement is 1; kappa reported as 0.
    pub kc_undefined: bool,
}

pub fn classification_metrics(c: &ConfusionCounts) -> Result<ClassificationMetrics> {
    let n = c.total();
    if n == 0 {
        return Err(Error::Domain("metrics of an empty confusion matrix".into()));
    }
    let oe = c.fp + c.fn_;
    let oa = (c.tp + c.tn) as f64 / n as f64;
    let f1_den = 2 * c.tp + c.fp + c.fn_;
    let (f1, f1_undefined) = if f1_den == 0 {
        (1.0, true)
    } else {
        (2.0 * c.tp as f64 / f1_den as f64, false)
    };
    let n2 = n as u128 * n as u128;
    let agree = (c.tp + c.fp) as u128 * (c.tp + c.fn_) as u128
        + (c.fn_ + c.tn) as u128 * (c.fp + c.tn) as u128;
    let (kc, kc_undefined) = if agree == n2 {
        (0.0, true)
    } else {
        let pe = agree as f64 / n2 as f64;
        ((oa - pe) / (1.0 - pe), false)
    };
    Ok(ClassificationMetrics {
        fp: c.fp,
        fn_: c.fn_,
        oe,
        oa,
        f1,
        kc,
        f1_undefined,
        kc_undefined,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub x: f64,
    pub y: f64,
}

/// Operating points ordered by decreasing threshold. The first point uses an
/// infinite threshold (nothing predicted positive).
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CurvePoints {
    pub points: Vec<CurvePoint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Curves {
    /// False-positive rate against true-positive rate.
    pub roc: CurvePoints,
    /// Recall against precision.
    pub pr: CurvePoints,
    pub auc: f64,
    pub ap: f64,
}

/// Sweeps every distinct score, predicting positive for `score >= t`.
/// AUC integrates the ROC curve with the trapezoid rule, which credits tied
/// scores with one half; AP sums precision times each recall increment.
pub fn roc_pr_curves(di: &DifferenceImage, gt: &BinaryMap) -> Result<Curves> {
    if di.dims() != gt.dims() {
        return Err(Error::validation(format!(
            "difference image {:?} and ground truth {:?} differ in size",
            di.dims(),
            gt.dims()
        )));
    }
    if di.data().iter().any(|v| v.is_nan()) {
        return Err(Error::Numerical("difference image contains NaN".into()));
    }
    let pos = gt.count_ones() as u64;
    let neg = gt.data().len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Domain(
            "ROC/PR analysis needs both changed and unchanged pixels".into(),
        ));
    }
    let mut order: Vec<usize> = (0..di.data().len()).collect();
    order.sort_by(|&a, &b| di.data()[b].total_cmp(&di.data()[a]));

    let mut roc = vec![CurvePoint {
        threshold: f64::INFINITY,
        x: 0.0,
        y: 0.0,
    }];
    let mut pr = vec![CurvePoint {
        threshold: f64::INFINITY,
        x: 0.0,
        y: 1.0,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let (mut auc, mut ap) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let t = di.data()[order[i]];
        while i < order.len() && di.data()[order[i]] == t {
            if gt.data()[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let tpr = tp as f64 / pos as f64;
        let fpr = fp as f64 / neg as f64;
        let prev = roc.last().expect("seeded");
        auc += (fpr - prev.x) * (tpr + prev.y) / 2.0;
        roc.push(CurvePoint {
            threshold: t,
            x: fpr,
            y: tpr,
        });
        let precision = tp as f64 / (tp + fp) as f64;
        let prev_recall = pr.last().expect("seeded").x;
        ap += (tpr - prev_recall) * precision;
        pr.push(CurvePoint {
            threshold: t,
            x: tpr,
            y: precision,
        });
    }
    Ok(Curves {
        roc: CurvePoints { points: roc },
        pr: CurvePoints { points: pr },
        auc,
        ap,
    })
}

/// Rows of equal-length real vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    dim: usize,
    rows: Vec<Vec<f64>>,
}

impl FeatureSet {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::validation("feature set needs at least one non-empty vector"));
        }
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::validation("feature vectors differ in length"));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::validation("feature vectors must be finite"));
        }
        Ok(Self { dim, rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), self.dim, |i, j| self.rows[i][j])
    }
}

fn same_dim(a: &FeatureSet, b: &FeatureSet) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::validation(format!(
            "feature dimensions differ: {} vs {}",
            a.dim, b.dim
        )));
    }
    Ok(())
}

/// Mean vector and sample covariance (denominator `n − 1`).
fn moments(set: &FeatureSet) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = set.len();
    if n < 2 {
        return Err(Error::Domain("covariance needs at least two feature vectors".into()));
    }
    let m = set.matrix();
    let mean = m.row_mean().transpose();
    let mut centered = m;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    Ok((mean, cov))
}

/// Relative tolerance below which negative eigenvalues count as round-off.
pub const EIGEN_CLIP: f64 = 1e-8;

fn clipped_eigen(m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let sym = (&m + m.transpose()) * 0.5;
    let mut eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    for v in eig.eigenvalues.iter_mut() {
        if *v < 0.0 {
            if *v < -EIGEN_CLIP * scale {
                return Err(Error::Numerical(format!(
                    "matrix square root: eigenvalue {v} is negative beyond tolerance"
                )));
            }
            *v = 0.0;
        }
    }
    Ok(eig)
}

fn sym_sqrt(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = clipped_eigen(m)?;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Fréchet distance between Gaussian fits of two feature sets:
/// `‖μr − μt‖² + Tr(Σr + Σt − 2 (Σr^½ Σt Σr^½)^½)`.
pub fn fid(real: &FeatureSet, translated: &FeatureSet) -> Result<f64> {
    same_dim(real, translated)?;
    let (mu_r, cov_r) = moments(real)?;
    let (mu_t, cov_t) = moments(translated)?;
    let root_r = sym_sqrt(cov_r.clone())?;
    let inner = &root_r * &cov_t * &root_r;
    let tr_root: f64 = clipped_eigen(inner)?.eigenvalues.iter().map(|v| v.sqrt()).sum();
    let d = (mu_r - mu_t).norm_squared() + cov_r.trace() + cov_t.trace() - 2.0 * tr_root;
    Ok(d.max(0.0))
}

/// Polynomial kernel `(aᵀb / d + 1)³`.
pub fn poly_kernel(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / a.len() as f64 + 1.0).powi(3)
}

/// Mean kernel value over pairs, summed in sorted order so the result
/// depends only on the multiset of kernel values.
fn mean_kernel(a: &FeatureSet, b: &FeatureSet, skip_diagonal: bool) -> f64 {
    let mut values = Vec::with_capacity(a.len() * b.len());
    for (i, r) in a.rows.iter().enumerate() {
        for (j, t) in b.rows.iter().enumerate() {
            if !(skip_diagonal && i == j) {
                values.push(poly_kernel(r, t));
            }
        }
    }
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Squared MMD with the cubic polynomial kernel. The default estimator
/// averages over all pairs including self-pairs; `unbiased` drops the
/// self-pairs from the within-set terms.
pub fn kid(real: &FeatureSet, translated: &FeatureSet, unbiased: bool) -> Result<f64> {
    same_dim(real, translated)?;
    if unbiased && (real.len() < 2 || translated.len() < 2) {
        return Err(Error::Domain("unbiased KID needs at least two vectors per set".into()));
    }
    let krr = mean_kernel(real, real, unbiased);
    let ktt = mean_kernel(translated, translated, unbiased);
    let krt = mean_kernel(real, translated, false);
    Ok(krr + ktt - 2.0 * krt)
}

/// Maps an image tile to a fixed-length descriptor.
pub trait FeatureExtractor: Send + Sync {
    fn name(&self) -> &str;
    /// Descriptor length for images with `channels` channels.
    fn dim(&self, channels: usize) -> usize;
    fn extract(&self, tile: &RasterImage) -> Result<Vec<f64>>;
}

/// Hand-crafted descriptor: the tile is split into a `grid × grid` array of
/// windows, and for every window and channel the mean, standard deviation,
/// minimum and maximum of the values and the mean and standard deviation of
/// the forward-difference gradient magnitude are recorded. Length is
/// `6 · grid² · channels`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowStats {
    pub grid: usize,
}

impl Default for WindowStats {
    fn default() -> Self {
        Self { grid: 2 }
    }
}

pub const WINDOW_STATS: &str = "window-stats";

/// Population mean and standard deviation, accumulated relative to the first
/// value so constant input yields a standard deviation of exactly zero.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let pivot = values[0];
    let shift = values.iter().map(|v| v - pivot).sum::<f64>() / n;
    let second = values.iter().map(|v| (v - pivot) * (v - pivot)).sum::<f64>() / n;
    (pivot + shift, (second - shift * shift).max(0.0).sqrt())
}

impl FeatureExtractor for WindowStats {
    fn name(&self) -> &str {
        WINDOW_STATS
    }

    fn dim(&self, channels: usize) -> usize {
        6 * self.grid * self.grid * channels
    }

    fn extract(&self, tile: &RasterImage) -> Result<Vec<f64>> {
        let (h, w, c) = (tile.height(), tile.width(), tile.channels());
        if self.grid == 0 || h < self.grid || w < self.grid {
            return Err(Error::config(format!(
                "{h}x{w} tile is too small for a {0}x{0} window grid",
                self.grid
            )));
        }
        let mut out = Vec::with_capacity(self.dim(c));
        for gy in 0..self.grid {
            let rows = gy * h / self.grid..(gy + 1) * h / self.grid;
            for gx in 0..self.grid {
                let cols = gx * w / self.grid..(gx + 1) * w / self.grid;
                for ch in 0..c {
                    let mut vals = Vec::with_capacity(rows.len() * cols.len());
                    let mut grads = Vec::with_capacity(vals.capacity());
                    for r in rows.clone() {
                        for q in cols.clone() {
                            let v = tile.get(r, q, ch) as f64;
                            let dx = if q + 1 < w { tile.get(r, q + 1, ch) as f64 - v } else { 0.0 };
                            let dy = if r + 1 < h { tile.get(r + 1, q, ch) as f64 - v } else { 0.0 };
                            vals.push(v);
                            grads.push(dx.hypot(dy));
                        }
                    }
                    let (mean, std) = mean_std(&vals);
                    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
                    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let (gmean, gstd) = mean_std(&grads);
                    out.extend([mean, std, min, max, gmean, gstd]);
                }
            }
        }
        Ok(out)
    }
}

type Factory = Box<dyn Fn() -> Box<dyn FeatureExtractor> + Send + Sync>;

/// Named feature extractors; starts with the built-in window statistics.
pub struct ExtractorRegistry {
    factories: BTreeMap<String, Factory>,
}

impl Default for ExtractorRegistry {
    fn default() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register(WINDOW_STATS, || Box::new(WindowStats::default()));
        r
    }
}

impl ExtractorRegistry {
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn() -> Box<dyn FeatureExtractor> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn get(&self, name: &str) -> Result<Box<dyn FeatureExtractor>> {
        self.factories.get(name).map(|f| f()).ok_or_else(|| {
            Error::config(format!(
                "unknown feature extractor '{name}' (available: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }
}

pub const EVAL_TILE: usize = 64;
pub const EVAL_STRIDE: usize = 64;

fn crop_raster(img: &RasterImage, r0: usize, c0: usize, th: usize, tw: usize) -> RasterImage {
    let c = img.channels();
    let mut data = Vec::with_capacity(th * tw * c);
    for r in r0..r0 + th {
        let start = (r * img.width() + c0) * c;
        data.extend_from_slice(&img.data()[start..start + tw * c]);
    }
    RasterImage::new(th, tw, c, data).expect("crop inside the image")
}

/// One descriptor per 64×64 tile (stride 64) of every image; images smaller
/// than a tile contribute one descriptor of the whole image.
pub fn extract_features(images: &[RasterImage], extractor: &dyn FeatureExtractor) -> Result<FeatureSet> {
    let mut rows = Vec::new();
    for img in images {
        let th = EVAL_TILE.min(img.height());
        let tw = EVAL_TILE.min(img.width());
        for r0 in (0..=img.height() - th).step_by(EVAL_STRIDE) {
            for c0 in (0..=img.width() - tw).step_by(EVAL_STRIDE) {
                rows.push(extractor.extract(&crop_raster(img, r0, c0, th, tw))?);
            }
        }
    }
    FeatureSet::new(rows)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<ConfusionCounts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fid: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kid: Option<f64>,
}

impl MetricsReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// `threshold,x,y` per row.
pub fn write_curve_csv(path: &Path, curve: &CurvePoints) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "threshold,x,y")?;
    for p in &curve.points {
        writeln!(w, "{},{},{}", p.threshold, p.x, p.y)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::ScalarMap;

    #[test]
    fn perfect_and_inverted_maps() {
        let gt = BinaryMap::new(2, 2, vec![1, 0, 0, 1]).unwrap();
        let c = confusion_counts(&gt, &gt).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        let m = classification_metrics(&c).unwrap();
        assert_eq!((m.oe, m.oa, m.f1, m.kc), (0, 1.0, 1.0, 1.0));
        let c = confusion_counts(&gt.inverted(), &gt).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));
    }

    #[test]
    fn degenerate_scores_are_flagged() {
        let m = classification_metrics(&ConfusionCounts {
            tp: 0,
            fp: 0,
            tn: 5,
            fn_: 0,
        })
        .unwrap();
        assert!(m.f1_undefined && m.kc_undefined);
        assert_eq!((m.f1, m.kc), (1.0, 0.0));
        assert!(classification_metrics(&ConfusionCounts::default()).is_err());
    }

    #[test]
    fn separated_and_constant_scores() {
        let gt = BinaryMap::new(1, 4, vec![0, 1, 0, 1]).unwrap();
        let di = ScalarMap::new(1, 4, vec![0.1, 0.9, 0.2, 0.8]).unwrap();
        let c = roc_pr_curves(&di, &gt).unwrap();
        assert_eq!((c.auc, c.ap), (1.0, 1.0));
        let flat = ScalarMap::filled(1, 4, 3.0);
        let c = roc_pr_curves(&flat, &gt).unwrap();
        assert_eq!(c.auc, 0.5);
        let last = c.roc.points.last().unwrap();
        assert_eq!((last.x, last.y), (1.0, 1.0));
        assert!(roc_pr_curves(&flat, &BinaryMap::ones(1, 4)).is_err());
    }

    #[test]
    fn kernel_at_origin_is_one() {
        for d in 1..5 {
            assert_eq!(poly_kernel(&vec![0.0; d], &vec![0.0; d]), 1.0);
        }
    }

    #[test]
    fn unknown_extractor_is_a_config_error() {
        let reg = ExtractorRegistry::default();
        assert!(matches!(reg.get("inception"), Err(Error::Config(_))));
        assert_eq!(reg.get(WINDOW_STATS).unwrap().dim(3), 72);
    }
}
