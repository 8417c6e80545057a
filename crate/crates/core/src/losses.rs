//! Training objectives: reconstruction, code-recovery (translation),
//! cycle-consistency and mask-guided content alignment, summed with equal
//! weights.
//!
//! Every term is an element mean over the full tensor. The alignment mask is
//! broadcast over channels and the mean still divides by `C*H*W`, so
//! masked-out entries count toward the denominator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::BinaryMap;
use crate::tensor::{Real, Tensor};

/// Scaling constant for squared code differences in changed regions. Content
/// codes lie in (-1, 1), so squared differences lie in (0, 4).
pub const ALIGN_SCALE: f64 = 4.0;

/// Mean of all elements.
pub fn mean_all<T: Real>(values: &[T]) -> Result<T> {
    if values.is_empty() {
        return Err(Error::Domain("mean of an empty array".into()));
    }
    Ok(values.iter().copied().sum::<T>() / T::from_usize(values.len()).unwrap())
}

fn check_same<T>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// `mean((a - b)^2)`.
pub fn mse<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<T> {
    check_same(a, b, "mse")?;
    let sq: Vec<T> = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y) * (x - y))
        .collect();
    mean_all(&sq)
}

pub(crate) fn mse_backward<T: Real>(a: &Tensor<T>, b: &Tensor<T>, g: T) -> (Tensor<T>, Tensor<T>) {
    let scale = g * T::from_f64_lossy(2.0) / T::from_usize(a.len()).unwrap();
    let da: Vec<T> = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| scale * (x - y))
        .collect();
    let db = da.iter().map(|&v| -v).collect();
    (
        Tensor::from_vec(a.shape(), da),
        Tensor::from_vec(b.shape(), db),
    )
}

pub fn reconstruction_loss<T: Real>(
    x: &Tensor<T>,
    y: &Tensor<T>,
    x_rec: &Tensor<T>,
    y_rec: &Tensor<T>,
) -> Result<T> {
    Ok(mse(x, x_rec)? + mse(y, y_rec)?)
}

/// Code-recovery loss: content and style codes re-encoded from the
/// translated images against the codes that produced them.
#[allow(clippy::too_many_arguments)]
pub fn translation_loss<T: Real>(
    content_x: &Tensor<T>,
    content_y: &Tensor<T>,
    style_x: &Tensor<T>,
    style_y: &Tensor<T>,
    content_x_rec: &Tensor<T>,
    content_y_rec: &Tensor<T>,
    style_x_rec: &Tensor<T>,
    style_y_rec: &Tensor<T>,
) -> Result<T> {
    Ok(mse(content_x, content_x_rec)?
        + mse(content_y, content_y_rec)?
        + mse(style_x, style_x_rec)?
        + mse(style_y, style_y_rec)?)
}

pub fn cycle_loss<T: Real>(
    x: &Tensor<T>,
    y: &Tensor<T>,
    x_cyc: &Tensor<T>,
    y_cyc: &Tensor<T>,
) -> Result<T> {
    Ok(mse(x, x_cyc)? + mse(y, y_cyc)?)
}

fn check_alignment_inputs<T>(
    codes: [&Tensor<T>; 4],
    mask: &BinaryMap,
) -> Result<(usize, usize, usize)> {
    for c in &codes[1..] {
        check_same(codes[0], c, "alignment_loss")?;
    }
    let s = codes[0].shape();
    if s.len() != 3 {
        return Err(Error::shape(format!(
            "alignment_loss expects [C, H, W] codes, got {s:?}"
        )));
    }
    if mask.dims() != (s[1], s[2]) {
        return Err(Error::shape(format!(
            "change mask {:?} does not match code spatial dims {:?}",
            mask.dims(),
            (s[1], s[2])
        )));
    }
    Ok((s[0], s[1], s[2]))
}

/// Mask-guided alignment of `C_X` with `C~_Y` and `C~_X` with `C_Y`: pulls
/// codes together where `P_c = 0` and pushes them apart (towards squared
/// difference `m`) where `P_c = 1`.
pub fn alignment_loss<T: Real>(
    content_x: &Tensor<T>,
    content_y_rec: &Tensor<T>,
    content_x_rec: &Tensor<T>,
    content_y: &Tensor<T>,
    change_mask: &BinaryMap,
    m: T,
) -> Result<T> {
    check_alignment_inputs(
        [content_x, content_y_rec, content_x_rec, content_y],
        change_mask,
    )?;
    if m <= T::zero() {
        return Err(Error::Domain("alignment scale m must be positive".into()));
    }
    Ok(alignment_unchecked(
        content_x,
        content_y_rec,
        content_x_rec,
        content_y,
        change_mask,
        m,
    ))
}

pub(crate) fn alignment_unchecked<T: Real>(
    cx: &Tensor<T>,
    cyt: &Tensor<T>,
    cxt: &Tensor<T>,
    cy: &Tensor<T>,
    mask: &BinaryMap,
    m: T,
) -> T {
    let hw = mask.data().len();
    let mut acc = T::zero();
    for (i, (((&a, &b), &c), &d)) in cx
        .data()
        .iter()
        .zip(cyt.data())
        .zip(cxt.data())
        .zip(cy.data())
        .enumerate()
    {
        let d1 = (a - b) * (a - b);
        let d2 = (c - d) * (c - d);
        acc += if mask.data()[i % hw] == 1 {
            (T::one() - d1 / m) + (T::one() - d2 / m)
        } else {
            d1 + d2
        };
    }
    acc / T::from_usize(cx.len()).unwrap()
}

/// Gradients with respect to `(cx, cyt, cxt, cy)`, scaled by `g`.
pub(crate) fn alignment_backward<T: Real>(
    cx: &Tensor<T>,
    cyt: &Tensor<T>,
    cxt: &Tensor<T>,
    cy: &Tensor<T>,
    mask: &BinaryMap,
    m: T,
    g: T,
) -> [Tensor<T>; 4] {
    let hw = mask.data().len();
    let two_over_n = g * T::from_f64_lossy(2.0) / T::from_usize(cx.len()).unwrap();
    let changed = -two_over_n / m;
    let mut d_first = Vec::with_capacity(cx.len());
    let mut d_second = Vec::with_capacity(cx.len());
    for (i, (((&a, &b), &c), &d)) in cx
        .data()
        .iter()
        .zip(cyt.data())
        .zip(cxt.data())
        .zip(cy.data())
        .enumerate()
    {
        let w = if mask.data()[i % hw] == 1 {
            changed
        } else {
            two_over_n
        };
        d_first.push(w * (a - b));
        d_second.push(w * (c - d));
    }
    let shape = cx.shape();
    [
        Tensor::from_vec(shape, d_first.clone()),
        Tensor::from_vec(shape, d_first.into_iter().map(|v| -v).collect()),
        Tensor::from_vec(shape, d_second.clone()),
        Tensor::from_vec(shape, d_second.into_iter().map(|v| -v).collect()),
    ]
}

/// Which loss components enter the objective. Disabled components are
/// reported as zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossToggles {
    pub recon: bool,
    pub trans: bool,
    pub cyc: bool,
    pub align: bool,
}

impl Default for LossToggles {
    fn default() -> Self {
        Self {
            recon: true,
            trans: true,
            cyc: true,
            align: true,
        }
    }
}

impl LossToggles {
    /// Disable a component by name (`recon`, `trans`, `cyc`, `align`).
    pub fn disable(&mut self, name: &str) -> Result<()> {
        match name.trim() {
            "recon" => self.recon = false,
            "trans" => self.trans = false,
            "cyc" => self.cyc = false,
            "align" => self.align = false,
            other => {
                return Err(Error::config(format!(
                    "unknown loss component '{other}' (expected recon, trans, cyc or align)"
                )))
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    pub trans: f64,
    pub cyc: f64,
    pub align: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn from_parts(recon: f64, trans: f64, cyc: f64, align: f64) -> Self {
        let mut parts = Self {
            recon,
            trans,
            cyc,
            align,
            total: 0.0,
        };
        parts.total = total_loss(&parts);
        parts
    }

    pub(crate) fn accumulate(&mut self, other: &LossBreakdown, weight: f64) {
        self.recon += weight * other.recon;
        self.trans += weight * other.trans;
        self.cyc += weight * other.cyc;
        self.align += weight * other.align;
        self.total += weight * other.total;
    }
}

/// Unweighted sum of the four components.
pub fn total_loss(parts: &LossBreakdown) -> f64 {
    parts.recon + parts.trans + parts.cyc + parts.align
}
