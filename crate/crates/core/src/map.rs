//! Single-band H×W grids: binary masks and real-valued maps.

use crate::error::{Error, Result};

/// Binary H×W grid, row-major. Used for the training change mask, ground
/// truth and the final change map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMap {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

pub type ChangeMask = BinaryMap;
pub type ChangeMap = BinaryMap;

impl BinaryMap {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![1; height * width],
        }
    }

    /// Fails unless every entry is 0 or 1.
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(format!(
                "binary map {}x{} needs {} entries, got {}",
                height,
                width,
                height * width,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(Error::validation(format!(
                "binary map contains non-binary value {v}"
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c) as u8);
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value as u8;
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    /// Complement `1 - P`.
    pub fn inverted(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| 1 - v).collect(),
        }
    }

    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Self {
        assert!(row + height <= self.height && col + width <= self.width);
        let mut data = Vec::with_capacity(height * width);
        for r in row..row + height {
            data.extend_from_slice(&self.data[r * self.width + col..r * self.width + col + width]);
        }
        Self {
            height,
            width,
            data,
        }
    }
}

/// Real-valued H×W grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// Nonnegative per-pixel dissimilarity between the two acquisitions.
pub type DifferenceImage = ScalarMap;

impl ScalarMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(format!(
                "map {}x{} needs {} entries, got {}",
                height,
                width,
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_binary_values() {
        assert!(matches!(
            BinaryMap::new(1, 2, vec![0, 2]),
            Err(Error::Validation(_))
        ));
        assert!(matches!(BinaryMap::new(2, 2, vec![0, 1]), Err(Error::Shape(_))));
    }

    #[test]
    fn crop_and_invert() {
        let m = BinaryMap::from_fn(3, 4, |r, c| (r + c) % 2 == 0);
        let c = m.crop(1, 1, 2, 2);
        assert_eq!(c.data(), &[1, 0, 0, 1]);
        assert_eq!(c.inverted().data(), &[0, 1, 1, 0]);
        assert_eq!(m.count_ones() + m.inverted().count_ones(), 12);
    }
}
