//! 0/255 binary rasters.

use crate::error::{Error, Result};

/// A 2-D raster whose pixels are exactly 0 (background) or 255 (foreground).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

pub const FG: u8 = 255;
pub const BG: u8 = 0;

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            data: vec![BG; width * height],
        }
    }

    /// Builds a mask from raw bytes; every value must be 0 or 255.
    pub fn from_bytes(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::dim(
                &[width, height],
                &[data.len()],
                "raster byte count must equal width*height",
            ));
        }
        if let Some(bad) = data.iter().find(|&&v| v != BG && v != FG) {
            return Err(Error::Contract(format!(
                "binary mask values must be 0 or 255, found {bad}"
            )));
        }
        Ok(BinaryMask {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col] == FG
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, foreground: bool) {
        self.data[row * self.width + col] = if foreground { FG } else { BG };
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == FG).count()
    }

    pub fn same_dims(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }
}
