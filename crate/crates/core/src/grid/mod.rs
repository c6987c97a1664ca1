//! Dense 2-D rasters and the pixel-level primitives built on them.
//!
//! Everything is row-major with `x` the column index and `y` the row index.
//! Real-valued grids use `f64` throughout; on-disk tensors are `f32`
//! (see [`crate::tensor`]).

mod distance;
mod smooth;
mod warp;

pub use distance::{signed_distance, squared_distance_to};
pub use smooth::{
    smooth_heaviside, smooth_heaviside_deriv, smooth_max, smooth_max_with_grad, SmoothMaxVariant,
    SmoothParams,
};
pub use warp::{
    affine_warp, normalize_angle, warp_backward, AffineGrad, AffineParams, PlacedWarp, WarpGrad, WarpRegion,
};

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Grid2D {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Grid2D {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "grid data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("non-finite grid value at index {i}")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid2D {
        Grid2D {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Mask of pixels with value `>= threshold`.
    pub fn threshold(&self, threshold: f64) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| u8::from(v >= threshold)).collect(),
        }
    }
}

/// A {0,1} raster.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "mask data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(i) = data.iter().position(|&v| v > 1) {
            return Err(Error::Argument(format!(
                "mask value {} at index {i} is not 0 or 1",
                data[i]
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(u8::from(f(x, y)));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Converts a real grid with values exactly 0 or 1.
    pub fn from_grid(grid: &Grid2D) -> Result<Self> {
        let mut data = Vec::with_capacity(grid.len());
        for (i, &v) in grid.data().iter().enumerate() {
            if v == 0.0 {
                data.push(0);
            } else if v == 1.0 {
                data.push(1);
            } else {
                return Err(Error::Argument(format!(
                    "value {v} at index {i} is not a mask value"
                )));
            }
        }
        Ok(Self {
            width: grid.width(),
            height: grid.height(),
            data,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = u8::from(v);
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_uniform(&self) -> bool {
        let a = self.area();
        a == 0 || a == self.data.len()
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| 1 - v).collect(),
        }
    }

    pub fn to_grid(&self) -> Grid2D {
        Grid2D {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f64::from(v)).collect(),
        }
    }

    /// Pixel centroid `(x, y)`, or `None` for an empty mask.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    sx += x as f64;
                    sy += y as f64;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)` of the set pixels.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    bb = Some(match bb {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        bb
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> usize {
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a != 0 && b != 0)
            .count()
    }

    /// Shifts the content by an integer offset; vacated pixels become 0.
    pub fn shifted(&self, dx: i64, dy: i64) -> BinaryMask {
        let mut out = BinaryMask::empty(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let sx = x as i64 - dx;
                let sy = y as i64 - dy;
                if sx >= 0 && sy >= 0 && (sx as usize) < self.width && (sy as usize) < self.height {
                    out.set(x, y, self.get(sx as usize, sy as usize));
                }
            }
        }
        out
    }
}

/// A level-set field: positive inside the shape, negative outside, contour
/// at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSet(pub Grid2D);

impl LevelSet {
    pub fn into_grid(self) -> Grid2D {
        self.0
    }

    /// Inside region `{phi >= 0}`.
    pub fn inside(&self) -> BinaryMask {
        self.0.threshold(0.0)
    }
}

impl Deref for LevelSet {
    type Target = Grid2D;
    fn deref(&self) -> &Grid2D {
        &self.0
    }
}

impl DerefMut for LevelSet {
    fn deref_mut(&mut self) -> &mut Grid2D {
        &mut self.0
    }
}

impl From<Grid2D> for LevelSet {
    fn from(g: Grid2D) -> Self {
        LevelSet(g)
    }
}

/// Integer center pixel of a window, used as the rotation pivot and the
/// anchor when a window is placed into image coordinates.
#[inline]
pub fn window_center(width: usize, height: usize) -> (f64, f64) {
    ((width / 2) as f64, (height / 2) as f64)
}
