//! Rotation + translation warps with bilinear sampling, and their exact
//! reverse-mode derivatives.
//!
//! A warp maps an output pixel `q` to the source coordinate
//! `s = R(-kappa) (q - anchor) + pivot`, i.e. the source is rotated by
//! `kappa` about `pivot` and then moved so that `pivot` lands on `anchor`.
//! Source reads outside the grid return a caller-supplied fill value, which
//! keeps the sampled field continuous across the border.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::Grid2D;
use crate::error::{Error, Result};

/// Translation in pixels and rotation in radians about the grid center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub tx: f64,
    pub ty: f64,
    pub kappa: f64,
}

impl AffineParams {
    pub fn new(tx: f64, ty: f64, kappa: f64) -> Self {
        Self {
            tx,
            ty,
            kappa: normalize_angle(kappa),
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(kappa: f64) -> f64 {
    let k = kappa.rem_euclid(TAU);
    if k >= TAU {
        0.0
    } else {
        k
    }
}

/// Gradient with respect to the three affine parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AffineGrad {
    pub tx: f64,
    pub ty: f64,
    pub kappa: f64,
}

/// Axis-aligned sub-rectangle of an output grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct WarpRegion {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl WarpRegion {
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            x0: 0,
            y0: 0,
            width,
            height,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn intersect(&self, other: &WarpRegion) -> WarpRegion {
        let x0 = self.x0.max(other.x0);
        let y0 = self.y0.max(other.y0);
        let x1 = (self.x0 + self.width).min(other.x0 + other.width);
        let y1 = (self.y0 + self.height).min(other.y0 + other.height);
        if x1 <= x0 || y1 <= y0 {
            return WarpRegion::default();
        }
        WarpRegion {
            x0,
            y0,
            width: x1 - x0,
            height: y1 - y0,
        }
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && y >= self.y0 && x < self.x0 + self.width && y < self.y0 + self.height
    }
}

/// Gradient of `sum(upstream * warp(src))`.
#[derive(Clone, Debug)]
pub struct WarpGrad {
    pub src: Grid2D,
    pub anchor: (f64, f64),
    pub kappa: f64,
}

/// A warp from a source grid into output coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlacedWarp {
    pub anchor: (f64, f64),
    pub pivot: (f64, f64),
    pub kappa: f64,
}

impl PlacedWarp {
    #[inline]
    fn source_coord(&self, cos: f64, sin: f64, x: f64, y: f64) -> (f64, f64) {
        let dx = x - self.anchor.0;
        let dy = y - self.anchor.1;
        (
            cos * dx + sin * dy + self.pivot.0,
            -sin * dx + cos * dy + self.pivot.1,
        )
    }

    /// Smallest output rectangle outside of which every pixel reads `fill`.
    pub fn footprint(&self, src_w: usize, src_h: usize, out_w: usize, out_h: usize) -> WarpRegion {
        let (sin, cos) = self.kappa.sin_cos();
        let corners = [
            (-1.0, -1.0),
            (src_w as f64, -1.0),
            (-1.0, src_h as f64),
            (src_w as f64, src_h as f64),
        ];
        let (mut lx, mut ly, mut hx, mut hy) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (sx, sy) in corners {
            let dx = sx - self.pivot.0;
            let dy = sy - self.pivot.1;
            let qx = cos * dx - sin * dy + self.anchor.0;
            let qy = sin * dx + cos * dy + self.anchor.1;
            lx = lx.min(qx);
            ly = ly.min(qy);
            hx = hx.max(qx);
            hy = hy.max(qy);
        }
        let x0 = lx.floor().max(0.0);
        let y0 = ly.floor().max(0.0);
        let x1 = (hx.ceil() + 1.0).min(out_w as f64);
        let y1 = (hy.ceil() + 1.0).min(out_h as f64);
        if x1 <= x0 || y1 <= y0 {
            return WarpRegion::default();
        }
        WarpRegion {
            x0: x0 as usize,
            y0: y0 as usize,
            width: (x1 - x0) as usize,
            height: (y1 - y0) as usize,
        }
    }

    /// Samples `src` over `region` of the output; the result is
    /// `region.width x region.height`.
    pub fn forward(&self, src: &Grid2D, region: WarpRegion, fill: f64) -> Grid2D {
        let (sin, cos) = self.kappa.sin_cos();
        let mut out = Vec::with_capacity(region.width * region.height);
        for j in 0..region.height {
            let y = (region.y0 + j) as f64;
            for i in 0..region.width {
                let x = (region.x0 + i) as f64;
                let (sx, sy) = self.source_coord(cos, sin, x, y);
                out.push(bilinear(src, sx, sy, fill).0);
            }
        }
        Grid2D::from_fn(region.width, region.height, |x, y| out[y * region.width + x])
    }

    /// Reverse-mode derivative of `sum(upstream * forward(src, region, fill))`.
    pub fn backward(&self, src: &Grid2D, region: WarpRegion, upstream: &Grid2D, fill: f64) -> WarpGrad {
        debug_assert_eq!(upstream.dims(), (region.width, region.height));
        let (sin, cos) = self.kappa.sin_cos();
        let (w, h) = src.dims();
        let mut gsrc = Grid2D::zeros(w, h);
        let (mut gax, mut gay, mut gk) = (0.0, 0.0, 0.0);
        for j in 0..region.height {
            let y = (region.y0 + j) as f64;
            for i in 0..region.width {
                let u = upstream.get(i, j);
                if u == 0.0 {
                    continue;
                }
                let x = (region.x0 + i) as f64;
                let (sx, sy) = self.source_coord(cos, sin, x, y);
                let (_, dvx, dvy) = bilinear(src, sx, sy, fill);
                scatter_bilinear(&mut gsrc, sx, sy, u);
                let gx = u * dvx;
                let gy = u * dvy;
                // ds/danchor = -R(-kappa); ds/dkappa = (sy - py, -(sx - px)).
                gax += -cos * gx + sin * gy;
                gay += -sin * gx - cos * gy;
                gk += gx * (sy - self.pivot.1) - gy * (sx - self.pivot.0);
            }
        }
        WarpGrad {
            src: gsrc,
            anchor: (gax, gay),
            kappa: gk,
        }
    }
}

#[inline]
fn fetch(src: &Grid2D, x: i64, y: i64, fill: f64) -> f64 {
    if x < 0 || y < 0 || x >= src.width() as i64 || y >= src.height() as i64 {
        fill
    } else {
        src.get(x as usize, y as usize)
    }
}

/// Bilinear value and its partial derivatives in `sx`, `sy`.
#[inline]
fn bilinear(src: &Grid2D, sx: f64, sy: f64, fill: f64) -> (f64, f64, f64) {
    let x0f = sx.floor();
    let y0f = sy.floor();
    let fx = sx - x0f;
    let fy = sy - y0f;
    let x0 = x0f as i64;
    let y0 = y0f as i64;
    let a = fetch(src, x0, y0, fill);
    let b = fetch(src, x0 + 1, y0, fill);
    let c = fetch(src, x0, y0 + 1, fill);
    let d = fetch(src, x0 + 1, y0 + 1, fill);
    let v = (1.0 - fx) * (1.0 - fy) * a + fx * (1.0 - fy) * b + (1.0 - fx) * fy * c + fx * fy * d;
    let dx = (1.0 - fy) * (b - a) + fy * (d - c);
    let dy = (1.0 - fx) * (c - a) + fx * (d - b);
    (v, dx, dy)
}

#[inline]
fn scatter_bilinear(g: &mut Grid2D, sx: f64, sy: f64, u: f64) {
    let x0f = sx.floor();
    let y0f = sy.floor();
    let fx = sx - x0f;
    let fy = sy - y0f;
    let x0 = x0f as i64;
    let y0 = y0f as i64;
    let (w, h) = (g.width() as i64, g.height() as i64);
    let mut add = |x: i64, y: i64, wgt: f64| {
        if x >= 0 && y >= 0 && x < w && y < h {
            let idx = y as usize * g.width() + x as usize;
            g.data_mut()[idx] += wgt * u;
        }
    };
    add(x0, y0, (1.0 - fx) * (1.0 - fy));
    add(x0 + 1, y0, fx * (1.0 - fy));
    add(x0, y0 + 1, (1.0 - fx) * fy);
    add(x0 + 1, y0 + 1, fx * fy);
}

fn same_size_warp(src: &Grid2D, params: &AffineParams) -> PlacedWarp {
    let cx = (src.width() as f64 - 1.0) / 2.0;
    let cy = (src.height() as f64 - 1.0) / 2.0;
    PlacedWarp {
        anchor: (cx + params.tx, cy + params.ty),
        pivot: (cx, cy),
        kappa: params.kappa,
    }
}

/// Rotates `src` by `kappa` about its geometric center, then translates it
/// by `(tx, ty)`. Output has the dimensions of `src`.
pub fn affine_warp(src: &Grid2D, params: &AffineParams, fill: f64) -> Grid2D {
    let warp = same_size_warp(src, params);
    warp.forward(src, WarpRegion::full(src.width(), src.height()), fill)
}

/// Gradient of `sum(upstream * affine_warp(src, params, fill))` with respect
/// to every source pixel and to `(tx, ty, kappa)`.
pub fn warp_backward(
    src: &Grid2D,
    params: &AffineParams,
    upstream: &Grid2D,
    fill: f64,
) -> Result<(Grid2D, AffineGrad)> {
    if upstream.dims() != src.dims() {
        return Err(Error::Dimension(format!(
            "upstream {:?} does not match warp output {:?}",
            upstream.dims(),
            src.dims()
        )));
    }
    let warp = same_size_warp(src, params);
    let g = warp.backward(src, WarpRegion::full(src.width(), src.height()), upstream, fill);
    Ok((
        g.src,
        AffineGrad {
            tx: g.anchor.0,
            ty: g.anchor.1,
            kappa: g.kappa,
        },
    ))
}
