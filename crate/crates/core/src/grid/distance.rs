//! Exact Euclidean signed distance transform.
//!
//! Squared distances are computed with two separable passes of the lower
//! envelope of parabolas (Felzenszwalb & Huttenlocher), so results are exact
//! on the pixel-center lattice.

use super::{BinaryMask, Grid2D, LevelSet};
use crate::error::{Error, Result};

const INF: f64 = 1e20;

/// Squared distance from every pixel to the nearest pixel whose mask value
/// equals `target`. Pixels with no such pixel anywhere get `f64::INFINITY`.
pub fn squared_distance_to(mask: &BinaryMask, target: bool) -> Grid2D {
    let (w, h) = mask.dims();
    let mut f: Vec<f64> = mask
        .data()
        .iter()
        .map(|&v| if (v != 0) == target { 0.0 } else { INF })
        .collect();

    let n = w.max(h);
    let mut line = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    for x in 0..w {
        for y in 0..h {
            line[y] = f[y * w + x];
        }
        envelope_1d(&line[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            f[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        line[..w].copy_from_slice(&f[y * w..(y + 1) * w]);
        envelope_1d(&line[..w], &mut out[..w], &mut v, &mut z);
        f[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    for d in &mut f {
        if *d >= INF * 0.5 {
            *d = f64::INFINITY;
        }
    }
    Grid2D::from_fn(w, h, |x, y| f[y * w + x])
}

fn envelope_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let Some(first) = f.iter().position(|&x| x < INF) else {
        d.fill(INF);
        return;
    };
    // Sites with no target pixel never contribute to the envelope.
    let mut k = 0usize;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if f[q] >= INF {
            continue;
        }
        let qf = q as f64;
        let mut s;
        loop {
            let p = v[k] as f64;
            s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * qf - 2.0 * p);
            // z[0] is -inf, so this never underflows k.
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, dq_out) in d.iter_mut().enumerate().take(n) {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let dq = qf - v[k] as f64;
        *dq_out = dq * dq + f[v[k]];
    }
}

/// Signed distance field of `mask`: `+d` inside, `-d` outside, where `d` is
/// the Euclidean distance between pixel centers to the nearest pixel of the
/// opposite value. Values are clamped to `[-clamp, clamp]`; uniform masks map
/// to the constant `±clamp`.
pub fn signed_distance(mask: &BinaryMask, clamp: f64) -> Result<LevelSet> {
    let (w, h) = mask.dims();
    if w == 0 || h == 0 {
        return Err(Error::Dimension("signed distance of a zero-sized mask".into()));
    }
    if !(clamp > 0.0) {
        return Err(Error::Argument(format!("clamp must be positive, got {clamp}")));
    }
    let to_inside = squared_distance_to(mask, true);
    let to_outside = squared_distance_to(mask, false);
    let grid = Grid2D::from_fn(w, h, |x, y| {
        let d = if mask.get(x, y) {
            to_outside.get(x, y).sqrt()
        } else {
            -to_inside.get(x, y).sqrt()
        };
        d.clamp(-clamp, clamp)
    });
    Ok(LevelSet(grid))
}
