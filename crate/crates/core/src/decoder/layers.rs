//! Layer kernels on channel-last (`[h, w, c]`) activations.
//!
//! Convolution weights are laid out `[ky, kx, c_in, c_out]` so the innermost
//! loops run over contiguous output channels.

/// Stride-2 transposed convolution with kernel `k` (odd), padding
/// `(k - 1) / 2` and one row/column of output padding, so the output is
/// exactly `2h x 2w`.
pub fn tconv2_forward(
    input: &[f64],
    h: usize,
    w: usize,
    cin: usize,
    kernel: &[f64],
    bias: &[f64],
    k: usize,
    cout: usize,
    out: &mut [f64],
) {
    let (oh, ow) = (2 * h, 2 * w);
    debug_assert_eq!(out.len(), oh * ow * cout);
    for px in out.chunks_exact_mut(cout) {
        px.copy_from_slice(bias);
    }
    let pad = (k - 1) / 2;
    for iy in 0..h {
        for ix in 0..w {
            let inp = &input[(iy * w + ix) * cin..(iy * w + ix + 1) * cin];
            for ky in 0..k {
                let y = (2 * iy + ky) as isize - pad as isize;
                if y < 0 || y >= oh as isize {
                    continue;
                }
                for kx in 0..k {
                    let x = (2 * ix + kx) as isize - pad as isize;
                    if x < 0 || x >= ow as isize {
                        continue;
                    }
                    let o = &mut out[(y as usize * ow + x as usize) * cout..][..cout];
                    let kbase = (ky * k + kx) * cin * cout;
                    for (i, &v) in inp.iter().enumerate() {
                        if v == 0.0 {
                            continue;
                        }
                        let kr = &kernel[kbase + i * cout..kbase + (i + 1) * cout];
                        for (oo, &kk) in o.iter_mut().zip(kr) {
                            *oo += v * kk;
                        }
                    }
                }
            }
        }
    }
}

/// Backward of [`tconv2_forward`]; gradients are accumulated (`+=`).
pub fn tconv2_backward(
    input: &[f64],
    h: usize,
    w: usize,
    cin: usize,
    kernel: &[f64],
    k: usize,
    cout: usize,
    grad_out: &[f64],
    grad_in: Option<&mut [f64]>,
    grad_kernel: &mut [f64],
    grad_bias: &mut [f64],
) {
    let (oh, ow) = (2 * h, 2 * w);
    for go in grad_out.chunks_exact(cout) {
        for (b, g) in grad_bias.iter_mut().zip(go) {
            *b += g;
        }
    }
    let pad = (k - 1) / 2;
    let mut grad_in = grad_in;
    for iy in 0..h {
        for ix in 0..w {
            let pix = iy * w + ix;
            for ky in 0..k {
                let y = (2 * iy + ky) as isize - pad as isize;
                if y < 0 || y >= oh as isize {
                    continue;
                }
                for kx in 0..k {
                    let x = (2 * ix + kx) as isize - pad as isize;
                    if x < 0 || x >= ow as isize {
                        continue;
                    }
                    let go = &grad_out[(y as usize * ow + x as usize) * cout..][..cout];
                    let kbase = (ky * k + kx) * cin * cout;
                    for i in 0..cin {
                        let v = input[pix * cin + i];
                        let kr = &kernel[kbase + i * cout..kbase + (i + 1) * cout];
                        let gk = &mut grad_kernel[kbase + i * cout..kbase + (i + 1) * cout];
                        let mut acc = 0.0;
                        for ((g, &kk), gkk) in go.iter().zip(kr).zip(gk.iter_mut()) {
                            acc += g * kk;
                            *gkk += v * g;
                        }
                        if let Some(gi) = grad_in.as_deref_mut() {
                            gi[pix * cin + i] += acc;
                        }
                    }
                }
            }
        }
    }
}

/// Stride-1 "same" convolution with kernel `k` (odd).
pub fn conv_same_forward(
    input: &[f64],
    h: usize,
    w: usize,
    cin: usize,
    kernel: &[f64],
    bias: &[f64],
    k: usize,
    cout: usize,
    out: &mut [f64],
) {
    let pad = (k - 1) / 2;
    for y in 0..h {
        for x in 0..w {
            let o = &mut out[(y * w + x) * cout..][..cout];
            o.copy_from_slice(bias);
            for ky in 0..k {
                let sy = (y + ky) as isize - pad as isize;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for kx in 0..k {
                    let sx = (x + kx) as isize - pad as isize;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let inp = &input[(sy as usize * w + sx as usize) * cin..][..cin];
                    let kbase = (ky * k + kx) * cin * cout;
                    for (i, &v) in inp.iter().enumerate() {
                        let kr = &kernel[kbase + i * cout..kbase + (i + 1) * cout];
                        for (oo, &kk) in o.iter_mut().zip(kr) {
                            *oo += v * kk;
                        }
                    }
                }
            }
        }
    }
}

/// Backward of [`conv_same_forward`]; gradients are accumulated.
pub fn conv_same_backward(
    input: &[f64],
    h: usize,
    w: usize,
    cin: usize,
    kernel: &[f64],
    k: usize,
    cout: usize,
    grad_out: &[f64],
    grad_in: &mut [f64],
    grad_kernel: &mut [f64],
    grad_bias: &mut [f64],
) {
    let pad = (k - 1) / 2;
    for y in 0..h {
        for x in 0..w {
            let go = &grad_out[(y * w + x) * cout..][..cout];
            for (b, g) in grad_bias.iter_mut().zip(go) {
                *b += g;
            }
            for ky in 0..k {
                let sy = (y + ky) as isize - pad as isize;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for kx in 0..k {
                    let sx = (x + kx) as isize - pad as isize;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let sp = sy as usize * w + sx as usize;
                    let kbase = (ky * k + kx) * cin * cout;
                    for i in 0..cin {
                        let v = input[sp * cin + i];
                        let kr = &kernel[kbase + i * cout..kbase + (i + 1) * cout];
                        let gk = &mut grad_kernel[kbase + i * cout..kbase + (i + 1) * cout];
                        let mut acc = 0.0;
                        for ((g, &kk), gkk) in go.iter().zip(kr).zip(gk.iter_mut()) {
                            acc += g * kk;
                            *gkk += v * g;
                        }
                        grad_in[sp * cin + i] += acc;
                    }
                }
            }
        }
    }
}

pub const LEAKY_SLOPE: f64 = 0.2;

#[inline]
pub fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

#[inline]
pub fn leaky_deriv(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}
