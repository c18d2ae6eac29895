//! Dense row-major `f64` tensors and the numeric kernels shared by the
//! training graph and plain inference.

// Index loops mirror the subscript arithmetic of the kernels.
#![allow(clippy::needless_range_loop)]

use serde::{Deserialize, Serialize};

/// A dense row-major tensor of `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(numel, data.len(), "shape {shape:?} does not match data length {}", data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Self { shape, data: vec![0.0; numel] }
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let numel: usize = shape.iter().product();
        Self { shape, data: vec![value; numel] }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![], data: vec![value] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Value of a rank-0 (or single-element) tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of {} elements", self.data.len());
        self.data[0]
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// 2-D convolution with zero padding.
///
/// `x` is `[C, H, W]`, `w` is `[O, C, K, K]`, `b` is one bias per output
/// channel. Output is `[O, OH, OW]` with `OH = (H + 2*pad - K) / stride + 1`.
pub fn conv2d_forward(x: &Tensor, w: &Tensor, b: &[f64], stride: usize, pad: usize) -> Tensor {
    let (c, h, width) = (x.shape[0], x.shape[1], x.shape[2]);
    let (o, wc, k) = (w.shape[0], w.shape[1], w.shape[2]);
    assert_eq!(c, wc, "input channels {c} vs kernel channels {wc}");
    assert_eq!(w.shape[3], k, "square kernels only");
    assert_eq!(b.len(), o);
    assert!(stride >= 1);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (width + 2 * pad - k) / stride + 1;

    let mut out = Tensor::zeros(vec![o, oh, ow]);
    for oc in 0..o {
        for y in 0..oh {
            for xo in 0..ow {
                let mut acc = b[oc];
                for ic in 0..c {
                    let x_plane = &x.data[ic * h * width..(ic + 1) * h * width];
                    let w_block = &w.data[(oc * c + ic) * k * k..(oc * c + ic + 1) * k * k];
                    for ky in 0..k {
                        let iy = y * stride + ky;
                        if iy < pad || iy - pad >= h {
                            continue;
                        }
                        let iy = iy - pad;
                        let x0 = xo * stride;
                        let (kx_lo, kx_hi) = kernel_x_range(x0, k, pad, width);
                        let xrow = &x_plane[iy * width + (x0 + kx_lo - pad)..];
                        let wrow = &w_block[ky * k + kx_lo..ky * k + kx_hi];
                        for (xi, wi) in xrow.iter().zip(wrow) {
                            acc += xi * wi;
                        }
                    }
                }
                out.data[(oc * oh + y) * ow + xo] = acc;
            }
        }
    }
    out
}

/// Valid kernel-x span `[lo, hi)` for an output column starting at `x0`.
#[inline]
fn kernel_x_range(x0: usize, k: usize, pad: usize, width: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(x0);
    let hi = k.min(width + pad - x0);
    (lo, hi.max(lo))
}

/// Gradients of [`conv2d_forward`] with respect to input, weights, and bias.
pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    pad: usize,
) -> (Tensor, Tensor, Vec<f64>) {
    let (c, h, width) = (x.shape[0], x.shape[1], x.shape[2]);
    let (o, _, k) = (w.shape[0], w.shape[1], w.shape[2]);
    let (oh, ow) = (grad_out.shape[1], grad_out.shape[2]);

    let mut gx = Tensor::zeros(x.shape.clone());
    let mut gw = Tensor::zeros(w.shape.clone());
    let mut gb = vec![0.0; o];
    for oc in 0..o {
        for y in 0..oh {
            for xo in 0..ow {
                let g = grad_out.data[(oc * oh + y) * ow + xo];
                if g == 0.0 {
                    continue;
                }
                gb[oc] += g;
                for ic in 0..c {
                    let x_plane = &x.data[ic * h * width..(ic + 1) * h * width];
                    let gx_plane = &mut gx.data[ic * h * width..(ic + 1) * h * width];
                    let block = (oc * c + ic) * k * k;
                    for ky in 0..k {
                        let iy = y * stride + ky;
                        if iy < pad || iy - pad >= h {
                            continue;
                        }
                        let iy = iy - pad;
                        let x0 = xo * stride;
                        let (kx_lo, kx_hi) = kernel_x_range(x0, k, pad, width);
                        let base = iy * width + (x0 + kx_lo - pad);
                        let wrow = &w.data[block + ky * k + kx_lo..block + ky * k + kx_hi];
                        let gwrow =
                            &mut gw.data[block + ky * k + kx_lo..block + ky * k + kx_hi];
                        for i in 0..wrow.len() {
                            gx_plane[base + i] += g * wrow[i];
                            gwrow[i] += g * x_plane[base + i];
                        }
                    }
                }
            }
        }
    }
    (gx, gw, gb)
}

/// Bilinear interpolation of a single `[H, W]` plane to `[out_h, out_w]`,
/// with corner alignment (source and target corners map onto each other).
pub fn bilinear_resize(plane: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    assert_eq!(plane.len(), h * w);
    assert!(out_h >= 1 && out_w >= 1);
    let sy = if out_h > 1 && h > 1 { (h - 1) as f64 / (out_h - 1) as f64 } else { 0.0 };
    let sx = if out_w > 1 && w > 1 { (w - 1) as f64 / (out_w - 1) as f64 } else { 0.0 };

    let mut out = vec![0.0; out_h * out_w];
    for y in 0..out_h {
        let fy = y as f64 * sy;
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let dy = fy - y0 as f64;
        for x in 0..out_w {
            let fx = x as f64 * sx;
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let dx = fx - x0 as f64;
            out[y * out_w + x] = (1.0 - dy) * (1.0 - dx) * plane[y0 * w + x0]
                + (1.0 - dy) * dx * plane[y0 * w + x1]
                + dy * (1.0 - dx) * plane[y1 * w + x0]
                + dy * dx * plane[y1 * w + x1];
        }
    }
    out
}

/// Adjoint of [`bilinear_resize`]: scatter output gradients back to the source grid.
pub fn bilinear_resize_backward(
    grad_out: &[f64],
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f64> {
    assert_eq!(grad_out.len(), out_h * out_w);
    let sy = if out_h > 1 && h > 1 { (h - 1) as f64 / (out_h - 1) as f64 } else { 0.0 };
    let sx = if out_w > 1 && w > 1 { (w - 1) as f64 / (out_w - 1) as f64 } else { 0.0 };

    let mut gin = vec![0.0; h * w];
    for y in 0..out_h {
        let fy = y as f64 * sy;
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let dy = fy - y0 as f64;
        for x in 0..out_w {
            let fx = x as f64 * sx;
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let dx = fx - x0 as f64;
            let g = grad_out[y * out_w + x];
            gin[y0 * w + x0] += g * (1.0 - dy) * (1.0 - dx);
            gin[y0 * w + x1] += g * (1.0 - dy) * dx;
            gin[y1 * w + x0] += g * dy * (1.0 - dx);
            gin[y1 * w + x1] += g * dy * dx;
        }
    }
    gin
}

/// Average-pool a `[C, H, W]` tensor down to a `[C, gh, gw]` grid.
///
/// Bins partition the spatial extent with integer boundaries
/// `r0 = r*H/gh`, `r1 = (r+1)*H/gh`; requires `gh <= H` and `gw <= W`.
pub fn avgpool_to(x: &Tensor, gh: usize, gw: usize) -> Tensor {
    let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
    assert!(gh >= 1 && gw >= 1 && gh <= h && gw <= w);
    let mut out = Tensor::zeros(vec![c, gh, gw]);
    for ch in 0..c {
        for r in 0..gh {
            let (r0, r1) = (r * h / gh, (r + 1) * h / gh);
            for cc in 0..gw {
                let (c0, c1) = (cc * w / gw, (cc + 1) * w / gw);
                let mut acc = 0.0;
                for y in r0..r1 {
                    for xx in c0..c1 {
                        acc += x.data[(ch * h + y) * w + xx];
                    }
                }
                out.data[(ch * gh + r) * gw + cc] = acc / ((r1 - r0) * (c1 - c0)) as f64;
            }
        }
    }
    out
}

/// Adjoint of [`avgpool_to`].
pub fn avgpool_to_backward(grad_out: &Tensor, c: usize, h: usize, w: usize) -> Tensor {
    let (gh, gw) = (grad_out.shape()[1], grad_out.shape()[2]);
    let mut gin = Tensor::zeros(vec![c, h, w]);
    for ch in 0..c {
        for r in 0..gh {
            let (r0, r1) = (r * h / gh, (r + 1) * h / gh);
            for cc in 0..gw {
                let (c0, c1) = (cc * w / gw, (cc + 1) * w / gw);
                let g = grad_out.data()[(ch * gh + r) * gw + cc] / ((r1 - r0) * (c1 - c0)) as f64;
                for y in r0..r1 {
                    for xx in c0..c1 {
                        gin.data[(ch * h + y) * w + xx] += g;
                    }
                }
            }
        }
    }
    gin
}
