//! Reverse-mode differentiation over a per-step tape.
//!
//! The tape evaluates eagerly: every builder method computes its forward
//! value immediately, so intermediate values can be inspected while the
//! graph is being assembled. `backward` then walks the nodes in reverse
//! and accumulates gradients for everything reachable from a parameter.
//!
//! The op set is exactly what the classification and region-contrast
//! objectives need; there is no broadcasting machinery.

// Index loops mirror the subscript arithmetic of the kernels.
#![allow(clippy::needless_range_loop)]

use std::rc::Rc;

use crate::tensor::{
    avgpool_to, avgpool_to_backward, bilinear_resize, bilinear_resize_backward, conv2d_backward,
    conv2d_forward, Tensor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

enum Op {
    Leaf,
    AffineScalar { x: VarId, scale: f64 },
    Conv2d { x: VarId, w: VarId, b: VarId, stride: usize, pad: usize },
    Relu { x: VarId },
    Softplus { x: VarId },
    Sigmoid { x: VarId },
    SliceChannel { x: VarId, channel: usize },
    BilinearUp { x: VarId, out_h: usize, out_w: usize },
    OneMinus { x: VarId },
    MulConst { x: VarId, factor: Rc<Tensor> },
    MaskImage { mask: VarId, image: Rc<Tensor> },
    AvgPoolTo { x: VarId },
    ColorExpand { x: VarId },
    FixedAffine { x: VarId, matrix: Rc<Tensor> },
    CosineConst { x: VarId, anchor: Rc<Vec<f64>>, anchor_norm: f64 },
    LogSumExp { xs: Vec<VarId> },
    LinComb { terms: Vec<(VarId, f64)> },
    MeanAll { x: VarId },
    GapSpatial { x: VarId },
    BceWithLogits { x: VarId, targets: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> VarId {
        self.nodes.push(Node { value, op, needs_grad });
        self.grads.push(None);
        VarId(self.nodes.len() - 1)
    }

    fn needs(&self, id: VarId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Register a constant input; no gradient is tracked through it.
    pub fn constant(&mut self, t: Tensor) -> VarId {
        self.push(t, Op::Leaf, false)
    }

    /// Register a trainable input; `grad` is available after `backward`.
    pub fn param(&mut self, t: Tensor) -> VarId {
        self.push(t, Op::Leaf, true)
    }

    pub fn value(&self, id: VarId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: VarId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    pub fn conv2d(&mut self, x: VarId, w: VarId, b: VarId, stride: usize, pad: usize) -> VarId {
        let value =
            conv2d_forward(self.value(x), self.value(w), self.value(b).data(), stride, pad);
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(value, Op::Conv2d { x, w, b, stride, pad }, needs)
    }

    /// Elementwise `scale * x + shift`.
    pub fn affine_scalar(&mut self, x: VarId, scale: f64, shift: f64) -> VarId {
        let v = self.value(x);
        let value = Tensor::new(
            v.shape().to_vec(),
            v.data().iter().map(|&a| scale * a + shift).collect(),
        );
        let needs = self.needs(x);
        self.push(value, Op::AffineScalar { x, scale }, needs)
    }

    pub fn relu(&mut self, x: VarId) -> VarId {
        let v = self.value(x);
        let value = Tensor::new(v.shape().to_vec(), v.data().iter().map(|a| a.max(0.0)).collect());
        let needs = self.needs(x);
        self.push(value, Op::Relu { x }, needs)
    }

    pub fn softplus(&mut self, x: VarId) -> VarId {
        let v = self.value(x);
        let value = Tensor::new(
            v.shape().to_vec(),
            v.data().iter().map(|&a| a.max(0.0) + (-a.abs()).exp().ln_1p()).collect(),
        );
        let needs = self.needs(x);
        self.push(value, Op::Softplus { x }, needs)
    }

    pub fn sigmoid(&mut self, x: VarId) -> VarId {
        let v = self.value(x);
        let value = Tensor::new(v.shape().to_vec(), v.data().iter().map(|&a| sigmoid(a)).collect());
        let needs = self.needs(x);
        self.push(value, Op::Sigmoid { x }, needs)
    }

    /// Select channel `k` of a `[K, H, W]` tensor as an `[H, W]` plane.
    pub fn slice_channel(&mut self, x: VarId, channel: usize) -> VarId {
        let v = self.value(x);
        let (k, h, w) = (v.shape()[0], v.shape()[1], v.shape()[2]);
        assert!(channel < k);
        let value =
            Tensor::new(vec![h, w], v.data()[channel * h * w..(channel + 1) * h * w].to_vec());
        let needs = self.needs(x);
        self.push(value, Op::SliceChannel { x, channel }, needs)
    }

    /// Corner-aligned bilinear upsampling of an `[H, W]` plane.
    pub fn bilinear_up(&mut self, x: VarId, out_h: usize, out_w: usize) -> VarId {
        let v = self.value(x);
        let (h, w) = (v.shape()[0], v.shape()[1]);
        let value = Tensor::new(vec![out_h, out_w], bilinear_resize(v.data(), h, w, out_h, out_w));
        let needs = self.needs(x);
        self.push(value, Op::BilinearUp { x, out_h, out_w }, needs)
    }

    pub fn one_minus(&mut self, x: VarId) -> VarId {
        let v = self.value(x);
        let value = Tensor::new(v.shape().to_vec(), v.data().iter().map(|a| 1.0 - a).collect());
        let needs = self.needs(x);
        self.push(value, Op::OneMinus { x }, needs)
    }

    /// Elementwise product with a constant of identical shape.
    pub fn mul_const(&mut self, x: VarId, factor: Tensor) -> VarId {
        let v = self.value(x);
        assert_eq!(v.shape(), factor.shape());
        let value = Tensor::new(
            v.shape().to_vec(),
            v.data().iter().zip(factor.data()).map(|(a, b)| a * b).collect(),
        );
        let needs = self.needs(x);
        self.push(value, Op::MulConst { x, factor: Rc::new(factor) }, needs)
    }

    /// Multiply a constant `[C, H, W]` image by an `[H, W]` mask plane.
    pub fn mask_image(&mut self, mask: VarId, image: Rc<Tensor>) -> VarId {
        let m = self.value(mask);
        let (c, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
        assert_eq!(m.shape(), &[h, w], "mask resolution must match the image");
        let mut data = vec![0.0; c * h * w];
        for ch in 0..c {
            for i in 0..h * w {
                data[ch * h * w + i] = image.data()[ch * h * w + i] * m.data()[i];
            }
        }
        let needs = self.needs(mask);
        self.push(Tensor::new(vec![c, h, w], data), Op::MaskImage { mask, image }, needs)
    }

    pub fn avgpool_to(&mut self, x: VarId, gh: usize, gw: usize) -> VarId {
        let value = avgpool_to(self.value(x), gh, gw);
        let needs = self.needs(x);
        self.push(value, Op::AvgPoolTo { x }, needs)
    }

    /// Quadratic color statistics: `[3, H, W] -> [9, H, W]` with channels
    /// `(r, g, b, r^2, g^2, b^2, rg, rb, gb)` per cell.
    pub fn color_expand(&mut self, x: VarId) -> VarId {
        let v = self.value(x);
        assert_eq!(v.shape()[0], 3, "color expansion expects RGB input");
        let (h, w) = (v.shape()[1], v.shape()[2]);
        let hw = h * w;
        let mut data = vec![0.0; 9 * hw];
        for i in 0..hw {
            let (r, g, b) = (v.data()[i], v.data()[hw + i], v.data()[2 * hw + i]);
            data[i] = r;
            data[hw + i] = g;
            data[2 * hw + i] = b;
            data[3 * hw + i] = r * r;
            data[4 * hw + i] = g * g;
            data[5 * hw + i] = b * b;
            data[6 * hw + i] = r * g;
            data[7 * hw + i] = r * b;
            data[8 * hw + i] = g * b;
        }
        let needs = self.needs(x);
        self.push(Tensor::new(vec![9, h, w], data), Op::ColorExpand { x }, needs)
    }

    /// `out = M * [flatten(x); bias_feature]` for a fixed matrix `M` of
    /// shape `[D, numel(x) + 1]`.
    pub fn fixed_affine(&mut self, x: VarId, matrix: Rc<Tensor>, bias_feature: f64) -> VarId {
        let v = self.value(x);
        let n = v.numel();
        let d = matrix.shape()[0];
        assert_eq!(matrix.shape()[1], n + 1, "projection expects {} features", n + 1);
        let mut out = vec![0.0; d];
        for row in 0..d {
            let m = &matrix.data()[row * (n + 1)..(row + 1) * (n + 1)];
            let mut acc = m[n] * bias_feature;
            for i in 0..n {
                acc += m[i] * v.data()[i];
            }
            out[row] = acc;
        }
        let needs = self.needs(x);
        self.push(Tensor::new(vec![d], out), Op::FixedAffine { x, matrix }, needs)
    }

    /// Cosine similarity between a variable vector and a constant anchor.
    ///
    /// Panics if either vector has zero norm; callers are responsible for
    /// feeding embeddable inputs.
    pub fn cosine_const(&mut self, x: VarId, anchor: Rc<Vec<f64>>) -> VarId {
        let v = self.value(x);
        assert_eq!(v.numel(), anchor.len());
        let anchor_norm = norm(&anchor);
        let vnorm = norm(v.data());
        assert!(anchor_norm > 0.0, "cosine anchor has zero norm");
        assert!(vnorm > 0.0, "cosine input has zero norm");
        let dot: f64 = v.data().iter().zip(anchor.iter()).map(|(a, b)| a * b).sum();
        let value = Tensor::scalar(dot / (vnorm * anchor_norm));
        let needs = self.needs(x);
        self.push(value, Op::CosineConst { x, anchor, anchor_norm }, needs)
    }

    /// Numerically stable `log(sum(exp(x_i)))` over scalar variables.
    pub fn logsumexp(&mut self, xs: &[VarId]) -> VarId {
        assert!(!xs.is_empty());
        let vals: Vec<f64> = xs.iter().map(|&id| self.value(id).item()).collect();
        let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = vals.iter().map(|v| (v - m).exp()).sum();
        let value = Tensor::scalar(m + sum.ln());
        let needs = xs.iter().any(|&id| self.needs(id));
        self.push(value, Op::LogSumExp { xs: xs.to_vec() }, needs)
    }

    /// Scalar linear combination `sum_i c_i * x_i`.
    pub fn lin_comb(&mut self, terms: &[(VarId, f64)]) -> VarId {
        let acc: f64 = terms.iter().map(|&(id, c)| c * self.value(id).item()).sum();
        let needs = terms.iter().any(|&(id, _)| self.needs(id));
        self.push(Tensor::scalar(acc), Op::LinComb { terms: terms.to_vec() }, needs)
    }

    /// Mean over every element of a tensor.
    pub fn mean_all(&mut self, x: VarId) -> VarId {
        let v = self.value(x);
        let value = Tensor::scalar(v.data().iter().sum::<f64>() / v.numel() as f64);
        let needs = self.needs(x);
        self.push(value, Op::MeanAll { x }, needs)
    }

    /// Global average pooling: `[C, H, W] -> [C]`.
    pub fn gap_spatial(&mut self, x: VarId) -> VarId {
        let v = self.value(x);
        let (c, h, w) = (v.shape()[0], v.shape()[1], v.shape()[2]);
        let mut out = vec![0.0; c];
        for ch in 0..c {
            out[ch] = v.data()[ch * h * w..(ch + 1) * h * w].iter().sum::<f64>() / (h * w) as f64;
        }
        let needs = self.needs(x);
        self.push(Tensor::new(vec![c], out), Op::GapSpatial { x }, needs)
    }

    /// Mean binary cross-entropy between logits and fixed 0/1 targets.
    pub fn bce_with_logits(&mut self, x: VarId, targets: Vec<f64>) -> VarId {
        let v = self.value(x);
        assert_eq!(v.numel(), targets.len());
        let total: f64 = v
            .data()
            .iter()
            .zip(&targets)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum();
        let value = Tensor::scalar(total / targets.len() as f64);
        let needs = self.needs(x);
        self.push(value, Op::BceWithLogits { x, targets }, needs)
    }

    fn add_grad(&mut self, id: VarId, g: Tensor) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        match &mut self.grads[id.0] {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    /// Backpropagate from a scalar root. Gradients accumulate onto every
    /// node with `needs_grad`; leaves registered via `param` keep theirs.
    pub fn backward(&mut self, root: VarId) {
        assert_eq!(self.value(root).numel(), 1, "backward needs a scalar root");
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[root.0] = Some(Tensor::scalar(1.0));

        for i in (0..self.nodes.len()).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(gout) = self.grads[i].take() else { continue };
            // Re-store so leaf gradients remain readable afterwards.
            self.grads[i] = Some(gout.clone());
            // Take the op out to appease the borrow checker; leaves are cheap.
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            self.propagate(&op, i, &gout);
            self.nodes[i].op = op;
        }
    }

    fn propagate(&mut self, op: &Op, node: usize, gout: &Tensor) {
        match op {
            Op::Leaf => {}
            Op::AffineScalar { x, scale } => {
                let g = Tensor::new(
                    gout.shape().to_vec(),
                    gout.data().iter().map(|&g| g * scale).collect(),
                );
                self.add_grad(*x, g);
            }
            Op::Conv2d { x, w, b, stride, pad } => {
                let (gx, gw, gb) = conv2d_backward(
                    self.value(*x),
                    self.value(*w),
                    gout,
                    *stride,
                    *pad,
                );
                self.add_grad(*x, gx);
                self.add_grad(*w, gw);
                let blen = gb.len();
                self.add_grad(*b, Tensor::new(vec![blen], gb));
            }
            Op::Relu { x } => {
                let v = self.value(*x);
                let g = Tensor::new(
                    v.shape().to_vec(),
                    v.data()
                        .iter()
                        .zip(gout.data())
                        .map(|(&a, &g)| if a > 0.0 { g } else { 0.0 })
                        .collect(),
                );
                self.add_grad(*x, g);
            }
            Op::Softplus { x } => {
                let v = self.value(*x);
                let g = Tensor::new(
                    v.shape().to_vec(),
                    v.data().iter().zip(gout.data()).map(|(&a, &g)| g * sigmoid(a)).collect(),
                );
                self.add_grad(*x, g);
            }
            Op::Sigmoid { x } => {
                let s = &self.nodes[node].value;
                let g = Tensor::new(
                    s.shape().to_vec(),
                    s.data().iter().zip(gout.data()).map(|(&s, &g)| g * s * (1.0 - s)).collect(),
                );
                self.add_grad(*x, g);
            }
            Op::SliceChannel { x, channel } => {
                let shape = self.value(*x).shape().to_vec();
                let (h, w) = (shape[1], shape[2]);
                let mut g = Tensor::zeros(shape);
                g.data_mut()[channel * h * w..(channel + 1) * h * w].copy_from_slice(gout.data());
                self.add_grad(*x, g);
            }
            Op::BilinearUp { x, out_h, out_w } => {
                let (h, w) = {
                    let v = self.value(*x);
                    (v.shape()[0], v.shape()[1])
                };
                let g = bilinear_resize_backward(gout.data(), h, w, *out_h, *out_w);
                self.add_grad(*x, Tensor::new(vec![h, w], g));
            }
            Op::OneMinus { x } => {
                let g = Tensor::new(
                    gout.shape().to_vec(),
                    gout.data().iter().map(|&g| -g).collect(),
                );
                self.add_grad(*x, g);
            }
            Op::MulConst { x, factor } => {
                let g = Tensor::new(
                    gout.shape().to_vec(),
                    gout.data().iter().zip(factor.data()).map(|(&g, &f)| g * f).collect(),
                );
                self.add_grad(*x, g);
            }
            Op::MaskImage { mask, image } => {
                let (c, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
                let mut g = vec![0.0; h * w];
                for ch in 0..c {
                    for i in 0..h * w {
                        g[i] += image.data()[ch * h * w + i] * gout.data()[ch * h * w + i];
                    }
                }
                self.add_grad(*mask, Tensor::new(vec![h, w], g));
            }
            Op::AvgPoolTo { x } => {
                let (c, h, w) = {
                    let v = self.value(*x);
                    (v.shape()[0], v.shape()[1], v.shape()[2])
                };
                let g = avgpool_to_backward(gout, c, h, w);
                self.add_grad(*x, g);
            }
            Op::ColorExpand { x } => {
                let v = self.value(*x);
                let (h, w) = (v.shape()[1], v.shape()[2]);
                let hw = h * w;
                let go = gout.data();
                let mut g = vec![0.0; 3 * hw];
                for i in 0..hw {
                    let (r, gr, b) = (v.data()[i], v.data()[hw + i], v.data()[2 * hw + i]);
                    g[i] = go[i] + 2.0 * r * go[3 * hw + i] + gr * go[6 * hw + i]
                        + b * go[7 * hw + i];
                    g[hw + i] = go[hw + i] + 2.0 * gr * go[4 * hw + i] + r * go[6 * hw + i]
                        + b * go[8 * hw + i];
                    g[2 * hw + i] = go[2 * hw + i] + 2.0 * b * go[5 * hw + i]
                        + r * go[7 * hw + i] + gr * go[8 * hw + i];
                }
                self.add_grad(*x, Tensor::new(vec![3, h, w], g));
            }
            Op::FixedAffine { x, matrix } => {
                let n = self.value(*x).numel();
                let d = matrix.shape()[0];
                let shape = self.value(*x).shape().to_vec();
                let mut g = vec![0.0; n];
                for row in 0..d {
                    let go = gout.data()[row];
                    if go == 0.0 {
                        continue;
                    }
                    let m = &matrix.data()[row * (n + 1)..(row + 1) * (n + 1)];
                    for i in 0..n {
                        g[i] += go * m[i];
                    }
                }
                self.add_grad(*x, Tensor::new(shape, g));
            }
            Op::CosineConst { x, anchor, anchor_norm } => {
                let v = self.value(*x);
                let vnorm = norm(v.data());
                let s = self.nodes[node].value.item();
                let go = gout.item();
                let g: Vec<f64> = v
                    .data()
                    .iter()
                    .zip(anchor.iter())
                    .map(|(&vi, &ti)| go * (ti / (vnorm * anchor_norm) - s * vi / (vnorm * vnorm)))
                    .collect();
                let shape = v.shape().to_vec();
                self.add_grad(*x, Tensor::new(shape, g));
            }
            Op::LogSumExp { xs } => {
                let lse = self.nodes[node].value.item();
                let go = gout.item();
                let contributions: Vec<(VarId, f64)> = xs
                    .iter()
                    .map(|&id| (id, go * (self.value(id).item() - lse).exp()))
                    .collect();
                for (id, g) in contributions {
                    self.add_grad(id, Tensor::scalar(g));
                }
            }
            Op::LinComb { terms } => {
                let go = gout.item();
                for &(id, c) in terms {
                    self.add_grad(id, Tensor::scalar(go * c));
                }
            }
            Op::MeanAll { x } => {
                let n = self.value(*x).numel();
                let shape = self.value(*x).shape().to_vec();
                let g = Tensor::full(shape, gout.item() / n as f64);
                self.add_grad(*x, g);
            }
            Op::GapSpatial { x } => {
                let (c, h, w) = {
                    let v = self.value(*x);
                    (v.shape()[0], v.shape()[1], v.shape()[2])
                };
                let mut g = vec![0.0; c * h * w];
                for ch in 0..c {
                    let per = gout.data()[ch] / (h * w) as f64;
                    for i in 0..h * w {
                        g[ch * h * w + i] = per;
                    }
                }
                self.add_grad(*x, Tensor::new(vec![c, h, w], g));
            }
            Op::BceWithLogits { x, targets } => {
                let v = self.value(*x);
                let go = gout.item() / targets.len() as f64;
                let g: Vec<f64> = v
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&z, &y)| go * (sigmoid(z) - y))
                    .collect();
                let shape = v.shape().to_vec();
                self.add_grad(*x, Tensor::new(shape, g));
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}
