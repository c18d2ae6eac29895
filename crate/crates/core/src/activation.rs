//! Class activation maps and foreground adaptive thresholding.
//!
//! A map plane holds per-pixel sigmoid scores in `[0, 1]`. Thresholding at
//! `theta = omega * max(plane)` splits it into a foreground region mask
//! `P * b` and a background region mask `(1 - P) * (1 - b)`, where `b` is
//! the binary plane `P >= theta`.

// Index loops mirror the subscript arithmetic of the kernels.
#![allow(clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet};

use crate::autodiff::sigmoid;
use crate::error::{Error, Result};
use crate::image_io::RasterImage;
use crate::tensor::{bilinear_resize, Tensor};

/// Backbone output features, `[C, H, W]`.
#[derive(Debug, Clone)]
pub struct FeatureMap(Tensor);

impl FeatureMap {
    pub fn new(t: Tensor) -> Result<Self> {
        if t.shape().len() != 3 || t.shape().contains(&0) {
            return Err(Error::Shape(format!("feature map must be [C,H,W], got {:?}", t.shape())));
        }
        if !t.is_all_finite() {
            return Err(Error::Shape("feature map contains non-finite values".to_string()));
        }
        Ok(Self(t))
    }

    pub fn channels(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.0.shape()[2]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }
}

/// The classification layer: one weight row per category, `[K, C]`.
#[derive(Debug, Clone)]
pub struct ClassifierWeights(Tensor);

impl ClassifierWeights {
    pub fn new(t: Tensor) -> Result<Self> {
        if t.shape().len() != 2 || t.shape().contains(&0) {
            return Err(Error::Shape(format!("classifier must be [K,C], got {:?}", t.shape())));
        }
        if !t.is_all_finite() {
            return Err(Error::Shape("classifier contains non-finite values".to_string()));
        }
        Ok(Self(t))
    }

    pub fn categories(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let c = self.channels();
        &self.0.data()[k * c..(k + 1) * c]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }
}

/// Per-class activation planes, kept only for classes present in the image.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMap {
    height: usize,
    width: usize,
    planes: BTreeMap<u32, Vec<f64>>,
}

impl ActivationMap {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width, planes: BTreeMap::new() }
    }

    pub fn insert(&mut self, class_id: u32, plane: Vec<f64>) -> Result<()> {
        if plane.len() != self.height * self.width {
            return Err(Error::Shape(format!(
                "plane length {} does not match {}x{}",
                plane.len(),
                self.height,
                self.width
            )));
        }
        if plane.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Shape("activation values must lie in [0,1]".to_string()));
        }
        self.planes.insert(class_id, plane);
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> Vec<u32> {
        self.planes.keys().copied().collect()
    }

    pub fn plane(&self, class_id: u32) -> Option<&[f64]> {
        self.planes.get(&class_id).map(|p| p.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &[f64])> {
        self.planes.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }

    /// Bilinearly resize every plane (typically up to image resolution).
    pub fn resized(&self, out_h: usize, out_w: usize) -> Result<ActivationMap> {
        let mut out = ActivationMap::new(out_h, out_w);
        for (k, plane) in self.iter() {
            let up = upsample_map(plane, self.height, self.width, out_h, out_w)?;
            out.insert(k, up)?;
        }
        Ok(out)
    }
}

/// Foreground/background region masks for one activation plane.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMaskPair {
    pub theta: f64,
    /// 0/1 plane; pixels at or above `theta` are 1.
    pub binary: Vec<f64>,
    /// `P * b`.
    pub foreground: Vec<f64>,
    /// `(1 - P) * (1 - b)`.
    pub background: Vec<f64>,
}

/// Per-pixel sigmoid of the classifier response for each present class.
pub fn compute_cam(
    features: &FeatureMap,
    weights: &ClassifierWeights,
    present_classes: &BTreeSet<u32>,
) -> Result<ActivationMap> {
    if weights.channels() != features.channels() {
        return Err(Error::Shape(format!(
            "classifier expects {} channels, features have {}",
            weights.channels(),
            features.channels()
        )));
    }
    if present_classes.is_empty() {
        return Err(Error::Shape("present class set must be non-empty".to_string()));
    }
    let (c, h, w) = (features.channels(), features.height(), features.width());
    let mut out = ActivationMap::new(h, w);
    for &class_id in present_classes {
        if class_id == 0 || class_id as usize > weights.categories() {
            return Err(Error::Shape(format!(
                "class id {class_id} outside 1..={}",
                weights.categories()
            )));
        }
        let row = weights.row(class_id as usize - 1);
        let mut plane = vec![0.0; h * w];
        for i in 0..h * w {
            let mut score = 0.0;
            for ch in 0..c {
                score += row[ch] * features.tensor().data()[ch * h * w + i];
            }
            plane[i] = sigmoid(score);
        }
        out.insert(class_id, plane)?;
    }
    Ok(out)
}

/// Split an activation plane by its adaptive threshold.
///
/// An all-zero plane yields `theta = 0`, `b = 1` everywhere, and both
/// region masks identically zero; callers treat that as a degenerate
/// sample rather than an error.
pub fn fat_threshold(plane: &[f64], omega: f64) -> RegionMaskPair {
    assert!((0.0..=1.0).contains(&omega), "omega must lie in [0,1], got {omega}");
    // Interpolated planes can stray outside [0,1] by an ulp.
    assert!(
        plane.iter().all(|v| (-1e-9..=1.0 + 1e-9).contains(v)),
        "activation values must lie in [0,1]"
    );
    let max = plane.iter().cloned().fold(0.0f64, f64::max);
    let theta = omega * max;
    let binary: Vec<f64> = plane.iter().map(|&p| if p >= theta { 1.0 } else { 0.0 }).collect();
    let foreground: Vec<f64> = plane.iter().zip(&binary).map(|(&p, &b)| p * b).collect();
    let background: Vec<f64> =
        plane.iter().zip(&binary).map(|(&p, &b)| (1.0 - p) * (1.0 - b)).collect();
    RegionMaskPair { theta, binary, foreground, background }
}

/// Region masks without thresholding: `R_f = P`, `R_b = 1 - P`. Used by
/// the thresholding on/off ablation.
pub fn soft_regions(plane: &[f64]) -> RegionMaskPair {
    let foreground = plane.to_vec();
    let background: Vec<f64> = plane.iter().map(|&p| 1.0 - p).collect();
    RegionMaskPair { theta: 0.0, binary: vec![1.0; plane.len()], foreground, background }
}

/// Multiply every color channel by a region mask of the same resolution.
pub fn mask_image(image: &RasterImage, region: &[f64]) -> Result<RasterImage> {
    let (h, w) = (image.height(), image.width());
    if region.len() != h * w {
        return Err(Error::Shape(format!(
            "region has {} pixels, image is {h}x{w}",
            region.len()
        )));
    }
    let mut data = vec![0.0; 3 * h * w];
    for c in 0..3 {
        for i in 0..h * w {
            data[c * h * w + i] = image.data()[c * h * w + i] * region[i];
        }
    }
    Ok(RasterImage::new(h, w, data))
}

/// Corner-aligned bilinear upsampling of one plane; values stay in `[0,1]`.
pub fn upsample_map(
    plane: &[f64],
    h: usize,
    w: usize,
    target_h: usize,
    target_w: usize,
) -> Result<Vec<f64>> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::Shape("target dimensions must be positive".to_string()));
    }
    if target_h < h || target_w < w {
        return Err(Error::Shape(format!(
            "target {target_h}x{target_w} is smaller than source {h}x{w}"
        )));
    }
    // Interpolation weights can round a hair outside the unit interval.
    let mut out = bilinear_resize(plane, h, w, target_h, target_w);
    for v in out.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(out)
}
