//! The trainable feature extractor: a small stack of 3x3 convolution
//! blocks with configurable widths and strides.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activation::FeatureMap;
use crate::autodiff::{Tape, VarId};
use crate::error::{Error, Result};
use crate::image_io::RasterImage;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// Smooth alternative used wherever finite-difference checks need a
    /// kink-free objective.
    Softplus,
}

/// Architecture description; the parameter tensors live elsewhere so the
/// same config can describe many checkpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub channels: Vec<usize>,
    pub strides: Vec<usize>,
    pub activation: Activation,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        // Output stride 8, a few tens of thousands of parameters.
        Self { channels: vec![16, 32, 48, 48], strides: vec![1, 2, 2, 2], activation: Activation::Relu }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.len() != self.strides.len() {
            return Err(Error::Config("channels and strides must be non-empty and equal length".into()));
        }
        if self.channels.contains(&0) || self.strides.contains(&0) {
            return Err(Error::Config("channels and strides must be positive".into()));
        }
        Ok(())
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }
}

/// A backbone producing `[C, H/stride, W/stride]` features from an image.
pub trait Backbone {
    fn output_stride(&self) -> usize;
    fn feature_channels(&self) -> usize;
    fn param_shapes(&self) -> Vec<Vec<usize>>;
    fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }
    fn init_params(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor>;
    /// Append the feature computation to a tape. `params` must follow
    /// `param_shapes` order.
    fn forward_traced(&self, tape: &mut Tape, image: VarId, params: &[VarId]) -> VarId;
}

#[derive(Debug, Clone)]
pub struct ConvBackbone {
    config: BackboneConfig,
}

impl ConvBackbone {
    pub fn new(config: BackboneConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }
}

impl Backbone for ConvBackbone {
    fn output_stride(&self) -> usize {
        self.config.strides.iter().product()
    }

    fn feature_channels(&self) -> usize {
        *self.config.channels.last().unwrap()
    }

    fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        let mut in_ch = 3;
        for &out_ch in &self.config.channels {
            shapes.push(vec![out_ch, in_ch, 3, 3]);
            shapes.push(vec![out_ch]);
            in_ch = out_ch;
        }
        shapes
    }

    fn init_params(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor> {
        self.param_shapes()
            .into_iter()
            .map(|shape| {
                if shape.len() == 1 {
                    Tensor::zeros(shape)
                } else {
                    let fan_in: usize = shape[1..].iter().product();
                    let amp = (2.0 / fan_in as f64).sqrt();
                    let n: usize = shape.iter().product();
                    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-amp..=amp)).collect();
                    Tensor::new(shape, data)
                }
            })
            .collect()
    }

    fn forward_traced(&self, tape: &mut Tape, image: VarId, params: &[VarId]) -> VarId {
        assert_eq!(params.len(), 2 * self.config.channels.len(), "weights and biases per block");
        // Center pixel values; raw [0,1] inputs share a large common mode.
        let mut x = tape.affine_scalar(image, 2.0, -1.0);
        for (block, &stride) in self.config.strides.iter().enumerate() {
            let w = params[2 * block];
            let b = params[2 * block + 1];
            let conv = tape.conv2d(x, w, b, stride, 1);
            x = match self.config.activation {
                Activation::Relu => tape.relu(conv),
                Activation::Softplus => tape.softplus(conv),
            };
        }
        x
    }
}

/// Plain (non-traced) feature extraction via a throwaway tape, so
/// inference shares the exact kernels used in training.
pub fn forward_features(
    backbone: &dyn Backbone,
    params: &[Tensor],
    image: &RasterImage,
) -> Result<FeatureMap> {
    let mut tape = Tape::new();
    let x = tape.constant(image.to_tensor());
    let param_vars: Vec<VarId> = params.iter().map(|t| tape.constant(t.clone())).collect();
    let out = backbone.forward_traced(&mut tape, x, &param_vars);
    FeatureMap::new(tape.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn output_stride_and_shapes() {
        let bb = ConvBackbone::new(BackboneConfig::default()).unwrap();
        assert_eq!(bb.output_stride(), 8);
        assert_eq!(bb.feature_channels(), 48);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = bb.init_params(&mut rng);
        let img = RasterImage::filled(48, 48, [0.5, 0.5, 0.5]);
        let features = forward_features(&bb, &params, &img).unwrap();
        assert_eq!(features.channels(), 48);
        assert_eq!(features.height(), 6);
        assert_eq!(features.width(), 6);
    }

    #[test]
    fn param_count_is_stable() {
        let bb = ConvBackbone::new(BackboneConfig::default()).unwrap();
        // 3->16, 16->32, 32->48, 48->48 blocks of 3x3 kernels plus biases.
        let expected = 16 * 3 * 9 + 16 + 32 * 16 * 9 + 32 + 48 * 32 * 9 + 48 + 48 * 48 * 9 + 48;
        assert_eq!(bb.param_count(), expected);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let bb = ConvBackbone::new(BackboneConfig::default()).unwrap();
        let a = bb.init_params(&mut ChaCha8Rng::seed_from_u64(7));
        let b = bb.init_params(&mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_inconsistent_config() {
        let bad = BackboneConfig { channels: vec![8], strides: vec![1, 2], activation: Activation::Relu };
        assert!(ConvBackbone::new(bad).is_err());
    }
}
