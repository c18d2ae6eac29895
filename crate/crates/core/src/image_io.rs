//! RGB raster images stored as planar `f64` in `[0, 1]`, plus PNG I/O for
//! images and single-channel index masks.

use std::path::Path;
use std::rc::Rc;

use image::{GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// An RGB image with planar `[3, H, W]` layout and values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), 3 * height * width);
        Self { height, width, data }
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        let mut data = vec![0.0; 3 * height * width];
        for c in 0..3 {
            data[c * height * width..(c + 1) * height * width].fill(rgb[c]);
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f64; 3] {
        let hw = self.height * self.width;
        let i = y * self.width + x;
        [self.data[i], self.data[hw + i], self.data[2 * hw + i]]
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f64; 3]) {
        let hw = self.height * self.width;
        let i = y * self.width + x;
        self.data[i] = rgb[0];
        self.data[hw + i] = rgb[1];
        self.data[2 * hw + i] = rgb[2];
    }

    /// View as a `[3, H, W]` tensor (copies).
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![3, self.height, self.width], self.data.clone())
    }

    pub fn to_shared_tensor(&self) -> Rc<Tensor> {
        Rc::new(self.to_tensor())
    }

    /// Quantized 8-bit interleaved RGB bytes, identical to what `save_png`
    /// writes. Also the basis for `content_hash`.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let hw = self.height * self.width;
        let mut out = Vec::with_capacity(3 * hw);
        for i in 0..hw {
            for c in 0..3 {
                out.push(quantize(self.data[c * hw + i]));
            }
        }
        out
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut data = vec![0.0; 3 * h * w];
        for (i, px) in img.pixels().enumerate() {
            for c in 0..3 {
                data[c * h * w + i] = px.0[c] as f64 / 255.0;
            }
        }
        Ok(Self { height: h, width: w, data })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf = self.to_rgb8();
        let img = RgbImage::from_raw(self.width as u32, self.height as u32, buf)
            .expect("buffer sized from own dimensions");
        img.save(path)?;
        Ok(())
    }

    /// Stable 64-bit hash of the quantized pixel content, as lowercase hex.
    pub fn content_hash(&self) -> String {
        format!("{:016x}", fnv64(&self.to_rgb8()))
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// FNV-1a. Used where hashes must be stable across runs and toolchains.
pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Read a single-channel index mask (class indices as gray levels).
pub fn load_index_mask(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok((h, w, img.into_raw()))
}

pub fn save_index_mask(path: &Path, height: usize, width: usize, data: &[u8]) -> Result<()> {
    if data.len() != height * width {
        return Err(Error::Shape(format!(
            "mask data length {} does not match {height}x{width}",
            data.len()
        )));
    }
    let img = GrayImage::from_raw(width as u32, height as u32, data.to_vec())
        .expect("buffer sized from own dimensions");
    img.save(path)?;
    Ok(())
}
