//! Heatmap overlays for activation maps, with a legend strip naming the
//! class and the prompts behind it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::activation::ActivationMap;
use crate::error::{Error, Result};
use crate::image_io::RasterImage;

/// Jet-style colormap; 0 maps to cold blue, 1 to the hottest red.
pub fn heat_color(t: f64) -> [f64; 3] {
    let t = t.clamp(0.0, 1.0);
    let r = (1.5 - (4.0 * t - 3.0).abs()).clamp(0.0, 1.0);
    let g = (1.5 - (4.0 * t - 2.0).abs()).clamp(0.0, 1.0);
    let b = (1.5 - (4.0 * t - 1.0).abs()).clamp(0.0, 1.0);
    [r, g, b]
}

/// Alpha-blend a heat-colored plane over the image (plane at image
/// resolution).
pub fn overlay(image: &RasterImage, plane: &[f64], alpha: f64) -> Result<RasterImage> {
    let (h, w) = (image.height(), image.width());
    if plane.len() != h * w {
        return Err(Error::Shape(format!("plane has {} pixels, image {h}x{w}", plane.len())));
    }
    let mut out = RasterImage::filled(h, w, [0.0; 3]);
    for y in 0..h {
        for x in 0..w {
            let heat = heat_color(plane[y * w + x]);
            let px = image.pixel(y, x);
            let mut blended = [0.0; 3];
            for c in 0..3 {
                blended[c] = (1.0 - alpha) * px[c] + alpha * heat[c];
            }
            out.set_pixel(y, x, blended);
        }
    }
    Ok(out)
}

const GLYPH_W: usize = 5;
const GLYPH_H: usize = 7;
const ADVANCE: usize = GLYPH_W + 1;
const LINE_H: usize = GLYPH_H + 3;

fn glyph(c: char) -> [u8; 7] {
    let c = c.to_ascii_uppercase();
    match c {
        'A' => [0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001],
        'B' => [0b11110, 0b10001, 0b11110, 0b10001, 0b10001, 0b10001, 0b11110],
        'C' => [0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110],
        'D' => [0b11110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b11110],
        'E' => [0b11111, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000, 0b11111],
        'F' => [0b11111, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000, 0b10000],
        'G' => [0b01110, 0b10001, 0b10000, 0b10111, 0b10001, 0b10001, 0b01111],
        'H' => [0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001, 0b10001],
        'I' => [0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
        'J' => [0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100],
        'K' => [0b10001, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010, 0b10001],
        'L' => [0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111],
        'M' => [0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001],
        'N' => [0b10001, 0b11001, 0b10101, 0b10011, 0b10001, 0b10001, 0b10001],
        'O' => [0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110],
        'P' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10000, 0b10000, 0b10000],
        'Q' => [0b01110, 0b10001, 0b10001, 0b10001, 0b10101, 0b10010, 0b01101],
        'R' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001],
        'S' => [0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110],
        'T' => [0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100],
        'U' => [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110],
        'V' => [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100],
        'W' => [0b10001, 0b10001, 0b10001, 0b10101, 0b10101, 0b11011, 0b10001],
        'X' => [0b10001, 0b01010, 0b00100, 0b00100, 0b00100, 0b01010, 0b10001],
        'Y' => [0b10001, 0b01010, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100],
        'Z' => [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b11111],
        '0' => [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110],
        '1' => [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
        '2' => [0b01110, 0b10001, 0b00001, 0b00110, 0b01000, 0b10000, 0b11111],
        '3' => [0b01110, 0b10001, 0b00001, 0b00110, 0b00001, 0b10001, 0b01110],
        '4' => [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010],
        '5' => [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110],
        '6' => [0b01110, 0b10000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110],
        '7' => [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000],
        '8' => [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110],
        '9' => [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00001, 0b01110],
        ':' => [0b00000, 0b00100, 0b00000, 0b00000, 0b00100, 0b00000, 0b00000],
        '-' => [0b00000, 0b00000, 0b00000, 0b11111, 0b00000, 0b00000, 0b00000],
        '_' => [0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b11111],
        '.' => [0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b00100, 0b00100],
        ',' => [0b00000, 0b00000, 0b00000, 0b00000, 0b00100, 0b00100, 0b01000],
        '|' => [0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100],
        '/' => [0b00001, 0b00010, 0b00100, 0b00100, 0b00100, 0b01000, 0b10000],
        '?' => [0b01110, 0b10001, 0b00001, 0b00110, 0b00100, 0b00000, 0b00100],
        '+' => [0b00000, 0b00100, 0b00100, 0b11111, 0b00100, 0b00100, 0b00000],
        '=' => [0b00000, 0b00000, 0b11111, 0b00000, 0b11111, 0b00000, 0b00000],
        '(' => [0b00010, 0b00100, 0b01000, 0b01000, 0b01000, 0b00100, 0b00010],
        ')' => [0b01000, 0b00100, 0b00010, 0b00010, 0b00010, 0b00100, 0b01000],
        ' ' => [0; 7],
        _ => [0b11111, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b11111],
    }
}

fn draw_text(img: &mut RasterImage, y0: usize, x0: usize, text: &str, rgb: [f64; 3]) {
    let mut x = x0;
    for c in text.chars() {
        if x + GLYPH_W >= img.width() {
            break;
        }
        let g = glyph(c);
        for (dy, row) in g.iter().enumerate() {
            for dx in 0..GLYPH_W {
                if row & (1 << (GLYPH_W - 1 - dx)) != 0 {
                    let (py, px) = (y0 + dy, x + dx);
                    if py < img.height() && px < img.width() {
                        img.set_pixel(py, px, rgb);
                    }
                }
            }
        }
        x += ADVANCE;
    }
}

/// Render a legend strip: the class name, then one line per prompt.
pub fn legend_strip(width: usize, class_label: &str, texts: &[String]) -> RasterImage {
    let lines = 1 + texts.len();
    let height = lines * LINE_H + 4;
    let mut img = RasterImage::filled(height, width.max(ADVANCE * 4), [0.12, 0.12, 0.14]);
    draw_text(&mut img, 2, 2, &format!("class: {class_label}"), [1.0, 0.85, 0.3]);
    for (i, text) in texts.iter().enumerate() {
        draw_text(&mut img, 2 + (i + 1) * LINE_H, 2, text, [0.9, 0.9, 0.9]);
    }
    img
}

/// Write one heat overlay per class plane (same dimensions as the input
/// image) plus a legend strip file naming the class and its prompts.
/// Returns the written paths.
pub fn export_overlay(
    image: &RasterImage,
    maps: &ActivationMap,
    class_names: &BTreeMap<u32, String>,
    prompts: &BTreeMap<u32, Vec<String>>,
    image_id: &str,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    if maps.height() != image.height() || maps.width() != image.width() {
        return Err(Error::Shape(format!(
            "maps are {}x{}, image is {}x{}; upsample first",
            maps.height(),
            maps.width(),
            image.height(),
            image.width()
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(Error::io(out_dir))?;
    let mut written = Vec::new();
    for (class_id, plane) in maps.iter() {
        let fallback = format!("class_{class_id}");
        let label = class_names.get(&class_id).map(String::as_str).unwrap_or(&fallback);
        let blended = overlay(image, plane, 0.5)?;
        let path = out_dir.join(format!("{image_id}_{label}.png"));
        blended.save_png(&path)?;
        written.push(path);

        let texts = prompts.get(&class_id).cloned().unwrap_or_default();
        let legend = legend_strip(image.width().max(220), label, &texts);
        let legend_path = out_dir.join(format!("{image_id}_{label}_legend.png"));
        legend.save_png(&legend_path)?;
        written.push(legend_path);
    }
    Ok(written)
}
