use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::{AnswerRegion, SaliencyMap};
use crate::encoder::ImageInput;
use crate::error::{AuditError, Result};
use crate::geometry::PixelRect;

/// Fixed jet-style gradient: 0 is dark blue, 0.5 green-cyan, 1 dark red.
pub fn colormap(v: f64) -> Rgb<u8> {
    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let channel = |centre: f64| ((1.5 - (4.0 * v - centre).abs()).clamp(0.0, 1.0) * 255.0).round() as u8;
    Rgb([channel(3.0), channel(2.0), channel(1.0)])
}

/// Blends the colormapped saliency over the image at opacity `alpha`.
pub fn overlay(image: &ImageInput, map: &SaliencyMap, alpha: f64) -> Result<RgbImage> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(AuditError::Contract(format!("overlay alpha {alpha} outside [0, 1]")));
    }
    if (image.width(), image.height()) != (map.width, map.height) {
        return Err(AuditError::Contract(format!(
            "saliency map is {}x{} but image `{}` is {}x{}",
            map.width,
            map.height,
            image.id,
            image.width(),
            image.height()
        )));
    }
    Ok(RgbImage::from_fn(map.width, map.height, |x, y| {
        let base = image.pixels.get_pixel(x, y);
        let heat = colormap(map.pixel(x, y));
        Rgb(std::array::from_fn(|c| {
            ((1.0 - alpha) * base[c] as f64 + alpha * heat[c] as f64).round() as u8
        }))
    }))
}

pub fn overlay_png(image: &ImageInput, map: &SaliencyMap, alpha: f64) -> Result<Vec<u8>> {
    let img = overlay(image, map, alpha)?;
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| AuditError::Computation(format!("PNG encoding failed: {e}")))?;
    Ok(bytes)
}

/// JSON written next to each heatmap image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencySidecar {
    pub image_id: String,
    pub question: String,
    pub similarity: f64,
    pub grid: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<PixelRect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_fraction: Option<f64>,
}

impl SaliencySidecar {
    pub fn new(map: &SaliencyMap, answer: Option<&AnswerRegion>) -> Self {
        SaliencySidecar {
            image_id: map.image_id.clone(),
            question: map.question.clone(),
            similarity: map.similarity,
            grid: map.grid.chunks(map.grid_shape.1).map(<[f64]>::to_vec).collect(),
            bbox: answer.map(|a| a.bbox),
            mass_fraction: answer.map(|a| a.mass_fraction),
        }
    }
}

/// Writes `<id>.saliency.png` and `<id>.saliency.json` into `dir`.
pub fn write_saliency_artifacts(
    dir: &Path,
    image: &ImageInput,
    map: &SaliencyMap,
    answer: Option<&AnswerRegion>,
    alpha: f64,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| AuditError::io(dir, e))?;
    let png = dir.join(format!("{}.saliency.png", map.image_id));
    let json = dir.join(format!("{}.saliency.json", map.image_id));
    std::fs::write(&png, overlay_png(image, map, alpha)?).map_err(|e| AuditError::io(&png, e))?;
    let text = serde_json::to_string_pretty(&SaliencySidecar::new(map, answer)).expect("sidecar serializes");
    std::fs::write(&json, text + "\n").map_err(|e| AuditError::io(&json, e))?;
    Ok(vec![png, json])
}
