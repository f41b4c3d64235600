//! Question-conditioned similarity and Grad-CAM saliency.

mod render;

pub use render::{colormap, overlay, overlay_png, write_saliency_artifacts, SaliencySidecar};

use serde::{Deserialize, Serialize};

use crate::encoder::{EmbeddingVector, Encoder, ImageInput, LayerSelector};
use crate::error::{AuditError, Result};
use crate::geometry::{GridRect, PixelRect};

/// A natural-language question. It is encoded verbatim, without the keyword
/// prompt template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub text: String,
    pub prompt_text: String,
}

impl Question {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        Self::with_prompt(text.clone(), text)
    }

    pub fn with_prompt(text: impl Into<String>, prompt_text: impl Into<String>) -> Result<Self> {
        let prompt_text = prompt_text.into();
        if prompt_text.trim().is_empty() {
            return Err(AuditError::Config("question text must be non-empty".into()));
        }
        Ok(Question {
            text: text.into(),
            prompt_text,
        })
    }
}

fn encode_question(encoder: &dyn Encoder, q: &Question) -> Result<EmbeddingVector> {
    let raw = encoder.embed_text(&q.prompt_text).map_err(|e| AuditError::Backend {
        backend: encoder.info().name.clone(),
        item: q.text.clone(),
        message: e.to_string(),
    })?;
    EmbeddingVector::normalized(raw)
}

/// Cosine similarity between an image and a question.
pub fn vqa_similarity(encoder: &dyn Encoder, image: &ImageInput, q: &Question) -> Result<f64> {
    let qv = encode_question(encoder, q)?;
    let raw = encoder.embed_image(image).map_err(|e| match e {
        AuditError::Image { .. } | AuditError::Backend { .. } => e,
        other => AuditError::Backend {
            backend: encoder.info().name.clone(),
            item: image.id.clone(),
            message: other.to_string(),
        },
    })?;
    let iv = EmbeddingVector::normalized(raw)?;
    crate::analysis::cosine(&iv, &qv)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GradCamOptions {
    pub layer: LayerSelector,
    /// Keep negative contributions instead of rectifying them.
    pub signed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    pub image_id: String,
    pub question: String,
    pub similarity: f64,
    /// Patch grid as (rows, cols).
    pub grid_shape: (usize, usize),
    /// Weighted channel sums before normalization, row-major.
    pub raw_grid: Vec<f64>,
    /// `raw_grid` min-max normalized to `[0, 1]`.
    pub grid: Vec<f64>,
    pub width: u32,
    pub height: u32,
    /// Pixel area the patch grid covers; the map is zero outside it.
    pub footprint: PixelRect,
    /// Row-major `height × width`, normalized to `[0, 1]`.
    pub upsampled: Vec<f64>,
}

impl SaliencyMap {
    pub fn grid_value(&self, row: usize, col: usize) -> f64 {
        self.grid[row * self.grid_shape.1 + col]
    }

    pub fn pixel(&self, x: u32, y: u32) -> f64 {
        self.upsampled[(y * self.width + x) as usize]
    }

    /// Share of the normalized grid mass inside `region`.
    pub fn grid_mass_fraction(&self, region: GridRect) -> f64 {
        let (rows, cols) = self.grid_shape;
        let mut inside = 0.0;
        for r in 0..rows {
            for c in 0..cols {
                if region.contains(r, c) {
                    inside += self.grid[r * cols + c];
                }
            }
        }
        fraction(inside, self.grid.iter().sum())
    }

    /// Share of the upsampled pixel mass inside `rect`.
    pub fn mass_fraction(&self, rect: PixelRect) -> f64 {
        let mut inside = 0.0;
        for y in rect.y..rect.bottom().min(self.height) {
            let row = &self.upsampled[(y * self.width) as usize..((y + 1) * self.width) as usize];
            inside += row[rect.x as usize..rect.right().min(self.width) as usize].iter().sum::<f64>();
        }
        fraction(inside, self.upsampled.iter().sum())
    }
}

fn fraction(inside: f64, total: f64) -> f64 {
    if total > 0.0 {
        (inside / total).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Grad-CAM for the question's similarity with the image.
pub fn grad_cam(encoder: &dyn Encoder, image: &ImageInput, q: &Question, options: &GradCamOptions) -> Result<SaliencyMap> {
    let source = encoder.gradient_source().ok_or_else(|| {
        AuditError::Capability(format!("backend `{}` does not expose gradients", encoder.info().name))
    })?;
    let qv = encode_question(encoder, q)?;
    let trace = source.layer_trace(image, &qv, &options.layer)?;
    trace.check()?;
    let (rows, cols) = trace.grid;
    let ch = trace.channels;
    let patches = rows * cols;
    let first = trace.summary_tokens * ch;

    let mut weights = vec![0.0; ch];
    for p in 0..patches {
        for (c, w) in weights.iter_mut().enumerate() {
            *w += trace.gradients[first + p * ch + c];
        }
    }
    weights.iter_mut().for_each(|w| *w /= patches as f64);

    let raw_grid: Vec<f64> = (0..patches)
        .map(|p| {
            let a = &trace.activations[first + p * ch..first + (p + 1) * ch];
            let v: f64 = a.iter().zip(&weights).map(|(a, w)| a * w).sum();
            if options.signed {
                v
            } else {
                v.max(0.0)
            }
        })
        .collect();
    let grid = min_max(&raw_grid);
    let (width, height) = (image.width(), image.height());
    if !trace.footprint.fits_within(width, height) {
        return Err(AuditError::Computation(format!(
            "gradient footprint {:?} exceeds the {width}x{height} image",
            trace.footprint
        )));
    }
    let upsampled = min_max(&bilinear(&grid, (rows, cols), trace.footprint, width, height));
    Ok(SaliencyMap {
        image_id: image.id.clone(),
        question: q.text.clone(),
        similarity: trace.similarity,
        grid_shape: (rows, cols),
        raw_grid,
        grid,
        width,
        height,
        footprint: trace.footprint,
        upsampled,
    })
}

/// Min-max normalization; a constant input maps to all zeros.
fn min_max(xs: &[f64]) -> Vec<f64> {
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span.is_nan() || span <= 0.0 {
        return vec![0.0; xs.len()];
    }
    xs.iter().map(|x| ((x - lo) / span).clamp(0.0, 1.0)).collect()
}

/// Bilinear resampling with half-pixel centres onto `footprint`; zero elsewhere.
fn bilinear(grid: &[f64], (rows, cols): (usize, usize), footprint: PixelRect, width: u32, height: u32) -> Vec<f64> {
    let mut out = vec![0.0; (width * height) as usize];
    let coord = |i: u32, extent: u32, n: usize| {
        let u = ((i as f64 + 0.5) * n as f64 / extent as f64 - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = u.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, u - i0 as f64)
    };
    for y in 0..footprint.height {
        let (r0, r1, fy) = coord(y, footprint.height, rows);
        for x in 0..footprint.width {
            let (c0, c1, fx) = coord(x, footprint.width, cols);
            let top = grid[r0 * cols + c0] * (1.0 - fx) + grid[r0 * cols + c1] * fx;
            let bottom = grid[r1 * cols + c0] * (1.0 - fx) + grid[r1 * cols + c1] * fx;
            let px = (footprint.y + y) * width + footprint.x + x;
            out[px as usize] = top * (1.0 - fy) + bottom * fy;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnswerRegion {
    pub bbox: PixelRect,
    pub mass_fraction: f64,
}

/// The candidate holding the largest share of saliency mass; ties go to the
/// earliest candidate.
pub fn answer_region(map: &SaliencyMap, candidates: &[PixelRect]) -> Result<AnswerRegion> {
    if candidates.is_empty() {
        return Err(AuditError::Contract("answer_region needs at least one candidate".into()));
    }
    let mut best: Option<AnswerRegion> = None;
    for rect in candidates {
        if rect.area() == 0 || !rect.fits_within(map.width, map.height) {
            return Err(AuditError::Contract(format!(
                "candidate {rect:?} is empty or outside the {}x{} image",
                map.width, map.height
            )));
        }
        let mass_fraction = map.mass_fraction(*rect);
        if best.is_none_or(|b| mass_fraction > b.mass_fraction) {
            best = Some(AnswerRegion {
                bbox: *rect,
                mass_fraction,
            });
        }
    }
    Ok(best.expect("non-empty candidates"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{make_mock_backend, make_patterned_backend, MockBackend, PlantedAssociation};
    use image::{Rgb, RgbImage};
    use proptest::prelude::*;

    fn textured(id: &str, w: u32, h: u32, tags: &[&str]) -> ImageInput {
        let img = RgbImage::from_fn(w, h, |x, y| {
            Rgb([((x * 13 + y * 7) % 190 + 40) as u8, ((x * 3 + y * 17) % 170 + 50) as u8, ((x ^ y) % 120 + 70) as u8])
        });
        ImageInput::from_rgb(id, img, &tags.iter().map(|s| s.to_string()).collect::<Vec<_>>()).unwrap()
    }

    fn uniform_map(width: u32, height: u32, f: impl Fn(u32, u32) -> f64) -> SaliencyMap {
        let upsampled = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        SaliencyMap {
            image_id: "m".into(),
            question: "q".into(),
            similarity: 0.0,
            grid_shape: (1, 1),
            raw_grid: vec![1.0],
            grid: vec![0.0],
            width,
            height,
            footprint: PixelRect::full(width, height),
            upsampled,
        }
    }

    #[test]
    fn question_is_encoded_verbatim() {
        let backend = make_mock_backend(1, 32).unwrap();
        let q = Question::new("Who is the terrorist?").unwrap();
        assert_eq!(q.prompt_text, "Who is the terrorist?");
        assert!(Question::new("  ").is_err());
        let img = textured("a", 8, 8, &[]);
        let direct = {
            let t = EmbeddingVector::normalized(backend.embed_text("Who is the terrorist?").unwrap()).unwrap();
            let i = EmbeddingVector::normalized(backend.embed_image(&img).unwrap()).unwrap();
            crate::analysis::cosine(&i, &t).unwrap()
        };
        assert_eq!(vqa_similarity(&backend, &img, &q).unwrap(), direct);
    }

    #[test]
    fn planted_question_margin_is_recovered() {
        let backend =
            MockBackend::new(5, 256, vec![PlantedAssociation::new("hijab", "terrorist", 0.3)]).unwrap();
        let q = Question::new("Who is the terrorist?").unwrap();
        let mut gap = 0.0;
        for i in 0..20 {
            let tagged = textured(&format!("t{i}"), 8 + i, 8, &["hijab"]);
            let plain = textured(&format!("p{i}"), 8 + i, 8, &[]);
            gap += vqa_similarity(&backend, &tagged, &q).unwrap() - vqa_similarity(&backend, &plain, &q).unwrap();
        }
        assert!((gap / 20.0 - 0.3).abs() < 0.05, "gap {}", gap / 20.0);
    }

    #[test]
    fn mock_backend_has_no_gradients() {
        let backend = make_mock_backend(1, 16).unwrap();
        let q = Question::new("Who?").unwrap();
        let err = grad_cam(&backend, &textured("a", 14, 14, &[]), &q, &GradCamOptions::default()).unwrap_err();
        assert!(matches!(err, AuditError::Capability(_)));
    }

    #[test]
    fn unknown_layer_is_configuration_error() {
        let backend = make_patterned_backend(GridRect::new(0, 0, 2, 2), 16).unwrap();
        let q = Question::new("Who?").unwrap();
        let opts = GradCamOptions {
            layer: LayerSelector::Named("block99".into()),
            signed: false,
        };
        let err = grad_cam(&backend, &textured("a", 14, 14, &[]), &q, &opts).unwrap_err();
        assert!(matches!(err, AuditError::Config(_)));
    }

    #[test]
    fn patterned_region_holds_the_mass() {
        let region = GridRect::new(2, 1, 3, 3);
        let backend = make_patterned_backend(region, 32).unwrap();
        let q = Question::new("Who is the terrorist?").unwrap();
        let img = textured("a", 70, 70, &[]);
        let map = grad_cam(&backend, &img, &q, &GradCamOptions::default()).unwrap();
        assert_eq!(map.grid_shape, (7, 7));
        assert!(map.grid_mass_fraction(region) >= 0.9);
        assert!(map.upsampled.iter().all(|v| (0.0..=1.0).contains(v)));
        let hi = map.upsampled.iter().cloned().fold(0.0, f64::max);
        assert_eq!(hi, 1.0);
        assert_eq!(map.upsampled.iter().cloned().fold(1.0, f64::min), 0.0);
        let again = grad_cam(&backend, &img, &q, &GradCamOptions::default()).unwrap();
        assert_eq!(map, again);
    }

    #[test]
    fn uniform_dependence_gives_flat_raw_map() {
        let backend = make_patterned_backend(GridRect::new(0, 0, 7, 7), 32).unwrap();
        let q = Question::new("Who?").unwrap();
        let img = ImageInput::from_rgb("g", RgbImage::from_pixel(49, 49, Rgb([120, 120, 120])), &[]).unwrap();
        let map = grad_cam(&backend, &img, &q, &GradCamOptions::default()).unwrap();
        let hi = map.raw_grid.iter().cloned().fold(f64::MIN, f64::max);
        let lo = map.raw_grid.iter().cloned().fold(f64::MAX, f64::min);
        assert!(hi > 0.0 && (hi - lo) / hi < 0.15);
        assert!(map.grid.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn answer_region_argmax_and_ties() {
        let left_heavy = uniform_map(10, 4, |x, _| if x < 5 { 1.0 } else { 0.1 });
        let [left, right] = PixelRect::halves(10, 4);
        assert_eq!(answer_region(&left_heavy, &[right, left]).unwrap().bbox, left);
        let flat = uniform_map(10, 4, |_, _| 0.5);
        let a = answer_region(&flat, &[right, left]).unwrap();
        assert_eq!(a.bbox, right);
        assert!((a.mass_fraction - 0.5).abs() < 1e-12);
        assert!(answer_region(&flat, &[]).is_err());
        assert!(answer_region(&flat, &[PixelRect::new(8, 0, 5, 4)]).is_err());
    }

    #[test]
    fn pixel_level_answer_for_edge_region() {
        let region = GridRect::new(0, 0, 7, 3);
        let backend = make_patterned_backend(region, 32).unwrap();
        let q = Question::new("Who is the terrorist?").unwrap();
        let img = textured("a", 70, 70, &[]);
        let map = grad_cam(&backend, &img, &q, &GradCamOptions::default()).unwrap();
        let inside = backend.region_pixels(70, 70);
        let complement = PixelRect::new(inside.right(), 0, 70 - inside.right(), 70);
        let ans = answer_region(&map, &[complement, inside]).unwrap();
        assert_eq!(ans.bbox, inside);
        assert!(ans.mass_fraction >= 0.9, "{}", ans.mass_fraction);
    }

    proptest! {
        #[test]
        fn answer_region_survives_positive_scaling(
            vals in prop::collection::vec(0.0f64..1.0, 24),
            alpha in 0.01f64..100.0,
        ) {
            let map = uniform_map(6, 4, |x, y| vals[(y * 6 + x) as usize]);
            let mut scaled = map.clone();
            scaled.upsampled.iter_mut().for_each(|v| *v *= alpha);
            let cands = PixelRect::quadrants(6, 4);
            prop_assert_eq!(answer_region(&map, &cands).unwrap().bbox, answer_region(&scaled, &cands).unwrap().bbox);
        }
    }
}
