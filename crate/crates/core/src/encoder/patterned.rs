use super::backend::{
    dot, hashed_unit_vector, norm, orthonormalize, project_out, BackendInfo, BackendKind, Encoder, GradientSource,
    LayerSelector, LayerTrace,
};
use super::image::ImageInput;
use super::vector::EmbeddingVector;
use crate::error::{AuditError, Result};
use crate::geometry::{patch_span, GridRect, PixelRect};

pub const DEFAULT_PATCH_GRID: (usize, usize) = (7, 7);
const CHANNELS: usize = 8;
const TOKEN_BIAS: f64 = 0.1;
const TEXT_SPREAD: f64 = 0.5;
const SEED: u64 = 0x5a11;

/// Encoder whose image embedding depends only on the pixels inside a
/// designated block of patches.
///
/// Model: per-patch mean colour `x_p` → gated token `h_p = g_p (M x_p + β)`
/// (`g_p = 1` inside the region, 0 outside) → scalar
/// `A = κ Σ_p wᵀh_p` → embedding `b + A d` with `b ⊥ d`. Text embeds as
/// `d + ½ r` with `r ⊥ {b, d}`, so similarity rises with every in-region patch.
/// The token layer (one summary token + patch tokens) is what Grad-CAM reads.
#[derive(Debug, Clone)]
pub struct PatternedBackend {
    info: BackendInfo,
    grid: (usize, usize),
    region: GridRect,
    mix: [[f64; 3]; CHANNELS],
    readout: [f64; CHANNELS],
    kappa: f64,
    base: Vec<f64>,
    concept: Vec<f64>,
}

pub fn make_patterned_backend(region: GridRect, dim: usize) -> Result<PatternedBackend> {
    PatternedBackend::new(DEFAULT_PATCH_GRID, region, dim)
}

impl PatternedBackend {
    pub fn new(grid: (usize, usize), region: GridRect, dim: usize) -> Result<Self> {
        if grid.0 == 0 || grid.1 == 0 {
            return Err(AuditError::Config("patch grid must be non-empty".into()));
        }
        if !region.fits_within(grid.0, grid.1) {
            return Err(AuditError::Config(format!(
                "patch region {region:?} lies outside the {}x{} grid",
                grid.0, grid.1
            )));
        }
        if dim < 3 {
            return Err(AuditError::Config(format!("patterned backend needs dim >= 3, got {dim}")));
        }
        let mut mix = [[0.0; 3]; CHANNELS];
        for (c, row) in mix.iter_mut().enumerate() {
            for (ch, m) in row.iter_mut().enumerate() {
                *m = 0.25 + 0.075 * ((c * 3 + ch) * 7 % 11) as f64;
            }
        }
        let mut readout = [0.0; CHANNELS];
        for (c, w) in readout.iter_mut().enumerate() {
            *w = 0.5 + 0.1 * ((c * 5) % 6) as f64;
        }
        let per_patch_max: f64 = readout
            .iter()
            .zip(&mix)
            .map(|(w, row)| w * (row.iter().sum::<f64>() + TOKEN_BIAS))
            .sum();
        let kappa = 1.0 / (region.cell_count() as f64 * per_patch_max);
        let axes = orthonormalize(vec![
            hashed_unit_vector("patterned-base", SEED, b"", dim),
            hashed_unit_vector("patterned-concept", SEED, b"", dim),
        ])?;
        let [base, concept]: [Vec<f64>; 2] = axes.try_into().expect("two axes");
        Ok(PatternedBackend {
            info: BackendInfo {
                name: format!(
                    "patterned-g{}x{}-r{}.{}.{}x{}-d{dim}",
                    grid.0, grid.1, region.row, region.col, region.rows, region.cols
                ),
                dim,
                kind: BackendKind::PatternedMock,
                supports_gradients: true,
            },
            grid,
            region,
            mix,
            readout,
            kappa,
            base,
            concept,
        })
    }

    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    pub fn region(&self) -> GridRect {
        self.region
    }

    /// Pixel rectangle of the designated region on an image of this size.
    pub fn region_pixels(&self, width: u32, height: u32) -> PixelRect {
        self.region.to_pixels(self.grid, PixelRect::full(width, height))
    }

    fn patch_index(&self, r: usize, c: usize) -> usize {
        r * self.grid.1 + c
    }

    fn patch_means(&self, image: &ImageInput) -> Result<Vec<[f64; 3]>> {
        let (w, h) = (image.width(), image.height());
        if (w as usize) < self.grid.1 || (h as usize) < self.grid.0 {
            return Err(AuditError::Image {
                id: image.id.clone(),
                message: format!("{w}x{h} image is smaller than the {}x{} patch grid", self.grid.0, self.grid.1),
            });
        }
        let mut out = Vec::with_capacity(self.grid.0 * self.grid.1);
        for r in 0..self.grid.0 {
            let (y0, y1) = patch_span(r, self.grid.0, h);
            for c in 0..self.grid.1 {
                let (x0, x1) = patch_span(c, self.grid.1, w);
                let mut sum = [0.0; 3];
                for y in y0..y1 {
                    for x in x0..x1 {
                        let p = image.pixels.get_pixel(x, y);
                        for ch in 0..3 {
                            sum[ch] += p[ch] as f64;
                        }
                    }
                }
                let n = ((y1 - y0) * (x1 - x0)) as f64 * 255.0;
                out.push(sum.map(|s| s / n));
            }
        }
        Ok(out)
    }

    /// Token activations, `(1 + rows·cols) × CHANNELS`, summary token first.
    fn tokens(&self, means: &[[f64; 3]]) -> Vec<f64> {
        let patches = self.grid.0 * self.grid.1;
        let mut tokens = vec![0.0; (1 + patches) * CHANNELS];
        for r in 0..self.grid.0 {
            for c in 0..self.grid.1 {
                if !self.region.contains(r, c) {
                    continue;
                }
                let p = self.patch_index(r, c);
                let x = means[p];
                for k in 0..CHANNELS {
                    let m = &self.mix[k];
                    tokens[(1 + p) * CHANNELS + k] = m[0] * x[0] + m[1] * x[1] + m[2] * x[2] + TOKEN_BIAS;
                }
            }
        }
        for k in 0..CHANNELS {
            let s: f64 = (0..patches).map(|p| tokens[(1 + p) * CHANNELS + k]).sum();
            tokens[k] = s / patches as f64;
        }
        tokens
    }

    fn activation(&self, tokens: &[f64]) -> f64 {
        let patches = self.grid.0 * self.grid.1;
        let mut a = 0.0;
        for p in 0..patches {
            let h = &tokens[(1 + p) * CHANNELS..(2 + p) * CHANNELS];
            a += dot(&self.readout, h);
        }
        self.kappa * a
    }

    fn embedding_from_activation(&self, a: f64) -> Vec<f64> {
        self.base.iter().zip(&self.concept).map(|(b, d)| b + a * d).collect()
    }

    /// Cosine similarity and its derivative with respect to the scalar activation.
    fn similarity_and_slope(&self, a: f64, query: &EmbeddingVector) -> (f64, f64) {
        let e = self.embedding_from_activation(a);
        let en = norm(&e);
        let qn = query.norm();
        let s = dot(&e, query.values()) / (en * qn);
        let q_d = dot(query.values(), &self.concept) / qn;
        let e_d = dot(&e, &self.concept) / en;
        (s, (q_d - s * e_d) / en)
    }

    pub fn similarity(&self, image: &ImageInput, query: &EmbeddingVector) -> Result<f64> {
        let a = self.activation(&self.tokens(&self.patch_means(image)?));
        Ok(self.similarity_and_slope(a, query).0)
    }

    /// Gradient of the image/query cosine with respect to every pixel channel,
    /// row-major `height × width × 3`, pixel values on the 0..=255 scale.
    pub fn pixel_gradient(&self, image: &ImageInput, query: &EmbeddingVector) -> Result<Vec<f64>> {
        let a = self.activation(&self.tokens(&self.patch_means(image)?));
        let (_, slope) = self.similarity_and_slope(a, query);
        let (w, h) = (image.width(), image.height());
        let mut grad = vec![0.0; (w * h * 3) as usize];
        let per_channel: [f64; 3] = std::array::from_fn(|ch| {
            (0..CHANNELS).map(|k| self.readout[k] * self.mix[k][ch]).sum::<f64>() * self.kappa * slope / 255.0
        });
        for r in 0..self.grid.0 {
            let (y0, y1) = patch_span(r, self.grid.0, h);
            for c in 0..self.grid.1 {
                if !self.region.contains(r, c) {
                    continue;
                }
                let (x0, x1) = patch_span(c, self.grid.1, w);
                let n = ((y1 - y0) * (x1 - x0)) as f64;
                for y in y0..y1 {
                    for x in x0..x1 {
                        let base = ((y * w + x) * 3) as usize;
                        for ch in 0..3 {
                            grad[base + ch] = per_channel[ch] / n;
                        }
                    }
                }
            }
        }
        Ok(grad)
    }
}

impl Encoder for PatternedBackend {
    fn info(&self) -> &BackendInfo {
        &self.info
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        let mut r = hashed_unit_vector("patterned-text", SEED, text.as_bytes(), self.info.dim);
        project_out(&mut r, &[self.base.clone(), self.concept.clone()]);
        let n = norm(&r);
        Ok(self
            .concept
            .iter()
            .zip(&r)
            .map(|(d, x)| d + TEXT_SPREAD * x / n)
            .collect())
    }

    fn embed_image(&self, image: &ImageInput) -> Result<Vec<f64>> {
        let a = self.activation(&self.tokens(&self.patch_means(image)?));
        Ok(self.embedding_from_activation(a))
    }

    fn gradient_source(&self) -> Option<&dyn GradientSource> {
        Some(self)
    }
}

impl GradientSource for PatternedBackend {
    fn layer_trace(&self, image: &ImageInput, query: &EmbeddingVector, layer: &LayerSelector) -> Result<LayerTrace> {
        match layer {
            LayerSelector::Final => {}
            LayerSelector::Named(n) if n == "tokens" => {}
            other => {
                return Err(AuditError::Config(format!(
                    "layer `{other}` does not exist in {} (available: final, tokens)",
                    self.info.name
                )))
            }
        }
        let tokens = self.tokens(&self.patch_means(image)?);
        let a = self.activation(&tokens);
        let (similarity, slope) = self.similarity_and_slope(a, query);
        let patches = self.grid.0 * self.grid.1;
        let mut gradients = vec![0.0; tokens.len()];
        for p in 0..patches {
            for k in 0..CHANNELS {
                gradients[(1 + p) * CHANNELS + k] = slope * self.kappa * self.readout[k];
            }
        }
        Ok(LayerTrace {
            activations: tokens,
            gradients,
            channels: CHANNELS,
            summary_tokens: 1,
            grid: self.grid,
            footprint: PixelRect::full(image.width(), image.height()),
            similarity,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    fn textured(w: u32, h: u32) -> ImageInput {
        let img = RgbImage::from_fn(w, h, |x, y| {
            Rgb([((x * 37 + y * 11) % 200 + 30) as u8, ((x * 5 + y * 29) % 180 + 40) as u8, ((x + y) % 90 + 60) as u8])
        });
        ImageInput::from_rgb("t", img, &[]).unwrap()
    }

    fn query(b: &PatternedBackend) -> EmbeddingVector {
        EmbeddingVector::normalized(b.embed_text("Who is the terrorist?").unwrap()).unwrap()
    }

    #[test]
    fn region_outside_grid_rejected() {
        assert!(make_patterned_backend(GridRect::new(5, 5, 3, 1), 16).is_err());
        assert!(make_patterned_backend(GridRect::new(0, 0, 0, 1), 16).is_err());
        assert!(make_patterned_backend(GridRect::new(0, 0, 1, 1), 2).is_err());
    }

    #[test]
    fn masking_outside_region_leaves_embedding_unchanged() {
        let b = make_patterned_backend(GridRect::new(1, 2, 3, 3), 32).unwrap();
        let img = textured(70, 70);
        let rect = b.region_pixels(70, 70);
        let mut masked = img.pixels.clone();
        for (x, y, p) in masked.enumerate_pixels_mut() {
            if !rect.contains(x, y) {
                *p = Rgb([0, 0, 0]);
            }
        }
        let masked = ImageInput::from_rgb("m", masked, &[]).unwrap();
        assert_eq!(b.embed_image(&img).unwrap(), b.embed_image(&masked).unwrap());

        let mut bumped = img.pixels.clone();
        bumped.get_pixel_mut(rect.x + 1, rect.y + 1).0[0] ^= 0x40;
        let bumped = ImageInput::from_rgb("b", bumped, &[]).unwrap();
        assert_ne!(b.embed_image(&img).unwrap(), b.embed_image(&bumped).unwrap());
    }

    #[test]
    fn pixel_gradient_matches_finite_differences_and_vanishes_outside() {
        let b = make_patterned_backend(GridRect::new(0, 0, 4, 3), 16).unwrap();
        let img = textured(35, 35);
        let q = query(&b);
        let grad = b.pixel_gradient(&img, &q).unwrap();
        let rect = b.region_pixels(35, 35);
        for (x, y) in [(2u32, 3u32), (20, 30), (30, 2), (10, 10)] {
            let idx = ((y * 35 + x) * 3) as usize;
            let mut plus = img.pixels.clone();
            plus.get_pixel_mut(x, y).0[0] += 1;
            let plus = ImageInput::from_rgb("p", plus, &[]).unwrap();
            let fd = b.similarity(&plus, &q).unwrap() - b.similarity(&img, &q).unwrap();
            if rect.contains(x, y) {
                assert!(grad[idx] > 0.0);
                assert!((fd - grad[idx]).abs() < 1e-3 * grad[idx].abs() + 1e-12, "fd {fd} grad {}", grad[idx]);
            } else {
                assert_eq!(grad[idx], 0.0);
                assert_eq!(fd, 0.0);
            }
        }
    }

    #[test]
    fn trace_has_summary_token_and_grid() {
        let b = make_patterned_backend(GridRect::new(0, 0, 2, 2), 16).unwrap();
        let trace = b.layer_trace(&textured(49, 49), &query(&b), &LayerSelector::Final).unwrap();
        trace.check().unwrap();
        assert_eq!(trace.tokens(), 50);
        assert_eq!(trace.summary_tokens, 1);
        assert!(b.layer_trace(&textured(49, 49), &query(&b), &LayerSelector::Block(3)).is_err());
    }

    #[test]
    fn images_smaller_than_grid_rejected() {
        let b = make_patterned_backend(GridRect::new(0, 0, 2, 2), 16).unwrap();
        assert!(b.embed_image(&textured(5, 5)).is_err());
    }
}
