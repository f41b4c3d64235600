use std::collections::BTreeSet;
use std::io::Cursor;

use image::RgbImage;

use crate::dataset::{Dataset, ImageRecord};
use crate::error::{AuditError, Result};

/// PNG text-chunk keyword carrying comma-separated content tags.
pub const TAG_CHUNK_KEYWORD: &str = "tags";

/// A decoded image ready for encoding.
///
/// `tags` holds content tags embedded in the file plus `region:<ABBR>` and
/// `gender:<g>` when loaded from a manifest record.
#[derive(Debug, Clone)]
pub struct ImageInput {
    pub id: String,
    pub bytes: Vec<u8>,
    pub pixels: RgbImage,
    pub tags: BTreeSet<String>,
}

impl ImageInput {
    pub fn from_bytes(id: impl Into<String>, bytes: Vec<u8>) -> Result<Self> {
        let id = id.into();
        let pixels = image::load_from_memory(&bytes)
            .map_err(|e| AuditError::Image {
                id: id.clone(),
                message: format!("cannot decode: {e}"),
            })?
            .to_rgb8();
        if pixels.width() == 0 || pixels.height() == 0 {
            return Err(AuditError::Image {
                id,
                message: "zero-sized image".into(),
            });
        }
        let tags = read_png_tags(&bytes).into_iter().collect();
        Ok(ImageInput {
            id,
            bytes,
            pixels,
            tags,
        })
    }

    pub fn from_record(record: &ImageRecord, ds: &Dataset) -> Result<Self> {
        let path = ds.image_path(record);
        let bytes = std::fs::read(&path).map_err(|e| AuditError::Image {
            id: record.id.clone(),
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        let mut input = ImageInput::from_bytes(record.id.clone(), bytes)?;
        input.tags.insert(format!("region:{}", record.region));
        input.tags.insert(format!("gender:{}", record.gender));
        Ok(input)
    }

    /// Encodes `pixels` as PNG with the given content tags embedded.
    pub fn from_rgb(id: impl Into<String>, pixels: RgbImage, tags: &[String]) -> Result<Self> {
        let bytes = encode_tagged_png(&pixels, tags)?;
        Ok(ImageInput {
            id: id.into(),
            bytes,
            pixels,
            tags: tags.iter().cloned().collect(),
        })
    }

    /// `tag` may be a conjunction joined with `+`, e.g. `region:SA+gender:woman`.
    pub fn has_tag(&self, tag: &str) -> bool {
        tag.split('+').map(str::trim).all(|t| !t.is_empty() && self.tags.contains(t))
    }

    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }
}

pub fn encode_tagged_png(pixels: &RgbImage, tags: &[String]) -> Result<Vec<u8>> {
    let err = |e: png::EncodingError| AuditError::Computation(format!("PNG encoding failed: {e}"));
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, pixels.width(), pixels.height());
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        if !tags.is_empty() {
            encoder
                .add_text_chunk(TAG_CHUNK_KEYWORD.to_string(), tags.join(","))
                .map_err(err)?;
        }
        let mut writer = encoder.write_header().map_err(err)?;
        writer.write_image_data(pixels.as_raw()).map_err(err)?;
    }
    Ok(out)
}

/// Content tags from a PNG `tags` text chunk; empty for other formats.
pub fn read_png_tags(bytes: &[u8]) -> Vec<String> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let Ok(reader) = decoder.read_info() else {
        return Vec::new();
    };
    reader
        .info()
        .uncompressed_latin1_text
        .iter()
        .filter(|chunk| chunk.keyword == TAG_CHUNK_KEYWORD)
        .flat_map(|chunk| chunk.text.split(',').map(|t| t.trim().to_string()).collect::<Vec<_>>())
        .filter(|t| !t.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_survive_png_round_trip() {
        let img = RgbImage::from_pixel(4, 3, image::Rgb([10, 20, 30]));
        let input = ImageInput::from_rgb("x", img.clone(), &["planted".into(), "hijab".into()]).unwrap();
        let back = ImageInput::from_bytes("x", input.bytes.clone()).unwrap();
        assert_eq!(back.pixels, img);
        assert!(back.has_tag("planted"));
        assert!(back.has_tag("planted+hijab"));
        assert!(!back.has_tag("planted+other"));
        assert!(!back.has_tag(""));
    }

    #[test]
    fn corrupt_bytes_name_the_id() {
        let err = ImageInput::from_bytes("rec-7", b"not an image".to_vec()).unwrap_err();
        assert!(err.to_string().contains("rec-7"));
    }
}
