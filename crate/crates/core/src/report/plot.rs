//! Deterministic PNG figures drawn with primitive shapes and an embedded 8×8
//! bitmap font, so output does not depend on system fonts.

use font8x8::UnicodeFonts;
use image::{Rgb, RgbImage};
use imageproc::drawing::{draw_filled_circle_mut, draw_filled_rect_mut, draw_hollow_rect_mut, draw_line_segment_mut};
use imageproc::rect::Rect;

use crate::analysis::{GroupMeanTable, IndexCorrelation};
use crate::dataset::{Gender, Region};
use crate::error::{AuditError, Result};
use crate::saliency::colormap;

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
const GREY: Rgb<u8> = Rgb([200, 200, 200]);
const POINT: Rgb<u8> = Rgb([31, 119, 180]);
const FIT: Rgb<u8> = Rgb([214, 39, 40]);

fn draw_text(img: &mut RgbImage, x: i32, y: i32, text: &str, colour: Rgb<u8>) {
    for (i, ch) in text.chars().enumerate() {
        let glyph = font8x8::BASIC_FONTS.get(ch).or_else(|| font8x8::BASIC_FONTS.get('?')).unwrap_or([0; 8]);
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..8 {
                if bits >> col & 1 == 1 {
                    let (px, py) = (x + (i * 8 + col) as i32, y + row as i32);
                    if px >= 0 && py >= 0 && (px as u32) < img.width() && (py as u32) < img.height() {
                        img.put_pixel(px as u32, py as u32, colour);
                    }
                }
            }
        }
    }
}

fn text_width(text: &str) -> i32 {
    8 * text.chars().count() as i32
}

fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| AuditError::Computation(format!("PNG encoding failed: {e}")))?;
    Ok(bytes)
}

fn luminance(c: Rgb<u8>) -> f64 {
    0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64
}

/// Keyword × region matrix of mean similarities for one gender, colour scaled
/// between the matrix minimum and maximum.
pub fn heatmap_png(table: &GroupMeanTable, keywords: &[&str], regions: &[Region], gender: Gender, title: &str) -> Result<Vec<u8>> {
    const CELL_W: i32 = 56;
    const CELL_H: i32 = 20;
    let label_w = keywords.iter().map(|k| text_width(k)).max().unwrap_or(0) + 16;
    let top = 44;
    let width = label_w + CELL_W * regions.len() as i32 + 16;
    let height = top + CELL_H * keywords.len() as i32 + 56;
    let mut img = RgbImage::from_pixel(width as u32, height as u32, WHITE);
    draw_text(&mut img, 8, 8, title, BLACK);

    let values: Vec<Option<f64>> = keywords
        .iter()
        .flat_map(|k| regions.iter().map(move |r| table.get(*r, gender, k).map(|s| s.mean)))
        .collect();
    let lo = values.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = |v: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };

    for (j, r) in regions.iter().enumerate() {
        let x = label_w + j as i32 * CELL_W + (CELL_W - text_width(r.abbreviation())) / 2;
        draw_text(&mut img, x, top - 14, r.abbreviation(), BLACK);
    }
    for (i, kw) in keywords.iter().enumerate() {
        let y = top + i as i32 * CELL_H;
        draw_text(&mut img, 8, y + 6, kw, BLACK);
        for j in 0..regions.len() {
            let x = label_w + j as i32 * CELL_W;
            let rect = Rect::at(x, y).of_size(CELL_W as u32, CELL_H as u32);
            match values[i * regions.len() + j] {
                Some(v) => {
                    let c = colormap(scale(v));
                    draw_filled_rect_mut(&mut img, rect, c);
                    let label = format!("{v:.3}");
                    let ink = if luminance(c) > 128.0 { BLACK } else { WHITE };
                    draw_text(&mut img, x + (CELL_W - text_width(&label)) / 2, y + 6, &label, ink);
                }
                None => draw_filled_rect_mut(&mut img, rect, GREY),
            }
            draw_hollow_rect_mut(&mut img, rect, WHITE);
        }
    }

    let bar_y = top + CELL_H * keywords.len() as i32 + 16;
    let bar_w = CELL_W * regions.len() as i32;
    for k in 0..bar_w {
        let c = colormap(k as f64 / (bar_w - 1).max(1) as f64);
        draw_filled_rect_mut(&mut img, Rect::at(label_w + k, bar_y).of_size(1, 10), c);
    }
    if lo.is_finite() {
        draw_text(&mut img, label_w, bar_y + 14, &format!("{lo:.3}"), BLACK);
        let hi_label = format!("{hi:.3}");
        draw_text(&mut img, label_w + bar_w - text_width(&hi_label), bar_y + 14, &hi_label, BLACK);
    }
    encode_png(&img)
}

/// Gender-gap index against gender difference, one labelled point per region,
/// with the least-squares line and the correlation annotated.
pub fn scatter_png(corr: &IndexCorrelation, title: &str) -> Result<Vec<u8>> {
    const W: i32 = 560;
    const H: i32 = 420;
    let (left, right, top, bottom) = (72, W - 24, 56, H - 56);
    let mut img = RgbImage::from_pixel(W as u32, H as u32, WHITE);
    draw_text(&mut img, 8, 8, title, BLACK);
    let c = &corr.correlation;
    draw_text(&mut img, 8, 24, &format!("r = {:.3}   p = {:.4}   n = {}", c.r, c.p, c.n), BLACK);

    let range = |vals: Vec<f64>| {
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let pad = if hi > lo { (hi - lo) * 0.1 } else { 0.05 };
        (lo - pad, hi + pad)
    };
    let (x0, x1) = range(corr.points.iter().map(|p| p.gggi).collect());
    let (y0, y1) = range(corr.points.iter().map(|p| p.gender_difference).collect());
    let sx = |x: f64| left as f32 + ((x - x0) / (x1 - x0)) as f32 * (right - left) as f32;
    let sy = |y: f64| bottom as f32 - ((y - y0) / (y1 - y0)) as f32 * (bottom - top) as f32;

    draw_hollow_rect_mut(&mut img, Rect::at(left, top).of_size((right - left) as u32, (bottom - top) as u32), BLACK);
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let px = sx(fx);
        draw_line_segment_mut(&mut img, (px, bottom as f32), (px, bottom as f32 + 4.0), BLACK);
        let label = format!("{fx:.3}");
        draw_text(&mut img, px as i32 - text_width(&label) / 2, bottom + 8, &label, BLACK);
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let py = sy(fy);
        draw_line_segment_mut(&mut img, (left as f32 - 4.0, py), (left as f32, py), BLACK);
        let label = format!("{fy:.3}");
        draw_text(&mut img, left - 8 - text_width(&label), py as i32 - 4, &label, BLACK);
    }
    let xlabel = "gender gap index";
    draw_text(&mut img, (left + right - text_width(xlabel)) / 2, H - 20, xlabel, BLACK);
    draw_text(&mut img, 8, top - 14, "gender difference", BLACK);

    let n = c.pairs.len() as f64;
    let mx = c.pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = c.pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = c.pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = c.pairs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx > 0.0 {
        let slope = sxy / sxx;
        let at = |x: f64| my + slope * (x - mx);
        draw_line_segment_mut(&mut img, (sx(x0), sy(at(x0))), (sx(x1), sy(at(x1))), FIT);
    }
    for p in &corr.points {
        let (px, py) = (sx(p.gggi) as i32, sy(p.gender_difference) as i32);
        draw_filled_circle_mut(&mut img, (px, py), 4, POINT);
        draw_text(&mut img, px + 7, py - 10, p.region.abbreviation(), BLACK);
    }
    encode_png(&img)
}
