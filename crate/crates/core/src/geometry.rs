//! Rectangles in pixel and patch-grid coordinates.

use serde::{Deserialize, Serialize};

/// Axis-aligned rectangle in image pixels; `x`/`y` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl PixelRect {
    pub fn new(x: u32, y: u32, width: u32, height: u32) -> Self {
        PixelRect { x, y, width, height }
    }

    pub fn full(width: u32, height: u32) -> Self {
        PixelRect::new(0, 0, width, height)
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn right(&self) -> u32 {
        self.x + self.width
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.height
    }

    pub fn contains(&self, px: u32, py: u32) -> bool {
        px >= self.x && px < self.right() && py >= self.y && py < self.bottom()
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.width > 0 && self.height > 0 && self.right() <= width && self.bottom() <= height
    }

    /// Left and right halves of a `width`×`height` image.
    pub fn halves(width: u32, height: u32) -> [PixelRect; 2] {
        let left = width / 2;
        [
            PixelRect::new(0, 0, left, height),
            PixelRect::new(left, 0, width - left, height),
        ]
    }

    /// Top-left, top-right, bottom-left, bottom-right quadrants.
    pub fn quadrants(width: u32, height: u32) -> [PixelRect; 4] {
        let (w, h) = (width / 2, height / 2);
        [
            PixelRect::new(0, 0, w, h),
            PixelRect::new(w, 0, width - w, h),
            PixelRect::new(0, h, w, height - h),
            PixelRect::new(w, h, width - w, height - h),
        ]
    }
}

/// Rectangle of patches in a `rows`×`cols` patch grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridRect {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
}

impl GridRect {
    pub fn new(row: usize, col: usize, rows: usize, cols: usize) -> Self {
        GridRect { row, col, rows, cols }
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        r >= self.row && r < self.row + self.rows && c >= self.col && c < self.col + self.cols
    }

    pub fn fits_within(&self, grid_rows: usize, grid_cols: usize) -> bool {
        self.rows > 0 && self.cols > 0 && self.row + self.rows <= grid_rows && self.col + self.cols <= grid_cols
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Pixel rectangle covered by this patch block when a `grid` of patches is
    /// laid over `footprint` using integer patch boundaries.
    pub fn to_pixels(&self, grid: (usize, usize), footprint: PixelRect) -> PixelRect {
        let (y0, _) = patch_span(self.row, grid.0, footprint.height);
        let (_, y1) = patch_span(self.row + self.rows - 1, grid.0, footprint.height);
        let (x0, _) = patch_span(self.col, grid.1, footprint.width);
        let (_, x1) = patch_span(self.col + self.cols - 1, grid.1, footprint.width);
        PixelRect::new(footprint.x + x0, footprint.y + y0, x1 - x0, y1 - y0)
    }
}

/// Pixel span `[start, end)` of patch `index` when `extent` pixels are divided
/// into `count` patches.
pub fn patch_span(index: usize, count: usize, extent: u32) -> (u32, u32) {
    let e = extent as usize;
    ((index * e / count) as u32, ((index + 1) * e / count) as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_spans_tile_the_extent() {
        let mut prev = 0;
        for i in 0..7 {
            let (a, b) = patch_span(i, 7, 100);
            assert_eq!(a, prev);
            assert!(b > a);
            prev = b;
        }
        assert_eq!(prev, 100);
    }

    #[test]
    fn grid_rect_maps_to_pixels() {
        let r = GridRect::new(0, 0, 7, 3).to_pixels((7, 7), PixelRect::full(70, 70));
        assert_eq!(r, PixelRect::new(0, 0, 30, 70));
        assert!(!GridRect::new(5, 5, 3, 1).fits_within(7, 7));
    }

    #[test]
    fn halves_and_quadrants_cover_image() {
        let total: u64 = PixelRect::halves(33, 10).iter().map(PixelRect::area).sum();
        assert_eq!(total, 330);
        let total: u64 = PixelRect::quadrants(33, 11).iter().map(PixelRect::area).sum();
        assert_eq!(total, 363);
    }
}
