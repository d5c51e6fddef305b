//! Drawing on RGB pixel grids: rectangles, a 5×7 bitmap font and the
//! confusion-matrix heat map.

use alloc::format;

use crate::data::PixelGrid;
use crate::eval::ConfusionMatrix;
use crate::NUM_CLASSES;

pub type Rgb = [u8; 3];

pub const BLACK: Rgb = [0, 0, 0];
pub const WHITE: Rgb = [255, 255, 255];
pub const GREEN: Rgb = [0, 255, 0];

pub const GLYPH_WIDTH: usize = 5;
pub const GLYPH_HEIGHT: usize = 7;
/// Horizontal distance between consecutive characters at scale 1.
pub const ADVANCE: usize = GLYPH_WIDTH + 1;

/// Rows of a glyph, most significant of the low five bits leftmost.
fn glyph(c: char) -> [u8; 7] {
    match c.to_ascii_uppercase() {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        ' ' => [0; 7],
        '.' => [0, 0, 0, 0, 0, 0x0C, 0x0C],
        ',' => [0, 0, 0, 0, 0x0C, 0x04, 0x08],
        ':' => [0, 0x0C, 0x0C, 0, 0x0C, 0x0C, 0],
        '-' => [0, 0, 0, 0x1F, 0, 0, 0],
        '_' => [0, 0, 0, 0, 0, 0, 0x1F],
        '/' => [0, 0x01, 0x02, 0x04, 0x08, 0x10, 0],
        '%' => [0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03],
        '(' => [0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02],
        ')' => [0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08],
        _ => [0x0E, 0x11, 0x01, 0x02, 0x04, 0, 0x04],
    }
}

fn check_rgb(img: &PixelGrid) {
    assert_eq!(img.channels(), 3, "drawing needs an RGB image");
}

/// Sets one pixel; coordinates outside the image are ignored.
pub fn put(img: &mut PixelGrid, x: isize, y: isize, color: Rgb) {
    if x < 0 || y < 0 || x as usize >= img.width() || y as usize >= img.height() {
        return;
    }
    let i = (y as usize * img.width() + x as usize) * 3;
    img.data_mut()[i..i + 3].copy_from_slice(&color);
}

/// Fills the clipped rectangle `[x, x + w) × [y, y + h)`.
pub fn fill_rect(img: &mut PixelGrid, x: isize, y: isize, w: usize, h: usize, color: Rgb) {
    check_rgb(img);
    for yy in y..y + h as isize {
        for xx in x..x + w as isize {
            put(img, xx, yy, color);
        }
    }
}

/// Outline of thickness `t` drawn inside the rectangle.
pub fn draw_rect(img: &mut PixelGrid, x: isize, y: isize, w: usize, h: usize, t: usize, color: Rgb) {
    let t = t.min(w).min(h);
    fill_rect(img, x, y, w, t, color);
    fill_rect(img, x, y + (h - t) as isize, w, t, color);
    fill_rect(img, x, y, t, h, color);
    fill_rect(img, x + (w - t) as isize, y, t, h, color);
}

/// Pixel width of `text` at `scale`.
pub fn text_width(text: &str, scale: usize) -> usize {
    match text.chars().count() {
        0 => 0,
        n => (n * ADVANCE - 1) * scale,
    }
}

/// Stamps `text` with its top-left corner at `(x, y)`.
pub fn draw_text(img: &mut PixelGrid, x: isize, y: isize, text: &str, scale: usize, color: Rgb) {
    check_rgb(img);
    for (i, c) in text.chars().enumerate() {
        let ox = x + (i * ADVANCE * scale) as isize;
        for (row, bits) in glyph(c).iter().enumerate() {
            for col in 0..GLYPH_WIDTH {
                if bits >> (GLYPH_WIDTH - 1 - col) & 1 == 1 {
                    let px = ox + (col * scale) as isize;
                    let py = y + (row * scale) as isize;
                    fill_rect(img, px, py, scale, scale, color);
                }
            }
        }
    }
}

/// Side length of one confusion-matrix cell in pixels.
pub const CELL: usize = 40;

/// Gray-level heat map of `cm`: cell brightness is the count divided by
/// the largest count in its row; nonzero counts are printed in the cell.
pub fn confusion_heatmap(cm: &ConfusionMatrix) -> PixelGrid {
    let side = CELL * NUM_CLASSES;
    let mut img = PixelGrid::filled(side, side, 3, 0);
    for (r, row) in cm.counts.iter().enumerate() {
        let row_max = row.iter().copied().max().unwrap_or(0);
        for (c, &n) in row.iter().enumerate() {
            let level = (255 * n + row_max / 2).checked_div(row_max).unwrap_or(0) as u8;
            let (x, y) = ((c * CELL) as isize, (r * CELL) as isize);
            fill_rect(&mut img, x, y, CELL, CELL, [level; 3]);
            if n > 0 {
                let text = format!("{n}");
                let scale = if text_width(&text, 2) <= CELL - 4 { 2 } else { 1 };
                let tx = x + ((CELL - text_width(&text, scale).min(CELL)) / 2) as isize;
                let ty = y + ((CELL - GLYPH_HEIGHT * scale) / 2) as isize;
                let ink = if level >= 128 { BLACK } else { WHITE };
                draw_text(&mut img, tx, ty, &text, scale, ink);
            }
        }
    }
    img
}
