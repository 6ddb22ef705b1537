//! Grouped bar plots rendered straight to PNG with a built-in 5×7 bitmap
//! font. One panel per metric, one bar per run, value printed above each
//! bar.

use std::path::Path;

use image::{ImageBuffer, Rgb};

use crate::error::{Error, Result};

const GLYPH_W: usize = 5;
const GLYPH_H: usize = 7;

fn glyph(c: char) -> [u8; GLYPH_H] {
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
        'D' => [0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x1B, 0x11],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        '+' => [0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00],
        '_' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F],
        '>' => [0x08, 0x04, 0x02, 0x01, 0x02, 0x04, 0x08],
        ' ' => [0x00; 7],
        _ => [0x1F, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1F], // unknown box
    }
}

type Canvas = ImageBuffer<Rgb<u8>, Vec<u8>>;

fn draw_text(img: &mut Canvas, x: i64, y: i64, text: &str, color: Rgb<u8>) {
    let mut cx = x;
    for c in text.chars() {
        let rows = glyph(c);
        for (gy, row) in rows.iter().enumerate() {
            for gx in 0..GLYPH_W {
                if row & (1 << (GLYPH_W - 1 - gx)) != 0 {
                    let (px, py) = (cx + gx as i64, y + gy as i64);
                    if px >= 0 && py >= 0 && (px as u32) < img.width() && (py as u32) < img.height()
                    {
                        img.put_pixel(px as u32, py as u32, color);
                    }
                }
            }
        }
        cx += (GLYPH_W + 1) as i64;
    }
}

fn fill_rect(img: &mut Canvas, x0: u32, y0: u32, x1: u32, y1: u32, color: Rgb<u8>) {
    for y in y0..y1.min(img.height()) {
        for x in x0..x1.min(img.width()) {
            img.put_pixel(x, y, color);
        }
    }
}

/// One panel of a grouped bar plot.
pub struct Panel {
    pub title: String,
    /// `(bar label, value)` pairs.
    pub bars: Vec<(String, f64)>,
}

/// Render side-by-side bar panels (one per metric) to a PNG file.
pub fn write_bar_plot(path: &Path, panels: &[Panel]) -> Result<()> {
    if panels.is_empty() || panels.iter().any(|p| p.bars.is_empty()) {
        return Err(Error::Config("bar plot needs at least one bar per panel".into()));
    }
    let panel_w = 80 + panels.iter().map(|p| p.bars.len()).max().unwrap() as u32 * 70;
    let (h, margin) = (320u32, 16u32);
    let w = margin + panels.len() as u32 * (panel_w + margin);
    let mut img: Canvas = ImageBuffer::from_pixel(w, h, Rgb([255, 255, 255]));

    let axis = Rgb([40, 40, 40]);
    let bar_color = Rgb([70, 120, 180]);
    let plot_top = 40u32;
    let plot_bottom = h - 60;

    for (pi, panel) in panels.iter().enumerate() {
        let x0 = margin + pi as u32 * (panel_w + margin);
        draw_text(&mut img, (x0 + 40) as i64, 12, &panel.title, axis);

        let vmax = panel.bars.iter().map(|(_, v)| *v).fold(f64::MIN, f64::max);
        let vmin = panel.bars.iter().map(|(_, v)| *v).fold(f64::MAX, f64::min);
        let lo = vmin.min(0.0);
        let hi = if vmax > lo { vmax } else { lo + 1.0 };
        let scale = (plot_bottom - plot_top) as f64 / (hi - lo);

        // axes
        fill_rect(&mut img, x0 + 30, plot_top, x0 + 31, plot_bottom + 1, axis);
        fill_rect(&mut img, x0 + 30, plot_bottom, x0 + panel_w - 10, plot_bottom + 1, axis);

        let slot = (panel_w - 50) / panel.bars.len() as u32;
        for (bi, (label, value)) in panel.bars.iter().enumerate() {
            let bx0 = x0 + 40 + bi as u32 * slot;
            let bw = (slot * 3 / 5).max(8);
            let bh = ((value - lo) * scale).max(0.0) as u32;
            let by0 = plot_bottom.saturating_sub(bh);
            fill_rect(&mut img, bx0, by0, bx0 + bw, plot_bottom, bar_color);
            draw_text(
                &mut img,
                bx0 as i64,
                by0 as i64 - 10,
                &format!("{value:.3}"),
                axis,
            );
            // stacked label lines fit long run names
            for (li, chunk) in label.as_bytes().chunks(9).enumerate() {
                draw_text(
                    &mut img,
                    bx0 as i64,
                    (plot_bottom + 8 + li as u32 * 9) as i64,
                    std::str::from_utf8(chunk).unwrap_or("?"),
                    axis,
                );
            }
        }
    }
    img.save(path)
        .map_err(|e| Error::format(path, format!("png encode: {e}")))
}
