//! Deterministic scatter-plot rasterizer: fixed canvas, one color per
//! label, legend with an embedded 5×7 bitmap font. No system fonts, no
//! timestamps, so identical input yields byte-identical PNGs.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{PadError, Result};

use super::EmbeddingPoint;

const WIDTH: u32 = 800;
const HEIGHT: u32 = 600;
const MARGIN: u32 = 40;
const LEGEND_WIDTH: u32 = 150;

const PALETTE: [[u8; 3]; 12] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
    [0, 72, 120],
    [160, 60, 0],
];

/// 5×7 glyphs, one u8 row mask per scanline (bit 4 = leftmost column).
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
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        '_' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        '/' => [0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10],
        ' ' => [0x00; 7],
        _ => [0x1F, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1F], // unknown: box
    }
}

fn draw_text(img: &mut image::RgbImage, x: u32, y: u32, text: &str, color: [u8; 3]) {
    let mut cx = x;
    for c in text.chars() {
        let rows = glyph(c);
        for (dy, row) in rows.iter().enumerate() {
            for dx in 0..5u32 {
                if row & (0x10 >> dx) != 0 {
                    let (px, py) = (cx + dx, y + dy as u32);
                    if px < img.width() && py < img.height() {
                        img.put_pixel(px, py, image::Rgb(color));
                    }
                }
            }
        }
        cx += 6;
    }
}

fn draw_disc(img: &mut image::RgbImage, cx: i64, cy: i64, r: i64, color: [u8; 3]) {
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                let (px, py) = (cx + dx, cy + dy);
                if px >= 0 && py >= 0 && (px as u32) < img.width() && (py as u32) < img.height() {
                    img.put_pixel(px as u32, py as u32, image::Rgb(color));
                }
            }
        }
    }
}

/// Renders points colored by label with a legend and writes a PNG.
/// Identical input produces byte-identical files.
pub fn scatter_plot(points: &[EmbeddingPoint], out_path: &Path) -> Result<()> {
    if points.is_empty() {
        return Err(PadError::Domain("cannot plot an empty point list".into()));
    }
    for p in points {
        if !p.coords[0].is_finite() || !p.coords[1].is_finite() {
            return Err(PadError::Domain(format!(
                "point {} has non-finite coordinates",
                p.sample_id
            )));
        }
    }

    let mut labels: Vec<&str> = points.iter().map(|p| p.label.as_str()).collect();
    labels.sort();
    labels.dedup();
    let color_of: BTreeMap<&str, [u8; 3]> = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, PALETTE[i % PALETTE.len()]))
        .collect();

    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        min_x = min_x.min(p.coords[0]);
        max_x = max_x.max(p.coords[0]);
        min_y = min_y.min(p.coords[1]);
        max_y = max_y.max(p.coords[1]);
    }
    let span_x = (max_x - min_x).max(1e-9);
    let span_y = (max_y - min_y).max(1e-9);

    let mut img = image::RgbImage::from_pixel(WIDTH, HEIGHT, image::Rgb([255, 255, 255]));

    // Plot frame.
    let plot_w = WIDTH - 2 * MARGIN - LEGEND_WIDTH;
    let plot_h = HEIGHT - 2 * MARGIN;
    for x in MARGIN..=(MARGIN + plot_w) {
        img.put_pixel(x, MARGIN, image::Rgb([0, 0, 0]));
        img.put_pixel(x, MARGIN + plot_h, image::Rgb([0, 0, 0]));
    }
    for y in MARGIN..=(MARGIN + plot_h) {
        img.put_pixel(MARGIN, y, image::Rgb([0, 0, 0]));
        img.put_pixel(MARGIN + plot_w, y, image::Rgb([0, 0, 0]));
    }

    for p in points {
        let fx = (p.coords[0] - min_x) / span_x;
        let fy = (p.coords[1] - min_y) / span_y;
        let px = MARGIN as f64 + 4.0 + fx * (plot_w as f64 - 8.0);
        // Screen y grows downward.
        let py = MARGIN as f64 + 4.0 + (1.0 - fy) * (plot_h as f64 - 8.0);
        draw_disc(
            &mut img,
            px.round() as i64,
            py.round() as i64,
            3,
            color_of[p.label.as_str()],
        );
    }

    // Legend: swatch + label, one row per label.
    let legend_x = MARGIN + plot_w + 14;
    for (i, label) in labels.iter().enumerate() {
        let y = MARGIN + 10 + (i as u32) * 14;
        if y + 8 >= HEIGHT - MARGIN {
            // More labels than rows; the tail is indicated once.
            draw_text(&mut img, legend_x, y, "...", [0, 0, 0]);
            break;
        }
        for dy in 0..7 {
            for dx in 0..7 {
                img.put_pixel(legend_x + dx, y + dy, image::Rgb(color_of[*label]));
            }
        }
        let shown: String = label.chars().take(18).collect();
        draw_text(&mut img, legend_x + 11, y, &shown, [0, 0, 0]);
    }

    img.save_with_format(out_path, image::ImageFormat::Png)
        .map_err(|e| PadError::io(out_path, std::io::Error::other(e.to_string())))
}
