//! Minimal PNG rasterisation for heatmaps and bar charts. The numbers
//! behind each figure are always written as CSV alongside it.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};

const CELL: usize = 24;
const BAR_W: usize = 24;
const BAR_GAP: usize = 8;
const BAR_H: usize = 200;

fn write_rgb(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(f), width as u32, height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let to_err = |e: png::EncodingError| Error::invalid(format!("{}: {e}", path.display()));
    let mut w = enc.write_header().map_err(to_err)?;
    w.write_image_data(pixels).map_err(to_err)?;
    w.finish().map_err(to_err)
}

/// White-to-blue heatmap of values in [0, 1], one square per cell.
pub fn heatmap_png(path: &Path, values: &[Vec<f64>]) -> Result<()> {
    let rows = values.len().max(1);
    let cols = values.iter().map(Vec::len).max().unwrap_or(0).max(1);
    let (w, h) = (cols * CELL, rows * CELL);
    let mut px = vec![255u8; w * h * 3];
    for (r, row) in values.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            let t = v.clamp(0.0, 1.0);
            let rgb = [(255.0 * (1.0 - t)) as u8, (255.0 * (1.0 - 0.7 * t)) as u8, 255u8];
            for y in r * CELL..(r + 1) * CELL {
                for x in c * CELL..(c + 1) * CELL {
                    px[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&rgb);
                }
            }
        }
    }
    write_rgb(path, w, h, &px)
}

/// Vertical bars scaled to the largest value.
pub fn bar_chart_png(path: &Path, values: &[f64]) -> Result<()> {
    let n = values.len().max(1);
    let w = n * (BAR_W + BAR_GAP) + BAR_GAP;
    let h = BAR_H + 2 * BAR_GAP;
    let mut px = vec![255u8; w * h * 3];
    let max = values.iter().cloned().fold(0.0f64, f64::max);
    for (i, v) in values.iter().enumerate() {
        let bar = if max > 0.0 { ((v / max) * BAR_H as f64).round() as usize } else { 0 };
        let x0 = BAR_GAP + i * (BAR_W + BAR_GAP);
        for y in (h - BAR_GAP - bar)..(h - BAR_GAP) {
            for x in x0..x0 + BAR_W {
                px[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&[60, 90, 170]);
            }
        }
    }
    write_rgb(path, w, h, &px)
}
