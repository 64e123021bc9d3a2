//! Side-by-side PNG: observed hourly rain on the top row, forecast on the
//! bottom row, one column per lead hour.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};

use nowcast::grid_store::SequenceSample;
use nowcast::ForecastBundle;

/// Lower edges of the colour bins, mm/hr.
const LEVELS: [f64; 9] = [0.5, 1.0, 2.0, 5.0, 10.0, 15.0, 20.0, 30.0, 40.0];
const COLOURS: [[u8; 3]; 10] = [
    [255, 255, 255],
    [198, 219, 239],
    [107, 174, 214],
    [33, 113, 181],
    [65, 171, 93],
    [0, 109, 44],
    [254, 217, 118],
    [253, 141, 60],
    [227, 26, 28],
    [128, 0, 38],
];
const GAP: usize = 4;
const BACKGROUND: [u8; 3] = [90, 90, 90];

fn colour(v: f64) -> [u8; 3] {
    COLOURS[LEVELS.iter().take_while(|&&l| v >= l).count()]
}

/// Render and write the panel. Cells are scaled up so each map is at least
/// 128 pixels tall.
pub fn write_panel(sample: &SequenceSample, forecast: &ForecastBundle, path: &Path) -> Result<()> {
    let (h, w) = (forecast.height, forecast.width);
    let scale = (128 / h.max(1)).max(1);
    let (ch, cw) = (h * scale, w * scale);
    let cols = forecast.hours();
    let width = GAP + cols * (cw + GAP);
    let height = GAP + 2 * (ch + GAP);
    let mut rgb = vec![0u8; width * height * 3];
    for px in rgb.chunks_exact_mut(3) {
        px.copy_from_slice(&BACKGROUND);
    }
    let mut paint = |row: usize, col: usize, values: &[f64]| {
        let (oy, ox) = (GAP + row * (ch + GAP), GAP + col * (cw + GAP));
        for y in 0..ch {
            for x in 0..cw {
                let c = colour(values[(y / scale) * w + x / scale]);
                let i = ((oy + y) * width + ox + x) * 3;
                rgb[i..i + 3].copy_from_slice(&c);
            }
        }
    };
    for t in 0..cols {
        if let Some(target) = sample.targets.get(t) {
            paint(0, t, &target.values);
        }
        paint(1, t, &forecast.predictions[t]);
    }

    let file = File::create(path).with_context(|| path.display().to_string())?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().context("png header")?;
    writer.write_image_data(&rgb).context("png data")?;
    writer.finish().context("png finish")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_follow_levels() {
        assert_eq!(colour(0.0), COLOURS[0]);
        assert_eq!(colour(0.5), COLOURS[1]);
        assert_eq!(colour(4.99), COLOURS[3]);
        assert_eq!(colour(5.0), COLOURS[4]);
        assert_eq!(colour(100.0), COLOURS[9]);
    }
}
