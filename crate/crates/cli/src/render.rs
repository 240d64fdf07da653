//! PNG grids of image batches.
//!
//! A batch of `B` images is tiled on a `ceil(sqrt(B))` by `ceil(sqrt(B))`
//! grid, row-major, with 1-pixel white separators between cells. Unused cells
//! stay black. Values are clamped to `[0, 1]` and quantized as
//! `round(255 * v)` with halves rounded away from zero, so 0.5 becomes 128.
//! One channel gives 8-bit grayscale, three give 8-bit RGB.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use hard_core::diffcore::Tensor;

use crate::error::{CliError, CliResult};

pub const SEPARATOR: u8 = 255;

pub fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// A decoded or rendered 8-bit image, row-major and channel-interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

pub fn grid_side(batch: usize) -> usize {
    let mut side = (batch as f64).sqrt() as usize;
    while side * side < batch {
        side += 1;
    }
    side
}

pub fn tile(images: &Tensor) -> CliResult<Raster> {
    let &[b, c, h, w] = images.shape() else {
        return Err(CliError::Other(format!("render: expected [B, C, H, W], got {:?}", images.shape())));
    };
    if b == 0 || h == 0 || w == 0 || !(c == 1 || c == 3) {
        return Err(CliError::Other(format!("render: cannot tile {:?}", images.shape())));
    }
    let side = grid_side(b);
    let (width, height) = (side * w + side - 1, side * h + side - 1);
    let mut pixels = vec![0u8; width * height * c];
    for y in 0..height {
        for x in 0..width {
            if (y % (h + 1) == h) || (x % (w + 1) == w) {
                pixels[(y * width + x) * c..][..c].fill(SEPARATOR);
            }
        }
    }
    let data = images.data();
    for i in 0..b {
        let (gy, gx) = (i / side, i % side);
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let v = data[((i * c + ch) * h + y) * w + x];
                    let (py, px) = (gy * (h + 1) + y, gx * (w + 1) + x);
                    pixels[(py * width + px) * c + ch] = quantize(v);
                }
            }
        }
    }
    Ok(Raster { width, height, channels: c, pixels })
}

pub fn write_png(raster: &Raster, path: &Path) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), raster.width as u32, raster.height as u32);
    enc.set_color(if raster.channels == 3 { png::ColorType::Rgb } else { png::ColorType::Grayscale });
    enc.set_depth(png::BitDepth::Eight);
    let io_err = |e: png::EncodingError| CliError::Other(format!("{}: png encoding failed: {e}", path.display()));
    let mut writer = enc.write_header().map_err(io_err)?;
    writer.write_image_data(&raster.pixels).map_err(io_err)?;
    writer.finish().map_err(io_err)
}

pub fn read_png(path: &Path) -> CliResult<Raster> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let bad = |e: png::DecodingError| CliError::Other(format!("{}: png decoding failed: {e}", path.display()));
    let mut reader = png::Decoder::new(std::io::BufReader::new(file)).read_info().map_err(bad)?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(bad)?;
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => return Err(CliError::Other(format!("{}: unsupported colour type {other:?}", path.display()))),
    };
    buf.truncate(info.buffer_size());
    Ok(Raster {
        width: info.width as usize,
        height: info.height as usize,
        channels,
        pixels: buf,
    })
}

pub fn render_grid(images: &Tensor, path: &Path) -> CliResult<()> {
    write_png(&tile(images)?, path)
}
