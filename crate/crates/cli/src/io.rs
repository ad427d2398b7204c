//! 8-bit PNG reading and writing for images and label maps.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use adsample_core::{ClassId, ImageBuffer, LabelMap, PixelGrid};

use crate::error::{Error, Result};

/// Class id reserved for "not evaluated" in label PNGs.
pub const DEFAULT_IGNORE_ID: ClassId = 255;

struct Decoded {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<u8>,
}

fn decode(path: &Path, transformations: png::Transformations) -> Result<(Decoded, png::ColorType)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(transformations);
    let err = |source| Error::PngDecode { path: path.into(), source };
    let mut reader = decoder.read_info().map_err(err)?;
    let mut data = vec![0; reader.output_buffer_size()];
    let frame = reader.next_frame(&mut data).map_err(err)?;
    if frame.bit_depth != png::BitDepth::Eight {
        return Err(Error::PngLayout { path: path.into(), detail: format!("bit depth {:?}", frame.bit_depth) });
    }
    data.truncate(frame.buffer_size());
    let channels = frame.color_type.samples();
    Ok((Decoded { height: frame.height as usize, width: frame.width as usize, channels, data }, frame.color_type))
}

/// Reads an 8-bit image as channel-major `f64` values in `[0, 255]`.
/// Palettes are expanded; an alpha channel is dropped.
pub fn read_image(path: &Path) -> Result<ImageBuffer> {
    let (d, color) = decode(path, png::Transformations::EXPAND)?;
    let keep = match color {
        png::ColorType::GrayscaleAlpha => 1,
        png::ColorType::Rgba => 3,
        _ => d.channels,
    };
    let grid = PixelGrid::new(d.height, d.width)?;
    let plane = d.height * d.width;
    let mut values = vec![0.0; keep * plane];
    for p in 0..plane {
        for c in 0..keep {
            values[c * plane + p] = f64::from(d.data[p * d.channels + c]);
        }
    }
    Ok(ImageBuffer::new(grid, keep, values)?)
}

/// Reads a single-channel label PNG: grayscale values or raw palette indices
/// are the class ids.
pub fn read_labels(path: &Path, ignore_id: Option<ClassId>) -> Result<LabelMap> {
    let (d, color) = decode(path, png::Transformations::IDENTITY)?;
    if !matches!(color, png::ColorType::Grayscale | png::ColorType::Indexed) {
        return Err(Error::PngLayout { path: path.into(), detail: format!("label maps need one channel, found {color:?}") });
    }
    let grid = PixelGrid::new(d.height, d.width)?;
    Ok(LabelMap::new(grid, d.data.into_iter().map(ClassId::from).collect(), ignore_id)?)
}

fn encode(path: &Path, width: usize, height: usize, color: png::ColorType, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let err = |source| Error::PngEncode { path: path.into(), source };
    let mut writer = encoder.write_header().map_err(err)?;
    writer.write_image_data(data).map_err(err)?;
    writer.finish().map_err(err)
}

/// Writes a 1- or 3-channel image, rounding and clamping values to `u8`.
pub fn write_image(path: &Path, image: &ImageBuffer) -> Result<()> {
    let color = match image.channels() {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        n => return Err(Error::PngLayout { path: path.into(), detail: format!("{n} channels") }),
    };
    let (h, w) = image.grid().shape();
    let plane = h * w;
    let mut data = Vec::with_capacity(plane * image.channels());
    for p in 0..plane {
        for c in 0..image.channels() {
            data.push(image.values()[c * plane + p].round().clamp(0.0, 255.0) as u8);
        }
    }
    encode(path, w, h, color, &data)
}

/// Writes a grayscale label PNG; ids above 255 are rejected.
pub fn write_labels(path: &Path, labels: &LabelMap) -> Result<()> {
    let data = labels
        .labels()
        .iter()
        .map(|&l| u8::try_from(l))
        .collect::<Result<Vec<u8>, _>>()
        .map_err(|_| Error::PngLayout { path: path.into(), detail: "class id above 255".into() })?;
    let (h, w) = labels.grid().shape();
    encode(path, w, h, png::ColorType::Grayscale, &data)
}

/// Offset and side of the central largest square.
fn square_window(h: usize, w: usize) -> (usize, usize, usize) {
    let side = h.min(w);
    (side, (h - side) / 2, (w - side) / 2)
}

pub fn center_crop_image(image: &ImageBuffer) -> Result<ImageBuffer> {
    let (h, w) = image.grid().shape();
    let (side, r0, c0) = square_window(h, w);
    let mut values = Vec::with_capacity(image.channels() * side * side);
    for c in 0..image.channels() {
        for r in 0..side {
            for col in 0..side {
                values.push(image.get(c, r0 + r, c0 + col));
            }
        }
    }
    Ok(ImageBuffer::new(PixelGrid::new(side, side)?, image.channels(), values)?)
}

pub fn center_crop_labels(labels: &LabelMap) -> Result<LabelMap> {
    let (h, w) = labels.grid().shape();
    let (side, r0, c0) = square_window(h, w);
    let grid = PixelGrid::new(side, side)?;
    Ok(LabelMap::from_fn(grid, labels.ignore_id(), |r, c| labels.get(r0 + r, c0 + c)))
}
