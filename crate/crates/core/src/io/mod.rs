//! Raster file formats: 16-bit depth PNG, 8-bit label PNG, 8-bit RGB PNG,
//! and binary embedding rasters (`width, height, dim: u32` then row-major
//! `f32`).

pub mod binary;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gsmap::{ColorImage, DepthFrame, LabelImage, PixelEmbeddingFrame};
use binary::{ByteReader, ByteWriter};

struct DecodedPng {
    width: u32,
    height: u32,
    color: png::ColorType,
    depth: png::BitDepth,
    data: Vec<u8>,
}

fn read_png(path: &Path) -> Result<DecodedPng> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| Error::format(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let mut data = vec![0; size];
    let info = reader.next_frame(&mut data).map_err(|e| Error::format(path, e.to_string()))?;
    data.truncate(info.buffer_size());
    Ok(DecodedPng {
        width: info.width,
        height: info.height,
        color: info.color_type,
        depth: info.bit_depth,
        data,
    })
}

fn write_png(path: &Path, width: u32, height: u32, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width, height);
    enc.set_color(color);
    enc.set_depth(depth);
    let mut w = enc.write_header().map_err(|e| Error::format(path, e.to_string()))?;
    w.write_image_data(data).map_err(|e| Error::format(path, e.to_string()))?;
    w.finish().map_err(|e| Error::format(path, e.to_string()))
}

/// Raw 16-bit depth units.
pub fn read_depth_units(path: &Path) -> Result<(u32, u32, Vec<u16>)> {
    let img = read_png(path)?;
    if img.color != png::ColorType::Grayscale || img.depth != png::BitDepth::Sixteen {
        return Err(Error::format(path, "depth image must be 16-bit single channel"));
    }
    let units = img.data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok((img.width, img.height, units))
}

pub fn read_depth_png(path: &Path, depth_factor: f64, max_range: f64) -> Result<DepthFrame> {
    let (w, h, units) = read_depth_units(path)?;
    DepthFrame::from_units(w, h, &units, depth_factor, max_range).map_err(|e| Error::format(path, e.to_string()))
}

/// Writes depth as `round(depth / depth_factor)` clamped to `u16`.
pub fn write_depth_png(path: &Path, frame: &DepthFrame, depth_factor: f64) -> Result<()> {
    let mut data = Vec::with_capacity(frame.depth.len() * 2);
    for &d in &frame.depth {
        let u = (d / depth_factor).round().clamp(0.0, u16::MAX as f64) as u16;
        data.extend_from_slice(&u.to_be_bytes());
    }
    write_png(path, frame.width, frame.height, png::ColorType::Grayscale, png::BitDepth::Sixteen, &data)
}

pub fn read_label_png(path: &Path) -> Result<LabelImage> {
    let img = read_png(path)?;
    if img.color != png::ColorType::Grayscale || img.depth != png::BitDepth::Eight {
        return Err(Error::format(path, "label image must be 8-bit single channel"));
    }
    LabelImage::new(img.width, img.height, img.data).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_label_png(path: &Path, labels: &LabelImage) -> Result<()> {
    write_png(path, labels.width, labels.height, png::ColorType::Grayscale, png::BitDepth::Eight, &labels.data)
}

pub fn read_color_png(path: &Path) -> Result<ColorImage> {
    let img = read_png(path)?;
    if img.depth != png::BitDepth::Eight {
        return Err(Error::format(path, "color image must be 8-bit"));
    }
    let channels = match img.color {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Grayscale => 1,
        _ => return Err(Error::format(path, "unsupported color type")),
    };
    let data = img
        .data
        .chunks_exact(channels)
        .map(|c| {
            let f = |v: u8| v as f64 / 255.0;
            if channels == 1 {
                [f(c[0]); 3]
            } else {
                [f(c[0]), f(c[1]), f(c[2])]
            }
        })
        .collect();
    ColorImage::new(img.width, img.height, data).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_color_png(path: &Path, img: &ColorImage) -> Result<()> {
    let data: Vec<u8> = img
        .data
        .iter()
        .flat_map(|c| c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
        .collect();
    write_png(path, img.width, img.height, png::ColorType::Rgb, png::BitDepth::Eight, &data)
}

pub fn encode_embedding(frame: &PixelEmbeddingFrame) -> Vec<u8> {
    let mut w = ByteWriter::with_capacity(12 + frame.data.len() * 4);
    w.u32(frame.width);
    w.u32(frame.height);
    w.u32(frame.dim as u32);
    frame.data.iter().for_each(|&v| w.f32(v));
    w.into_inner()
}

pub fn read_embedding_raster(path: &Path) -> Result<PixelEmbeddingFrame> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = ByteReader::new(&bytes, path);
    let (w, h, d) = (r.u32()?, r.u32()?, r.u32()? as usize);
    let n = w as usize * h as usize * d;
    if r.remaining() != n * 4 {
        return Err(Error::format(path, format!("expected {n} f32 values")));
    }
    let data = (0..n).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
    PixelEmbeddingFrame::new(w, h, d, data).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_embedding_raster(path: &Path, frame: &PixelEmbeddingFrame) -> Result<()> {
    std::fs::write(path, encode_embedding(frame)).map_err(|e| Error::io(path, e))
}
