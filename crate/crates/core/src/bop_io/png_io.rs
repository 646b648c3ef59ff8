use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use png::{AdaptiveFilterType, BitDepth, ColorType, Compression, FilterType};

use crate::error::{Error, Result};

// Encoder settings are fixed so reruns are byte-identical.
fn write(path: &Path, width: usize, height: usize, color: ColorType, depth: BitDepth, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    enc.set_compression(Compression::Default);
    enc.set_filter(FilterType::Sub);
    enc.set_adaptive_filter(AdaptiveFilterType::NonAdaptive);
    let png_err = |source| Error::Png { path: path.to_path_buf(), source };
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(data).map_err(png_err)?;
    writer.finish().map_err(png_err)
}

/// 8-bit RGB, `data` interleaved row-major.
pub fn write_rgb8(path: &Path, width: usize, height: usize, data: &[u8]) -> Result<()> {
    write(path, width, height, ColorType::Rgb, BitDepth::Eight, data)
}

pub fn write_gray8(path: &Path, width: usize, height: usize, data: &[u8]) -> Result<()> {
    write(path, width, height, ColorType::Grayscale, BitDepth::Eight, data)
}

pub fn write_gray16(path: &Path, width: usize, height: usize, data: &[u16]) -> Result<()> {
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_be_bytes()).collect();
    write(path, width, height, ColorType::Grayscale, BitDepth::Sixteen, &bytes)
}

/// Decoded image: width, height and raw samples.
fn read(path: &Path, color: ColorType, depth: BitDepth) -> Result<(usize, usize, Vec<u8>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::InvalidAsset(format!("{}: {msg}", path.display()));
    let mut reader = png::Decoder::new(file).read_info().map_err(|e| bad(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| bad(e.to_string()))?;
    if info.color_type != color || info.bit_depth != depth {
        return Err(bad(format!(
            "expected {color:?} {depth:?}, found {:?} {:?}",
            info.color_type, info.bit_depth
        )));
    }
    buf.truncate(info.buffer_size());
    Ok((info.width as usize, info.height as usize, buf))
}

pub fn read_rgb8(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    read(path, ColorType::Rgb, BitDepth::Eight)
}

pub fn read_gray8(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    read(path, ColorType::Grayscale, BitDepth::Eight)
}

pub fn read_gray16(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let (w, h, bytes) = read(path, ColorType::Grayscale, BitDepth::Sixteen)?;
    let data = bytes.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok((w, h, data))
}
