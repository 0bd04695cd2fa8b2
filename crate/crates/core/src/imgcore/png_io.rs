use std::io::Cursor;
use std::path::Path;

use super::{srgb_decode, srgb_encode, LinearImage, Srgb8Image};
use crate::error::{Error, Result};

/// Encodes an 8-bit image as PNG (gray or RGB). Output bytes are a pure
/// function of the input.
pub fn encode_png(img: &Srgb8Image) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(if img.channels == 3 {
            png::ColorType::Rgb
        } else {
            png::ColorType::Grayscale
        });
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
        writer
            .write_image_data(&img.data)
            .map_err(|e| Error::Png(e.to_string()))?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<Srgb8Image> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| Error::Png(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Png("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Png(e.to_string()))?;
    buf.truncate(info.buffer_size());
    let (w, h) = (info.width as usize, info.height as usize);
    let (channels, data) = match info.color_type {
        png::ColorType::Grayscale => (1, buf),
        png::ColorType::Rgb => (3, buf),
        png::ColorType::GrayscaleAlpha => (1, buf.chunks_exact(2).map(|p| p[0]).collect()),
        png::ColorType::Rgba => (
            3,
            buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        ),
        png::ColorType::Indexed => return Err(Error::Png("unexpanded palette image".into())),
    };
    Srgb8Image::new(h, w, channels, data)
}

/// Writes a linear image as an sRGB PNG (clamped to `[0, 1]`).
pub fn write_png(img: &LinearImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(&srgb_encode(img))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads an 8-bit PNG and linearizes it.
pub fn read_png(path: impl AsRef<Path>) -> Result<LinearImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(srgb_decode(&decode_png(&bytes)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_rgb_and_gray() {
        for channels in [1, 3] {
            let data: Vec<u8> = (0..4 * 3 * channels).map(|i| (i * 19 % 256) as u8).collect();
            let img = Srgb8Image::new(4, 3, channels, data).unwrap();
            let bytes = encode_png(&img).unwrap();
            assert_eq!(decode_png(&bytes).unwrap(), img);
        }
    }

    #[test]
    fn encoding_is_deterministic() {
        let img = Srgb8Image::new(2, 2, 3, vec![7; 12]).unwrap();
        assert_eq!(encode_png(&img).unwrap(), encode_png(&img).unwrap());
    }
}
