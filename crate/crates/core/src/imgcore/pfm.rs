//! Portable float map I/O. Writes are always little-endian with scale `-1.0`;
//! reads accept either endianness. Rows are stored bottom-to-top on disk.

use std::fs;
use std::path::Path;

use super::LinearImage;
use crate::error::{Error, Result};

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    little_endian: bool,
    payload_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut tokens = Vec::with_capacity(4);
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::MalformedPfm("truncated header".into()));
        }
        tokens.push(
            std::str::from_utf8(&bytes[start..pos])
                .map_err(|_| Error::MalformedPfm("header is not ASCII".into()))?,
        );
    }
    // Exactly one whitespace byte separates the scale from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::MalformedPfm("missing newline after scale".into()));
    }
    pos += 1;

    let channels = match tokens[0] {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::MalformedPfm(format!("bad magic {other:?}"))),
    };
    let parse_dim = |s: &str, what: &str| -> Result<usize> {
        match s.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(Error::MalformedPfm(format!("bad {what} {s:?}"))),
        }
    };
    let width = parse_dim(tokens[1], "width")?;
    let height = parse_dim(tokens[2], "height")?;
    let scale: f64 = tokens[3]
        .parse()
        .map_err(|_| Error::MalformedPfm(format!("bad scale {:?}", tokens[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::MalformedPfm(format!("bad scale {scale}")));
    }
    Ok(Header {
        channels,
        width,
        height,
        little_endian: scale < 0.0,
        payload_offset: pos,
    })
}

/// Decodes a PFM byte buffer.
pub fn decode_pfm(bytes: &[u8]) -> Result<LinearImage> {
    let header = parse_header(bytes)?;
    let Header {
        channels,
        width,
        height,
        little_endian,
        payload_offset,
    } = header;
    let payload = &bytes[payload_offset..];
    let expected = width * height * channels * 4;
    if payload.len() != expected {
        return Err(Error::MalformedPfm(format!(
            "{width}x{height}x{channels} payload needs {expected} bytes, found {}",
            payload.len()
        )));
    }
    let row_len = width * channels;
    let mut data = vec![0.0f32; width * height * channels];
    for (file_row, chunk) in payload.chunks_exact(row_len * 4).enumerate() {
        let y = height - 1 - file_row;
        for (i, b) in chunk.chunks_exact(4).enumerate() {
            let raw = [b[0], b[1], b[2], b[3]];
            let v = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            let pixel = y * width + i / channels;
            if !v.is_finite() {
                return Err(Error::NonFinitePixel { index: pixel });
            }
            data[y * row_len + i] = v;
        }
    }
    LinearImage::new(height, width, channels, data)
}

pub fn encode_pfm(img: &LinearImage) -> Vec<u8> {
    let (h, w, c) = img.dims();
    let magic = if c == 3 { "PF" } else { "Pf" };
    let mut out = format!("{magic}\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(h * w * c * 4);
    let row_len = w * c;
    for y in (0..h).rev() {
        for v in &img.data()[y * row_len..(y + 1) * row_len] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<LinearImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    decode_pfm(&bytes)
}

pub fn write_pfm(img: &LinearImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pfm(img)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<f32> = (0..5 * 7 * 3).map(|_| rng.random::<f32>() * 4.0 - 1.0).collect();
        let img = LinearImage::new(7, 5, 3, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pfm");
        write_pfm(&img, &path).unwrap();
        let back = read_pfm(&path).unwrap();
        assert_eq!(
            back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            img.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(back.dims(), img.dims());
    }

    #[test]
    fn header_dims_are_width_then_height() {
        let mut bytes = b"PF\n5 7\n-1.0\n".to_vec();
        bytes.extend(std::iter::repeat_n(0u8, 5 * 7 * 3 * 4));
        let img = decode_pfm(&bytes).unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (5, 7, 3));
    }

    #[test]
    fn bottom_to_top_row_order() {
        let img = LinearImage::new(2, 1, 1, vec![1.0, 2.0]).unwrap();
        let bytes = encode_pfm(&img);
        let payload = &bytes[bytes.len() - 8..];
        assert_eq!(f32::from_le_bytes(payload[0..4].try_into().unwrap()), 2.0);
    }

    #[test]
    fn big_endian_files_are_read() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend(0.5f32.to_be_bytes());
        bytes.extend(0.25f32.to_be_bytes());
        let img = decode_pfm(&bytes).unwrap();
        assert_eq!(img.data(), &[0.5, 0.25]);
    }

    #[test]
    fn color_magic_with_gray_payload_is_rejected() {
        let mut bytes = b"PF\n5 7\n-1.0\n".to_vec();
        bytes.extend(std::iter::repeat_n(0u8, 5 * 7 * 4));
        assert!(matches!(decode_pfm(&bytes), Err(Error::MalformedPfm(_))));
    }

    #[test]
    fn nan_payload_reports_pixel() {
        let mut bytes = b"Pf\n2 2\n-1.0\n".to_vec();
        // File order is bottom row first: pixels (1,0), (1,1), (0,0), (0,1).
        for v in [0.0f32, f32::NAN, 0.0, 0.0] {
            bytes.extend(v.to_le_bytes());
        }
        match decode_pfm(&bytes) {
            Err(Error::NonFinitePixel { index }) => assert_eq!(index, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_headers() {
        assert!(decode_pfm(b"P6\n1 1\n-1.0\n").is_err());
        assert!(decode_pfm(b"PF\n1\n").is_err());
        assert!(decode_pfm(b"PF\n0 1\n-1.0\n").is_err());
        assert!(decode_pfm(b"PF\n1 1\nabc\n").is_err());
    }
}
