//! Binary PPM (P6) and PGM (P5) readers and writers.
//!
//! 16-bit PGM data is big-endian, as the format requires. Masks are 8-bit
//! PGMs holding 0 or 255.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::IoError;
use crate::image::{BitMask, RgbImage};

pub fn write_ppm(path: &Path, image: &RgbImage) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P6\n{} {}\n255\n", image.width, image.height)?;
    let mut buf = Vec::with_capacity(image.pixels.len() * 3);
    for px in &image.pixels {
        buf.extend_from_slice(px);
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_ppm(path: &Path) -> Result<RgbImage, IoError> {
    let data = std::fs::read(path)?;
    let (magic, width, height, maxval, body) = parse_pnm_header(path, &data)?;
    if magic != "P6" {
        return Err(IoError::format(path, format!("expected P6, got {magic}")));
    }
    if maxval != 255 {
        return Err(IoError::format(path, "only maxval 255 PPM is supported"));
    }
    let expected = width * height * 3;
    if body.len() < expected {
        return Err(IoError::format(path, "truncated pixel data"));
    }
    let pixels = body[..expected]
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    Ok(RgbImage {
        width,
        height,
        pixels,
    })
}

pub fn write_mask_pgm(path: &Path, mask: &BitMask) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", mask.width, mask.height)?;
    let buf: Vec<u8> = mask.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
    w.write_all(&buf)?;
    Ok(())
}

/// Read an 8-bit PGM as a mask; any value >= 128 counts as set.
pub fn read_mask_pgm(path: &Path) -> Result<BitMask, IoError> {
    let data = std::fs::read(path)?;
    let (magic, width, height, maxval, body) = parse_pnm_header(path, &data)?;
    if magic != "P5" {
        return Err(IoError::format(path, format!("expected P5, got {magic}")));
    }
    if maxval > 255 {
        return Err(IoError::format(path, "mask PGM must be 8-bit"));
    }
    let expected = width * height;
    if body.len() < expected {
        return Err(IoError::format(path, "truncated pixel data"));
    }
    Ok(BitMask {
        width,
        height,
        bits: body[..expected].iter().map(|&v| v >= 128).collect(),
    })
}

pub fn write_pgm16(path: &Path, width: usize, height: usize, values: &[u16]) -> Result<(), IoError> {
    assert_eq!(values.len(), width * height);
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n65535\n", width, height)?;
    let mut buf = Vec::with_capacity(values.len() * 2);
    for v in values {
        buf.extend_from_slice(&v.to_be_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_pgm16(path: &Path) -> Result<(usize, usize, Vec<u16>), IoError> {
    let data = std::fs::read(path)?;
    let (magic, width, height, maxval, body) = parse_pnm_header(path, &data)?;
    if magic != "P5" {
        return Err(IoError::format(path, format!("expected P5, got {magic}")));
    }
    if maxval != 65535 {
        return Err(IoError::format(path, "expected a 16-bit PGM (maxval 65535)"));
    }
    let expected = width * height * 2;
    if body.len() < expected {
        return Err(IoError::format(path, "truncated pixel data"));
    }
    let values = body[..expected]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((width, height, values))
}

/// Parse a PNM header, returning `(magic, width, height, maxval, body)`.
/// Handles `#` comments and arbitrary whitespace between tokens.
fn parse_pnm_header<'a>(
    path: &Path,
    data: &'a [u8],
) -> Result<(String, usize, usize, usize, &'a [u8]), IoError> {
    let mut pos = 0usize;
    let mut token = || -> Result<String, IoError> {
        // Skip whitespace and comments.
        loop {
            while pos < data.len() && data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < data.len() && data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(IoError::format(path, "truncated header"));
        }
        Ok(String::from_utf8_lossy(&data[start..pos]).into_owned())
    };

    let magic = token()?;
    let width: usize = token()?
        .parse()
        .map_err(|_| IoError::format(path, "bad width"))?;
    let height: usize = token()?
        .parse()
        .map_err(|_| IoError::format(path, "bad height"))?;
    let maxval: usize = token()?
        .parse()
        .map_err(|_| IoError::format(path, "bad maxval"))?;
    // Exactly one whitespace byte separates the header from the raster.
    let body_start = pos + 1;
    if body_start > data.len() {
        return Err(IoError::format(path, "missing raster"));
    }
    Ok((magic, width, height, maxval, &data[body_start..]))
}

/// Write a depth image as a 16-bit PGM in millimeters (0 = invalid).
pub fn write_depth_pgm(path: &Path, depth: &crate::image::DepthImage) -> Result<(), IoError> {
    let values: Vec<u16> = depth
        .depths
        .iter()
        .map(|&d| (d * 1000.0).round().clamp(0.0, 65535.0) as u16)
        .collect();
    write_pgm16(path, depth.width, depth.height, &values)
}

/// Read a 16-bit millimeter PGM into a depth image in meters.
pub fn read_depth_pgm(path: &Path) -> Result<crate::image::DepthImage, IoError> {
    let (width, height, values) = read_pgm16(path)?;
    Ok(crate::image::DepthImage {
        width,
        height,
        depths: values.iter().map(|&v| v as f64 / 1000.0).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_path(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("harvest_core_pnm_tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn ppm_round_trip() {
        let mut img = RgbImage::new(3, 2);
        for (i, px) in img.pixels.iter_mut().enumerate() {
            *px = [i as u8, (i * 40) as u8, 255 - i as u8];
        }
        let path = temp_path("rt.ppm");
        write_ppm(&path, &img).unwrap();
        assert_eq!(read_ppm(&path).unwrap(), img);
    }

    #[test]
    fn mask_round_trip() {
        let mut mask = BitMask::new(4, 3);
        mask.set(0, 0, true);
        mask.set(2, 3, true);
        let path = temp_path("rt_mask.pgm");
        write_mask_pgm(&path, &mask).unwrap();
        assert_eq!(read_mask_pgm(&path).unwrap(), mask);
    }

    #[test]
    fn pgm16_round_trip_and_endianness() {
        let path = temp_path("rt16.pgm");
        write_pgm16(&path, 2, 1, &[0x1234, 0xfffe]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        // Raster is big-endian.
        let raster = &bytes[bytes.len() - 4..];
        assert_eq!(raster, &[0x12, 0x34, 0xff, 0xfe]);
        let (w, h, vals) = read_pgm16(&path).unwrap();
        assert_eq!((w, h), (2, 1));
        assert_eq!(vals, vec![0x1234, 0xfffe]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let path = temp_path("comments.pgm");
        std::fs::write(&path, b"P5\n# a comment\n2 1\n# another\n255\n\x00\xff").unwrap();
        let mask = read_mask_pgm(&path).unwrap();
        assert_eq!(mask.bits, vec![false, true]);
    }
}
