//! 16-bit binary PGM (portable graymap, magic `P5`, maxval 65535) image
//! output, plus a reader for the standalone PSG command. Sample bytes are
//! big-endian per the PNM convention.

use std::io;
use std::path::Path;

use drtz_core::field::{Mask2D, ScalarField2D};

use crate::error::CliError;

/// Encodes a magnitude image, mapping `[0, scale_max]` linearly onto
/// `[0, 65535]`. A non-positive `scale_max` produces an all-zero image.
pub fn encode_pgm16(field: &ScalarField2D, scale_max: f64) -> Vec<u8> {
    let (ny, nx) = field.shape();
    let mut bytes = format!("P5\n{nx} {ny}\n65535\n").into_bytes();
    bytes.reserve(2 * nx * ny);
    for &v in field.values().iter() {
        let level = if scale_max > 0.0 {
            (v / scale_max * 65535.0).round().clamp(0.0, 65535.0) as u16
        } else {
            0
        };
        bytes.extend_from_slice(&level.to_be_bytes());
    }
    bytes
}

/// Encodes a mask as an 8-bit PGM with 255 for set pixels.
pub fn encode_pgm_mask(mask: &Mask2D) -> Vec<u8> {
    let (ny, nx) = mask.shape();
    let mut bytes = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    bytes.extend(mask.values().iter().map(|&set| if set { 255u8 } else { 0 }));
    bytes
}

struct PgmHeader {
    width: usize,
    height: usize,
    maxval: usize,
    data_offset: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<PgmHeader, CliError> {
    let bad = |msg: &str| CliError::Config(format!("{}: {msg}", path.display()));
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(bad("not a binary PGM (missing P5 magic)"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for slot in fields.iter_mut() {
        // skip whitespace and # comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err(bad("malformed header field"));
        }
        *slot = std::str::from_utf8(&bytes[start..pos])
            .expect("digits are utf8")
            .parse()
            .map_err(|e| bad(&format!("header field: {e}")))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(bad("expected whitespace after maxval")),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(bad("unsupported PGM geometry or maxval"));
    }
    Ok(PgmHeader { width, height, maxval, data_offset: pos })
}

fn read_samples(bytes: &[u8], header: &PgmHeader, path: &Path) -> Result<Vec<f64>, CliError> {
    let n = header.width * header.height;
    let data = &bytes[header.data_offset..];
    let samples: Vec<f64> = if header.maxval > 255 {
        if data.len() < 2 * n {
            return Err(CliError::Config(format!("{}: truncated pixel data", path.display())));
        }
        data.chunks_exact(2).take(n).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64).collect()
    } else {
        if data.len() < n {
            return Err(CliError::Config(format!("{}: truncated pixel data", path.display())));
        }
        data.iter().take(n).map(|&b| b as f64).collect()
    };
    Ok(samples)
}

/// Reads a PGM as a scalar field of raw sample values (unit spacing).
pub fn read_pgm(path: &Path) -> Result<ScalarField2D, CliError> {
    let bytes = std::fs::read(path)?;
    let header = parse_header(&bytes, path)?;
    let samples = read_samples(&bytes, &header, path)?;
    let nx = header.width;
    ScalarField2D::from_fn(header.height, nx, [1.0, 1.0], |r, c| samples[r * nx + c])
        .map_err(CliError::from)
}

/// Reads a PGM as a mask: any nonzero sample is set.
pub fn read_pgm_mask(path: &Path) -> Result<Mask2D, CliError> {
    let bytes = std::fs::read(path)?;
    let header = parse_header(&bytes, path)?;
    let samples = read_samples(&bytes, &header, path)?;
    let nx = header.width;
    Mask2D::from_fn(header.height, nx, |r, c| samples[r * nx + c] != 0.0).map_err(CliError::from)
}

/// Writes bytes atomically: a temp file in the target directory is renamed
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp-write");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm16_round_trips() {
        let field = ScalarField2D::from_fn(3, 4, [1.0; 2], |r, c| (r * 4 + c) as f64).unwrap();
        let bytes = encode_pgm16(&field, 11.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        write_atomic(&path, &bytes).unwrap();
        let back = read_pgm(&path).unwrap();
        assert_eq!(back.shape(), (3, 4));
        assert_eq!(back.get(0, 0), 0.0);
        assert_eq!(back.get(2, 3), 65535.0);
        // linear scaling up to rounding
        let expected = (5.0 / 11.0 * 65535.0_f64).round();
        assert_eq!(back.get(1, 1), expected);
    }

    #[test]
    fn mask_round_trips() {
        let mask = Mask2D::from_fn(4, 5, |r, c| (r + c) % 2 == 0).unwrap();
        let bytes = encode_pgm_mask(&mask);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.pgm");
        write_atomic(&path, &bytes).unwrap();
        let back = read_pgm_mask(&path).unwrap();
        assert_eq!(back, mask);
    }

    #[test]
    fn zero_scale_writes_zeros() {
        let field = ScalarField2D::uniform(2, 2, [1.0; 2], 0.0).unwrap();
        let bytes = encode_pgm16(&field, 0.0);
        assert!(bytes.ends_with(&[0, 0, 0, 0, 0, 0, 0, 0]));
    }
}
