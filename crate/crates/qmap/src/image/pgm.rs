//! Binary PGM (P5, 8-bit) reader and writer.
//!
//! Intensities map as `v / 255`; writing rounds back, so an 8-bit file
//! round-trips bit-exactly. Only `maxval <= 255` files are accepted.

use std::path::Path;

use super::GrayImage;
use crate::error::{QmapError, Result};

/// Parse a P5 PGM from bytes.
pub fn read_pgm_bytes(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0usize;

    let magic = take_token(bytes, &mut pos)
        .ok_or_else(|| QmapError::Parse("missing PGM magic".into()))?;
    if magic != b"P5" {
        return Err(QmapError::Parse(format!(
            "not a binary PGM (magic {:?})",
            String::from_utf8_lossy(magic)
        )));
    }
    let width = parse_dim(bytes, &mut pos, "width")?;
    let height = parse_dim(bytes, &mut pos, "height")?;
    let maxval = parse_dim(bytes, &mut pos, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(QmapError::Parse(format!("unsupported maxval {maxval} (need 8-bit)")));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(QmapError::Parse("missing raster separator".into()));
    }
    pos += 1;
    let need = width * height;
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(QmapError::Parse(format!(
            "raster too short: {} bytes for {}x{}",
            raster.len(),
            width,
            height
        )));
    }
    let samples = raster[..need].iter().map(|&b| b as f64 / 255.0).collect();
    GrayImage::new(width, height, samples)
}

fn take_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    skip_space_and_comments(bytes, pos);
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if *pos > start {
        Some(&bytes[start..*pos])
    } else {
        None
    }
}

fn skip_space_and_comments(bytes: &[u8], pos: &mut usize) {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            return;
        }
    }
}

fn parse_dim(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = take_token(bytes, pos)
        .ok_or_else(|| QmapError::Parse(format!("missing PGM {what}")))?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| QmapError::Parse(format!("bad PGM {what}")))
}

/// Serialize as binary P5 with maxval 255.
pub fn to_pgm_bytes(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(
        image
            .samples()
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    read_pgm_bytes(&std::fs::read(path)?)
}

pub fn write_pgm(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_pgm_bytes(image))?;
    Ok(())
}

/// Load every `.pgm` in a directory (sorted by name for determinism).
/// Non-conforming files are skipped; their names and errors are returned as
/// warnings for the caller to report.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<(Vec<GrayImage>, Vec<String>)> {
    let mut paths: Vec<_> = std::fs::read_dir(dir.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
        .collect();
    paths.sort();
    let mut images = Vec::new();
    let mut warnings = Vec::new();
    for path in paths {
        match read_pgm(&path) {
            Ok(img) => images.push(img),
            Err(e) => warnings.push(format!("skipping {}: {e}", path.display())),
        }
    }
    if images.is_empty() {
        return Err(QmapError::EmptyCorpus(format!(
            "no readable PGM files in {}",
            dir.as_ref().display()
        )));
    }
    Ok((images, warnings))
}
