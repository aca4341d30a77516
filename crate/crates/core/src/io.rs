//! Grayscale image files: binary PGM (P5) natively, PNG and JPEG through
//! the `image` crate. Color inputs are reduced with integer Rec.601 luma.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::imgproc::GrayImage;

fn is_pgm(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("pgm") | Some("pnm")
    )
}

pub fn read_gray(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"P5") {
        return decode_pgm(&bytes);
    }
    let dynamic = image::load_from_memory(&bytes)?;
    let rgb = dynamic.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb
        .pixels()
        .map(|p| {
            let [r, g, b] = p.0;
            ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
        })
        .collect();
    GrayImage::new(w as usize, h as usize, data)
}

pub fn write_gray(img: &GrayImage, path: &Path) -> Result<()> {
    if is_pgm(path) {
        let mut out = BufWriter::new(fs::File::create(path)?);
        out.write_all(&encode_pgm(img))?;
        out.flush()?;
        return Ok(());
    }
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, img.data().to_vec())
        .ok_or_else(|| Error::InvalidDimensions { width: img.width(), height: img.height(), len: img.data().len() })?;
    buf.save(path)?;
    Ok(())
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let corrupt = |m: &str| Error::Corrupt(format!("PGM: {m}"));
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(corrupt("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| corrupt("bad header field"))?;
    }
    let [w, h, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(corrupt("only 8-bit PGM is supported"));
    }
    // exactly one whitespace byte separates header and raster
    pos += 1;
    let end = pos + w * h;
    if bytes.len() < end {
        return Err(corrupt("truncated raster"));
    }
    let data = if maxval == 255 {
        bytes[pos..end].to_vec()
    } else {
        bytes[pos..end].iter().map(|&v| ((v as usize * 255 + maxval / 2) / maxval) as u8).collect()
    };
    GrayImage::new(w, h, data)
}
