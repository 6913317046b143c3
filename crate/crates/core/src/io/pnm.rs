//! Binary netpbm images: P6 pixmaps for RGB and P5 graymaps for labels.
//!
//! Samples wider than 8 bits (maxval > 255) are two bytes, most significant
//! first, as the netpbm format requires.

use std::path::Path;

use crate::error::{Error, Result};
use crate::maps::LabelMap;
use crate::synthdata::RgbImage;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pnm {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl Pnm {
    pub fn encode(&self) -> Vec<u8> {
        let magic = if self.channels == 3 { "P6" } else { "P5" };
        let mut out = format!("{magic}\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        if self.maxval > 255 {
            for s in &self.samples {
                out.extend_from_slice(&s.to_be_bytes());
            }
        } else {
            out.extend(self.samples.iter().map(|&s| s as u8));
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut pos = 0;
        let magic = token(bytes, &mut pos).ok_or("missing magic")?;
        let channels = match magic.as_str() {
            "P5" => 1,
            "P6" => 3,
            other => return Err(format!("unsupported netpbm type {other:?}")),
        };
        let mut number = |what: &str| -> std::result::Result<usize, String> {
            token(bytes, &mut pos).ok_or_else(|| format!("missing {what}"))?.parse().map_err(|_| format!("bad {what}"))
        };
        let width = number("width")?;
        let height = number("height")?;
        let maxval = number("maxval")?;
        if maxval == 0 || maxval > 65535 {
            return Err(format!("maxval {maxval} out of range"));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let count = width * height * channels;
        let raster = bytes.get(pos..).unwrap_or(&[]);
        let samples: Vec<u16> = if maxval > 255 {
            if raster.len() < count * 2 {
                return Err("truncated raster".into());
            }
            raster[..count * 2].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
        } else {
            if raster.len() < count {
                return Err("truncated raster".into());
            }
            raster[..count].iter().map(|&b| b as u16).collect()
        };
        if samples.iter().any(|&s| s as usize > maxval) {
            return Err("sample exceeds maxval".into());
        }
        Ok(Self { width, height, channels, maxval: maxval as u16, samples })
    }
}

fn token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn read_pnm(path: &Path) -> Result<Pnm> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Pnm::decode(&bytes).map_err(|m| Error::format(path, m))
}

/// Quantizes to 8 bits per channel.
pub fn encode_ppm(image: &RgbImage) -> Vec<u8> {
    Pnm {
        width: image.width(),
        height: image.height(),
        channels: 3,
        maxval: 255,
        samples: image.as_slice().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u16).collect(),
    }
    .encode()
}

pub fn write_ppm(path: &Path, image: &RgbImage) -> Result<()> {
    super::write_atomic(path, &encode_ppm(image))
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    let pnm = read_pnm(path)?;
    if pnm.channels != 3 {
        return Err(Error::format(path, "expected a P6 pixmap"));
    }
    let scale = pnm.maxval as f64;
    RgbImage::from_vec(pnm.height, pnm.width, pnm.samples.iter().map(|&s| s as f64 / scale).collect())
}

/// 16-bit graymap of labels; fails above 65535.
pub fn encode_labels(labels: &LabelMap) -> Result<Vec<u8>> {
    let samples = labels
        .as_slice()
        .iter()
        .map(|&l| u16::try_from(l).map_err(|_| Error::InvalidInput(format!("label {l} does not fit in 16 bits"))))
        .collect::<Result<Vec<u16>>>()?;
    Ok(Pnm { width: labels.width(), height: labels.height(), channels: 1, maxval: u16::MAX, samples }.encode())
}

pub fn write_labels(path: &Path, labels: &LabelMap) -> Result<()> {
    super::write_atomic(path, &encode_labels(labels)?)
}

/// Reads any P5 graymap; sample values are taken as labels.
pub fn read_labels(path: &Path) -> Result<LabelMap> {
    let pnm = read_pnm(path)?;
    if pnm.channels != 1 {
        return Err(Error::format(path, "expected a P5 graymap"));
    }
    LabelMap::from_vec(pnm.height, pnm.width, pnm.samples.into_iter().map(u32::from).collect())
}
