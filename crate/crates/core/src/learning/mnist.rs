//! IDX file parsing (the MNIST distribution format).

use std::fs::File;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Images and labels as stored: one byte per pixel, one byte per label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDataset {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl RawDataset {
    pub fn features(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, k: usize) -> &[u8] {
        let d = self.features();
        &self.pixels[k * d..(k + 1) * d]
    }
}

/// Reads a whole file, gunzipping it when the name ends in `.gz`.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let mut file = File::open(path).map_err(|e| Error::arg(format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(file)
            .read_to_end(&mut out)
            .map_err(|e| Error::format("gzip stream", format!("{}: {e}", path.display())))?;
    } else {
        file.read_to_end(&mut out)?;
    }
    Ok(out)
}

fn header(buf: &[u8], words: usize, what: &'static str) -> Result<Vec<u32>> {
    if buf.len() < 4 * words {
        return Err(Error::format(
            what,
            format!("truncated header: expected {} bytes, found {}", 4 * words, buf.len()),
        ));
    }
    Ok((0..words)
        .map(|k| u32::from_be_bytes(buf[4 * k..4 * k + 4].try_into().unwrap()))
        .collect())
}

fn check_payload(buf: &[u8], offset: usize, expected: usize, what: &'static str) -> Result<()> {
    let actual = buf.len() - offset;
    if actual != expected {
        let kind = if actual < expected { "truncated" } else { "oversized" };
        return Err(Error::format(
            what,
            format!("{kind} payload: expected {expected} bytes, found {actual}"),
        ));
    }
    Ok(())
}

/// Returns `(count, rows, cols, pixels)`.
pub fn parse_idx_images(buf: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let h = header(buf, 4, "images")?;
    if h[0] != IMAGES_MAGIC {
        return Err(Error::format(
            "images magic",
            format!("expected 0x{IMAGES_MAGIC:08x}, found 0x{:08x}", h[0]),
        ));
    }
    let (count, rows, cols) = (h[1] as usize, h[2] as usize, h[3] as usize);
    let expected = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::format("images", "dimensions overflow"))?;
    check_payload(buf, 16, expected, "images")?;
    Ok((count, rows, cols, buf[16..].to_vec()))
}

pub fn parse_idx_labels(buf: &[u8]) -> Result<Vec<u8>> {
    let h = header(buf, 2, "labels")?;
    if h[0] != LABELS_MAGIC {
        return Err(Error::format(
            "labels magic",
            format!("expected 0x{LABELS_MAGIC:08x}, found 0x{:08x}", h[0]),
        ));
    }
    check_payload(buf, 8, h[1] as usize, "labels")?;
    Ok(buf[8..].to_vec())
}

pub fn load_mnist_idx(images: &Path, labels: &Path) -> Result<RawDataset> {
    let (count, rows, cols, pixels) = parse_idx_images(&read_maybe_gz(images)?)?;
    let labels = parse_idx_labels(&read_maybe_gz(labels)?)?;
    if labels.len() != count {
        return Err(Error::format(
            "label count",
            format!("{count} images but {} labels", labels.len()),
        ));
    }
    Ok(RawDataset {
        count,
        rows,
        cols,
        pixels,
        labels,
    })
}

#[cfg(test)]
pub(crate) fn idx_images(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let mut b = Vec::new();
    for v in [IMAGES_MAGIC, count, rows, cols] {
        b.extend_from_slice(&v.to_be_bytes());
    }
    b.extend_from_slice(pixels);
    b
}

#[cfg(test)]
pub(crate) fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut b = Vec::new();
    for v in [LABELS_MAGIC, labels.len() as u32] {
        b.extend_from_slice(&v.to_be_bytes());
    }
    b.extend_from_slice(labels);
    b
}
