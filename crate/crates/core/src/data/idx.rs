//! IDX binary format: big-endian magic, dimensions, then raw `u8` payload.
//! Files ending in `.gz` are transparently (de)compressed.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{Dataset, Targets};
use crate::error::{KsdError, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;
const MNIST_CLASSES: usize = 10;

/// Decoded image file; pixel values scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f64>,
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut file = File::open(path)
        .map_err(|e| KsdError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let mut buf = Vec::new();
    if is_gz(path) {
        GzDecoder::new(file)
            .read_to_end(&mut buf)
            .map_err(|e| KsdError::Format(format!("{}: bad gzip stream: {e}", path.display())))?;
    } else {
        file.read_to_end(&mut buf)?;
    }
    Ok(buf)
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    if is_gz(path) {
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(bytes)?;
        enc.finish()?.flush()?;
    } else {
        let mut file = file;
        file.write_all(bytes)?;
        file.flush()?;
    }
    Ok(())
}

fn be_u32(buf: &[u8], at: usize, path: &Path) -> Result<u32> {
    buf.get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| KsdError::Format(format!("{}: truncated header", path.display())))
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    let path = path.as_ref();
    let buf = read_all(path)?;
    let magic = be_u32(&buf, 0, path)?;
    if magic != IMAGES_MAGIC {
        return Err(KsdError::Format(format!("{}: bad image magic {magic:#010x}", path.display())));
    }
    let count = be_u32(&buf, 4, path)? as usize;
    let rows = be_u32(&buf, 8, path)? as usize;
    let cols = be_u32(&buf, 12, path)? as usize;
    let expected = count * rows * cols;
    let payload = &buf[16..];
    if payload.len() != expected {
        return Err(KsdError::Format(format!(
            "{}: header promises {expected} pixel bytes, file has {}",
            path.display(),
            payload.len()
        )));
    }
    let pixels = payload.iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(IdxImages { count, rows, cols, pixels })
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let buf = read_all(path)?;
    let magic = be_u32(&buf, 0, path)?;
    if magic != LABELS_MAGIC {
        return Err(KsdError::Format(format!("{}: bad label magic {magic:#010x}", path.display())));
    }
    let count = be_u32(&buf, 4, path)? as usize;
    let payload = &buf[8..];
    if payload.len() != count {
        return Err(KsdError::Format(format!(
            "{}: header promises {count} labels, file has {}",
            path.display(),
            payload.len()
        )));
    }
    Ok(payload.to_vec())
}

/// Loads an image/label file pair as a 10-class dataset.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images = load_idx_images(images_path)?;
    let labels = load_idx_labels(labels_path)?;
    if labels.len() != images.count {
        return Err(KsdError::Format(format!("{} images but {} labels", images.count, labels.len())));
    }
    if let Some(bad) = labels.iter().find(|&&l| usize::from(l) >= MNIST_CLASSES) {
        return Err(KsdError::Format(format!("label {bad} outside 0..=9")));
    }
    Dataset::new(
        images.pixels,
        images.rows * images.cols,
        Targets::Classes { labels: labels.into_iter().map(usize::from).collect(), num_classes: MNIST_CLASSES },
    )
}

/// Writes `[0, 1]` pixels as bytes (`round(255·v)`).
pub fn write_idx_images(path: impl AsRef<Path>, rows: usize, cols: usize, pixels: &[f64]) -> Result<()> {
    let per = rows * cols;
    if per == 0 || pixels.len() % per != 0 {
        return Err(KsdError::InvalidInput(format!("{} pixels do not fill {rows}x{cols} images", pixels.len())));
    }
    let count = pixels.len() / per;
    let mut bytes = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    bytes.extend(pixels.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    write_all(path.as_ref(), &bytes)
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    bytes.extend_from_slice(labels);
    write_all(path.as_ref(), &bytes)
}
