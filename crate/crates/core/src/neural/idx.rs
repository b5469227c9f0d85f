//! MNIST IDX files: big-endian magic, big-endian dimensions, raw `u8` payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    /// `count × rows × cols` pixels, row-major.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols).max(1)
    }

    /// Image `i` with pixels scaled to `[0, 1]`.
    pub fn image(&self, i: usize) -> Vec<f64> {
        let size = self.rows * self.cols;
        self.pixels[i * size..(i + 1) * size]
            .iter()
            .map(|&p| f64::from(p) / 255.0)
            .collect()
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Parse("truncated IDX header".into()))
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Parse(format!("bad image magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let payload = &bytes[16..];
    if payload.len() != count * rows * cols {
        return Err(Error::Parse(format!(
            "expected {} pixels, found {}",
            count * rows * cols,
            payload.len()
        )));
    }
    Ok(IdxImages {
        rows,
        cols,
        pixels: payload.to_vec(),
    })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Parse(format!("bad label magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(Error::Parse(format!(
            "expected {count} labels, found {}",
            payload.len()
        )));
    }
    Ok(payload.to_vec())
}

pub fn write_images<W: Write>(images: &IdxImages, mut w: W) -> Result<()> {
    w.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    for v in [images.count(), images.rows, images.cols] {
        w.write_all(&(v as u32).to_be_bytes())?;
    }
    w.write_all(&images.pixels)?;
    Ok(())
}

pub fn write_labels<W: Write>(labels: &[u8], mut w: W) -> Result<()> {
    w.write_all(&LABELS_MAGIC.to_be_bytes())?;
    w.write_all(&(labels.len() as u32).to_be_bytes())?;
    w.write_all(labels)?;
    Ok(())
}

/// Reads an image/label pair into a 10-class dataset, keeping the first `limit` examples.
pub fn load_pair(images: &Path, labels: &Path, limit: Option<usize>) -> Result<Dataset> {
    let images = parse_images(&fs::read(images)?)?;
    let labels = parse_labels(&fs::read(labels)?)?;
    if images.count() != labels.len() {
        return Err(Error::Parse(format!(
            "{} images but {} labels",
            images.count(),
            labels.len()
        )));
    }
    let n = limit.map_or(labels.len(), |l| l.min(labels.len()));
    let points = (0..n).map(|i| images.image(i)).collect();
    Dataset::multiclass(
        points,
        labels[..n].iter().map(|&l| usize::from(l)).collect(),
        10,
    )
}

/// Loads `train-*` and `t10k-*` IDX files from `dir`.
pub fn load_mnist(
    dir: &Path,
    train_limit: Option<usize>,
    test_limit: Option<usize>,
) -> Result<(Dataset, Dataset)> {
    let train = load_pair(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
        train_limit,
    )?;
    let test = load_pair(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
        test_limit,
    )?;
    Ok((train, test))
}
