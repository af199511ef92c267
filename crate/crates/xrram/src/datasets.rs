//! MNIST IDX and CIFAR-10 binary readers. Pixels are scaled to `[0, 1]`.

use std::path::Path;

use xrram_core::emulator::Dataset;

use crate::error::{CliError, Result};
use crate::formats::read_bytes;

const IDX_U8_IMAGES: u32 = 0x0000_0803;
const IDX_U8_LABELS: u32 = 0x0000_0801;

pub const CIFAR_SIDE: usize = 32;
const CIFAR_RECORD: usize = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE;

fn be_u32(b: &[u8], at: usize) -> Option<u32> {
    b.get(at..at + 4).map(|s| u32::from_be_bytes(s.try_into().unwrap()))
}

/// Parses an IDX file of unsigned bytes; returns its dimensions and data.
pub fn parse_idx(bytes: &[u8]) -> std::result::Result<(Vec<usize>, &[u8]), String> {
    let magic = be_u32(bytes, 0).ok_or("truncated IDX header")?;
    if magic >> 8 != 0x08 {
        return Err(format!("IDX magic {magic:#010x} is not an unsigned-byte array"));
    }
    let ndim = (magic & 0xff) as usize;
    let dims = (0..ndim)
        .map(|i| be_u32(bytes, 4 + 4 * i).map(|d| d as usize).ok_or("truncated IDX dimensions"))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let start = 4 + 4 * ndim;
    let len: usize = dims.iter().product();
    let data = bytes.get(start..start + len).ok_or("IDX data shorter than its dimensions")?;
    if bytes.len() != start + len {
        return Err("trailing bytes after IDX data".into());
    }
    Ok((dims, data))
}

pub fn mnist_from_bytes(images: &[u8], labels: &[u8]) -> std::result::Result<Dataset, String> {
    if be_u32(images, 0) != Some(IDX_U8_IMAGES) {
        return Err("image file is not a 3-D IDX u8 array".into());
    }
    if be_u32(labels, 0) != Some(IDX_U8_LABELS) {
        return Err("label file is not a 1-D IDX u8 array".into());
    }
    let (idims, pixels) = parse_idx(images)?;
    let (ldims, labels) = parse_idx(labels)?;
    if idims[0] != ldims[0] {
        return Err(format!("{} images but {} labels", idims[0], ldims[0]));
    }
    let px = pixels.iter().map(|&p| f32::from(p) / 255.0).collect();
    Dataset::new((1, idims[1], idims[2]), px, labels.to_vec()).map_err(|e| e.to_string())
}

pub fn read_mnist(images: &Path, labels: &Path) -> Result<Dataset> {
    mnist_from_bytes(&read_bytes(images)?, &read_bytes(labels)?).map_err(|e| CliError::format(images, e))
}

/// One or more concatenated CIFAR-10 binary batches: per record a label
/// byte followed by the red, green and blue 32×32 planes.
pub fn cifar_from_bytes(bytes: &[u8]) -> std::result::Result<Dataset, String> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(format!("CIFAR batch size must be a multiple of {CIFAR_RECORD} bytes"));
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut labels = Vec::with_capacity(n);
    let mut px = Vec::with_capacity(n * (CIFAR_RECORD - 1));
    for rec in bytes.chunks_exact(CIFAR_RECORD) {
        if rec[0] > 9 {
            return Err(format!("label {} out of range", rec[0]));
        }
        labels.push(rec[0]);
        px.extend(rec[1..].iter().map(|&p| f32::from(p) / 255.0));
    }
    Dataset::new((3, CIFAR_SIDE, CIFAR_SIDE), px, labels).map_err(|e| e.to_string())
}

pub fn read_cifar(paths: &[impl AsRef<Path>]) -> Result<Dataset> {
    let mut bytes = Vec::new();
    for p in paths {
        bytes.extend(read_bytes(p.as_ref())?);
    }
    let first = paths.first().map(|p| p.as_ref()).unwrap_or(Path::new(""));
    cifar_from_bytes(&bytes).map_err(|e| CliError::format(first, e))
}

/// IDX encoders, used to build fixtures.
pub fn idx_images(images: &[u8], n: usize, h: usize, w: usize) -> Vec<u8> {
    let mut out = IDX_U8_IMAGES.to_be_bytes().to_vec();
    for d in [n, h, w] {
        out.extend((d as u32).to_be_bytes());
    }
    out.extend_from_slice(images);
    out
}

pub fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = IDX_U8_LABELS.to_be_bytes().to_vec();
    out.extend((labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
