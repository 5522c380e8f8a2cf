//! IDX container (MNIST distribution format): big-endian magic
//! `0x000008NN` where `NN` is the dimension count, big-endian `u32` sizes,
//! then an unsigned-byte payload.

use std::fs;
use std::path::Path;

use crate::data::{Dataset, FeatureKind, Split};
use crate::error::{Error, Result};
use crate::numkit::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Decoded IDX tensor of unsigned bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn format_err(path: &Path, offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message: message.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format_err(path, bytes.len(), "truncated header"))
}

/// Parses an IDX byte buffer, requiring the given magic number.
pub fn parse_idx(bytes: &[u8], expected_magic: u32, path: &Path) -> Result<IdxArray> {
    let magic = read_u32(bytes, 0, path)?;
    if magic != expected_magic {
        return Err(format_err(
            path,
            0,
            format!("bad magic number {magic:#010x}, expected {expected_magic:#010x}"),
        ));
    }
    let ndim = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(ndim);
    for d in 0..ndim {
        dims.push(read_u32(bytes, 4 + 4 * d, path)? as usize);
    }
    let header = 4 + 4 * ndim;
    let payload: usize = dims.iter().product();
    let expected_len = header + payload;
    if bytes.len() < expected_len {
        return Err(format_err(
            path,
            bytes.len(),
            format!("truncated payload: expected {expected_len} bytes"),
        ));
    }
    if bytes.len() > expected_len {
        return Err(format_err(
            path,
            expected_len,
            format!("{} trailing bytes after payload", bytes.len() - expected_len),
        ));
    }
    Ok(IdxArray {
        dims,
        data: bytes[header..].to_vec(),
    })
}

pub fn encode_idx(array: &IdxArray) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * array.dims.len() + array.data.len());
    out.extend_from_slice(&(0x0800u32 | array.dims.len() as u32).to_be_bytes());
    for &d in &array.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads an image/label IDX pair. Pixels are scaled to `[0, 1]`; the
/// returned dataset carries an empty interpretable representation until
/// features are extracted.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = parse_idx(&read_file(ip)?, IMAGES_MAGIC, ip)?;
    let labels = parse_idx(&read_file(lp)?, LABELS_MAGIC, lp)?;
    let n = images.dims[0];
    if labels.dims[0] != n {
        return Err(format_err(
            lp,
            4,
            format!("label count {} != image count {n}", labels.dims[0]),
        ));
    }
    let dx = images.dims[1] * images.dims[2];
    let x = Matrix::from_vec(n, dx, images.data.iter().map(|&b| b as f64 / 255.0).collect())?;
    let y: Vec<usize> = labels.data.iter().map(|&b| b as usize).collect();
    let classes = y.iter().max().map_or(1, |m| m + 1).max(10);
    Dataset::new(x, Matrix::zeros(n, 0), y, classes, FeatureKind::Synthetic, Split::Train)
}

/// Writes images (rows of `side × side` pixels in `[0, 1]`) and labels as
/// an IDX pair. Pixel values are quantized to bytes.
pub fn write_idx(
    dataset: &Dataset,
    side: usize,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    if side * side != dataset.x_dim() {
        return Err(Error::Dimension(format!(
            "{} inputs are not {side}x{side} images",
            dataset.x_dim()
        )));
    }
    if dataset.classes() > 256 {
        return Err(Error::Parameter("labels do not fit in a byte".into()));
    }
    let images = IdxArray {
        dims: vec![dataset.len(), side, side],
        data: dataset
            .x()
            .as_slice()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect(),
    };
    let labels = IdxArray {
        dims: vec![dataset.len()],
        data: dataset.y().iter().map(|&l| l as u8).collect(),
    };
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    fs::write(ip, encode_idx(&images)).map_err(|e| Error::io(ip, e))?;
    fs::write(lp, encode_idx(&labels)).map_err(|e| Error::io(lp, e))?;
    Ok(())
}
