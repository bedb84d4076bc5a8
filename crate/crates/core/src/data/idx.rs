//! IDX (MNIST-family) files: big-endian magic, big-endian dimension sizes,
//! unsigned-byte payload.

use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IdxOptions {
    /// Average-pool images down to `side × side`.
    pub downsample: Option<usize>,
    /// Keep only the first `cap` examples.
    pub cap: Option<usize>,
}

fn read_u32(bytes: &[u8], offset: usize) -> Option<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

/// Returns (count, rows, cols, pixels).
pub fn parse_idx_images(bytes: &[u8]) -> std::result::Result<(usize, usize, usize, &[u8]), String> {
    let magic = read_u32(bytes, 0).ok_or("file shorter than its header")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(format!(
            "bad magic: expected {IDX_IMAGES_MAGIC:#010x}, found {magic:#010x}"
        ));
    }
    let header = |i: usize| read_u32(bytes, 4 + 4 * i).map(|v| v as usize).ok_or("truncated header");
    let (n, rows, cols) = (header(0)?, header(1)?, header(2)?);
    let need = n * rows * cols;
    let payload = &bytes[16..];
    if payload.len() < need {
        return Err(format!(
            "truncated payload: {} bytes for {n} images of {rows}x{cols}",
            payload.len()
        ));
    }
    Ok((n, rows, cols, &payload[..need]))
}

pub fn parse_idx_labels(bytes: &[u8]) -> std::result::Result<&[u8], String> {
    let magic = read_u32(bytes, 0).ok_or("file shorter than its header")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(format!(
            "bad magic: expected {IDX_LABELS_MAGIC:#010x}, found {magic:#010x}"
        ));
    }
    let n = read_u32(bytes, 4).ok_or("truncated header")? as usize;
    let payload = &bytes[8..];
    if payload.len() < n {
        return Err(format!(
            "truncated payload: {} bytes for {n} labels",
            payload.len()
        ));
    }
    Ok(&payload[..n])
}

/// Average pooling over bins with edges ⌊k·in/out⌋.
fn pool_image(src: &[f64], rows: usize, cols: usize, side: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(side * side);
    for oy in 0..side {
        let (y0, y1) = (oy * rows / side, ((oy + 1) * rows / side).max(oy * rows / side + 1));
        for ox in 0..side {
            let (x0, x1) = (ox * cols / side, ((ox + 1) * cols / side).max(ox * cols / side + 1));
            let mut acc = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    acc += src[y * cols + x];
                }
            }
            out.push(acc / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }
    out
}

pub fn load_idx(images_path: &Path, labels_path: &Path, opts: &IdxOptions) -> Result<Dataset> {
    let img_bytes = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let lbl_bytes = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let (n, rows, cols, pixels) = parse_idx_images(&img_bytes).map_err(|reason| Error::Idx {
        path: images_path.to_path_buf(),
        reason,
    })?;
    let raw_labels = parse_idx_labels(&lbl_bytes).map_err(|reason| Error::Idx {
        path: labels_path.to_path_buf(),
        reason,
    })?;
    if raw_labels.len() != n {
        return Err(Error::Idx {
            path: labels_path.to_path_buf(),
            reason: format!("{} labels for {n} images", raw_labels.len()),
        });
    }
    let keep = opts.cap.map_or(n, |c| c.min(n));
    let (out_rows, out_cols) = match opts.downsample {
        Some(side) if side == 0 || side > rows.min(cols) => {
            return Err(Error::InvalidInput(format!(
                "cannot downsample {rows}x{cols} images to {side}x{side}"
            )))
        }
        Some(side) => (side, side),
        None => (rows, cols),
    };
    let mut features = Vec::with_capacity(keep * out_rows * out_cols);
    for img in pixels.chunks_exact(rows * cols).take(keep) {
        let scaled: Vec<f64> = img.iter().map(|&p| f64::from(p) / 255.0).collect();
        match opts.downsample {
            Some(side) => features.extend(pool_image(&scaled, rows, cols, side)),
            None => features.extend(scaled),
        }
    }
    let labels: Vec<usize> = raw_labels[..keep].iter().map(|&l| l as usize).collect();
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1).max(2);
    let name = images_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    Dataset::new(name, features, vec![1, out_rows, out_cols], labels, num_classes)
}
