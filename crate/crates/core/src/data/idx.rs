//! IDX files: a big-endian magic `0x0000TTNN` (`TT` element type, `NN`
//! number of dimensions), `NN` big-endian `u32` sizes, then the elements in
//! row-major order. Only unsigned-byte elements (`TT = 0x08`) are read.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use faer::Mat;

use super::{Dataset, Split};
use crate::error::{ElmError, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

const UBYTE: u8 = 0x08;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxHeader {
    pub magic: u32,
    pub dims: Vec<usize>,
}

impl IdxHeader {
    fn byte_len(&self) -> usize {
        4 + 4 * self.dims.len()
    }

    fn element_count(&self) -> Option<usize> {
        self.dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
    }
}

fn at(offset: usize) -> String {
    format!("byte offset {offset}")
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<IdxHeader> {
    if bytes.len() < 4 {
        return Err(ElmError::format(path, at(bytes.len()), "file ends inside the magic number"));
    }
    let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(ElmError::format(path, at(0), format!("bad magic number {magic:#010x}")));
    }
    if bytes[2] != UBYTE {
        return Err(ElmError::format(path, at(2), format!("unsupported element type {:#04x}", bytes[2])));
    }
    let ndims = usize::from(bytes[3]);
    let end = 4 + 4 * ndims;
    if bytes.len() < end {
        return Err(ElmError::format(path, at(bytes.len()), format!("file ends inside the {ndims} dimension sizes")));
    }
    let dims = bytes[4..end]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    Ok(IdxHeader { magic, dims })
}

/// Reads only the magic number and dimension sizes.
pub fn read_idx_header(path: impl AsRef<Path>) -> Result<IdxHeader> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| ElmError::io(path, e))?;
    let mut head = [0u8; 4];
    let got = read_up_to(&mut file, &mut head).map_err(|e| ElmError::io(path, e))?;
    let ndims = if got == 4 { usize::from(head[3]) } else { 0 };
    let mut bytes = head[..got].to_vec();
    let mut sizes = vec![0u8; 4 * ndims];
    let got = read_up_to(&mut file, &mut sizes).map_err(|e| ElmError::io(path, e))?;
    bytes.extend_from_slice(&sizes[..got]);
    parse_header(path, &bytes)
}

fn read_up_to(file: &mut File, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match file.read(&mut buf[filled..])? {
            0 => break,
            k => filled += k,
        }
    }
    Ok(filled)
}

/// Header and payload of a whole file, checked against `magic`.
fn read_payload(path: &Path, magic: u32) -> Result<(IdxHeader, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| ElmError::io(path, e))?;
    let header = parse_header(path, &bytes)?;
    if header.magic != magic {
        return Err(ElmError::format(
            path,
            at(0),
            format!("magic number {:#010x}, expected {magic:#010x}", header.magic),
        ));
    }
    let start = header.byte_len();
    let count = header
        .element_count()
        .ok_or_else(|| ElmError::format(path, at(4), "dimension sizes overflow"))?;
    let payload = &bytes[start..];
    if payload.len() < count {
        return Err(ElmError::format(
            path,
            at(bytes.len()),
            format!("truncated: {count} data bytes expected from offset {start}, file ends after {}", payload.len()),
        ));
    }
    if payload.len() > count {
        return Err(ElmError::format(path, at(start + count), "unexpected bytes after the data"));
    }
    Ok((header, payload.to_vec()))
}

/// Loads an image file (`n × rows × cols`) and its label file (`n`).
///
/// Each image becomes one feature column of length `rows·cols`, pixels in
/// row-major order divided by 255. The class count is the largest label
/// plus one.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (images_path, labels_path) = (images_path.as_ref(), labels_path.as_ref());
    let (ih, pixels) = read_payload(images_path, IMAGE_MAGIC)?;
    let (lh, labels) = read_payload(labels_path, LABEL_MAGIC)?;
    let (n, d) = (ih.dims[0], ih.dims[1] * ih.dims[2]);
    if lh.dims[0] != n {
        return Err(ElmError::format(
            labels_path,
            at(4),
            format!("{} labels for {n} images in {}", lh.dims[0], images_path.display()),
        ));
    }
    if n == 0 || d == 0 {
        return Err(ElmError::format(images_path, at(4), "no images"));
    }
    let features = Mat::from_fn(d, n, |i, j| f64::from(pixels[j * d + i]) / 255.0);
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let class_count = labels.iter().max().map_or(0, |&m| m + 1);
    let name = images_path
        .file_name()
        .map_or_else(|| "idx".to_owned(), |s| s.to_string_lossy().into_owned());
    Dataset::new(features, labels, class_count, name, Split::Train)
}
