//! MNIST in the IDX format.
//!
//! Images: big-endian `0x00000803 | count | rows | cols` then `u8` pixels.
//! Labels: big-endian `0x00000801 | count` then `u8` labels.

use std::path::Path;

use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

/// Images kept as raw bytes; converted to `[0, 1]` reals on demand.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub rows: usize,
    pub cols: usize,
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::format("IDX header truncated"))
}

/// Parse an image file into `(count, rows, cols, pixels)`.
pub fn parse_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format(format!("bad IDX image magic {magic:#010x}")));
    }
    let (n, r, c) = (be_u32(bytes, 4)? as usize, be_u32(bytes, 8)? as usize, be_u32(bytes, 12)? as usize);
    let body = &bytes[16..];
    let want = n.checked_mul(r).and_then(|v| v.checked_mul(c)).ok_or_else(|| Error::format("IDX dimensions overflow"))?;
    if body.len() != want {
        return Err(Error::format(format!("IDX image body has {} bytes, header promises {want}", body.len())));
    }
    Ok((n, r, c, body.to_vec()))
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::format(format!("bad IDX label magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::format(format!("IDX label body has {} bytes, header promises {n}", body.len())));
    }
    if let Some(bad) = body.iter().find(|&&l| l as usize >= NUM_CLASSES) {
        return Err(Error::format(format!("label {bad} outside 0..{NUM_CLASSES}")));
    }
    Ok(body.to_vec())
}

/// Load `{train,t10k}-{images-idx3,labels-idx1}-ubyte` from `dir`.
pub fn load_mnist(dir: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let dir = dir.as_ref();
    let p = split.prefix();
    let (n, rows, cols, pixels) = parse_images(&std::fs::read(dir.join(format!("{p}-images-idx3-ubyte")))?)?;
    let labels = parse_labels(&std::fs::read(dir.join(format!("{p}-labels-idx1-ubyte")))?)?;
    if labels.len() != n {
        return Err(Error::format(format!("{n} images but {} labels", labels.len())));
    }
    Ok(Dataset { rows, cols, pixels, labels })
}

impl Dataset {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if pixels.len() != labels.len() * rows * cols {
            return Err(Error::shape("pixel count does not match labels"));
        }
        Ok(Dataset { rows, cols, pixels, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn image_size(&self) -> usize {
        self.rows * self.cols
    }

    /// Samples `start..start+count` as `(pixels in [0, 1], labels)`; the
    /// range wraps around the end of the dataset.
    pub fn batch(&self, start: usize, count: usize) -> (Vec<f64>, Vec<u8>) {
        let sz = self.image_size();
        let mut x = Vec::with_capacity(count * sz);
        let mut y = Vec::with_capacity(count);
        for k in 0..count {
            let i = (start + k) % self.len();
            x.extend(self.pixels[i * sz..(i + 1) * sz].iter().map(|&v| f64::from(v) / 255.0));
            y.push(self.labels[i]);
        }
        (x, y)
    }

    /// The first `count` samples as a new dataset.
    pub fn take(&self, count: usize) -> Dataset {
        let count = count.min(self.len());
        Dataset {
            rows: self.rows,
            cols: self.cols,
            pixels: self.pixels[..count * self.image_size()].to_vec(),
            labels: self.labels[..count].to_vec(),
        }
    }
}

pub fn onehot(labels: &[u8], classes: usize) -> Vec<f64> {
    let mut out = vec![0.0; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        out[i * classes + l as usize] = 1.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_file(n: u32, r: u32, c: u32) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IMAGE_MAGIC, n, r, c] {
            b.extend(v.to_be_bytes());
        }
        b.resize(16 + (n * r * c) as usize, 7);
        b
    }

    #[test]
    fn full_size_training_header() {
        let (n, r, c, px) = parse_images(&image_file(60_000, 28, 28)).unwrap();
        assert_eq!((n, r, c), (60_000, 28, 28));
        assert_eq!(px.len(), 60_000 * 784);
    }

    #[test]
    fn corrupt_and_truncated_files_are_rejected() {
        let mut f = image_file(2, 28, 28);
        f[3] = 0x01;
        assert!(matches!(parse_images(&f), Err(Error::Format(_))));
        let f = image_file(2, 28, 28);
        assert!(matches!(parse_images(&f[..f.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(parse_images(&f[..10]), Err(Error::Format(_))));
        let mut l = Vec::new();
        l.extend(LABEL_MAGIC.to_be_bytes());
        l.extend(2u32.to_be_bytes());
        l.extend([3, 10]);
        assert!(matches!(parse_labels(&l), Err(Error::Format(_))));
    }

    #[test]
    fn batches_scale_pixels_and_wrap() {
        let d = Dataset::new(1, 2, vec![0, 255, 51, 102], vec![4, 9]).unwrap();
        let (x, y) = d.batch(1, 2);
        assert_eq!(x, vec![0.2, 0.4, 0.0, 1.0]);
        assert_eq!(y, vec![9, 4]);
        assert_eq!(onehot(&[2], 4), vec![0.0, 0.0, 1.0, 0.0]);
    }
}
