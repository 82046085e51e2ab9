//! MNIST IDX files (big-endian, magics 2051 for images and 2049 for labels).

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Image;
use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::parse(at, "truncated IDX header"))
}

/// Decodes an image file into `(width, height, images)`; pixels scaled to `[0, 1]`.
pub fn read_idx_images(bytes: &[u8]) -> Result<Vec<Image>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::parse(0, format!("bad image magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let size = rows * cols;
    let need = 16 + n * size;
    if bytes.len() < need {
        return Err(Error::parse(bytes.len(), format!("truncated image payload, expected {need} bytes")));
    }
    bytes[16..need]
        .chunks_exact(size)
        .map(|chunk| Image::from_vec(cols, rows, chunk.iter().map(|&b| b as f64 / 255.0).collect()))
        .collect()
}

pub fn read_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::parse(0, format!("bad label magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    if bytes.len() < 8 + n {
        return Err(Error::parse(bytes.len(), format!("truncated label payload, expected {} bytes", 8 + n)));
    }
    Ok(bytes[8..8 + n].to_vec())
}

/// Encodes images (all of equal size) with 8-bit quantization.
pub fn write_idx_images(images: &[Image]) -> Result<Vec<u8>> {
    let (w, h) = images.first().map(|i| (i.width(), i.height())).unwrap_or((0, 0));
    let mut out = Vec::with_capacity(16 + images.len() * w * h);
    for v in [IMAGE_MAGIC, images.len() as u32, h as u32, w as u32] {
        out.extend(v.to_be_bytes());
    }
    for img in images {
        if img.width() != w || img.height() != h {
            return Err(Error::invalid("IDX images must share one size"));
        }
        out.extend(img.pixels().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor().min(255.0) as u8));
    }
    Ok(out)
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend(LABEL_MAGIC.to_be_bytes());
    out.extend((labels.len() as u32).to_be_bytes());
    out.extend(labels);
    out
}

/// Loads a seeded per-class sample: for each requested digit (ascending), `per_class`
/// images drawn without replacement. Classes with fewer images contribute all they have.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    digit_filter: &BTreeSet<u8>,
    per_class: usize,
    seed: u64,
) -> Result<Vec<(Image, u8)>> {
    let images = read_idx_images(&fs::read(images_path)?)?;
    let labels = read_idx_labels(&fs::read(labels_path)?)?;
    sample_per_class(images, &labels, digit_filter, per_class, seed)
}

pub(crate) fn sample_per_class(
    images: Vec<Image>,
    labels: &[u8],
    digit_filter: &BTreeSet<u8>,
    per_class: usize,
    seed: u64,
) -> Result<Vec<(Image, u8)>> {
    if images.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::new();
    for &digit in digit_filter {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == digit).collect();
        idx.shuffle(&mut rng);
        if idx.len() < per_class {
            log::warn!("digit {digit}: only {} images available, {per_class} requested", idx.len());
        }
        idx.truncate(per_class);
        idx.sort_unstable();
        picked.extend(idx.into_iter().map(|i| (i, digit)));
    }
    let mut slots: Vec<Option<Image>> = images.into_iter().map(Some).collect();
    Ok(picked
        .into_iter()
        .map(|(i, d)| (slots[i].take().expect("index drawn once"), d))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(n: usize) -> (Vec<Image>, Vec<u8>) {
        let images = (0..n)
            .map(|i| Image::from_fn(3, 2, |x, y| ((i + x + 3 * y) % 256) as f64 / 255.0))
            .collect();
        let labels = (0..n).map(|i| (i % 10) as u8).collect();
        (images, labels)
    }

    #[test]
    fn encode_decode_round_trip() {
        let (images, labels) = fixture(25);
        let ib = write_idx_images(&images).unwrap();
        let lb = write_idx_labels(&labels);
        assert_eq!(read_idx_images(&ib).unwrap(), images);
        assert_eq!(read_idx_labels(&lb).unwrap(), labels);
    }

    #[test]
    fn rejects_bad_magic_and_counts() {
        let (images, labels) = fixture(5);
        let ib = write_idx_images(&images).unwrap();
        assert!(read_idx_labels(&ib).is_err());
        assert!(read_idx_images(&write_idx_labels(&labels)).is_err());
        assert!(read_idx_images(&ib[..ib.len() - 1]).is_err());
        let err = sample_per_class(images, &labels[..4], &BTreeSet::from([0]), 1, 0);
        assert!(matches!(err, Err(Error::Data(_))));
    }

    #[test]
    fn per_class_sampling() {
        let (images, labels) = fixture(200);
        let digits: BTreeSet<u8> = (0..6).collect();
        let out = sample_per_class(images.clone(), &labels, &digits, 10, 7).unwrap();
        assert_eq!(out.len(), 60);
        for d in 0..6u8 {
            assert_eq!(out.iter().filter(|(_, l)| *l == d).count(), 10);
        }
        assert!(sample_per_class(images.clone(), &labels, &digits, 0, 7).unwrap().is_empty());
        let again = sample_per_class(images.clone(), &labels, &digits, 10, 7).unwrap();
        assert_eq!(out, again);
        let other = sample_per_class(images, &labels, &digits, 10, 8).unwrap();
        assert_ne!(out, other);
    }

    #[test]
    fn load_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = fixture(30);
        let ip = dir.path().join("img.idx");
        let lp = dir.path().join("lbl.idx");
        fs::write(&ip, write_idx_images(&images).unwrap()).unwrap();
        fs::write(&lp, write_idx_labels(&labels)).unwrap();
        let out = load_idx(&ip, &lp, &BTreeSet::from([3]), 2, 1).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|(_, l)| *l == 3));
    }
}
