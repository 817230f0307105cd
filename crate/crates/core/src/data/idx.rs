//! IDX container parsing (the digit dataset's standard distribution format).
//!
//! Big-endian layout: a 4-byte magic whose low byte is the dimension count,
//! one u32 size per dimension, then raw unsigned bytes. Pixels are scaled to
//! [0, 1] by division by 255 on load and rescaled by `round(v * 255)` on
//! save, so a load/save round trip reproduces the input bytes exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::{Dataset, LabeledSample};
use crate::error::{Error, Result};
use crate::nn::FeatureVector;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Loads paired image/label IDX files into a dataset.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let (images, rows, cols) = read_images(images_path)?;
    let labels = read_labels(labels_path)?;
    if images.len() != labels.len() {
        return Err(Error::Consistency(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    let class_count = labels.iter().copied().max().map_or(2, |m| (m as usize + 1).max(2));
    let samples = images
        .into_iter()
        .zip(labels)
        .map(|(pixels, y)| LabeledSample {
            x: FeatureVector::new(pixels.iter().map(|&b| b as f64 / 255.0).collect())
                .expect("bytes scale into [0, 1]"),
            y: y as usize,
        })
        .collect();
    Dataset::new(samples, class_count, (rows, cols, 1))
}

/// Writes a dataset back out as paired IDX files.
pub fn save_idx(dataset: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let (rows, cols, channels) = dataset.input_shape;
    if channels != 1 {
        return Err(Error::argument("IDX export requires single-channel data"));
    }
    let mut w = BufWriter::new(File::create(images_path)?);
    w.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    w.write_all(&(dataset.len() as u32).to_be_bytes())?;
    w.write_all(&(rows as u32).to_be_bytes())?;
    w.write_all(&(cols as u32).to_be_bytes())?;
    for s in &dataset.samples {
        let bytes: Vec<u8> = s.x.values().iter().map(|&v| (v * 255.0).round() as u8).collect();
        w.write_all(&bytes)?;
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(labels_path)?);
    w.write_all(&LABELS_MAGIC.to_be_bytes())?;
    w.write_all(&(dataset.len() as u32).to_be_bytes())?;
    for s in &dataset.samples {
        w.write_all(&[s.y as u8])?;
    }
    w.flush()?;
    Ok(())
}

fn read_images(path: &Path) -> Result<(Vec<Vec<u8>>, usize, usize)> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_u32_be(&mut r, path)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(format!(
            "{}: bad image magic {magic:#010x}",
            path.display()
        )));
    }
    let count = read_u32_be(&mut r, path)? as usize;
    let rows = read_u32_be(&mut r, path)? as usize;
    let cols = read_u32_be(&mut r, path)? as usize;
    let mut images = Vec::with_capacity(count);
    let mut buf = vec![0u8; rows * cols];
    for _ in 0..count {
        r.read_exact(&mut buf)
            .map_err(|_| Error::format(format!("{}: truncated image data", path.display())))?;
        images.push(buf.clone());
    }
    expect_eof(&mut r, path)?;
    Ok((images, rows, cols))
}

fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_u32_be(&mut r, path)?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(format!(
            "{}: bad label magic {magic:#010x}",
            path.display()
        )));
    }
    let count = read_u32_be(&mut r, path)? as usize;
    let mut labels = vec![0u8; count];
    r.read_exact(&mut labels)
        .map_err(|_| Error::format(format!("{}: truncated label data", path.display())))?;
    expect_eof(&mut r, path)?;
    Ok(labels)
}

fn read_u32_be<R: Read>(r: &mut R, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::format(format!("{}: truncated header", path.display())))?;
    Ok(u32::from_be_bytes(buf))
}

fn expect_eof<R: Read>(r: &mut R, path: &Path) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(Error::format(format!(
            "{}: trailing bytes after payload",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_fixture(dir: &Path, images: &[u8], labels: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
        let ip = dir.join("images.idx");
        let lp = dir.join("labels.idx");
        std::fs::write(&ip, images).unwrap();
        std::fs::write(&lp, labels).unwrap();
        (ip, lp)
    }

    fn two_image_fixture() -> (Vec<u8>, Vec<u8>) {
        // Two 2x2 images: {0, 255, 128, 64} and {255, 0, 0, 255}.
        let mut images = Vec::new();
        images.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&[0, 255, 128, 64, 255, 0, 0, 255]);
        let mut labels = Vec::new();
        labels.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        labels.extend_from_slice(&2u32.to_be_bytes());
        labels.extend_from_slice(&[1, 0]);
        (images, labels)
    }

    #[test]
    fn scales_bytes_into_unit_interval() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = two_image_fixture();
        let (ip, lp) = write_fixture(dir.path(), &images, &labels);
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.input_shape, (2, 2, 1));
        assert_eq!(ds.samples[0].x.values()[0], 0.0);
        assert_eq!(ds.samples[0].x.values()[1], 1.0);
        assert!((ds.samples[0].x.values()[2] - 128.0 / 255.0).abs() < 1e-15);
        assert_eq!(ds.samples[0].y, 1);
    }

    #[test]
    fn round_trip_reproduces_bytes_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = two_image_fixture();
        let (ip, lp) = write_fixture(dir.path(), &images, &labels);
        let ds = load_idx(&ip, &lp).unwrap();

        let ip2 = dir.path().join("images2.idx");
        let lp2 = dir.path().join("labels2.idx");
        save_idx(&ds, &ip2, &lp2).unwrap();
        assert_eq!(std::fs::read(&ip2).unwrap(), images);
        assert_eq!(std::fs::read(&lp2).unwrap(), labels);
    }

    #[test]
    fn rejects_bad_magic_truncation_and_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (mut images, labels) = two_image_fixture();

        images[3] = 0x99;
        let (ip, lp) = write_fixture(dir.path(), &images, &labels);
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Format(_))));

        let (images, labels) = two_image_fixture();
        let (ip, lp) = write_fixture(dir.path(), &images[..images.len() - 2], &labels);
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Format(_))));

        let (images, mut labels) = two_image_fixture();
        labels[7] = 3; // claims 3 labels
        labels.push(2);
        let (ip, lp) = write_fixture(dir.path(), &images, &labels);
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Consistency(_))));
    }
}
