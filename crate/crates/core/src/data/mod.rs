//! Dataset ingestion, preprocessing, and synthetic corpora.

mod digits;
mod idx;
mod preprocess;
mod synthetic;

pub use digits::{synthetic_digits, DIGIT_CLASSES, DIGIT_SIDE};
pub use idx::{load_idx, save_idx};
pub use preprocess::{bilinear_resize, equalize_histogram, preprocess_sign_image, ColorImage};
pub use synthetic::synthetic_blobs;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::FeatureVector;

/// Which part of an experiment a dataset feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// One input with its ground-truth class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub x: FeatureVector,
    pub y: usize,
}

/// A homogeneous set of labeled samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<LabeledSample>,
    pub class_count: usize,
    pub input_shape: (usize, usize, usize),
    pub split: Option<Split>,
}

impl Dataset {
    /// Validates labels against `class_count` and sample lengths against
    /// `input_shape`.
    pub fn new(
        samples: Vec<LabeledSample>,
        class_count: usize,
        input_shape: (usize, usize, usize),
    ) -> Result<Self> {
        let dim = input_shape.0 * input_shape.1 * input_shape.2;
        for (i, s) in samples.iter().enumerate() {
            if s.y >= class_count {
                return Err(Error::Consistency(format!(
                    "sample {i} has label {} but class_count is {class_count}",
                    s.y
                )));
            }
            if s.x.len() != dim {
                return Err(Error::Consistency(format!(
                    "sample {i} has {} features, shape implies {dim}",
                    s.x.len()
                )));
            }
        }
        Ok(Dataset {
            samples,
            class_count,
            input_shape,
            split: None,
        })
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = Some(split);
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.0 * self.input_shape.1 * self.input_shape.2
    }

    /// A new dataset over `self.samples[range]`, keeping metadata.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Dataset> {
        if range.end > self.samples.len() {
            return Err(Error::argument(format!(
                "slice {range:?} out of bounds for {} samples",
                self.samples.len()
            )));
        }
        Ok(Dataset {
            samples: self.samples[range].to_vec(),
            class_count: self.class_count,
            input_shape: self.input_shape,
            split: self.split,
        })
    }

    /// Serializes into the `NDD1` binary container (little-endian floats).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(b"NDD1")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.input_shape.0 as u32).to_le_bytes())?;
        w.write_all(&(self.input_shape.1 as u32).to_le_bytes())?;
        w.write_all(&(self.input_shape.2 as u32).to_le_bytes())?;
        w.write_all(&(self.class_count as u32).to_le_bytes())?;
        w.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        for s in &self.samples {
            w.write_all(&(s.y as u32).to_le_bytes())?;
        }
        for s in &self.samples {
            for v in s.x.values() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a container written by [`Dataset::save`].
    pub fn load(path: &Path) -> Result<Dataset> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::format("dataset container truncated before magic"))?;
        if &magic != b"NDD1" {
            return Err(Error::format("bad dataset container magic"));
        }
        let version = read_u32(&mut r)?;
        if version != 1 {
            return Err(Error::format(format!("unsupported container version {version}")));
        }
        let h = read_u32(&mut r)? as usize;
        let w = read_u32(&mut r)? as usize;
        let c = read_u32(&mut r)? as usize;
        let class_count = read_u32(&mut r)? as usize;
        let mut n_bytes = [0u8; 8];
        r.read_exact(&mut n_bytes)
            .map_err(|_| Error::format("dataset container truncated in header"))?;
        let n = u64::from_le_bytes(n_bytes) as usize;
        let dim = h * w * c;

        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            labels.push(read_u32(&mut r)? as usize);
        }
        let mut samples = Vec::with_capacity(n);
        let mut buf = vec![0u8; dim * 8];
        for &y in &labels {
            r.read_exact(&mut buf)
                .map_err(|_| Error::format("dataset container truncated in payload"))?;
            let values: Vec<f64> = buf
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            samples.push(LabeledSample {
                x: FeatureVector::new(values)
                    .map_err(|_| Error::Consistency("stored feature outside [0, 1]".into()))?,
                y,
            });
        }
        Dataset::new(samples, class_count, (h, w, c))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::format("dataset container truncated"))?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_validates_labels_and_shapes() {
        let good = LabeledSample {
            x: FeatureVector::new(vec![0.5; 4]).unwrap(),
            y: 1,
        };
        assert!(Dataset::new(vec![good.clone()], 2, (2, 2, 1)).is_ok());
        assert!(Dataset::new(vec![good.clone()], 1, (2, 2, 1)).is_err());
        assert!(Dataset::new(vec![good], 2, (3, 1, 1)).is_err());
    }

    #[test]
    fn container_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.ndd");
        let samples = (0..5)
            .map(|i| LabeledSample {
                x: FeatureVector::new(vec![i as f64 / 10.0; 6]).unwrap(),
                y: i % 3,
            })
            .collect();
        let ds = Dataset::new(samples, 3, (2, 3, 1)).unwrap();
        ds.save(&path).unwrap();
        let loaded = Dataset::load(&path).unwrap();
        assert_eq!(loaded, ds);
    }
}
