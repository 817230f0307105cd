//! Model checkpoint container.
//!
//! Layout: magic bytes `NDF1`, a little-endian u32 byte length followed by
//! the network spec as canonical UTF-8 text, then the parameter vector as
//! little-endian f64 words. The spec text is canonical, so save/load/save
//! reproduces the file byte for byte.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::classifier::Classifier;
use crate::nn::spec::{Layer, NetworkSpec};

const MAGIC: &[u8; 4] = b"NDF1";

/// Canonical one-line text form of a spec.
pub fn spec_to_text(spec: &NetworkSpec) -> String {
    let layers: Vec<String> = spec
        .layers
        .iter()
        .map(|l| match l {
            Layer::Dense { units } => format!("dense:{units}"),
            Layer::Conv2d { filters } => format!("conv2d:{filters}"),
            Layer::MaxPool => "maxpool".to_string(),
            Layer::Relu => "relu".to_string(),
            Layer::Dropout { rate } => format!("dropout:{rate}"),
            Layer::Softmax => "softmax".to_string(),
        })
        .collect();
    format!(
        "v1;input={}x{}x{};classes={};null={};layers={}",
        spec.input_shape.0,
        spec.input_shape.1,
        spec.input_shape.2,
        spec.class_count,
        spec.has_null,
        layers.join(",")
    )
}

/// Parses the canonical text form back into a validated spec.
pub fn spec_from_text(text: &str) -> Result<NetworkSpec> {
    let mut input_shape = None;
    let mut class_count = None;
    let mut has_null = None;
    let mut layers: Option<Vec<Layer>> = None;

    let mut fields = text.split(';');
    if fields.next() != Some("v1") {
        return Err(Error::format("unsupported spec text version"));
    }
    for field in fields {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::format(format!("malformed spec field '{field}'")))?;
        match key {
            "input" => {
                let dims: Vec<usize> = value
                    .split('x')
                    .map(|d| d.parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::format(format!("bad input shape '{value}'")))?;
                if dims.len() != 3 {
                    return Err(Error::format(format!("bad input shape '{value}'")));
                }
                input_shape = Some((dims[0], dims[1], dims[2]));
            }
            "classes" => {
                class_count = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| Error::format(format!("bad class count '{value}'")))?,
                );
            }
            "null" => {
                has_null = Some(match value {
                    "true" => true,
                    "false" => false,
                    other => return Err(Error::format(format!("bad null flag '{other}'"))),
                });
            }
            "layers" => {
                let mut parsed = Vec::new();
                for item in value.split(',') {
                    parsed.push(parse_layer(item)?);
                }
                layers = Some(parsed);
            }
            other => return Err(Error::format(format!("unknown spec field '{other}'"))),
        }
    }
    NetworkSpec::new(
        layers.ok_or_else(|| Error::format("spec text missing layers"))?,
        input_shape.ok_or_else(|| Error::format("spec text missing input shape"))?,
        class_count.ok_or_else(|| Error::format("spec text missing class count"))?,
        has_null.ok_or_else(|| Error::format("spec text missing null flag"))?,
    )
}

fn parse_layer(item: &str) -> Result<Layer> {
    let (name, arg) = match item.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (item, None),
    };
    match (name, arg) {
        ("dense", Some(a)) => Ok(Layer::Dense {
            units: a
                .parse()
                .map_err(|_| Error::format(format!("bad dense units '{a}'")))?,
        }),
        ("conv2d", Some(a)) => Ok(Layer::Conv2d {
            filters: a
                .parse()
                .map_err(|_| Error::format(format!("bad conv filters '{a}'")))?,
        }),
        ("dropout", Some(a)) => Ok(Layer::Dropout {
            rate: a
                .parse()
                .map_err(|_| Error::format(format!("bad dropout rate '{a}'")))?,
        }),
        ("maxpool", None) => Ok(Layer::MaxPool),
        ("relu", None) => Ok(Layer::Relu),
        ("softmax", None) => Ok(Layer::Softmax),
        _ => Err(Error::format(format!("unknown layer '{item}'"))),
    }
}

/// Serializes a classifier to the checkpoint byte layout.
pub fn to_bytes(classifier: &Classifier) -> Vec<u8> {
    let text = spec_to_text(classifier.spec());
    let mut bytes = Vec::with_capacity(4 + 4 + text.len() + classifier.params().len() * 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(text.len() as u32).to_le_bytes());
    bytes.extend_from_slice(text.as_bytes());
    for p in classifier.params() {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    bytes
}

/// Parses checkpoint bytes back into a classifier.
pub fn from_bytes(bytes: &[u8]) -> Result<Classifier> {
    if bytes.len() < 8 {
        return Err(Error::format("checkpoint truncated before header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::format("bad checkpoint magic"));
    }
    let text_len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let text_end = 8 + text_len;
    if bytes.len() < text_end {
        return Err(Error::format("checkpoint truncated inside spec text"));
    }
    let text = std::str::from_utf8(&bytes[8..text_end])
        .map_err(|_| Error::format("spec text is not UTF-8"))?;
    let spec = spec_from_text(text)?;
    let body = &bytes[text_end..];
    let expected = spec.param_count() * 8;
    if body.len() != expected {
        return Err(Error::Consistency(format!(
            "parameter payload is {} bytes, spec implies {expected}",
            body.len()
        )));
    }
    let params: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Classifier::from_parts(spec, params, 0)
}

/// Writes a checkpoint file.
pub fn save(classifier: &Classifier, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&to_bytes(classifier))?;
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint file.
pub fn load(path: &Path) -> Result<Classifier> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Classifier {
        let spec = NetworkSpec::new(
            vec![
                Layer::Conv2d { filters: 2 },
                Layer::Relu,
                Layer::MaxPool,
                Layer::Dense { units: 5 },
                Layer::Dropout { rate: 0.5 },
                Layer::Dense { units: 3 },
                Layer::Softmax,
            ],
            (6, 6, 1),
            3,
            true,
        )
        .unwrap();
        Classifier::new(spec, 99).unwrap()
    }

    #[test]
    fn spec_text_round_trips() {
        let spec = sample().spec().clone();
        let text = spec_to_text(&spec);
        let parsed = spec_from_text(&text).unwrap();
        assert_eq!(parsed, spec);
        assert_eq!(spec_to_text(&parsed), text);
    }

    #[test]
    fn bytes_round_trip_bit_exact() {
        let cls = sample();
        let bytes = to_bytes(&cls);
        let loaded = from_bytes(&bytes).unwrap();
        assert_eq!(loaded.spec(), cls.spec());
        let a: Vec<u64> = cls.params().iter().map(|p| p.to_bits()).collect();
        let b: Vec<u64> = loaded.params().iter().map(|p| p.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(to_bytes(&loaded), bytes);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let cls = sample();
        let mut bytes = to_bytes(&cls);
        bytes[0] = b'X';
        assert!(from_bytes(&bytes).is_err());

        let bytes = to_bytes(&cls);
        assert!(from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(from_bytes(&bytes[..6]).is_err());
    }
}
