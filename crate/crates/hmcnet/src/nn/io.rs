//! On-disk formats: network specs as JSON, parameters as a flat binary file.
//!
//! Parameter files start with the magic bytes `HMC1`, then for every
//! parametric layer in layer order the weight tensor followed by the bias
//! tensor. Each tensor is a little-endian u32 rank, that many little-endian
//! u32 extents, then the row-major f64 payload.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::{ModelParams, NetworkSpec};

pub const PARAMS_MAGIC: [u8; 4] = *b"HMC1";

pub fn save_spec(spec: &NetworkSpec, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(spec)
        .map_err(|e| Error::Validation(format!("spec serialization failed: {e}")))?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_spec(path: &Path) -> Result<NetworkSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let spec: NetworkSpec = serde_json::from_str(&text)
        .map_err(|e| Error::Validation(format!("{}: invalid spec JSON: {e}", path.display())))?;
    // Deserialization bypasses the validated constructor; re-check here.
    spec.layer_shapes()?;
    Ok(spec)
}

pub fn save_params(params: &ModelParams, path: &Path) -> Result<()> {
    let mut buffer = Vec::from(PARAMS_MAGIC);
    for (_, layer) in params.iter() {
        for tensor in [&layer.weight, &layer.bias] {
            buffer.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
            for &extent in tensor.shape() {
                buffer.extend_from_slice(&(extent as u32).to_le_bytes());
            }
            for &value in tensor.data() {
                buffer.extend_from_slice(&value.to_le_bytes());
            }
        }
    }
    fs::write(path, buffer).map_err(|e| Error::io(path, e))
}

/// Read parameters for `spec`, verifying the magic, every tensor shape, and
/// that the file ends exactly where the spec says it should.
pub fn load_params(spec: &NetworkSpec, path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut reader = ByteReader {
        bytes: &bytes,
        cursor: 0,
        path,
    };

    if reader.take(4)? != PARAMS_MAGIC {
        return Err(Error::Validation(format!(
            "{}: bad magic, expected HMC1",
            path.display()
        )));
    }

    let mut params = ModelParams::zeros_like(spec)?;
    for (idx, layer) in params.iter_mut() {
        for tensor in [&mut layer.weight, &mut layer.bias] {
            let rank = reader.take_u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(reader.take_u32()? as usize);
            }
            if shape != tensor.shape() {
                return Err(Error::Validation(format!(
                    "{}: layer {idx} tensor has shape {shape:?}, spec implies {:?}",
                    path.display(),
                    tensor.shape()
                )));
            }
            let payload = reader.take(8 * tensor.len())?;
            for (i, chunk) in payload.chunks_exact(8).enumerate() {
                let v = f64::from_le_bytes(chunk.try_into().unwrap());
                if !v.is_finite() {
                    return Err(Error::Numeric(format!(
                        "{}: non-finite parameter in layer {idx}",
                        path.display()
                    )));
                }
                tensor.data_mut()[i] = v;
            }
        }
    }
    if reader.cursor != bytes.len() {
        return Err(Error::Validation(format!(
            "{}: {} trailing bytes after parameters",
            path.display(),
            bytes.len() - reader.cursor
        )));
    }
    Ok(params)
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    cursor: usize,
    path: &'a Path,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.cursor + n > self.bytes.len() {
            return Err(Error::Validation(format!(
                "{}: truncated parameter file",
                self.path.display()
            )));
        }
        let slice = &self.bytes[self.cursor..self.cursor + n];
        self.cursor += n;
        Ok(slice)
    }

    fn take_u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, LayerSpec};

    fn spec() -> NetworkSpec {
        NetworkSpec::new(
            (4, 4, 1),
            vec![
                LayerSpec::Conv2d {
                    filters: 2,
                    kernel_size: 3,
                    stride: 1,
                },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 2 },
                LayerSpec::Softmax,
            ],
        )
        .unwrap()
    }

    #[test]
    fn params_round_trip_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let spec = spec();
        let params = init_params(&spec, 99).unwrap();
        let path = dir.path().join("params.bin");
        save_params(&params, &path).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"HMC1");

        let loaded = load_params(&spec, &path).unwrap();
        assert_eq!(loaded, params);
    }

    #[test]
    fn spec_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let spec = spec();
        let path = dir.path().join("spec.json");
        save_spec(&spec, &path).unwrap();
        let loaded = load_spec(&path).unwrap();
        assert_eq!(loaded, spec);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"kind\": \"conv2d\""));
    }

    #[test]
    fn shape_mismatch_and_truncation_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let spec = spec();
        let params = init_params(&spec, 1).unwrap();
        let path = dir.path().join("params.bin");
        save_params(&params, &path).unwrap();

        let other = NetworkSpec::new(
            (4, 4, 1),
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 3 },
                LayerSpec::Relu,
                LayerSpec::Dense { units: 2 },
                LayerSpec::Softmax,
            ],
        )
        .unwrap();
        assert!(load_params(&other, &path).is_err());

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(load_params(&spec, &path).is_err());
    }
}
