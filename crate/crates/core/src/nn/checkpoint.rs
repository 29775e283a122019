//! `RLNN` model checkpoints.
//!
//! Layout (all integers little-endian `u32` unless noted):
//!
//! ```text
//! "RLNN" version
//! network_count
//!   name(str) input_ndim dims.. layer_count
//!     kind(u8) a b keep(f32)            per layer
//!   array_count
//!     ndim dims.. values(f32 ..)        weight then bias, per parameterized layer
//! meta_count
//!   key(str) value(str)
//! ```
//!
//! `str` is a `u32` byte length followed by UTF-8.

use std::collections::BTreeMap;
use std::path::Path;

use crate::array::DenseArray;
use crate::binio::{ByteReader, ByteWriter};
use crate::error::Result;

use super::layer::{LayerParams, LayerSpec, ModelParams};
use super::network::Network;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RLNN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkRecord {
    pub name: String,
    pub network: Network,
    pub params: ModelParams<f32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub networks: Vec<NetworkRecord>,
    /// Free-form side record (extraction points, calibrated thresholds, head mode, ...).
    pub meta: BTreeMap<String, String>,
}

fn encode_layer(w: &mut ByteWriter, l: &LayerSpec) {
    let (kind, a, b, keep) = match *l {
        LayerSpec::Dense { units } => (0u8, units, 0, 0.0),
        LayerSpec::Conv2d { filters, kernel } => (1, filters, kernel, 0.0),
        LayerSpec::MaxPool2d { size } => (2, size, 0, 0.0),
        LayerSpec::Flatten => (3, 0, 0, 0.0),
        LayerSpec::Relu => (4, 0, 0, 0.0),
        LayerSpec::Softmax => (5, 0, 0, 0.0),
        LayerSpec::Dropout { keep } => (6, 0, 0, keep),
    };
    w.u8(kind);
    w.u32(a as u32);
    w.u32(b as u32);
    w.f32(keep);
}

fn decode_layer(r: &mut ByteReader<'_>) -> Result<LayerSpec> {
    let at = r.offset();
    let kind = r.u8()?;
    let a = r.u32()? as usize;
    let b = r.u32()? as usize;
    let keep = r.f32()?;
    Ok(match kind {
        0 => LayerSpec::Dense { units: a },
        1 => LayerSpec::Conv2d { filters: a, kernel: b },
        2 => LayerSpec::MaxPool2d { size: a },
        3 => LayerSpec::Flatten,
        4 => LayerSpec::Relu,
        5 => LayerSpec::Softmax,
        6 => LayerSpec::Dropout { keep },
        other => {
            return Err(crate::error::Error::Format {
                what: "checkpoint",
                offset: at as u64,
                reason: format!("unknown layer kind {other}"),
            })
        }
    })
}

fn encode_array(w: &mut ByteWriter, a: &DenseArray<f32>) {
    w.u32(a.shape().len() as u32);
    for &d in a.shape() {
        w.u32(d as u32);
    }
    w.f32s(a.data());
}

fn decode_array(r: &mut ByteReader<'_>) -> Result<DenseArray<f32>> {
    let at = r.offset();
    let ndim = r.u32()? as usize;
    if ndim == 0 || ndim > 8 {
        return Err(r.error(format!("implausible array rank {ndim}")));
    }
    let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let len: usize = shape.iter().product();
    let data = r.f32s(len)?;
    DenseArray::new(shape, data).map_err(|e| crate::error::Error::Format {
        what: "checkpoint",
        offset: at as u64,
        reason: e.to_string(),
    })
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.u32(self.networks.len() as u32);
        for rec in &self.networks {
            w.str(&rec.name);
            let input = rec.network.input_shape();
            w.u32(input.len() as u32);
            for &d in input {
                w.u32(d as u32);
            }
            w.u32(rec.network.len() as u32);
            for l in rec.network.layers() {
                encode_layer(&mut w, l);
            }
            let arrays: Vec<_> = rec.params.arrays().collect();
            w.u32(arrays.len() as u32);
            for a in arrays {
                encode_array(&mut w, a);
            }
        }
        w.u32(self.meta.len() as u32);
        for (k, v) in &self.meta {
            w.str(k);
            w.str(v);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "checkpoint");
        r.magic(CHECKPOINT_MAGIC)?;
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(r.error(format!("unsupported version {version}")));
        }
        let count = r.u32()?;
        let mut networks = Vec::new();
        for _ in 0..count {
            let name = r.str()?;
            let ndim = r.u32()? as usize;
            let input = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let nlayers = r.u32()? as usize;
            let layers = (0..nlayers).map(|_| decode_layer(&mut r)).collect::<Result<Vec<_>>>()?;
            let at = r.offset();
            let network = Network::new(input, layers).map_err(|e| r.error(e.to_string()))?;
            let narrays = r.u32()? as usize;
            let expected = 2 * network.layers().iter().filter(|l| l.has_params()).count();
            if narrays != expected {
                return Err(r.error(format!("{narrays} arrays for {expected} parameter tensors")));
            }
            let mut slots = Vec::with_capacity(network.len());
            for l in network.layers() {
                if l.has_params() {
                    let weight = decode_array(&mut r)?;
                    let bias = decode_array(&mut r)?;
                    slots.push(Some(LayerParams { weight, bias }));
                } else {
                    slots.push(None);
                }
            }
            let params = ModelParams { layers: slots };
            network.check_params(&params).map_err(|e| crate::error::Error::Format {
                what: "checkpoint",
                offset: at as u64,
                reason: e.to_string(),
            })?;
            networks.push(NetworkRecord { name, network, params });
        }
        let nmeta = r.u32()?;
        let mut meta = BTreeMap::new();
        for _ in 0..nmeta {
            let k = r.str()?;
            let v = r.str()?;
            meta.insert(k, v);
        }
        r.expect_end()?;
        Ok(Self { networks, meta })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn network(&self, name: &str) -> Option<&NetworkRecord> {
        self.networks.iter().find(|n| n.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let net = Network::new(
            vec![1, 6, 6],
            vec![
                LayerSpec::Conv2d { filters: 2, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::MaxPool2d { size: 2 },
                LayerSpec::Dropout { keep: 0.75 },
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 3 },
                LayerSpec::Softmax,
            ],
        )
        .unwrap();
        let params = net.init_params(7);
        let mut meta = BTreeMap::new();
        meta.insert("tau_u".to_string(), "0.9".to_string());
        Checkpoint { networks: vec![NetworkRecord { name: "primary".into(), network: net, params }], meta }
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let bytes = c.to_bytes();
        assert_eq!(&bytes[..4], b"RLNN");
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), c);
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = sample().to_bytes();
        let err = Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, crate::error::Error::Format { what: "checkpoint", .. }));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }
}
