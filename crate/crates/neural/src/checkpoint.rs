//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic       8 bytes   b"LGANCKPT"
//! version     u32       currently 1
//! header_len  u64       byte length of the JSON header
//! header      JSON      {"meta": <any>, "networks": [NetworkHeader...]}
//! payload     f64 LE    per network, in header order: every parameter
//!                       tensor, then every Adam first moment, then every
//!                       Adam second moment
//! ```
//!
//! The header carries the layer specs and tensor shapes, so a reader can
//! rebuild the networks without out-of-band information.

use std::io::{Read, Write};

use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{NeuralError, Result};
use crate::network::Network;
use crate::optim::AdamState;
use crate::spec::LayerSpec;

const MAGIC: &[u8; 8] = b"LGANCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NetworkHeader {
    name: String,
    layers: Vec<LayerSpec>,
    tensors: Vec<TensorHeader>,
    adam_step: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    meta: Value,
    networks: Vec<NetworkHeader>,
}

/// A named network with its optimizer state.
#[derive(Debug, Clone)]
pub struct StoredNetwork {
    pub name: String,
    pub network: Network,
    pub adam: AdamState,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: Value,
    pub networks: Vec<StoredNetwork>,
}

impl Checkpoint {
    pub fn take(&mut self, name: &str) -> Result<StoredNetwork> {
        let idx = self
            .networks
            .iter()
            .position(|n| n.name == name)
            .ok_or_else(|| NeuralError::Checkpoint(format!("no network named `{name}`")))?;
        Ok(self.networks.remove(idx))
    }
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    meta: &Value,
    networks: &[(&str, &Network, &AdamState)],
) -> Result<()> {
    let header = Header {
        meta: meta.clone(),
        networks: networks
            .iter()
            .map(|(name, net, adam)| NetworkHeader {
                name: name.to_string(),
                layers: net.specs().to_vec(),
                tensors: net
                    .params()
                    .iter()
                    .map(|p| TensorHeader {
                        name: p.name.clone(),
                        shape: p.shape().to_vec(),
                    })
                    .collect(),
                adam_step: adam.step,
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;

    let mut buf = Vec::new();
    for (_, net, adam) in networks {
        let params = net.params();
        if adam.m.len() != params.len() || adam.v.len() != params.len() {
            return Err(NeuralError::Checkpoint(
                "optimizer state does not match network".into(),
            ));
        }
        let blocks = params
            .iter()
            .map(|p| p.values.as_slice())
            .chain(adam.m.iter().map(Vec::as_slice))
            .chain(adam.v.iter().map(Vec::as_slice));
        for block in blocks {
            buf.clear();
            buf.extend(block.iter().flat_map(|v| v.to_le_bytes()));
            w.write_all(&buf)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| NeuralError::Checkpoint(format!("truncated payload: {e}")))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NeuralError::Checkpoint("bad magic".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != CHECKPOINT_VERSION {
        return Err(NeuralError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header)?;

    // Parameters are overwritten below, so the init RNG seed is irrelevant.
    let mut scratch = StdRng::seed_from_u64(0);
    let mut networks = Vec::with_capacity(header.networks.len());
    for nh in header.networks {
        let mut network = Network::new(nh.layers, &mut scratch)?;
        let shapes: Vec<Vec<usize>> = network.params().iter().map(|p| p.shape().to_vec()).collect();
        let declared: Vec<Vec<usize>> = nh.tensors.iter().map(|t| t.shape.clone()).collect();
        if shapes != declared {
            return Err(NeuralError::Checkpoint(format!(
                "tensor shapes of `{}` disagree with its layer specs",
                nh.name
            )));
        }
        let sizes: Vec<usize> = shapes.iter().map(|s| s.iter().product()).collect();
        let read_block = |r: &mut R| -> Result<Vec<Vec<f64>>> {
            sizes.iter().map(|&n| read_f64s(r, n)).collect()
        };
        let values = read_block(&mut r)?;
        let m = read_block(&mut r)?;
        let v = read_block(&mut r)?;
        network.set_values(values)?;
        networks.push(StoredNetwork {
            name: nh.name,
            network,
            adam: AdamState {
                step: nh.adam_step,
                m,
                v,
            },
        });
    }
    Ok(Checkpoint {
        meta: header.meta,
        networks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_preserves_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let specs = vec![
            LayerSpec::Conv1d {
                in_channels: 1,
                out_channels: 2,
                kernel: 3,
            },
            LayerSpec::Activation {
                function: Activation::LeakyRelu,
            },
            LayerSpec::Flatten,
            LayerSpec::Dense { inputs: 8, units: 1 },
        ];
        let net = Network::new(specs, &mut rng).unwrap();
        let mut adam = AdamState::for_network(&net);
        adam.step = 7;
        adam.m[0][1] = 0.25;
        adam.v[2][0] = 1e-9;
        let meta = serde_json::json!({"branch": "cluster", "range": [0.0, 3.5]});
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &meta, &[("generator", &net, &adam)]).unwrap();

        let mut ck = read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(ck.meta, meta);
        let g = ck.take("generator").unwrap();
        assert_eq!(g.network.specs(), net.specs());
        assert_eq!(g.adam, adam);
        for (a, b) in g.network.params().iter().zip(net.params()) {
            assert_eq!(a.values, b.values);
        }
    }

    #[test]
    fn garbage_is_rejected() {
        let err = read_checkpoint(&b"NOTACKPT\x01\0\0\0"[..]).unwrap_err();
        assert!(matches!(err, NeuralError::Checkpoint(_)));
    }
}
